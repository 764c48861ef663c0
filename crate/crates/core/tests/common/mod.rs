//! Shared helpers for integration tests: a brute-force detection metrics
//! oracle and random instance generators.

#![allow(dead_code)]

pub mod edsr;

use std::collections::BTreeMap;

use rawsat_core::metrics::{Detection, EvalConfig, GroundTruth};
use rawsat_core::raster::BBox;
use rawsat_core::rng::Rng;

fn oracle_iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.xmax.min(b.xmax) - a.xmin.max(b.xmin)).max(0.0);
    let h = (a.ymax.min(b.ymax) - a.ymin.max(b.ymin)).max(0.0);
    let inter = w * h;
    if inter <= 0.0 {
        return 0.0;
    }
    let ua = (a.xmax - a.xmin) * (a.ymax - a.ymin) + (b.xmax - b.xmin) * (b.ymax - b.ymin) - inter;
    inter / ua
}

/// Detection indices ranked by confidence, ties in input order (insertion sort).
fn ranked(dets: &[&Detection]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for i in 0..dets.len() {
        let pos = out
            .iter()
            .position(|&j| dets[j].confidence < dets[i].confidence)
            .unwrap_or(out.len());
        out.insert(pos, i);
    }
    out
}

/// Greedy matching from scratch over a ranked prefix. Returns per-prefix-
/// position matched IoU.
fn match_prefix(prefix: &[&Detection], gts: &[&GroundTruth], t: f64) -> Vec<Option<f64>> {
    let mut used = vec![false; gts.len()];
    let mut out = Vec::new();
    for d in prefix {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if used[g] || gt.image_id != d.image_id || gt.class_id != d.class_id {
                continue;
            }
            let v = oracle_iou(&d.bbox, &gt.bbox);
            if v >= t {
                match best {
                    Some((_, bv)) if bv >= v => {}
                    _ => best = Some((g, v)),
                }
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
        }
        out.push(best.map(|b| b.1));
    }
    out
}

pub fn oracle_ap(dets: &[&Detection], gts: &[&GroundTruth], t: f64) -> Option<f64> {
    if gts.is_empty() {
        return if dets.is_empty() { None } else { Some(0.0) };
    }
    let order = ranked(dets);
    let ranked_dets: Vec<&Detection> = order.iter().map(|&i| dets[i]).collect();
    let mut pr = Vec::new();
    for k in 1..=ranked_dets.len() {
        let tp = match_prefix(&ranked_dets[..k], gts, t).iter().filter(|m| m.is_some()).count();
        pr.push((tp as f64 / k as f64, tp as f64 / gts.len() as f64));
    }
    let mut sum = 0.0;
    for i in 0..=100 {
        let r = f64::from(i) / 100.0;
        let best = pr
            .iter()
            .filter(|(_, rec)| *rec >= r)
            .map(|(p, _)| *p)
            .fold(0.0, f64::max);
        sum += best;
    }
    Some(sum / 101.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub ap: BTreeMap<u32, Vec<Option<f64>>>,
    pub map50: f64,
    pub map50_95: f64,
    pub ap95: f64,
    pub f1: Vec<(f64, f64, f64)>,
    pub mean_tp_iou: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn oracle_evaluate(
    dets: &[Detection],
    gts: &[GroundTruth],
    classes: &BTreeMap<u32, String>,
    cfg: &EvalConfig,
) -> OracleReport {
    let mut ap = BTreeMap::new();
    let (mut a50, mut a95, mut a5095) = (Vec::new(), Vec::new(), Vec::new());
    for &c in classes.keys() {
        let d: Vec<&Detection> = dets.iter().filter(|x| x.class_id == c).collect();
        let g: Vec<&GroundTruth> = gts.iter().filter(|x| x.class_id == c).collect();
        let per: Vec<Option<f64>> = cfg.iou_thresholds.iter().map(|&t| oracle_ap(&d, &g, t)).collect();
        if let Some(v) = oracle_ap(&d, &g, 0.5) {
            a50.push(v);
        }
        if let Some(v) = oracle_ap(&d, &g, 0.95) {
            a95.push(v);
        }
        let defined: Vec<f64> = per.iter().flatten().copied().collect();
        if !defined.is_empty() {
            a5095.push(mean(&defined));
        }
        ap.insert(c, per);
    }
    let all: Vec<&Detection> = dets.iter().collect();
    let gt_refs: Vec<&GroundTruth> = gts.iter().collect();
    let mut f1 = Vec::new();
    for &t in &cfg.confidence_thresholds {
        let kept: Vec<&Detection> = all.iter().copied().filter(|d| d.confidence >= t).collect();
        let ranked_kept: Vec<&Detection> = ranked(&kept).iter().map(|&i| kept[i]).collect();
        let tp = match_prefix(&ranked_kept, &gt_refs, 0.5).iter().filter(|m| m.is_some()).count();
        let p = if kept.is_empty() { 0.0 } else { tp as f64 / kept.len() as f64 };
        let r = if gts.is_empty() { 0.0 } else { tp as f64 / gts.len() as f64 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        f1.push((p, r, f));
    }
    let ranked_all: Vec<&Detection> = ranked(&all).iter().map(|&i| all[i]).collect();
    let ious: Vec<f64> = match_prefix(&ranked_all, &gt_refs, 0.5).into_iter().flatten().collect();
    OracleReport {
        ap,
        map50: mean(&a50),
        map50_95: mean(&a5095),
        ap95: mean(&a95),
        f1,
        mean_tp_iou: mean(&ious),
    }
}

/// Random instance: up to 10 images, up to 20 GT boxes, up to 4 classes.
/// Detections are jittered copies of GT plus clutter, with coarse
/// confidences so that ties occur.
pub fn random_instance(seed: u64) -> (Vec<Detection>, Vec<GroundTruth>, BTreeMap<u32, String>) {
    let mut rng = Rng::new(seed, 0xD37);
    let n_img = 1 + (rng.next_u64() % 10) as usize;
    let n_cls = 1 + (rng.next_u64() % 4) as u32;
    let n_gt = (rng.next_u64() % 21) as usize;
    let classes: BTreeMap<u32, String> = (0..n_cls).map(|c| (c, format!("c{c}"))).collect();
    let rand_box = |rng: &mut Rng| {
        let x = rng.uniform(0.0, 80.0);
        let y = rng.uniform(0.0, 80.0);
        BBox::new(x, y, x + rng.uniform(2.0, 20.0), y + rng.uniform(2.0, 20.0))
    };
    let mut gts = Vec::new();
    for _ in 0..n_gt {
        gts.push(GroundTruth {
            image_id: format!("img{}", rng.next_u64() % n_img as u64),
            class_id: (rng.next_u64() % u64::from(n_cls)) as u32,
            bbox: rand_box(&mut rng),
        });
    }
    let mut dets = Vec::new();
    for g in &gts {
        let copies = rng.next_u64() % 3;
        for _ in 0..copies {
            let j = rng.uniform(-3.0, 3.0);
            let k = rng.uniform(-3.0, 3.0);
            let b = BBox::new(g.bbox.xmin + j, g.bbox.ymin + k, g.bbox.xmax + j, g.bbox.ymax + k);
            let class_id = if rng.next_f64() < 0.1 {
                (rng.next_u64() % u64::from(n_cls)) as u32
            } else {
                g.class_id
            };
            dets.push(Detection {
                image_id: g.image_id.clone(),
                class_id,
                confidence: (rng.next_u64() % 11) as f64 / 10.0,
                bbox: b,
            });
        }
    }
    for _ in 0..rng.next_u64() % 6 {
        dets.push(Detection {
            image_id: format!("img{}", rng.next_u64() % n_img as u64),
            class_id: (rng.next_u64() % u64::from(n_cls)) as u32,
            confidence: (rng.next_u64() % 11) as f64 / 10.0,
            bbox: rand_box(&mut rng),
        });
    }
    // shuffle so input order is not rank order
    for i in (1..dets.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        dets.swap(i, j);
    }
    (dets, gts, classes)
}

/// Largest absolute difference between the library report and the oracle,
/// `None` if a defined/undefined AP disagrees.
pub fn oracle_gap(
    r: &rawsat_core::metrics::EvalReport,
    o: &OracleReport,
) -> Option<f64> {
    let mut gap: f64 = 0.0;
    for c in &r.classes {
        for (a, b) in c.ap.iter().zip(&o.ap[&c.class_id]) {
            match (a, b) {
                (Some(x), Some(y)) => gap = gap.max((x - y).abs()),
                (None, None) => {}
                _ => return None,
            }
        }
    }
    for (p, (op, orr, of)) in r.operating_points.iter().zip(&o.f1) {
        gap = gap
            .max((p.precision - op).abs())
            .max((p.recall - orr).abs())
            .max((p.f1 - of).abs());
    }
    gap = gap
        .max((r.map50 - o.map50).abs())
        .max((r.map50_95 - o.map50_95).abs())
        .max((r.ap95 - o.ap95).abs())
        .max((r.mean_tp_iou - o.mean_tp_iou).abs());
    Some(gap)
}
