//! Detection evaluation: IoU, greedy confidence-ranked matching, 101-point
//! and all-point AP, mAP over IoU thresholds, F1 at confidence thresholds,
//! and mean IoU of true positives.
//!
//! Matching is class-wise and per image. Detections are ranked by confidence
//! descending with ties kept in input order; each takes the still-unmatched
//! ground-truth box of highest IoU (lowest index on ties) if that IoU reaches
//! the threshold.

mod io;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BBox;

pub use io::{ground_truth_from_manifest, read_predictions, write_predictions};
pub use report::{report_csv, report_emit, report_svg, ReportFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class_id: u32,
    pub confidence: f64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_id: u32,
    pub bbox: BBox,
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let Some(i) = a.intersection(b) else {
        return 0.0;
    };
    let inter = i.area();
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Indices of `conf` sorted by descending confidence, stable for ties.
pub fn rank_by_confidence(conf: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..conf.len()).collect();
    order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]));
    order
}

/// Result of matching one image and class.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// For each detection (input order): matched ground-truth index and IoU.
    pub det_match: Vec<Option<(usize, f64)>>,
    /// For each ground-truth box: matched detection index.
    pub gt_match: Vec<Option<usize>>,
}

impl Matching {
    pub fn tp(&self) -> usize {
        self.det_match.iter().filter(|m| m.is_some()).count()
    }

    pub fn fp(&self) -> usize {
        self.det_match.len() - self.tp()
    }

    pub fn fn_(&self) -> usize {
        self.gt_match.iter().filter(|m| m.is_none()).count()
    }
}

/// Greedy one-to-one matching for a single image and class.
pub fn match_detections(dets: &[(f64, BBox)], gts: &[BBox], iou_thresh: f64) -> Matching {
    let conf: Vec<f64> = dets.iter().map(|d| d.0).collect();
    let mut det_match = vec![None; dets.len()];
    let mut gt_match = vec![None; gts.len()];
    for d in rank_by_confidence(&conf) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_match[g].is_some() {
                continue;
            }
            let v = iou(&dets[d].1, gt);
            if v >= iou_thresh && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            gt_match[g] = Some(d);
            det_match[d] = Some((g, v));
        }
    }
    Matching { det_match, gt_match }
}

/// Cumulative precision/recall over a ranked TP/FP sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

impl PrCurve {
    pub fn from_ranked(is_tp: &[bool], n_gt: usize) -> Self {
        let mut tp = 0usize;
        let mut precision = Vec::with_capacity(is_tp.len());
        let mut recall = Vec::with_capacity(is_tp.len());
        for (k, &t) in is_tp.iter().enumerate() {
            tp += usize::from(t);
            precision.push(tp as f64 / (k + 1) as f64);
            recall.push(if n_gt > 0 { tp as f64 / n_gt as f64 } else { 0.0 });
        }
        PrCurve { precision, recall }
    }

    /// Precision made non-increasing from the right.
    pub fn envelope(&self) -> Vec<f64> {
        let mut env = self.precision.clone();
        for i in (0..env.len().saturating_sub(1)).rev() {
            env[i] = env[i].max(env[i + 1]);
        }
        env
    }

    /// Mean envelope precision at recall 0, 0.01, ..., 1.00.
    pub fn ap_101(&self) -> f64 {
        let env = self.envelope();
        let mut sum = 0.0;
        let mut j = 0;
        for i in 0..=100 {
            let r = f64::from(i) / 100.0;
            while j < self.recall.len() && self.recall[j] < r {
                j += 1;
            }
            if j < env.len() {
                sum += env[j];
            }
        }
        sum / 101.0
    }

    /// Area under the envelope, summed over recall increments.
    pub fn ap_all_point(&self) -> f64 {
        let env = self.envelope();
        let mut prev = 0.0;
        let mut area = 0.0;
        for (r, p) in self.recall.iter().zip(&env) {
            area += (r - prev) * p;
            prev = *r;
        }
        area
    }
}

/// TP flags of all detections of one class, in global rank order, plus the
/// matched IoUs and the number of ground-truth boxes.
struct ClassMatch {
    ranked_tp: Vec<bool>,
    ranked_conf: Vec<f64>,
    ranked_iou: Vec<Option<f64>>,
    n_gt: usize,
}

fn match_class(dets: &[&Detection], gts: &[&GroundTruth], iou_thresh: f64) -> ClassMatch {
    let mut by_image: BTreeMap<&str, (Vec<usize>, Vec<BBox>)> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        by_image.entry(&d.image_id).or_default().0.push(i);
    }
    for g in gts {
        by_image.entry(&g.image_id).or_default().1.push(g.bbox);
    }
    let mut matched: Vec<Option<f64>> = vec![None; dets.len()];
    for (idx, boxes) in by_image.values() {
        let local: Vec<(f64, BBox)> = idx.iter().map(|&i| (dets[i].confidence, dets[i].bbox)).collect();
        let m = match_detections(&local, boxes, iou_thresh);
        for (k, &i) in idx.iter().enumerate() {
            matched[i] = m.det_match[k].map(|(_, v)| v);
        }
    }
    let conf: Vec<f64> = dets.iter().map(|d| d.confidence).collect();
    let order = rank_by_confidence(&conf);
    ClassMatch {
        ranked_tp: order.iter().map(|&i| matched[i].is_some()).collect(),
        ranked_conf: order.iter().map(|&i| conf[i]).collect(),
        ranked_iou: order.iter().map(|&i| matched[i]).collect(),
        n_gt: gts.len(),
    }
}

/// AP of one class with all images pooled. `None` when there is neither
/// ground truth nor any detection; `0` for detections without ground truth.
pub fn average_precision(dets: &[&Detection], gts: &[&GroundTruth], iou_thresh: f64) -> Option<f64> {
    ap_pair(dets, gts, iou_thresh).map(|(a, _)| a)
}

fn ap_pair(dets: &[&Detection], gts: &[&GroundTruth], iou_thresh: f64) -> Option<(f64, f64)> {
    if gts.is_empty() {
        return if dets.is_empty() { None } else { Some((0.0, 0.0)) };
    }
    let m = match_class(dets, gts, iou_thresh);
    let c = PrCurve::from_ranked(&m.ranked_tp, m.n_gt);
    Some((c.ap_101(), c.ap_all_point()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub confidence_thresholds: Vec<f64>,
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_thresholds: coco_iou_thresholds(),
            confidence_thresholds: vec![0.25, 0.5, 0.75],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: &f64| (0.0..=1.0).contains(v);
        if self.iou_thresholds.is_empty() || !self.iou_thresholds.iter().all(ok) {
            return Err(Error::Config(format!(
                "iou_thresholds {:?} must be non-empty and within [0, 1]",
                self.iou_thresholds
            )));
        }
        if !self.confidence_thresholds.iter().all(ok) {
            return Err(Error::Config(format!(
                "confidence_thresholds {:?} must lie in [0, 1]",
                self.confidence_thresholds
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    pub class_id: u32,
    pub name: String,
    pub n_gt: usize,
    pub n_det: usize,
    /// 101-point AP per configured IoU threshold.
    pub ap: Vec<Option<f64>>,
    pub ap_all_point: Vec<Option<f64>>,
    pub ap50: Option<f64>,
    pub ap95: Option<f64>,
    /// Precision/recall over the ranked detections at IoU 0.5.
    pub pr_curve_50: PrCurve,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl OperatingPoint {
    fn new(confidence: f64, tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        OperatingPoint {
            confidence,
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_thresholds: Vec<f64>,
    pub classes: Vec<ClassResult>,
    pub map50: f64,
    pub map50_95: f64,
    pub ap95: f64,
    pub map50_all_point: f64,
    /// Micro-averaged over classes, matched at IoU 0.5.
    pub operating_points: Vec<OperatingPoint>,
    pub mean_tp_iou: f64,
    /// Counts at IoU 0.5 and confidence 0.
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn mean_defined(v: impl Iterator<Item = Option<f64>>) -> f64 {
    let d: Vec<f64> = v.flatten().collect();
    if d.is_empty() {
        0.0
    } else {
        d.iter().sum::<f64>() / d.len() as f64
    }
}

/// Full evaluation. `classes` is the class map of the ground truth; a
/// detection with a class id outside it is an error.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruth],
    classes: &BTreeMap<u32, String>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let unknown: BTreeSet<u32> = dets
        .iter()
        .map(|d| d.class_id)
        .filter(|c| !classes.contains_key(c))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownClasses(unknown.into_iter().collect()));
    }
    if let Some(g) = gts.iter().find(|g| !classes.contains_key(&g.class_id)) {
        return Err(Error::Data(format!(
            "ground truth on `{}` uses class {} missing from the class map",
            g.image_id, g.class_id
        )));
    }
    for d in dets {
        if !d.bbox.is_valid() || !(0.0..=1.0).contains(&d.confidence) {
            return Err(Error::Data(format!(
                "detection on `{}` has invalid box or confidence {}",
                d.image_id, d.confidence
            )));
        }
    }

    let class_ids: Vec<u32> = classes.keys().copied().collect();
    let per_class = |c: u32| -> (Vec<&Detection>, Vec<&GroundTruth>) {
        (
            dets.iter().filter(|d| d.class_id == c).collect(),
            gts.iter().filter(|g| g.class_id == c).collect(),
        )
    };

    // AP per (class, IoU threshold), parallel over the pairs.
    let mut thresholds = cfg.iou_thresholds.clone();
    thresholds.extend([0.5, 0.95]);
    let pairs: Vec<(u32, usize)> = class_ids
        .iter()
        .flat_map(|&c| (0..thresholds.len()).map(move |t| (c, t)))
        .collect();
    let aps: BTreeMap<(u32, usize), Option<(f64, f64)>> = pairs
        .par_iter()
        .map(|&(c, t)| {
            let (d, g) = per_class(c);
            ((c, t), ap_pair(&d, &g, thresholds[t]))
        })
        .collect();

    let n_cfg = cfg.iou_thresholds.len();
    let results: Vec<ClassResult> = class_ids
        .iter()
        .map(|&c| {
            let (d, g) = per_class(c);
            let m50 = match_class(&d, &g, 0.5);
            ClassResult {
                class_id: c,
                name: classes[&c].clone(),
                n_gt: g.len(),
                n_det: d.len(),
                ap: (0..n_cfg).map(|t| aps[&(c, t)].map(|a| a.0)).collect(),
                ap_all_point: (0..n_cfg).map(|t| aps[&(c, t)].map(|a| a.1)).collect(),
                ap50: aps[&(c, n_cfg)].map(|a| a.0),
                ap95: aps[&(c, n_cfg + 1)].map(|a| a.0),
                pr_curve_50: PrCurve::from_ranked(&m50.ranked_tp, m50.n_gt),
            }
        })
        .collect();

    let map50 = mean_defined(results.iter().map(|r| r.ap50));
    let ap95 = mean_defined(results.iter().map(|r| r.ap95));
    let map50_all_point = mean_defined(class_ids.iter().map(|c| aps[&(*c, n_cfg)].map(|a| a.1)));
    let map50_95 = mean_defined(results.iter().map(|r| {
        let v: Vec<f64> = r.ap.iter().flatten().copied().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }));

    // Operating points: micro counts over classes at IoU 0.5.
    let matches: Vec<ClassMatch> = class_ids
        .par_iter()
        .map(|&c| {
            let (d, g) = per_class(c);
            match_class(&d, &g, 0.5)
        })
        .collect();
    let n_gt: usize = matches.iter().map(|m| m.n_gt).sum();
    let point = |t: f64| {
        let (mut tp, mut fp) = (0, 0);
        for m in &matches {
            for (&is_tp, &conf) in m.ranked_tp.iter().zip(&m.ranked_conf) {
                if conf >= t {
                    if is_tp {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
        }
        OperatingPoint::new(t, tp, fp, n_gt - tp)
    };
    let operating_points = cfg.confidence_thresholds.iter().map(|&t| point(t)).collect();
    let all = point(0.0);
    let tp_ious: Vec<f64> = matches.iter().flat_map(|m| m.ranked_iou.iter().flatten().copied()).collect();
    let mean_tp_iou = if tp_ious.is_empty() {
        0.0
    } else {
        tp_ious.iter().sum::<f64>() / tp_ious.len() as f64
    };

    Ok(EvalReport {
        iou_thresholds: cfg.iou_thresholds.clone(),
        classes: results,
        map50,
        map50_95,
        ap95,
        map50_all_point,
        operating_points,
        mean_tp_iou,
        tp: all.tp,
        fp: all.fp,
        fn_: all.fn_,
    })
}
