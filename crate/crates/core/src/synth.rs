//! Synthetic sea scenes with vessel-like targets.
//!
//! The background is a flat luminance plus a spatially correlated texture
//! (coarse Gaussian noise upsampled bicubically). Targets are rotated
//! rectangles or ellipses added with a positive contrast. Each annotation box
//! is the exact pixel-edge bounding box of its rendered mask, and targets do
//! not overlap. XS bands are the PAN block-averaged by the PAN/XS ratio and
//! scaled by per-band tint factors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{downsample_block, upsample_bicubic, Annotation, BBox, Granule, ProvenanceRecord, Raster};
use crate::rng::{stream_from_label, substream, Rng};

pub const CLASS_NAMES: [&str; 4] = ["boat", "tug", "cargo", "tanker"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub id: String,
    /// PAN size in pixels; both must be multiples of `ratio`.
    pub width: usize,
    pub height: usize,
    pub ratio: usize,
    pub pan_gsd: f64,
    pub background: f64,
    /// Standard deviation of the background texture.
    pub texture_amplitude: f64,
    /// Correlation length of the texture in PAN pixels.
    pub texture_scale: usize,
    pub n_objects: usize,
    /// Object length range in PAN pixels.
    pub size_min: f64,
    pub size_max: f64,
    pub contrast_min: f64,
    pub contrast_max: f64,
    pub xs_bands: Vec<String>,
    pub tints: Vec<f64>,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            id: "synth".into(),
            width: 512,
            height: 512,
            ratio: 4,
            pan_gsd: 0.5,
            background: 200.0,
            texture_amplitude: 15.0,
            texture_scale: 16,
            n_objects: 12,
            size_min: 8.0,
            size_max: 60.0,
            contrast_min: 150.0,
            contrast_max: 600.0,
            xs_bands: vec!["R".into(), "G".into(), "B".into()],
            tints: vec![0.9, 1.0, 1.1],
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.ratio == 0 || self.width % self.ratio != 0 || self.height % self.ratio != 0 {
            return bad(format!(
                "scene {}x{} is not a multiple of ratio {}",
                self.width, self.height, self.ratio
            ));
        }
        if self.width < 16 || self.height < 16 {
            return bad("scene must be at least 16x16".into());
        }
        if !(self.size_min >= 2.0 && self.size_max >= self.size_min) {
            return bad(format!("size range [{}, {}]", self.size_min, self.size_max));
        }
        if self.size_max > 0.5 * self.width.min(self.height) as f64 {
            return bad(format!("size_max {} larger than half the scene", self.size_max));
        }
        if !(self.contrast_min > 0.0 && self.contrast_max >= self.contrast_min) {
            return bad(format!(
                "contrast range [{}, {}] must be positive",
                self.contrast_min, self.contrast_max
            ));
        }
        if self.texture_scale == 0 || !(self.texture_amplitude >= 0.0) || !(self.pan_gsd > 0.0) {
            return bad("texture_scale, texture_amplitude and pan_gsd must be positive".into());
        }
        if self.xs_bands.is_empty() || self.xs_bands.len() != self.tints.len() {
            return bad(format!(
                "{} XS bands with {} tints",
                self.xs_bands.len(),
                self.tints.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Rect,
    Ellipse,
}

/// A placed target: mask over its pixel bounding box.
#[derive(Debug, Clone)]
pub struct Target {
    pub class_id: u32,
    pub contrast: f64,
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    pub mask: Vec<bool>,
}

impl Target {
    pub fn bbox(&self) -> BBox {
        BBox::new(
            self.x0 as f64,
            self.y0 as f64,
            (self.x0 + self.w) as f64,
            (self.y0 + self.h) as f64,
        )
    }
}

fn class_for_length(len: f64, spec: &SceneSpec) -> u32 {
    let span = (spec.size_max - spec.size_min).max(f64::MIN_POSITIVE);
    let t = ((len - spec.size_min) / span).clamp(0.0, 1.0);
    ((t * CLASS_NAMES.len() as f64) as u32).min(CLASS_NAMES.len() as u32 - 1)
}

/// Renders one target candidate; `None` when the mask is empty.
fn render(spec: &SceneSpec, rng: &mut Rng) -> Option<Target> {
    let shape = if rng.next_f64() < 0.5 { Shape::Rect } else { Shape::Ellipse };
    let len = rng.uniform(spec.size_min, spec.size_max);
    let wid = (len * rng.uniform(0.25, 0.5)).max(2.0);
    let theta = rng.uniform(0.0, std::f64::consts::PI);
    let contrast = rng.uniform(spec.contrast_min, spec.contrast_max);
    let (a, b) = (len / 2.0, wid / 2.0);
    let (c, s) = (theta.cos(), theta.sin());
    let (hx, hy) = match shape {
        Shape::Rect => (a * c.abs() + b * s.abs(), a * s.abs() + b * c.abs()),
        Shape::Ellipse => (
            ((a * c).powi(2) + (b * s).powi(2)).sqrt(),
            ((a * s).powi(2) + (b * c).powi(2)).sqrt(),
        ),
    };
    let (w, h) = (spec.width as f64, spec.height as f64);
    let cx = rng.uniform(hx + 1.0, w - hx - 1.0);
    let cy = rng.uniform(hy + 1.0, h - hy - 1.0);

    let xa = (cx - hx).floor().max(0.0) as usize;
    let ya = (cy - hy).floor().max(0.0) as usize;
    let xb = ((cx + hx).ceil() as usize).min(spec.width);
    let yb = ((cy + hy).ceil() as usize).min(spec.height);
    let inside = |x: usize, y: usize| {
        let dx = x as f64 + 0.5 - cx;
        let dy = y as f64 + 0.5 - cy;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        match shape {
            Shape::Rect => u.abs() <= a && v.abs() <= b,
            Shape::Ellipse => (u / a).powi(2) + (v / b).powi(2) <= 1.0,
        }
    };
    let pix: Vec<(usize, usize)> = (ya..yb)
        .flat_map(|y| (xa..xb).map(move |x| (x, y)))
        .filter(|&(x, y)| inside(x, y))
        .collect();
    let x0 = pix.iter().map(|p| p.0).min()?;
    let y0 = pix.iter().map(|p| p.1).min()?;
    let x1 = pix.iter().map(|p| p.0).max()? + 1;
    let y1 = pix.iter().map(|p| p.1).max()? + 1;
    let (tw, th) = (x1 - x0, y1 - y0);
    let mut mask = vec![false; tw * th];
    for (x, y) in pix {
        mask[(y - y0) * tw + (x - x0)] = true;
    }
    Some(Target {
        class_id: class_for_length(len, spec),
        contrast,
        x0,
        y0,
        w: tw,
        h: th,
        mask,
    })
}

const MAX_ATTEMPTS: usize = 200;
const MARGIN: f64 = 2.0;

/// Places up to `n_objects` non-overlapping targets. Candidates are drawn
/// in parallel from per-attempt RNG streams, then accepted in order.
pub fn place_targets(spec: &SceneSpec) -> Vec<Target> {
    let base = stream_from_label(&format!("synth/{}", spec.id));
    let candidates: Vec<Option<Target>> = (0..spec.n_objects * MAX_ATTEMPTS)
        .into_par_iter()
        .map(|k| render(spec, &mut Rng::new(spec.seed, substream(base, k as u64))))
        .collect();
    let mut placed: Vec<Target> = Vec::new();
    for t in candidates.into_iter().flatten() {
        if placed.len() == spec.n_objects {
            break;
        }
        let grown = {
            let b = t.bbox();
            BBox::new(b.xmin - MARGIN, b.ymin - MARGIN, b.xmax + MARGIN, b.ymax + MARGIN)
        };
        if placed.iter().all(|p| grown.intersection(&p.bbox()).is_none()) {
            placed.push(t);
        }
    }
    if placed.len() < spec.n_objects {
        log::warn!(
            "scene `{}`: placed {} of {} targets",
            spec.id,
            placed.len(),
            spec.n_objects
        );
    }
    placed
}

fn texture(spec: &SceneSpec) -> Result<Vec<f32>> {
    let s = spec.texture_scale;
    let (cw, ch) = (spec.width.div_ceil(s) + 1, spec.height.div_ceil(s) + 1);
    let mut rng = Rng::new(spec.seed, stream_from_label(&format!("synth/{}/texture", spec.id)));
    let coarse: Vec<f32> = rng
        .normals(cw * ch)
        .into_iter()
        .map(|v| (v * spec.texture_amplitude) as f32)
        .collect();
    let up = upsample_bicubic(&Raster::new("t", cw, ch, 1.0, coarse)?, s)?;
    let up = up.crop(0, 0, spec.width, spec.height)?;
    Ok(up
        .into_values()
        .into_iter()
        .map(|v| v + spec.background as f32)
        .collect())
}

pub fn synth_granule(spec: &SceneSpec) -> Result<Granule> {
    spec.validate()?;
    let mut pan = texture(spec)?;
    let targets = place_targets(spec);
    let w = spec.width;
    for t in &targets {
        for y in 0..t.h {
            for x in 0..t.w {
                if t.mask[y * t.w + x] {
                    pan[(t.y0 + y) * w + t.x0 + x] += t.contrast as f32;
                }
            }
        }
    }
    for v in pan.iter_mut() {
        *v = v.max(0.0);
    }
    let pan = Raster::new("PAN", spec.width, spec.height, spec.pan_gsd, pan)?;
    let block = downsample_block(&pan, spec.ratio)?;
    let xs = spec
        .xs_bands
        .iter()
        .zip(&spec.tints)
        .map(|(name, &tint)| {
            let v = block.values().iter().map(|&x| x * tint as f32).collect();
            Ok(block.with_values(v)?.renamed(name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let annotations = targets
        .iter()
        .map(|t| Annotation {
            class_id: t.class_id,
            class_name: CLASS_NAMES[t.class_id as usize].to_string(),
            bbox: t.bbox(),
        })
        .collect();
    let mut g = Granule::new(spec.id.clone(), pan, xs, annotations)?;
    g.push_provenance(ProvenanceRecord::new("synth", serde_json::to_value(spec)?, Some(spec.seed)));
    Ok(g)
}
