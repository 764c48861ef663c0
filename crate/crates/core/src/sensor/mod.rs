//! Sensor simulator: turns L1-like rasters into raw-like (L0) rasters.

mod geometry;
mod mtf;
mod noise;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{downsample_block, Annotation, Granule, ProvenanceRecord, Raster};
use crate::rng::stream_from_label;
use crate::stats;

pub use geometry::{misregister, quantize};
pub use mtf::{apply_mtf, kernel_response, MtfSpec};
pub use noise::{apply_noise, estimate_noise, fit_noise_params, NoiseModel, SnrAnchor};

/// Suffix appended to band names by [`degrade`].
pub const RAW_SUFFIX: &str = "_raw";

/// Percentile of the source granule used as full scale when none is configured.
pub const DEFAULT_FULL_SCALE_QUANTILE: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Misregister,
    Mtf,
    Noise,
    Quantize,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Misregister => "misregister",
            Stage::Mtf => "mtf",
            Stage::Noise => "noise",
            Stage::Quantize => "quantize",
        }
    }
}

/// Either explicit `(alpha, beta)` or the two sensor reference points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Params { alpha: f64, beta: f64 },
    Anchors { dark: [f64; 2], bright: [f64; 2] },
}

impl NoiseSpec {
    pub fn resolve(&self, radiometric_max: f64) -> Result<NoiseModel> {
        match *self {
            NoiseSpec::Params { alpha, beta } => {
                let m = NoiseModel::new(alpha, beta);
                m.check_range(radiometric_max)?;
                Ok(m)
            }
            NoiseSpec::Anchors { dark, bright } => fit_noise_params(
                SnrAnchor::new(dark[0], dark[1]),
                SnrAnchor::new(bright[0], bright[1]),
                radiometric_max,
            ),
        }
    }
}

/// A default value with optional per-band overrides keyed by source band name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct PerBand<T> {
    pub default: T,
    #[serde(default)]
    pub bands: BTreeMap<String, T>,
}

impl<T> PerBand<T> {
    pub fn uniform(default: T) -> Self {
        PerBand {
            default,
            bands: BTreeMap::new(),
        }
    }

    pub fn get(&self, band: &str) -> &T {
        self.bands.get(band).unwrap_or(&self.default)
    }
}

fn default_factor() -> usize {
    4
}
fn default_bits() -> u8 {
    12
}
fn default_order() -> Vec<Stage> {
    vec![Stage::Misregister, Stage::Mtf, Stage::Noise, Stage::Quantize]
}
fn default_mtf() -> PerBand<MtfSpec> {
    PerBand::uniform(MtfSpec::new(0.3))
}
fn default_noise() -> PerBand<NoiseSpec> {
    PerBand::uniform(NoiseSpec::Anchors {
        dark: [10.0, 20.0],
        bright: [1000.0, 200.0],
    })
}

/// Degradation chain parameters (`[degrade]` in pipeline TOML).
///
/// The block-average pre-downsampling always runs first; `stage_order` lists
/// the remaining stages. Misregistration applies to XS bands only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationConfig {
    #[serde(default = "default_factor")]
    pub pre_downsample_factor: usize,
    #[serde(default = "default_mtf")]
    pub mtf: PerBand<MtfSpec>,
    #[serde(default = "default_noise")]
    pub noise: PerBand<NoiseSpec>,
    #[serde(default = "default_bits")]
    pub quant_bits: u8,
    /// Luminance mapped to full DN scale; 99.9th percentile of the source when unset.
    #[serde(default)]
    pub radiometric_max: Option<f64>,
    #[serde(default)]
    pub misregistration: BTreeMap<String, [f64; 2]>,
    #[serde(default = "default_order")]
    pub stage_order: Vec<Stage>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        DegradationConfig {
            pre_downsample_factor: default_factor(),
            mtf: default_mtf(),
            noise: default_noise(),
            quant_bits: default_bits(),
            radiometric_max: None,
            misregistration: BTreeMap::new(),
            stage_order: default_order(),
            seed: 0,
        }
    }
}

impl DegradationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pre_downsample_factor == 0 {
            return Err(Error::Config("pre_downsample_factor must be >= 1".into()));
        }
        if !(8..=16).contains(&self.quant_bits) {
            return Err(Error::Config(format!(
                "quant_bits {} outside [8, 16]",
                self.quant_bits
            )));
        }
        let mut seen = BTreeSet::new();
        for s in &self.stage_order {
            if !seen.insert(*s) {
                return Err(Error::Config(format!("stage `{}` listed twice", s.name())));
            }
        }
        if let Some(m) = self.radiometric_max {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Config(format!("radiometric_max {m} must be > 0")));
            }
        }
        self.mtf.default.validate().map_err(|e| Error::Config(e.to_string()))?;
        for spec in self.mtf.bands.values() {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Runs the degradation chain over the PAN and XS bands of `g`.
///
/// The result holds only the degraded bands (`<name>_raw`), with annotations
/// rescaled to the reduced grid. The provenance record stores the config with
/// `radiometric_max` resolved, so replaying it reproduces the output exactly.
pub fn degrade(g: &Granule, cfg: &DegradationConfig) -> Result<Granule> {
    cfg.validate()?;
    let pan_name = g.pan_band().to_string();
    let xs_names: Vec<String> = g.xs_bands().to_vec();
    for name in cfg.misregistration.keys() {
        if !xs_names.contains(name) {
            return Err(Error::Config(format!(
                "misregistration names `{name}`, which is not an XS band"
            )));
        }
    }
    for name in cfg.mtf.bands.keys().chain(cfg.noise.bands.keys()) {
        if name != &pan_name && !xs_names.contains(name) {
            return Err(Error::Config(format!("config names unknown band `{name}`")));
        }
    }

    let radiometric_max = match cfg.radiometric_max {
        Some(m) => m,
        None => {
            let parts: Vec<&[f32]> = std::iter::once(g.pan())
                .chain(g.xs())
                .map(Raster::values)
                .collect();
            let q = stats::quantile(&parts, DEFAULT_FULL_SCALE_QUANTILE).unwrap_or(0.0);
            if !(q > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "granule `{}`: non-positive full scale {q} from percentile",
                    g.id
                )));
            }
            f64::from(q)
        }
    };

    let names: Vec<String> = std::iter::once(pan_name.clone())
        .chain(xs_names.iter().cloned())
        .collect();
    let degraded: Vec<Raster> = names
        .par_iter()
        .map(|name| degrade_band(g.band(name)?, &g.id, name != &pan_name, cfg, radiometric_max))
        .collect::<Result<_>>()?;

    let factor = cfg.pre_downsample_factor;
    let scale = 1.0 / factor as f64;
    let annotations: Vec<Annotation> = g
        .annotations
        .iter()
        .map(|a| Annotation {
            bbox: a.bbox.scale(scale),
            ..a.clone()
        })
        .collect();

    let mut it = degraded.into_iter();
    let pan = it.next().expect("pan band");
    let mut out = Granule::new(g.id.clone(), pan, it.collect(), annotations)?;
    for rec in g.provenance() {
        out.push_provenance(rec.clone());
    }
    let mut resolved = cfg.clone();
    resolved.radiometric_max = Some(radiometric_max);
    out.push_provenance(ProvenanceRecord::new(
        "degrade",
        serde_json::to_value(&resolved)?,
        Some(cfg.seed),
    ));
    Ok(out)
}

fn degrade_band(
    src: &Raster,
    granule_id: &str,
    is_xs: bool,
    cfg: &DegradationConfig,
    radiometric_max: f64,
) -> Result<Raster> {
    let name = src.band_name();
    let mut r = downsample_block(src, cfg.pre_downsample_factor)
        .map_err(|e| e.in_stage("downsample", name))?;
    for stage in &cfg.stage_order {
        let step = match stage {
            Stage::Misregister => match cfg.misregistration.get(name) {
                Some(&[dx, dy]) if is_xs => misregister(&r, dx, dy),
                _ => Ok(r),
            },
            Stage::Mtf => apply_mtf(&r, cfg.mtf.get(name)),
            Stage::Noise => cfg
                .noise
                .get(name)
                .resolve(radiometric_max)
                .and_then(|m| {
                    let stream = stream_from_label(&format!("{granule_id}/{name}"));
                    apply_noise(&r, &m, cfg.seed, stream)
                }),
            Stage::Quantize => quantize(&r, cfg.quant_bits, radiometric_max),
        };
        r = step.map_err(|e| e.in_stage(stage.name(), name))?;
    }
    Ok(r.renamed(format!("{name}{RAW_SUFFIX}")))
}
