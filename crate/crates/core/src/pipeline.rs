//! End-to-end dataset generation: degrade, optionally restore, pansharpen,
//! tile and export, driven by one TOML config.
//!
//! Outputs are written to a sibling staging directory and moved into place
//! only when every stage succeeded, so a failed run leaves nothing behind.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalConfig;
use crate::pansharp::{pansharpen_granule, BroveyWeights};
use crate::raster::{read_granule, Granule, ProvenanceRecord, META_FILE};
use crate::restore::{restore_granule, RestoreMethod};
use crate::sensor::{degrade, DegradationConfig};
use crate::tiling::{
    export_dataset, filter_classes_many, tile_granule, ClassFilter, DatasetManifest, ExportOptions,
    TileSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Raw pansharpened product: restoration is skipped.
    Raw,
    /// L1-like product: PAN restored before pansharpening.
    Restored,
}

impl Variant {
    pub fn manifest_name(self) -> &'static str {
        match self {
            Variant::Raw => "raw-sim",
            Variant::Restored => "L1-sim",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Variant::Raw),
            "restored" => Ok(Variant::Restored),
            _ => Err(Error::Config(format!("variant `{s}` (raw or restored)"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PansharpConfig {
    pub weights: Option<BroveyWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub split: [f64; 3],
    pub bits: u8,
    pub classes: Option<ClassFilter>,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig {
            split: [0.8, 0.1, 0.1],
            bits: 16,
            classes: None,
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("dataset")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Granule container directories.
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub degrade: DegradationConfig,
    #[serde(default)]
    pub restore: RestoreMethod,
    #[serde(default)]
    pub pansharp: PansharpConfig,
    #[serde(default)]
    pub tile: TileSpec,
    #[serde(default)]
    pub evaluate: EvalConfig,
    #[serde(default)]
    pub export: ExportConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output);
        self.inputs.iter_mut().for_each(fix);
        if let RestoreMethod::Edsr { weights } = &mut self.restore {
            fix(weights);
        }
    }

    /// Overrides every stage seed with the global seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Config("no input granules".into()));
        }
        for p in &self.inputs {
            if !p.join(META_FILE).is_file() {
                return Err(Error::Config(format!(
                    "input {} is not a granule container",
                    p.display()
                )));
            }
        }
        self.degrade.validate()?;
        self.restore.validate()?;
        self.tile.validate()?;
        self.evaluate.validate()?;
        if !matches!(self.export.bits, 8 | 16) {
            return Err(Error::Config(format!("export bits {} (8 or 16)", self.export.bits)));
        }
        let s = self.export.split;
        if s.iter().any(|v| !(*v >= 0.0)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split {s:?} must sum to 1")));
        }
        Ok(())
    }
}

/// Logs one JSON line per finished stage to the `rawsat::timing` target.
fn timed<T>(stage: &str, granule: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t0 = Instant::now();
    let out = f();
    log::info!(
        target: "rawsat::timing",
        "{}",
        serde_json::json!({
            "stage": stage,
            "granule": granule,
            "ms": t0.elapsed().as_secs_f64() * 1e3,
            "ok": out.is_ok(),
        })
    );
    out.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => e.in_stage(stage, granule),
    })
}

/// Degrade, restore (restored variant only) and pansharpen one granule.
pub fn process_granule(g: &Granule, cfg: &PipelineConfig, variant: Variant) -> Result<Granule> {
    let mut dcfg = cfg.degrade.clone();
    dcfg.seed = cfg.seed;
    let mut g = timed("degrade", &g.id, || degrade(g, &dcfg))?;
    let restored = variant == Variant::Restored && cfg.restore != RestoreMethod::None;
    if restored {
        g = timed("restore", &g.id, || restore_granule(&g, &cfg.restore))?;
    }
    timed("pansharpen", &g.id, || {
        pansharpen_granule(&g, cfg.pansharp.weights.as_ref(), restored)
    })
}

fn staging_dir(output: &Path) -> PathBuf {
    let name = output
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    output.with_file_name(format!(".{name}.partial"))
}

pub fn run_pipeline(cfg: &PipelineConfig, variant: Variant) -> Result<DatasetManifest> {
    cfg.validate()?;
    let staging = staging_dir(&cfg.output);
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    let result = run_into(cfg, variant, &staging);
    match result {
        Ok(m) => {
            if cfg.output.exists() {
                std::fs::remove_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
            }
            std::fs::rename(&staging, &cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
            Ok(m)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn run_into(cfg: &PipelineConfig, variant: Variant, dir: &Path) -> Result<DatasetManifest> {
    let mut granules = cfg
        .inputs
        .iter()
        .map(|p| timed("read", &p.display().to_string(), || read_granule(p)))
        .collect::<Result<Vec<_>>>()?;
    let mut class_remap = None;
    if let Some(filter) = &cfg.export.classes {
        let (g, remap) = filter_classes_many(&granules, filter)?;
        granules = g;
        class_remap = Some(remap);
    }

    let mut tile_spec = cfg.tile.clone();
    tile_spec.seed = cfg.seed;
    let mut tiles = Vec::new();
    let mut warnings = Vec::new();
    let mut provenance = BTreeMap::new();
    for g in &granules {
        let mut p = process_granule(g, cfg, variant)?;
        let set = timed("tile", &p.id, || tile_granule(&p, &tile_spec))?;
        p.push_provenance(ProvenanceRecord::new(
            "tile",
            serde_json::json!({
                "spec": tile_spec,
                "tiles": set.tiles.len(),
                "skipped": set.warnings.len(),
            }),
            Some(tile_spec.seed),
        ));
        if provenance.insert(p.id.clone(), p.provenance().to_vec()).is_some() {
            return Err(Error::Config(format!("granule id `{}` appears twice", p.id)));
        }
        tiles.extend(set.tiles);
        warnings.extend(set.warnings);
    }
    if tiles.is_empty() {
        return Err(Error::Data("pipeline produced no tiles".into()));
    }

    let opts = ExportOptions {
        split: cfg.export.split,
        seed: cfg.seed,
        variant: variant.manifest_name().into(),
        bits: cfg.export.bits,
        scaling: None,
        class_remap,
        warnings,
        provenance,
    };
    timed("export", "dataset", || export_dataset(&tiles, dir, &opts))
}

/// Operation names recorded for `granule` in a manifest, in order.
pub fn stage_list(m: &DatasetManifest, granule: &str) -> Vec<String> {
    m.provenance
        .get(granule)
        .map(|v| v.iter().map(|r| r.op.clone()).collect())
        .unwrap_or_default()
}
