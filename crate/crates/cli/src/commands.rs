use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;

use rawsat_core::metrics::{
    evaluate as eval_report, ground_truth_from_manifest, read_predictions, report_emit, EvalConfig,
    ReportFormat,
};
use rawsat_core::pansharp::{pansharpen_granule, BroveyWeights};
use rawsat_core::pipeline::{run_pipeline, PipelineConfig, Variant};
use rawsat_core::preview::{write_previews, PreviewVariant};
use rawsat_core::raster::{read_granule, write_granule};
use rawsat_core::restore::{restore_granule, Nsr, RestoreMethod};
use rawsat_core::sensor::{self, fit_noise_params, DegradationConfig, SnrAnchor};
use rawsat_core::synth::{synth_granule, SceneSpec};
use rawsat_core::tiling::{export_dataset, tile_granule, ExportOptions, TileMode, TileSpec};
use rawsat_core::Error;

use crate::logging::timed;

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|_| config_err(format!("bad {what} value `{v}`"))))
        .collect()
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output granule directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Scene spec TOML; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub objects: Option<usize>,
}

pub fn synth(a: SynthArgs, seed: Option<u64>) -> Result<()> {
    let mut spec: SceneSpec = match &a.config {
        Some(p) => read_toml(p)?,
        None => SceneSpec::default(),
    };
    if let Some(v) = a.id {
        spec.id = v;
    }
    if let Some(v) = a.width {
        spec.width = v;
    }
    if let Some(v) = a.height {
        spec.height = v;
    }
    if let Some(v) = a.objects {
        spec.n_objects = v;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let g = timed("synth", || synth_granule(&spec))?;
    write_granule(&g, &a.out)?;
    println!("{}", serde_json::json!({ "granule": g.id, "objects": g.annotations.len() }));
    Ok(())
}

fn parse_anchor(s: &str) -> Result<(f64, f64)> {
    let (l, v) = s
        .split_once(':')
        .ok_or_else(|| config_err(format!("anchor `{s}` is not L:SNR")))?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|_| config_err(format!("anchor `{s}`")));
    Ok((p(l)?, p(v)?))
}

#[derive(Debug, Args)]
pub struct NoiseFitArgs {
    /// Dark reference point as LUMINANCE:SNR.
    #[arg(long)]
    pub dark: String,
    /// Bright reference point as LUMINANCE:SNR.
    #[arg(long)]
    pub bright: String,
    /// SNR values are in dB (20·log10 of the amplitude ratio).
    #[arg(long)]
    pub db: bool,
    /// Upper end of the luminance range the model must be valid on
    /// (default: the larger anchor luminance).
    #[arg(long)]
    pub radiometric_max: Option<f64>,
}

pub fn noise_fit(a: NoiseFitArgs) -> Result<()> {
    let (dl, ds) = parse_anchor(&a.dark)?;
    let (bl, bs) = parse_anchor(&a.bright)?;
    let mk = |l, s| if a.db { SnrAnchor::from_db(l, s) } else { SnrAnchor::new(l, s) };
    let rmax = a.radiometric_max.unwrap_or(dl.max(bl));
    let m = fit_noise_params(mk(dl, ds), mk(bl, bs), rmax).map_err(|e| config_err(e.to_string()))?;
    println!("{}", serde_json::json!({ "alpha": m.alpha, "beta": m.beta }));
    Ok(())
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// DegradationConfig TOML (the `[degrade]` table contents).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Nyquist MTF gain for all bands.
    #[arg(long)]
    pub mtf: Option<f64>,
    #[arg(long)]
    pub factor: Option<usize>,
}

pub fn degrade(a: DegradeArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg: DegradationConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => DegradationConfig::default(),
    };
    if let Some(m) = a.mtf {
        cfg.mtf = sensor::PerBand::uniform(sensor::MtfSpec::new(m));
    }
    if let Some(f) = a.factor {
        cfg.pre_downsample_factor = f;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let g = read_granule(&a.input)?;
    let out = timed("degrade", || sensor::degrade(&g, &cfg))?;
    write_granule(&out, &a.out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// none, wiener or edsr.
    #[arg(long, default_value = "wiener")]
    pub method: String,
    /// Wiener noise-to-signal ratio or `auto`.
    #[arg(long, default_value = "auto")]
    pub nsr: String,
    /// EDSW1 weight file for `--method edsr`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

pub fn restore(a: RestoreArgs) -> Result<()> {
    let method = match a.method.as_str() {
        "none" => RestoreMethod::None,
        "wiener" => RestoreMethod::Wiener {
            nsr: if a.nsr == "auto" {
                Nsr::default()
            } else {
                Nsr::Fixed(a.nsr.parse().map_err(|_| config_err(format!("nsr `{}`", a.nsr)))?)
            },
        },
        "edsr" => RestoreMethod::Edsr {
            weights: a.weights.ok_or_else(|| config_err("--method edsr needs --weights"))?,
        },
        m => return Err(config_err(format!("restore method `{m}` (none, wiener, edsr)"))),
    };
    method.validate()?;
    let g = read_granule(&a.input)?;
    let out = timed("restore", || restore_granule(&g, &method))?;
    write_granule(&out, &a.out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct PansharpenArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated Brovey weights, one per XS band (default all 1).
    #[arg(long)]
    pub weights: Option<String>,
    /// Fuse the restored PAN band instead of the granule's PAN band.
    #[arg(long)]
    pub use_restored: bool,
}

pub fn pansharpen(a: PansharpenArgs) -> Result<()> {
    let weights = a
        .weights
        .as_deref()
        .map(|s| parse_list::<f64>(s, "weight").map(BroveyWeights))
        .transpose()?;
    let g = read_granule(&a.input)?;
    let out = timed("pansharpen", || pansharpen_granule(&g, weights.as_ref(), a.use_restored))?;
    write_granule(&out, &a.out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct TileArgs {
    /// One or more granule directories.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Dataset output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub patch_size: usize,
    /// grid or object-centered.
    #[arg(long, default_value = "grid")]
    pub mode: String,
    #[arg(long, default_value_t = 0.3)]
    pub offset_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    pub min_visibility: f64,
    /// Comma-separated bands to cut (default: pansharpened bands or PAN).
    #[arg(long)]
    pub bands: Option<String>,
    /// train,val,test fractions.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub split: String,
    /// Variant name recorded in the manifest.
    #[arg(long, default_value = "unspecified")]
    pub variant: String,
}

pub fn tile(a: TileArgs, seed: Option<u64>) -> Result<()> {
    let mode = match a.mode.as_str() {
        "grid" => TileMode::Grid,
        "object-centered" => TileMode::ObjectCentered,
        m => return Err(config_err(format!("tile mode `{m}` (grid, object-centered)"))),
    };
    let spec = TileSpec {
        patch_size: a.patch_size,
        mode,
        offset_fraction: a.offset_fraction,
        min_visibility: a.min_visibility,
        seed: seed.unwrap_or(0),
        bands: a.bands.as_deref().map(|b| b.split(',').map(str::to_string).collect()),
    };
    spec.validate()?;
    let split: Vec<f64> = parse_list(&a.split, "split")?;
    let split: [f64; 3] = split
        .try_into()
        .map_err(|_| config_err("--split needs three fractions"))?;
    let mut tiles = Vec::new();
    let mut warnings = Vec::new();
    let mut provenance = BTreeMap::new();
    for p in &a.input {
        let g = read_granule(p)?;
        let set = timed("tile", || tile_granule(&g, &spec))?;
        provenance.insert(g.id.clone(), g.provenance().to_vec());
        tiles.extend(set.tiles);
        warnings.extend(set.warnings);
    }
    let opts = ExportOptions {
        split,
        seed: spec.seed,
        variant: a.variant,
        warnings,
        provenance,
        ..ExportOptions::default()
    };
    let m = timed("export", || export_dataset(&tiles, &a.out, &opts))?;
    println!("{}", serde_json::to_string(&m.counts)?);
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Dataset manifest (file or dataset directory).
    #[arg(long)]
    pub gt: PathBuf,
    /// JSON-lines predictions.
    #[arg(long)]
    pub pred: PathBuf,
    /// Report output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated IoU thresholds (default 0.50:0.05:0.95).
    #[arg(long)]
    pub iou: Option<String>,
    /// Comma-separated confidence thresholds for F1.
    #[arg(long, default_value = "0.25,0.5,0.75")]
    pub conf: String,
    /// Comma-separated report formats: json, csv, svg.
    #[arg(long, default_value = "json,csv,svg")]
    pub formats: String,
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut cfg = EvalConfig {
        confidence_thresholds: parse_list(&a.conf, "confidence")?,
        ..EvalConfig::default()
    };
    if let Some(t) = &a.iou {
        cfg.iou_thresholds = parse_list(t, "iou")?;
    }
    let formats = a
        .formats
        .split(',')
        .map(|f| match f.trim() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            o => Err(config_err(format!("report format `{o}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let (gts, classes) = ground_truth_from_manifest(&a.gt)?;
    let dets = read_predictions(&a.pred)?;
    let r = timed("evaluate", || eval_report(&dets, &gts, &classes, &cfg))?;
    report_emit(&r, &a.out, &formats)?;
    println!(
        "{}",
        serde_json::json!({
            "mAP50": r.map50,
            "mAP50_95": r.map50_95,
            "AP95": r.ap95,
            "mean_tp_iou": r.mean_tp_iou,
        })
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated variants: pan, xs, restored, pansharp.
    #[arg(long, default_value = "pan,xs")]
    pub variant: String,
}

pub fn preview(a: PreviewArgs) -> Result<()> {
    let variants: Vec<PreviewVariant> = a
        .variant
        .split(',')
        .map(|v| v.trim().parse::<PreviewVariant>())
        .collect::<Result<_, _>>()?;
    let g = read_granule(&a.input)?;
    let files = write_previews(&g, &variants, &a.out, &g.id)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Pipeline TOML.
    #[arg(long)]
    pub config: PathBuf,
    /// raw or restored.
    #[arg(long, default_value = "restored")]
    pub variant: String,
    /// Override the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: RunArgs, seed: Option<u64>) -> Result<()> {
    let variant: Variant = a.variant.parse()?;
    let mut cfg = PipelineConfig::load(&a.config)
        .with_context(|| format!("loading {}", a.config.display()))?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(o) = a.out {
        cfg.output = o;
    }
    let m = run_pipeline(&cfg, variant)?;
    println!(
        "{}",
        serde_json::json!({ "variant": m.variant, "tiles": m.tiles.len(), "counts": m.counts })
    );
    Ok(())
}
