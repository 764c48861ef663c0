//! YOLO-style dataset export: PNG tiles, normalized label files, manifest.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json
//! images/<split>/<tile>.png      (1 or 3 bands; otherwise <tile>_<band>.png per band)
//! labels/<split>/<tile>.txt      "class_id cx cy w h", 6 decimals, normalized
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassRemap, Tile, TilingWarning};
use crate::error::{Error, Result};
use crate::raster::{export_png, Annotation, BBox, LinearScaling, ProvenanceRecord, Raster};
use crate::rng::{stream_from_label, Rng};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExportOptions {
    /// (train, val, test) fractions summing to 1.
    pub split: [f64; 3],
    pub seed: u64,
    pub variant: String,
    pub bits: u8,
    /// Fixed DN scaling; fitted over all tiles when `None`.
    pub scaling: Option<LinearScaling>,
    pub class_remap: Option<ClassRemap>,
    pub warnings: Vec<TilingWarning>,
    /// Provenance of each source granule, keyed by granule id.
    pub provenance: BTreeMap<String, Vec<ProvenanceRecord>>,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            split: [0.8, 0.1, 0.1],
            seed: 0,
            variant: "unspecified".into(),
            bits: 16,
            scaling: None,
            class_remap: None,
            warnings: Vec::new(),
            provenance: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub tiles: usize,
    pub objects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub id: String,
    pub granule: String,
    pub split: String,
    pub origin: [usize; 2],
    pub images: Vec<String>,
    pub label: String,
    /// Labels in patch pixel coordinates at full precision.
    pub boxes: Vec<Annotation>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed_annotation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub variant: String,
    pub patch_size: usize,
    pub bands: Vec<String>,
    pub scaling: LinearScaling,
    pub split_fractions: [f64; 3],
    pub seed: u64,
    pub classes: BTreeMap<u32, String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class_remap: Option<ClassRemap>,
    pub counts: BTreeMap<String, SplitCounts>,
    pub tiles: Vec<TileEntry>,
    #[serde(default)]
    pub warnings: Vec<TilingWarning>,
    #[serde(default)]
    pub provenance: BTreeMap<String, Vec<ProvenanceRecord>>,
}

impl DatasetManifest {
    pub fn tile(&self, id: &str) -> Option<&TileEntry> {
        self.tiles.iter().find(|t| t.id == id)
    }
}

/// Split of a granule: a deterministic function of `(granule id, seed)`.
pub fn split_of(granule: &str, seed: u64, fractions: &[f64; 3]) -> &'static str {
    let u = Rng::new(seed, stream_from_label(&format!("split/{granule}"))).next_f64();
    if u < fractions[0] {
        SPLITS[0]
    } else if u < fractions[0] + fractions[1] {
        SPLITS[1]
    } else {
        SPLITS[2]
    }
}

fn check_fractions(f: &[f64; 3]) -> Result<()> {
    if f.iter().any(|v| !(*v >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {f:?} must be >= 0 and sum to 1"
        )));
    }
    Ok(())
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// One YOLO label line for a box in a `p`-pixel patch.
pub fn yolo_line(class_id: u32, b: &BBox, p: usize) -> String {
    let p = p as f64;
    let n = |v: f64| (v / p).clamp(0.0, 1.0);
    let (cx, cy) = b.center();
    format!(
        "{class_id} {:.6} {:.6} {:.6} {:.6}",
        n(cx),
        n(cy),
        n(b.width()),
        n(b.height())
    )
}

pub fn export_dataset(tiles: &[Tile], dir: &Path, opts: &ExportOptions) -> Result<DatasetManifest> {
    check_fractions(&opts.split)?;
    let first = tiles
        .first()
        .ok_or_else(|| Error::InvalidArgument("no tiles to export".into()))?;
    let p = first.patch_size();
    let bands: Vec<String> = first.image.iter().map(|r| r.band_name().to_string()).collect();
    for t in tiles {
        let names: Vec<&str> = t.image.iter().map(Raster::band_name).collect();
        if t.patch_size() != p || names != bands {
            return Err(Error::InvalidArgument(format!(
                "tile from `{}` differs in size or bands from the first tile",
                t.source_granule
            )));
        }
    }
    let scaling = match opts.scaling {
        Some(s) => s,
        None => {
            let all: Vec<&Raster> = tiles.iter().flat_map(|t| t.image.iter()).collect();
            LinearScaling::fit(&all, opts.bits)?
        }
    };

    let mut per_granule: BTreeMap<&str, usize> = BTreeMap::new();
    let mut entries = Vec::with_capacity(tiles.len());
    for t in tiles {
        let k = per_granule.entry(&t.source_granule).or_insert(0);
        let id = format!("{}_t{:04}", sanitize(&t.source_granule), k);
        *k += 1;
        let split = split_of(&t.source_granule, opts.seed, &opts.split);
        let images = if bands.len() == 1 || bands.len() == 3 {
            vec![format!("images/{split}/{id}.png")]
        } else {
            bands
                .iter()
                .map(|b| format!("images/{split}/{id}_{}.png", sanitize(b)))
                .collect()
        };
        entries.push(TileEntry {
            label: format!("labels/{split}/{id}.txt"),
            id,
            granule: t.source_granule.clone(),
            split: split.to_string(),
            origin: [t.origin.0, t.origin.1],
            images,
            boxes: t.labels.clone(),
            seed_annotation: t.seed_annotation,
        });
    }

    for s in SPLITS {
        for sub in ["images", "labels"] {
            let d = dir.join(sub).join(s);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
    }
    tiles
        .par_iter()
        .zip(&entries)
        .try_for_each(|(t, e)| -> Result<()> {
            if e.images.len() == 1 {
                let refs: Vec<&Raster> = t.image.iter().collect();
                export_png(&refs, &dir.join(&e.images[0]), scaling.bits, Some(scaling))?;
            } else {
                for (img, band) in e.images.iter().zip(&t.image) {
                    export_png(&[band], &dir.join(img), scaling.bits, Some(scaling))?;
                }
            }
            let mut txt = String::new();
            for a in &t.labels {
                writeln!(txt, "{}", yolo_line(a.class_id, &a.bbox, p)).expect("string write");
            }
            let path = dir.join(&e.label);
            std::fs::write(&path, txt).map_err(|err| Error::io(&path, err))
        })?;

    let mut counts: BTreeMap<String, SplitCounts> =
        SPLITS.iter().map(|s| (s.to_string(), SplitCounts::default())).collect();
    let mut classes = BTreeMap::new();
    for e in &entries {
        let c = counts.get_mut(&e.split).expect("known split");
        c.tiles += 1;
        c.objects += e.boxes.len();
        for a in &e.boxes {
            classes.entry(a.class_id).or_insert_with(|| a.class_name.clone());
        }
    }
    if let Some(remap) = &opts.class_remap {
        classes = remap.names.clone();
    }

    let manifest = DatasetManifest {
        format: "yolo-txt".into(),
        variant: opts.variant.clone(),
        patch_size: p,
        bands,
        scaling,
        split_fractions: opts.split,
        seed: opts.seed,
        classes,
        class_remap: opts.class_remap.clone(),
        counts,
        tiles: entries,
        warnings: opts.warnings.clone(),
        provenance: opts.provenance.clone(),
    };
    write_manifest(&manifest, dir)?;
    Ok(manifest)
}

pub fn write_manifest(m: &DatasetManifest, dir: &Path) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let mut s = serde_json::to_string_pretty(m)?;
    s.push('\n');
    std::fs::write(&path, s).map_err(|e| Error::io(&path, e))
}

/// Reads `manifest.json` from a dataset directory or a direct file path.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let s = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Schema(format!("{}: {e}", file.display())))
}

/// Parses a YOLO label file back into patch pixel boxes.
pub fn read_labels(path: &Path, patch_size: usize) -> Result<Vec<(u32, BBox)>> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let p = patch_size as f64;
    s.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Format {
                band: path.display().to_string(),
                msg: format!("label line {}: `{line}`", i + 1),
            };
            let mut it = line.split_whitespace();
            let class: u32 = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let v: Vec<f64> = it.map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
            if v.len() != 4 {
                return Err(bad());
            }
            let (cx, cy, w, h) = (v[0] * p, v[1] * p, v[2] * p, v[3] * p);
            Ok((class, BBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)))
        })
        .collect()
}
