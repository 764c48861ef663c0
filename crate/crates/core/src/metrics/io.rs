//! Ground truth from a tiled dataset and JSON-lines predictions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Detection, GroundTruth};
use crate::error::{Error, Result};
use crate::tiling::{read_labels, read_manifest};

/// Reads every label file listed in a dataset manifest. Image ids are tile
/// ids; boxes are in patch pixels.
pub fn ground_truth_from_manifest(path: &Path) -> Result<(Vec<GroundTruth>, BTreeMap<u32, String>)> {
    let m = read_manifest(path)?;
    let root = if path.is_dir() {
        path
    } else {
        path.parent().unwrap_or(Path::new("."))
    };
    let mut gts = Vec::new();
    for t in &m.tiles {
        for (class_id, bbox) in read_labels(&root.join(&t.label), m.patch_size)? {
            gts.push(GroundTruth {
                image_id: t.id.clone(),
                class_id,
                bbox,
            });
        }
    }
    Ok((gts, m.classes))
}

/// One JSON object per line: `{"image_id", "class_id", "confidence", "bbox"}`.
pub fn read_predictions(path: &Path) -> Result<Vec<Detection>> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    s.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<Detection>(l)
                .map_err(|e| Error::Data(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn write_predictions(dets: &[Detection], path: &Path) -> Result<()> {
    let mut s = String::new();
    for d in dets {
        writeln!(s, "{}", serde_json::to_string(d)?).expect("string write");
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
