//! Granule container: a directory holding `meta.json` plus one headerless
//! little-endian f32 file per band.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Annotation, Granule, ProvenanceRecord, Raster};
use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMeta {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub gsd_m: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranuleMeta {
    pub id: String,
    pub bands: Vec<BandMeta>,
    pub pan_band: String,
    pub xs_bands: Vec<String>,
    pub pan_xs_ratio: usize,
    pub annotations: Vec<Annotation>,
    pub provenance: Vec<ProvenanceRecord>,
}

fn band_file_name(name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{clean}.bin")
}

pub fn write_granule(g: &Granule, dir: &Path) -> Result<()> {
    g.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bands = Vec::new();
    for r in g.bands() {
        let file = band_file_name(r.band_name());
        let mut bytes = Vec::with_capacity(r.values().len() * 4);
        for v in r.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        bands.push(BandMeta {
            name: r.band_name().to_string(),
            width: r.width(),
            height: r.height(),
            gsd_m: r.gsd(),
            file,
        });
    }
    let meta = GranuleMeta {
        id: g.id.clone(),
        bands,
        pan_band: g.pan_band().to_string(),
        xs_bands: g.xs_bands().to_vec(),
        pan_xs_ratio: g.pan_xs_ratio()?,
        annotations: g.annotations.clone(),
        provenance: g.provenance().to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    let path = dir.join(META_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_granule(dir: &Path) -> Result<Granule> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: GranuleMeta =
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;

    let mut rasters = BTreeMap::new();
    for b in &meta.bands {
        let path = dir.join(&b.file);
        let bytes = fs::read(&path).map_err(|e| Error::Format {
            band: b.name.clone(),
            msg: format!("cannot read {}: {e}", path.display()),
        })?;
        let expected = b.width * b.height * 4;
        if bytes.len() != expected {
            return Err(Error::Format {
                band: b.name.clone(),
                msg: format!(
                    "band size mismatch: meta declares {}x{} ({expected} bytes), file holds {} bytes",
                    b.width,
                    b.height,
                    bytes.len()
                ),
            });
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let r = Raster::new(b.name.clone(), b.width, b.height, b.gsd_m, values).map_err(|e| {
            Error::Format {
                band: b.name.clone(),
                msg: e.to_string(),
            }
        })?;
        if rasters.insert(b.name.clone(), r).is_some() {
            return Err(Error::Schema(format!("band `{}` declared twice", b.name)));
        }
    }
    let g = Granule::from_parts(
        meta.id,
        rasters,
        meta.pan_band,
        meta.xs_bands,
        meta.annotations,
        meta.provenance,
    )?;
    let ratio = g.pan_xs_ratio()?;
    if ratio != meta.pan_xs_ratio {
        return Err(Error::Schema(format!(
            "meta pan_xs_ratio {} but band dimensions give {ratio}",
            meta.pan_xs_ratio
        )));
    }
    Ok(g)
}
