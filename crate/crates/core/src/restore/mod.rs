//! PAN restoration: Wiener deconvolution baseline and EDSR-lite inference.

mod edsr;
mod weights;
mod wiener;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Granule, ProvenanceRecord};
use crate::sensor::{DegradationConfig, Stage, RAW_SUFFIX};

pub use edsr::edsr_infer;
pub use weights::{load_weights, save_weights, Conv3x3, EdsrWeights, ResBlock, MAGIC, VERSION};
pub use wiener::{wiener_restore, WienerConfig};

/// Name of the restored PAN band added by [`restore_granule`].
pub const RESTORED_PAN: &str = "PAN_restored";

/// Noise-to-signal setting for the Wiener filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Nsr {
    Fixed(f64),
    /// `"auto"`: derived from the degradation noise model and the image variance.
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Default for Nsr {
    fn default() -> Self {
        Nsr::Auto(AutoTag::Auto)
    }
}

/// `[restore]` section of the pipeline config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum RestoreMethod {
    None,
    Wiener {
        #[serde(default)]
        nsr: Nsr,
    },
    Edsr {
        weights: PathBuf,
    },
}

impl Default for RestoreMethod {
    fn default() -> Self {
        RestoreMethod::Wiener { nsr: Nsr::default() }
    }
}

impl RestoreMethod {
    pub fn validate(&self) -> Result<()> {
        match self {
            RestoreMethod::Edsr { weights } if !weights.is_file() => Err(Error::Config(format!(
                "EDSR weights file {} does not exist",
                weights.display()
            ))),
            RestoreMethod::Wiener { nsr: Nsr::Fixed(k) } if !(*k >= 0.0) => {
                Err(Error::Config(format!("nsr {k} must be >= 0")))
            }
            _ => Ok(()),
        }
    }
}

/// Source PAN band name of a degraded granule (`PAN_raw` -> `PAN`).
fn source_name(band: &str) -> &str {
    band.strip_suffix(RAW_SUFFIX).unwrap_or(band)
}

/// Restores the PAN band of a degraded granule into [`RESTORED_PAN`].
///
/// The Wiener path reads the MTF and noise model from the `degrade`
/// provenance record; `method = none` returns the granule unchanged.
pub fn restore_granule(g: &Granule, method: &RestoreMethod) -> Result<Granule> {
    method.validate()?;
    let pan = g.pan();
    let (restored, params) = match method {
        RestoreMethod::None => return Ok(g.clone()),
        RestoreMethod::Wiener { nsr } => {
            let rec = g
                .provenance()
                .iter()
                .rev()
                .find(|r| r.op == "degrade")
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "granule `{}` has no degrade record; Wiener needs the MTF",
                        g.id
                    ))
                })?;
            let dcfg: DegradationConfig = serde_json::from_value(rec.params.clone())?;
            let src = source_name(pan.band_name());
            let mtf = *dcfg.mtf.get(src);
            let k = match nsr {
                Nsr::Fixed(k) => *k,
                Nsr::Auto(_) => {
                    let rmax = dcfg.radiometric_max.unwrap_or(f64::MAX);
                    let model = dcfg.noise.get(src).resolve(rmax)?;
                    if dcfg.stage_order.contains(&Stage::Noise) {
                        WienerConfig::auto_nsr(pan, &model)
                    } else {
                        0.0
                    }
                }
            };
            let cfg = WienerConfig { mtf, nsr: k };
            (
                wiener_restore(pan, &cfg).map_err(|e| e.in_stage("restore", pan.band_name()))?,
                serde_json::json!({ "method": "wiener", "mtf": mtf, "nsr": k, "nsr_setting": nsr }),
            )
        }
        RestoreMethod::Edsr { weights } => {
            let bytes = std::fs::read(weights).map_err(|e| Error::io(weights, e))?;
            let w = EdsrWeights::from_bytes(&bytes)?;
            (
                edsr_infer(pan, &w).map_err(|e| e.in_stage("restore", pan.band_name()))?,
                serde_json::json!({
                    "method": "edsr",
                    "weights": weights.display().to_string(),
                    "crc32": format!("{:08x}", crc32fast::hash(&bytes)),
                }),
            )
        }
    };
    let mut out = g.clone();
    out.insert_band(restored.renamed(RESTORED_PAN))?;
    out.push_provenance(ProvenanceRecord::new("restore", params, None));
    Ok(out)
}
