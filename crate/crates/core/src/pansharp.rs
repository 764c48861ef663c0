//! Brovey pansharpening.
//!
//! Each XS band is upsampled to the PAN grid and fused as
//! `F_i = M_i / (Σ_j w_j M_j) · P`. Pixels whose weighted sum is at or below
//! `eps = 1e-6 · max(P)` are set to zero in every output band and counted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{upsample_bicubic, Granule, ProvenanceRecord, Raster};
use crate::restore::RESTORED_PAN;
use crate::sensor::RAW_SUFFIX;

pub const PANSHARP_PREFIX: &str = "PANSHARP_";
pub const EPS_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BroveyWeights(pub Vec<f64>);

impl BroveyWeights {
    pub fn uniform(n: usize) -> Self {
        BroveyWeights(vec![1.0; n])
    }

    pub fn validate(&self, n_bands: usize) -> Result<()> {
        if self.0.len() != n_bands {
            return Err(Error::InvalidArgument(format!(
                "{} Brovey weights for {n_bands} XS bands",
                self.0.len()
            )));
        }
        if self.0.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "Brovey weights must be finite and >= 0: {:?}",
                self.0
            )));
        }
        if self.0.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument("Brovey weights are all zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BroveyOutput {
    pub bands: Vec<Raster>,
    /// Pixels where the weighted XS sum fell at or below `eps`.
    pub degenerate_pixels: usize,
    pub eps: f64,
}

/// Fuses `pan` with `xs` (each `ratio` times coarser). Output bands keep
/// the XS band names and take the PAN grid.
pub fn brovey(
    pan: &Raster,
    xs: &[&Raster],
    weights: &BroveyWeights,
    ratio: usize,
) -> Result<BroveyOutput> {
    weights.validate(xs.len())?;
    if xs.is_empty() {
        return Err(Error::InvalidArgument("no XS bands to fuse".into()));
    }
    for m in xs {
        if m.width() * ratio != pan.width() || m.height() * ratio != pan.height() {
            return Err(Error::InvalidArgument(format!(
                "XS band `{}` {}x{} times {ratio} does not match PAN {}x{}",
                m.band_name(),
                m.width(),
                m.height(),
                pan.width(),
                pan.height()
            )));
        }
    }
    let up: Vec<Raster> = xs
        .par_iter()
        .map(|m| upsample_bicubic(m, ratio))
        .collect::<Result<_>>()?;

    let peak = pan.values().iter().fold(0f32, |a, &v| a.max(v.abs()));
    let eps = EPS_FRACTION * if peak > 0.0 { f64::from(peak) } else { 1.0 };
    let w = pan.width();
    let n = up.len();
    let wts = &weights.0;

    let mut fused: Vec<Vec<f32>> = vec![vec![0f32; pan.values().len()]; n];
    // Row-parallel over the PAN grid; each task writes one row of every band.
    let mut rows: Vec<Vec<&mut [f32]>> = (0..pan.height()).map(|_| Vec::with_capacity(n)).collect();
    for band in fused.iter_mut() {
        for (y, chunk) in band.chunks_mut(w).enumerate() {
            rows[y].push(chunk);
        }
    }
    let degenerate: usize = rows
        .par_iter_mut()
        .enumerate()
        .map(|(y, outs)| {
            let p = pan.row(y);
            let ms: Vec<&[f32]> = up.iter().map(|r| r.row(y)).collect();
            let mut count = 0;
            for x in 0..w {
                let s: f64 = (0..n).map(|j| wts[j] * f64::from(ms[j][x])).sum();
                if s <= eps {
                    count += 1;
                    for o in outs.iter_mut() {
                        o[x] = 0.0;
                    }
                } else {
                    let gain = f64::from(p[x]) / s;
                    for (o, m) in outs.iter_mut().zip(&ms) {
                        o[x] = (f64::from(m[x]) * gain) as f32;
                    }
                }
            }
            count
        })
        .sum();

    let bands = fused
        .into_iter()
        .zip(xs)
        .map(|(v, m)| Raster::new(m.band_name(), pan.width(), pan.height(), pan.gsd(), v))
        .collect::<Result<_>>()?;
    Ok(BroveyOutput {
        bands,
        degenerate_pixels: degenerate,
        eps,
    })
}

/// Name of the fused band for an XS band (`R_raw` -> `PANSHARP_R`).
pub fn pansharp_band_name(xs_band: &str) -> String {
    format!(
        "{PANSHARP_PREFIX}{}",
        xs_band.strip_suffix(RAW_SUFFIX).unwrap_or(xs_band)
    )
}

/// Adds one `PANSHARP_*` band per XS band, fusing either the granule's PAN
/// band (raw product) or [`RESTORED_PAN`] (restored product).
pub fn pansharpen_granule(
    g: &Granule,
    weights: Option<&BroveyWeights>,
    use_restored_pan: bool,
) -> Result<Granule> {
    let pan_name = if use_restored_pan {
        RESTORED_PAN
    } else {
        g.pan_band()
    };
    let pan = g.band(pan_name)?;
    let xs = g.xs();
    let uniform = BroveyWeights::uniform(xs.len());
    let weights = weights.unwrap_or(&uniform);
    let out = brovey(pan, &xs, weights, g.pan_xs_ratio()?)?;

    let mut result = g.clone();
    let mut names = Vec::new();
    for b in out.bands {
        let name = pansharp_band_name(b.band_name());
        names.push(name.clone());
        result.insert_band(b.renamed(name))?;
    }
    result.push_provenance(ProvenanceRecord::new(
        "pansharpen",
        serde_json::json!({
            "pan_band": pan_name,
            "xs_bands": g.xs_bands(),
            "weights": weights,
            "output_bands": names,
            "degenerate_pixels": out.degenerate_pixels,
            "eps": out.eps,
        }),
        None,
    ));
    Ok(result)
}

/// Fused band names of a pansharpened granule, in XS order.
pub fn pansharp_bands(g: &Granule) -> Vec<String> {
    g.xs_bands().iter().map(|b| pansharp_band_name(b)).collect()
}
