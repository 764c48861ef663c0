//! Signal-dependent noise: variance `alpha * L + beta` at luminance `L`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rng::{substream, Rng};
use crate::stats;

/// A reference point of the target sensor: luminance and linear SNR (`L / sigma`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrAnchor {
    pub luminance: f64,
    pub snr: f64,
}

impl SnrAnchor {
    pub fn new(luminance: f64, snr: f64) -> Self {
        SnrAnchor { luminance, snr }
    }

    /// Converts an SNR given in decibels (amplitude convention, `20 log10`).
    pub fn from_db(luminance: f64, snr_db: f64) -> Self {
        SnrAnchor {
            luminance,
            snr: 10f64.powf(snr_db / 20.0),
        }
    }

    pub fn variance(&self) -> f64 {
        let sigma = self.luminance / self.snr;
        sigma * sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<[SnrAnchor; 2]>,
}

impl NoiseModel {
    pub const ZERO: NoiseModel = NoiseModel {
        alpha: 0.0,
        beta: 0.0,
        anchors: None,
    };

    pub fn new(alpha: f64, beta: f64) -> Self {
        NoiseModel {
            alpha,
            beta,
            anchors: None,
        }
    }

    #[inline]
    pub fn variance(&self, luminance: f64) -> f64 {
        self.alpha * luminance + self.beta
    }

    /// Variance is linear in L, so checking both ends of `[0, max]` suffices.
    pub fn check_range(&self, radiometric_max: f64) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::Noise(format!(
                "non-finite parameters alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        for l in [0.0, radiometric_max] {
            let v = self.variance(l);
            if v < 0.0 {
                return Err(Error::Noise(format!(
                    "negative variance {v} at L={l} (alpha={}, beta={})",
                    self.alpha, self.beta
                )));
            }
        }
        Ok(())
    }
}

/// Solves `alpha * L + beta = (L / SNR)^2` at both anchors. The resulting
/// model must stay non-negative over `[0, radiometric_max]`.
pub fn fit_noise_params(
    dark: SnrAnchor,
    bright: SnrAnchor,
    radiometric_max: f64,
) -> Result<NoiseModel> {
    for a in [dark, bright] {
        if !(a.snr > 0.0 && a.snr.is_finite() && a.luminance.is_finite()) {
            return Err(Error::Noise(format!(
                "anchor (L={}, SNR={}) needs finite L and SNR > 0",
                a.luminance, a.snr
            )));
        }
    }
    let (l1, l2) = (dark.luminance, bright.luminance);
    if l1 == l2 {
        return Err(Error::Noise(format!(
            "degenerate anchors: both at L={l1}"
        )));
    }
    let (v1, v2) = (dark.variance(), bright.variance());
    let alpha = (v2 - v1) / (l2 - l1);
    let beta = (v1 * l2 - v2 * l1) / (l2 - l1);
    let model = NoiseModel {
        alpha,
        beta,
        anchors: Some([dark, bright]),
    };
    model.check_range(radiometric_max)?;
    Ok(model)
}

/// Adds zero-mean Gaussian noise with per-pixel variance from `model`,
/// clamping the result at 0. Row `y` draws from stream
/// `substream(stream_id, y)`, so output does not depend on thread count.
pub fn apply_noise(r: &Raster, model: &NoiseModel, seed: u64, stream_id: u64) -> Result<Raster> {
    if model.alpha == 0.0 && model.beta == 0.0 {
        return Ok(r.clone());
    }
    let w = r.width();
    let mut out = vec![0f32; r.values().len()];
    out.par_chunks_mut(w)
        .enumerate()
        .try_for_each(|(y, row)| -> Result<()> {
            let mut rng = Rng::new(seed, substream(stream_id, y as u64));
            let mut z = vec![0f64; w];
            rng.fill_normal(&mut z);
            for ((o, &v), &n) in row.iter_mut().zip(r.row(y)).zip(&z) {
                let var = model.variance(f64::from(v));
                if var < 0.0 {
                    return Err(Error::Noise(format!(
                        "negative variance {var} at L={v} (row {y})"
                    )));
                }
                *o = (f64::from(v) + var.sqrt() * n).max(0.0) as f32;
            }
            Ok(())
        })?;
    r.with_values(out)
}

/// Least-squares fit of sample variance against sample mean over flat patches.
///
/// A sample variance over `n` pixels has standard error about
/// `v * sqrt(2 / (n - 1))`, so bright patches scatter far more than dark ones.
/// The fit is weighted by `(n - 1) / v^2`, with `v` taken from the previous
/// fit (the raw sample variances on the first pass).
pub fn estimate_noise(patches: &[&Raster]) -> Result<NoiseModel> {
    let points: Vec<(f64, f64, f64)> = patches
        .iter()
        .map(|p| (p.mean(), stats::variance(p.values()), p.values().len() as f64))
        .collect();
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Noise(format!(
            "need patches at >= 2 distinct luminances, got {}",
            distinct.len()
        )));
    }
    let top = points.iter().map(|p| p.1).fold(0.0, f64::max);
    // noiseless patches: any positive floor gives equal weights
    let floor = if top > 0.0 { top * 1e-6 } else { 1.0 };
    let mut expected: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (mut alpha, mut beta) = (0.0, 0.0);
    for _ in 0..4 {
        let w: Vec<f64> = points
            .iter()
            .zip(&expected)
            .map(|(p, v)| (p.2 - 1.0).max(1.0) / v.max(floor).powi(2))
            .collect();
        let sw: f64 = w.iter().sum();
        let mx = points.iter().zip(&w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
        let my = points.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
        let sxx: f64 = points.iter().zip(&w).map(|(p, w)| w * (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = points.iter().zip(&w).map(|(p, w)| w * (p.0 - mx) * (p.1 - my)).sum();
        alpha = sxy / sxx;
        beta = my - alpha * mx;
        expected = points.iter().map(|p| alpha * p.0 + beta).collect();
    }
    Ok(NoiseModel::new(alpha, beta))
}
