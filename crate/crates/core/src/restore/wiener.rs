//! Frequency-domain Wiener deconvolution against the known Gaussian MTF.
//!
//! The raster is extended half-sample symmetrically to `2W × 2H`, which makes
//! the border-reflected blur of [`crate::sensor::apply_mtf`] an exact circular
//! convolution. The filter uses the realised response of the blur kernel, so
//! with `nsr = 0` the restoration is an exact inverse up to rounding.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::sensor::{kernel_response, MtfSpec, NoiseModel};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WienerConfig {
    pub mtf: MtfSpec,
    /// Noise-to-signal power ratio `k` in `H / (H^2 + k)`.
    pub nsr: f64,
}

impl WienerConfig {
    pub fn validate(&self) -> Result<()> {
        self.mtf.validate()?;
        if !(self.nsr >= 0.0 && self.nsr.is_finite()) {
            return Err(Error::InvalidArgument(format!("nsr {} must be >= 0", self.nsr)));
        }
        Ok(())
    }

    /// Mean noise variance under `noise` divided by the estimated signal
    /// variance of the degraded raster.
    pub fn auto_nsr(r: &Raster, noise: &NoiseModel) -> f64 {
        let per_pixel: Vec<f64> = r
            .values()
            .iter()
            .map(|&v| noise.variance(f64::from(v)).max(0.0))
            .collect();
        let noise_var = stats::mean(&per_pixel);
        let total = stats::variance(r.values());
        let signal = (total - noise_var).max(total * 1e-3).max(f64::MIN_POSITIVE);
        noise_var / signal
    }
}

fn fft_rows(data: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>) {
    let scratch_len = fft.get_inplace_scratch_len();
    data.par_chunks_mut(len).for_each_init(
        || vec![Complex64::default(); scratch_len],
        |scratch, row| fft.process_with_scratch(row, scratch),
    );
}

fn transpose(src: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::default(); w * h];
    dst.par_chunks_mut(h).enumerate().for_each(|(x, col)| {
        for (y, d) in col.iter_mut().enumerate() {
            *d = src[y * w + x];
        }
    });
    dst
}

pub fn wiener_restore(r: &Raster, cfg: &WienerConfig) -> Result<Raster> {
    cfg.validate()?;
    let kernel = cfg.mtf.kernel()?;
    let (w, h) = (r.width(), r.height());
    if w < kernel.len() || h < kernel.len() {
        return Err(Error::InvalidArgument(format!(
            "raster {w}x{h} smaller than kernel support {}",
            kernel.len()
        )));
    }
    let (ew, eh) = (2 * w, 2 * h);

    let mut buf = vec![Complex64::default(); ew * eh];
    buf.par_chunks_mut(ew).enumerate().for_each(|(y, row)| {
        let src = r.row(if y < h { y } else { eh - 1 - y });
        for (x, o) in row.iter_mut().enumerate() {
            let sx = if x < w { x } else { ew - 1 - x };
            *o = Complex64::new(f64::from(src[sx]), 0.0);
        }
    });

    let mut planner = FftPlanner::<f64>::new();
    let fwd_x = planner.plan_fft_forward(ew);
    let fwd_y = planner.plan_fft_forward(eh);
    let inv_x = planner.plan_fft_inverse(ew);
    let inv_y = planner.plan_fft_inverse(eh);

    fft_rows(&mut buf, ew, &fwd_x);
    let mut cols = transpose(&buf, ew, eh);
    fft_rows(&mut cols, eh, &fwd_y);

    let hx: Vec<f64> = (0..ew).map(|k| kernel_response(&kernel, k as f64 / ew as f64)).collect();
    let hy: Vec<f64> = (0..eh).map(|k| kernel_response(&kernel, k as f64 / eh as f64)).collect();
    let nsr = cfg.nsr;
    cols.par_chunks_mut(eh).enumerate().for_each(|(kx, col)| {
        for (ky, c) in col.iter_mut().enumerate() {
            let g = hx[kx] * hy[ky];
            let denom = g * g + nsr;
            *c *= if denom > 0.0 { g / denom } else { 0.0 };
        }
    });

    fft_rows(&mut cols, eh, &inv_y);
    let mut buf = transpose(&cols, eh, ew);
    fft_rows(&mut buf, ew, &inv_x);

    let norm = 1.0 / (ew * eh) as f64;
    let mut out = vec![0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = (buf[y * ew + x].re * norm) as f32;
        }
    });
    r.with_values(out)
}
