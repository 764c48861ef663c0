//! Gaussian optical transfer function parameterised by its gain at Nyquist.
//!
//! The target response is `H(f) = m^(4 f^2)` for `f` in cycles/sample, i.e.
//! `H(0) = 1` and `H(0.5) = m`. The spatial kernel is the inverse
//! discrete-time Fourier transform of `H` over one period, truncated to
//! `kernel_half_width` taps per side. Truncation is compensated by rescaling
//! even and odd taps separately so that the realised DC and Nyquist gains are
//! exactly 1 and `m`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

fn default_half_width() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtfSpec {
    pub mtf_at_nyquist: f64,
    #[serde(default = "default_half_width")]
    pub kernel_half_width: usize,
}

impl MtfSpec {
    pub fn new(mtf_at_nyquist: f64) -> Self {
        MtfSpec {
            mtf_at_nyquist,
            kernel_half_width: default_half_width(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.mtf_at_nyquist;
        if !(m > 0.0 && m <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mtf_at_nyquist {m} outside (0, 1]"
            )));
        }
        if m < 1.0 && self.kernel_half_width == 0 {
            return Err(Error::InvalidArgument(
                "kernel_half_width must be >= 1 when mtf_at_nyquist < 1".into(),
            ));
        }
        Ok(())
    }

    /// Continuous target response.
    pub fn gaussian_otf(&self, f: f64) -> f64 {
        self.mtf_at_nyquist.powf(4.0 * f * f)
    }

    /// Symmetric kernel of length `2 * half_width + 1` (length 1 for m = 1).
    pub fn kernel(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let m = self.mtf_at_nyquist;
        if m == 1.0 {
            return Ok(vec![1.0]);
        }
        let hw = self.kernel_half_width;
        // h[n] = 2 * integral_0^{1/2} H(f) cos(2 pi f n) df, composite Simpson.
        const INTERVALS: usize = 4096;
        let step = 0.5 / INTERVALS as f64;
        let half: Vec<f64> = (0..=hw)
            .map(|n| {
                let g = |f: f64| self.gaussian_otf(f) * (std::f64::consts::TAU * f * n as f64).cos();
                let mut acc = g(0.0) + g(0.5);
                for i in 1..INTERVALS {
                    let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += w * g(i as f64 * step);
                }
                2.0 * acc * step / 3.0
            })
            .collect();
        let mut k: Vec<f64> = half.iter().rev().chain(&half[1..]).copied().collect();
        let (mut even, mut odd) = (0.0, 0.0);
        for (i, v) in k.iter().enumerate() {
            if (i as isize - hw as isize) % 2 == 0 {
                even += v;
            } else {
                odd += v;
            }
        }
        let (se, so) = ((1.0 + m) / (2.0 * even), (1.0 - m) / (2.0 * odd));
        for (i, v) in k.iter_mut().enumerate() {
            *v *= if (i as isize - hw as isize) % 2 == 0 { se } else { so };
        }
        Ok(k)
    }
}

/// Realised frequency response of a symmetric kernel at `f` cycles/sample.
pub fn kernel_response(kernel: &[f64], f: f64) -> f64 {
    let hw = (kernel.len() / 2) as isize;
    kernel
        .iter()
        .enumerate()
        .map(|(i, &h)| h * (std::f64::consts::TAU * f * (i as isize - hw) as f64).cos())
        .sum()
}

/// Half-sample symmetric extension: `-1 -> 0`, `n -> n-1`, period `2n`.
#[inline]
pub(crate) fn fold_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = i.rem_euclid(2 * n);
    (if j >= n { 2 * n - 1 - j } else { j }) as usize
}

/// Separable convolution with a symmetric 1-D kernel, half-sample symmetric
/// padding at the borders.
pub(crate) fn convolve_separable(r: &Raster, kernel: &[f64]) -> Result<Raster> {
    if kernel.len() == 1 && kernel[0] == 1.0 {
        return Ok(r.clone());
    }
    let (w, h) = (r.width(), r.height());
    let hw = (kernel.len() / 2) as isize;
    let mut tmp = vec![0f64; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let src = r.row(y);
        for (x, o) in row.iter_mut().enumerate() {
            *o = kernel
                .iter()
                .enumerate()
                .map(|(k, &c)| c * f64::from(src[fold_index(x as isize + k as isize - hw, w)]))
                .sum();
        }
    });
    let mut out = vec![0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut acc = vec![0f64; w];
        for (k, &c) in kernel.iter().enumerate() {
            let sy = fold_index(y as isize + k as isize - hw, h);
            for (a, &s) in acc.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                *a += c * s;
            }
        }
        for (o, a) in row.iter_mut().zip(acc) {
            *o = a as f32;
        }
    });
    r.with_values(out)
}

pub fn apply_mtf(r: &Raster, spec: &MtfSpec) -> Result<Raster> {
    let k = spec.kernel()?;
    convolve_separable(r, &k)
}
