use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Bilinear sub-pixel translation: `out(x, y) = in(x - dx, y - dy)` with
/// sample coordinates clamped to the raster.
pub fn misregister(r: &Raster, dx: f64, dy: f64) -> Result<Raster> {
    let (w, h) = (r.width(), r.height());
    let limit = w.min(h) as f64 / 4.0;
    if !(dx.abs() < limit && dy.abs() < limit) {
        return Err(Error::InvalidArgument(format!(
            "shift ({dx}, {dy}) must be below {limit} px for a {w}x{h} raster"
        )));
    }
    if dx == 0.0 && dy == 0.0 {
        return Ok(r.clone());
    }
    let clamp = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64);
    let xs: Vec<(usize, usize, f64)> = (0..w)
        .map(|x| {
            let s = clamp(x as f64 - dx, w);
            let x0 = s.floor() as usize;
            (x0, (x0 + 1).min(w - 1), s - x0 as f64)
        })
        .collect();
    let mut out = vec![0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let s = clamp(y as f64 - dy, h);
        let y0 = s.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = s - y0 as f64;
        let (r0, r1) = (r.row(y0), r.row(y1));
        for (o, &(x0, x1, fx)) in row.iter_mut().zip(&xs) {
            let top = f64::from(r0[x0]) * (1.0 - fx) + f64::from(r0[x1]) * fx;
            let bot = f64::from(r1[x0]) * (1.0 - fx) + f64::from(r1[x1]) * fx;
            *o = (top * (1.0 - fy) + bot * fy) as f32;
        }
    });
    r.with_values(out)
}

/// Uniform ADC quantisation to `bits` over `[0, radiometric_max]`; values are
/// returned in luminance units (the reconstruction level of each code).
pub fn quantize(r: &Raster, bits: u8, radiometric_max: f64) -> Result<Raster> {
    if !(8..=16).contains(&bits) {
        return Err(Error::InvalidArgument(format!("quant bits {bits} outside [8, 16]")));
    }
    if !(radiometric_max > 0.0 && radiometric_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "radiometric_max {radiometric_max} must be > 0"
        )));
    }
    let levels = ((1u32 << bits) - 1) as f64;
    let out = r
        .values()
        .par_iter()
        .map(|&v| {
            let code = (f64::from(v) * levels / radiometric_max).round().clamp(0.0, levels);
            (code * radiometric_max / levels) as f32
        })
        .collect();
    r.with_values(out)
}
