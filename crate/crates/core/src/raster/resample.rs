use rayon::prelude::*;

use super::Raster;
use crate::error::{Error, Result};
use crate::stats::pairwise_sum;

/// Block-average downsampling: each output pixel is the mean of a
/// `factor`×`factor` input block. Dimensions must divide exactly.
pub fn downsample_block(r: &Raster, factor: usize) -> Result<Raster> {
    if factor == 0 {
        return Err(Error::InvalidArgument("downsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(r.clone());
    }
    if r.width() % factor != 0 || r.height() % factor != 0 {
        return Err(Error::InvalidArgument(format!(
            "band `{}`: {}x{} not divisible by factor {factor}",
            r.band_name(),
            r.width(),
            r.height()
        )));
    }
    let (ow, oh) = (r.width() / factor, r.height() / factor);
    let inv = 1.0 / (factor * factor) as f64;
    let mut out = vec![0f32; ow * oh];
    out.par_chunks_mut(ow).enumerate().for_each(|(oy, row)| {
        let mut block = vec![0f32; factor * factor];
        for (ox, o) in row.iter_mut().enumerate() {
            for dy in 0..factor {
                let src = &r.row(oy * factor + dy)[ox * factor..(ox + 1) * factor];
                block[dy * factor..(dy + 1) * factor].copy_from_slice(src);
            }
            *o = (pairwise_sum(&block) * inv) as f32;
        }
    });
    Raster::new(r.band_name(), ow, oh, r.gsd() * factor as f64, out)
}

const CATMULL_ROM_A: f64 = -0.5;

fn cubic_kernel(t: f64) -> f64 {
    let a = CATMULL_ROM_A;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Four (index, weight) taps per output coordinate, indices clamped to the
/// input range. Output pixel centres map to `(i + 0.5) / factor - 0.5`.
fn cubic_taps(n_in: usize, factor: usize) -> Vec<[(usize, f64); 4]> {
    let last = n_in as isize - 1;
    (0..n_in * factor)
        .map(|i| {
            let src = (i as f64 + 0.5) / factor as f64 - 0.5;
            let base = src.floor();
            let t = src - base;
            let base = base as isize;
            let mut taps = [(0usize, 0f64); 4];
            for (k, tap) in taps.iter_mut().enumerate() {
                let off = k as isize - 1;
                let idx = (base + off).clamp(0, last) as usize;
                *tap = (idx, cubic_kernel(t - off as f64));
            }
            taps
        })
        .collect()
}

/// Separable Catmull-Rom (a = −0.5) upsampling with clamped edges.
pub fn upsample_bicubic(r: &Raster, factor: usize) -> Result<Raster> {
    if factor == 0 {
        return Err(Error::InvalidArgument("upsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(r.clone());
    }
    let (w, h) = (r.width(), r.height());
    let (ow, oh) = (w * factor, h * factor);
    let xt = cubic_taps(w, factor);
    let yt = cubic_taps(h, factor);

    let mut horiz = vec![0f64; ow * h];
    horiz.par_chunks_mut(ow).enumerate().for_each(|(y, row)| {
        let src = r.row(y);
        for (o, taps) in row.iter_mut().zip(&xt) {
            *o = taps.iter().map(|&(i, wgt)| wgt * f64::from(src[i])).sum();
        }
    });
    let mut out = vec![0f32; ow * oh];
    out.par_chunks_mut(ow).enumerate().for_each(|(y, row)| {
        let taps = &yt[y];
        for (x, o) in row.iter_mut().enumerate() {
            let v: f64 = taps.iter().map(|&(j, wgt)| wgt * horiz[j * ow + x]).sum();
            *o = v as f32;
        }
    });
    Raster::new(r.band_name(), ow, oh, r.gsd() / factor as f64, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_block_mean() {
        let r = Raster::filled("b", 12, 8, 0.5, 3.75).unwrap();
        let d = downsample_block(&r, 4).unwrap();
        assert_eq!((d.width(), d.height()), (3, 2));
        assert!(d.values().iter().all(|&v| v == 3.75));
        assert_eq!(d.gsd(), 2.0);
    }

    #[test]
    fn hand_block_mean() {
        let r = Raster::new("b", 2, 2, 1.0, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = downsample_block(&r, 2).unwrap();
        assert_eq!(d.values(), &[2.5]);
    }

    #[test]
    fn non_divisible_is_error() {
        let r = Raster::filled("b", 10, 8, 1.0, 0.0).unwrap();
        assert!(downsample_block(&r, 4).is_err());
    }

    #[test]
    fn global_mean_preserved() {
        let mut rng = crate::rng::Rng::new(4, 4);
        let v: Vec<f32> = (0..64 * 48).map(|_| rng.uniform(0.0, 1000.0) as f32).collect();
        let r = Raster::new("b", 64, 48, 1.0, v).unwrap();
        let d = downsample_block(&r, 4).unwrap();
        let (a, b) = (r.mean(), d.mean());
        assert!(((a - b) / a).abs() < 1e-6);
    }

    #[test]
    fn kernel_partition_of_unity() {
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            let s: f64 = (-1..=2).map(|k| cubic_kernel(t - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn upsample_identity_and_constant() {
        let r = Raster::new("b", 3, 2, 1.0, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(upsample_bicubic(&r, 1).unwrap(), r);
        let c = Raster::filled("b", 5, 7, 2.0, 123.456).unwrap();
        let u = upsample_bicubic(&c, 4).unwrap();
        assert_eq!((u.width(), u.height()), (20, 28));
        assert_eq!(u.gsd(), 0.5);
        assert!(u.values().iter().all(|&v| v == 123.456f32));
    }

    #[test]
    fn linear_ramp_preserved_in_interior() {
        let (w, h, f) = (16usize, 6usize, 4usize);
        let v: Vec<f32> = (0..w * h).map(|i| (i % w) as f32 * 2.0 + 1.0).collect();
        let r = Raster::new("b", w, h, 1.0, v).unwrap();
        let u = upsample_bicubic(&r, f).unwrap();
        // Interior: all four taps unclamped, i.e. src in [1, w-2].
        for y in 0..u.height() {
            for x in 0..u.width() {
                let src = (x as f64 + 0.5) / f as f64 - 0.5;
                if src >= 1.0 && src <= (w - 2) as f64 {
                    let expect = src * 2.0 + 1.0;
                    assert!((f64::from(u.get(x, y)) - expect).abs() < 1e-5, "x={x}");
                }
            }
        }
    }

    #[test]
    fn down_then_up_constant_exact() {
        let r = Raster::filled("b", 32, 32, 0.5, 77.125).unwrap();
        let back = upsample_bicubic(&downsample_block(&r, 4).unwrap(), 4).unwrap();
        assert_eq!(back.values(), r.values());
    }
}
