//! Forward pass of the EDSR-lite restoration network (upscale factor 1).
//!
//! ```text
//! x = input / radiometric_max
//! f = head(x)                                  1 -> C channels
//! f = f + residual_scale * conv2(relu(conv1(f)))   per block
//! y = tail(f)                                  C -> 1 channel
//! output = y * radiometric_max
//! ```
//!
//! The identity path from `head` to `tail` runs through the residual chain,
//! so a network with zeroed blocks reduces to `tail(head(x))`. Every 3×3
//! convolution pads by one pixel with edge-excluding reflection
//! (`-1 -> 1`, `n -> n-2`).

use rayon::prelude::*;

use super::weights::{Conv3x3, EdsrWeights};
use crate::error::{Error, Result};
use crate::raster::Raster;

/// `C` planes of `h × w`, channel-major.
struct Features {
    channels: usize,
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Features {
    fn plane(&self, c: usize) -> &[f32] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i as usize >= n {
        2 * n - 2 - i as usize
    } else {
        i as usize
    }
}

fn pad_plane(src: &[f32], h: usize, w: usize) -> Vec<f32> {
    let pw = w + 2;
    let mut out = vec![0f32; (h + 2) * pw];
    for py in 0..h + 2 {
        let sy = reflect(py as isize - 1, h);
        let row = &src[sy * w..(sy + 1) * w];
        let dst = &mut out[py * pw..(py + 1) * pw];
        dst[1..=w].copy_from_slice(row);
        dst[0] = row[1];
        dst[w + 1] = row[w - 2];
    }
    out
}

fn conv3x3(input: &Features, conv: &Conv3x3) -> Features {
    let (h, w) = (input.h, input.w);
    let pw = w + 2;
    let padded: Vec<Vec<f32>> = (0..input.channels)
        .into_par_iter()
        .map(|c| pad_plane(input.plane(c), h, w))
        .collect();
    let mut data = vec![0f32; conv.out_channels * h * w];
    data.par_chunks_mut(h * w).enumerate().for_each(|(o, out)| {
        out.fill(conv.bias[o]);
        for (i, pad) in padded.iter().enumerate() {
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = conv.w(o, i, ky, kx);
                    if k == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let src = &pad[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        for (d, &s) in out[y * w..(y + 1) * w].iter_mut().zip(src) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    });
    Features {
        channels: conv.out_channels,
        h,
        w,
        data,
    }
}

pub fn edsr_infer(r: &Raster, weights: &EdsrWeights) -> Result<Raster> {
    weights.validate()?;
    let (w, h) = (r.width(), r.height());
    if w < 2 || h < 2 {
        return Err(Error::InvalidArgument(format!(
            "EDSR needs at least 2x2 input, got {w}x{h}"
        )));
    }
    let inv = 1.0 / weights.radiometric_max;
    let x = Features {
        channels: 1,
        h,
        w,
        data: r.values().iter().map(|&v| v * inv).collect(),
    };
    let mut f = conv3x3(&x, &weights.head);
    for block in &weights.blocks {
        let mut t = conv3x3(&f, &block.conv1);
        t.data.par_iter_mut().for_each(|v| *v = v.max(0.0));
        let t = conv3x3(&t, &block.conv2);
        let s = weights.residual_scale;
        f.data
            .par_iter_mut()
            .zip(&t.data)
            .for_each(|(a, &b)| *a += s * b);
    }
    let y = conv3x3(&f, &weights.tail);
    let rmax = weights.radiometric_max;
    r.with_values(y.data.into_iter().map(|v| v * rmax).collect())
}
