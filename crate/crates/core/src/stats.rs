//! Deterministic reductions used across the crate.

use rayon::prelude::*;

const PAIRWISE_LEAF: usize = 128;

/// Pairwise (cascade) summation in f64. The split points depend only on the
/// slice length, so results are reproducible regardless of thread count.
pub fn pairwise_sum<T: Copy + Into<f64>>(v: &[T]) -> f64 {
    if v.len() <= PAIRWISE_LEAF {
        return v.iter().fold(0.0, |acc, &x| acc + x.into());
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

pub fn mean<T: Copy + Into<f64>>(v: &[T]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    pairwise_sum(v) / v.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn variance<T: Copy + Into<f64> + Sync>(v: &[T]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let dev: Vec<f64> = v
        .iter()
        .map(|&x| {
            let d = x.into() - m;
            d * d
        })
        .collect();
    pairwise_sum(&dev) / (v.len() - 1) as f64
}

pub fn mse(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let sq: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .collect();
    mean(&sq)
}

/// Peak signal-to-noise ratio in dB of `test` against `reference`.
pub fn psnr(reference: &[f32], test: &[f32], peak: f64) -> f64 {
    let e = mse(reference, test);
    if e == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (peak * peak / e).log10()
}

fn ordered_key(x: f32) -> u32 {
    let b = x.to_bits();
    if b & 0x8000_0000 != 0 {
        !b
    } else {
        b ^ 0x8000_0000
    }
}

/// Exact nearest-rank quantile (`q` in [0, 1]) over several slices, computed
/// with a parallel 16-bit radix histogram followed by a selection inside the
/// bucket holding the requested rank.
pub fn quantile(parts: &[&[f32]], q: f64) -> Option<f32> {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    if n == 0 {
        return None;
    }
    let rank = ((q.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n) - 1;

    const CHUNK: usize = 1 << 20;
    let hist = parts
        .iter()
        .flat_map(|p| p.chunks(CHUNK))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|chunk| {
            let mut h = vec![0usize; 1 << 16];
            for &x in chunk {
                h[(ordered_key(x) >> 16) as usize] += 1;
            }
            h
        })
        .reduce(
            || vec![0usize; 1 << 16],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let mut below = 0usize;
    let mut bucket = 0u32;
    for (i, &c) in hist.iter().enumerate() {
        if below + c > rank {
            bucket = i as u32;
            break;
        }
        below += c;
    }
    let mut members: Vec<u32> = parts
        .par_iter()
        .flat_map(|p| p.par_iter())
        .map(|&x| ordered_key(x))
        .filter(|k| k >> 16 == bucket)
        .collect();
    let local = rank - below;
    let (_, key, _) = members.select_nth_unstable(local);
    let key = *key;
    let bits = if key & 0x8000_0000 != 0 {
        key ^ 0x8000_0000
    } else {
        !key
    };
    Some(f32::from_bits(bits))
}
