//! Visual QA renderings: 8-bit RGBA buffers and side-by-side PNG panels.

use std::path::{Path, PathBuf};

use image::{DynamicImage, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pansharp::pansharp_bands;
use crate::raster::{Granule, Raster};
use crate::restore::RESTORED_PAN;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreviewVariant {
    Pan,
    Xs,
    Restored,
    Pansharp,
}

impl PreviewVariant {
    pub fn name(self) -> &'static str {
        match self {
            PreviewVariant::Pan => "pan",
            PreviewVariant::Xs => "xs",
            PreviewVariant::Restored => "restored",
            PreviewVariant::Pansharp => "pansharp",
        }
    }
}

impl std::str::FromStr for PreviewVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pan" => Ok(PreviewVariant::Pan),
            "xs" => Ok(PreviewVariant::Xs),
            "restored" => Ok(PreviewVariant::Restored),
            "pansharp" => Ok(PreviewVariant::Pansharp),
            _ => Err(Error::InvalidArgument(format!(
                "preview variant `{s}` (pan, xs, restored, pansharp)"
            ))),
        }
    }
}

/// Bands shown for a variant: one gray band or the first three as RGB.
pub fn variant_bands(g: &Granule, v: PreviewVariant) -> Result<Vec<&Raster>> {
    let first3 = |names: Vec<String>| -> Result<Vec<&Raster>> {
        let take = if names.len() >= 3 { 3 } else { 1 };
        names.iter().take(take).map(|n| g.band(n)).collect()
    };
    match v {
        PreviewVariant::Pan => Ok(vec![g.pan()]),
        PreviewVariant::Restored => Ok(vec![g.band(RESTORED_PAN)?]),
        PreviewVariant::Xs => first3(g.xs_bands().to_vec()),
        PreviewVariant::Pansharp => first3(pansharp_bands(g)),
    }
}

/// Display stretch between the 2nd and 98th percentiles of all bands.
pub fn stretch(bands: &[&Raster]) -> (f32, f32) {
    let parts: Vec<&[f32]> = bands.iter().map(|b| b.values()).collect();
    let lo = stats::quantile(&parts, 0.02).unwrap_or(0.0);
    let hi = stats::quantile(&parts, 0.98).unwrap_or(1.0);
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

/// Interleaved RGBA bytes for 1 (gray) or 3 (RGB) equally sized bands.
pub fn to_rgba8(bands: &[&Raster], lo: f32, hi: f32) -> Result<Vec<u8>> {
    let first = bands
        .first()
        .ok_or_else(|| Error::InvalidArgument("no bands to render".into()))?;
    if !(bands.len() == 1 || bands.len() == 3) || bands.iter().any(|b| !b.same_dims(first)) {
        return Err(Error::InvalidArgument(
            "render needs 1 or 3 bands of equal size".into(),
        ));
    }
    let scale = 255.0 / (hi - lo);
    let dn = |v: f32| ((v - lo) * scale).round().clamp(0.0, 255.0) as u8;
    let n = first.values().len();
    let mut out = Vec::with_capacity(4 * n);
    for i in 0..n {
        let r = dn(bands[0].values()[i]);
        let (g, b) = if bands.len() == 3 {
            (dn(bands[1].values()[i]), dn(bands[2].values()[i]))
        } else {
            (r, r)
        };
        out.extend_from_slice(&[r, g, b, 255]);
    }
    Ok(out)
}

fn rgba_image(bands: &[&Raster]) -> Result<RgbaImage> {
    let (lo, hi) = stretch(bands);
    let buf = to_rgba8(bands, lo, hi)?;
    Ok(RgbaImage::from_raw(bands[0].width() as u32, bands[0].height() as u32, buf).expect("sized"))
}

/// Writes `<stem>_<variant>.png` per variant plus `<stem>_panels.png` with
/// all variants side by side at the largest height (nearest-neighbour).
pub fn write_previews(g: &Granule, variants: &[PreviewVariant], dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut panels = Vec::new();
    for v in variants {
        let img = rgba_image(&variant_bands(g, *v)?)?;
        let path = dir.join(format!("{stem}_{}.png", v.name()));
        DynamicImage::ImageRgba8(img.clone()).save_with_format(&path, image::ImageFormat::Png)?;
        written.push(path);
        panels.push(img);
    }
    if panels.len() > 1 {
        let h = panels.iter().map(|p| p.height()).max().unwrap_or(1);
        let gap = 4;
        let scaled: Vec<RgbaImage> = panels
            .iter()
            .map(|p| {
                let w = (u64::from(p.width()) * u64::from(h) / u64::from(p.height())) as u32;
                image::imageops::resize(p, w, h, image::imageops::FilterType::Nearest)
            })
            .collect();
        let total = scaled.iter().map(|p| p.width() + gap).sum::<u32>() - gap;
        let mut canvas = RgbaImage::from_pixel(total, h, image::Rgba([255, 255, 255, 255]));
        let mut x = 0i64;
        for p in &scaled {
            image::imageops::overlay(&mut canvas, p, x, 0);
            x += i64::from(p.width() + gap);
        }
        let path = dir.join(format!("{stem}_panels.png"));
        DynamicImage::ImageRgba8(canvas).save_with_format(&path, image::ImageFormat::Png)?;
        written.push(path);
    }
    Ok(written)
}
