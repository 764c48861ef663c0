//! PNG import/export for previews and tile images. Values are mapped to
//! digital numbers with an explicit linear `[min, max]` scaling.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use super::{Granule, ProvenanceRecord, Raster};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearScaling {
    pub min: f64,
    pub max: f64,
    pub bits: u8,
}

impl LinearScaling {
    pub fn new(min: f64, max: f64, bits: u8) -> Result<Self> {
        if bits != 8 && bits != 16 {
            return Err(Error::InvalidArgument(format!("PNG bit depth {bits} (8 or 16)")));
        }
        if !(max > min) {
            return Err(Error::InvalidArgument(format!("scaling max {max} <= min {min}")));
        }
        Ok(LinearScaling { min, max, bits })
    }

    /// Min/max over all given bands, degenerating to a unit range for flat inputs.
    pub fn fit(bands: &[&Raster], bits: u8) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for b in bands {
            for &v in b.values() {
                lo = lo.min(f64::from(v));
                hi = hi.max(f64::from(v));
            }
        }
        if !(hi > lo) {
            hi = lo + 1.0;
        }
        LinearScaling::new(lo, hi, bits)
    }

    fn full_scale(&self) -> f64 {
        if self.bits == 8 {
            255.0
        } else {
            65535.0
        }
    }

    pub fn to_dn(&self, v: f32) -> u16 {
        let s = (f64::from(v) - self.min) / (self.max - self.min) * self.full_scale();
        s.round().clamp(0.0, self.full_scale()) as u16
    }

    pub fn from_dn(&self, dn: u16) -> f32 {
        (self.min + f64::from(dn) / self.full_scale() * (self.max - self.min)) as f32
    }
}

fn check_bands(bands: &[&Raster]) -> Result<(u32, u32)> {
    let first = bands
        .first()
        .ok_or_else(|| Error::InvalidArgument("no bands to encode".into()))?;
    if bands.len() != 1 && bands.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "PNG export takes 1 or 3 bands, got {}",
            bands.len()
        )));
    }
    if bands.iter().any(|b| !b.same_dims(first)) {
        return Err(Error::InvalidArgument("PNG bands differ in size".into()));
    }
    Ok((first.width() as u32, first.height() as u32))
}

pub(crate) fn to_dynamic_image(bands: &[&Raster], s: &LinearScaling) -> Result<DynamicImage> {
    let (w, h) = check_bands(bands)?;
    let n = (w * h) as usize;
    let img = match (bands.len(), s.bits) {
        (1, 8) => {
            let data = bands[0].values().iter().map(|&v| s.to_dn(v) as u8).collect();
            DynamicImage::ImageLuma8(ImageBuffer::from_raw(w, h, data).expect("sized"))
        }
        (1, _) => {
            let data = bands[0].values().iter().map(|&v| s.to_dn(v)).collect();
            DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, data).expect("sized"))
        }
        (_, 8) => {
            let mut data = Vec::with_capacity(3 * n);
            for i in 0..n {
                data.extend(bands.iter().map(|b| s.to_dn(b.values()[i]) as u8));
            }
            DynamicImage::ImageRgb8(ImageBuffer::from_raw(w, h, data).expect("sized"))
        }
        (_, _) => {
            let mut data = Vec::with_capacity(3 * n);
            for i in 0..n {
                data.extend(bands.iter().map(|b| s.to_dn(b.values()[i])));
            }
            DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, data).expect("sized"))
        }
    };
    Ok(img)
}

/// Writes 1 band as grayscale or 3 bands as RGB. With `scaling = None` the
/// range is fitted to the data; the scaling used is returned.
pub fn export_png(
    bands: &[&Raster],
    path: &Path,
    bits: u8,
    scaling: Option<LinearScaling>,
) -> Result<LinearScaling> {
    let s = match scaling {
        Some(s) => s,
        None => LinearScaling::fit(bands, bits)?,
    };
    if s.bits != bits {
        return Err(Error::InvalidArgument(format!(
            "scaling is {}-bit but {bits}-bit export requested",
            s.bits
        )));
    }
    let img = to_dynamic_image(bands, &s)?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(s)
}

/// Reads a grayscale or RGB PNG (8 or 16 bit) into one raster per channel.
/// `scaling.bits` must match the file depth.
pub fn import_png(
    path: &Path,
    names: &[&str],
    gsd: f64,
    scaling: &LinearScaling,
) -> Result<Vec<Raster>> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, bits, data): (usize, u8, Vec<u16>) = match img {
        DynamicImage::ImageLuma8(b) => (1, 8, b.into_raw().into_iter().map(u16::from).collect()),
        DynamicImage::ImageLuma16(b) => (1, 16, b.into_raw()),
        DynamicImage::ImageRgb8(b) => (3, 8, b.into_raw().into_iter().map(u16::from).collect()),
        DynamicImage::ImageRgb16(b) => (3, 16, b.into_raw()),
        other => {
            return Err(Error::InvalidArgument(format!(
                "{}: unsupported PNG color type {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    if bits != scaling.bits {
        return Err(Error::InvalidArgument(format!(
            "{}: file is {bits}-bit, scaling declares {}-bit",
            path.display(),
            scaling.bits
        )));
    }
    if names.len() != channels {
        return Err(Error::InvalidArgument(format!(
            "{}: {channels} channel(s) but {} band names",
            path.display(),
            names.len()
        )));
    }
    names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let v = data
                .iter()
                .skip(c)
                .step_by(channels)
                .map(|&dn| scaling.from_dn(dn))
                .collect();
            Raster::new(*name, w, h, gsd, v)
        })
        .collect()
}

/// Builds a granule from a grayscale PAN PNG and an RGB XS PNG. The scaling
/// and source paths are recorded as the first provenance entry.
pub fn granule_from_png(
    id: &str,
    pan_path: &Path,
    xs_path: &Path,
    pan_gsd: f64,
    scaling: &LinearScaling,
) -> Result<Granule> {
    let pan = import_png(pan_path, &["PAN"], pan_gsd, scaling)?.remove(0);
    let probe = image::image_dimensions(xs_path)?;
    if probe.0 == 0 || pan.width() % probe.0 as usize != 0 {
        return Err(Error::Schema(format!(
            "PAN width {} is not a multiple of XS width {}",
            pan.width(),
            probe.0
        )));
    }
    let ratio = pan.width() / probe.0 as usize;
    let xs = import_png(xs_path, &["R", "G", "B"], pan_gsd * ratio as f64, scaling)?;
    let mut g = Granule::new(id, pan, xs, Vec::new())?;
    g.push_provenance(ProvenanceRecord::new(
        "import_png",
        serde_json::json!({
            "pan": pan_path.display().to_string(),
            "xs": xs_path.display().to_string(),
            "scaling": scaling,
        }),
        None,
    ));
    Ok(g)
}
