//! Raster and granule data model.

mod container;
mod png_io;
mod resample;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use container::{read_granule, write_granule, BandMeta, GranuleMeta, META_FILE};
pub use png_io::{export_png, granule_from_png, import_png, LinearScaling};
pub use resample::{downsample_block, upsample_bicubic};

/// Single-band image of 32-bit radiance or DN values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    band_name: String,
    width: usize,
    height: usize,
    gsd: f64,
    values: Vec<f32>,
}

impl Raster {
    pub fn new(
        band_name: impl Into<String>,
        width: usize,
        height: usize,
        gsd: f64,
        values: Vec<f32>,
    ) -> Result<Self> {
        let band_name = band_name.into();
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "band `{band_name}` has zero size {width}x{height}"
            )));
        }
        if !(gsd > 0.0 && gsd.is_finite()) {
            return Err(Error::InvalidRaster(format!(
                "band `{band_name}` has non-positive gsd {gsd}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "band `{band_name}`: {} values for {width}x{height}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRaster(format!(
                "band `{band_name}`: non-finite value at pixel ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(Raster {
            band_name,
            width,
            height,
            gsd,
            values,
        })
    }

    pub fn filled(
        band_name: impl Into<String>,
        width: usize,
        height: usize,
        gsd: f64,
        value: f32,
    ) -> Result<Self> {
        Self::new(band_name, width, height, gsd, vec![value; width * height])
    }

    /// Same band name and grid, new pixel values.
    pub fn with_values(&self, values: Vec<f32>) -> Result<Self> {
        Self::new(
            self.band_name.clone(),
            self.width,
            self.height,
            self.gsd,
            values,
        )
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.band_name = name.into();
        self
    }

    pub fn band_name(&self) -> &str {
        &self.band_name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn gsd(&self) -> f64 {
        self.gsd
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn same_dims(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.values)
    }

    /// Copy of the `w`×`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Raster> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop {w}x{h}@({x0},{y0}) outside {}x{}",
                self.width, self.height
            )));
        }
        let mut out = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            out.extend_from_slice(&self.row(y)[x0..x0 + w]);
        }
        Raster::new(self.band_name.clone(), w, h, self.gsd, out)
    }
}

/// Axis-aligned box in pixel coordinates, `(xmin, ymin, xmax, ymax)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.xmin, b.ymin, b.xmax, b.ymax]
    }
}

impl BBox {
    pub const fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        BBox {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.xmin < self.xmax
            && self.ymin < self.ymax
            && [self.xmin, self.ymin, self.xmax, self.ymax]
                .iter()
                .all(|v| v.is_finite())
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.xmin + self.xmax),
            0.5 * (self.ymin + self.ymax),
        )
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.xmin.max(other.xmin),
            self.ymin.max(other.ymin),
            self.xmax.min(other.xmax),
            self.ymax.min(other.ymax),
        );
        (b.xmin < b.xmax && b.ymin < b.ymax).then_some(b)
    }

    pub fn contains(&self, inner: &BBox) -> bool {
        inner.xmin >= self.xmin
            && inner.ymin >= self.ymin
            && inner.xmax <= self.xmax
            && inner.ymax <= self.ymax
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.xmin + dx, self.ymin + dy, self.xmax + dx, self.ymax + dy)
    }

    pub fn scale(&self, s: f64) -> BBox {
        BBox::new(self.xmin * s, self.ymin * s, self.xmax * s, self.ymax * s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class_id: u32,
    pub class_name: String,
    pub bbox: BBox,
}

/// One applied operation, with enough parameters to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub op: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
}

impl ProvenanceRecord {
    pub fn new(op: impl Into<String>, params: serde_json::Value, seed: Option<u64>) -> Self {
        ProvenanceRecord {
            op: op.into(),
            params,
            seed,
        }
    }
}

/// Co-registered PAN + XS band set with annotations in PAN pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Granule {
    pub id: String,
    rasters: BTreeMap<String, Raster>,
    pan_band: String,
    xs_bands: Vec<String>,
    pub annotations: Vec<Annotation>,
    provenance: Vec<ProvenanceRecord>,
}

impl Granule {
    pub fn new(
        id: impl Into<String>,
        pan: Raster,
        xs: Vec<Raster>,
        annotations: Vec<Annotation>,
    ) -> Result<Self> {
        let pan_band = pan.band_name().to_string();
        let xs_bands = xs.iter().map(|r| r.band_name().to_string()).collect();
        let mut rasters = BTreeMap::new();
        rasters.insert(pan_band.clone(), pan);
        for r in xs {
            let name = r.band_name().to_string();
            if rasters.insert(name.clone(), r).is_some() {
                return Err(Error::Schema(format!("duplicate band `{name}`")));
            }
        }
        let g = Granule {
            id: id.into(),
            rasters,
            pan_band,
            xs_bands,
            annotations,
            provenance: Vec::new(),
        };
        g.validate()?;
        Ok(g)
    }

    pub(crate) fn from_parts(
        id: String,
        rasters: BTreeMap<String, Raster>,
        pan_band: String,
        xs_bands: Vec<String>,
        annotations: Vec<Annotation>,
        provenance: Vec<ProvenanceRecord>,
    ) -> Result<Self> {
        let g = Granule {
            id,
            rasters,
            pan_band,
            xs_bands,
            annotations,
            provenance,
        };
        g.validate()?;
        Ok(g)
    }

    /// Checks the cross-band and annotation invariants.
    pub fn validate(&self) -> Result<()> {
        let pan = self.band(&self.pan_band)?;
        let ratio = self.pan_xs_ratio()?;
        let mut xs_dims = None;
        for name in &self.xs_bands {
            let xs = self.band(name)?;
            let dims = (xs.width(), xs.height());
            match xs_dims {
                None => xs_dims = Some(dims),
                Some(d) if d != dims => {
                    return Err(Error::Schema(format!(
                        "XS band `{name}` is {}x{}, expected {}x{}",
                        dims.0, dims.1, d.0, d.1
                    )))
                }
                _ => {}
            }
            if xs.width() * ratio != pan.width() || xs.height() * ratio != pan.height() {
                return Err(Error::Schema(format!(
                    "PAN {}x{} is not {ratio}x XS band `{name}` {}x{}",
                    pan.width(),
                    pan.height(),
                    xs.width(),
                    xs.height()
                )));
            }
        }
        let bounds = BBox::new(0.0, 0.0, pan.width() as f64, pan.height() as f64);
        for (i, a) in self.annotations.iter().enumerate() {
            if !a.bbox.is_valid() {
                return Err(Error::Schema(format!("annotation {i} has invalid box {:?}", a.bbox)));
            }
            if !bounds.contains(&a.bbox) {
                return Err(Error::Schema(format!(
                    "annotation {i} box {:?} outside PAN bounds {}x{}",
                    a.bbox,
                    pan.width(),
                    pan.height()
                )));
            }
        }
        Ok(())
    }

    pub fn band(&self, name: &str) -> Result<&Raster> {
        self.rasters
            .get(name)
            .ok_or_else(|| Error::MissingBand(name.to_string()))
    }

    pub fn has_band(&self, name: &str) -> bool {
        self.rasters.contains_key(name)
    }

    pub fn bands(&self) -> impl Iterator<Item = &Raster> {
        self.rasters.values()
    }

    pub fn band_names(&self) -> impl Iterator<Item = &str> {
        self.rasters.keys().map(String::as_str)
    }

    pub fn pan_band(&self) -> &str {
        &self.pan_band
    }

    pub fn xs_bands(&self) -> &[String] {
        &self.xs_bands
    }

    pub fn pan(&self) -> &Raster {
        &self.rasters[&self.pan_band]
    }

    pub fn xs(&self) -> Vec<&Raster> {
        self.xs_bands.iter().map(|n| &self.rasters[n]).collect()
    }

    /// PAN/XS linear size ratio; 1 when the granule holds no XS bands.
    pub fn pan_xs_ratio(&self) -> Result<usize> {
        let pan = self.band(&self.pan_band)?;
        let Some(first) = self.xs_bands.first() else {
            return Ok(1);
        };
        let xs = self.band(first)?;
        if xs.width() == 0 || pan.width() % xs.width() != 0 {
            return Err(Error::Schema(format!(
                "PAN width {} is not a multiple of XS width {}",
                pan.width(),
                xs.width()
            )));
        }
        Ok(pan.width() / xs.width())
    }

    /// Adds (or replaces) a band on either the PAN or XS grid.
    pub fn insert_band(&mut self, r: Raster) -> Result<()> {
        let pan = self.pan();
        let on_pan = r.same_dims(pan);
        let on_xs = self
            .xs_bands
            .first()
            .map(|n| r.same_dims(&self.rasters[n]))
            .unwrap_or(false);
        if !on_pan && !on_xs {
            return Err(Error::Schema(format!(
                "band `{}` ({}x{}) matches neither the PAN nor the XS grid",
                r.band_name(),
                r.width(),
                r.height()
            )));
        }
        self.rasters.insert(r.band_name().to_string(), r);
        Ok(())
    }

    pub fn provenance(&self) -> &[ProvenanceRecord] {
        &self.provenance
    }

    pub fn push_provenance(&mut self, rec: ProvenanceRecord) {
        self.provenance.push(rec);
    }

    /// Distinct class ids with their names, ordered by id.
    pub fn classes(&self) -> BTreeMap<u32, String> {
        self.annotations
            .iter()
            .map(|a| (a.class_id, a.class_name.clone()))
            .collect()
    }
}
