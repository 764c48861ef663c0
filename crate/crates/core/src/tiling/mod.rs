//! Fixed-size patch extraction for detection datasets.
//!
//! Two modes: a plain grid over the granule, and one patch per annotation
//! with the object near the patch center. Tile labels are stored in patch
//! pixel coordinates as `f64`, so `label + origin` recovers the granule box.

mod classes;
mod export;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pansharp::pansharp_bands;
use crate::raster::{Annotation, BBox, Granule, Raster};
use crate::rng::{stream_from_label, substream, Rng};

pub use classes::{filter_classes, filter_classes_many, ClassFilter, ClassRemap};
pub use export::{
    export_dataset, read_labels, read_manifest, DatasetManifest, ExportOptions, SplitCounts,
    TileEntry, MANIFEST_FILE,
};

pub const MIN_PATCH_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TileMode {
    Grid,
    ObjectCentered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileSpec {
    pub patch_size: usize,
    pub mode: TileMode,
    pub offset_fraction: f64,
    /// Grid mode only: keep a clipped annotation when
    /// `clipped_area / area >= min_visibility`.
    pub min_visibility: f64,
    pub seed: u64,
    /// Bands cut into each tile. Defaults to the pansharpened bands when
    /// present, otherwise the PAN band.
    pub bands: Option<Vec<String>>,
}

impl Default for TileSpec {
    fn default() -> Self {
        TileSpec {
            patch_size: 256,
            mode: TileMode::Grid,
            offset_fraction: 0.3,
            min_visibility: 1.0,
            seed: 0,
            bands: None,
        }
    }
}

impl TileSpec {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size < MIN_PATCH_SIZE {
            return Err(Error::Config(format!(
                "patch_size {} below minimum {MIN_PATCH_SIZE}",
                self.patch_size
            )));
        }
        if !(0.0..1.0).contains(&self.offset_fraction) {
            return Err(Error::Config(format!(
                "offset_fraction {} outside [0, 1)",
                self.offset_fraction
            )));
        }
        if !(self.min_visibility > 0.0 && self.min_visibility <= 1.0) {
            return Err(Error::Config(format!(
                "min_visibility {} outside (0, 1]",
                self.min_visibility
            )));
        }
        Ok(())
    }

    fn band_names(&self, g: &Granule) -> Vec<String> {
        match &self.bands {
            Some(b) => b.clone(),
            None => {
                let ps = pansharp_bands(g);
                if !ps.is_empty() && ps.iter().all(|b| g.has_band(b)) {
                    ps
                } else {
                    vec![g.pan_band().to_string()]
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub image: Vec<Raster>,
    pub origin: (usize, usize),
    pub labels: Vec<Annotation>,
    pub source_granule: String,
    /// Object-centered mode: index of the annotation the tile was built for.
    pub seed_annotation: Option<usize>,
}

impl Tile {
    pub fn patch_size(&self) -> usize {
        self.image.first().map_or(0, Raster::width)
    }

    pub fn bbox(&self) -> BBox {
        let p = self.patch_size() as f64;
        let (x0, y0) = (self.origin.0 as f64, self.origin.1 as f64);
        BBox::new(x0, y0, x0 + p, y0 + p)
    }

    /// Label boxes mapped back to granule pixel coordinates.
    pub fn labels_in_granule(&self) -> Vec<Annotation> {
        let (x0, y0) = (self.origin.0 as f64, self.origin.1 as f64);
        self.labels
            .iter()
            .map(|a| Annotation {
                bbox: a.bbox.translate(x0, y0),
                ..a.clone()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingWarning {
    pub granule: String,
    pub annotation: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TileSet {
    pub tiles: Vec<Tile>,
    pub warnings: Vec<TilingWarning>,
}

fn tile_bands<'a>(g: &'a Granule, spec: &TileSpec) -> Result<Vec<&'a Raster>> {
    let names = spec.band_names(g);
    let bands: Vec<&Raster> = names.iter().map(|n| g.band(n)).collect::<Result<_>>()?;
    let pan = g.pan();
    if let Some(b) = bands.iter().find(|b| !b.same_dims(pan)) {
        return Err(Error::InvalidArgument(format!(
            "tile band `{}` is not on the PAN grid",
            b.band_name()
        )));
    }
    if spec.patch_size > pan.width() || spec.patch_size > pan.height() {
        return Err(Error::InvalidArgument(format!(
            "patch_size {} exceeds granule `{}` size {}x{}",
            spec.patch_size,
            g.id,
            pan.width(),
            pan.height()
        )));
    }
    Ok(bands)
}

fn crop_all(bands: &[&Raster], x0: usize, y0: usize, p: usize) -> Result<Vec<Raster>> {
    bands.iter().map(|b| b.crop(x0, y0, p, p)).collect()
}

/// Patch origins along one axis: multiples of `p`, plus one remainder patch
/// anchored at `n - p` when `p` does not divide `n`.
pub fn grid_origins(n: usize, p: usize) -> Vec<usize> {
    let mut o: Vec<usize> = (0..n / p).map(|i| i * p).collect();
    if n % p != 0 {
        o.push(n - p);
    }
    o
}

pub fn tile_grid(g: &Granule, spec: &TileSpec) -> Result<TileSet> {
    spec.validate()?;
    let bands = tile_bands(g, spec)?;
    let p = spec.patch_size;
    let xs = grid_origins(g.pan().width(), p);
    let ys = grid_origins(g.pan().height(), p);
    let origins: Vec<(usize, usize)> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    let tiles = origins
        .par_iter()
        .map(|&(x0, y0)| {
            let window = BBox::new(x0 as f64, y0 as f64, (x0 + p) as f64, (y0 + p) as f64);
            let labels = g
                .annotations
                .iter()
                .filter_map(|a| {
                    let clipped = a.bbox.intersection(&window)?;
                    let area = a.bbox.area();
                    (area > 0.0 && clipped.area() / area >= spec.min_visibility).then(|| Annotation {
                        bbox: clipped.translate(-window.xmin, -window.ymin),
                        ..a.clone()
                    })
                })
                .collect();
            Ok(Tile {
                image: crop_all(&bands, x0, y0, p)?,
                origin: (x0, y0),
                labels,
                source_granule: g.id.clone(),
                seed_annotation: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TileSet {
        tiles,
        warnings: Vec::new(),
    })
}

/// Integer patch origin along one axis for an object spanning `[lo, hi]`.
///
/// The unclamped origin is `floor(center + offset - p/2)`. It is then clamped
/// to the range that keeps the whole object inside the patch, and finally
/// to the granule. Both ranges intersect whenever `ceil(hi) - floor(lo) <= p`.
pub fn centered_origin(lo: f64, hi: f64, offset: f64, p: usize, n: usize) -> usize {
    let pf = p as f64;
    let raw = (0.5 * (lo + hi) + offset - 0.5 * pf).floor();
    let keep_lo = hi.ceil() - pf;
    let keep_hi = lo.floor();
    let o = raw.clamp(keep_lo, keep_hi).clamp(0.0, (n - p) as f64);
    o as usize
}

/// Whether an annotation can be fully contained in an integer-aligned patch.
pub fn fits_in_patch(b: &BBox, p: usize) -> bool {
    b.xmax.ceil() - b.xmin.floor() <= p as f64 && b.ymax.ceil() - b.ymin.floor() <= p as f64
}

/// RNG stream for the offset draw of annotation `index` in granule `id`.
pub fn annotation_stream(granule_id: &str, index: usize) -> u64 {
    substream(stream_from_label(granule_id), index as u64)
}

pub fn tile_object_centered(g: &Granule, spec: &TileSpec) -> Result<TileSet> {
    spec.validate()?;
    let bands = tile_bands(g, spec)?;
    let p = spec.patch_size;
    let (w, h) = (g.pan().width(), g.pan().height());
    let bounds = BBox::new(0.0, 0.0, w as f64, h as f64);
    let half = spec.offset_fraction * p as f64;

    let results: Vec<std::result::Result<Tile, TilingWarning>> = g
        .annotations
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let warn = |reason: String| TilingWarning {
                granule: g.id.clone(),
                annotation: i,
                reason,
            };
            if !a.bbox.is_valid() || !bounds.contains(&a.bbox) {
                return Err(warn("annotation box invalid or outside the granule".into()));
            }
            if !fits_in_patch(&a.bbox, p) {
                return Err(warn(format!(
                    "annotation {:.1}x{:.1} px does not fit in a {p} px patch",
                    a.bbox.width(),
                    a.bbox.height()
                )));
            }
            let mut rng = Rng::new(spec.seed, annotation_stream(&g.id, i));
            let dx = rng.uniform(-half, half);
            let dy = rng.uniform(-half, half);
            let x0 = centered_origin(a.bbox.xmin, a.bbox.xmax, dx, p, w);
            let y0 = centered_origin(a.bbox.ymin, a.bbox.ymax, dy, p, h);
            let window = BBox::new(x0 as f64, y0 as f64, (x0 + p) as f64, (y0 + p) as f64);
            let labels = g
                .annotations
                .iter()
                .filter(|b| window.contains(&b.bbox))
                .map(|b| Annotation {
                    bbox: b.bbox.translate(-window.xmin, -window.ymin),
                    ..b.clone()
                })
                .collect();
            let image = crop_all(&bands, x0, y0, p).map_err(|e| warn(e.to_string()))?;
            Ok(Tile {
                image,
                origin: (x0, y0),
                labels,
                source_granule: g.id.clone(),
                seed_annotation: Some(i),
            })
        })
        .collect();

    let mut set = TileSet::default();
    for r in results {
        match r {
            Ok(t) => set.tiles.push(t),
            Err(w) => {
                log::warn!("tiling {}: annotation {}: {}", w.granule, w.annotation, w.reason);
                set.warnings.push(w);
            }
        }
    }
    Ok(set)
}

pub fn tile_granule(g: &Granule, spec: &TileSpec) -> Result<TileSet> {
    match spec.mode {
        TileMode::Grid => tile_grid(g, spec),
        TileMode::ObjectCentered => tile_object_centered(g, spec),
    }
}
