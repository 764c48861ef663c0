//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! The page holds one synthetic scene and re-renders it on every slider
//! change: degradation (MTF, noise, optional Wiener restoration), Brovey
//! fusion with adjustable weights, and tile layouts over the annotations.
//! Everything below compiles natively too so the logic can be unit tested.

use rawsat_core::pansharp::{pansharp_bands, pansharpen_granule, BroveyWeights};
use rawsat_core::preview::{stretch, to_rgba8};
use rawsat_core::raster::{Granule, Raster};
use rawsat_core::restore::{restore_granule, Nsr, RestoreMethod, RESTORED_PAN};
use rawsat_core::sensor::{self, DegradationConfig, MtfSpec, NoiseSpec, PerBand};
use rawsat_core::synth::{synth_granule, SceneSpec};
use rawsat_core::tiling::{tile_granule, TileMode, TileSpec};
use wasm_bindgen::prelude::*;

/// An RGBA image handed to a canvas `ImageData`.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Frame {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl Frame {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Copies the pixels out as a `Uint8Array`.
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

fn render(bands: &[&Raster]) -> rawsat_core::Result<Frame> {
    let (lo, hi) = stretch(bands);
    Ok(Frame {
        width: bands[0].width() as u32,
        height: bands[0].height() as u32,
        rgba: to_rgba8(bands, lo, hi)?,
    })
}

fn js(e: rawsat_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    scene: Granule,
}

impl Demo {
    pub fn build(size: usize, objects: usize, seed: u64) -> rawsat_core::Result<Demo> {
        let spec = SceneSpec {
            id: "demo".into(),
            width: size,
            height: size,
            n_objects: objects,
            size_max: (size as f64 / 4.0).min(60.0),
            seed,
            ..SceneSpec::default()
        };
        Ok(Demo {
            scene: synth_granule(&spec)?,
        })
    }

    pub fn scene(&self) -> &Granule {
        &self.scene
    }

    /// Degraded PAN band, or its Wiener restoration when `restore` is set.
    pub fn degraded(
        &self,
        factor: usize,
        mtf: f64,
        dark_snr: f64,
        bright_snr: f64,
        restore: bool,
        seed: u64,
    ) -> rawsat_core::Result<Frame> {
        let cfg = DegradationConfig {
            pre_downsample_factor: factor,
            mtf: PerBand::uniform(MtfSpec::new(mtf)),
            noise: PerBand::uniform(NoiseSpec::Anchors {
                dark: [10.0, dark_snr],
                bright: [1000.0, bright_snr],
            }),
            seed,
            ..DegradationConfig::default()
        };
        let raw = sensor::degrade(&self.scene, &cfg)?;
        if restore {
            let r = restore_granule(&raw, &RestoreMethod::Wiener { nsr: Nsr::default() })?;
            render(&[r.band(RESTORED_PAN)?])
        } else {
            render(&[raw.pan()])
        }
    }

    /// Brovey fusion of the scene's own PAN and XS bands.
    pub fn fused(&self, weights: &[f64]) -> rawsat_core::Result<Frame> {
        let w = BroveyWeights(weights.to_vec());
        let g = pansharpen_granule(&self.scene, Some(&w), false)?;
        let names = pansharp_bands(&g);
        let bands = names.iter().take(3).map(|n| g.band(n)).collect::<rawsat_core::Result<Vec<_>>>()?;
        render(&bands)
    }

    /// Tile rectangles as flat `[x, y, size, n_labels, ...]`.
    pub fn tile_layout(
        &self,
        patch_size: usize,
        object_centered: bool,
        offset_fraction: f64,
        seed: u64,
    ) -> rawsat_core::Result<Vec<f64>> {
        let spec = TileSpec {
            patch_size,
            mode: if object_centered { TileMode::ObjectCentered } else { TileMode::Grid },
            offset_fraction,
            seed,
            bands: Some(vec![self.scene.pan_band().to_string()]),
            ..TileSpec::default()
        };
        let set = tile_granule(&self.scene, &spec)?;
        Ok(set
            .tiles
            .iter()
            .flat_map(|t| [t.origin.0 as f64, t.origin.1 as f64, patch_size as f64, t.labels.len() as f64])
            .collect())
    }

    /// Annotation boxes as flat `[xmin, ymin, xmax, ymax, ...]` in PAN pixels.
    pub fn box_coords(&self) -> Vec<f64> {
        self.scene
            .annotations
            .iter()
            .flat_map(|a| [a.bbox.xmin, a.bbox.ymin, a.bbox.xmax, a.bbox.ymax])
            .collect()
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, objects: usize, seed: u64) -> Result<Demo, JsError> {
        Demo::build(size, objects, seed).map_err(js)
    }

    pub fn pan(&self) -> Result<Frame, JsError> {
        render(&[self.scene.pan()]).map_err(js)
    }

    pub fn degrade(
        &self,
        factor: usize,
        mtf: f64,
        dark_snr: f64,
        bright_snr: f64,
        restore: bool,
        seed: u64,
    ) -> Result<Frame, JsError> {
        self.degraded(factor, mtf, dark_snr, bright_snr, restore, seed).map_err(js)
    }

    pub fn pansharpen(&self, weights: Vec<f64>) -> Result<Frame, JsError> {
        self.fused(&weights).map_err(js)
    }

    pub fn tiles(
        &self,
        patch_size: usize,
        object_centered: bool,
        offset_fraction: f64,
        seed: u64,
    ) -> Result<Vec<f64>, JsError> {
        self.tile_layout(patch_size, object_centered, offset_fraction, seed).map_err(js)
    }

    pub fn boxes(&self) -> Vec<f64> {
        self.box_coords()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> Demo {
        Demo::build(128, 4, 5).unwrap()
    }

    #[test]
    fn degrade_frame_matches_reduced_grid() {
        let d = demo();
        let f = d.degraded(2, 0.3, 20.0, 200.0, false, 1).unwrap();
        assert_eq!((f.width, f.height), (64, 64));
        assert_eq!(f.rgba.len(), 64 * 64 * 4);
        let r = d.degraded(2, 0.3, 20.0, 200.0, true, 1).unwrap();
        assert_eq!(r.rgba.len(), f.rgba.len());
        assert_ne!(r.rgba, f.rgba);
        assert!(d.degraded(2, 1.5, 20.0, 200.0, false, 1).is_err());
    }

    #[test]
    fn fused_is_rgb_at_pan_size() {
        let d = demo();
        let f = d.fused(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((f.width, f.height), (128, 128));
        assert!(f.rgba.chunks(4).all(|p| p[3] == 255));
        assert!(d.fused(&[1.0]).is_err());
    }

    #[test]
    fn tiles_cover_annotations() {
        let d = demo();
        let grid = d.tile_layout(32, false, 0.3, 0).unwrap();
        assert_eq!(grid.len(), 4 * 16);
        let centered = d.tile_layout(48, true, 0.3, 0).unwrap();
        assert_eq!(centered.len() / 4, d.scene().annotations.len() - count_too_big(&d, 48));
        assert_eq!(d.box_coords().len(), 4 * d.scene().annotations.len());
    }

    fn count_too_big(d: &Demo, p: usize) -> usize {
        d.scene()
            .annotations
            .iter()
            .filter(|a| !rawsat_core::tiling::fits_in_patch(&a.bbox, p))
            .count()
    }
}
