//! EDSW1 parity fixtures under `fixtures/edsr/<case>/`.

use std::path::{Path, PathBuf};

use rawsat_core::raster::Raster;
use rawsat_core::restore::{edsr_infer, load_weights};

pub const W: usize = 24;
pub const H: usize = 20;
pub const PATCHES: usize = 16;
pub const CASES: [&str; 2] = ["random", "zero"];

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/edsr")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn patches(v: &serde_json::Value) -> Vec<Vec<f64>> {
    v["patches"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect()
}

/// Largest output difference over all cases and patches, in normalised
/// units (divided by the weight file's radiometric_max).
pub fn parity_gap(dir: &Path) -> f64 {
    let mut gap: f64 = 0.0;
    for case in CASES {
        let d = dir.join(case);
        let wts = load_weights(&d.join("weights.edsw")).unwrap();
        let inputs = patches(&read_json(&d.join("input.json")));
        let expected = patches(&read_json(&d.join("expected.json")));
        assert_eq!(inputs.len(), PATCHES);
        assert_eq!(expected.len(), PATCHES);
        let rmax = f64::from(wts.radiometric_max);
        for (input, want) in inputs.iter().zip(&expected) {
            let r = Raster::new("PAN", W, H, 1.0, input.iter().map(|&v| v as f32).collect()).unwrap();
            let out = edsr_infer(&r, &wts).unwrap();
            assert_eq!(want.len(), out.values().len());
            for (a, b) in out.values().iter().zip(want) {
                gap = gap.max((f64::from(*a) - b).abs() / rmax);
            }
        }
    }
    gap
}
