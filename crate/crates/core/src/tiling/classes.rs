//! Class selection and dense re-indexing.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Granule, ProvenanceRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassFilter {
    Keep(Vec<u32>),
    /// Keep the `k` classes with the largest median box area.
    TopKByArea(usize),
}

/// Old class id -> new dense id, plus the new id -> name table.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassRemap {
    pub old_to_new: BTreeMap<u32, u32>,
    pub names: BTreeMap<u32, String>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Computes one remap over all granules and applies it to each, so class ids
/// agree across a dataset.
pub fn filter_classes_many(gs: &[Granule], filter: &ClassFilter) -> Result<(Vec<Granule>, ClassRemap)> {
    let mut areas: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut names: BTreeMap<u32, String> = BTreeMap::new();
    for g in gs {
        for a in &g.annotations {
            areas.entry(a.class_id).or_default().push(a.bbox.area());
            names.entry(a.class_id).or_insert_with(|| a.class_name.clone());
        }
    }
    let kept: BTreeSet<u32> = match filter {
        ClassFilter::Keep(ids) => {
            let unknown: Vec<u32> = ids.iter().copied().filter(|c| !areas.contains_key(c)).collect();
            if !unknown.is_empty() {
                return Err(Error::UnknownClasses(unknown));
            }
            ids.iter().copied().collect()
        }
        ClassFilter::TopKByArea(k) => {
            let mut ranked: Vec<(f64, u32)> = areas
                .iter_mut()
                .map(|(c, v)| (median(v), *c))
                .collect();
            // largest median first; ties by ascending class id
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            ranked.into_iter().take(*k).map(|(_, c)| c).collect()
        }
    };
    let mut remap = ClassRemap::default();
    for (new, old) in kept.iter().enumerate() {
        remap.old_to_new.insert(*old, new as u32);
        remap.names.insert(new as u32, names[old].clone());
    }
    if kept.is_empty() {
        log::warn!("class filter {filter:?} keeps no classes");
    }

    let out = gs
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.annotations = g
                .annotations
                .into_iter()
                .filter_map(|mut a| {
                    let new = *remap.old_to_new.get(&a.class_id)?;
                    a.class_id = new;
                    Some(a)
                })
                .collect();
            g.push_provenance(ProvenanceRecord::new(
                "filter_classes",
                serde_json::json!({ "filter": filter, "remap": remap }),
                None,
            ));
            g
        })
        .collect();
    Ok((out, remap))
}

pub fn filter_classes(g: &Granule, filter: &ClassFilter) -> Result<(Granule, ClassRemap)> {
    let (mut v, remap) = filter_classes_many(std::slice::from_ref(g), filter)?;
    Ok((v.remove(0), remap))
}
