//! Partial shapes on disk: the point set as ASCII PLY plus a JSON sidecar
//! `<file>.json` carrying correspondences, mask and provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shapecomp_core::mesh::Correspondence;
use shapecomp_core::partial::{Corruption, PartialShape, Provenance};

use crate::error::{Error, Result};
use crate::fs::{read_json, with_suffix, write_json};
use crate::mesh_io::{load_points, save_points};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialSidecar {
    pub correspondence: Correspondence,
    pub ground_truth: Correspondence,
    pub mask: Vec<bool>,
    pub provenance: Provenance,
    pub corruption: Option<Corruption>,
}

pub fn partial_sidecar_path(points: &Path) -> PathBuf {
    with_suffix(points, ".json")
}

pub fn save_partial(ps: &PartialShape, path: &Path) -> Result<()> {
    save_points(&ps.points, path)?;
    write_json(
        &partial_sidecar_path(path),
        &PartialSidecar {
            correspondence: ps.correspondence.clone(),
            ground_truth: ps.ground_truth.clone(),
            mask: ps.mask.clone(),
            provenance: ps.provenance,
            corruption: ps.corruption,
        },
    )
}

pub fn load_partial(path: &Path) -> Result<PartialShape> {
    let points = load_points(path)?;
    let sidecar_file = partial_sidecar_path(path);
    let side: PartialSidecar = read_json(&sidecar_file)?;
    for corr in [&side.correspondence, &side.ground_truth] {
        corr.validate()
            .and_then(|_| corr.check_bounds(points.len(), side.mask.len()))
            .map_err(|e| Error::format(&sidecar_file, e.to_string()))?;
    }
    Ok(PartialShape {
        points,
        correspondence: side.correspondence,
        ground_truth: side.ground_truth,
        mask: side.mask,
        provenance: side.provenance,
        corruption: side.corruption,
    })
}
