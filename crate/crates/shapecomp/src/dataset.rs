//! On-disk layout of a generated shape family:
//! `template.obj`, `train/NNNN.obj`, `test/NNNN.obj` and `family.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shapecomp_core::mesh::Mesh;
use shapecomp_core::partial::{Family, ShapeFamilyConfig, ShapeParams};

use crate::error::{Error, Result};
use crate::fs::{create_dir, write_json};
use crate::mesh_io::{load_mesh, save_mesh};

pub const TEMPLATE_FILE: &str = "template.obj";
pub const FAMILY_FILE: &str = "family.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRecord {
    pub config: ShapeFamilyConfig,
    pub train: Vec<ShapeParams>,
    pub test: Vec<ShapeParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Writes every member and returns the paths written.
pub fn write_family(family: &Family, config: &ShapeFamilyConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = vec![dir.join(TEMPLATE_FILE)];
    save_mesh(&family.template, &written[0])?;
    for (split, members) in [(Split::Train, &family.train), (Split::Test, &family.test)] {
        let sub = dir.join(split.dir_name());
        create_dir(&sub)?;
        for (k, m) in members.iter().enumerate() {
            let path = sub.join(format!("{k:04}.obj"));
            save_mesh(&m.mesh, &path)?;
            written.push(path);
        }
    }
    let record = FamilyRecord {
        config: config.clone(),
        train: family.train.iter().map(|m| m.params).collect(),
        test: family.test.iter().map(|m| m.params).collect(),
    };
    let path = dir.join(FAMILY_FILE);
    write_json(&path, &record)?;
    written.push(path);
    Ok(written)
}

/// Mesh files of a directory in name order.
pub fn mesh_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("obj" | "ply")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_meshes(files: &[PathBuf]) -> Result<Vec<Mesh>> {
    files.iter().map(|p| load_mesh(p)).collect()
}

/// Meshes of one split of a family directory, or of a plain directory of
/// meshes when it has no split subdirectories.
pub fn load_split(dir: &Path, split: Split) -> Result<(Vec<PathBuf>, Vec<Mesh>)> {
    let sub = dir.join(split.dir_name());
    let files = mesh_files(if sub.is_dir() { &sub } else { dir })?;
    if files.is_empty() {
        return Err(Error::format(dir, format!("no {} meshes found", split.dir_name())));
    }
    let meshes = load_meshes(&files)?;
    if let Some(bad) = meshes.iter().position(|m| !m.same_topology(&meshes[0])) {
        return Err(Error::format(&files[bad], "topology differs from the first mesh"));
    }
    Ok((files, meshes))
}
