//! Partial observations of full meshes: virtual range scans, rectangular
//! holes, hyperplane cuts and correspondence corruption, plus the synthetic
//! deformable family used for training.

mod family;

use alloc::vec::Vec;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{atan2, ceil, cross3, dot3, norm3, sub3};
use crate::mesh::{centroid, shape_radius, Correspondence, Mesh};
use crate::rng::{seeded, unit_vector};

pub use family::{
    deform, generate_family, sample_params, Family, FamilyMember, HoldoutBand, Param, Range, ShapeFamilyConfig,
    ShapeParams, Template,
};

/// Where a virtual scanner sits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Viewpoint {
    /// Perspective scanner at a point.
    Position { at: [f64; 3] },
    /// Scanner at infinity looking along `-towards`; rays are parallel.
    Direction { towards: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Provenance {
    VirtualScan {
        viewpoint: Viewpoint,
    },
    Patches {
        count: usize,
        w_frac: f64,
        h_frac: f64,
        seed: u64,
    },
    Hyperplane {
        normal: [f64; 3],
        seed: Option<u64>,
    },
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub fraction: f64,
    pub seed: u64,
    /// Number of pairs whose reference index was shuffled.
    pub shuffled: usize,
}

/// A partial point set `Y` with its correspondence into the reference
/// topology. `ground_truth` is never altered; `correspondence` is what a
/// completion run consumes and may be corrupted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialShape {
    pub points: Vec<[f64; 3]>,
    pub correspondence: Correspondence,
    pub ground_truth: Correspondence,
    /// Per reference vertex: observed or not.
    pub mask: Vec<bool>,
    pub provenance: Provenance,
    pub corruption: Option<Corruption>,
}

impl PartialShape {
    /// Keeps the vertices flagged in `mask`, in index order, with exact
    /// correspondence.
    pub fn from_mask(mesh: &Mesh, mask: Vec<bool>, provenance: Provenance) -> Result<Self> {
        if mask.len() != mesh.vertex_count() {
            return Err(Error::DimensionMismatch {
                expected: mesh.vertex_count(),
                got: mask.len(),
            });
        }
        let kept: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        if kept.is_empty() {
            return Err(Error::EmptyPartial);
        }
        let points = kept.iter().map(|&i| mesh.vertices()[i]).collect();
        let corr = Correspondence::new(kept.iter().enumerate().map(|(k, &i)| (k, i)).collect(), None)?;
        Ok(Self {
            points,
            correspondence: corr.clone(),
            ground_truth: corr,
            mask,
            provenance,
            corruption: None,
        })
    }

    /// Every vertex observed.
    pub fn full(mesh: &Mesh) -> Result<Self> {
        Self::from_mask(mesh, alloc::vec![true; mesh.vertex_count()], Provenance::Full)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn seen_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Generalized winding number of `p` with respect to a closed mesh:
/// about 1 inside, 0 outside.
pub fn winding_number(mesh: &Mesh, p: [f64; 3]) -> f64 {
    let v = mesh.vertices();
    let mut total = 0.0;
    for f in mesh.faces() {
        let a = sub3(v[f[0]], p);
        let b = sub3(v[f[1]], p);
        let c = sub3(v[f[2]], p);
        let (la, lb, lc) = (norm3(a), norm3(b), norm3(c));
        let num = dot3(a, cross3(b, c));
        let den = la * lb * lc + dot3(a, b) * lc + dot3(b, c) * la + dot3(c, a) * lb;
        total += 2.0 * atan2(num, den);
    }
    total / (4.0 * core::f64::consts::PI)
}

/// Parameter `t` along `origin + t·dir` where the ray meets triangle
/// `(a, b, c)`, if it does. Edges count as hits.
fn ray_triangle(origin: [f64; 3], dir: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Option<f64> {
    let e1 = sub3(b, a);
    let e2 = sub3(c, a);
    let p = cross3(dir, e2);
    let det = dot3(e1, p);
    let scale = norm3(e1) * norm3(e2) * norm3(dir);
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv = 1.0 / det;
    let s = sub3(origin, a);
    let u = dot3(s, p) * inv;
    let tol = 1e-12;
    if u < -tol || u > 1.0 + tol {
        return None;
    }
    let q = cross3(s, e1);
    let w = dot3(dir, q) * inv;
    if w < -tol || u + w > 1.0 + tol {
        return None;
    }
    Some(dot3(e2, q) * inv)
}

/// Visibility mask from `viewpoint`: a vertex is seen when the segment from
/// the scanner to it crosses no triangle, ignoring triangles that contain
/// the vertex and hits within `1e-6 · radius` of it.
pub fn visibility_mask(mesh: &Mesh, viewpoint: Viewpoint) -> Result<Vec<bool>> {
    let verts = mesh.vertices();
    let radius = shape_radius(mesh).max(f64::MIN_POSITIVE);
    let eps = 1e-6 * radius;
    if let Viewpoint::Position { at } = viewpoint {
        if !at.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidConfig("viewpoint must be finite".into()));
        }
        if winding_number(mesh, at).abs() > 0.5 {
            return Err(Error::ViewpointInside);
        }
    }
    let far = 4.0 * radius + norm3(sub3(mesh.centroid(), [0.0; 3]));
    let mut mask = Vec::with_capacity(verts.len());
    for (i, &v) in verts.iter().enumerate() {
        let origin = match viewpoint {
            Viewpoint::Position { at } => at,
            Viewpoint::Direction { towards } => {
                let n = norm3(towards);
                if !(n > 0.0) || !n.is_finite() {
                    return Err(Error::InvalidConfig("view direction must be non-zero".into()));
                }
                let d = [towards[0] / n, towards[1] / n, towards[2] / n];
                [v[0] + far * d[0], v[1] + far * d[1], v[2] + far * d[2]]
            }
        };
        let dir = sub3(v, origin);
        let len = norm3(dir);
        let t_max = 1.0 - eps / len.max(f64::MIN_POSITIVE);
        let occluded = mesh.faces().iter().any(|f| {
            if f.contains(&i) {
                return false;
            }
            matches!(
                ray_triangle(origin, dir, verts[f[0]], verts[f[1]], verts[f[2]]),
                Some(t) if t > 0.0 && t < t_max
            )
        });
        mask.push(!occluded);
    }
    Ok(mask)
}

pub fn virtual_scan(mesh: &Mesh, viewpoint: Viewpoint) -> Result<PartialShape> {
    let mask = visibility_mask(mesh, viewpoint)?;
    PartialShape::from_mask(mesh, mask, Provenance::VirtualScan { viewpoint })
}

/// `count` scanner positions on a horizontal circle around the shape,
/// equally spaced in azimuth, at `distance` shape radii from the centroid.
pub fn ring_viewpoints(mesh: &Mesh, count: usize, distance: f64, elevation: f64) -> Vec<Viewpoint> {
    let c = mesh.centroid();
    let r = distance * shape_radius(mesh);
    (0..count)
        .map(|k| {
            let phi = 2.0 * core::f64::consts::PI * k as f64 / count as f64;
            Viewpoint::Position {
                at: [
                    c[0] + r * crate::math::cos(phi),
                    c[1] + r * crate::math::sin(phi),
                    c[2] + elevation * r,
                ],
            }
        })
        .collect()
}

/// Principal directions of the vertex cloud, largest variance first.
pub fn principal_axes(points: &[[f64; 3]]) -> [[f64; 3]; 3] {
    let c = centroid(points);
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = nalgebra::Vector3::new(p[0] - c[0], p[1] - c[1], p[2] - c[2]);
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order.map(|k| {
        let col = eig.eigenvectors.column(k);
        [col[0], col[1], col[2]]
    })
}

/// Removes the vertices inside `count` rectangles of size
/// `w_frac·W × h_frac·H` placed uniformly inside the extent of the two
/// dominant principal directions. Rectangles may overlap.
pub fn remove_patches(mesh: &Mesh, count: usize, w_frac: f64, h_frac: f64, seed: u64) -> Result<PartialShape> {
    if !(0.0..=1.0).contains(&w_frac) || !(0.0..=1.0).contains(&h_frac) {
        return Err(Error::InvalidConfig("patch fractions must lie in [0, 1]".into()));
    }
    let verts = mesh.vertices();
    let c = mesh.centroid();
    let axes = principal_axes(verts);
    let coords: Vec<[f64; 2]> = verts
        .iter()
        .map(|v| {
            let d = sub3(*v, c);
            [dot3(d, axes[0]), dot3(d, axes[1])]
        })
        .collect();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &coords {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let size = [w_frac * (hi[0] - lo[0]), h_frac * (hi[1] - lo[1])];
    if !(size[0] >= 0.0 && size[1] >= 0.0) {
        return Err(Error::Degenerate);
    }
    let mut rng = seeded(seed);
    let mut mask = alloc::vec![true; verts.len()];
    for _ in 0..count {
        let mut corner = [0.0; 2];
        for k in 0..2 {
            let slack = hi[k] - lo[k] - size[k];
            corner[k] = lo[k] + if slack > 0.0 { rng.random_range(0.0..slack) } else { 0.0 };
        }
        for (m, p) in mask.iter_mut().zip(&coords) {
            let inside = (0..2).all(|k| p[k] >= corner[k] && p[k] <= corner[k] + size[k]);
            if inside {
                *m = false;
            }
        }
    }
    PartialShape::from_mask(
        mesh,
        mask,
        Provenance::Patches {
            count,
            w_frac,
            h_frac,
            seed,
        },
    )
}

fn canonically_positive(n: [f64; 3]) -> bool {
    n.iter().find(|x| **x != 0.0).is_some_and(|x| *x > 0.0)
}

/// Keeps the vertices on the positive side of the plane through the vertex
/// centroid with the given normal. Vertices exactly on the plane go to the
/// side whose normal has a positive first non-zero component, so opposite
/// normals produce complementary masks.
pub fn hyperplane_cut_with_normal(mesh: &Mesh, normal: [f64; 3]) -> Result<PartialShape> {
    let c = mesh.centroid();
    let keep_ties = canonically_positive(normal);
    if norm3(normal) == 0.0 || !normal.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidConfig("cut normal must be finite and non-zero".into()));
    }
    let mask = mesh
        .vertices()
        .iter()
        .map(|v| {
            let s = dot3(sub3(*v, c), normal);
            s > 0.0 || (s == 0.0 && keep_ties)
        })
        .collect();
    PartialShape::from_mask(mesh, mask, Provenance::Hyperplane { normal, seed: None })
}

/// Cut through the centroid with a uniformly random normal.
pub fn hyperplane_cut(mesh: &Mesh, seed: u64) -> Result<PartialShape> {
    let normal = unit_vector(&mut seeded(seed));
    let mut ps = hyperplane_cut_with_normal(mesh, normal)?;
    ps.provenance = Provenance::Hyperplane {
        normal,
        seed: Some(seed),
    };
    Ok(ps)
}

/// Number of pairs touched by a corruption of `fraction` of `len` pairs.
pub fn corrupted_count(fraction: f64, len: usize) -> usize {
    let exact = fraction * len as f64;
    (ceil(exact - 1e-9 * exact.max(1.0)).max(0.0) as usize).min(len)
}

/// Shuffles the reference indices of a uniformly chosen
/// `⌈fraction · P⌉`-subset of the working correspondence among
/// themselves. Ground truth is left as it was.
pub fn corrupt_correspondence(ps: &PartialShape, fraction: f64, seed: u64) -> Result<PartialShape> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidConfig("corruption fraction must lie in [0, 1]".into()));
    }
    let mut rng = seeded(seed);
    let mut pairs = ps.correspondence.pairs().to_vec();
    let k = corrupted_count(fraction, pairs.len());
    let mut positions: Vec<usize> = (0..pairs.len()).collect();
    positions.shuffle(&mut rng);
    positions.truncate(k);
    positions.sort_unstable();
    let mut targets: Vec<usize> = positions.iter().map(|&p| pairs[p].1).collect();
    targets.shuffle(&mut rng);
    for (&p, t) in positions.iter().zip(targets) {
        pairs[p].1 = t;
    }
    let weights = ps.correspondence.weights().map(<[f64]>::to_vec);
    let mut out = ps.clone();
    out.correspondence = Correspondence::new(pairs, weights)?;
    out.corruption = Some(Corruption {
        fraction,
        seed,
        shuffled: k,
    });
    Ok(out)
}

/// Correspondence noise levels used for the face experiments.
pub const CORRUPTION_PRESETS: [f64; 2] = [0.05, 0.30];
