//! Rigid motions and weighted least-squares alignment.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `p ↦ R p + t` with `R` a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    /// Row-major rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        translation: [0.0; 3],
    };

    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = rotation[(i, j)];
            }
        }
        Self {
            rotation: r,
            translation: [translation.x, translation.y, translation.z],
        }
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self {
            translation: t,
            ..Self::IDENTITY
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let mut out = self.translation;
        for (i, o) in out.iter_mut().enumerate() {
            *o += r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2];
        }
        out
    }

    pub fn apply_all(&self, points: &[[f64; 3]]) -> Vec<[f64; 3]> {
        points.iter().map(|&p| self.apply(p)).collect()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation_matrix().transpose();
        let t = -(rt * Vector3::from(self.translation));
        Self::from_parts(rt, t)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        let r = self.rotation_matrix() * other.rotation_matrix();
        let t = Vector3::from(self.apply(other.translation));
        Self::from_parts(r, t)
    }

    /// `‖RᵀR − I‖` (Frobenius) and `det R`.
    pub fn orthogonality(&self) -> (f64, f64) {
        let r = self.rotation_matrix();
        ((r.transpose() * r - Matrix3::identity()).norm(), r.determinant())
    }

    pub fn is_rotation(&self, tol: f64) -> bool {
        let (err, det) = self.orthogonality();
        err < tol && det > 0.0
    }
}

/// `Σ_p w_p ‖T s_p − x_p‖²`.
pub fn weighted_residual(
    transform: &RigidTransform,
    source: &[[f64; 3]],
    target: &[[f64; 3]],
    weights: Option<&[f64]>,
) -> f64 {
    source
        .iter()
        .zip(target)
        .enumerate()
        .map(|(k, (s, x))| {
            let y = transform.apply(*s);
            let d = (0..3).map(|i| (y[i] - x[i]) * (y[i] - x[i])).sum::<f64>();
            weights.map_or(1.0, |w| w[k]) * d
        })
        .sum()
}

/// Weighted Kabsch: the rigid `T` minimizing `Σ_p w_p ‖R s_p + t − x_p‖²`.
/// Centroids are removed, the weighted cross-covariance is decomposed by
/// SVD and a reflection is corrected through the sign of the determinant.
pub fn solve_rigid(source: &[[f64; 3]], target: &[[f64; 3]], weights: Option<&[f64]>) -> Result<RigidTransform> {
    if source.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: source.len(),
            got: target.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != source.len() {
            return Err(Error::DimensionMismatch {
                expected: source.len(),
                got: w.len(),
            });
        }
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidConfig(
                "alignment weights must be finite and non-negative".into(),
            ));
        }
    }
    if source.len() < 3 {
        return Err(Error::Degenerate);
    }
    let weight = |k: usize| weights.map_or(1.0, |w| w[k]);
    let total: f64 = (0..source.len()).map(weight).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate);
    }
    let mut cs = Vector3::zeros();
    let mut ct = Vector3::zeros();
    for (k, (s, x)) in source.iter().zip(target).enumerate() {
        cs += weight(k) * Vector3::from(*s);
        ct += weight(k) * Vector3::from(*x);
    }
    cs /= total;
    ct /= total;
    let mut h = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (k, (s, x)) in source.iter().zip(target).enumerate() {
        let a = Vector3::from(*s) - cs;
        let b = Vector3::from(*x) - ct;
        h += weight(k) * a * b.transpose();
        spread += weight(k) * a * a.transpose();
    }
    let spread_sv = spread.singular_values();
    let mut sv = [spread_sv[0], spread_sv[1], spread_sv[2]];
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0] || !h.iter().all(|x| x.is_finite()) {
        return Err(Error::Degenerate);
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.ok_or(Error::Degenerate)?, svd.v_t.ok_or(Error::Degenerate)?);
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, if d < 0.0 { -1.0 } else { 1.0 }));
    // The reflection fix must hit the smallest singular direction.
    let (u, v) = sort_by_singular_value(u, v, svd.singular_values);
    let r = v * correction * u.transpose();
    let t = ct - r * cs;
    Ok(RigidTransform::from_parts(r, t))
}

fn sort_by_singular_value(u: Matrix3<f64>, v: Matrix3<f64>, s: Vector3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let pick = |m: &Matrix3<f64>| Matrix3::from_columns(&[m.column(order[0]), m.column(order[1]), m.column(order[2])]);
    (pick(&u), pick(&v))
}
