use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::Mesh;
use crate::math::{cos, norm3, scale3, sin, sqrt};

/// Axis-aligned box between `min` and `max`, outward oriented, 8 vertices.
pub fn cube(min: [f64; 3], max: [f64; 3]) -> Mesh {
    let vertices = (0..8)
        .map(|bits| {
            let pick = |axis: usize| if bits >> axis & 1 == 1 { max[axis] } else { min[axis] };
            [pick(0), pick(1), pick(2)]
        })
        .collect();
    let faces = alloc::vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    Mesh::new(vertices, faces).expect("box faces are valid")
}

/// Unit icosphere: an icosahedron subdivided `level` times, vertices
/// projected to the sphere. Level 1 has 42 vertices, level 2 has 162.
pub fn icosphere(level: usize) -> Mesh {
    let t = (1.0 + sqrt(5.0)) / 2.0;
    let mut vertices: Vec<[f64; 3]> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|&v| scale3(v, 1.0 / norm3(v)))
    .collect();
    let mut faces: Vec<[usize; 3]> = alloc::vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (pa, pb) = (vertices[a], vertices[b]);
                let m = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0, (pa[2] + pb[2]) / 2.0];
                vertices.push(scale3(m, 1.0 / norm3(m)));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Mesh::new(vertices, faces).expect("icosphere faces are valid")
}

/// Closed capped cylinder along z, spanning `[-half_length, half_length]`.
///
/// `rings >= 2` circles of `segments >= 3` vertices each, plus one center
/// vertex per cap (bottom cap center first). Outward oriented.
pub fn cylinder(rings: usize, segments: usize, radius: f64, half_length: f64) -> Mesh {
    assert!(
        rings >= 2 && segments >= 3,
        "cylinder needs rings >= 2 and segments >= 3"
    );
    let mut vertices = Vec::with_capacity(rings * segments + 2);
    for r in 0..rings {
        let z = -half_length + 2.0 * half_length * r as f64 / (rings - 1) as f64;
        for s in 0..segments {
            let theta = 2.0 * core::f64::consts::PI * s as f64 / segments as f64;
            vertices.push([radius * cos(theta), radius * sin(theta), z]);
        }
    }
    let bottom = vertices.len();
    vertices.push([0.0, 0.0, -half_length]);
    let top = vertices.len();
    vertices.push([0.0, 0.0, half_length]);

    let idx = |r: usize, s: usize| r * segments + s % segments;
    let mut faces = Vec::with_capacity(2 * segments * rings);
    for r in 0..rings - 1 {
        for s in 0..segments {
            let (a, b, c, d) = (idx(r, s), idx(r, s + 1), idx(r + 1, s + 1), idx(r + 1, s));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for s in 0..segments {
        faces.push([bottom, idx(0, s + 1), idx(0, s)]);
        faces.push([top, idx(rings - 1, s), idx(rings - 1, s + 1)]);
    }
    Mesh::new(vertices, faces).expect("cylinder faces are valid")
}
