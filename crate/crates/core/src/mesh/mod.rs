//! Fixed-topology triangle meshes, vertex neighborhoods and correspondences.
//!
//! A [`Mesh`] pairs a vertex embedding with a shared face list. Meshes that
//! come out of the decoder all share one `Arc` of faces, so changing the
//! embedding never copies the topology.

mod primitives;

pub use primitives::{cube, cylinder, icosphere};

use alloc::collections::VecDeque;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{cross3, dist3, dot3, sub3};

/// A triangle mesh with a fixed connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 3]>,
    faces: Arc<[[usize; 3]]>,
}

impl Mesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        Self::with_shared_faces(vertices, Arc::from(faces))
    }

    pub fn with_shared_faces(vertices: Vec<[f64; 3]>, faces: Arc<[[usize; 3]]>) -> Result<Self> {
        let n = vertices.len();
        for (k, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= n {
                    return Err(Error::InvalidMesh(format!(
                        "face {k} references vertex {i} but mesh has {n} vertices"
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {k} is degenerate: {f:?}")));
            }
        }
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        Ok(Self { vertices, faces })
    }

    /// Same topology, new embedding.
    pub fn with_vertices(&self, vertices: Vec<[f64; 3]>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::DimensionMismatch {
                expected: self.vertices.len(),
                got: vertices.len(),
            });
        }
        Self::with_shared_faces(vertices, self.faces.clone())
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn shared_faces(&self) -> Arc<[[usize; 3]]> {
        self.faces.clone()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn same_topology(&self, other: &Mesh) -> bool {
        self.vertices.len() == other.vertices.len()
            && (Arc::ptr_eq(&self.faces, &other.faces) || self.faces[..] == other.faces[..])
    }

    /// FNV-1a over the vertex count and face indices.
    pub fn topology_hash(&self) -> u64 {
        topology_hash(self.vertices.len(), &self.faces)
    }

    pub fn centroid(&self) -> [f64; 3] {
        centroid(&self.vertices)
    }

    /// Applies `f` to every vertex, keeping the topology.
    pub fn map_vertices(&self, f: impl FnMut(&[f64; 3]) -> [f64; 3]) -> Result<Self> {
        self.with_vertices(self.vertices.iter().map(f).collect())
    }

    /// Edge list with `i < j`, sorted and deduplicated.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.faces.len() * 3);
        for f in self.faces.iter() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edges.push((a.min(b), a.max(b)));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Per-vertex lists of incident face indices.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (k, f) in self.faces.iter().enumerate() {
            for &i in f {
                out[i].push(k);
            }
        }
        out
    }

    /// Unnormalized face normal (twice the area vector).
    pub fn face_normal(&self, face: usize) -> [f64; 3] {
        let [a, b, c] = self.faces[face];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        cross3(sub3(pb, pa), sub3(pc, pa))
    }
}

pub fn topology_hash(vertex_count: usize, faces: &[[usize; 3]]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |x: u64| {
        for byte in x.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(vertex_count as u64);
    for f in faces {
        for &i in f {
            eat(i as u64);
        }
    }
    h
}

pub fn centroid(points: &[[f64; 3]]) -> [f64; 3] {
    let mut c = [0.0; 3];
    if points.is_empty() {
        return c;
    }
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    let n = points.len() as f64;
    [c[0] / n, c[1] / n, c[2] / n]
}

/// Vertex neighborhoods: the `ring`-hop closure of edge adjacency.
///
/// `neighbors[i]` is sorted and never contains `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodGraph {
    ring: usize,
    neighbors: Vec<Vec<usize>>,
}

impl NeighborhoodGraph {
    pub fn ring(&self) -> usize {
        self.ring
    }

    pub fn vertex_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, vertex: usize) -> &[usize] {
        &self.neighbors[vertex]
    }

    /// Vertices with an empty neighborhood. Not an error, but the conv layer
    /// rejects them unless it includes the center vertex.
    pub fn isolated_vertices(&self) -> Vec<usize> {
        self.neighbors
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_empty())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.neighbors
            .iter()
            .enumerate()
            .all(|(i, ns)| ns.iter().all(|&j| self.neighbors[j].binary_search(&i).is_ok()))
    }
}

fn adjacency(mesh: &Mesh) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); mesh.vertex_count()];
    for (a, b) in mesh.edges() {
        adj[a].push(b);
        adj[b].push(a);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}

fn bfs_within(adj: &[Vec<usize>], source: usize, depth: usize, dist: &mut [usize]) -> Vec<usize> {
    let mut reached = vec![source];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        if dist[v] == depth {
            continue;
        }
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                reached.push(w);
                queue.push_back(w);
            }
        }
    }
    for &v in &reached {
        dist[v] = usize::MAX;
    }
    reached.sort_unstable();
    reached
}

pub fn build_neighborhoods(mesh: &Mesh, ring: usize) -> Result<NeighborhoodGraph> {
    if ring == 0 {
        return Err(Error::InvalidConfig("neighborhood ring must be >= 1".into()));
    }
    let adj = adjacency(mesh);
    let mut dist = vec![usize::MAX; adj.len()];
    let neighbors = (0..adj.len())
        .map(|i| {
            let mut reached = bfs_within(&adj, i, ring, &mut dist);
            reached.retain(|&j| j != i);
            reached
        })
        .collect();
    Ok(NeighborhoodGraph { ring, neighbors })
}

/// Vertices within `depth` hops of `vertex` in the neighborhood graph,
/// including `vertex` itself. Sorted.
pub fn receptive_field(graph: &NeighborhoodGraph, vertex: usize, depth: usize) -> Result<Vec<usize>> {
    let n = graph.vertex_count();
    if vertex >= n {
        return Err(Error::IndexOutOfRange { index: vertex, len: n });
    }
    let mut dist = vec![usize::MAX; n];
    Ok(bfs_within(&graph.neighbors, vertex, depth, &mut dist))
}

/// Maximum distance from the vertex centroid to any vertex.
pub fn shape_radius(mesh: &Mesh) -> f64 {
    points_radius(mesh.vertices())
}

pub fn points_radius(points: &[[f64; 3]]) -> f64 {
    let c = centroid(points);
    points.iter().map(|&p| dist3(p, c)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedVolume {
    pub value: f64,
    /// Every edge is shared by exactly two faces with opposite orientation.
    pub watertight: bool,
}

/// Volume by the divergence theorem: one sixth of the summed triple products.
pub fn signed_volume(mesh: &Mesh) -> SignedVolume {
    let v = mesh.vertices();
    let mut sum = 0.0;
    for f in mesh.faces() {
        let (a, b, c) = (v[f[0]], v[f[1]], v[f[2]]);
        sum += dot3(a, cross3(b, c));
    }
    SignedVolume {
        value: sum / 6.0,
        watertight: is_watertight(mesh),
    }
}

fn is_watertight(mesh: &Mesh) -> bool {
    let mut directed: Vec<(usize, usize)> = mesh
        .faces()
        .iter()
        .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
        .collect();
    directed.sort_unstable();
    if directed.windows(2).any(|w| w[0] == w[1]) {
        return false;
    }
    directed.iter().all(|&(a, b)| directed.binary_search(&(b, a)).is_ok())
}

/// Partial permutation from partial-shape points to reference vertices,
/// with optional per-pair confidence weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Correspondence {
    pairs: Vec<(usize, usize)>,
    weights: Option<Vec<f64>>,
}

impl Correspondence {
    pub fn new(pairs: Vec<(usize, usize)>, weights: Option<Vec<f64>>) -> Result<Self> {
        let corr = Self { pairs, weights };
        corr.validate()?;
        Ok(corr)
    }

    /// Pairs `(k, k)` for `k < n`.
    pub fn identity(n: usize) -> Self {
        Self {
            pairs: (0..n).map(|k| (k, k)).collect(),
            weights: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut partial: Vec<usize> = self.pairs.iter().map(|p| p.0).collect();
        let mut reference: Vec<usize> = self.pairs.iter().map(|p| p.1).collect();
        partial.sort_unstable();
        reference.sort_unstable();
        if partial.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidCorrespondence("repeated partial index".into()));
        }
        if reference.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidCorrespondence("repeated reference index".into()));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.pairs.len() {
                return Err(Error::InvalidCorrespondence(format!(
                    "{} weights for {} pairs",
                    w.len(),
                    self.pairs.len()
                )));
            }
            if w.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::InvalidCorrespondence("weight outside [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Checks indices against both sides.
    pub fn check_bounds(&self, partial_len: usize, reference_len: usize) -> Result<()> {
        for &(p, r) in &self.pairs {
            if p >= partial_len {
                return Err(Error::IndexOutOfRange {
                    index: p,
                    len: partial_len,
                });
            }
            if r >= reference_len {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    len: reference_len,
                });
            }
        }
        Ok(())
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[k])
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn without_weights(mut self) -> Self {
        self.weights = None;
        self
    }

    /// Reference index assigned to partial point `partial`, if any.
    pub fn reference_of(&self, partial: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == partial).map(|p| p.1)
    }

    /// Keeps the pairs for which `keep(pair_position)` holds.
    pub fn retain_by_index(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let mut pairs = Vec::new();
        let mut weights = self.weights.as_ref().map(|_| Vec::new());
        for (k, &pair) in self.pairs.iter().enumerate() {
            if keep(k) {
                pairs.push(pair);
                if let (Some(out), Some(w)) = (&mut weights, &self.weights) {
                    out.push(w[k]);
                }
            }
        }
        Self { pairs, weights }
    }

    /// Selected reference vertices, in pair order.
    pub fn select(&self, reference: &[[f64; 3]]) -> Vec<[f64; 3]> {
        self.pairs.iter().map(|&(_, r)| reference[r]).collect()
    }

    pub fn select_partial(&self, partial: &[[f64; 3]]) -> Vec<[f64; 3]> {
        self.pairs.iter().map(|&(p, _)| partial[p]).collect()
    }
}

#[cfg(test)]
mod tests;
