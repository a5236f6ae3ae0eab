//! Dynamic-filter graph convolution on mesh neighborhoods, plus the dense
//! layer and activations used to assemble the autoencoder.
//!
//! For a vertex `i` with patch `N_i`, the layer computes
//!
//! ```text
//! y_i = b + Σ_m 1/|N_i| Σ_{j ∈ N_i} q_m(x_i, x_j) W_m x_j
//! q_m(x_i, x_j) = softmax_m(u_mᵀ (x_i − x_j) + c_m)
//! ```
//!
//! On the tape the logits use linearity, `u_mᵀ(x_i − x_j) = (X u)_i − (X u)_j`,
//! so only `N x M` products are formed before the per-edge gather. The
//! filter products `X W_m` are computed once per vertex and mixed along the
//! patch edges by a single fused aggregation kernel.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grad::{EdgeIndex, ParamId, ParamStore, Tape, Tensor, Var};
use crate::math::{exp, sqrt};
use crate::mesh::NeighborhoodGraph;

/// Flattened patch edges `(center, neighbor)` for one topology.
#[derive(Debug, Clone)]
pub struct EdgeList {
    vertex_count: usize,
    include_self: bool,
    /// Edge `e` runs from a neighbor into its center with weight `1/|N_i|`.
    index: Arc<EdgeIndex>,
}

impl EdgeList {
    /// Fails with [`Error::IsolatedVertex`] if a patch would be empty.
    pub fn new(graph: &NeighborhoodGraph, include_self: bool) -> Result<Self> {
        let n = graph.vertex_count();
        let mut centers = Vec::new();
        let mut neighbors = Vec::new();
        let mut inv = Vec::new();
        for i in 0..n {
            let ns = graph.neighbors(i);
            let size = ns.len() + usize::from(include_self);
            if size == 0 {
                return Err(Error::IsolatedVertex(i));
            }
            let w = 1.0 / size as f64;
            if include_self {
                centers.push(i);
                neighbors.push(i);
                inv.push(w);
            }
            for &j in ns {
                centers.push(i);
                neighbors.push(j);
                inv.push(w);
            }
        }
        Ok(Self {
            vertex_count: n,
            include_self,
            index: Arc::new(EdgeIndex::new(n, centers, neighbors, inv)?),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.index.len()
    }

    pub fn include_self(&self) -> bool {
        self.include_self
    }

    /// `(center, neighbor)` pairs in layer order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.index
            .centers()
            .iter()
            .copied()
            .zip(self.index.sources().iter().copied())
    }
}

/// Uniform Xavier/Glorot initialization.
pub fn xavier_uniform(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = sqrt(6.0 / (fan_in + fan_out) as f64);
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::from_vec(rows, cols, data).expect("sized above")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        match self {
            Activation::Elu => tape.elu(x, 1.0),
            Activation::Identity => Ok(x),
        }
    }
}

/// Trainable parameters of one dynamic-filter convolution.
///
/// Storage layout: `weight` is `in_dim x (M·out_dim)` with block `m` holding
/// `W_mᵀ`; `u` is `in_dim x M` with column `m` holding `u_m`; `c` is `1 x M`;
/// `bias` is `1 x out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeastConv {
    pub filters: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    pub include_self: bool,
    pub weight: ParamId,
    pub u: ParamId,
    pub c: ParamId,
    pub bias: ParamId,
}

impl FeastConv {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        filters: usize,
        include_self: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if filters == 0 || in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "conv {name}: filters, in_dim and out_dim must be positive"
            )));
        }
        let weight = store.add(
            join(name, "weight"),
            xavier_uniform(rng, in_dim, filters * out_dim, in_dim, out_dim),
        );
        let u = store.add(join(name, "u"), xavier_uniform(rng, in_dim, filters, in_dim, filters));
        let c = store.add(join(name, "c"), Tensor::zeros(1, filters));
        let bias = store.add(join(name, "bias"), Tensor::zeros(1, out_dim));
        Ok(Self {
            filters,
            in_dim,
            out_dim,
            include_self,
            weight,
            u,
            c,
            bias,
        })
    }

    /// `W_m` as an `out_dim x in_dim` matrix.
    pub fn filter_weight(&self, store: &ParamStore, m: usize) -> Tensor {
        let w = store.value(self.weight);
        let mut out = Tensor::zeros(self.out_dim, self.in_dim);
        for o in 0..self.out_dim {
            for i in 0..self.in_dim {
                out.set(o, i, w.get(i, m * self.out_dim + o));
            }
        }
        out
    }

    /// The `M` assignment weights for the pair `(x_i, x_j)`.
    pub fn assignment_weights(&self, store: &ParamStore, xi: &[f64], xj: &[f64]) -> Result<Vec<f64>> {
        assignment_weights(xi, xj, store.value(self.u), store.value(self.c).data())
    }

    /// `features: N x in_dim` to `N x out_dim`.
    pub fn forward(&self, tape: &mut Tape<'_>, features: Var, edges: &EdgeList) -> Result<Var> {
        let [n, d] = tape.shape(features);
        if n != edges.vertex_count() {
            return Err(Error::DimensionMismatch {
                expected: edges.vertex_count(),
                got: n,
            });
        }
        if d != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                got: d,
            });
        }
        if edges.include_self() != self.include_self {
            return Err(Error::InvalidConfig(
                "edge list and layer disagree on self inclusion".into(),
            ));
        }
        let w = tape.param(self.weight);
        let u = tape.param(self.u);
        let c = tape.param(self.c);
        let b = tape.param(self.bias);
        feast_forward(tape, features, edges, [w, u, c, b])
    }
}

/// The layer body with parameters supplied as tape values `[W, u, c, b]`,
/// laid out as in [`FeastConv`].
pub fn feast_forward(tape: &mut Tape<'_>, features: Var, edges: &EdgeList, params: [Var; 4]) -> Result<Var> {
    let [w, u, c, b] = params;
    let xu = tape.matmul(features, u)?;
    let li = tape.gather_rows(xu, edges.index.centers().clone())?;
    let lj = tape.gather_rows(xu, edges.index.sources().clone())?;
    let logits = tape.sub(li, lj)?;
    let logits = tape.add(logits, c)?;
    let q = tape.softmax(logits, 1)?;
    let projected = tape.matmul(features, w)?;
    let summed = tape.edge_aggregate(q, projected, edges.index.clone())?;
    tape.add(summed, b)
}

/// Normalized filter assignment for one pair, computed with max subtraction.
/// `u` is `in_dim x M` (column `m` is `u_m`), `c` has length `M`.
pub fn assignment_weights(xi: &[f64], xj: &[f64], u: &Tensor, c: &[f64]) -> Result<Vec<f64>> {
    let [d, m] = u.shape();
    if xi.len() != d || xj.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: xi.len().max(xj.len()),
        });
    }
    if c.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: c.len(),
        });
    }
    let mut logits: Vec<f64> = (0..m)
        .map(|f| c[f] + (0..d).map(|k| u.get(k, f) * (xi[k] - xj[k])).sum::<f64>())
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in &mut logits {
        *l = exp(*l - max);
        total += *l;
    }
    for l in &mut logits {
        *l /= total;
    }
    Ok(logits)
}

/// Fully connected layer `y = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let weight = store.add(
            join(name, "weight"),
            xavier_uniform(rng, in_dim, out_dim, in_dim, out_dim),
        );
        let bias = store.add(join(name, "bias"), Tensor::zeros(1, out_dim));
        Self {
            in_dim,
            out_dim,
            weight,
            bias,
        }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }
}

fn join(prefix: &str, leaf: &str) -> String {
    let mut s = String::from(prefix);
    s.push('.');
    s.push_str(leaf);
    s
}
