//! Completion metrics, the nearest-neighbor baseline, correspondence
//! quality curves and convergence summaries.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::completion::CompletionTrace;
use crate::error::{Error, Result};
use crate::math::{dist3, sqrt};
use crate::mesh::{shape_radius, signed_volume, Correspondence, Mesh};
use crate::partial::PartialShape;
use crate::rigid::{solve_rigid, RigidTransform};

/// Per-vertex Euclidean errors of a completed shape against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionScore {
    /// Mean over observed vertices; absent when nothing was observed.
    pub err_seen: Option<f64>,
    /// Mean over unobserved vertices; absent when everything was observed.
    pub err_unseen: Option<f64>,
    /// Mean over all vertices.
    pub err_total: f64,
    /// `|V(completed) − V(gt)| / |V(gt)| · 100`, whole shape.
    pub vol_err_pct: f64,
    /// Shape radius of the ground truth, the normalizer of the `_pct_radius` values.
    pub radius: f64,
}

impl CompletionScore {
    pub fn seen_pct_radius(&self) -> Option<f64> {
        self.err_seen.map(|e| 100.0 * e / self.radius)
    }

    pub fn unseen_pct_radius(&self) -> Option<f64> {
        self.err_unseen.map(|e| 100.0 * e / self.radius)
    }

    pub fn total_pct_radius(&self) -> f64 {
        100.0 * self.err_total / self.radius
    }
}

/// Scores `completed` against `ground_truth` (same topology, same frame).
pub fn score(completed: &Mesh, ground_truth: &Mesh, mask: &[bool]) -> Result<CompletionScore> {
    if !completed.same_topology(ground_truth) {
        return Err(Error::TopologyMismatch {
            expected: ground_truth.vertex_count(),
            got: completed.vertex_count(),
            expected_hash: ground_truth.topology_hash(),
            got_hash: completed.topology_hash(),
        });
    }
    if mask.len() != ground_truth.vertex_count() {
        return Err(Error::DimensionMismatch {
            expected: ground_truth.vertex_count(),
            got: mask.len(),
        });
    }
    let mut sums = [0.0; 2];
    let mut counts = [0usize; 2];
    for ((a, b), &seen) in completed.vertices().iter().zip(ground_truth.vertices()).zip(mask) {
        let k = usize::from(!seen);
        sums[k] += dist3(*a, *b);
        counts[k] += 1;
    }
    let mean = |k: usize| (counts[k] > 0).then(|| sums[k] / counts[k] as f64);
    let total = (sums[0] + sums[1]) / (counts[0] + counts[1]).max(1) as f64;
    let v_gt = signed_volume(ground_truth).value;
    let v_c = signed_volume(completed).value;
    let vol_err_pct = if v_gt != 0.0 {
        100.0 * (v_c - v_gt).abs() / v_gt.abs()
    } else {
        f64::NAN
    };
    Ok(CompletionScore {
        err_seen: mean(0),
        err_unseen: mean(1),
        err_total: total,
        vol_err_pct,
        radius: shape_radius(ground_truth),
    })
}

/// Choice of the nearest-neighbor baseline.
#[derive(Debug, Clone)]
pub struct NearestNeighbor {
    pub index: usize,
    /// The chosen training shape moved into the frame of the partial points.
    pub mesh: Mesh,
    pub transform: RigidTransform,
    /// Mean aligned distance over the corresponded points.
    pub mean_distance: f64,
}

/// Rigidly aligns the corresponded region of one training shape to the
/// partial points; returns the transform and the mean aligned distance.
pub fn align_to_partial(partial: &PartialShape, candidate: &Mesh) -> Result<(RigidTransform, f64)> {
    let corr = &partial.ground_truth;
    corr.check_bounds(partial.points.len(), candidate.vertex_count())?;
    let source = corr.select(candidate.vertices());
    let target = corr.select_partial(&partial.points);
    let t = solve_rigid(&source, &target, None)?;
    let mean = source
        .iter()
        .zip(&target)
        .map(|(s, y)| dist3(t.apply(*s), *y))
        .sum::<f64>()
        / source.len() as f64;
    Ok((t, mean))
}

/// The training shape with the lowest mean distance to the partial points
/// after ground-truth-correspondence rigid alignment. Ties keep the first.
pub fn nn_baseline(partial: &PartialShape, training: &[Mesh]) -> Result<NearestNeighbor> {
    if partial.ground_truth.is_empty() {
        return Err(Error::EmptyCorrespondence);
    }
    let mut best: Option<(usize, RigidTransform, f64)> = None;
    for (i, m) in training.iter().enumerate() {
        let (t, d) = align_to_partial(partial, m)?;
        if best.as_ref().is_none_or(|b| d < b.2) {
            best = Some((i, t, d));
        }
    }
    let (index, transform, mean_distance) = best.ok_or(Error::EmptyInput("training set"))?;
    Ok(NearestNeighbor {
        index,
        mesh: training[index].map_vertices(|v| transform.apply(*v))?,
        transform,
        mean_distance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Edge graph of a mesh with Euclidean edge lengths.
#[derive(Debug, Clone)]
pub struct EdgeGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl EdgeGraph {
    pub fn new(mesh: &Mesh) -> Self {
        let v = mesh.vertices();
        let mut adjacency = alloc::vec![Vec::new(); v.len()];
        for (a, b) in mesh.edges() {
            let w = dist3(v[a], v[b]);
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        Self { adjacency }
    }

    /// Shortest edge-path lengths from `source` (Dijkstra); unreachable
    /// vertices get infinity.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let mut dist = alloc::vec![f64::INFINITY; self.adjacency.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapItem(0.0, source));
        while let Some(HeapItem(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapItem(nd, v));
                }
            }
        }
        dist
    }
}

/// For every pair of `corr` whose partial point also appears in
/// `ground_truth`, the geodesic distance between the assigned and the true
/// reference vertex divided by the shape radius.
pub fn correspondence_errors(corr: &Correspondence, ground_truth: &Correspondence, mesh: &Mesh) -> Result<Vec<f64>> {
    let n = mesh.vertex_count();
    let max_partial = corr
        .pairs()
        .iter()
        .chain(ground_truth.pairs())
        .map(|p| p.0 + 1)
        .max()
        .unwrap_or(0);
    corr.check_bounds(max_partial, n)?;
    ground_truth.check_bounds(max_partial, n)?;
    let truth: BTreeMap<usize, usize> = ground_truth.pairs().iter().copied().collect();
    let graph = EdgeGraph::new(mesh);
    let radius = shape_radius(mesh);
    let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut errors = Vec::with_capacity(corr.len());
    for &(p, assigned) in corr.pairs() {
        let Some(&true_ref) = truth.get(&p) else { continue };
        let d = cache.entry(true_ref).or_insert_with(|| graph.distances_from(true_ref))[assigned];
        errors.push(d / radius);
    }
    Ok(errors)
}

/// Fraction of `errors` at or below each threshold.
pub fn quality_curve(errors: &[f64], thresholds: &[f64]) -> Vec<f64> {
    if errors.is_empty() {
        return alloc::vec![0.0; thresholds.len()];
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&e| e <= t) as f64 / sorted.len() as f64)
        .collect()
}

pub fn correspondence_quality_curve(
    corr: &Correspondence,
    ground_truth: &Correspondence,
    mesh: &Mesh,
    thresholds: &[f64],
) -> Result<Vec<f64>> {
    Ok(quality_curve(
        &correspondence_errors(corr, ground_truth, mesh)?,
        thresholds,
    ))
}

/// `count` evenly spaced thresholds on `[0, max]`.
pub fn thresholds(max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => alloc::vec![max],
        _ => (0..count).map(|k| max * k as f64 / (count - 1) as f64).collect(),
    }
}

/// Mean seen error before and after one correspondence refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementDrop {
    pub run: usize,
    pub iteration: usize,
    pub mean_before: f64,
    pub mean_after: f64,
}

/// The largest single-iteration decrease of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Drop {
    pub iteration: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub runs: usize,
    pub mean_seen: Vec<f64>,
    pub mean_unseen: Option<Vec<f64>>,
    /// Largest drop of the mean seen curve.
    pub largest_seen_drop: Option<Drop>,
    pub refinement_drops: Vec<RefinementDrop>,
    /// Fraction of runs whose final unseen error is below the initial one.
    pub endpoint_improvement: Option<f64>,
}

/// Window on each side of a refinement used by [`RefinementDrop`].
pub const REFINEMENT_WINDOW: usize = 20;

fn padded_mean(series: &[Vec<f64>]) -> Vec<f64> {
    let len = series.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            series
                .iter()
                .map(|s| s.get(i).or(s.last()).copied().unwrap_or(0.0))
                .sum::<f64>()
                / series.len() as f64
        })
        .collect()
}

pub fn largest_drop(curve: &[f64]) -> Option<Drop> {
    curve
        .windows(2)
        .enumerate()
        .map(|(i, w)| Drop {
            iteration: i + 1,
            before: w[0],
            after: w[1],
        })
        .max_by(|a, b| {
            (a.before - a.after)
                .total_cmp(&(b.before - b.after))
                .then(b.iteration.cmp(&a.iteration))
        })
}

/// Averages traces per iteration; shorter traces are extended with their
/// last value.
pub fn convergence_report(traces: &[CompletionTrace]) -> Result<ConvergenceReport> {
    if traces.is_empty() || traces.iter().any(|t| t.is_empty()) {
        return Err(Error::EmptyInput("convergence traces"));
    }
    let seen: Vec<Vec<f64>> = traces.iter().map(CompletionTrace::seen).collect();
    let unseen: Option<Vec<Vec<f64>>> = traces.iter().map(CompletionTrace::unseen).collect();
    let mean_seen = padded_mean(&seen);
    let mut refinement_drops = Vec::new();
    for (run, (trace, s)) in traces.iter().zip(&seen).enumerate() {
        for k in trace.refinement_iterations() {
            let lo = k.saturating_sub(REFINEMENT_WINDOW);
            let hi = (k + REFINEMENT_WINDOW).min(s.len());
            if lo == k || hi == k {
                continue;
            }
            let mean = |r: &[f64]| r.iter().sum::<f64>() / r.len() as f64;
            refinement_drops.push(RefinementDrop {
                run,
                iteration: k,
                mean_before: mean(&s[lo..k]),
                mean_after: mean(&s[k..hi]),
            });
        }
    }
    let endpoint_improvement = unseen
        .as_ref()
        .map(|u| u.iter().filter(|s| s.last() < s.first()).count() as f64 / u.len() as f64);
    Ok(ConvergenceReport {
        runs: traces.len(),
        largest_seen_drop: largest_drop(&mean_seen),
        mean_seen,
        mean_unseen: unseen.as_deref().map(padded_mean),
        refinement_drops,
        endpoint_improvement,
    })
}

/// Mean and sample count of a list, `None` when empty.
pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Root mean square distance between corresponding points over `indices`.
pub fn rms_over(a: &[[f64; 3]], b: &[[f64; 3]], indices: &[usize]) -> f64 {
    if indices.is_empty() {
        return 0.0;
    }
    let sq: f64 = indices
        .iter()
        .map(|&i| {
            let d = dist3(a[i], b[i]);
            d * d
        })
        .sum();
    sqrt(sq / indices.len() as f64)
}
