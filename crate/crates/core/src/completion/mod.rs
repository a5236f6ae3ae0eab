//! Shape completion by optimizing a latent code and a rigid alignment so the
//! decoded shape matches a partial observation.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{Tape, Tensor};
use crate::math::sqrt;
use crate::mesh::{Correspondence, Mesh};
use crate::rigid::{solve_rigid, RigidTransform};
use crate::rng::{derive_seed, seeded, standard_normal_vec};
use crate::vae::{LatentVector, VaeModel};

/// Starting latent code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatentInit {
    /// `z ~ N(0, I)` drawn from the run seed.
    RandomPrior,
    Zero,
    Provided {
        z: Vec<f64>,
    },
}

/// When the correspondence is recomputed by closest-vertex assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementSchedule {
    pub enabled: bool,
    /// Plateau: relative seen-error improvement over `window` iterations
    /// below `threshold`.
    pub window: usize,
    pub threshold: f64,
    /// Refine at this iteration regardless of progress.
    pub fixed_iteration: Option<usize>,
    pub max_refinements: usize,
}

impl Default for RefinementSchedule {
    fn default() -> Self {
        Self {
            enabled: false,
            window: 50,
            threshold: 1e-3,
            fixed_iteration: None,
            max_refinements: 1,
        }
    }
}

impl RefinementSchedule {
    pub fn plateau() -> Self {
        Self {
            enabled: true,
            ..Self::default()
        }
    }

    pub fn at_iteration(iteration: usize) -> Self {
        Self {
            enabled: true,
            window: usize::MAX,
            fixed_iteration: Some(iteration),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    pub max_iters: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// A closed-form rigid step runs every `rigid_period` latent steps.
    pub rigid_period: usize,
    pub refinement: RefinementSchedule,
    pub init: LatentInit,
    /// Weigh the dissimilarity by correspondence confidences.
    pub use_weights: bool,
    /// Independent random-prior starts; the run with the lowest final
    /// objective is returned.
    pub starts: usize,
    pub seed: u64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            max_iters: 300,
            learning_rate: 0.1,
            momentum: 0.0,
            rigid_period: 10,
            refinement: RefinementSchedule::default(),
            init: LatentInit::RandomPrior,
            use_weights: false,
            starts: 1,
            seed: 0,
        }
    }
}

impl CompletionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("latent learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        if self.starts == 0 {
            return Err(Error::InvalidConfig("at least one start is required".into()));
        }
        if self.rigid_period == 0 {
            return Err(Error::InvalidConfig("rigid period must be positive".into()));
        }
        if self.refinement.enabled && self.refinement.window == 0 {
            return Err(Error::InvalidConfig("plateau window must be positive".into()));
        }
        Ok(())
    }
}

/// Full-shape ground truth in the frame of the partial points, used only
/// for reporting.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth<'a> {
    pub vertices: &'a [[f64; 3]],
    pub mask: &'a [bool],
}

/// Objective and seen error on both sides of one rigid step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidStepRecord {
    pub objective_before: f64,
    pub objective_after: f64,
    pub seen_before: f64,
    pub seen_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Mean distance between corresponded decoded vertices and aligned points.
    pub seen_error: f64,
    /// Mean distance to the aligned ground truth over unobserved vertices.
    pub unseen_error: Option<f64>,
    /// The minimized dissimilarity `D`.
    pub objective: f64,
    pub z_hash: u64,
    pub transform: RigidTransform,
    pub rigid_step: Option<RigidStepRecord>,
    pub refined: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionTrace {
    pub entries: Vec<TraceEntry>,
}

impl CompletionTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn seen(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.seen_error).collect()
    }

    pub fn unseen(&self) -> Option<Vec<f64>> {
        self.entries.iter().map(|e| e.unseen_error).collect()
    }

    pub fn refinement_iterations(&self) -> Vec<usize> {
        self.entries.iter().filter(|e| e.refined).map(|e| e.iteration).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CompletionStatus {
    Completed,
    /// A non-finite value appeared; results hold the last finite state.
    Diverged {
        iteration: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Completion {
    /// Decoded shape in the model frame.
    pub mesh: Mesh,
    pub latent: LatentVector,
    /// Maps partial points into the model frame.
    pub transform: RigidTransform,
    pub correspondence: Correspondence,
    pub trace: CompletionTrace,
    pub status: CompletionStatus,
}

impl Completion {
    /// The completed shape expressed in the frame of the partial points.
    pub fn mesh_in_partial_frame(&self) -> Result<Mesh> {
        let inv = self.transform.inverse();
        self.mesh.map_vertices(|v| inv.apply(*v))
    }
}

fn check_problem(points: &[[f64; 3]], corr: &Correspondence, n: usize) -> Result<()> {
    if corr.is_empty() {
        return Err(Error::EmptyCorrespondence);
    }
    corr.check_bounds(points.len(), n)
}

fn pair_weight(corr: &Correspondence, k: usize, use_weights: bool) -> f64 {
    if use_weights {
        corr.weight(k)
    } else {
        1.0
    }
}

/// `D = sqrt(Σ_p w_p ‖x_{π(p)} − T y_p‖²)` over the pairs of `corr`.
pub fn dissimilarity(
    full: &[[f64; 3]],
    points: &[[f64; 3]],
    corr: &Correspondence,
    transform: &RigidTransform,
    use_weights: bool,
) -> Result<f64> {
    check_problem(points, corr, full.len())?;
    let total: f64 = corr
        .pairs()
        .iter()
        .enumerate()
        .map(|(k, &(p, r))| pair_weight(corr, k, use_weights) * sq_dist(full[r], transform.apply(points[p])))
        .sum();
    Ok(sqrt(total))
}

/// Mean of `‖x_{π(p)} − T y_p‖` over the pairs.
pub fn seen_error(full: &[[f64; 3]], points: &[[f64; 3]], corr: &Correspondence, transform: &RigidTransform) -> f64 {
    let total: f64 = corr
        .pairs()
        .iter()
        .map(|&(p, r)| sqrt(sq_dist(full[r], transform.apply(points[p]))))
        .sum();
    total / corr.len().max(1) as f64
}

fn unseen_error(full: &[[f64; 3]], truth: &GroundTruth<'_>, transform: &RigidTransform) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (v, (&seen, &g)) in truth.mask.iter().zip(truth.vertices).enumerate() {
        if !seen {
            total += sqrt(sq_dist(full[v], transform.apply(g)));
            count += 1;
        }
    }
    (count > 0).then(|| total / count as f64)
}

fn sq_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

/// Rigid step: the transform aligning the partial points onto their
/// corresponded vertices.
pub fn rigid_step(
    full: &[[f64; 3]],
    points: &[[f64; 3]],
    corr: &Correspondence,
    use_weights: bool,
) -> Result<RigidTransform> {
    let source = corr.select_partial(points);
    let target = corr.select(full);
    let weights: Option<Vec<f64>> = use_weights.then(|| (0..corr.len()).map(|k| corr.weight(k)).collect());
    solve_rigid(&source, &target, weights.as_deref())
}

/// Closest-vertex reassignment: every transformed partial point maps to the
/// nearest vertex of `full`; when several points pick one vertex the closest
/// keeps it and the others are dropped.
pub fn refine_correspondence(
    points: &[[f64; 3]],
    full: &[[f64; 3]],
    transform: &RigidTransform,
) -> Result<Correspondence> {
    let mut best: Vec<Option<(usize, f64)>> = alloc::vec![None; full.len()];
    for (p, &y) in points.iter().enumerate() {
        let ty = transform.apply(y);
        let mut nearest = (usize::MAX, f64::INFINITY);
        for (v, &x) in full.iter().enumerate() {
            let d = sq_dist(x, ty);
            if d < nearest.1 {
                nearest = (v, d);
            }
        }
        if nearest.0 == usize::MAX {
            continue;
        }
        let slot = &mut best[nearest.0];
        if slot.is_none_or(|(_, d)| nearest.1 < d) {
            *slot = Some((p, nearest.1));
        }
    }
    let mut pairs: Vec<(usize, usize)> = best
        .iter()
        .enumerate()
        .filter_map(|(v, b)| b.map(|(p, _)| (p, v)))
        .collect();
    pairs.sort_unstable();
    Correspondence::new(pairs, None)
}

/// Residual of each pair after alignment.
pub fn pair_residuals(
    points: &[[f64; 3]],
    full: &[[f64; 3]],
    corr: &Correspondence,
    transform: &RigidTransform,
) -> Vec<f64> {
    corr.pairs()
        .iter()
        .map(|&(p, r)| sqrt(sq_dist(full[r], transform.apply(points[p]))))
        .collect()
}

/// Twice the median pair residual.
pub fn default_filter_threshold(residuals: &[f64]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    2.0 * median
}

/// Keeps the pairs whose aligned residual against the completed shape is at
/// most `threshold` (default: twice the median residual).
pub fn filter_correspondence(
    points: &[[f64; 3]],
    completed: &[[f64; 3]],
    corr: &Correspondence,
    transform: &RigidTransform,
    threshold: Option<f64>,
) -> Result<Correspondence> {
    corr.check_bounds(points.len(), completed.len())?;
    let residuals = pair_residuals(points, completed, corr, transform);
    let threshold = threshold.unwrap_or_else(|| default_filter_threshold(&residuals));
    Ok(corr.retain_by_index(|k| residuals[k] <= threshold))
}

fn initial_latent(config: &CompletionConfig, dim: usize) -> Result<Vec<f64>> {
    match &config.init {
        LatentInit::RandomPrior => Ok(standard_normal_vec(&mut seeded(config.seed), dim)),
        LatentInit::Zero => Ok(alloc::vec![0.0; dim]),
        LatentInit::Provided { z } => {
            if z.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: z.len(),
                });
            }
            Ok(z.clone())
        }
    }
}

/// FNV-1a over the bit patterns of `z`.
pub fn latent_hash(z: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for x in z {
        for b in x.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn plateaued(seen: &[f64], since: usize, schedule: &RefinementSchedule) -> bool {
    let w = schedule.window;
    let it = seen.len() - 1;
    if w == usize::MAX || it < since + w {
        return false;
    }
    let old = seen[it - w];
    if !(old > 0.0) {
        return true;
    }
    (old - seen[it]) / old < schedule.threshold
}

/// Latent and rigid alternating optimization.
///
/// Iteration `k` decodes the current code, applies the rigid step when `k`
/// is a positive multiple of the rigid period, possibly refines the
/// correspondence, records the trace entry, and then takes a gradient step on
/// `z`. Entry 0 describes the initial code after one rigid solve, so a run
/// with `max_iters = 0` has a trace of length 1.
///
/// With several random-prior starts, start `k` draws its code with seed
/// `derive_seed(seed, k)` and the finished run with the lowest final
/// objective wins; the choice never looks at the ground truth.
pub fn complete(
    points: &[[f64; 3]],
    corr: &Correspondence,
    model: &VaeModel,
    config: &CompletionConfig,
    truth: Option<GroundTruth<'_>>,
) -> Result<Completion> {
    config.validate()?;
    if config.starts == 1 || !matches!(config.init, LatentInit::RandomPrior) {
        return complete_once(points, corr, model, config, truth);
    }
    let mut best: Option<Completion> = None;
    for k in 0..config.starts {
        let cfg = CompletionConfig {
            seed: derive_seed(config.seed, k as u64),
            starts: 1,
            ..config.clone()
        };
        let run = complete_once(points, corr, model, &cfg, truth)?;
        if best.as_ref().is_none_or(|b| ranks_before(&run, b)) {
            best = Some(run);
        }
    }
    best.ok_or(Error::EmptyInput("completion starts"))
}

fn final_objective(c: &Completion) -> f64 {
    c.trace.entries.last().map_or(f64::INFINITY, |e| e.objective)
}

fn ranks_before(a: &Completion, b: &Completion) -> bool {
    let finished = |c: &Completion| c.status == CompletionStatus::Completed;
    match (finished(a), finished(b)) {
        (true, false) => true,
        (false, true) => false,
        _ => final_objective(a) < final_objective(b),
    }
}

fn complete_once(
    points: &[[f64; 3]],
    corr: &Correspondence,
    model: &VaeModel,
    config: &CompletionConfig,
    truth: Option<GroundTruth<'_>>,
) -> Result<Completion> {
    let n = model.topology().vertex_count();
    check_problem(points, corr, n)?;
    if let Some(t) = &truth {
        if t.vertices.len() != n || t.mask.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: t.vertices.len().min(t.mask.len()),
            });
        }
    }
    let dim = model.latent_dim();
    let use_weights = config.use_weights;
    let mut corr = if use_weights {
        corr.clone()
    } else {
        corr.clone().without_weights()
    };
    let mut z = initial_latent(config, dim)?;
    let mut velocity = alloc::vec![0.0; dim];
    let mut transform = rigid_step(
        &model.decode_points(&LatentVector::new(z.clone())?)?,
        points,
        &corr,
        use_weights,
    )?;

    let mut trace = CompletionTrace::default();
    let mut seen_history: Vec<f64> = Vec::new();
    let mut last_refinement = 0usize;
    let mut refinements = 0usize;
    let mut last_good: Option<(Vec<f64>, Vec<[f64; 3]>, RigidTransform, Correspondence)> = None;
    let mut status = CompletionStatus::Completed;

    for it in 0..=config.max_iters {
        let mut tape = Tape::frozen(model.params());
        let step = (|| -> Result<(Vec<[f64; 3]>, TraceEntry, Option<Vec<f64>>)> {
            let zv = tape.input(Tensor::row(z.clone()))?;
            let decoded = model.decode_on(&mut tape, zv)?;
            let full = tape.value(decoded).to_points()?;

            let mut rigid_record = None;
            if it > 0 && it % config.rigid_period == 0 {
                let before = dissimilarity(&full, points, &corr, &transform, use_weights)?;
                let seen_before = seen_error(&full, points, &corr, &transform);
                transform = rigid_step(&full, points, &corr, use_weights)?;
                rigid_record = Some(RigidStepRecord {
                    objective_before: before,
                    objective_after: dissimilarity(&full, points, &corr, &transform, use_weights)?,
                    seen_before,
                    seen_after: seen_error(&full, points, &corr, &transform),
                });
            }

            let mut refined = false;
            let schedule = &config.refinement;
            if schedule.enabled && refinements < schedule.max_refinements && it > 0 {
                let fixed = schedule.fixed_iteration == Some(it);
                let mut history = seen_history.clone();
                history.push(seen_error(&full, points, &corr, &transform));
                if fixed || plateaued(&history, last_refinement, schedule) {
                    corr = refine_correspondence(points, &full, &transform)?;
                    transform = rigid_step(&full, points, &corr, use_weights)?;
                    refinements += 1;
                    last_refinement = it;
                    refined = true;
                }
            }

            let objective = dissimilarity(&full, points, &corr, &transform, use_weights)?;
            let entry = TraceEntry {
                iteration: it,
                seen_error: seen_error(&full, points, &corr, &transform),
                unseen_error: truth.as_ref().and_then(|t| unseen_error(&full, t, &transform)),
                objective,
                z_hash: latent_hash(&z),
                transform,
                rigid_step: rigid_record,
                refined,
            };
            if !objective.is_finite() {
                return Err(Error::NonFinite {
                    kernel: "dissimilarity",
                });
            }
            if it == config.max_iters {
                return Ok((full, entry, None));
            }

            let idx: alloc::sync::Arc<[usize]> = corr.pairs().iter().map(|p| p.1).collect();
            let selected = tape.gather_rows(decoded, idx)?;
            let aligned: Vec<[f64; 3]> = corr.pairs().iter().map(|&(p, _)| transform.apply(points[p])).collect();
            let target = tape.constant(Tensor::from_points(&aligned))?;
            let mut residual = tape.sub(selected, target)?;
            if use_weights {
                let w = Tensor::column((0..corr.len()).map(|k| sqrt(corr.weight(k))).collect());
                let w = tape.constant(w)?;
                residual = tape.mul(residual, w)?;
            }
            let d = tape.l2_norm(residual)?;
            let grads = tape.backward(d)?;
            let g = grads
                .wrt(zv)
                .map(|t| t.data().to_vec())
                .unwrap_or_else(|| alloc::vec![0.0; dim]);
            Ok((full, entry, Some(g)))
        })();

        match step {
            Ok((full, entry, grad)) => {
                seen_history.push(entry.seen_error);
                trace.entries.push(entry);
                last_good = Some((z.clone(), full, transform, corr.clone()));
                let Some(g) = grad else { break };
                if g.iter().any(|x| !x.is_finite()) {
                    status = CompletionStatus::Diverged { iteration: it + 1 };
                    break;
                }
                for ((zk, vk), gk) in z.iter_mut().zip(velocity.iter_mut()).zip(&g) {
                    *vk = config.momentum * *vk - config.learning_rate * gk;
                    *zk += *vk;
                }
            }
            Err(Error::NonFinite { .. }) => {
                status = CompletionStatus::Diverged { iteration: it };
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let (z, full, transform, corr) = last_good.ok_or(Error::NonFinite { kernel: "decode" })?;
    Ok(Completion {
        mesh: Mesh::with_shared_faces(full, model.topology().shared_faces())?,
        latent: LatentVector::new(z)?,
        transform,
        correspondence: corr,
        trace,
        status,
    })
}

/// One completion per seed, each from its own random prior draw.
pub fn complete_hypotheses(
    points: &[[f64; 3]],
    corr: &Correspondence,
    model: &VaeModel,
    config: &CompletionConfig,
    truth: Option<GroundTruth<'_>>,
    seeds: &[u64],
) -> Result<Vec<Completion>> {
    seeds
        .iter()
        .map(|&seed| {
            let cfg = CompletionConfig {
                seed,
                init: LatentInit::RandomPrior,
                ..config.clone()
            };
            complete(points, corr, model, &cfg, truth)
        })
        .collect()
}

/// Mean of the given codes, computed per coordinate as the minimum plus the
/// mean offset from it with offsets summed in sorted order. The result does
/// not depend on the order of `latents`, and copies of one code average to
/// exactly that code.
pub fn mean_latent(latents: &[LatentVector]) -> Result<LatentVector> {
    let first = latents.first().ok_or(Error::EmptyInput("latent list"))?;
    let dim = first.dim();
    if let Some(z) = latents.iter().find(|z| z.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: z.dim(),
        });
    }
    let k = latents.len() as f64;
    let mut column = Vec::with_capacity(latents.len());
    let mean = (0..dim)
        .map(|d| {
            column.clear();
            column.extend(latents.iter().map(|z| z.as_slice()[d]));
            column.sort_by(f64::total_cmp);
            let base = column[0];
            base + column.iter().map(|x| x - base).sum::<f64>() / k
        })
        .collect();
    LatentVector::new(mean)
}

/// Decodes the mean of per-view completion codes.
pub fn fuse(latents: &[LatentVector], model: &VaeModel) -> Result<Mesh> {
    model.decode(&mean_latent(latents)?)
}

#[cfg(test)]
mod tests;
