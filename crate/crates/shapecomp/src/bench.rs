//! Benchmark: partial cases from held-out shapes, latent completion and the
//! nearest-neighbor baseline, scored per case.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use shapecomp_core::completion::{complete, Completion, CompletionConfig, CompletionTrace, GroundTruth};
use shapecomp_core::eval::{nn_baseline, score, CompletionScore, ConvergenceReport};
use shapecomp_core::mesh::Mesh;
use shapecomp_core::partial::{corrupt_correspondence, hyperplane_cut, ring_viewpoints, virtual_scan, PartialShape};
use shapecomp_core::rng::derive_seed;
use shapecomp_core::vae::VaeModel;

use crate::csv_out::ResultRow;
use crate::error::{Error, Result};
use crate::parallel::map_ordered;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Hyperplane cuts through the centroid with random normals.
    pub cut_cases: usize,
    /// Virtual scans from viewpoints on a ring around each shape.
    pub scan_cases: usize,
    /// Scanner distance from the centroid in shape radii.
    pub scan_distance: f64,
    /// Scanner height above the centroid in shape radii.
    pub scan_elevation: f64,
    /// Fraction of correspondences shuffled before completion.
    pub corruption: f64,
    pub nn_baseline: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            cut_cases: 12,
            scan_cases: 12,
            scan_distance: 3.0,
            scan_elevation: 0.3,
            corruption: 0.0,
            nn_baseline: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub id: String,
    /// Index into the held-out shapes.
    pub member: usize,
    pub partial: PartialShape,
}

/// Entry of the benchmark manifest (the case list without point data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub member: usize,
    pub points: usize,
    pub provenance: shapecomp_core::partial::Provenance,
    pub corruption: Option<shapecomp_core::partial::Corruption>,
}

impl From<&BenchCase> for CaseRecord {
    fn from(c: &BenchCase) -> Self {
        Self {
            id: c.id.clone(),
            member: c.member,
            points: c.partial.len(),
            provenance: c.partial.provenance,
            corruption: c.partial.corruption,
        }
    }
}

/// Cuts first, then scans; case `k` of each kind uses held-out shape
/// `k mod |shapes|`.
pub fn make_cases(shapes: &[Mesh], config: &BenchConfig) -> Result<Vec<BenchCase>> {
    if shapes.is_empty() {
        return Err(Error::Core(shapecomp_core::Error::EmptyInput("held-out shapes")));
    }
    let mut cases = Vec::new();
    for k in 0..config.cut_cases {
        let member = k % shapes.len();
        let partial = hyperplane_cut(&shapes[member], derive_seed(config.seed, k as u64))?;
        cases.push((format!("cut{k:03}"), member, partial));
    }
    for k in 0..config.scan_cases {
        let member = k % shapes.len();
        let views = ring_viewpoints(
            &shapes[member],
            config.scan_cases,
            config.scan_distance,
            config.scan_elevation,
        );
        let partial = virtual_scan(&shapes[member], views[k])?;
        cases.push((format!("scan{k:03}"), member, partial));
    }
    cases
        .into_iter()
        .enumerate()
        .map(|(i, (id, member, partial))| {
            let partial = if config.corruption > 0.0 {
                corrupt_correspondence(
                    &partial,
                    config.corruption,
                    derive_seed(config.seed, 1_000_000 + i as u64),
                )?
            } else {
                partial
            };
            Ok(BenchCase { id, member, partial })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub ours: CompletionScore,
    pub nn: Option<CompletionScore>,
    pub completion: Completion,
    pub rows: Vec<ResultRow>,
}

fn row(case_id: &str, method: &str, s: &CompletionScore, runtime_ms: f64) -> ResultRow {
    ResultRow {
        case_id: case_id.into(),
        method: method.into(),
        err_seen: s.err_seen,
        err_unseen: s.err_unseen,
        err_total: s.err_total,
        vol_err_pct: s.vol_err_pct,
        runtime_ms,
    }
}

pub const METHOD_OURS: &str = "ours";
pub const METHOD_NN: &str = "nn";

/// Completes one case and, when `training` is given, runs the baseline.
pub fn run_case(
    model: &VaeModel,
    shapes: &[Mesh],
    training: Option<&[Mesh]>,
    case: &BenchCase,
    config: &CompletionConfig,
) -> Result<CaseOutcome> {
    let gt = &shapes[case.member];
    let ps = &case.partial;
    let started = Instant::now();
    let completion = complete(
        &ps.points,
        &ps.correspondence,
        model,
        config,
        Some(GroundTruth {
            vertices: gt.vertices(),
            mask: &ps.mask,
        }),
    )?;
    let ours = score(&completion.mesh_in_partial_frame()?, gt, &ps.mask)?;
    let mut rows = vec![row(&case.id, METHOD_OURS, &ours, started.elapsed().as_secs_f64() * 1e3)];
    let nn = match training {
        Some(training) => {
            let started = Instant::now();
            let choice = nn_baseline(ps, training)?;
            let s = score(&choice.mesh, gt, &ps.mask)?;
            rows.push(row(&case.id, METHOD_NN, &s, started.elapsed().as_secs_f64() * 1e3));
            Some(s)
        }
        None => None,
    };
    Ok(CaseOutcome {
        ours,
        nn,
        completion,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub cases: usize,
    pub mean_unseen_ours: Option<f64>,
    pub mean_unseen_nn: Option<f64>,
    /// Fraction of cases where ours has the lower unseen error.
    pub win_rate: Option<f64>,
    pub convergence: ConvergenceReport,
}

pub struct BenchOutput {
    pub outcomes: Vec<CaseOutcome>,
    pub summary: BenchSummary,
}

impl BenchOutput {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.outcomes.iter().flat_map(|o| o.rows.iter().cloned()).collect()
    }

    pub fn traces(&self) -> Vec<CompletionTrace> {
        self.outcomes.iter().map(|o| o.completion.trace.clone()).collect()
    }
}

/// Runs every case; each case's completion seed is derived from the
/// configured seed and the case index, so results do not depend on the
/// worker count.
pub fn run_bench(
    model: &VaeModel,
    shapes: &[Mesh],
    training: Option<&[Mesh]>,
    cases: &[BenchCase],
    config: &CompletionConfig,
    workers: usize,
) -> Result<BenchOutput> {
    let indexed: Vec<(usize, &BenchCase)> = cases.iter().enumerate().collect();
    let outcomes = map_ordered(workers, &indexed, |(i, case)| {
        let cfg = CompletionConfig {
            seed: derive_seed(config.seed, *i as u64),
            ..config.clone()
        };
        run_case(model, shapes, training, case, &cfg)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let traces: Vec<CompletionTrace> = outcomes.iter().map(|o| o.completion.trace.clone()).collect();
    let convergence = shapecomp_core::eval::convergence_report(&traces)?;
    let pairs: Vec<(f64, f64)> = outcomes
        .iter()
        .filter_map(|o| Some((o.ours.err_unseen?, o.nn?.err_unseen?)))
        .collect();
    let ours: Vec<f64> = outcomes.iter().filter_map(|o| o.ours.err_unseen).collect();
    let summary = BenchSummary {
        cases: outcomes.len(),
        mean_unseen_ours: shapecomp_core::eval::mean(&ours),
        mean_unseen_nn: shapecomp_core::eval::mean(&pairs.iter().map(|p| p.1).collect::<Vec<_>>()),
        win_rate: (!pairs.is_empty()).then(|| pairs.iter().filter(|p| p.0 < p.1).count() as f64 / pairs.len() as f64),
        convergence,
    };
    Ok(BenchOutput { outcomes, summary })
}
