use alloc::vec::Vec;

use rand::Rng;

use super::{LossBreakdown, VaeConfig, VaeModel};
use crate::error::{Error, Result};
use crate::grad::{OptimizerState, ParamGrads, Tensor};
use crate::mesh::{centroid, points_radius, Mesh};
use crate::rng::{seeded, standard_normal, standard_normal_vec};

use super::Augmentation;

/// One augmented sample and its reparameterization noise.
#[derive(Debug, Clone)]
pub struct SampleJob {
    pub vertices: Tensor,
    pub eps: Vec<f64>,
}

pub type SampleResult = (ParamGrads, LossBreakdown);

/// Runs per-sample work for a batch. Results must come back in job order;
/// gradients are then summed in that order, so any executor yields the
/// same parameters as [`Sequential`].
pub trait BatchExecutor: Sync {
    fn run(
        &self,
        jobs: &[SampleJob],
        work: &(dyn Fn(&SampleJob) -> Result<SampleResult> + Sync),
    ) -> Vec<Result<SampleResult>>;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl BatchExecutor for Sequential {
    fn run(
        &self,
        jobs: &[SampleJob],
        work: &(dyn Fn(&SampleJob) -> Result<SampleResult> + Sync),
    ) -> Vec<Result<SampleResult>> {
        jobs.iter().map(work).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub total: f64,
    pub recon: f64,
    pub prior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrainStatus {
    Completed,
    /// A non-finite loss or gradient appeared at `iteration`; the model holds
    /// the parameters from before that iteration.
    Diverged {
        iteration: usize,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: VaeModel,
    pub curve: Vec<LossRecord>,
    pub status: TrainStatus,
}

/// Random scale about the centroid, planar (x/y) translation and per-vertex
/// Gaussian noise, all relative to the shape radius. Topology is untouched.
pub fn augment(vertices: &[[f64; 3]], aug: &Augmentation, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    if !aug.enabled {
        return vertices.to_vec();
    }
    let radius = points_radius(vertices);
    let c = centroid(vertices);
    let scale = if aug.scale_max > aug.scale_min {
        rng.random_range(aug.scale_min..aug.scale_max)
    } else {
        aug.scale_min
    };
    let half = aug.translation * radius;
    let (tx, ty) = if half > 0.0 {
        (rng.random_range(-half..half), rng.random_range(-half..half))
    } else {
        (0.0, 0.0)
    };
    let sigma = aug.noise * radius;
    vertices
        .iter()
        .map(|v| {
            let mut p = [
                c[0] + scale * (v[0] - c[0]) + tx,
                c[1] + scale * (v[1] - c[1]) + ty,
                c[2] + scale * (v[2] - c[2]),
            ];
            if sigma > 0.0 {
                for x in &mut p {
                    *x += sigma * standard_normal(rng);
                }
            }
            p
        })
        .collect()
}

pub fn train(dataset: &[Mesh], config: &VaeConfig) -> Result<TrainOutcome> {
    train_with(dataset, config, &Sequential, &mut |_| {})
}

/// ADAM training on `dataset`. Batches, augmentation and noise are drawn
/// from one generator seeded by `config.seed` before any work is
/// dispatched, so the loss curve is reproducible bit for bit.
pub fn train_with(
    dataset: &[Mesh],
    config: &VaeConfig,
    executor: &dyn BatchExecutor,
    progress: &mut dyn FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    let first = dataset.first().ok_or(Error::EmptyInput("training set"))?;
    let model = VaeModel::new(first, config)?;
    train_from(model, dataset, config, executor, progress)
}

/// Continues training `model` with the optimizer, batch and budget
/// settings of `config`. The model's own architecture is kept.
pub fn train_from(
    mut model: VaeModel,
    dataset: &[Mesh],
    config: &VaeConfig,
    executor: &dyn BatchExecutor,
    progress: &mut dyn FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    for mesh in dataset {
        model.topology().check(mesh)?;
    }
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if model.latent_dim() != config.latent_dim {
        return Err(Error::DimensionMismatch {
            expected: model.latent_dim(),
            got: config.latent_dim,
        });
    }
    let mut optimizer = OptimizerState::adam(config.learning_rate);
    let mut rng = seeded(crate::rng::derive_seed(config.seed, 1));
    let mut curve = Vec::with_capacity(config.iterations);
    let batch = config.batch_size;
    let lambda = config.lambda;
    let param_count = model.params.len();

    for iteration in 0..config.iterations {
        let jobs: Vec<SampleJob> = (0..batch)
            .map(|_| {
                let idx = rng.random_range(0..dataset.len());
                let verts = augment(dataset[idx].vertices(), &config.augmentation, &mut rng);
                SampleJob {
                    vertices: Tensor::from_points(&verts),
                    eps: standard_normal_vec(&mut rng, config.latent_dim),
                }
            })
            .collect();

        let results = {
            let frozen = &model;
            executor.run(&jobs, &|job: &SampleJob| {
                frozen.sample_gradients(&job.vertices, &job.eps, lambda)
            })
        };

        let mut grads = ParamGrads::empty(param_count);
        let mut sums = LossBreakdown {
            total: 0.0,
            recon: 0.0,
            prior: 0.0,
        };
        let mut diverged = false;
        for r in results {
            match r {
                Ok((g, l)) => {
                    grads.merge(&g);
                    sums.total += l.total;
                    sums.recon += l.recon;
                    sums.prior += l.prior;
                }
                Err(Error::NonFinite { .. }) => diverged = true,
                Err(e) => return Err(e),
            }
        }
        grads.scale(1.0 / batch as f64);
        if diverged || !grads_finite(&grads, param_count) {
            return Ok(TrainOutcome {
                model,
                curve,
                status: TrainStatus::Diverged { iteration },
            });
        }
        model.params.accumulate(&grads);
        optimizer.step(&mut model.params);

        let record = LossRecord {
            iteration,
            total: sums.total / batch as f64,
            recon: sums.recon / batch as f64,
            prior: sums.prior / batch as f64,
        };
        progress(&record);
        curve.push(record);
    }
    Ok(TrainOutcome {
        model,
        curve,
        status: TrainStatus::Completed,
    })
}

fn grads_finite(grads: &ParamGrads, count: usize) -> bool {
    (0..count).all(|i| grads.get(crate::grad::ParamId(i)).is_none_or(|t| t.is_finite()))
}
