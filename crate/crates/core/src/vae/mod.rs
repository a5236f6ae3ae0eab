//! Graph-convolutional variational autoencoder over one fixed topology.
//!
//! Encoder: convolution stack on the `N x 3` embedding, mean pooling over
//! vertices, two dense heads for the posterior mean and log-variance.
//! Decoder: dense expansion of the latent code to `N x seed_width`, then a
//! convolution stack ending in 3 channels.

mod config;
mod train;

pub use config::{Augmentation, Pooling, ReconLoss, VaeConfig};
pub use train::{
    augment, train, train_from, train_with, BatchExecutor, LossRecord, SampleJob, SampleResult, Sequential,
    TrainOutcome, TrainStatus,
};

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conv::{Dense, EdgeList, FeastConv};
use crate::error::{Error, Result};
use crate::grad::{ParamGrads, ParamStore, Tape, Tensor, Var};
use crate::math::{exp, sqrt};
use crate::mesh::{build_neighborhoods, Mesh};

/// A point in latent space.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { kernel: "latent" });
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(alloc::vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `(1 − α) self + α other`.
    pub fn lerp(&self, other: &LatentVector, alpha: f64) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (1.0 - alpha) * a + alpha * b)
                .collect(),
        ))
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Diagonal Gaussian posterior `q(z | X)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderOutput {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl EncoderOutput {
    pub fn mean(&self) -> LatentVector {
        LatentVector(self.mu.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub prior: f64,
}

/// `KL(N(μ, diag σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² − log σ² − 1)`.
pub fn kl_divergence(mu: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_var)
        .map(|(m, lv)| m * m + exp(*lv) - lv - 1.0)
        .sum::<f64>()
}

#[derive(Debug, Clone)]
struct Encoder {
    convs: Vec<FeastConv>,
    mu: Dense,
    log_var: Dense,
}

#[derive(Debug, Clone)]
struct Decoder {
    expand: Dense,
    convs: Vec<FeastConv>,
}

/// The reference topology a model is bound to.
#[derive(Debug, Clone)]
pub struct Topology {
    faces: Arc<[[usize; 3]]>,
    vertex_count: usize,
    hash: u64,
    edges: EdgeList,
}

impl Topology {
    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn shared_faces(&self) -> Arc<[[usize; 3]]> {
        self.faces.clone()
    }

    pub fn edges(&self) -> &EdgeList {
        &self.edges
    }

    pub fn check(&self, mesh: &Mesh) -> Result<()> {
        let got_hash = mesh.topology_hash();
        if mesh.vertex_count() != self.vertex_count || got_hash != self.hash {
            return Err(Error::TopologyMismatch {
                expected: self.vertex_count,
                got: mesh.vertex_count(),
                expected_hash: self.hash,
                got_hash,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct VaeModel {
    config: VaeConfig,
    params: ParamStore,
    encoder: Encoder,
    decoder: Decoder,
    topology: Topology,
}

impl VaeModel {
    /// Xavier-initialized model for the topology of `reference`, seeded
    /// from `config.seed`.
    pub fn new(reference: &Mesh, config: &VaeConfig) -> Result<Self> {
        config.validate()?;
        let graph = build_neighborhoods(reference, config.ring)?;
        let edges = EdgeList::new(&graph, config.include_self)?;
        let n = reference.vertex_count();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let m = config.filters;

        let mut convs = Vec::new();
        let mut width = 3;
        for (k, &w) in config.encoder_widths.iter().enumerate() {
            let name = alloc::format!("encoder.conv{k}");
            convs.push(FeastConv::new(
                &mut params,
                &name,
                width,
                w,
                m,
                config.include_self,
                &mut rng,
            )?);
            width = w;
        }
        let pooled = match config.pooling {
            Pooling::Mean => width,
            Pooling::Flatten => width * n,
        };
        let mu = Dense::new(&mut params, "encoder.mu", pooled, config.latent_dim, &mut rng);
        let log_var = Dense::new(&mut params, "encoder.log_var", pooled, config.latent_dim, &mut rng);

        let expand = Dense::new(
            &mut params,
            "decoder.expand",
            config.latent_dim,
            n * config.decoder_seed_width,
            &mut rng,
        );
        let mut dconvs = Vec::new();
        let mut width = config.decoder_seed_width;
        for (k, &w) in config.decoder_widths.iter().chain(core::iter::once(&3)).enumerate() {
            let name = alloc::format!("decoder.conv{k}");
            dconvs.push(FeastConv::new(
                &mut params,
                &name,
                width,
                w,
                m,
                config.include_self,
                &mut rng,
            )?);
            width = w;
        }

        Ok(Self {
            config: config.clone(),
            params,
            encoder: Encoder { convs, mu, log_var },
            decoder: Decoder { expand, convs: dconvs },
            topology: Topology {
                faces: reference.shared_faces(),
                vertex_count: n,
                hash: reference.topology_hash(),
                edges,
            },
        })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Overwrites parameter values by name; every model parameter must be
    /// present with a matching shape.
    pub fn load_named(&mut self, named: &[(String, Tensor)]) -> Result<()> {
        if named.len() != self.params.len() {
            return Err(Error::InvalidConfig(alloc::format!(
                "checkpoint holds {} tensors, model has {}",
                named.len(),
                self.params.len()
            )));
        }
        for (name, value) in named {
            let id = self
                .params
                .find(name)
                .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown parameter {name}")))?;
            self.params.set_value(id, value.clone())?;
        }
        Ok(())
    }

    /// Encoder on a tape: `x: N x 3` to `(μ, log σ²)`, both `1 x d`.
    pub fn encode_on(&self, tape: &mut Tape<'_>, x: Var) -> Result<(Var, Var)> {
        let mut h = x;
        for conv in &self.encoder.convs {
            h = conv.forward(tape, h, &self.topology.edges)?;
            h = self.config.activation.apply(tape, h)?;
        }
        let pooled = match self.config.pooling {
            Pooling::Mean => tape.mean(h, Some(0))?,
            Pooling::Flatten => {
                let [n, c] = tape.shape(h);
                tape.reshape(h, 1, n * c)?
            }
        };
        let mu = self.encoder.mu.forward(tape, pooled)?;
        let log_var = self.encoder.log_var.forward(tape, pooled)?;
        Ok((mu, log_var))
    }

    /// Decoder on a tape: `z: 1 x d` to `N x 3`.
    pub fn decode_on(&self, tape: &mut Tape<'_>, z: Var) -> Result<Var> {
        let n = self.topology.vertex_count;
        let h = self.decoder.expand.forward(tape, z)?;
        let mut h = tape.reshape(h, n, self.config.decoder_seed_width)?;
        for conv in &self.decoder.convs {
            h = self.config.activation.apply(tape, h)?;
            h = conv.forward(tape, h, &self.topology.edges)?;
        }
        Ok(h)
    }

    fn recon_on(&self, tape: &mut Tape<'_>, decoded: Var, target: Var) -> Result<Var> {
        let r = tape.sub(decoded, target)?;
        let norm = tape.l2_norm(r)?;
        match self.config.recon {
            ReconLoss::Norm => Ok(norm),
            ReconLoss::RootMeanSquare => tape.scale(norm, 1.0 / sqrt(self.topology.vertex_count as f64)),
        }
    }

    /// Closed-form KL on the tape.
    fn kl_on(tape: &mut Tape<'_>, mu: Var, log_var: Var) -> Result<Var> {
        let mu2 = tape.mul(mu, mu)?;
        let var = tape.exp(log_var)?;
        let t = tape.add(mu2, var)?;
        let t = tape.sub(t, log_var)?;
        let one = tape.constant(Tensor::scalar(1.0))?;
        let t = tape.sub(t, one)?;
        let s = tape.sum(t, None)?;
        tape.scale(s, 0.5)
    }

    pub fn encode(&self, mesh: &Mesh) -> Result<EncoderOutput> {
        self.topology.check(mesh)?;
        let mut tape = Tape::frozen(&self.params);
        let x = tape.constant(Tensor::from_points(mesh.vertices()))?;
        let (mu, lv) = self.encode_on(&mut tape, x)?;
        Ok(EncoderOutput {
            mu: tape.value(mu).data().to_vec(),
            log_var: tape.value(lv).data().to_vec(),
        })
    }

    pub fn decode_points(&self, z: &LatentVector) -> Result<Vec<[f64; 3]>> {
        check_dim(self.config.latent_dim, z.dim())?;
        let mut tape = Tape::frozen(&self.params);
        let zv = tape.constant(Tensor::row(z.0.clone()))?;
        let out = self.decode_on(&mut tape, zv)?;
        tape.value(out).to_points()
    }

    pub fn decode(&self, z: &LatentVector) -> Result<Mesh> {
        Mesh::with_shared_faces(self.decode_points(z)?, self.topology.faces.clone())
    }

    /// Loss at the posterior mean (no sampling).
    pub fn loss(&self, mesh: &Mesh, lambda: f64) -> Result<LossBreakdown> {
        let enc = self.encode(mesh)?;
        let decoded = self.decode_points(&enc.mean())?;
        let mut sq = 0.0;
        for (a, b) in decoded.iter().zip(mesh.vertices()) {
            for k in 0..3 {
                sq += (a[k] - b[k]) * (a[k] - b[k]);
            }
        }
        let mut recon = sqrt(sq);
        if self.config.recon == ReconLoss::RootMeanSquare {
            recon /= sqrt(self.topology.vertex_count as f64);
        }
        let prior = kl_divergence(&enc.mu, &enc.log_var);
        Ok(LossBreakdown {
            total: recon + lambda * prior,
            recon,
            prior,
        })
    }

    /// Reparameterized loss of one sample on `tape`: returns the vars of
    /// `L = L_r + λ L_p`, `L_r` and `L_p`.
    pub fn sample_loss_on(&self, tape: &mut Tape<'_>, vertices: &Tensor, eps: &[f64], lambda: f64) -> Result<[Var; 3]> {
        check_dim(self.topology.vertex_count, vertices.rows())?;
        check_dim(self.config.latent_dim, eps.len())?;
        let x = tape.constant(vertices.clone())?;
        let (mu, log_var) = self.encode_on(tape, x)?;
        let half = tape.scale(log_var, 0.5)?;
        let sigma = tape.exp(half)?;
        let e = tape.constant(Tensor::row(eps.to_vec()))?;
        let noise = tape.mul(sigma, e)?;
        let z = tape.add(mu, noise)?;
        let decoded = self.decode_on(tape, z)?;
        let recon = self.recon_on(tape, decoded, x)?;
        let prior = Self::kl_on(tape, mu, log_var)?;
        let weighted = tape.scale(prior, lambda)?;
        let total = tape.add(recon, weighted)?;
        Ok([total, recon, prior])
    }

    /// One training sample: reparameterized forward pass on `vertices`
    /// with noise `eps`, then the parameter gradients of `L_r + λ L_p`.
    pub fn sample_gradients(&self, vertices: &Tensor, eps: &[f64], lambda: f64) -> Result<(ParamGrads, LossBreakdown)> {
        let mut tape = Tape::with_params(&self.params);
        let [total, recon, prior] = self.sample_loss_on(&mut tape, vertices, eps, lambda)?;
        let breakdown = LossBreakdown {
            total: tape.value(total).item(),
            recon: tape.value(recon).item(),
            prior: tape.value(prior).item(),
        };
        let grads = tape.backward(total)?.param_grads(self.params.len());
        Ok((grads, breakdown))
    }

    /// Decodes `(1 − α) z_a + α z_b`.
    pub fn interpolate(&self, z_a: &LatentVector, z_b: &LatentVector, alpha: f64) -> Result<Mesh> {
        self.decode(&z_a.lerp(z_b, alpha)?)
    }

    /// Decodes `z_base + α (z_plus − z_minus)`.
    pub fn latent_arithmetic(
        &self,
        z_base: &LatentVector,
        z_plus: &LatentVector,
        z_minus: &LatentVector,
        alpha: f64,
    ) -> Result<Mesh> {
        check_dim(z_base.dim(), z_plus.dim())?;
        check_dim(z_base.dim(), z_minus.dim())?;
        let z = z_base
            .0
            .iter()
            .zip(&z_plus.0)
            .zip(&z_minus.0)
            .map(|((b, p), m)| b + alpha * (p - m))
            .collect();
        self.decode(&LatentVector(z))
    }

    /// `z ~ N(0, I)` from `rng`.
    pub fn sample_prior(&self, rng: &mut impl rand::Rng) -> LatentVector {
        LatentVector(crate::rng::standard_normal_vec(rng, self.config.latent_dim))
    }
}

#[cfg(test)]
mod tests;
