use alloc::vec;
use alloc::vec::Vec;

use crate::conv::Activation;
use crate::error::{Error, Result};

/// How the reconstruction residual is reduced to a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconLoss {
    /// Frobenius norm of the `N x 3` residual.
    Norm,
    /// Norm divided by `sqrt(N)`.
    RootMeanSquare,
}

/// How the encoder turns per-vertex features into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Average over vertices.
    Mean,
    /// Concatenate all vertex features; the dense heads see vertex identity.
    Flatten,
}

/// Training-time data augmentation. Magnitudes are fractions of the
/// sample's shape radius.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Augmentation {
    pub enabled: bool,
    /// Std of the per-coordinate Gaussian vertex noise.
    pub noise: f64,
    /// Half-width of the uniform x/y translation.
    pub translation: f64,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl Default for Augmentation {
    fn default() -> Self {
        Self {
            enabled: true,
            noise: 0.005,
            translation: 0.1,
            scale_min: 0.9,
            scale_max: 1.1,
        }
    }
}

impl Augmentation {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct VaeConfig {
    /// Filters `M` per convolution.
    pub filters: usize,
    pub latent_dim: usize,
    /// Weight of the prior (KL) term, applied per sample.
    pub lambda: f64,
    pub encoder_widths: Vec<usize>,
    pub pooling: Pooling,
    /// Per-vertex width produced by the decoder's dense expansion.
    pub decoder_seed_width: usize,
    /// Hidden decoder convolution widths; a final convolution to 3 follows.
    pub decoder_widths: Vec<usize>,
    /// Neighborhood ring order of the convolution patches.
    pub ring: usize,
    pub include_self: bool,
    pub activation: Activation,
    pub recon: ReconLoss,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub augmentation: Augmentation,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl VaeConfig {
    /// Full-scale network: M = 8, latent 128, λ = 1e-8, ADAM 1e-4, batch 2,
    /// 3e5 iterations, 2-ring patches.
    pub fn paper() -> Self {
        Self {
            filters: 8,
            latent_dim: 128,
            lambda: 1e-8,
            encoder_widths: vec![16, 32, 64],
            pooling: Pooling::Mean,
            decoder_seed_width: 16,
            decoder_widths: vec![32, 16],
            ring: 2,
            include_self: true,
            activation: Activation::Elu,
            recon: ReconLoss::Norm,
            learning_rate: 1e-4,
            batch_size: 2,
            iterations: 300_000,
            augmentation: Augmentation::default(),
            seed: 0,
        }
    }

    /// Small network for few-hundred-vertex synthetic meshes.
    pub fn desk() -> Self {
        Self {
            filters: 4,
            latent_dim: 8,
            encoder_widths: vec![8, 16, 32],
            decoder_seed_width: 8,
            decoder_widths: vec![16, 8],
            pooling: Pooling::Flatten,
            lambda: 1e-3,
            learning_rate: 1e-3,
            iterations: 4000,
            ..Self::paper()
        }
    }

    /// Two convolution layers and a 32-dimensional latent space.
    pub fn face() -> Self {
        Self {
            latent_dim: 32,
            encoder_widths: vec![16, 32],
            decoder_widths: vec![16],
            ..Self::paper()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "desk" => Some(Self::desk()),
            "face" => Some(Self::face()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.filters == 0 || self.latent_dim == 0 || self.decoder_seed_width == 0 {
            return bad("filters, latent_dim and decoder_seed_width must be positive");
        }
        if self.encoder_widths.is_empty() || self.encoder_widths.contains(&0) {
            return bad("encoder needs at least one positive width");
        }
        if self.decoder_widths.contains(&0) {
            return bad("decoder widths must be positive");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be finite and non-negative");
        }
        if self.ring == 0 || self.batch_size == 0 {
            return bad("ring and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        let a = &self.augmentation;
        if a.noise < 0.0 || a.translation < 0.0 || a.scale_min <= 0.0 || a.scale_max < a.scale_min {
            return bad("augmentation ranges are invalid");
        }
        Ok(())
    }
}
