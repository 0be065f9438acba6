//! Model parameters, hyperparameters and chain output.

use serde::{Deserialize, Serialize};

use crate::error::{HmdsError, Result};
use crate::triangle::UpperTriangle;

/// One point in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    /// Latent coordinates, `N` vectors of dimension `N - 1`.
    pub x: Vec<Vec<f64>>,
    /// Systematic dissimilarities, one per unordered pair.
    pub delta: UpperTriangle,
    /// Replicate scales.
    pub tau: Vec<f64>,
    /// Gamma likelihood shape.
    pub psi: f64,
    /// Shrinkage toward the Euclidean configuration.
    pub gamma: f64,
}

impl ModelState {
    pub fn n_entities(&self) -> usize {
        self.x.len()
    }

    pub fn n_replicates(&self) -> usize {
        self.tau.len()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Euclidean distance between latent vectors `i` and `j`.
    pub fn latent_distance(&self, i: usize, j: usize) -> f64 {
        euclidean(&self.x[i], &self.x[j])
    }

    /// Positivity and shape checks.
    pub fn check(&self) -> Result<()> {
        let n = self.x.len();
        let bad = |msg: String| Err(HmdsError::InvalidInput(msg));
        if self.delta.n() != n {
            return bad(format!("delta is for {} entities, X has {n}", self.delta.n()));
        }
        if let Some(row) = self.x.iter().find(|row| row.len() != self.dim()) {
            return bad(format!("ragged X row of length {}", row.len()));
        }
        if self.x.iter().flatten().any(|v| !v.is_finite()) {
            return bad("non-finite latent coordinate".into());
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.delta.values().iter().all(|&d| positive(d)) {
            return bad("delta must be positive".into());
        }
        if !self.tau.iter().all(|&t| positive(t)) {
            return bad("tau must be positive".into());
        }
        if !positive(self.psi) || !positive(self.gamma) {
            return bad(format!("psi={} gamma={} must be positive", self.psi, self.gamma));
        }
        Ok(())
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Prior hyperparameters. Gamma priors use the shape/rate parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Shape and rate of the gamma prior on `psi`.
    pub a1: f64,
    pub b1: f64,
    /// Shape and rate of the gamma prior on `gamma`.
    pub a2: f64,
    pub b2: f64,
    /// Shape and scale of the inverse-gamma prior on each `tau`.
    pub alpha: f64,
    pub beta: f64,
    /// Diagonal of the latent covariance.
    pub lambda_diag: Vec<f64>,
}

impl Hyperparams {
    /// `a1 = b1 = a2 = b2 = 0.01`, `alpha = beta = 1`, with the given latent covariance diagonal.
    pub fn with_lambda(lambda_diag: Vec<f64>) -> Self {
        Self { a1: 0.01, b1: 0.01, a2: 0.01, b2: 0.01, alpha: 1.0, beta: 1.0, lambda_diag }
    }

    pub fn check(&self) -> Result<()> {
        let scalars = [self.a1, self.b1, self.a2, self.b2, self.alpha, self.beta];
        if scalars.iter().chain(&self.lambda_diag).all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(HmdsError::InvalidInput("hyperparameters must be positive".into()))
        }
    }
}

/// Acceptance fractions of the Metropolis-Hastings blocks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    /// One entry per latent vector.
    pub x: Vec<f64>,
    pub psi: f64,
    pub gamma: f64,
}

/// Retained post-burn-in draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub draws: Vec<ModelState>,
    pub n_burnin: usize,
    pub thin: usize,
    pub acceptance_rates: AcceptanceRates,
    pub rng_seed: u64,
}

impl ChainOutput {
    pub fn n_entities(&self) -> usize {
        self.draws.first().map_or(0, ModelState::n_entities)
    }

    pub fn n_replicates(&self) -> usize {
        self.draws.first().map_or(0, ModelState::n_replicates)
    }
}
