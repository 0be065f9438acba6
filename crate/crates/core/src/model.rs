//! Log densities and conditional distributions of the hierarchical model.
//!
//! Observed distances follow `Gamma(psi, psi / (tau_p * delta_ij))`, so the mean is
//! `tau_p * delta_ij` and the variance `(tau_p * delta_ij)^2 / psi`. Each `delta_ij`
//! has an inverse-gamma prior whose mode is the latent distance `||X_i - X_j||`.

use rand::Rng;
use rand_distr::{Open01, StandardNormal};

use crate::special::ln_gamma;
use crate::state::{Hyperparams, ModelState};
use crate::tensor::DistanceTensor;
use crate::triangle::pairs;

/// Gamma distribution, shape/rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSpec {
    pub shape: f64,
    pub rate: f64,
}

impl GammaSpec {
    pub fn new(shape: f64, rate: f64) -> Self {
        debug_assert!(shape > 0.0 && rate > 0.0, "gamma({shape}, {rate})");
        Self { shape, rate }
    }

    /// Shape `psi` and mean `mu`.
    pub fn with_mean(psi: f64, mu: f64) -> Self {
        Self::new(psi, psi / mu)
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }

    pub fn ln_pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * y.ln() - self.rate * y
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_gamma(self, rng)
    }
}

/// Inverse-gamma distribution, shape/scale: density proportional to
/// `x^(-shape - 1) exp(-scale / x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaSpec {
    pub shape: f64,
    pub scale: f64,
}

impl InvGammaSpec {
    pub fn new(shape: f64, scale: f64) -> Self {
        Self { shape, scale }
    }

    pub fn mode(&self) -> f64 {
        self.scale / (self.shape + 1.0)
    }

    /// Finite only for `shape > 1`.
    pub fn mean(&self) -> f64 {
        self.scale / (self.shape - 1.0)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.scale.ln() - ln_gamma(self.shape) - (self.shape + 1.0) * x.ln() - self.scale / x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_inv_gamma(self, rng)
    }
}

/// Exact gamma draw (Marsaglia-Tsang squeeze; shapes below one use the
/// `U^(1/shape)` boost). Results are clamped to the positive normal range.
pub fn sample_gamma<R: Rng + ?Sized>(spec: &GammaSpec, rng: &mut R) -> f64 {
    let ln_draw = if spec.shape < 1.0 {
        let u: f64 = rng.sample(Open01);
        ln_marsaglia_tsang(spec.shape + 1.0, rng) + u.ln() / spec.shape
    } else {
        ln_marsaglia_tsang(spec.shape, rng)
    };
    (ln_draw - spec.rate.ln()).exp().clamp(f64::MIN_POSITIVE, f64::MAX)
}

/// Reciprocal of a `Gamma(shape, rate = scale)` draw.
pub fn sample_inv_gamma<R: Rng + ?Sized>(spec: &InvGammaSpec, rng: &mut R) -> f64 {
    let g = sample_gamma(&GammaSpec::new(spec.shape, spec.scale), rng);
    (1.0 / g).clamp(f64::MIN_POSITIVE, f64::MAX)
}

// log of a unit-rate gamma draw, shape >= 1
fn ln_marsaglia_tsang<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.sample(Open01);
        let z2 = z * z;
        if u < 1.0 - 0.0331 * z2 * z2 || u.ln() < 0.5 * z2 + d * (1.0 - v + v.ln()) {
            return d.ln() + v.ln();
        }
    }
}

/// Log density of a normal with mean zero and variance `var`.
pub(crate) fn ln_normal0(x: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + x * x / var)
}

/// Prior of `delta_ij` given the latent distance and shrinkage.
pub fn delta_prior(latent_distance: f64, gamma: f64) -> InvGammaSpec {
    InvGammaSpec::new(gamma, (gamma + 1.0) * latent_distance)
}

/// Sum over `i < j` and `p` of the gamma log density of `y_ijp`.
pub fn log_likelihood(y: &DistanceTensor, s: &ModelState) -> f64 {
    let m = y.n_replicates();
    let mut total = 0.0;
    for (k, (i, j)) in pairs(y.n_entities()).enumerate() {
        let d = s.delta.get(i, j);
        let obs = y.pair_slice(k);
        for p in 0..m {
            total += GammaSpec::with_mean(s.psi, s.tau[p] * d).ln_pdf(obs[p]);
        }
    }
    total
}

/// Log density of the latent vectors under `N(0, diag(lambda))`.
pub fn log_prior_x(x: &[f64], lambda_diag: &[f64]) -> f64 {
    x.iter().zip(lambda_diag).map(|(&v, &l)| ln_normal0(v, l)).sum()
}

/// Joint log prior of all parameters.
pub fn log_prior(s: &ModelState, h: &Hyperparams) -> f64 {
    let n = s.n_entities();
    let delta_term: f64 = pairs(n)
        .map(|(i, j)| delta_prior(s.latent_distance(i, j), s.gamma).ln_pdf(s.delta.get(i, j)))
        .sum();
    let x_term: f64 = s.x.iter().map(|xi| log_prior_x(xi, &h.lambda_diag)).sum();
    let tau_prior = InvGammaSpec::new(h.alpha, h.beta);
    let tau_term: f64 = s.tau.iter().map(|&t| tau_prior.ln_pdf(t)).sum();
    delta_term
        + x_term
        + tau_term
        + GammaSpec::new(h.a1, h.b1).ln_pdf(s.psi)
        + GammaSpec::new(h.a2, h.b2).ln_pdf(s.gamma)
}

pub fn log_posterior(y: &DistanceTensor, s: &ModelState, h: &Hyperparams) -> f64 {
    log_likelihood(y, s) + log_prior(s, h)
}

/// Full conditional of `delta_ij`:
/// `Inv-Gamma(M psi + gamma, (gamma + 1) ||X_i - X_j|| + psi sum_p y_ijp / tau_p)`.
pub fn delta_conditional(i: usize, j: usize, y: &DistanceTensor, s: &ModelState) -> InvGammaSpec {
    let m = y.n_replicates() as f64;
    let ratio_sum: f64 = (0..y.n_replicates()).map(|p| y.get(i, j, p) / s.tau[p]).sum();
    InvGammaSpec::new(
        m * s.psi + s.gamma,
        (s.gamma + 1.0) * s.latent_distance(i, j) + s.psi * ratio_sum,
    )
}

/// Full conditional of `tau_p`:
/// `Inv-Gamma(alpha + psi N(N-1)/2, beta + psi sum_{i<j} y_ijp / delta_ij)`.
pub fn tau_conditional(p: usize, y: &DistanceTensor, s: &ModelState, h: &Hyperparams) -> InvGammaSpec {
    let ratio_sum: f64 = pairs(y.n_entities()).map(|(i, j)| y.get(i, j, p) / s.delta.get(i, j)).sum();
    InvGammaSpec::new(h.alpha + s.psi * y.n_pairs() as f64, h.beta + s.psi * ratio_sum)
}

/// Mode of the `delta_ij` conditional written as a convex combination of the
/// latent distance and the per-pair MLE `mean_p y_ijp / tau_p`.
pub fn delta_conditional_mode_as_shrinkage(i: usize, j: usize, y: &DistanceTensor, s: &ModelState) -> f64 {
    let m = y.n_replicates() as f64;
    let mle = (0..y.n_replicates()).map(|p| y.get(i, j, p) / s.tau[p]).sum::<f64>() / m;
    let denom = m * s.psi + s.gamma + 1.0;
    (s.gamma + 1.0) / denom * s.latent_distance(i, j) + m * s.psi / denom * mle
}
