//! Blocked Gibbs / Metropolis-Hastings sampler for the hierarchical model.
//!
//! Each sweep draws every `delta_ij` and every `tau_p` from its inverse-gamma
//! full conditional, then updates each latent vector `X_i` by a spherical
//! random-walk proposal and `psi`, `gamma` by log-scale random walks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HmdsError, Result};
use crate::mds::classical_mds;
use crate::mle::initial_delta_tau;
use crate::model::{delta_prior, log_prior_x, sample_inv_gamma, GammaSpec, InvGammaSpec};
use crate::special::ln_gamma;
use crate::state::{euclidean, AcceptanceRates, ChainOutput, Hyperparams, ModelState};
use crate::tensor::DistanceTensor;
use crate::triangle::{pair_index, pairs};

const LAMBDA_FLOOR: f64 = 1e-8;
const ADAPT_BATCH: usize = 50;
const TARGET_LOW: f64 = 0.2;
const TARGET_HIGH: f64 = 0.5;

/// Random-walk proposal scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    /// Standard deviation of each coordinate's increment, one per latent vector.
    pub x: Vec<f64>,
    pub log_psi: f64,
    pub log_gamma: f64,
}

impl StepSizes {
    pub fn uniform(n_entities: usize, x: f64, log_psi: f64, log_gamma: f64) -> Self {
        Self { x: vec![x; n_entities], log_psi, log_gamma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub rng_seed: u64,
    /// Initial X proposal scale, as a fraction of the mean prior standard deviation.
    pub x_step: f64,
    pub log_psi_step: f64,
    pub log_gamma_step: f64,
    pub adapt: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 30_000,
            n_burnin: 15_000,
            thin: 1,
            rng_seed: 0,
            x_step: 0.1,
            log_psi_step: 0.1,
            log_gamma_step: 0.5,
            adapt: true,
        }
    }
}

impl ChainConfig {
    pub fn check(&self) -> Result<()> {
        let steps_ok = [self.x_step, self.log_psi_step, self.log_gamma_step].iter().all(|s| s.is_finite() && *s >= 0.0);
        if self.n_burnin >= self.n_iter || self.thin == 0 || !steps_ok {
            return Err(HmdsError::InvalidInput(format!(
                "chain config needs burnin < iters, thin >= 1 and nonnegative steps (got iters={} burnin={} thin={})",
                self.n_iter, self.n_burnin, self.thin
            )));
        }
        Ok(())
    }

    /// Proposal scales for a given latent covariance.
    pub fn step_sizes(&self, n_entities: usize, lambda_diag: &[f64]) -> StepSizes {
        let mean_sd = (lambda_diag.iter().sum::<f64>() / lambda_diag.len().max(1) as f64).sqrt();
        StepSizes::uniform(n_entities, self.x_step * mean_sd, self.log_psi_step, self.log_gamma_step)
    }
}

/// Latent covariance diagonal from per-replicate classical MDS: the pooled
/// variance of each embedding axis across entities and replicates.
pub fn empirical_bayes_lambda(y: &DistanceTensor) -> Vec<f64> {
    let (n, m) = (y.n_entities(), y.n_replicates());
    let dim = n - 1;
    let mut acc = vec![0.0; dim];
    for p in 0..m {
        let coords = classical_mds(&y.replicate(p), dim);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += coords.column(k).norm_squared();
        }
    }
    let denom = (m * (n - 1)) as f64;
    acc.into_iter().map(|v| (v / denom).max(LAMBDA_FLOOR)).collect()
}

/// Random start: `X` from its prior, `tau` and `delta` from one moment sweep, `psi = gamma = 1`.
pub fn init_state<R: Rng + ?Sized>(y: &DistanceTensor, h: &Hyperparams, rng: &mut R) -> ModelState {
    let n = y.n_entities();
    let x = (0..n)
        .map(|_| h.lambda_diag.iter().map(|l| l.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let (delta, tau) = initial_delta_tau(y);
    ModelState { x, delta, tau, psi: 1.0, gamma: 1.0 }
}

/// Which Metropolis-Hastings proposals were accepted in one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub x: Vec<bool>,
    pub psi: bool,
    pub gamma: bool,
}

/// One sweep of the sampler, updating `s` in place.
pub fn step<R: Rng + ?Sized>(
    y: &DistanceTensor,
    s: &mut ModelState,
    h: &Hyperparams,
    scales: &StepSizes,
    rng: &mut R,
) -> StepOutcome {
    let (n, m) = (y.n_entities(), y.n_replicates());

    // (1) delta_ij | rest
    for (k, (i, j)) in pairs(n).enumerate() {
        let ratio: f64 = y.pair_slice(k).iter().zip(&s.tau).map(|(v, t)| v / t).sum();
        let spec = InvGammaSpec::new(
            m as f64 * s.psi + s.gamma,
            (s.gamma + 1.0) * s.latent_distance(i, j) + s.psi * ratio,
        );
        s.delta.values_mut()[k] = sample_inv_gamma(&spec, rng);
    }

    // (2) tau_p | rest
    let shape = h.alpha + s.psi * y.n_pairs() as f64;
    for p in 0..m {
        let ratio: f64 = (0..y.n_pairs()).map(|k| y.pair_slice(k)[p] / s.delta.values()[k]).sum();
        s.tau[p] = sample_inv_gamma(&InvGammaSpec::new(shape, h.beta + s.psi * ratio), rng);
    }

    // (3) X_i | delta, gamma
    let mut x_accept = vec![false; n];
    for i in 0..n {
        let scale = scales.x[i];
        if scale <= 0.0 {
            continue;
        }
        let proposal: Vec<f64> = s.x[i].iter().map(|v| v + scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let log_ratio = latent_log_target(s, h, i, &proposal) - latent_log_target(s, h, i, &s.x[i]);
        if accept(log_ratio, rng) {
            s.x[i] = proposal;
            x_accept[i] = true;
        }
    }

    // (4) psi and gamma on the log scale; the Jacobian adds ln(value)
    let suff = LikelihoodStats::new(y, s);
    let psi_prior = GammaSpec::new(h.a1, h.b1);
    let psi_target = |psi: f64| suff.log_likelihood(psi) + psi_prior.ln_pdf(psi) + psi.ln();
    let psi_accept = log_walk(&mut s.psi, scales.log_psi, psi_target, rng);

    let dists: Vec<(f64, f64)> = pairs(n).map(|(i, j)| (s.latent_distance(i, j), s.delta.get(i, j))).collect();
    let gamma_prior = GammaSpec::new(h.a2, h.b2);
    let gamma_target = |g: f64| {
        dists.iter().map(|&(d, delta)| delta_prior(d, g).ln_pdf(delta)).sum::<f64>() + gamma_prior.ln_pdf(g) + g.ln()
    };
    let gamma_accept = log_walk(&mut s.gamma, scales.log_gamma, gamma_target, rng);

    StepOutcome { x: x_accept, psi: psi_accept, gamma: gamma_accept }
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    log_ratio >= 0.0 || rng.sample::<f64, _>(Open01).ln() < log_ratio
}

fn log_walk<R: Rng + ?Sized>(value: &mut f64, scale: f64, target: impl Fn(f64) -> f64, rng: &mut R) -> bool {
    if scale <= 0.0 {
        return false;
    }
    let proposal = *value * (scale * rng.sample::<f64, _>(StandardNormal)).exp();
    if !(proposal > 0.0 && proposal.is_finite()) {
        return false;
    }
    if accept(target(proposal) - target(*value), rng) {
        *value = proposal;
        true
    } else {
        false
    }
}

/// Terms of the log posterior that involve latent vector `i` placed at `xi`.
fn latent_log_target(s: &ModelState, h: &Hyperparams, i: usize, xi: &[f64]) -> f64 {
    let n = s.n_entities();
    let mut total = log_prior_x(xi, &h.lambda_diag);
    for j in (0..n).filter(|&j| j != i) {
        let d = euclidean(xi, &s.x[j]);
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let delta = s.delta.values()[pair_index(n, a, b)];
        total += delta_prior(d, s.gamma).ln_pdf(delta);
    }
    total
}

/// Sufficient statistics of the likelihood as a function of `psi`.
struct LikelihoodStats {
    count: f64,
    sum_ln_y: f64,
    sum_ln_mean: f64,
    sum_ratio: f64,
}

impl LikelihoodStats {
    fn new(y: &DistanceTensor, s: &ModelState) -> Self {
        let mut st = Self { count: 0.0, sum_ln_y: 0.0, sum_ln_mean: 0.0, sum_ratio: 0.0 };
        for k in 0..y.n_pairs() {
            let d = s.delta.values()[k];
            for (v, t) in y.pair_slice(k).iter().zip(&s.tau) {
                let mu = t * d;
                st.count += 1.0;
                st.sum_ln_y += v.ln();
                st.sum_ln_mean += mu.ln();
                st.sum_ratio += v / mu;
            }
        }
        st
    }

    fn log_likelihood(&self, psi: f64) -> f64 {
        self.count * (psi * psi.ln() - ln_gamma(psi)) + (psi - 1.0) * self.sum_ln_y
            - psi * (self.sum_ln_mean + self.sum_ratio)
    }
}

/// Run a chain from [`init_state`] with the config's seed.
pub fn run_chain(y: &DistanceTensor, h: &Hyperparams, cfg: &ChainConfig) -> Result<ChainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let init = init_state(y, h, &mut rng);
    run_chain_from(y, h, cfg, init, &mut rng)
}

/// Run a chain from a given starting state.
///
/// During burn-in with `adapt` set, each block's proposal scale is doubled or halved
/// after every batch of 50 sweeps whose acceptance falls outside `[0.2, 0.5]`.
pub fn run_chain_from<R: Rng + ?Sized>(
    y: &DistanceTensor,
    h: &Hyperparams,
    cfg: &ChainConfig,
    init: ModelState,
    rng: &mut R,
) -> Result<ChainOutput> {
    cfg.check()?;
    h.check()?;
    init.check()?;
    if init.n_entities() != y.n_entities() || init.n_replicates() != y.n_replicates() {
        return Err(HmdsError::InvalidInput("initial state does not match the tensor shape".into()));
    }
    if h.lambda_diag.len() != init.dim() {
        return Err(HmdsError::InvalidInput("lambda dimension does not match X".into()));
    }

    let n = y.n_entities();
    let mut scales = cfg.step_sizes(n, &h.lambda_diag);
    let mut state = init;
    let mut draws = Vec::with_capacity((cfg.n_iter - cfg.n_burnin).div_ceil(cfg.thin));

    let mut batch = Counts::new(n);
    let mut kept = Counts::new(n);
    for it in 0..cfg.n_iter {
        let outcome = step(y, &mut state, h, &scales, rng);
        if let Some(bad) = non_finite(&state) {
            let dump = serde_json::to_string(&state).unwrap_or_else(|_| format!("{state:?}"));
            return Err(HmdsError::NonFinite { iteration: it, dump: format!("{bad}; state = {dump}") });
        }
        if it < cfg.n_burnin {
            if cfg.adapt {
                batch.add(&outcome);
                if batch.sweeps == ADAPT_BATCH {
                    for (i, s) in scales.x.iter_mut().enumerate() {
                        *s = retune(*s, batch.x[i] as f64 / ADAPT_BATCH as f64);
                    }
                    scales.log_psi = retune(scales.log_psi, batch.psi as f64 / ADAPT_BATCH as f64);
                    scales.log_gamma = retune(scales.log_gamma, batch.gamma as f64 / ADAPT_BATCH as f64);
                    batch = Counts::new(n);
                }
            }
            continue;
        }
        kept.add(&outcome);
        if (it - cfg.n_burnin).is_multiple_of(cfg.thin) {
            draws.push(state.clone());
        }
    }

    log::debug!("final proposal scales: {scales:?}");
    Ok(ChainOutput { draws, n_burnin: cfg.n_burnin, thin: cfg.thin, acceptance_rates: kept.rates(), rng_seed: cfg.rng_seed })
}

fn retune(scale: f64, rate: f64) -> f64 {
    if rate < TARGET_LOW {
        scale * 0.5
    } else if rate > TARGET_HIGH {
        scale * 2.0
    } else {
        scale
    }
}

fn non_finite(s: &ModelState) -> Option<&'static str> {
    let ok = |v: f64| v.is_finite() && v > 0.0;
    if !s.delta.values().iter().all(|&v| ok(v)) {
        Some("delta")
    } else if !s.tau.iter().all(|&v| ok(v)) {
        Some("tau")
    } else if !ok(s.psi) {
        Some("psi")
    } else if !ok(s.gamma) {
        Some("gamma")
    } else if !s.x.iter().flatten().all(|v| v.is_finite()) {
        Some("X")
    } else {
        None
    }
}

struct Counts {
    sweeps: usize,
    x: Vec<usize>,
    psi: usize,
    gamma: usize,
}

impl Counts {
    fn new(n: usize) -> Self {
        Self { sweeps: 0, x: vec![0; n], psi: 0, gamma: 0 }
    }

    fn add(&mut self, o: &StepOutcome) {
        self.sweeps += 1;
        for (c, &a) in self.x.iter_mut().zip(&o.x) {
            *c += a as usize;
        }
        self.psi += o.psi as usize;
        self.gamma += o.gamma as usize;
    }

    fn rates(&self) -> AcceptanceRates {
        let d = self.sweeps.max(1) as f64;
        AcceptanceRates {
            x: self.x.iter().map(|&c| c as f64 / d).collect(),
            psi: self.psi as f64 / d,
            gamma: self.gamma as f64 / d,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triangle::UpperTriangle;

    fn toy_state(n: usize, m: usize) -> ModelState {
        ModelState {
            x: (0..n).map(|i| (0..n - 1).map(|k| if k == i % (n - 1) { 0.3 * (i + 1) as f64 } else { 0.0 }).collect()).collect(),
            delta: UpperTriangle::from_fn(n, |i, j| 0.2 + 0.05 * (i + j) as f64),
            tau: (0..m).map(|p| 0.8 + 0.1 * p as f64).collect(),
            psi: 4.0,
            gamma: 2.0,
        }
    }

    fn toy_tensor(n: usize, m: usize) -> DistanceTensor {
        DistanceTensor::from_fn(n, m, |i, j, p| 0.1 + 0.03 * ((i * 5 + j * 3 + p * 7) % 11) as f64)
    }

    #[test]
    fn zero_scales_freeze_mh_blocks() {
        let (n, m) = (4, 3);
        let y = toy_tensor(n, m);
        let h = Hyperparams::with_lambda(vec![0.1; n - 1]);
        let mut s = toy_state(n, m);
        let before = s.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = step(&y, &mut s, &h, &StepSizes::uniform(n, 0.0, 0.0, 0.0), &mut rng);
        assert_eq!(s.x, before.x);
        assert_eq!((s.psi, s.gamma), (before.psi, before.gamma));
        assert_ne!(s.delta, before.delta);
        assert_ne!(s.tau, before.tau);
        assert!(out.x.iter().all(|a| !a) && !out.psi && !out.gamma);
    }

    #[test]
    fn single_step_keeps_state_valid() {
        let (n, m) = (5, 4);
        let y = toy_tensor(n, m);
        let h = Hyperparams::with_lambda(vec![0.05; n - 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = init_state(&y, &h, &mut rng);
        for _ in 0..20 {
            step(&y, &mut s, &h, &StepSizes::uniform(n, 0.1, 0.2, 0.5), &mut rng);
            s.check().unwrap();
        }
    }

    #[test]
    fn init_is_deterministic_and_uses_moment_sweep() {
        let y = toy_tensor(4, 3);
        let h = Hyperparams::with_lambda(vec![0.1; 3]);
        let a = init_state(&y, &h, &mut ChaCha8Rng::seed_from_u64(9));
        let b = init_state(&y, &h, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        a.check().unwrap();
        assert_eq!((a.psi, a.gamma), (1.0, 1.0));
        for (k, (i, j)) in pairs(4).enumerate() {
            let mean = (0..3).map(|p| y.get(i, j, p) / a.tau[p]).sum::<f64>() / 3.0;
            assert!((a.delta.values()[k] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn same_seed_same_chain() {
        let y = toy_tensor(4, 3);
        let h = Hyperparams::with_lambda(empirical_bayes_lambda(&y));
        let cfg = ChainConfig { n_iter: 300, n_burnin: 100, thin: 2, rng_seed: 42, ..Default::default() };
        let a = run_chain(&y, &h, &cfg).unwrap();
        let b = run_chain(&y, &h, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.draws.len(), 100);
    }

    #[test]
    fn bad_config_is_rejected() {
        let y = toy_tensor(3, 2);
        let h = Hyperparams::with_lambda(vec![0.1; 2]);
        let cfg = ChainConfig { n_iter: 10, n_burnin: 10, ..Default::default() };
        assert!(run_chain(&y, &h, &cfg).is_err());
        let cfg = ChainConfig { n_iter: 10, n_burnin: 5, thin: 0, ..Default::default() };
        assert!(run_chain(&y, &h, &cfg).is_err());
    }

    #[test]
    fn lambda_of_collinear_points_has_one_axis() {
        let pos = [0.0f64, 0.4, 1.1, 1.5, 2.6];
        let y = DistanceTensor::from_fn(5, 3, |i, j, _| (pos[i] - pos[j]).abs());
        let lambda = empirical_bayes_lambda(&y);
        let mean = pos.iter().sum::<f64>() / 5.0;
        let var = pos.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((lambda[0] - var).abs() < 1e-10);
        assert!(lambda[1..].iter().all(|&l| l < 1e-7));
    }
}
