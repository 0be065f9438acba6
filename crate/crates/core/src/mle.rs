//! Maximum likelihood estimates of `delta`, `tau` and `psi`.
//!
//! The likelihood only sees the products `tau_p * delta_ij`, so estimates are
//! reported with the geometric mean of `tau` fixed at one.

use serde::{Deserialize, Serialize};

use crate::error::{HmdsError, Result};
use crate::special::digamma_minus_ln;
use crate::tensor::DistanceTensor;
use crate::triangle::UpperTriangle;

const PSI_MIN: f64 = 1e-3;
const PSI_MAX: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleEstimate {
    pub delta_hat: UpperTriangle,
    pub tau_hat: Vec<f64>,
    pub psi_hat: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Output of [`fit_delta_tau`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTauFit {
    pub delta: UpperTriangle,
    pub tau: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Root of the shape equation, flagged when it hit the search bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiFit {
    pub psi: f64,
    pub capped: bool,
}

/// Starting point: `tau_p` is the replicate mean over the global mean, `delta_ij`
/// the across-replicate mean of `y_ijp / tau_p`.
pub fn initial_delta_tau(y: &DistanceTensor) -> (UpperTriangle, Vec<f64>) {
    let (n_pairs, m) = (y.n_pairs(), y.n_replicates());
    let global = y.values().iter().sum::<f64>() / (n_pairs * m) as f64;
    let tau: Vec<f64> =
        (0..m).map(|p| (0..n_pairs).map(|k| y.pair_slice(k)[p]).sum::<f64>() / n_pairs as f64 / global).collect();
    let delta = delta_given_tau(y, &tau);
    (delta, tau)
}

fn delta_given_tau(y: &DistanceTensor, tau: &[f64]) -> UpperTriangle {
    let m = y.n_replicates() as f64;
    let values = (0..y.n_pairs()).map(|k| y.pair_slice(k).iter().zip(tau).map(|(v, t)| v / t).sum::<f64>() / m).collect();
    UpperTriangle::from_values(y.n_entities(), values)
}

fn tau_given_delta(y: &DistanceTensor, delta: &UpperTriangle) -> Vec<f64> {
    let n_pairs = y.n_pairs() as f64;
    (0..y.n_replicates())
        .map(|p| (0..y.n_pairs()).map(|k| y.pair_slice(k)[p] / delta.values()[k]).sum::<f64>() / n_pairs)
        .collect()
}

fn normalize_gauge(delta: &mut UpperTriangle, tau: &mut [f64]) {
    let gm = (tau.iter().map(|t| t.ln()).sum::<f64>() / tau.len() as f64).exp();
    tau.iter_mut().for_each(|t| *t /= gm);
    delta.values_mut().iter_mut().for_each(|d| *d *= gm);
}

/// One coordinate-ascent sweep: `tau` given `delta`, then `delta` given `tau`,
/// then the geometric-mean normalization.
pub fn mle_sweep(y: &DistanceTensor, delta: &UpperTriangle) -> (UpperTriangle, Vec<f64>) {
    let mut tau = tau_given_delta(y, delta);
    let mut delta = delta_given_tau(y, &tau);
    normalize_gauge(&mut delta, &mut tau);
    (delta, tau)
}

/// Alternate the two likelihood equations until the largest relative change drops below `tol`.
pub fn fit_delta_tau(y: &DistanceTensor, tol: f64, max_iter: usize) -> DeltaTauFit {
    let (mut delta, mut tau) = initial_delta_tau(y);
    normalize_gauge(&mut delta, &mut tau);
    for it in 1..=max_iter {
        let (d_next, t_next) = mle_sweep(y, &delta);
        let change = rel_change(delta.values(), d_next.values()).max(rel_change(&tau, &t_next));
        delta = d_next;
        tau = t_next;
        if change < tol {
            return DeltaTauFit { delta, tau, converged: true, iterations: it };
        }
    }
    DeltaTauFit { delta, tau, converged: false, iterations: max_iter }
}

fn rel_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter().zip(new).map(|(a, b)| ((b - a) / a).abs()).fold(0.0, f64::max)
}

/// Right-hand side of the shape equation `digamma(psi) - ln(psi) = 1 + mean(ln r - r)`,
/// with residual ratios `r = y / (tau delta)`.
pub fn psi_equation_rhs(y: &DistanceTensor, delta: &UpperTriangle, tau: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..y.n_pairs() {
        let d = delta.values()[k];
        for (v, t) in y.pair_slice(k).iter().zip(tau) {
            let r = v / (t * d);
            acc += r.ln() - r;
        }
    }
    1.0 + acc / y.values().len() as f64
}

/// Solve the shape equation by bisection on `ln psi` over `[1e-3, 1e6]`.
pub fn fit_psi(y: &DistanceTensor, delta: &UpperTriangle, tau: &[f64], tol: f64) -> Result<PsiFit> {
    let rhs = psi_equation_rhs(y, delta, tau);
    if !rhs.is_finite() {
        return Err(HmdsError::InvalidInput("non-finite residuals".into()));
    }
    // ln r - r <= -1 with equality only at r = 1
    if rhs >= -1e-14 {
        return Err(HmdsError::VanishingResiduals);
    }
    let f = |ln_psi: f64| digamma_minus_ln(ln_psi.exp()) - rhs;
    let (mut lo, mut hi) = (PSI_MIN.ln(), PSI_MAX.ln());
    if f(lo) >= 0.0 {
        log::warn!("psi root below {PSI_MIN}; capping");
        return Ok(PsiFit { psi: PSI_MIN, capped: true });
    }
    if f(hi) <= 0.0 {
        log::warn!("psi root above {PSI_MAX}; capping");
        return Ok(PsiFit { psi: PSI_MAX, capped: true });
    }
    while hi - lo > tol.max(1e-15) {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(PsiFit { psi: (0.5 * (lo + hi)).exp(), capped: false })
}

/// Full MLE: `delta` and `tau` by alternation, then `psi`.
pub fn fit_mle(y: &DistanceTensor, tol: f64, max_iter: usize) -> Result<MleEstimate> {
    let fit = fit_delta_tau(y, tol, max_iter);
    let psi = fit_psi(y, &fit.delta, &fit.tau, 1e-12)?;
    Ok(MleEstimate {
        delta_hat: fit.delta,
        tau_hat: fit.tau,
        psi_hat: psi.psi,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::log_likelihood;
    use crate::state::ModelState;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gm(v: &[f64]) -> f64 {
        (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp()
    }

    #[test]
    fn constant_tensor() {
        let y = DistanceTensor::from_fn(4, 3, |_, _, _| 2.0);
        let fit = fit_delta_tau(&y, 1e-12, 100);
        assert!(fit.converged);
        assert!(fit.delta.values().iter().all(|&d| (d - 2.0).abs() < 1e-12));
        assert!(fit.tau.iter().all(|&t| (t - 1.0).abs() < 1e-12));
    }

    #[test]
    fn recovers_exact_product_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 5;
        let mut tau: Vec<f64> = (0..4).map(|_| 0.5 + rng.random::<f64>()).collect();
        let g = gm(&tau);
        tau.iter_mut().for_each(|t| *t /= g);
        let delta = UpperTriangle::from_fn(n, |_, _| 0.1 + rng.random::<f64>());
        let y = DistanceTensor::from_fn(n, 4, |i, j, p| tau[p] * delta.get(i, j));
        let fit = fit_delta_tau(&y, 1e-12, 1000);
        assert!(fit.converged);
        for (a, b) in fit.tau.iter().zip(&tau) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in fit.delta.values().iter().zip(delta.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn single_replicate() {
        let y = DistanceTensor::from_fn(4, 1, |i, j, _| 0.1 * (i + j) as f64 + 0.05);
        let fit = fit_delta_tau(&y, 1e-12, 100);
        assert_eq!(fit.tau, vec![1.0]);
        for (k, d) in fit.delta.values().iter().enumerate() {
            assert!((d - y.pair_slice(k)[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn likelihood_never_decreases_across_sweeps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = DistanceTensor::from_fn(6, 5, |_, _, _| 0.05 + rng.random::<f64>());
        let (mut delta, mut tau) = initial_delta_tau(&y);
        let ll = |d: &UpperTriangle, t: &[f64]| {
            let s = ModelState { x: vec![vec![0.0; 5]; 6], delta: d.clone(), tau: t.to_vec(), psi: 3.0, gamma: 1.0 };
            log_likelihood(&y, &s)
        };
        let mut prev = ll(&delta, &tau);
        for _ in 0..30 {
            (delta, tau) = mle_sweep(&y, &delta);
            let cur = ll(&delta, &tau);
            assert!(cur >= prev - 1e-9, "{cur} < {prev}");
            prev = cur;
        }
    }

    #[test]
    fn scaling_tensor_scales_delta_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = DistanceTensor::from_fn(5, 4, |_, _, _| 0.05 + rng.random::<f64>());
        let a = fit_delta_tau(&y, 1e-13, 10_000);
        let b = fit_delta_tau(&y.map(|v| 3.0 * v), 1e-13, 10_000);
        for (x, z) in a.tau.iter().zip(&b.tau) {
            assert!((x - z).abs() < 1e-9);
        }
        for (x, z) in a.delta.values().iter().zip(b.delta.values()) {
            assert!((3.0 * x - z).abs() < 1e-9);
        }
    }

    #[test]
    fn converged_fit_satisfies_both_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = DistanceTensor::from_fn(6, 7, |_, _, _| 0.05 + rng.random::<f64>());
        let fit = fit_delta_tau(&y, 1e-13, 10_000);
        assert!(fit.converged);
        assert!((gm(&fit.tau) - 1.0).abs() < 1e-12);
        for k in 0..y.n_pairs() {
            let rhs = y.pair_slice(k).iter().zip(&fit.tau).map(|(v, t)| v / t).sum::<f64>() / 7.0;
            assert!((fit.delta.values()[k] - rhs).abs() < 1e-10);
        }
        for p in 0..7 {
            let rhs = (0..y.n_pairs()).map(|k| y.pair_slice(k)[p] / fit.delta.values()[k]).sum::<f64>() / 15.0;
            assert!((fit.tau[p] - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_products_are_degenerate_for_psi() {
        let tau = [0.5, 2.0];
        let y = DistanceTensor::from_fn(3, 2, |i, j, p| tau[p] * (0.2 + (i + j) as f64 * 0.1));
        let fit = fit_delta_tau(&y, 1e-13, 1000);
        assert!(matches!(fit_psi(&y, &fit.delta, &fit.tau, 1e-10), Err(HmdsError::VanishingResiduals)));
    }

    #[test]
    fn psi_root_satisfies_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = DistanceTensor::from_fn(5, 6, |_, _, _| 0.2 + rng.random::<f64>());
        let fit = fit_delta_tau(&y, 1e-12, 1000);
        let psi = fit_psi(&y, &fit.delta, &fit.tau, 1e-13).unwrap();
        assert!(!psi.capped);
        let rhs = psi_equation_rhs(&y, &fit.delta, &fit.tau);
        assert!((digamma_minus_ln(psi.psi) - rhs).abs() < 1e-10);
    }

    #[test]
    fn tiny_residuals_cap_at_upper_bracket() {
        // ratios 1 +- 1e-4 put the root near psi = 1e8
        let y = DistanceTensor::from_fn(2, 2, |_, _, p| if p == 0 { 1.0 - 1e-4 } else { 1.0 + 1e-4 });
        let delta = UpperTriangle::filled(2, 1.0);
        let out = fit_psi(&y, &delta, &[1.0, 1.0], 1e-10).unwrap();
        assert!(out.capped && out.psi == 1e6);
    }
}
