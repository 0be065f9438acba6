//! Effective sample size, HPD intervals, posterior-predictive checks and trace export.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain_io::{flatten_state, ChainSchema};
use crate::error::{io_err, HmdsError, Result};
use crate::model::{delta_prior, GammaSpec};
use crate::state::ChainOutput;
use crate::tensor::DistanceTensor;
use crate::triangle::pairs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssEstimate {
    pub ess: f64,
    /// The raw estimate exceeded the series length (negative autocorrelation).
    pub capped: bool,
    /// The series is constant; reported as its length.
    pub constant: bool,
}

/// Effective sample size `n / (1 + 2 sum rho_k)` with Geyer's initial positive
/// sequence: autocorrelations are summed in adjacent pairs until a pair sum
/// turns negative. Capped at `n`.
pub fn ess(series: &[f64]) -> Result<EssEstimate> {
    let n = series.len();
    if n < 10 {
        return Err(HmdsError::InvalidInput(format!("ESS needs at least 10 draws, got {n}")));
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum::<f64>() / nf;
    let var = autocov(0);
    if var <= 0.0 || !var.is_finite() {
        log::warn!("constant series; ESS reported as n");
        return Ok(EssEstimate { ess: nf, capped: false, constant: true });
    }

    let mut pair_sum_total = 0.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / var;
        if pair < 0.0 {
            break;
        }
        pair_sum_total += pair;
        lag += 2;
    }
    // 1 + 2 sum_{k>=1} rho_k = 2 sum_{pairs} - rho_0
    let tau_int = 2.0 * pair_sum_total - 1.0;
    let raw = if tau_int > 0.0 { nf / tau_int } else { f64::INFINITY };
    if raw > nf {
        log::info!("ESS estimate {raw:.1} exceeds n = {n}; capped");
        Ok(EssEstimate { ess: nf, capped: true, constant: false })
    } else {
        Ok(EssEstimate { ess: raw, capped: false, constant: false })
    }
}

/// Shortest interval covering `ceil(mass * n)` of the sorted samples.
pub fn hpd(samples: &[f64], mass: f64) -> (f64, f64) {
    assert!(!samples.is_empty(), "hpd of empty sample");
    assert!(mass > 0.0 && mass < 1.0, "mass must be in (0, 1)");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    hpd_sorted(&sorted, mass)
}

fn hpd_sorted(sorted: &[f64], mass: f64) -> (f64, f64) {
    let n = sorted.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = (sorted[0], sorted[k - 1]);
    for start in 1..=(n - k) {
        let (lo, hi) = (sorted[start], sorted[start + k - 1]);
        if hi - lo < best.1 - best.0 {
            best = (lo, hi);
        }
    }
    best
}

/// Predictive check summary for one triple `(i, j, p)` or, with `p = None`,
/// one pair averaged over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcEntry {
    pub i: usize,
    pub j: usize,
    pub p: Option<usize>,
    pub lower: f64,
    pub upper: f64,
    pub median: f64,
    pub covers_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcReport {
    pub entries: Vec<PpcEntry>,
    pub hpd_mass: f64,
    /// Fraction of intervals containing zero.
    pub coverage: f64,
}

impl PpcReport {
    fn from_entries(entries: Vec<PpcEntry>, hpd_mass: f64) -> Self {
        let coverage = entries.iter().filter(|e| e.covers_zero).count() as f64 / entries.len().max(1) as f64;
        Self { entries, hpd_mass, coverage }
    }

    /// Coverage restricted to entries of replicate `p`.
    pub fn coverage_for_replicate(&self, p: usize) -> f64 {
        let sel: Vec<&PpcEntry> = self.entries.iter().filter(|e| e.p == Some(p)).collect();
        sel.iter().filter(|e| e.covers_zero).count() as f64 / sel.len().max(1) as f64
    }
}

fn summarize(i: usize, j: usize, p: Option<usize>, mut ratios: Vec<f64>, mass: f64) -> PpcEntry {
    ratios.sort_by(f64::total_cmp);
    let (lower, upper) = hpd_sorted(&ratios, mass);
    PpcEntry { i, j, p, lower, upper, median: ratios[ratios.len() / 2], covers_zero: lower <= 0.0 && upper >= 0.0 }
}

/// Pairwise check: per draw, `y~_ijp ~ Gamma(psi, psi / (tau_p delta_ij))` and
/// `r_ijp = ln(y~ / y)`; coverage is the share of HPD intervals of `r` containing zero.
pub fn ppc_pairwise<R: Rng + ?Sized>(y: &DistanceTensor, chain: &ChainOutput, mass: f64, rng: &mut R) -> PpcReport {
    assert!(!chain.draws.is_empty(), "empty chain");
    let mut entries = Vec::with_capacity(y.values().len());
    for (i, j) in pairs(y.n_entities()) {
        for p in 0..y.n_replicates() {
            let obs = y.get(i, j, p);
            let ratios = chain
                .draws
                .iter()
                .map(|d| (GammaSpec::with_mean(d.psi, d.tau[p] * d.delta.get(i, j)).sample(rng) / obs).ln())
                .collect();
            entries.push(summarize(i, j, Some(p), ratios, mass));
        }
    }
    PpcReport::from_entries(entries, mass)
}

/// Hierarchical check: per draw, `delta~_ij` from its prior at the drawn `X` and
/// `gamma`, then `y~_ijp` for every replicate; `r_ij` is the replicate average of
/// `ln(y~ / y)`.
pub fn ppc_hierarchical<R: Rng + ?Sized>(
    y: &DistanceTensor,
    chain: &ChainOutput,
    mass: f64,
    rng: &mut R,
) -> PpcReport {
    assert!(!chain.draws.is_empty(), "empty chain");
    let m = y.n_replicates();
    let mut entries = Vec::with_capacity(y.n_pairs());
    for (i, j) in pairs(y.n_entities()) {
        let ratios = chain
            .draws
            .iter()
            .map(|d| {
                let delta = delta_prior(d.latent_distance(i, j), d.gamma).sample(rng);
                (0..m).map(|p| (GammaSpec::with_mean(d.psi, d.tau[p] * delta).sample(rng) / y.get(i, j, p)).ln()).sum::<f64>()
                    / m as f64
            })
            .collect();
        entries.push(summarize(i, j, None, ratios, mass));
    }
    PpcReport::from_entries(entries, mass)
}

/// Values of one named parameter across retained draws.
pub fn parameter_series(chain: &ChainOutput, name: &str) -> Result<Vec<f64>> {
    let schema = ChainSchema::for_chain(chain);
    let off = schema.offset(name)?;
    Ok(chain.draws.iter().map(|d| flatten_state(d)[off]).collect())
}

/// Write a CSV with an `iteration` column followed by one column per name.
pub fn trace_export(chain: &ChainOutput, names: &[&str], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let schema = ChainSchema::for_chain(chain);
    let offsets = names.iter().map(|n| schema.offset(n)).collect::<Result<Vec<_>>>()?;
    let mut out = String::from("iteration");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (k, d) in chain.draws.iter().enumerate() {
        let flat = flatten_state(d);
        out.push_str(&(chain.n_burnin + k * chain.thin).to_string());
        for &o in &offsets {
            out.push_str(&format!(",{:.16e}", flat[o]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}
