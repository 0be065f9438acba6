//! Sampler configuration file: TOML with optional `[chain]` and `[priors]` tables.
//! Command-line flags override file values, which override the defaults.

use std::path::Path;

use anyhow::Context;
use hmds::sampler::ChainConfig;
use hmds::Hyperparams;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub priors: PriorSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    pub iters: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub x_step: Option<f64>,
    pub log_psi_step: Option<f64>,
    pub log_gamma_step: Option<f64>,
    pub adapt: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    pub a1: Option<f64>,
    pub b1: Option<f64>,
    pub a2: Option<f64>,
    pub b2: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// Latent covariance diagonal; estimated from the data when absent.
    pub lambda: Option<Vec<f64>>,
}

pub fn load(path: &Path) -> anyhow::Result<ConfigFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl ChainSection {
    pub fn apply(&self, cfg: &mut ChainConfig) {
        let ChainSection { iters, burnin, thin, seed, x_step, log_psi_step, log_gamma_step, adapt } = self;
        set(&mut cfg.n_iter, *iters);
        set(&mut cfg.n_burnin, *burnin);
        set(&mut cfg.thin, *thin);
        set(&mut cfg.rng_seed, *seed);
        set(&mut cfg.x_step, *x_step);
        set(&mut cfg.log_psi_step, *log_psi_step);
        set(&mut cfg.log_gamma_step, *log_gamma_step);
        set(&mut cfg.adapt, *adapt);
    }
}

impl PriorSection {
    /// Fill `h` from the file, leaving `lambda_diag` alone unless given.
    pub fn apply(&self, h: &mut Hyperparams) {
        set(&mut h.a1, self.a1);
        set(&mut h.b1, self.b1);
        set(&mut h.a2, self.a2);
        set(&mut h.b2, self.b2);
        set(&mut h.alpha, self.alpha);
        set(&mut h.beta, self.beta);
        if let Some(l) = &self.lambda {
            h.lambda_diag = l.clone();
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
