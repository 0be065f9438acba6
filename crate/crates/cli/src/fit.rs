use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use hmds::chain_io::chain_paths;
use hmds::mle::fit_mle;
use hmds::sampler::{empirical_bayes_lambda, run_chain, ChainConfig};
use hmds::{read_tensor, write_chain, Hyperparams};
use serde::Serialize;

use crate::config;
use crate::manifest::{ensure_parent, RunManifest};
use crate::{OutArg, UsageError};

#[derive(Debug, Args)]
pub struct MleArgs {
    /// Distance tensor CSV.
    tensor: PathBuf,
    /// Convergence tolerance on the largest relative change.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Serialize)]
struct MleJson {
    delta: Vec<Vec<f64>>,
    tau: Vec<f64>,
    psi: f64,
    converged: bool,
    iterations: usize,
}

pub fn mle(a: MleArgs, threads: usize) -> anyhow::Result<()> {
    if a.tol.is_nan() || a.tol <= 0.0 || a.max_iter == 0 {
        return Err(UsageError("--tol must be positive and --max-iter at least 1".into()).into());
    }
    let y = read_tensor(&a.tensor).with_context(|| format!("reading {}", a.tensor.display()))?;
    let est = fit_mle(&y, a.tol, a.max_iter)?;
    if !est.converged {
        log::warn!("no convergence after {} iterations", est.iterations);
    }
    let json = MleJson {
        delta: est.delta_hat.to_dense().chunks(y.n_entities()).map(<[f64]>::to_vec).collect(),
        tau: est.tau_hat,
        psi: est.psi_hat,
        converged: est.converged,
        iterations: est.iterations,
    };
    ensure_parent(&a.out.out)?;
    std::fs::write(&a.out.out, serde_json::to_string_pretty(&json)?).with_context(|| format!("writing {}", a.out.out.display()))?;
    let mut manifest = RunManifest::new("mle", None, threads, serde_json::json!({ "tol": a.tol, "max_iter": a.max_iter }));
    manifest.output(&a.out.out);
    manifest.write_beside(&a.out.out)
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Distance tensor CSV.
    tensor: PathBuf,
    /// Total sweeps including burn-in [default: 30000].
    #[arg(long)]
    iters: Option<usize>,
    /// Sweeps discarded before recording [default: 15000].
    #[arg(long)]
    burnin: Option<usize>,
    /// Keep every k-th post-burn-in sweep [default: 1].
    #[arg(long)]
    thin: Option<usize>,
    /// Random seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// TOML file with `[chain]` and `[priors]` tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output stem; writes `<stem>.csv` and `<stem>.schema.json`.
    #[command(flatten)]
    out: OutArg,
}

#[derive(Serialize)]
struct SampleSettings<'a> {
    chain: &'a ChainConfig,
    priors: &'a Hyperparams,
    lambda_estimated: bool,
}

pub fn sample(a: SampleArgs, threads: usize) -> anyhow::Result<()> {
    let file = match &a.config {
        Some(p) => config::load(p)?,
        None => config::ConfigFile::default(),
    };
    let mut cfg = ChainConfig::default();
    file.chain.apply(&mut cfg);
    config::ChainSection { iters: a.iters, burnin: a.burnin, thin: a.thin, seed: a.seed, ..Default::default() }.apply(&mut cfg);
    if let Err(e) = cfg.check() {
        return Err(UsageError(e.to_string()).into());
    }

    let y = read_tensor(&a.tensor).with_context(|| format!("reading {}", a.tensor.display()))?;
    let mut h = Hyperparams::with_lambda(Vec::new());
    file.priors.apply(&mut h);
    let lambda_estimated = h.lambda_diag.is_empty();
    if lambda_estimated {
        h.lambda_diag = empirical_bayes_lambda(&y);
    }
    log::info!("sampling {} sweeps ({} burn-in) with seed {}", cfg.n_iter, cfg.n_burnin, cfg.rng_seed);
    let chain = run_chain(&y, &h, &cfg)?;
    log::info!("acceptance rates: {:?}", chain.acceptance_rates);

    ensure_parent(&a.out.out)?;
    write_chain(&chain, &a.out.out)?;
    let mut manifest = RunManifest::new(
        "sample",
        Some(cfg.rng_seed),
        threads,
        SampleSettings { chain: &cfg, priors: &h, lambda_estimated },
    );
    let (csv, schema) = chain_paths(&a.out.out);
    manifest.output(csv);
    manifest.output(schema);
    manifest.write_beside(&a.out.out)
}
