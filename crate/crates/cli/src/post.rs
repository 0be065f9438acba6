use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use hmds::chain_io::{flatten_state, ChainSchema};
use hmds::diagnostics::{ess, ppc_hierarchical, ppc_pairwise, trace_export, EssEstimate, PpcReport};
use hmds::summarize::{agglomerate, posterior_mean_delta, procrustes_align, write_aligned, write_delta_mean, Linkage};
use hmds::{read_chain, read_tensor, ChainOutput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::{ensure_dir, RunManifest};
use crate::{OutArg, UsageError};

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Distance tensor the chain was fitted to.
    tensor: PathBuf,
    /// Chain stem written by `sample`.
    chain: PathBuf,
    /// Probability mass of the HPD intervals.
    #[arg(long, default_value_t = 0.95)]
    mass: f64,
    /// Seed for the predictive draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra parameters to trace, e.g. `X[0,1]`; written to traces/selected.csv.
    #[arg(long = "trace")]
    traces: Vec<String>,
    #[command(flatten)]
    out: OutArg,
}

fn load_chain(stem: &Path) -> anyhow::Result<ChainOutput> {
    let chain = read_chain(stem).with_context(|| format!("reading chain {}", stem.display()))?;
    if chain.draws.is_empty() {
        anyhow::bail!("chain {} has no draws", stem.display());
    }
    Ok(chain)
}

fn group_of(name: &str) -> &str {
    name.split('[').next().unwrap_or(name)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn write_ppc(report: &PpcReport, path: &Path, with_replicate: bool) -> anyhow::Result<()> {
    let mut out = String::from(if with_replicate { "i,j,p," } else { "i,j," });
    out.push_str("lower,upper,median,covers_zero\n");
    for e in &report.entries {
        let _ = write!(out, "{},{},", e.i, e.j);
        if let Some(p) = e.p.filter(|_| with_replicate) {
            let _ = write!(out, "{p},");
        }
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e},{}", e.lower, e.upper, e.median, u8::from(e.covers_zero));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct DiagnoseSummary {
    n_draws: usize,
    hpd_mass: f64,
    pairwise_coverage: f64,
    hierarchical_coverage: f64,
    median_ess: Vec<(String, f64)>,
    acceptance_rates: hmds::AcceptanceRates,
}

pub fn diagnose(a: DiagnoseArgs, threads: usize) -> anyhow::Result<()> {
    if !(a.mass > 0.0 && a.mass < 1.0) {
        return Err(UsageError("--mass must lie in (0, 1)".into()).into());
    }
    let y = read_tensor(&a.tensor).with_context(|| format!("reading {}", a.tensor.display()))?;
    let chain = load_chain(&a.chain)?;
    if chain.n_entities() != y.n_entities() || chain.n_replicates() != y.n_replicates() {
        anyhow::bail!("chain shape does not match the tensor");
    }
    let schema = ChainSchema::for_chain(&chain);
    for name in &a.traces {
        if let Err(e) = schema.offset(name) {
            return Err(UsageError(e.to_string()).into());
        }
    }
    let out = &a.out.out;
    ensure_dir(&out.join("traces"))?;

    let names = schema.names();
    let rows: Vec<Vec<f64>> = chain.draws.iter().map(flatten_state).collect();
    let table: Vec<EssEstimate> = (0..names.len())
        .into_par_iter()
        .map(|k| ess(&rows.iter().map(|r| r[k]).collect::<Vec<f64>>()))
        .collect::<hmds::Result<_>>()?;
    let mut text = String::from("parameter,ess,capped,constant\n");
    for (name, e) in names.iter().zip(&table) {
        let _ = writeln!(text, "{name},{:.6},{},{}", e.ess, u8::from(e.capped), u8::from(e.constant));
    }
    let ess_path = out.join("ess_table.csv");
    std::fs::write(&ess_path, text).with_context(|| format!("writing {}", ess_path.display()))?;

    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for (name, e) in names.iter().zip(&table) {
        let g = group_of(name);
        match groups.iter_mut().find(|(n, _)| n == g) {
            Some((_, v)) => v.push(e.ess),
            None => groups.push((g.to_string(), vec![e.ess])),
        }
    }
    let median_ess = groups.into_iter().map(|(g, v)| (g, median(v))).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let pairwise = ppc_pairwise(&y, &chain, a.mass, &mut rng);
    let hierarchical = ppc_hierarchical(&y, &chain, a.mass, &mut rng);
    write_ppc(&pairwise, &out.join("ppc_pairwise.csv"), true)?;
    write_ppc(&hierarchical, &out.join("ppc_hierarchical.csv"), false)?;

    let by_group = |g: &str| names.iter().filter(|n| group_of(n) == g).map(String::as_str).collect::<Vec<&str>>();
    trace_export(&chain, &["psi", "gamma"], out.join("traces/psi_gamma.csv"))?;
    trace_export(&chain, &by_group("tau"), out.join("traces/tau.csv"))?;
    trace_export(&chain, &by_group("delta"), out.join("traces/delta.csv"))?;
    if !a.traces.is_empty() {
        let selected: Vec<&str> = a.traces.iter().map(String::as_str).collect();
        trace_export(&chain, &selected, out.join("traces/selected.csv"))?;
    }

    let summary = DiagnoseSummary {
        n_draws: chain.draws.len(),
        hpd_mass: a.mass,
        pairwise_coverage: pairwise.coverage,
        hierarchical_coverage: hierarchical.coverage,
        median_ess,
        acceptance_rates: chain.acceptance_rates.clone(),
    };
    let summary_path = out.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", summary_path.display()))?;
    log::info!("PPC coverage: pairwise {:.4}, hierarchical {:.4}", pairwise.coverage, hierarchical.coverage);

    let mut manifest = RunManifest::new(
        "diagnose",
        Some(a.seed),
        threads,
        serde_json::json!({ "mass": a.mass, "traces": a.traces }),
    );
    for f in ["ess_table.csv", "ppc_pairwise.csv", "ppc_hierarchical.csv", "summary.json", "traces"] {
        manifest.output(out.join(f));
    }
    manifest.write_in(out)
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Chain stem written by `sample`.
    chain: PathBuf,
    /// Agglomerative linkage: average, single or complete.
    #[arg(long, default_value = "average")]
    linkage: Linkage,
    /// Entity labels, one per line (as written by `distances`).
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

fn read_labels(path: &Path, n: usize) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let labels: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(newick_safe).collect();
    if labels.len() != n {
        anyhow::bail!("{} lists {} labels for {n} entities", path.display(), labels.len());
    }
    Ok(labels)
}

fn newick_safe(label: &str) -> String {
    label.chars().map(|c| if "(),:;[] \t'".contains(c) { '_' } else { c }).collect()
}

pub fn summarize(a: SummarizeArgs, threads: usize) -> anyhow::Result<()> {
    let chain = load_chain(&a.chain)?;
    let labels = a.labels.as_deref().map(|p| read_labels(p, chain.n_entities())).transpose()?;
    let out = &a.out.out;
    ensure_dir(out)?;

    let mean = posterior_mean_delta(&chain);
    write_delta_mean(&mean, out.join("delta_mean.csv"))?;
    let tree = agglomerate(&mean, labels, a.linkage);
    let nwk = out.join("dendrogram.nwk");
    std::fs::write(&nwk, tree.to_newick() + "\n").with_context(|| format!("writing {}", nwk.display()))?;
    let aligned = procrustes_align(&chain);
    if aligned.n_reflected > 0 {
        log::info!("{} draws aligned with a reflection", aligned.n_reflected);
    }
    write_aligned(&aligned, out.join("aligned_X.csv"))?;

    let mut manifest = RunManifest::new("summarize", None, threads, serde_json::json!({ "linkage": a.linkage }));
    for f in ["delta_mean.csv", "dendrogram.nwk", "aligned_X.csv"] {
        manifest.output(out.join(f));
    }
    manifest.write_in(out)
}
