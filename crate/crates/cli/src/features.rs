use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use hmds::audio::{
    chromagram, extract_features, read_chromagram_csv, read_curve_csv, read_wav_mono, stft, write_curve_csv, Chromagram,
    FeatureConfig, DEFAULT_FREQ_RES, DEFAULT_GRID, DEFAULT_TIME_RES,
};
use hmds::metrics::{build_tensor, CurveSet};
use hmds::tensor::DEFAULT_FLOOR;
use hmds::write_tensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifest::{ensure_dir, ensure_parent, RunManifest};
use crate::{OutArg, UsageError};

pub const METRICS: [&str; 3] = ["tempo", "dynamics", "flatness"];

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// WAV recordings aligned against `--reference`.
    recordings: Vec<PathBuf>,
    /// Reference chromagram CSV, or a WAV file to compute it from.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// CSV with columns `entity,replicate,wav,reference`; replaces positional recordings.
    #[arg(long, conflicts_with_all = ["recordings", "reference"])]
    index: Option<PathBuf>,
    /// Frequency resolution in Hz.
    #[arg(long, default_value_t = DEFAULT_FREQ_RES)]
    freq_res: f64,
    /// Hop between frames in seconds.
    #[arg(long, default_value_t = DEFAULT_TIME_RES)]
    time_res: f64,
    /// Frequency of pitch class A in Hz.
    #[arg(long, default_value_t = 440.0)]
    ref_pitch: f64,
    /// Points on the normalized time grid.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Deserialize)]
struct RecordingRow {
    entity: String,
    replicate: String,
    wav: PathBuf,
    reference: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    entity: String,
    replicate: String,
    path: PathBuf,
}

struct Job {
    entity: String,
    replicate: String,
    wav: PathBuf,
    reference: PathBuf,
    stem: String,
}

/// Resolve `p` against the directory of the file that named it.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new("")).join(p)
    }
}

fn load_reference(path: &Path, cfg: &FeatureConfig) -> anyhow::Result<Chromagram> {
    let is_wav = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    if is_wav {
        let (signal, sr) = read_wav_mono(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(chromagram(&stft(&signal, sr, cfg.freq_res, cfg.time_res)?, cfg.ref_pitch))
    } else {
        read_chromagram_csv(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).with_context(|| format!("opening {}", path.display()))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(k, r)| r.with_context(|| format!("{}: row {}", path.display(), k + 2)))
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn features(a: FeaturesArgs, threads: usize) -> anyhow::Result<()> {
    let cfg = FeatureConfig { freq_res: a.freq_res, time_res: a.time_res, ref_pitch: a.ref_pitch, grid: a.grid };
    if !(cfg.freq_res > 0.0 && cfg.time_res > 0.0 && cfg.ref_pitch > 0.0) || cfg.grid < 2 {
        return Err(UsageError("resolutions and reference pitch must be positive and --grid at least 2".into()).into());
    }
    let jobs: Vec<Job> = match (&a.index, &a.reference) {
        (Some(index), _) => read_rows::<RecordingRow>(index)?
            .into_iter()
            .map(|r| Job {
                stem: format!("{}_{}", r.entity, r.replicate),
                wav: resolve(index, &r.wav),
                reference: resolve(index, &r.reference),
                entity: r.entity,
                replicate: r.replicate,
            })
            .collect(),
        (None, Some(reference)) if !a.recordings.is_empty() => a
            .recordings
            .iter()
            .map(|w| {
                let stem = w.file_stem().map_or_else(|| "recording".into(), |s| s.to_string_lossy().into_owned());
                Job { entity: stem.clone(), replicate: "0".into(), wav: w.clone(), reference: reference.clone(), stem }
            })
            .collect(),
        _ => return Err(UsageError("give recordings with --reference, or --index".into()).into()),
    };
    ensure_dir(&a.out.out)?;

    let mut references: HashMap<PathBuf, Chromagram> = HashMap::new();
    for job in &jobs {
        if !references.contains_key(&job.reference) {
            references.insert(job.reference.clone(), load_reference(&job.reference, &cfg)?);
        }
    }
    let results: Vec<anyhow::Result<()>> = jobs
        .par_iter()
        .map(|job| {
            let (signal, sr) = read_wav_mono(&job.wav).with_context(|| format!("reading {}", job.wav.display()))?;
            let f = extract_features(&signal, sr, &references[&job.reference], &cfg)
                .with_context(|| format!("extracting features from {}", job.wav.display()))?;
            for (metric, curve) in METRICS.iter().zip([&f.tempo, &f.dynamics, &f.flatness]) {
                write_curve_csv(curve, a.out.out.join(format!("{}.{metric}.csv", job.stem)))?;
            }
            Ok(())
        })
        .collect();
    results.into_iter().collect::<anyhow::Result<Vec<()>>>()?;

    let mut manifest = RunManifest::new("features", None, threads, &cfg);
    for metric in METRICS {
        let rows: Vec<CurveRow> = jobs
            .iter()
            .map(|j| CurveRow {
                entity: j.entity.clone(),
                replicate: j.replicate.clone(),
                path: PathBuf::from(format!("{}.{metric}.csv", j.stem)),
            })
            .collect();
        let path = a.out.out.join(format!("{metric}_index.csv"));
        write_rows(&path, &rows)?;
        manifest.output(path);
    }
    manifest.write_in(&a.out.out)
}

#[derive(Debug, Args)]
pub struct DistancesArgs {
    /// CSV with columns `entity,replicate,path` naming one curve file per cell.
    #[arg(long)]
    index: PathBuf,
    /// Replacement for zero distances after normalization.
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    floor: f64,
    #[command(flatten)]
    out: OutArg,
}

/// Labels in order of first appearance.
fn ordered_labels<'a>(it: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for l in it {
        if !out.iter().any(|o| o == l) {
            out.push(l.to_string());
        }
    }
    out
}

/// Sidecar listing entity labels one per line, at `<out>.entities.txt`.
pub fn labels_path(tensor: &Path) -> PathBuf {
    tensor.with_extension("entities.txt")
}

pub fn distances(a: DistancesArgs, threads: usize) -> anyhow::Result<()> {
    if a.floor.is_nan() || a.floor <= 0.0 {
        return Err(UsageError("--floor must be positive".into()).into());
    }
    let rows: Vec<CurveRow> = read_rows(&a.index)?;
    let entities = ordered_labels(rows.iter().map(|r| r.entity.as_str()));
    let replicates = ordered_labels(rows.iter().map(|r| r.replicate.as_str()));
    if entities.len() < 2 {
        bail!("need at least two entities, found {}", entities.len());
    }
    let mut cells: Vec<Vec<Option<PathBuf>>> = vec![vec![None; replicates.len()]; entities.len()];
    for r in &rows {
        let i = entities.iter().position(|e| *e == r.entity).expect("label");
        let p = replicates.iter().position(|e| *e == r.replicate).expect("label");
        if cells[i][p].replace(resolve(&a.index, &r.path)).is_some() {
            bail!("duplicate entry for entity {} replicate {}", r.entity, r.replicate);
        }
    }
    let curves = cells
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(p, cell)| {
                    let path = cell
                        .as_ref()
                        .with_context(|| format!("missing curve for entity {} replicate {}", entities[i], replicates[p]))?;
                    read_curve_csv(path).with_context(|| format!("reading {}", path.display()))
                })
                .collect::<anyhow::Result<Vec<_>>>()
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let y = build_tensor(&CurveSet::new(curves)?, a.floor)?;
    ensure_parent(&a.out.out)?;
    write_tensor(&y, &a.out.out)?;
    let labels = labels_path(&a.out.out);
    std::fs::write(&labels, entities.join("\n") + "\n").with_context(|| format!("writing {}", labels.display()))?;

    let mut manifest = RunManifest::new(
        "distances",
        None,
        threads,
        serde_json::json!({ "floor": a.floor, "entities": entities, "replicates": replicates }),
    );
    manifest.output(&a.out.out);
    manifest.output(&labels);
    manifest.write_beside(&a.out.out)
}
