use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use hmds::audio::{chromagram, stft, write_chromagram_csv, write_wav, DEFAULT_FREQ_RES, DEFAULT_TIME_RES};
use hmds::synth::{generate_tensor, generate_warped_audio, random_melody, random_state, synth_notes, Note, Profile, WarpOptions};
use hmds::write_tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::manifest::{ensure_dir, ensure_parent, RunManifest};
use crate::{OutArg, UsageError};

#[derive(Debug, Args, Serialize)]
pub struct TensorArgs {
    #[arg(long, default_value_t = 5)]
    entities: usize,
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    /// Latent dimension [default: entities - 1].
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    psi: f64,
    #[arg(long, default_value_t = 5.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ground-truth state JSON [default: <out>.truth.json].
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArg,
}

pub fn tensor(a: TensorArgs, threads: usize) -> anyhow::Result<()> {
    if a.entities < 2 || a.replicates < 1 || !positive(a.psi) || !positive(a.gamma) {
        return Err(UsageError("need at least 2 entities, 1 replicate and positive psi, gamma".into()).into());
    }
    let dim = a.dim.unwrap_or(a.entities - 1).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let truth = random_state(a.entities, a.replicates, dim, a.psi, a.gamma, &mut rng);
    let y = generate_tensor(&truth, &mut rng);

    ensure_parent(&a.out.out)?;
    write_tensor(&y, &a.out.out)?;
    let truth_path = a.truth.clone().unwrap_or_else(|| a.out.out.with_extension("truth.json"));
    ensure_parent(&truth_path)?;
    std::fs::write(&truth_path, serde_json::to_string_pretty(&truth)? + "\n")
        .with_context(|| format!("writing {}", truth_path.display()))?;

    let mut manifest = RunManifest::new("synth tensor", Some(a.seed), threads, &a);
    manifest.output(&a.out.out);
    manifest.output(&truth_path);
    manifest.write_beside(&a.out.out)
}

#[derive(Debug, Args, Serialize)]
pub struct AudioArgs {
    /// Performers; each has its own tempo and gain habits.
    #[arg(long, default_value_t = 3)]
    entities: usize,
    /// Pieces; each is a different random melody.
    #[arg(long, default_value_t = 2)]
    replicates: usize,
    #[arg(long, default_value_t = 24)]
    notes: usize,
    #[arg(long, default_value_t = 0.5)]
    note_seconds: f64,
    #[arg(long, default_value_t = 8000)]
    sample_rate: u32,
    /// Length of each tempo and gain segment in seconds.
    #[arg(long, default_value_t = 2.0)]
    segment_seconds: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArg,
}

#[derive(Serialize)]
struct Rendition {
    entity: usize,
    replicate: usize,
    file: String,
    tempo: Profile,
    gain: Profile,
    /// `(output seconds, base seconds)` pairs.
    warp: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct AudioTruth {
    sample_rate: u32,
    melodies: Vec<Vec<Note>>,
    renditions: Vec<Rendition>,
}

fn lognormal<R: Rng>(sd: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (sd * z).exp()
}

pub fn audio(a: AudioArgs, threads: usize) -> anyhow::Result<()> {
    if a.entities < 2 || a.replicates < 1 || a.notes < 4 || !positive(a.note_seconds) || a.sample_rate < 2000 {
        return Err(UsageError("need 2+ entities, 1+ replicates, 4+ notes, positive note length, sample rate >= 2000".into()).into());
    }
    if a.segment_seconds.is_nan() || a.segment_seconds < 1.0 {
        return Err(UsageError("--segment-seconds must be at least 1".into()).into());
    }
    let out = &a.out.out;
    ensure_dir(out)?;
    let sr = a.sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);

    let habits: Vec<(f64, f64)> = (0..a.entities).map(|_| (rng.random_range(0.8..1.25), rng.random_range(0.5..1.5))).collect();
    let mut truth = AudioTruth { sample_rate: a.sample_rate, melodies: Vec::new(), renditions: Vec::new() };
    let mut index = String::from("entity,replicate,wav,reference\n");
    for p in 0..a.replicates {
        let melody = random_melody(a.notes, a.note_seconds, &mut rng);
        let base = synth_notes(&melody, sr);
        let base_name = format!("piece{p}.wav");
        write_wav(out.join(&base_name), &base, a.sample_rate)?;
        let reference = chromagram(&stft(&base, sr, DEFAULT_FREQ_RES, DEFAULT_TIME_RES)?, 440.0);
        let ref_name = format!("piece{p}.chroma.csv");
        write_chromagram_csv(&reference, out.join(&ref_name))?;

        let segments = ((base.len() as f64 / sr) / a.segment_seconds).ceil() as usize;
        for (i, &(tempo_mean, gain_mean)) in habits.iter().enumerate() {
            let tempo = Profile {
                segment_seconds: a.segment_seconds,
                values: (0..segments).map(|_| tempo_mean * lognormal(0.1, &mut rng)).collect(),
            };
            let gain = Profile {
                segment_seconds: a.segment_seconds,
                values: (0..segments).map(|_| gain_mean * lognormal(0.3, &mut rng)).collect(),
            };
            let opts = WarpOptions { noise_sd: 0.002, ..WarpOptions::default() };
            let w = generate_warped_audio(&base, sr, &tempo, &gain, &opts, &mut rng)?;
            let file = format!("e{i}_p{p}.wav");
            write_wav(out.join(&file), &w.samples, a.sample_rate)?;
            let _ = writeln!(index, "e{i},p{p},{file},{ref_name}");
            truth.renditions.push(Rendition { entity: i, replicate: p, file, tempo, gain, warp: w.warp });
        }
        truth.melodies.push(melody);
    }
    std::fs::write(out.join("index.csv"), index).context("writing index.csv")?;
    std::fs::write(out.join("truth.json"), serde_json::to_string(&truth)? + "\n").context("writing truth.json")?;

    let mut manifest = RunManifest::new("synth audio", Some(a.seed), threads, &a);
    for f in ["index.csv", "truth.json"] {
        manifest.output(out.join(f));
    }
    manifest.write_in(out)
}

fn positive(v: f64) -> bool {
    v > 0.0
}
