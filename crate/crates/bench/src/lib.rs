//! Deterministic inputs shared by the benchmarks.

use hmds::audio::{chromagram, Chromagram};
use hmds::audio::{stft, DEFAULT_FREQ_RES, DEFAULT_TIME_RES};
use hmds::audio::FeatureCurve;
use hmds::synth::{generate_tensor, random_melody, random_state, synth_notes};
use hmds::{DistanceTensor, ModelState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SAMPLE_RATE: f64 = 8000.0;
pub const REF_PITCH: f64 = 440.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A melody of `notes` half-second notes.
pub fn melody(notes: usize, seed: u64) -> Vec<f64> {
    synth_notes(&random_melody(notes, 0.5, &mut rng(seed)), SAMPLE_RATE)
}

pub fn melody_chroma(notes: usize, seed: u64) -> Chromagram {
    let s = stft(&melody(notes, seed), SAMPLE_RATE, DEFAULT_FREQ_RES, DEFAULT_TIME_RES).expect("valid STFT settings");
    chromagram(&s, REF_PITCH)
}

pub fn random_curve(len: usize, seed: u64) -> FeatureCurve {
    let mut r = rng(seed);
    FeatureCurve::from_weights((0..len).map(|_| r.random_range(0.1..1.0)).collect())
}

/// A synthetic tensor and the state that generated it.
pub fn synthetic(n: usize, m: usize, seed: u64) -> (ModelState, DistanceTensor) {
    let mut r = rng(seed);
    let truth = random_state(n, m, 4.min(n - 1), 10.0, 5.0, &mut r);
    let y = generate_tensor(&truth, &mut r);
    (truth, y)
}
