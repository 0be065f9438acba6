//! Ground-truth generators: tensors simulated from the model and warped audio
//! with a known alignment.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HmdsError, Result};
use crate::model::{delta_prior, GammaSpec};
use crate::state::ModelState;
use crate::tensor::DistanceTensor;
use crate::triangle::UpperTriangle;

/// Draw `y_ijp ~ Gamma(psi, psi / (tau_p delta_ij))` independently for every
/// pair and replicate.
pub fn generate_tensor<R: Rng + ?Sized>(truth: &ModelState, rng: &mut R) -> DistanceTensor {
    let (n, m) = (truth.n_entities(), truth.n_replicates());
    DistanceTensor::from_fn(n, m, |i, j, p| GammaSpec::with_mean(truth.psi, truth.tau[p] * truth.delta.get(i, j)).sample(rng))
}

/// A state for simulation studies: `X` standard normal in `dim` dimensions,
/// `delta` drawn from its prior given `X` and `gamma`, and `tau_p = exp(0.3 z_p)`.
pub fn random_state<R: Rng + ?Sized>(n: usize, m: usize, dim: usize, psi: f64, gamma: f64, rng: &mut R) -> ModelState {
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect()).collect();
    let delta = UpperTriangle::from_fn(n, |i, j| delta_prior(crate::state::euclidean(&x[i], &x[j]), gamma).sample(rng));
    let tau = (0..m).map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        (0.3 * z).exp()
    }).collect();
    ModelState { x, delta, tau, psi, gamma }
}

/// Piecewise-constant profile over base-signal time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    /// Segment length in seconds of the base signal.
    pub segment_seconds: f64,
    /// One value per segment; the last value extends to the end.
    pub values: Vec<f64>,
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Self { segment_seconds: 1.0, values: vec![value] }
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.segment_seconds.is_nan() || self.segment_seconds < 1.0 {
            return Err(HmdsError::InvalidInput(format!("{what} segments must last at least 1 s")));
        }
        if self.values.is_empty() || self.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(HmdsError::InvalidInput(format!("{what} profile must be nonempty and positive")));
        }
        Ok(())
    }

    /// Value in force at base time `t`.
    pub fn at(&self, t: f64) -> f64 {
        let k = (t.max(0.0) / self.segment_seconds) as usize;
        self.values[k.min(self.values.len() - 1)]
    }

    /// Linear interpolation between segment centres.
    fn smooth_at(&self, t: f64) -> f64 {
        let pos = t / self.segment_seconds - 0.5;
        if pos <= 0.0 {
            return self.values[0];
        }
        let k = pos.floor() as usize;
        if k + 1 >= self.values.len() {
            return *self.values.last().expect("nonempty");
        }
        let f = pos - k as f64;
        self.values[k] * (1.0 - f) + self.values[k + 1] * f
    }
}

/// A note of the base melody.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub freq: f64,
    pub seconds: f64,
    pub amplitude: f64,
}

/// Notes with three decaying harmonics and a short attack/release envelope.
pub fn synth_notes(notes: &[Note], sample_rate: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for note in notes {
        let len = (note.seconds * sample_rate).round() as usize;
        let ramp = (0.01 * sample_rate) as usize;
        for k in 0..len {
            let t = k as f64 / sample_rate;
            let env = if k < ramp {
                k as f64 / ramp as f64
            } else if k + ramp > len {
                (len - k) as f64 / ramp as f64
            } else {
                1.0
            };
            let v: f64 = (1..=3)
                .map(|h| (2.0 * std::f64::consts::PI * note.freq * h as f64 * t).sin() / h as f64)
                .sum();
            out.push(note.amplitude * env * v / 1.84);
        }
    }
    out
}

/// Equal-tempered notes drawn uniformly from the two octaves above A3, with
/// consecutive pitches distinct.
pub fn random_melody<R: Rng + ?Sized>(n_notes: usize, note_seconds: f64, rng: &mut R) -> Vec<Note> {
    let mut last = usize::MAX;
    (0..n_notes)
        .map(|_| {
            let mut step = rng.random_range(0..24);
            while step == last {
                step = rng.random_range(0..24);
            }
            last = step;
            Note { freq: 220.0 * 2f64.powf(step as f64 / 12.0), seconds: note_seconds, amplitude: 0.5 }
        })
        .collect()
}

/// Warped rendition together with its ground-truth alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpedAudio {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    /// `(output seconds, base seconds)` at every synthesis grain.
    pub warp: Vec<(f64, f64)>,
}

impl WarpedAudio {
    /// Base time corresponding to output time `t` by linear interpolation.
    pub fn base_time(&self, t: f64) -> f64 {
        base_time_of(&self.warp, t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpOptions {
    /// Grain length in seconds.
    pub grain_seconds: f64,
    /// Standard deviation of additive white noise.
    pub noise_sd: f64,
}

impl Default for WarpOptions {
    fn default() -> Self {
        Self { grain_seconds: 0.064, noise_sd: 0.0 }
    }
}

fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / len as f64).cos()).collect()
}

/// Pitch-preserving time stretch by waveform-similarity overlap-add. A tempo of
/// `v` plays the base `v` times faster, so the output of a constant-tempo
/// profile lasts `1 / v` of the base. Gains scale the amplitude smoothly
/// between segment centres.
pub fn generate_warped_audio<R: Rng + ?Sized>(
    base: &[f64],
    sample_rate: f64,
    tempo: &Profile,
    gain: &Profile,
    opts: &WarpOptions,
    rng: &mut R,
) -> Result<WarpedAudio> {
    tempo.check("tempo")?;
    gain.check("gain")?;
    let grain = ((opts.grain_seconds * sample_rate).round() as usize / 4 * 4).max(16);
    if base.len() < 2 * grain {
        return Err(HmdsError::SignalTooShort { samples: base.len(), window: 2 * grain });
    }
    let hop = grain / 4;
    let tolerance = hop / 2;
    let window = hann(grain);
    let base_end = (base.len() - grain) as f64;

    let mut out: Vec<f64> = Vec::new();
    let mut norm: Vec<f64> = Vec::new();
    let mut warp = Vec::new();
    // `nominal` is the base sample aligned with the start of the next output grain
    let mut nominal = 0.0f64;
    let mut prev_start: Option<usize> = None;
    let mut k = 0usize;
    while nominal <= base_end {
        let out_start = k * hop;
        let target = nominal.round() as usize;
        let start = match prev_start {
            None => target,
            Some(p) => {
                // continuation of the previous grain is the most similar segment
                let natural = p + hop;
                let lo = target.saturating_sub(tolerance);
                let hi = (target + tolerance).min(base.len() - grain);
                let len = grain - hop;
                let target = target.min(hi);
                let mut best = (f64::NEG_INFINITY, target);
                if natural + len <= base.len() && natural != target {
                    // nearest candidates first so that ties keep the nominal position
                    let mut candidates: Vec<usize> = (lo..=hi).collect();
                    candidates.sort_by_key(|&c| c.abs_diff(target));
                    for c in candidates {
                        let (dot, energy) = (0..len).fold((0.0, 0.0), |(d, e), q| {
                            let v = base[c + q];
                            (d + base[natural + q] * v, e + v * v)
                        });
                        let score = if energy > 0.0 { dot / energy.sqrt() } else { 0.0 };
                        if score > best.0 {
                            best = (score, c);
                        }
                    }
                }
                best.1
            }
        };
        if out.len() < out_start + grain {
            out.resize(out_start + grain, 0.0);
            norm.resize(out_start + grain, 0.0);
        }
        for q in 0..grain {
            out[out_start + q] += window[q] * base[start + q];
            norm[out_start + q] += window[q];
        }
        let centre = (out_start + grain / 2) as f64 / sample_rate;
        warp.push((centre, (nominal + grain as f64 / 2.0) / sample_rate));
        prev_start = Some(start);
        nominal += hop as f64 * tempo.at(nominal / sample_rate);
        k += 1;
    }

    let samples = out
        .iter()
        .zip(&norm)
        .enumerate()
        .map(|(q, (v, w))| {
            let t_out = q as f64 / sample_rate;
            let g = gain.smooth_at(base_time_of(&warp, t_out));
            let noise = if opts.noise_sd > 0.0 { {
                let z: f64 = StandardNormal.sample(rng);
                opts.noise_sd * z
            } } else { 0.0 };
            (if *w > 1e-3 { v / w } else { 0.0 }) * g + noise
        })
        .collect();
    Ok(WarpedAudio { samples, sample_rate, warp })
}

fn base_time_of(warp: &[(f64, f64)], t: f64) -> f64 {
    let k = warp.partition_point(|&(o, _)| o <= t);
    match k {
        0 => warp[0].1,
        k if k == warp.len() => warp[k - 1].1,
        k => {
            let ((o0, b0), (o1, b1)) = (warp[k - 1], warp[k]);
            b0 + (t - o0) / (o1 - o0) * (b1 - b0)
        }
    }
}
