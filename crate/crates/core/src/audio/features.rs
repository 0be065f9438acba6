use serde::{Deserialize, Serialize};

use super::chroma::{chromagram, Chromagram};
use super::dtw::{dtw_align, WarpPath};
use super::stft::{stft, Spectrogram, DEFAULT_FREQ_RES, DEFAULT_TIME_RES};
use crate::error::{HmdsError, Result};

/// Points on the normalized time grid of every curve.
pub const DEFAULT_GRID: usize = 1024;
/// Width of the centred moving average applied to the warp derivative.
pub const SMOOTHING_WIDTH: usize = 5;

/// Nonnegative values on a uniform grid over `[0, 1]` that sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCurve {
    values: Vec<f64>,
}

impl FeatureCurve {
    /// Accepts values that are nonnegative and already sum to one (within 1e-9).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(HmdsError::InvalidInput("empty curve".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(HmdsError::InvalidInput("curve values must be finite and nonnegative".into()));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(HmdsError::InvalidInput(format!("curve sums to {total}, expected 1")));
        }
        Ok(Self { values })
    }

    /// Normalize nonnegative weights; an all-zero input becomes the uniform curve.
    pub fn from_weights(mut values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "empty curve");
        let total: f64 = values.iter().sum();
        if total > 0.0 {
            values.iter_mut().for_each(|v| *v /= total);
        } else {
            let u = 1.0 / values.len() as f64;
            values.iter_mut().for_each(|v| *v = u);
        }
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Grid positions in `[0, 1]`.
    pub fn grid(&self) -> Vec<f64> {
        let n = self.values.len();
        if n == 1 {
            return vec![0.0];
        }
        (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
    }
}

/// Linear interpolation onto `len` uniform points over `[0, 1]`, then normalization.
pub fn resample_curve(values: &[f64], len: usize) -> FeatureCurve {
    assert!(!values.is_empty() && len > 0, "resample_curve needs nonempty input and output");
    FeatureCurve::from_weights(interpolate(values, len))
}

fn interpolate(values: &[f64], len: usize) -> Vec<f64> {
    let n = values.len();
    if n == len {
        return values.to_vec();
    }
    if n == 1 || len == 1 {
        return vec![values[0]; len];
    }
    (0..len)
        .map(|k| {
            let x = k as f64 * (n - 1) as f64 / (len - 1) as f64;
            let lo = (x.floor() as usize).min(n - 2);
            let frac = x - lo as f64;
            values[lo] * (1.0 - frac) + values[lo + 1] * frac
        })
        .collect()
}

/// Smoothed derivative of the reference index with respect to the source index,
/// one value per source frame. Values above one mean the source runs faster than the reference.
pub fn tempo_ratio(w: &WarpPath) -> Vec<f64> {
    let ns = w.source_len();
    if ns < 2 {
        return vec![1.0; ns.max(1)];
    }
    // mean reference position for each source frame
    let mut sum = vec![0.0; ns];
    let mut count = vec![0usize; ns];
    for &(s, r) in &w.pairs {
        sum[s] += r as f64;
        count[s] += 1;
    }
    let pos: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    let mut diff: Vec<f64> = pos.windows(2).map(|p| p[1] - p[0]).collect();
    diff.push(*diff.last().expect("at least one difference"));
    moving_average(&diff, SMOOTHING_WIDTH)
}

fn moving_average(values: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..values.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Tempo curve: warp derivative resampled on normalized source time.
pub fn tempo_curve(w: &WarpPath, len: usize) -> FeatureCurve {
    resample_curve(&tempo_ratio(w), len)
}

/// Dynamics curve: per-frame chroma energy over the recording's average.
pub fn dynamics_curve(aligned: &Chromagram, len: usize) -> Result<FeatureCurve> {
    let t_len = aligned.n_frames();
    let per_frame: Vec<f64> = (0..t_len).map(|t| aligned.frame(t).iter().sum()).collect();
    let total: f64 = per_frame.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(HmdsError::SilentRecording);
    }
    let average = total / 12.0;
    let relative: Vec<f64> = per_frame.iter().map(|v| v / average).collect();
    Ok(resample_curve(&relative, len))
}

/// Geometric over arithmetic mean of a magnitude frame, with magnitudes floored
/// at machine epsilon.
pub fn spectral_flatness(frame: &[f64]) -> f64 {
    let n = frame.len() as f64;
    let floored = frame.iter().map(|v| v.max(f64::EPSILON));
    let (ln_sum, sum) = floored.fold((0.0, 0.0), |(l, s), v| (l + v.ln(), s + v));
    ((ln_sum / n).exp() / (sum / n)).min(1.0)
}

/// Spectral flatness per frame, resampled and normalized.
pub fn flatness_curve(aligned: &Spectrogram, len: usize) -> FeatureCurve {
    let raw: Vec<f64> = (0..aligned.n_frames()).map(|t| spectral_flatness(&aligned.frame(t))).collect();
    resample_curve(&raw, len)
}

/// Put source columns on the reference time axis: column `r` of the result is
/// the mean of the source columns paired with reference frame `r`.
pub fn align_columns(rows: &[Vec<f64>], w: &WarpPath) -> Vec<Vec<f64>> {
    let nr = w.reference_len();
    let mut counts = vec![0usize; nr];
    for &(_, r) in &w.pairs {
        counts[r] += 1;
    }
    rows.iter()
        .map(|row| {
            let mut out = vec![0.0; nr];
            for &(s, r) in &w.pairs {
                out[r] += row[s];
            }
            out.iter_mut().zip(&counts).for_each(|(v, &c)| *v /= c as f64);
            out
        })
        .collect()
}

/// Parameters of the recording-to-curves pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub freq_res: f64,
    pub time_res: f64,
    pub ref_pitch: f64,
    pub grid: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { freq_res: DEFAULT_FREQ_RES, time_res: DEFAULT_TIME_RES, ref_pitch: 440.0, grid: DEFAULT_GRID }
    }
}

/// The three curves of one recording and the warp that produced them.
#[derive(Debug, Clone)]
pub struct RecordingFeatures {
    pub tempo: FeatureCurve,
    pub dynamics: FeatureCurve,
    pub flatness: FeatureCurve,
    pub path: WarpPath,
}

/// Spectrogram, chromagram, alignment to `reference` and curve extraction.
pub fn extract_features(
    signal: &[f64],
    sample_rate: f64,
    reference: &Chromagram,
    cfg: &FeatureConfig,
) -> Result<RecordingFeatures> {
    let spec = stft(signal, sample_rate, cfg.freq_res, cfg.time_res)?;
    let chroma = chromagram(&spec, cfg.ref_pitch);
    let path = dtw_align(&chroma, reference);
    let aligned_times = reference.frame_times.clone();
    let aligned_chroma = Chromagram { chroma: align_columns(&chroma.chroma, &path), frame_times: aligned_times.clone() };
    let aligned_spec =
        Spectrogram { freq_bins: spec.freq_bins.clone(), frame_times: aligned_times, mag: align_columns(&spec.mag, &path) };
    Ok(RecordingFeatures {
        tempo: tempo_curve(&path, cfg.grid),
        dynamics: dynamics_curve(&aligned_chroma, cfg.grid)?,
        flatness: flatness_curve(&aligned_spec, cfg.grid),
        path,
    })
}
