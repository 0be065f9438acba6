use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{HmdsError, Result};

/// Frequency resolution of the analysis, Hz.
pub const DEFAULT_FREQ_RES: f64 = 5.0;
/// Hop between frames, seconds.
pub const DEFAULT_TIME_RES: f64 = 0.1;

/// Magnitude spectrogram, `mag[f][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub freq_bins: Vec<f64>,
    pub frame_times: Vec<f64>,
    pub mag: Vec<Vec<f64>>,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.frame_times.len()
    }

    pub fn n_bins(&self) -> usize {
        self.freq_bins.len()
    }

    /// Column `t` as a vector over frequency.
    pub fn frame(&self, t: usize) -> Vec<f64> {
        self.mag.iter().map(|row| row[t]).collect()
    }
}

/// Short-time Fourier transform magnitudes with a periodic Hann window.
///
/// The window holds `sample_rate / freq_res` samples (rounded to the nearest even
/// count) and frames advance by `time_res * sample_rate` samples. Magnitudes are
/// scaled so that a unit-amplitude sinusoid centred on a bin reads 1.
pub fn stft(signal: &[f64], sample_rate: f64, freq_res: f64, time_res: f64) -> Result<Spectrogram> {
    if !(sample_rate > 0.0 && freq_res > 0.0 && time_res > 0.0) {
        return Err(HmdsError::InvalidInput("sample rate and resolutions must be positive".into()));
    }
    let win = ((sample_rate / freq_res / 2.0).round() as usize * 2).max(2);
    let hop = ((time_res * sample_rate).round() as usize).max(1);
    if signal.len() < win {
        return Err(HmdsError::SignalTooShort { samples: signal.len(), window: win });
    }
    let n_frames = 1 + (signal.len() - win) / hop;
    let n_bins = win / 2 + 1;

    let window: Vec<f64> = (0..win).map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / win as f64).cos()).collect();
    let gain = 2.0 / window.iter().sum::<f64>();

    let fft = FftPlanner::new().plan_fft_forward(win);
    let mut buf = vec![Complex::new(0.0, 0.0); win];
    let mut mag = vec![vec![0.0; n_frames]; n_bins];
    for t in 0..n_frames {
        let start = t * hop;
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(signal[start + k] * window[k], 0.0);
        }
        fft.process(&mut buf);
        for (f, row) in mag.iter_mut().enumerate() {
            row[t] = buf[f].norm() * gain;
        }
    }

    let bin_hz = sample_rate / win as f64;
    Ok(Spectrogram {
        freq_bins: (0..n_bins).map(|f| f as f64 * bin_hz).collect(),
        frame_times: (0..n_frames).map(|t| (t * hop) as f64 / sample_rate + 0.5 * win as f64 / sample_rate).collect(),
        mag,
    })
}
