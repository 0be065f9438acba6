use super::stft::Spectrogram;

/// Pitch-class labels, row order of [`Chromagram::chroma`].
pub const PITCH_CLASS_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

const A_CLASS: i64 = 9;
const MIN_FREQ_HZ: f64 = 20.0;

/// `chroma[q][t]`: summed spectrogram magnitude of pitch class `q` at frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chromagram {
    pub chroma: Vec<Vec<f64>>,
    pub frame_times: Vec<f64>,
}

impl Chromagram {
    pub fn n_frames(&self) -> usize {
        self.frame_times.len()
    }

    pub fn frame(&self, t: usize) -> [f64; 12] {
        std::array::from_fn(|q| self.chroma[q][t])
    }

    pub fn from_frames(frames: &[[f64; 12]], frame_times: Vec<f64>) -> Self {
        assert_eq!(frames.len(), frame_times.len());
        Self { chroma: (0..12).map(|q| frames.iter().map(|f| f[q]).collect()).collect(), frame_times }
    }
}

/// Equal-tempered pitch class of a frequency, with `ref_pitch` mapped to A.
/// `None` below 20 Hz.
pub fn pitch_class(freq: f64, ref_pitch: f64) -> Option<usize> {
    if freq < MIN_FREQ_HZ {
        return None;
    }
    let semis = (12.0 * (freq / ref_pitch).log2()).round() as i64;
    Some((semis + A_CLASS).rem_euclid(12) as usize)
}

/// Aggregate spectrogram bins into the twelve pitch classes.
pub fn chromagram(s: &Spectrogram, ref_pitch: f64) -> Chromagram {
    let t_len = s.n_frames();
    let mut chroma = vec![vec![0.0; t_len]; 12];
    for (f, &freq) in s.freq_bins.iter().enumerate() {
        if let Some(q) = pitch_class(freq, ref_pitch) {
            for (acc, &v) in chroma[q].iter_mut().zip(&s.mag[f]) {
                *acc += v;
            }
        }
    }
    Chromagram { chroma, frame_times: s.frame_times.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::stft::stft;
    use std::f64::consts::PI;

    fn tones(freqs: &[f64], sr: f64, secs: f64) -> Vec<f64> {
        (0..(sr * secs) as usize)
            .map(|k| freqs.iter().map(|f| (2.0 * PI * f * k as f64 / sr).sin()).sum())
            .collect()
    }

    fn class_share(c: &Chromagram, q: usize) -> f64 {
        let total: f64 = c.chroma.iter().flatten().sum();
        c.chroma[q].iter().sum::<f64>() / total
    }

    #[test]
    fn a440_maps_to_class_a() {
        let sr = 8000.0;
        let c = chromagram(&stft(&tones(&[440.0], sr, 2.0), sr, 5.0, 0.1).unwrap(), 440.0);
        assert_eq!(PITCH_CLASS_NAMES[9], "A");
        assert!(class_share(&c, 9) > 0.99);
    }

    #[test]
    fn octave_equivalence() {
        let sr = 8000.0;
        let c = chromagram(&stft(&tones(&[880.0], sr, 2.0), sr, 5.0, 0.1).unwrap(), 440.0);
        assert!(class_share(&c, 9) > 0.99);
    }

    #[test]
    fn c_and_g_split_energy() {
        let sr = 8000.0;
        let c = chromagram(&stft(&tones(&[261.6, 392.0], sr, 2.0), sr, 5.0, 0.1).unwrap(), 440.0);
        let (c_share, g_share) = (class_share(&c, 0), class_share(&c, 7));
        assert!(c_share + g_share > 0.9, "{c_share} {g_share}");
        assert!(c_share > 0.35 && g_share > 0.35);
    }

    #[test]
    fn column_sums_conserve_included_energy() {
        let sr = 8000.0;
        let s = stft(&tones(&[130.0, 515.0, 1999.0], sr, 1.0), sr, 5.0, 0.1).unwrap();
        let c = chromagram(&s, 440.0);
        for t in 0..s.n_frames() {
            let included: f64 = s.freq_bins.iter().zip(&s.mag).filter(|(f, _)| **f >= 20.0).map(|(_, r)| r[t]).sum();
            let chroma: f64 = c.frame(t).iter().sum();
            assert!((included - chroma).abs() < 1e-9 * included.max(1.0));
        }
    }

    #[test]
    fn low_bins_are_dropped() {
        assert_eq!(pitch_class(15.0, 440.0), None);
        assert_eq!(pitch_class(0.0, 440.0), None);
        assert_eq!(pitch_class(440.0, 440.0), Some(9));
        assert_eq!(pitch_class(466.16, 440.0), Some(10));
    }
}
