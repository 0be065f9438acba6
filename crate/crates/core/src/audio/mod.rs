//! Audio front end: spectrogram, chromagram, alignment and feature curves.
//!
//! Recordings are reduced to three normalized curves over `[0, 1]`:
//! tempo (derivative of the warp to a reference), dynamics (chroma energy
//! per frame relative to the recording average) and spectral flatness.

mod chroma;
mod dtw;
mod features;
mod io;
mod stft;

pub use chroma::{chromagram, pitch_class, Chromagram, PITCH_CLASS_NAMES};
pub use dtw::{cosine_distance, dtw_align, path_cost, WarpPath};
pub use features::{
    align_columns, dynamics_curve, extract_features, flatness_curve, resample_curve, spectral_flatness,
    tempo_curve, tempo_ratio, FeatureConfig, FeatureCurve, RecordingFeatures, DEFAULT_GRID, SMOOTHING_WIDTH,
};
pub use io::{read_chromagram_csv, read_curve_csv, read_wav_mono, write_chromagram_csv, write_curve_csv, write_wav};
pub use stft::{stft, Spectrogram, DEFAULT_FREQ_RES, DEFAULT_TIME_RES};
