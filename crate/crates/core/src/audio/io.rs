use std::fs;
use std::path::Path;

use super::chroma::Chromagram;
use super::features::FeatureCurve;
use crate::error::{io_err, HmdsError, Result};

/// Read a PCM WAV file (16/24/32-bit integer or 32-bit float), averaging channels.
/// Returns the mono samples in `[-1, 1]` and the sample rate.
pub fn read_wav_mono(path: impl AsRef<Path>) -> Result<(Vec<f64>, f64)> {
    let mut reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader.samples::<i32>().map(|s| s.map(|v| v as f64 * scale)).collect::<std::result::Result<_, _>>()?
        }
    };
    let mono = interleaved.chunks(channels).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    Ok((mono, spec.sample_rate as f64))
}

/// Write mono 32-bit float WAV.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec { channels: 1, sample_rate, bits_per_sample: 32, sample_format: hound::SampleFormat::Float };
    let mut w = hound::WavWriter::create(path.as_ref(), spec)?;
    for &s in samples {
        w.write_sample(s as f32)?;
    }
    w.finalize()?;
    Ok(())
}

/// Chromagram CSV: a header row of frame times, then one row per pitch class.
pub fn write_chromagram_csv(c: &Chromagram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let row = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",");
    let mut out = row(&c.frame_times);
    out.push('\n');
    for q in &c.chroma {
        out.push_str(&row(q));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_chromagram_csv(path: impl AsRef<Path>) -> Result<Chromagram> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| HmdsError::Parse { line: idx + 1, msg: e.to_string() })?;
        rows.push((idx + 1, row));
    }
    if rows.len() != 13 {
        return Err(HmdsError::Parse { line: 1, msg: format!("expected 13 rows (times + 12 classes), found {}", rows.len()) });
    }
    let t_len = rows[0].1.len();
    if let Some((line, r)) = rows.iter().find(|(_, r)| r.len() != t_len) {
        return Err(HmdsError::Parse { line: *line, msg: format!("expected {t_len} columns, found {}", r.len()) });
    }
    let mut it = rows.into_iter().map(|(_, r)| r);
    let frame_times = it.next().expect("13 rows");
    Ok(Chromagram { chroma: it.collect(), frame_times })
}

/// Curve CSV with header `t,value`.
pub fn write_curve_csv(c: &FeatureCurve, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("t,value\n");
    for (t, v) in c.grid().iter().zip(c.values()) {
        out.push_str(&format!("{t:.16e},{v:.16e}\n"));
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_curve_csv(path: impl AsRef<Path>) -> Result<FeatureCurve> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "t,value" => {}
        _ => return Err(HmdsError::Parse { line: 1, msg: "expected header `t,value`".into() }),
    }
    let mut values = Vec::new();
    for (idx, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let v = line
            .split(',')
            .nth(1)
            .and_then(|f| f.trim().parse::<f64>().ok())
            .ok_or_else(|| HmdsError::Parse { line: idx + 1, msg: format!("malformed row `{line}`") })?;
        values.push(v);
    }
    FeatureCurve::new(values)
}
