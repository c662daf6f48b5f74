//! WAV ingestion and emission, sample-rate conversion, and length fixing,
//! so arbitrary user audio becomes a valid synthesis target.

use std::io;
use std::path::Path;

use thiserror::Error;

use crate::synth::AudioBuffer;

/// Supported WAV sample encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Pcm24,
    Float32,
}

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a valid WAV file: {0}")]
    Format(String),
    #[error("unsupported WAV encoding: {0}")]
    Unsupported(String),
    #[error("resampling rates must be positive")]
    BadRate,
}

impl From<hound::Error> for AudioError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) => AudioError::Io(io),
            hound::Error::FormatError(msg) => AudioError::Format(msg.to_string()),
            hound::Error::Unsupported => {
                AudioError::Unsupported("encoding not supported by the reader".into())
            }
            other => AudioError::Format(other.to_string()),
        }
    }
}

/// Read a WAV file as mono samples in `[-1, 1]` plus its sample rate.
///
/// 16-bit PCM is scaled by `1/32768`, 24-bit by `1/2^23`; float samples are
/// passed through and clamped. Stereo is averaged to mono; more than two
/// channels is rejected.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(Vec<f64>, u32), AudioError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::Unsupported(format!("{} channels", spec.channels)));
    }
    let raw: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()?,
        (hound::SampleFormat::Int, 24) => reader
            .samples::<i32>()
            .map(|s| s.map(|v| v as f64 / 8_388_608.0))
            .collect::<Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)))
            .collect::<Result<_, _>>()?,
        (fmt, bits) => {
            return Err(AudioError::Unsupported(format!("{bits}-bit {fmt:?}")));
        }
    };
    let mono = if spec.channels == 2 {
        raw.chunks_exact(2).map(|fr| (fr[0] + fr[1]) / 2.0).collect()
    } else {
        raw
    };
    Ok((mono, spec.sample_rate))
}

/// Write mono samples in `[-1, 1]` to a WAV file.
pub fn write_wav(
    path: impl AsRef<Path>,
    samples: &[f64],
    sample_rate: u32,
    format: WavFormat,
) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Pcm24 => 24,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Float32 => hound::SampleFormat::Float,
            _ => hound::SampleFormat::Int,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    match format {
        WavFormat::Pcm16 => {
            for &s in samples {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(q)?;
            }
        }
        WavFormat::Pcm24 => {
            for &s in samples {
                let q = (s * 8_388_608.0).round().clamp(-8_388_608.0, 8_388_607.0) as i32;
                writer.write_sample(q)?;
            }
        }
        WavFormat::Float32 => {
            for &s in samples {
                writer.write_sample(s as f32)?;
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

/// Windowed-sinc polyphase resampling. Output length is
/// `round(len * to / from)`; equal rates return the input unchanged.
///
/// The kernel is a Hann-windowed sinc with 32 zero crossings per side,
/// low-passed at the lower of the two Nyquist frequencies and normalized
/// per output sample so constant signals stay constant.
pub fn resample(x: &[f64], from_rate: u32, to_rate: u32) -> Result<Vec<f64>, AudioError> {
    if from_rate == 0 || to_rate == 0 {
        return Err(AudioError::BadRate);
    }
    if from_rate == to_rate {
        return Ok(x.to_vec());
    }
    let ratio = to_rate as f64 / from_rate as f64;
    let out_len = (x.len() as f64 * ratio).round() as usize;
    let cutoff = ratio.min(1.0);
    const HALF_WIDTH: isize = 32;

    let sinc = |t: f64| -> f64 {
        if t.abs() < 1e-12 {
            1.0
        } else {
            let pt = std::f64::consts::PI * t;
            pt.sin() / pt
        }
    };
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let center = i as f64 / ratio;
        let j0 = center.floor() as isize - HALF_WIDTH + 1;
        let mut acc = 0.0;
        let mut weight_sum = 0.0;
        for j in j0..j0 + 2 * HALF_WIDTH {
            let d = center - j as f64;
            let window = 0.5 * (1.0 + (std::f64::consts::PI * d / HALF_WIDTH as f64).cos());
            let w = cutoff * sinc(cutoff * d) * window;
            weight_sum += w;
            if (0..x.len() as isize).contains(&j) {
                acc += w * x[j as usize];
            }
        }
        out.push(acc / weight_sum);
    }
    Ok(out)
}

/// Truncate or zero-pad the tail so the signal has exactly `n` samples.
pub fn fix_length(x: &[f64], n: usize) -> Vec<f64> {
    let mut out = x[..x.len().min(n)].to_vec();
    out.resize(n, 0.0);
    out
}

/// Scale so the peak magnitude is 1; silence is returned unchanged.
pub fn peak_normalize(x: &[f64]) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|&v| v / peak).collect()
}

/// Read, resample, and length-fix a WAV file into a synthesis target.
pub fn load_target(
    path: impl AsRef<Path>,
    sample_rate: u32,
    n_samples: usize,
    normalize: bool,
) -> Result<AudioBuffer, AudioError> {
    let (samples, rate) = read_wav(path)?;
    let samples = resample(&samples, rate, sample_rate)?;
    let samples = fix_length(&samples, n_samples);
    let samples = if normalize { peak_normalize(&samples) } else { samples };
    Ok(AudioBuffer { samples, sample_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().unwrap().keep();
        dir.join(name)
    }

    #[test]
    fn pcm16_round_trip_within_quantization_step() {
        let path = tmp("rt16.wav");
        let x: Vec<f64> = (0..500).map(|i| ((i as f64) * 0.013).sin() * 0.95).collect();
        write_wav(&path, &x, 44_100, WavFormat::Pcm16).unwrap();
        let (y, rate) = read_wav(&path).unwrap();
        assert_eq!(rate, 44_100);
        assert_eq!(y.len(), x.len());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() <= 1.0 / 32768.0, "{a} vs {b}");
        }
    }

    #[test]
    fn pcm16_full_scale_sample() {
        let path = tmp("fs.wav");
        write_wav(&path, &[1.0, -1.0], 44_100, WavFormat::Pcm16).unwrap();
        let (y, _) = read_wav(&path).unwrap();
        assert!((y[0] - 32767.0 / 32768.0).abs() < 1e-9); // 0.99997
        assert_eq!(y[1], -1.0);
    }

    #[test]
    fn float32_round_trip_is_exact() {
        let path = tmp("rt32.wav");
        let x: Vec<f64> = (0..100).map(|i| (i as f32 as f64) / 128.0 - 0.3).collect();
        let x: Vec<f64> = x.iter().map(|&v| v as f32 as f64).collect();
        write_wav(&path, &x, 22_050, WavFormat::Float32).unwrap();
        let (y, rate) = read_wav(&path).unwrap();
        assert_eq!(rate, 22_050);
        assert_eq!(x, y);
    }

    #[test]
    fn pcm24_round_trip_within_step() {
        let path = tmp("rt24.wav");
        let x = vec![0.5, -0.25, 0.9999];
        write_wav(&path, &x, 48_000, WavFormat::Pcm24).unwrap();
        let (y, _) = read_wav(&path).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() <= 1.0 / 8_388_608.0);
        }
    }

    #[test]
    fn zero_length_wav_is_valid() {
        let path = tmp("empty.wav");
        write_wav(&path, &[], 44_100, WavFormat::Pcm16).unwrap();
        let (y, _) = read_wav(&path).unwrap();
        assert!(y.is_empty());
    }

    #[test]
    fn stereo_averages_to_mono() {
        let path = tmp("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 44_100,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut writer = hound::WavWriter::create(&path, spec).unwrap();
        for (l, r) in [(0.5f32, -0.5f32), (0.25, 0.75), (-1.0, -1.0)] {
            writer.write_sample(l).unwrap();
            writer.write_sample(r).unwrap();
        }
        writer.finalize().unwrap();
        let (y, _) = read_wav(&path).unwrap();
        assert_eq!(y, vec![0.0, 0.5, -1.0]);
    }

    #[test]
    fn missing_riff_magic_is_format_error() {
        let path = tmp("garbage.wav");
        std::fs::File::create(&path).unwrap().write_all(b"NOTAWAVFILE0000").unwrap();
        match read_wav(&path) {
            Err(AudioError::Format(_)) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        match read_wav("/nonexistent/nothing.wav") {
            Err(AudioError::Io(_)) => {}
            other => panic!("expected io error, got {other:?}"),
        }
    }

    #[test]
    fn resample_identity_when_rates_equal() {
        let x = vec![0.1, 0.2, 0.3];
        assert_eq!(resample(&x, 44_100, 44_100).unwrap(), x);
    }

    #[test]
    fn resample_length_arithmetic() {
        let x = vec![0.0; 22_050];
        assert_eq!(resample(&x, 22_050, 44_100).unwrap().len(), 44_100);
        let x = vec![0.0; 96_000];
        assert_eq!(resample(&x, 48_000, 44_100).unwrap().len(), 88_200);
    }

    #[test]
    fn resample_preserves_dc() {
        let x = vec![0.7; 4000];
        let y = resample(&x, 48_000, 44_100).unwrap();
        for &v in &y[100..y.len() - 100] {
            assert!((v - 0.7).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn resample_keeps_sine_peak_in_place() {
        // FFT peak oracle: a 1 kHz sine resampled 48k -> 44.1k keeps its
        // spectral peak within one bin of 1 kHz (4096-point analysis).
        let n_in = 9600;
        let x: Vec<f64> =
            (0..n_in).map(|i| (std::f64::consts::TAU * 1000.0 * i as f64 / 48_000.0).sin()).collect();
        let y = resample(&x, 48_000, 44_100).unwrap();
        let n = 4096;
        let segment = &y[1000..1000 + n];
        use rustfft::{num_complex::Complex, FftPlanner};
        let mut buf: Vec<Complex<f64>> =
            segment.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let peak = (0..n / 2)
            .max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap())
            .unwrap();
        let expected = 1000.0 * n as f64 / 44_100.0;
        assert!((peak as f64 - expected).abs() <= 1.0, "peak {peak}, expected {expected}");
    }

    #[test]
    fn fix_length_examples() {
        assert_eq!(fix_length(&vec![1.0; 100_000], 88_200).len(), 88_200);
        let padded = fix_length(&vec![1.0; 40_000], 88_200);
        assert_eq!(padded.len(), 88_200);
        assert!(padded[40_000..].iter().all(|&v| v == 0.0));
        let same = fix_length(&vec![0.5; 88_200], 88_200);
        assert!(same.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn peak_normalize_hits_unity() {
        let x = vec![0.25, -0.5, 0.1];
        let y = peak_normalize(&x);
        assert_eq!(y, vec![0.5, -1.0, 0.2]);
        assert_eq!(peak_normalize(&[0.0, 0.0]), vec![0.0, 0.0]);
    }
}
