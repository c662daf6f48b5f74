//! Mel-scaled multi-resolution STFT reconstruction loss.
//!
//! Each resolution computes a Hann-windowed, centered STFT, projects the
//! magnitude spectrogram onto 45 triangular mel filters (HTK scale), and
//! scores spectral convergence plus mean absolute magnitude error. The loss
//! is the mean over resolutions with equal term weights by default.
//!
//! [`MelLoss`] precomputes FFT plans, filterbanks, and optionally the target
//! spectrograms, since optimizers evaluate the same target thousands of times.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::synth::AudioBuffer;

/// One STFT resolution: FFT length, frame hop, and Hann window length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub fft_size: usize,
    pub hop_size: usize,
    pub window_size: usize,
}

/// Loss configuration; the defaults are the ones used everywhere in this
/// toolkit.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub resolutions: Vec<Resolution>,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Weight of the spectral convergence term.
    pub w_sc: f64,
    /// Weight of the linear magnitude (L1) term.
    pub w_mag: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        let (ffts, hops, windows) =
            ([2048, 1024, 512, 256], [256, 128, 64, 32], [1024, 512, 256, 128]);
        Self {
            resolutions: (0..4)
                .map(|i| Resolution {
                    fft_size: ffts[i],
                    hop_size: hops[i],
                    window_size: windows[i],
                })
                .collect(),
            n_mels: 45,
            f_min: 0.0,
            f_max: 22_050.0,
            w_sc: 1.0,
            w_mag: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("window size {window} exceeds FFT size {fft}")]
    WindowExceedsFft { window: usize, fft: usize },
    #[error("invalid mel band edges f_min={f_min}, f_max={f_max} at sample rate {sample_rate}")]
    InvalidBandEdges { f_min: f64, f_max: f64, sample_rate: u32 },
    #[error("empty input signal")]
    EmptyInput,
    #[error("spectrogram shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("buffers differ in length or sample rate")]
    BufferMismatch,
}

/// Magnitude spectrogram, frame-major: `data[frame * bins + bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrogram {
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<f64>,
}

impl MagnitudeSpectrogram {
    pub fn at(&self, bin: usize, frame: usize) -> f64 {
        self.data[frame * self.bins + bin]
    }
}

/// Mel spectrogram, mel-major: `data[mel * frames + frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub n_mels: usize,
    pub frames: usize,
    pub data: Vec<f64>,
    /// Index of the resolution that produced this spectrogram.
    pub resolution: usize,
}

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

fn hann(window_size: usize) -> Vec<f64> {
    // Periodic Hann; sums to exactly window_size / 2.
    (0..window_size)
        .map(|n| 0.5 * (1.0 - (std::f64::consts::TAU * n as f64 / window_size as f64).cos()))
        .collect()
}

/// Triangular mel filterbank with rows stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    /// Center frequency of each filter in Hz.
    pub centers_hz: Vec<f64>,
    rows: Vec<SparseRow>,
}

#[derive(Debug, Clone, PartialEq)]
struct SparseRow {
    start: usize,
    weights: Vec<f64>,
}

impl MelFilterbank {
    /// Dense `n_mels x n_bins` weight matrix.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_bins]; self.n_mels];
        for (m, row) in self.rows.iter().enumerate() {
            for (j, &w) in row.weights.iter().enumerate() {
                out[m][row.start + j] = w;
            }
        }
        out
    }

    /// Project one magnitude frame onto the filters, writing mel `m` of the
    /// frame to `out[m * stride]`.
    fn apply_frame(&self, mags: &[f64], out: &mut [f64], stride: usize) {
        for (m, row) in self.rows.iter().enumerate() {
            let bins = &mags[row.start..];
            let mut acc = 0.0;
            for (j, &w) in row.weights.iter().enumerate() {
                acc += w * bins[j];
            }
            out[m * stride] = acc;
        }
    }

    /// Project a magnitude spectrogram onto the filters.
    pub fn apply(&self, spec: &MagnitudeSpectrogram, resolution: usize) -> MelSpectrogram {
        debug_assert_eq!(spec.bins, self.n_bins);
        let frames = spec.frames;
        let mut data = vec![0.0; self.n_mels * frames];
        for (m, row) in self.rows.iter().enumerate() {
            let out = &mut data[m * frames..(m + 1) * frames];
            for (t, o) in out.iter_mut().enumerate() {
                let frame = &spec.data[t * spec.bins + row.start..];
                let mut acc = 0.0;
                for (j, &w) in row.weights.iter().enumerate() {
                    acc += w * frame[j];
                }
                *o = acc;
            }
        }
        MelSpectrogram { n_mels: self.n_mels, frames, data, resolution }
    }
}

/// Build a triangular filterbank with centers uniformly spaced on the HTK
/// mel scale. A filter too narrow to cover any FFT bin falls back to unit
/// weight at the bin nearest its center, so every row stays non-empty.
pub fn mel_filterbank(
    n_mels: usize,
    fft_size: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterbank, SpectralError> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) || n_mels == 0 {
        return Err(SpectralError::InvalidBandEdges { f_min, f_max, sample_rate });
    }
    let n_bins = fft_size / 2 + 1;
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let mel_lo = hz_to_mel(f_min);
    let mel_hi = hz_to_mel(f_max);
    let edge_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut rows = Vec::with_capacity(n_mels);
    let mut centers_hz = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (lower, center, upper) = (edge_hz[m], edge_hz[m + 1], edge_hz[m + 2]);
        centers_hz.push(center);
        let k_lo = (lower / bin_hz).ceil() as usize;
        let k_hi = ((upper / bin_hz).floor() as usize).min(n_bins - 1);
        let mut start = k_lo;
        let mut weights = Vec::new();
        for k in k_lo..=k_hi.max(k_lo).min(n_bins - 1) {
            let f = k as f64 * bin_hz;
            let w = if f <= center {
                (f - lower) / (center - lower)
            } else {
                (upper - f) / (upper - center)
            };
            weights.push(w.max(0.0));
        }
        while let Some(&first) = weights.first() {
            if first > 0.0 {
                break;
            }
            weights.remove(0);
            start += 1;
        }
        while weights.last() == Some(&0.0) {
            weights.pop();
        }
        if weights.is_empty() {
            // Narrow filter between bins; keep the row usable.
            start = ((center / bin_hz).round() as usize).min(n_bins - 1);
            weights = vec![1.0];
        }
        rows.push(SparseRow { start, weights });
    }
    Ok(MelFilterbank { n_mels, n_bins, centers_hz, rows })
}

/// Number of STFT frames for a centered analysis.
pub fn stft_frame_count(len: usize, hop_size: usize) -> usize {
    len / hop_size + 1
}

/// Centered STFT magnitude: Hann window of `window_size`, zero-padded to
/// `fft_size`, hop `hop_size`; the signal is padded by `window_size / 2`
/// zeros on both ends.
pub fn stft_magnitude(
    x: &[f64],
    fft_size: usize,
    hop_size: usize,
    window_size: usize,
) -> Result<MagnitudeSpectrogram, SpectralError> {
    let res = Resolution { fft_size, hop_size, window_size };
    validate_resolution(&res)?;
    if x.is_empty() {
        return Err(SpectralError::EmptyInput);
    }
    let plan = FftPlanner::new().plan_fft_forward(fft_size);
    Ok(stft_magnitude_planned(x, &res, &plan))
}

fn validate_resolution(r: &Resolution) -> Result<(), SpectralError> {
    if r.window_size > r.fft_size {
        return Err(SpectralError::WindowExceedsFft { window: r.window_size, fft: r.fft_size });
    }
    Ok(())
}

/// Streaming STFT core. Two real frames are packed into one complex FFT
/// (even/odd split of the transform), which halves the FFT work; each
/// frame's magnitude row is handed to `consume(frame_index, mags)` without
/// materializing the full spectrogram.
fn stft_foreach_frame(
    x: &[f64],
    res: &Resolution,
    plan: &Arc<dyn Fft<f64>>,
    window: &[f64],
    mut consume: impl FnMut(usize, &[f64]),
) -> usize {
    let w = res.window_size;
    let n = res.fft_size;
    let bins = n / 2 + 1;
    let frames = stft_frame_count(x.len(), res.hop_size);

    let mut padded = vec![0.0; x.len() + w];
    padded[w / 2..w / 2 + x.len()].copy_from_slice(x);

    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    let mut mag_a = vec![0.0; bins];
    let mut mag_b = vec![0.0; bins];

    let mut t = 0;
    while t < frames {
        let fa = &padded[t * res.hop_size..t * res.hop_size + w];
        let pair = t + 1 < frames;
        if pair {
            let fb = &padded[(t + 1) * res.hop_size..(t + 1) * res.hop_size + w];
            for i in 0..w {
                buf[i] = Complex::new(window[i] * fa[i], window[i] * fb[i]);
            }
        } else {
            for i in 0..w {
                buf[i] = Complex::new(window[i] * fa[i], 0.0);
            }
        }
        for v in buf[w..].iter_mut() {
            *v = Complex::new(0.0, 0.0);
        }
        plan.process_with_scratch(&mut buf, &mut scratch);
        for k in 0..bins {
            let zk = buf[k];
            let zmk = buf[(n - k) % n];
            // spectra of the real and imaginary halves of the packed frame
            let (re_a, im_a) = (zk.re + zmk.re, zk.im - zmk.im);
            mag_a[k] = 0.5 * (re_a * re_a + im_a * im_a).sqrt();
            if pair {
                let (re_b, im_b) = (zk.im + zmk.im, zmk.re - zk.re);
                mag_b[k] = 0.5 * (re_b * re_b + im_b * im_b).sqrt();
            }
        }
        consume(t, &mag_a);
        if pair {
            consume(t + 1, &mag_b);
        }
        t += if pair { 2 } else { 1 };
    }
    frames
}

fn stft_magnitude_planned(
    x: &[f64],
    res: &Resolution,
    plan: &Arc<dyn Fft<f64>>,
) -> MagnitudeSpectrogram {
    let bins = res.fft_size / 2 + 1;
    let frames = stft_frame_count(x.len(), res.hop_size);
    let mut data = vec![0.0; frames * bins];
    let window = hann(res.window_size);
    stft_foreach_frame(x, res, plan, &window, |t, mags| {
        data[t * bins..(t + 1) * bins].copy_from_slice(mags);
    });
    MagnitudeSpectrogram { bins, frames, data }
}

/// Frobenius-norm relative error between two mel spectrograms.
pub fn spectral_convergence(
    target: &MelSpectrogram,
    pred: &MelSpectrogram,
) -> Result<f64, SpectralError> {
    if target.n_mels != pred.n_mels || target.frames != pred.frames {
        return Err(SpectralError::ShapeMismatch(
            target.n_mels,
            target.frames,
            pred.n_mels,
            pred.frames,
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&t, &p) in target.data.iter().zip(&pred.data) {
        num += (t - p) * (t - p);
        den += t * t;
    }
    Ok(num.sqrt() / (den.sqrt() + 1e-12))
}

/// Precomputed loss engine: FFT plans, windows, and filterbanks for every
/// resolution.
pub struct MelLoss {
    cfg: LossConfig,
    sample_rate: u32,
    plans: Vec<Arc<dyn Fft<f64>>>,
    windows: Vec<Vec<f64>>,
    banks: Vec<MelFilterbank>,
}

impl MelLoss {
    pub fn new(cfg: LossConfig, sample_rate: u32) -> Result<Self, SpectralError> {
        let mut planner = FftPlanner::new();
        let mut plans = Vec::new();
        let mut windows = Vec::new();
        let mut banks = Vec::new();
        for r in &cfg.resolutions {
            validate_resolution(r)?;
            plans.push(planner.plan_fft_forward(r.fft_size));
            windows.push(hann(r.window_size));
            banks.push(mel_filterbank(cfg.n_mels, r.fft_size, sample_rate, cfg.f_min, cfg.f_max)?);
        }
        Ok(Self { cfg, sample_rate, plans, windows, banks })
    }

    pub fn config(&self) -> &LossConfig {
        &self.cfg
    }

    fn mel_at(&self, x: &[f64], i: usize) -> MelSpectrogram {
        let r = &self.cfg.resolutions[i];
        let frames = stft_frame_count(x.len(), r.hop_size);
        let n_mels = self.cfg.n_mels;
        let mut data = vec![0.0; n_mels * frames];
        let bank = &self.banks[i];
        stft_foreach_frame(x, r, &self.plans[i], &self.windows[i], |t, mags| {
            bank.apply_frame(mags, &mut data[t..], frames);
        });
        MelSpectrogram { n_mels, frames, data, resolution: i }
    }

    /// Mel spectrogram of `x` at every resolution.
    pub fn mel_spectrograms(&self, x: &[f64]) -> Vec<MelSpectrogram> {
        (0..self.cfg.resolutions.len()).map(|i| self.mel_at(x, i)).collect()
    }

    /// Loss of `pred` against precomputed target spectrograms.
    pub fn loss_against(
        &self,
        target_mels: &[MelSpectrogram],
        pred: &[f64],
    ) -> Result<f64, SpectralError> {
        let mut total = 0.0;
        for i in 0..self.cfg.resolutions.len() {
            let mel_p = self.mel_at(pred, i);
            let mel_t = &target_mels[i];
            let sc = spectral_convergence(mel_t, &mel_p)?;
            let mag = mel_t
                .data
                .iter()
                .zip(&mel_p.data)
                .map(|(&t, &p)| (t - p).abs())
                .sum::<f64>()
                / mel_t.data.len() as f64;
            total += self.cfg.w_sc * sc + self.cfg.w_mag * mag;
        }
        Ok(total / self.cfg.resolutions.len() as f64)
    }

    pub fn loss(&self, target: &[f64], pred: &[f64]) -> Result<f64, SpectralError> {
        if target.len() != pred.len() {
            return Err(SpectralError::BufferMismatch);
        }
        if target.is_empty() {
            return Err(SpectralError::EmptyInput);
        }
        let target_mels = self.mel_spectrograms(target);
        self.loss_against(&target_mels, pred)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
}

/// Multi-resolution mel STFT loss between two equal-length buffers.
pub fn multires_loss(
    target: &AudioBuffer,
    pred: &AudioBuffer,
    cfg: &LossConfig,
) -> Result<f64, SpectralError> {
    if target.sample_rate != pred.sample_rate || target.samples.len() != pred.samples.len() {
        return Err(SpectralError::BufferMismatch);
    }
    MelLoss::new(cfg.clone(), target.sample_rate)?.loss(&target.samples, &pred.samples)
}
