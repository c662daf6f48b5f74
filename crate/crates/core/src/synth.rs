//! Deterministic synthesizer voice: keyboard, six ADSR envelopes, two LFOs,
//! a 4x5 modulation matrix, two VCOs plus a noise source, and a mixer.
//!
//! Envelopes and LFOs run at a reduced control rate and are linearly
//! upsampled to audio rate before driving the oscillators. Rendering is a
//! pure function of `(Patch, RenderConfig)`: the noise generator is seeded
//! per render, so identical inputs give bit-identical buffers.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::params::{
    denormalize_patch, validate_patch, Patch, PatchViolation, ADSR_STRIDE, IDX_ADSR_BASE,
    IDX_DURATION, IDX_LFO_BASE, IDX_MIDI_F0, IDX_MIXER_BASE, IDX_MOD_MATRIX_BASE, IDX_VCO1_BASE,
    IDX_VCO2_BASE, LFO_STRIDE,
};

/// Sample rates and seeding for one render.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub sample_rate: u32,
    pub control_rate: u32,
    pub buffer_seconds: f64,
    pub noise_seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { sample_rate: 44_100, control_rate: 441, buffer_seconds: 2.0, noise_seed: 0 }
    }
}

impl RenderConfig {
    pub fn audio_len(&self) -> usize {
        (self.sample_rate as f64 * self.buffer_seconds).round() as usize
    }

    pub fn control_len(&self) -> usize {
        (self.control_rate as f64 * self.buffer_seconds).round() as usize
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.control_rate == 0 || self.sample_rate % self.control_rate != 0 {
            return Err(SynthError::NonIntegerUpsampleFactor {
                sample_rate: self.sample_rate,
                control_rate: self.control_rate,
            });
        }
        if self.buffer_seconds <= 0.0 {
            return Err(SynthError::InvalidBufferSeconds(self.buffer_seconds));
        }
        Ok(())
    }
}

/// Mono audio with its sample rate. Samples stay in `[-1, 1]` for rendered
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

/// A modulation signal at control (or, after upsampling, audio) rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    pub samples: Vec<f64>,
    pub rate: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("midi note {0} outside [0, 127]")]
    MidiOutOfRange(f64),
    #[error("sample rate {sample_rate} is not an integer multiple of control rate {control_rate}")]
    NonIntegerUpsampleFactor { sample_rate: u32, control_rate: u32 },
    #[error("buffer_seconds must be positive, got {0}")]
    InvalidBufferSeconds(f64),
    #[error("control signals differ in rate or length")]
    SignalMismatch,
    #[error("invalid patch: {}", format_violations(.0))]
    InvalidPatch(Vec<PatchViolation>),
}

fn format_violations(v: &[PatchViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Equal-tempered conversion: 440 Hz at midi note 69.
pub fn midi_to_hz(m: f64) -> Result<f64, SynthError> {
    if !(0.0..=127.0).contains(&m) {
        return Err(SynthError::MidiOutOfRange(m));
    }
    Ok(440.0 * ((m - 69.0) / 12.0).exp2())
}

/// Attack, decay, sustain, release, and segment curvature for one envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdsrParams {
    pub attack: f64,
    pub decay: f64,
    pub sustain: f64,
    pub release: f64,
    pub alpha: f64,
}

/// Render an ADSR envelope of `n` samples at `rate` Hz.
///
/// The attack ramps `0 -> 1` as `(t/A)^alpha`, the decay relaxes to the
/// sustain level as `1 - (1-S)*(t/D)^alpha`, the level holds at `S` until
/// `note_on` seconds, and the release decays to zero as
/// `L_off * (1 - (t/R)^alpha)`. Zero-duration segments are skipped and the
/// output is clamped to `[0, 1]`.
pub fn adsr_envelope(p: &AdsrParams, note_on: f64, rate: u32, n: usize) -> ControlSignal {
    let pre_release = |t: f64| -> f64 {
        if t < p.attack {
            (t / p.attack).powf(p.alpha)
        } else if t < p.attack + p.decay {
            1.0 - (1.0 - p.sustain) * ((t - p.attack) / p.decay).powf(p.alpha)
        } else {
            p.sustain
        }
    };
    let level_at_off = if note_on < f64::EPSILON { 0.0 } else { pre_release(note_on) };
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let level = if t < note_on {
                pre_release(t)
            } else if t < note_on + p.release {
                level_at_off * (1.0 - ((t - note_on) / p.release).powf(p.alpha))
            } else {
                0.0
            };
            level.clamp(0.0, 1.0)
        })
        .collect();
    ControlSignal { samples, rate }
}

/// Frequency, depth, phase, and waveform mix for one LFO.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfoParams {
    pub frequency: f64,
    pub mod_depth: f64,
    pub initial_phase: f64,
    /// Mix weights for sine, triangle, saw, reverse saw, and square.
    pub shape_weights: [f64; 5],
}

fn wrap01(phase: f64) -> f64 {
    (phase / TAU).rem_euclid(1.0)
}

fn waveform_mix(phase: f64, weights: &[f64; 5], weight_sum: f64) -> f64 {
    let x = wrap01(phase);
    let sin = phase.sin();
    let tri = 1.0 - 4.0 * (x - 0.5).abs();
    let saw = 2.0 * x - 1.0;
    let rsaw = 1.0 - 2.0 * x;
    let sqr = if x < 0.5 { 1.0 } else { -1.0 };
    (weights[0] * sin + weights[1] * tri + weights[2] * saw + weights[3] * rsaw + weights[4] * sqr)
        / weight_sum
}

/// Render one LFO whose rate is modulated by `rate_env` and whose output is
/// scaled by `amp_env`. The instantaneous frequency is clamped to `[0, 20]`
/// Hz and the waveform is a normalized mix of the five shapes.
pub fn lfo_signal(
    p: &LfoParams,
    rate_env: &ControlSignal,
    amp_env: &ControlSignal,
) -> Result<ControlSignal, SynthError> {
    if rate_env.rate != amp_env.rate || rate_env.samples.len() != amp_env.samples.len() {
        return Err(SynthError::SignalMismatch);
    }
    let rate = rate_env.rate;
    let weight_sum = p.shape_weights.iter().sum::<f64>() + 1e-8;
    let mut phase = p.initial_phase;
    let samples = rate_env
        .samples
        .iter()
        .zip(&amp_env.samples)
        .map(|(&r, &a)| {
            let out = a * waveform_mix(phase, &p.shape_weights, weight_sum);
            let freq = (p.frequency + p.mod_depth * r).clamp(0.0, 20.0);
            phase += TAU * freq / rate as f64;
            out
        })
        .collect();
    Ok(ControlSignal { samples, rate })
}

/// Index order of modulation destinations produced by [`mod_matrix_mix`].
pub const DST_VCO1_PITCH: usize = 0;
pub const DST_VCO1_AMP: usize = 1;
pub const DST_VCO2_PITCH: usize = 2;
pub const DST_VCO2_AMP: usize = 3;
pub const DST_NOISE_AMP: usize = 4;

/// Mix four modulation sources into five destinations with the given 4x5
/// weight matrix. Amplitude destinations are clamped to `[0, 1]`, pitch
/// destinations to `[-1, 1]`.
pub fn mod_matrix_mix(
    weights: &[[f64; 5]; 4],
    sources: [&ControlSignal; 4],
) -> Result<[ControlSignal; 5], SynthError> {
    let rate = sources[0].rate;
    let n = sources[0].samples.len();
    if sources.iter().any(|s| s.rate != rate || s.samples.len() != n) {
        return Err(SynthError::SignalMismatch);
    }
    let mut out: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    for (src, row) in sources.iter().zip(weights) {
        for (dst, &w) in out.iter_mut().zip(row) {
            if w == 0.0 {
                continue;
            }
            for (o, &s) in dst.iter_mut().zip(&src.samples) {
                *o += w * s;
            }
        }
    }
    let is_amp = [false, true, false, true, true];
    for (dst, amp) in out.iter_mut().zip(is_amp) {
        let (lo, hi) = if amp { (0.0, 1.0) } else { (-1.0, 1.0) };
        for v in dst.iter_mut() {
            *v = v.clamp(lo, hi);
        }
    }
    Ok(out.map(|samples| ControlSignal { samples, rate }))
}

/// Oscillator waveform selection for [`vco_render`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VcoKind {
    Sine,
    /// Blend between a tanh-smoothed square and a saw, controlled by `shape`.
    SquareSaw { shape: f64 },
}

/// Render one oscillator. The instantaneous frequency is
/// `f0 * 2^((tuning + mod_depth * pitch_mod) / 12)`, clamped to
/// `[0, sample_rate/2]`; `pitch_mod` must already be at audio rate.
pub fn vco_render(
    kind: VcoKind,
    f0: f64,
    tuning: f64,
    mod_depth: f64,
    pitch_mod: &[f64],
    initial_phase: f64,
    sample_rate: u32,
    n: usize,
) -> AudioBuffer {
    debug_assert_eq!(pitch_mod.len(), n);
    let nyquist = sample_rate as f64 / 2.0;
    let tuned = f0 * (tuning / 12.0).exp2();
    let phase_per_hz = TAU / sample_rate as f64;
    // Phase track; computed once, shared by both waveform shapes.
    let mut phases = Vec::with_capacity(n);
    let mut phase = initial_phase;
    for &pm in &pitch_mod[..n] {
        phases.push(phase);
        let e = mod_depth * pm;
        let freq = if e == 0.0 { tuned } else { tuned * (e / 12.0).exp2() };
        phase += phase_per_hz * freq.clamp(0.0, nyquist);
    }
    let samples = match kind {
        VcoKind::Sine => phases.iter().map(|p| p.sin()).collect(),
        VcoKind::SquareSaw { shape } => phases
            .iter()
            .map(|&p| {
                let square = (20.0 * p.sin()).tanh();
                let saw = 2.0 * wrap01(p) - 1.0;
                (1.0 - shape) * square + shape * saw
            })
            .collect(),
    };
    AudioBuffer { samples, sample_rate }
}

/// Linearly interpolate a control signal up to `rate * factor`, holding the
/// last sample at the tail.
pub fn upsample_control(c: &ControlSignal, factor: usize) -> ControlSignal {
    assert!(factor >= 1, "upsample factor must be >= 1");
    let n = c.samples.len();
    let mut samples = Vec::with_capacity(n * factor);
    for j in 0..n {
        let a = c.samples[j];
        let b = if j + 1 < n { c.samples[j + 1] } else { a };
        for k in 0..factor {
            let t = k as f64 / factor as f64;
            samples.push(a + (b - a) * t);
        }
    }
    ControlSignal { samples, rate: c.rate * factor as u32 }
}

/// All 78 parameters of one voice, in physical units.
#[derive(Debug, Clone)]
struct VoiceParams {
    midi_f0: f64,
    duration: f64,
    adsrs: [AdsrParams; 6],
    lfos: [LfoParams; 2],
    mod_matrix: [[f64; 5]; 4],
    vco_1: OscParams,
    vco_2: OscParams,
    mixer: [f64; 3],
}

#[derive(Debug, Clone, Copy)]
struct OscParams {
    tuning: f64,
    mod_depth: f64,
    initial_phase: f64,
    shape: f64,
}

impl VoiceParams {
    fn from_patch(p: &Patch) -> Result<Self, SynthError> {
        validate_patch(p).map_err(SynthError::InvalidPatch)?;
        let v = denormalize_patch(p).expect("validated patch denormalizes");
        let adsrs = std::array::from_fn(|i| {
            let base = IDX_ADSR_BASE + i * ADSR_STRIDE;
            AdsrParams {
                attack: v[base],
                decay: v[base + 1],
                sustain: v[base + 2],
                release: v[base + 3],
                alpha: v[base + 4],
            }
        });
        let lfos = std::array::from_fn(|i| {
            let base = IDX_LFO_BASE + i * LFO_STRIDE;
            LfoParams {
                frequency: v[base],
                mod_depth: v[base + 1],
                initial_phase: v[base + 2],
                shape_weights: [v[base + 3], v[base + 4], v[base + 5], v[base + 6], v[base + 7]],
            }
        });
        let mod_matrix = std::array::from_fn(|s| {
            std::array::from_fn(|d| v[IDX_MOD_MATRIX_BASE + s * 5 + d])
        });
        Ok(Self {
            midi_f0: v[IDX_MIDI_F0],
            duration: v[IDX_DURATION],
            adsrs,
            lfos,
            mod_matrix,
            vco_1: OscParams {
                tuning: v[IDX_VCO1_BASE],
                mod_depth: v[IDX_VCO1_BASE + 1],
                initial_phase: v[IDX_VCO1_BASE + 2],
                shape: 0.0,
            },
            vco_2: OscParams {
                tuning: v[IDX_VCO2_BASE],
                mod_depth: v[IDX_VCO2_BASE + 1],
                initial_phase: v[IDX_VCO2_BASE + 2],
                shape: v[IDX_VCO2_BASE + 3],
            },
            mixer: [v[IDX_MIXER_BASE], v[IDX_MIXER_BASE + 1], v[IDX_MIXER_BASE + 2]],
        })
    }
}

/// Render a patch to a mono buffer. Deterministic given `(p, cfg)`.
pub fn render(p: &Patch, cfg: &RenderConfig) -> Result<AudioBuffer, SynthError> {
    cfg.validate()?;
    let vp = VoiceParams::from_patch(p)?;
    let n_ctrl = cfg.control_len();
    let n_audio = cfg.audio_len();
    let factor = (cfg.sample_rate / cfg.control_rate) as usize;
    let note_on = vp.duration;

    let envs: Vec<ControlSignal> = vp
        .adsrs
        .iter()
        .map(|a| adsr_envelope(a, note_on, cfg.control_rate, n_ctrl))
        .collect();
    let lfo_1 = lfo_signal(&vp.lfos[0], &envs[2], &envs[3])?;
    let lfo_2 = lfo_signal(&vp.lfos[1], &envs[4], &envs[5])?;

    let mixed = mod_matrix_mix(&vp.mod_matrix, [&envs[0], &envs[1], &lfo_1, &lfo_2])?;
    let mods: Vec<ControlSignal> = mixed.iter().map(|c| upsample_control(c, factor)).collect();

    let f0 = midi_to_hz(vp.midi_f0)?;
    let vco_1 = vco_render(
        VcoKind::Sine,
        f0,
        vp.vco_1.tuning,
        vp.vco_1.mod_depth,
        &mods[DST_VCO1_PITCH].samples,
        vp.vco_1.initial_phase,
        cfg.sample_rate,
        n_audio,
    );
    let vco_2 = vco_render(
        VcoKind::SquareSaw { shape: vp.vco_2.shape },
        f0,
        vp.vco_2.tuning,
        vp.vco_2.mod_depth,
        &mods[DST_VCO2_PITCH].samples,
        vp.vco_2.initial_phase,
        cfg.sample_rate,
        n_audio,
    );

    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.noise_seed);
    let [vco_1_level, vco_2_level, noise_level] = vp.mixer;
    let vco1_amp = &mods[DST_VCO1_AMP].samples;
    let vco2_amp = &mods[DST_VCO2_AMP].samples;
    let noise_amp = &mods[DST_NOISE_AMP].samples;
    let samples = (0..n_audio)
        .map(|i| {
            let noise = noise_rng.random::<f64>() * 2.0 - 1.0;
            let s = vco_1_level * vco_1.samples[i] * vco1_amp[i]
                + vco_2_level * vco_2.samples[i] * vco2_amp[i]
                + noise_level * noise * noise_amp[i];
            s.clamp(-1.0, 1.0)
        })
        .collect();
    Ok(AudioBuffer { samples, sample_rate: cfg.sample_rate })
}
