//! The 78-dimensional synthesizer parameter space.
//!
//! Optimizers work exclusively in normalized `[0,1]^78` coordinates; physical
//! units (seconds, hertz, midi notes, ...) appear only when a patch is
//! rendered, analyzed, or exported. The descriptor table below fixes the
//! coordinate order, ranges, and denormalization curves for the whole
//! toolkit, so a serialized patch means the same thing everywhere.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::LazyLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of synthesizer parameters; the dimensionality of every patch.
pub const PARAM_COUNT: usize = 78;

/// The six ADSR generators, in table order.
pub const ADSR_NAMES: [&str; 6] = [
    "adsr_1",
    "adsr_2",
    "lfo_1_rate_adsr",
    "lfo_1_amp_adsr",
    "lfo_2_rate_adsr",
    "lfo_2_amp_adsr",
];

/// Per-ADSR fields, in table order.
pub const ADSR_FIELDS: [&str; 5] = ["attack", "decay", "sustain", "release", "alpha"];

/// Modulation matrix sources, in table order.
pub const MOD_SOURCES: [&str; 4] = ["adsr_1", "adsr_2", "lfo_1", "lfo_2"];

/// Modulation matrix destinations, in table order.
pub const MOD_DESTINATIONS: [&str; 5] =
    ["vco1_pitch", "vco1_amp", "vco2_pitch", "vco2_amp", "noise_amp"];

// Fixed offsets into the descriptor table. These are consequences of the
// table construction below and are asserted in tests.
pub const IDX_MIDI_F0: usize = 0;
pub const IDX_DURATION: usize = 1;
pub const IDX_ADSR_BASE: usize = 2;
pub const ADSR_STRIDE: usize = 5;
pub const IDX_LFO_BASE: usize = 32;
pub const LFO_STRIDE: usize = 8;
pub const IDX_MOD_MATRIX_BASE: usize = 48;
pub const IDX_VCO1_BASE: usize = 68;
pub const IDX_VCO2_BASE: usize = 71;
pub const IDX_MIXER_BASE: usize = 75;

/// Range, curve, and unit for one synthesizer parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterDescriptor {
    /// Dot-path name, e.g. `"keyboard.midi_f0"`. Unique within the table.
    pub name: String,
    /// Lower bound in physical units.
    pub min: f64,
    /// Upper bound in physical units.
    pub max: f64,
    /// Denormalization exponent; the normalized value is raised to this
    /// power before being scaled into `[min, max]`.
    pub curve: f64,
    /// Physical unit, e.g. `"seconds"`, `"hertz"`, `"midi"`.
    pub unit: String,
}

impl ParameterDescriptor {
    fn new(name: impl Into<String>, min: f64, max: f64, curve: f64, unit: &str) -> Self {
        Self { name: name.into(), min, max, curve, unit: unit.to_string() }
    }
}

/// A point in normalized parameter space plus provenance metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    /// Exactly [`PARAM_COUNT`] values, each in `[0, 1]`, in descriptor order.
    pub values: Vec<f64>,
    /// Class name the patch belongs to (e.g. `"cat"`), if any.
    pub label: Option<String>,
    /// Where the patch came from: an optimizer name or `"sampled"`.
    pub source: Option<String>,
}

impl Patch {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, label: None, source: None }
    }
}

static TABLE: LazyLock<Vec<ParameterDescriptor>> = LazyLock::new(build_table);

static NAME_INDEX: LazyLock<HashMap<&'static str, usize>> = LazyLock::new(|| {
    descriptor_table()
        .iter()
        .enumerate()
        .map(|(i, d)| (d.name.as_str(), i))
        .collect()
});

fn build_table() -> Vec<ParameterDescriptor> {
    let mut t = Vec::with_capacity(PARAM_COUNT);
    t.push(ParameterDescriptor::new("keyboard.midi_f0", 0.0, 127.0, 1.0, "midi"));
    t.push(ParameterDescriptor::new("keyboard.duration", 0.01, 4.0, 0.5, "seconds"));
    for adsr in ADSR_NAMES {
        t.push(ParameterDescriptor::new(format!("{adsr}.attack"), 0.0, 2.0, 2.0, "seconds"));
        t.push(ParameterDescriptor::new(format!("{adsr}.decay"), 0.0, 2.0, 2.0, "seconds"));
        t.push(ParameterDescriptor::new(format!("{adsr}.sustain"), 0.0, 1.0, 1.0, "ratio"));
        t.push(ParameterDescriptor::new(format!("{adsr}.release"), 0.0, 5.0, 2.0, "seconds"));
        t.push(ParameterDescriptor::new(format!("{adsr}.alpha"), 0.1, 6.0, 1.0, "ratio"));
    }
    for lfo in ["lfo_1", "lfo_2"] {
        t.push(ParameterDescriptor::new(format!("{lfo}.frequency"), 0.0, 20.0, 2.0, "hertz"));
        t.push(ParameterDescriptor::new(format!("{lfo}.mod_depth"), -10.0, 20.0, 1.0, "hertz"));
        t.push(ParameterDescriptor::new(format!("{lfo}.initial_phase"), -PI, PI, 1.0, "radians"));
        for shape in ["sin", "tri", "saw", "rsaw", "sqr"] {
            t.push(ParameterDescriptor::new(format!("{lfo}.{shape}"), 0.0, 1.0, 1.0, "ratio"));
        }
    }
    for src in MOD_SOURCES {
        for dst in MOD_DESTINATIONS {
            t.push(ParameterDescriptor::new(
                format!("mod_matrix.{src}.{dst}"),
                0.0,
                1.0,
                0.5,
                "ratio",
            ));
        }
    }
    for vco in ["vco_1", "vco_2"] {
        t.push(ParameterDescriptor::new(format!("{vco}.tuning"), -24.0, 24.0, 1.0, "semitones"));
        t.push(ParameterDescriptor::new(
            format!("{vco}.mod_depth"),
            -96.0,
            96.0,
            1.0,
            "semitones",
        ));
        t.push(ParameterDescriptor::new(format!("{vco}.initial_phase"), -PI, PI, 1.0, "radians"));
        if vco == "vco_2" {
            t.push(ParameterDescriptor::new("vco_2.shape", 0.0, 1.0, 1.0, "ratio"));
        }
    }
    for level in ["vco_1_level", "vco_2_level", "noise_level"] {
        t.push(ParameterDescriptor::new(format!("mixer.{level}"), 0.0, 1.0, 1.0, "ratio"));
    }
    debug_assert_eq!(t.len(), PARAM_COUNT);
    t
}

/// The fixed, ordered table of all 78 parameter descriptors.
pub fn descriptor_table() -> &'static [ParameterDescriptor] {
    &TABLE
}

/// Index of the descriptor with the given dot-path name, if it exists.
pub fn descriptor_index(name: &str) -> Option<usize> {
    NAME_INDEX.get(name).copied()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("normalized value {0} outside [0, 1]")]
    NormalizedOutOfRange(f64),
    #[error("value {value} outside [{min}, {max}] for parameter {name}")]
    ValueOutOfRange { name: String, value: f64, min: f64, max: f64 },
}

/// Map a normalized coordinate to physical units: `min + (max-min) * u^curve`.
pub fn denormalize(u: f64, d: &ParameterDescriptor) -> Result<f64, ParamError> {
    if !(0.0..=1.0).contains(&u) {
        return Err(ParamError::NormalizedOutOfRange(u));
    }
    Ok(d.min + (d.max - d.min) * u.powf(d.curve))
}

/// Exact inverse of [`denormalize`].
pub fn normalize(v: f64, d: &ParameterDescriptor) -> Result<f64, ParamError> {
    if v < d.min || v > d.max {
        return Err(ParamError::ValueOutOfRange {
            name: d.name.clone(),
            value: v,
            min: d.min,
            max: d.max,
        });
    }
    Ok(((v - d.min) / (d.max - d.min)).powf(1.0 / d.curve))
}

/// Denormalize every coordinate of a patch into physical units.
pub fn denormalize_patch(p: &Patch) -> Result<Vec<f64>, ParamError> {
    p.values
        .iter()
        .zip(descriptor_table())
        .map(|(&u, d)| denormalize(u, d))
        .collect()
}

/// Draw a patch uniformly from `[0,1]^78`. Deterministic given the rng state.
pub fn random_patch<R: Rng + ?Sized>(rng: &mut R) -> Patch {
    Patch::new((0..PARAM_COUNT).map(|_| rng.random::<f64>()).collect())
}

/// A way in which a patch fails validation.
#[derive(Debug, Clone, PartialEq)]
pub enum PatchViolation {
    WrongLength { expected: usize, actual: usize },
    OutOfRange { index: usize, value: f64 },
}

impl fmt::Display for PatchViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatchViolation::WrongLength { expected, actual } => {
                write!(f, "patch has {actual} values, expected {expected}")
            }
            PatchViolation::OutOfRange { index, value } => {
                let name = &descriptor_table()[*index].name;
                write!(f, "value {value} at index {index} ({name}) outside [0, 1]")
            }
        }
    }
}

/// Check length and per-coordinate range; violations are returned, not thrown.
pub fn validate_patch(p: &Patch) -> Result<(), Vec<PatchViolation>> {
    let mut violations = Vec::new();
    if p.values.len() != PARAM_COUNT {
        violations.push(PatchViolation::WrongLength {
            expected: PARAM_COUNT,
            actual: p.values.len(),
        });
    }
    for (i, &v) in p.values.iter().enumerate().take(PARAM_COUNT) {
        if !(0.0..=1.0).contains(&v) || v.is_nan() {
            violations.push(PatchViolation::OutOfRange { index: i, value: v });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
