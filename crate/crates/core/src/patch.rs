//! Patch persistence, edit operations, per-class feature extraction, and
//! Gaussian generative modeling over fitted patches.
//!
//! Patch files are versioned JSON keyed by descriptor name, storing both
//! normalized coordinates and mirrored physical-unit values. Edits work in
//! physical units and renormalize through the descriptor table, so every
//! edit preserves patch validity by construction.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{
    denormalize, descriptor_index, descriptor_table, normalize, validate_patch, Patch,
    ADSR_FIELDS, ADSR_NAMES, IDX_DURATION, IDX_MIDI_F0, PARAM_COUNT,
};

pub const PATCH_SCHEMA_VERSION: u32 = 1;

/// Serialized form of a patch plus provenance metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchFile {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Name of the target file the patch was fitted to, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Final reconstruction loss against that target, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    /// Normalized values keyed by descriptor name.
    pub parameters: BTreeMap<String, f64>,
    /// Mirrored physical-unit values, for human inspection.
    pub unnormalized: BTreeMap<String, UnnormalizedValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnnormalizedValue {
    pub value: f64,
    pub unit: String,
}

/// Extra metadata attached when saving a patch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatchMeta {
    pub target: Option<String>,
    pub loss: Option<f64>,
}

#[derive(Debug, Error)]
pub enum PatchIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid patch JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema version {0}, expected {PATCH_SCHEMA_VERSION}")]
    SchemaVersion(u32),
    #[error("missing parameter '{0}'")]
    MissingParameter(String),
    #[error("unknown parameter names: {}", .0.join(", "))]
    UnknownParameters(Vec<String>),
    #[error("parameter '{name}' normalized value {value} outside [0, 1]")]
    OutOfRange { name: String, value: f64 },
    #[error(
        "parameter '{name}': unnormalized {stored} disagrees with normalized {normalized} \
         (expected {expected})"
    )]
    Inconsistent { name: String, stored: f64, normalized: f64, expected: f64 },
    #[error("invalid patch: {0}")]
    InvalidPatch(String),
}

/// Build the serialized form of a valid patch.
pub fn patch_to_file(p: &Patch, meta: &PatchMeta) -> Result<PatchFile, PatchIoError> {
    validate_patch(p).map_err(|v| {
        PatchIoError::InvalidPatch(v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; "))
    })?;
    let mut parameters = BTreeMap::new();
    let mut unnormalized = BTreeMap::new();
    for (d, &u) in descriptor_table().iter().zip(&p.values) {
        parameters.insert(d.name.clone(), u);
        unnormalized.insert(
            d.name.clone(),
            UnnormalizedValue { value: denormalize(u, d).expect("validated"), unit: d.unit.clone() },
        );
    }
    Ok(PatchFile {
        schema_version: PATCH_SCHEMA_VERSION,
        label: p.label.clone(),
        source: p.source.clone(),
        target: meta.target.clone(),
        loss: meta.loss,
        parameters,
        unnormalized,
    })
}

/// Reconstruct a patch from its serialized form, verifying completeness and
/// the normalized/unnormalized mirror.
pub fn patch_from_file(file: &PatchFile) -> Result<Patch, PatchIoError> {
    if file.schema_version != PATCH_SCHEMA_VERSION {
        return Err(PatchIoError::SchemaVersion(file.schema_version));
    }
    let unknown: Vec<String> = file
        .parameters
        .keys()
        .filter(|name| descriptor_index(name).is_none())
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(PatchIoError::UnknownParameters(unknown));
    }
    let mut values = vec![0.0; PARAM_COUNT];
    for d in descriptor_table() {
        let &u = file
            .parameters
            .get(&d.name)
            .ok_or_else(|| PatchIoError::MissingParameter(d.name.clone()))?;
        if !(0.0..=1.0).contains(&u) {
            return Err(PatchIoError::OutOfRange { name: d.name.clone(), value: u });
        }
        if let Some(mirror) = file.unnormalized.get(&d.name) {
            let expected = denormalize(u, d).expect("validated");
            // Mirror tolerance is relative to the parameter's span.
            if (mirror.value - expected).abs() > 1e-9 * (d.max - d.min).max(1.0) {
                return Err(PatchIoError::Inconsistent {
                    name: d.name.clone(),
                    stored: mirror.value,
                    normalized: u,
                    expected,
                });
            }
        }
        values[descriptor_index(&d.name).expect("known name")] = u;
    }
    Ok(Patch { values, label: file.label.clone(), source: file.source.clone() })
}

/// Save a patch as pretty-printed JSON. Round-trips are lossless because
/// serde_json prints the shortest decimal that recovers each f64 exactly.
pub fn save_patch(p: &Patch, meta: &PatchMeta, path: impl AsRef<Path>) -> Result<(), PatchIoError> {
    let file = patch_to_file(p, meta)?;
    let json = serde_json::to_string_pretty(&file)?;
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_patch(path: impl AsRef<Path>) -> Result<(Patch, PatchMeta), PatchIoError> {
    let text = fs::read_to_string(path)?;
    let file: PatchFile = serde_json::from_str(&text)?;
    let patch = patch_from_file(&file)?;
    Ok((patch, PatchMeta { target: file.target, loss: file.loss }))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EditError {
    #[error("unknown ADSR '{0}'; valid: {valid}", valid = ADSR_NAMES.join(", "))]
    UnknownAdsr(String),
    #[error("unknown envelope field '{0}'; valid: attack, decay, sustain, release")]
    UnknownField(String),
    #[error("scale factor must be >= 0, got {0}")]
    NegativeFactor(f64),
}

/// Shift the fundamental by `semitones` midi steps, clamped to `[0, 127]`.
/// All other coordinates are untouched.
pub fn pitch_shift(p: &Patch, semitones: f64) -> Patch {
    let d = &descriptor_table()[IDX_MIDI_F0];
    let midi = denormalize(p.values[IDX_MIDI_F0], d).expect("valid patch");
    let shifted = (midi + semitones).clamp(d.min, d.max);
    let mut out = p.clone();
    out.values[IDX_MIDI_F0] = normalize(shifted, d).expect("clamped");
    out
}

/// Silence the noise branch by zeroing `mixer.noise_level`. Idempotent.
pub fn denoise(p: &Patch) -> Patch {
    let idx = descriptor_index("mixer.noise_level").expect("table anchor");
    let mut out = p.clone();
    out.values[idx] = 0.0;
    out
}

/// Multiply one envelope field by `factor` in physical units, clamped to
/// the descriptor range.
pub fn scale_envelope(
    p: &Patch,
    adsr_name: &str,
    field: &str,
    factor: f64,
) -> Result<Patch, EditError> {
    if !ADSR_NAMES.contains(&adsr_name) {
        return Err(EditError::UnknownAdsr(adsr_name.to_string()));
    }
    if !ADSR_FIELDS[..4].contains(&field) {
        return Err(EditError::UnknownField(field.to_string()));
    }
    if factor < 0.0 {
        return Err(EditError::NegativeFactor(factor));
    }
    let idx = descriptor_index(&format!("{adsr_name}.{field}")).expect("valid adsr field");
    let d = &descriptor_table()[idx];
    let value = denormalize(p.values[idx], d).expect("valid patch");
    let scaled = (value * factor).clamp(d.min, d.max);
    let mut out = p.clone();
    out.values[idx] = normalize(scaled, d).expect("clamped");
    Ok(out)
}

/// One row of the per-class analysis table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureRow {
    pub label: String,
    pub midi_f0: f64,
    pub duration_sec: f64,
    pub norm_f0: f64,
    pub norm_duration: f64,
}

/// Fundamental frequency and note duration per patch, in physical units and
/// normalized coordinates.
pub fn extract_features(patches: &[Patch]) -> Vec<FeatureRow> {
    let table = descriptor_table();
    patches
        .iter()
        .map(|p| FeatureRow {
            label: p.label.clone().unwrap_or_default(),
            midi_f0: denormalize(p.values[IDX_MIDI_F0], &table[IDX_MIDI_F0]).expect("valid"),
            duration_sec: denormalize(p.values[IDX_DURATION], &table[IDX_DURATION])
                .expect("valid"),
            norm_f0: p.values[IDX_MIDI_F0],
            norm_duration: p.values[IDX_DURATION],
        })
        .collect()
}

/// Covariance structure of a fitted Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    Diagonal,
    Full,
}

/// Gaussian over a subset of parameters, fitted in unnormalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPatchModel {
    /// Descriptor names of the modeled dimensions, in table order.
    pub dims: Vec<String>,
    /// Mean per dimension, in physical units.
    pub mean: Vec<f64>,
    /// Diagonal variances, or the full row-major covariance matrix.
    pub covariance: Vec<f64>,
    pub mode: CovarianceMode,
    pub fit_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("need at least 2 patches to estimate a variance, got {0}")]
    TooFewPatches(usize),
    #[error("unknown dimension name '{0}'")]
    UnknownDim(String),
    #[error("model file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("base patches required when the model covers a parameter subset")]
    MissingBase,
}

const VARIANCE_FLOOR: f64 = 1e-8;

/// Fit a Gaussian to the unnormalized values of `patches` over `dims`
/// (`None` means all 78 parameters). Returns the model and any repair
/// warnings.
pub fn fit_gaussian(
    patches: &[Patch],
    dims: Option<&[String]>,
    mode: CovarianceMode,
) -> Result<(GaussianPatchModel, Vec<String>), ModelError> {
    if patches.len() < 2 {
        return Err(ModelError::TooFewPatches(patches.len()));
    }
    let table = descriptor_table();
    let dim_indices: Vec<usize> = match dims {
        None => (0..PARAM_COUNT).collect(),
        Some(names) => {
            let mut idx = Vec::with_capacity(names.len());
            for name in names {
                idx.push(
                    descriptor_index(name).ok_or_else(|| ModelError::UnknownDim(name.clone()))?,
                );
            }
            idx.sort_unstable();
            idx.dedup();
            idx
        }
    };
    let k = dim_indices.len();
    let n = patches.len();

    // Unnormalized data matrix, n x k.
    let data: Vec<Vec<f64>> = patches
        .iter()
        .map(|p| {
            dim_indices
                .iter()
                .map(|&i| denormalize(p.values[i], &table[i]).expect("valid patch"))
                .collect()
        })
        .collect();

    let mean: Vec<f64> =
        (0..k).map(|j| data.iter().map(|row| row[j]).sum::<f64>() / n as f64).collect();

    let mut warnings = Vec::new();
    let covariance = match mode {
        CovarianceMode::Diagonal => (0..k)
            .map(|j| {
                let var = data.iter().map(|row| (row[j] - mean[j]).powi(2)).sum::<f64>()
                    / (n - 1) as f64;
                var.max(VARIANCE_FLOOR)
            })
            .collect(),
        CovarianceMode::Full => {
            let mut cov = DMatrix::<f64>::zeros(k, k);
            for row in &data {
                let centered = DVector::from_iterator(k, row.iter().zip(&mean).map(|(v, m)| v - m));
                cov += &centered * centered.transpose();
            }
            cov /= (n - 1) as f64;
            // PSD repair: clip eigenvalues at the variance floor.
            let eigen = nalgebra::SymmetricEigen::new(cov);
            let clipped = eigen.eigenvalues.iter().filter(|&&v| v < VARIANCE_FLOOR).count();
            if clipped > 0 {
                warnings.push(format!(
                    "covariance repaired: {clipped} eigenvalue(s) clipped to {VARIANCE_FLOOR}"
                ));
            }
            let floored = eigen.eigenvalues.map(|v| v.max(VARIANCE_FLOOR));
            let rebuilt = &eigen.eigenvectors
                * DMatrix::from_diagonal(&floored)
                * eigen.eigenvectors.transpose();
            rebuilt.transpose().iter().cloned().collect::<Vec<f64>>()
        }
    };

    let label = patches.iter().find_map(|p| p.label.clone());
    Ok((
        GaussianPatchModel {
            dims: dim_indices.iter().map(|&i| table[i].name.clone()).collect(),
            mean,
            covariance,
            mode,
            fit_count: n,
            label,
        },
        warnings,
    ))
}

/// Factorized sampler for a fitted model.
pub struct GaussianSampler<'m> {
    model: &'m GaussianPatchModel,
    /// Square-root factor of the covariance (diagonal stddevs or a full
    /// eigenvalue square root).
    factor: DMatrix<f64>,
}

impl<'m> GaussianSampler<'m> {
    pub fn new(model: &'m GaussianPatchModel) -> Self {
        let k = model.dims.len();
        let factor = match model.mode {
            CovarianceMode::Diagonal => {
                DMatrix::from_diagonal(&DVector::from_iterator(
                    k,
                    model.covariance.iter().map(|v| v.max(VARIANCE_FLOOR).sqrt()),
                ))
            }
            CovarianceMode::Full => {
                let cov = DMatrix::from_row_slice(k, k, &model.covariance);
                let eigen = nalgebra::SymmetricEigen::new(cov);
                let scales = eigen.eigenvalues.map(|v| v.max(0.0).sqrt());
                &eigen.eigenvectors * DMatrix::from_diagonal(&scales)
            }
        };
        Self { model, factor }
    }

    /// One raw draw in physical units, before any clamping.
    pub fn draw_unclamped<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = self.model.dims.len();
        let z = DVector::from_iterator(
            k,
            (0..k).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)),
        );
        let offset = &self.factor * z;
        self.model.mean.iter().zip(offset.iter()).map(|(m, o)| m + o).collect()
    }
}

/// Draw `n` patches from the model. Sampled dimensions are clamped to their
/// descriptor ranges and renormalized; when the model covers a subset, the
/// remaining coordinates come from a uniformly chosen base patch per sample.
pub fn sample_patches<R: Rng + ?Sized>(
    model: &GaussianPatchModel,
    base: &[Patch],
    n: usize,
    rng: &mut R,
) -> Result<Vec<Patch>, ModelError> {
    let table = descriptor_table();
    let dim_indices: Vec<usize> = model
        .dims
        .iter()
        .map(|name| descriptor_index(name).ok_or_else(|| ModelError::UnknownDim(name.clone())))
        .collect::<Result<_, _>>()?;
    let subset = dim_indices.len() < PARAM_COUNT;
    if subset && base.is_empty() {
        return Err(ModelError::MissingBase);
    }
    let sampler = GaussianSampler::new(model);

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut values = if subset {
            base[rng.random_range(0..base.len())].values.clone()
        } else {
            vec![0.0; PARAM_COUNT]
        };
        let draw = sampler.draw_unclamped(rng);
        for (&idx, &raw) in dim_indices.iter().zip(&draw) {
            let d = &table[idx];
            let clamped = raw.clamp(d.min, d.max);
            values[idx] = normalize(clamped, d).expect("clamped");
        }
        out.push(Patch {
            values,
            label: model.label.clone(),
            source: Some("sampled".to_string()),
        });
    }
    Ok(out)
}

pub fn save_model(model: &GaussianPatchModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let json = serde_json::to_string_pretty(model)?;
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GaussianPatchModel, ModelError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
