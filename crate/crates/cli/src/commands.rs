//! Implementations of the CLI subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;

use synthmatch::audio::{load_target, write_wav, WavFormat};
use synthmatch::optim::{run_method, MethodConfig, OptimizerResult, METHOD_NAMES};
use synthmatch::params::{descriptor_table, random_patch, validate_patch, Patch};
use synthmatch::patch::{
    denoise, extract_features, fit_gaussian, load_patch, pitch_shift, sample_patches,
    save_model, save_patch, scale_envelope, CovarianceMode, PatchMeta,
};
use synthmatch::synth::{render, AudioBuffer, RenderConfig};

use crate::args::*;
use crate::manifest::RunManifest;
use crate::AppError;

const TARGET_RATE: u32 = 44_100;
const TARGET_SAMPLES: usize = 88_200;

fn usage(msg: impl Into<String>) -> AppError {
    AppError::Usage(msg.into())
}

fn validate_method_name(name: &str) -> Result<(), AppError> {
    if METHOD_NAMES.contains(&name) {
        Ok(())
    } else {
        Err(usage(format!(
            "unknown method '{name}'; valid methods: {}",
            METHOD_NAMES.join(", ")
        )))
    }
}

/// Resolve the effective method config from flags.
fn resolve_config(
    method: &str,
    config_path: Option<&Path>,
    budget: Option<u64>,
    budget_scale: Option<f64>,
) -> Result<MethodConfig, AppError> {
    let mut cfg = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(AppError::Runtime)?;
            let cfg: MethodConfig = serde_json::from_str(&text)
                .map_err(|e| usage(format!("invalid method config: {e}")))?;
            if cfg.method_name() != method {
                return Err(usage(format!(
                    "config is for '{}' but --method is '{method}'",
                    cfg.method_name()
                )));
            }
            cfg
        }
        None => MethodConfig::default_for(method).map_err(|e| usage(e.to_string()))?,
    };
    if let Some(scale) = budget_scale {
        if !(scale > 0.0) {
            return Err(usage("--budget-scale must be positive"));
        }
        cfg = cfg.scaled(scale);
    }
    if let Some(b) = budget {
        cfg = cfg.with_eval_budget(b, synthmatch::params::PARAM_COUNT);
    }
    Ok(cfg)
}

pub fn cmd_fit(args: FitArgs) -> Result<(), AppError> {
    validate_method_name(&args.method)?;
    let cfg = resolve_config(
        &args.method,
        args.config.as_deref(),
        args.budget,
        args.budget_scale,
    )?;
    let started = Instant::now();
    let target = load_target(&args.input, TARGET_RATE, TARGET_SAMPLES, args.normalize)
        .with_context(|| format!("loading target {}", args.input.display()))
        .map_err(AppError::Runtime)?;

    let result = run_method(&args.method, &target, Some(&cfg), args.seed)
        .map_err(|e| AppError::Runtime(e.into()))?;

    let mut patch = result.best.clone();
    patch.label = args.label.clone();
    let meta = PatchMeta {
        target: args.input.file_name().map(|n| n.to_string_lossy().into_owned()),
        loss: Some(result.best_loss),
    };
    save_patch(&patch, &meta, &args.out).map_err(|e| AppError::Runtime(e.into()))?;

    if let Some(trace_path) = &args.trace {
        write_trace_csv(&result, trace_path).map_err(AppError::Runtime)?;
    }

    let mut manifest = RunManifest::new("fit", args.seed)
        .input(&args.input)
        .output(&args.out);
    if let Some(t) = &args.trace {
        manifest = manifest.output(t);
    }
    manifest.method_configs = vec![cfg];
    manifest.evaluations = Some(result.evaluations);
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.settings = serde_json::json!({
        "method": args.method,
        "normalize": args.normalize,
        "label": args.label,
    });
    manifest.write_next_to(&args.out).map_err(AppError::Runtime)?;

    eprintln!(
        "fit {}: loss {:.6} after {} evaluations ({:.1}s)",
        args.method,
        result.best_loss,
        result.evaluations,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn write_trace_csv(result: &OptimizerResult, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["iteration", "evaluations", "best_loss"])?;
    for p in &result.trace {
        writer.write_record([
            p.iteration.to_string(),
            p.evaluations.to_string(),
            p.best_loss.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn cmd_render(args: RenderArgs) -> Result<(), AppError> {
    let started = Instant::now();
    let (patch, _meta) = load_patch(&args.patch).map_err(|e| AppError::Runtime(e.into()))?;
    if let Err(violations) = validate_patch(&patch) {
        let report =
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  ");
        return Err(AppError::Runtime(anyhow!("invalid patch:\n  {report}")));
    }
    let cfg = RenderConfig { noise_seed: args.noise_seed, ..Default::default() };
    let buffer = render(&patch, &cfg).map_err(|e| AppError::Runtime(e.into()))?;
    let format = match args.format {
        WavEncoding::Pcm16 => WavFormat::Pcm16,
        WavEncoding::Pcm24 => WavFormat::Pcm24,
        WavEncoding::Float32 => WavFormat::Float32,
    };
    write_wav(&args.out, &buffer.samples, buffer.sample_rate, format)
        .map_err(|e| AppError::Runtime(e.into()))?;

    let mut manifest = RunManifest::new("render", args.noise_seed)
        .input(&args.patch)
        .output(&args.out);
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.settings = serde_json::json!({ "format": format!("{:?}", args.format) });
    manifest.write_next_to(&args.out).map_err(AppError::Runtime)?;
    Ok(())
}

pub fn cmd_edit(args: EditArgs) -> Result<(), AppError> {
    if args.pitch_shift.is_empty() && args.denoise == 0 && args.scale_env.is_empty() {
        return Err(usage(
            "no edit flags given; use --pitch-shift, --denoise, and/or --scale-env",
        ));
    }
    let started = Instant::now();
    let (mut patch, meta) = load_patch(&args.patch).map_err(|e| AppError::Runtime(e.into()))?;

    // Each operation touches a disjoint parameter set, so applying flag
    // groups in order is equivalent to any left-to-right interleaving;
    // repeats of one flag keep their command-line order.
    for &semitones in &args.pitch_shift {
        patch = pitch_shift(&patch, semitones);
    }
    if args.denoise > 0 {
        patch = denoise(&patch);
    }
    for spec in &args.scale_env {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(usage(format!(
                "--scale-env expects adsr:field:factor, got '{spec}'"
            )));
        }
        let factor: f64 = parts[2]
            .parse()
            .map_err(|_| usage(format!("invalid scale factor '{}'", parts[2])))?;
        patch = scale_envelope(&patch, parts[0], parts[1], factor)
            .map_err(|e| usage(e.to_string()))?;
    }

    save_patch(&patch, &meta, &args.out).map_err(|e| AppError::Runtime(e.into()))?;
    let mut manifest = RunManifest::new("edit", 0).input(&args.patch).output(&args.out);
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.settings = serde_json::json!({
        "pitch_shift": args.pitch_shift,
        "denoise": args.denoise > 0,
        "scale_env": args.scale_env,
    });
    manifest.write_next_to(&args.out).map_err(AppError::Runtime)?;
    Ok(())
}

struct BenchmarkRow {
    method: &'static str,
    target: String,
    loss: f64,
    evaluations: u64,
    seconds: f64,
}

pub fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), AppError> {
    let started = Instant::now();
    let methods: Vec<&'static str> = if args.methods == "all" {
        METHOD_NAMES.to_vec()
    } else {
        let mut out = Vec::new();
        for name in args.methods.split(',') {
            let name = name.trim();
            validate_method_name(name)?;
            out.push(METHOD_NAMES.iter().find(|&&m| m == name).copied().unwrap());
        }
        out
    };

    let targets: Vec<(String, AudioBuffer)> = match (&args.dataset, args.synthetic) {
        (Some(dir), None) => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
                .with_context(|| format!("reading dataset {}", dir.display()))
                .map_err(AppError::Runtime)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(AppError::Runtime(anyhow!(
                    "dataset {} contains no .wav files",
                    dir.display()
                )));
            }
            paths
                .into_iter()
                .map(|p| {
                    let name = p.file_name().unwrap().to_string_lossy().into_owned();
                    load_target(&p, TARGET_RATE, TARGET_SAMPLES, args.normalize)
                        .map(|buf| (name, buf))
                })
                .collect::<Result<_, _>>()
                .map_err(|e| AppError::Runtime(e.into()))?
        }
        (None, Some(n)) => {
            if n == 0 {
                return Err(AppError::Runtime(anyhow!("--synthetic needs at least 1 target")));
            }
            synthetic_targets(n, args.seed)
        }
        _ => {
            return Err(usage("provide exactly one of --dataset or --synthetic"));
        }
    };

    let configs: Vec<MethodConfig> = methods
        .iter()
        .map(|m| {
            let cfg = MethodConfig::default_for(m).expect("valid method");
            match args.budget {
                Some(b) => cfg.with_eval_budget(b, synthmatch::params::PARAM_COUNT),
                None => cfg,
            }
        })
        .collect();

    // Pairs run in parallel; each optimizer run is internally sequential
    // and seeded, so the set of results does not depend on scheduling.
    // Per-pair seeds are decoupled so methods do not share their initial
    // uniform draws on a given target.
    let pairs: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|m| (0..targets.len()).map(move |t| (m, t)))
        .collect();
    let rows: Vec<BenchmarkRow> = pairs
        .par_iter()
        .map(|&(mi, ti)| {
            let t0 = Instant::now();
            let run_seed = pair_seed(args.seed, methods[mi], ti);
            let result =
                run_method(methods[mi], &targets[ti].1, Some(&configs[mi]), run_seed)
                    .expect("validated method and config");
            BenchmarkRow {
                method: methods[mi],
                target: targets[ti].0.clone(),
                loss: result.best_loss,
                evaluations: result.evaluations,
                seconds: t0.elapsed().as_secs_f64(),
            }
        })
        .collect();

    let mut rows = rows;
    rows.sort_by(|a, b| {
        let ma = METHOD_NAMES.iter().position(|&m| m == a.method).unwrap();
        let mb = METHOD_NAMES.iter().position(|&m| m == b.method).unwrap();
        ma.cmp(&mb).then_with(|| a.target.cmp(&b.target))
    });

    let mut writer = csv::Writer::from_path(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(AppError::Runtime)?;
    writer
        .write_record(["method", "target", "loss", "evaluations", "seconds", "accuracy"])
        .map_err(|e| AppError::Runtime(e.into()))?;
    for row in &rows {
        writer
            .write_record([
                row.method,
                &row.target,
                &row.loss.to_string(),
                &row.evaluations.to_string(),
                &format!("{:.3}", row.seconds),
                "n/a",
            ])
            .map_err(|e| AppError::Runtime(e.into()))?;
    }
    // Per-method summary rows mirror a mean-loss comparison table.
    for &method in &methods {
        let subset: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.method == method).collect();
        let mean = subset.iter().map(|r| r.loss).sum::<f64>() / subset.len() as f64;
        let evals: u64 = subset.iter().map(|r| r.evaluations).sum();
        let secs: f64 = subset.iter().map(|r| r.seconds).sum();
        writer
            .write_record([
                method,
                "MEAN",
                &mean.to_string(),
                &evals.to_string(),
                &format!("{secs:.3}"),
                "n/a",
            ])
            .map_err(|e| AppError::Runtime(e.into()))?;
    }
    writer.flush().map_err(|e| AppError::Runtime(e.into()))?;
    eprintln!(
        "note: the accuracy column is n/a; classifier-based evaluation is not part of this \
         toolkit"
    );

    let mut manifest = RunManifest::new("benchmark", args.seed).output(&args.out);
    if let Some(d) = &args.dataset {
        manifest = manifest.input(d);
    }
    manifest.method_configs = configs;
    manifest.evaluations = Some(rows.iter().map(|r| r.evaluations).sum());
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.settings = serde_json::json!({
        "methods": methods,
        "synthetic": args.synthetic,
        "budget": args.budget,
        "normalize": args.normalize,
        "targets": targets.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
    });
    manifest.write_next_to(&args.out).map_err(AppError::Runtime)?;
    Ok(())
}

/// Stable per-(method, target) optimizer seed derived from the base seed.
pub fn pair_seed(base: u64, method: &str, target_index: usize) -> u64 {
    let method_index =
        METHOD_NAMES.iter().position(|&m| m == method).expect("valid method") as u64;
    base.wrapping_add(1000 * (method_index + 1)).wrapping_add(target_index as u64)
}

/// Deterministic synthetic targets rendered from seeded random patches.
pub fn synthetic_targets(n: usize, seed: u64) -> Vec<(String, AudioBuffer)> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let patch = random_patch(&mut rng);
            let cfg = RenderConfig { noise_seed: seed.wrapping_add(i as u64), ..Default::default() };
            (format!("synthetic_{i:03}"), render(&patch, &cfg).expect("random patch is valid"))
        })
        .collect()
}

fn load_patch_dir(dir: &Path) -> Result<Vec<Patch>, AppError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))
        .map_err(AppError::Runtime)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && !p.to_string_lossy().ends_with(".manifest.json")
                && p.file_name().is_some_and(|n| n != "model.json")
        })
        .collect();
    paths.sort();
    let mut patches = Vec::new();
    for p in paths {
        let (patch, _) = load_patch(&p)
            .map_err(|e| AppError::Runtime(anyhow!("{}: {e}", p.display())))?;
        patches.push(patch);
    }
    Ok(patches)
}

pub fn cmd_analyze(args: AnalyzeArgs) -> Result<(), AppError> {
    let started = Instant::now();
    let patches = load_patch_dir(&args.patches)?;
    if patches.is_empty() {
        return Err(AppError::Runtime(anyhow!(
            "no patch files found in {}",
            args.patches.display()
        )));
    }
    let rows = extract_features(&patches);
    let mut writer = csv::Writer::from_path(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))
        .map_err(AppError::Runtime)?;
    writer
        .write_record(["label", "midi_f0", "duration_sec", "norm_f0", "norm_duration"])
        .map_err(|e| AppError::Runtime(e.into()))?;
    for row in &rows {
        writer
            .write_record([
                row.label.as_str(),
                &row.midi_f0.to_string(),
                &row.duration_sec.to_string(),
                &row.norm_f0.to_string(),
                &row.norm_duration.to_string(),
            ])
            .map_err(|e| AppError::Runtime(e.into()))?;
    }
    writer.flush().map_err(|e| AppError::Runtime(e.into()))?;

    let mut manifest = RunManifest::new("analyze", 0).input(&args.patches).output(&args.out);
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.settings = serde_json::json!({ "patch_count": patches.len() });
    manifest.write_next_to(&args.out).map_err(AppError::Runtime)?;
    Ok(())
}

pub fn cmd_generate(args: GenerateArgs) -> Result<(), AppError> {
    let started = Instant::now();
    let patches = load_patch_dir(&args.patches)?;
    if patches.len() < 2 {
        return Err(AppError::Runtime(anyhow!(
            "generation needs at least 2 patches, found {}",
            patches.len()
        )));
    }
    let dims: Option<Vec<String>> = match args.dims {
        DimsChoice::All => None,
        DimsChoice::F0dur => {
            Some(vec!["keyboard.midi_f0".to_string(), "keyboard.duration".to_string()])
        }
    };
    let mode = if args.full_covariance { CovarianceMode::Full } else { CovarianceMode::Diagonal };
    let (model, warnings) = fit_gaussian(&patches, dims.as_deref(), mode)
        .map_err(|e| AppError::Runtime(e.into()))?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .map_err(AppError::Runtime)?;
    let model_path = args.out_dir.join("model.json");
    save_model(&model, &model_path).map_err(|e| AppError::Runtime(e.into()))?;

    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let samples = sample_patches(&model, &patches, args.n, &mut rng)
        .map_err(|e| AppError::Runtime(e.into()))?;

    let mut outputs = vec![model_path.display().to_string()];
    for (i, sample) in samples.iter().enumerate() {
        let stem = format!("sample_{i:03}");
        let patch_path = args.out_dir.join(format!("{stem}.json"));
        save_patch(sample, &PatchMeta::default(), &patch_path)
            .map_err(|e| AppError::Runtime(e.into()))?;
        let cfg = RenderConfig { noise_seed: args.seed.wrapping_add(i as u64), ..Default::default() };
        let buffer = render(sample, &cfg).map_err(|e| AppError::Runtime(e.into()))?;
        let wav_path = args.out_dir.join(format!("{stem}.wav"));
        write_wav(&wav_path, &buffer.samples, buffer.sample_rate, WavFormat::Pcm16)
            .map_err(|e| AppError::Runtime(e.into()))?;
        outputs.push(patch_path.display().to_string());
        outputs.push(wav_path.display().to_string());
    }

    let mut manifest = RunManifest::new("generate", args.seed).input(&args.patches);
    manifest.outputs = outputs;
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.settings = serde_json::json!({
        "n": args.n,
        "dims": format!("{:?}", args.dims),
        "full_covariance": args.full_covariance,
        "fit_count": model.fit_count,
        "warnings": warnings,
    });
    manifest.write_next_to(&args.out_dir.join("generate")).map_err(AppError::Runtime)?;
    eprintln!("generated {} patches and WAVs in {}", args.n, args.out_dir.display());
    Ok(())
}

pub fn cmd_params(args: ParamsArgs) -> Result<(), AppError> {
    let json = serde_json::to_string_pretty(descriptor_table())
        .map_err(|e| AppError::Runtime(e.into()))?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, json + "\n")
                .with_context(|| format!("writing {}", path.display()))
                .map_err(AppError::Runtime)?;
        }
        None => println!("{json}"),
    }
    Ok(())
}
