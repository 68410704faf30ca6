use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use mep_core::attacks::{attack_wave, AttackConfig, AttackMethod, MepMode};
use mep_core::corpus::{generate, CorpusSpec, Utterance};
use mep_core::evaluation::evaluate as run_evaluation;
use mep_core::matrix_io::{write_matrix, write_matrix_csv};
use mep_core::metrics::snr;
use mep_core::selfcheck::{self, FaultInjection};
use mep_core::sem_mask::{build_mask, MaskConfig, DEFAULT_ETA_TH_DB};
use mep_core::spectral::{power, stft, StftConfig};
use mep_core::{read_wav, write_wav, SampleFormat, SpeakerModel, TargetEmbedding};
use serde_json::{json, Value};

use crate::config::ConfigFile;
use crate::{usage, AttackArgs, EvaluateArgs, Format, HyperArgs, MaskArgs, MaskOpts, OutputArgs, SelfcheckArgs};

/// JSON has no infinities; non-finite values become "inf", "-inf" or "nan".
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn out_dir(args: &OutputArgs, file: &ConfigFile) -> Result<PathBuf> {
    let dir: PathBuf = file
        .pick(args.out_dir.clone(), "out_dir", PathBuf::from("."))
        .map_err(usage)?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn format(flag: Option<Format>, file: &ConfigFile) -> Result<Format> {
    file.pick(flag, "format", Format::Json).map_err(usage)
}

fn mask_config(opts: &MaskOpts, file: &ConfigFile) -> Result<MaskConfig> {
    let eta = file.pick(opts.eta_th, "eta_th", DEFAULT_ETA_TH_DB).map_err(usage)?;
    let cfg = MaskConfig::with_eta(eta);
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn attack_config(h: &HyperArgs, file: &ConfigFile, method: AttackMethod) -> Result<AttackConfig> {
    let d = AttackConfig::default();
    let cfg = AttackConfig {
        method,
        epsilon: file.pick(h.epsilon, "epsilon", d.epsilon).map_err(usage)?,
        iterations: file.pick(h.iterations, "iterations", d.iterations).map_err(usage)?,
        alpha: file.pick_opt(h.alpha, "alpha").map_err(usage)?,
        mep_mode: file.pick(h.mep_mode, "mep_mode", MepMode::GradientMask).map_err(usage)?,
        rng_seed: file.pick(h.seed, "seed", 0).map_err(usage)?,
        ..d
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn model(h: &HyperArgs, file: &ConfigFile) -> Result<(u64, SpeakerModel)> {
    let seed = file.pick(h.encoder_seed, "encoder_seed", 0).map_err(usage)?;
    Ok((seed, SpeakerModel::new(seed)))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn mask(args: MaskArgs, file: &ConfigFile) -> Result<ExitCode> {
    let cfg = mask_config(&args.mask, file)?;
    let fmt = format(args.output.format, file)?;
    let dir = out_dir(&args.output, file)?;
    let wave = read_wav(&args.input)?;
    let p = power(&stft(&wave, &StftConfig::default())?);
    let mask = build_mask(&p, &cfg)?;
    log::debug!("mask over {:?} bins", mask.shape());

    let keep = mask.as_f64();
    write_matrix(keep.view(), dir.join("mask.mepm"))?;
    if fmt == Format::Csv {
        write_matrix_csv(keep.view(), dir.join("mask.csv"))?;
    }
    let (frames, bins) = mask.shape();
    let summary = json!({
        "frames": frames,
        "bins": bins,
        "eta_th": cfg.eta_th,
        "x_peak": num(mask.x_peak),
        "x_th": num(mask.x_th),
        "kept_bins": mask.kept_count(),
        "masked_fraction": mask.masked_fraction(),
    });
    write_text(&dir.join("mask.json"), &serde_json::to_string_pretty(&summary)?)?;
    println!("x_peak = {:.6e}", mask.x_peak);
    println!("x_th = {:.6e}", mask.x_th);
    println!("masked_fraction = {:.6}", mask.masked_fraction());
    Ok(ExitCode::SUCCESS)
}

pub fn attack(args: AttackArgs, file: &ConfigFile) -> Result<ExitCode> {
    let method = file.pick(args.method, "method", AttackMethod::IMep).map_err(usage)?;
    let cfg = attack_config(&args.hyper, file, method)?;
    let mask_cfg = mask_config(&args.hyper.mask, file)?;
    let fmt = format(args.output.format, file)?;
    let (encoder_seed, model) = model(&args.hyper, file)?;
    let dir = out_dir(&args.output, file)?;
    let stft_cfg = StftConfig::default();

    let wave = read_wav(&args.input)?;
    let (target, target_desc) = match &args.target_wav {
        Some(path) => {
            let t = read_wav(path)?;
            let e = model.embed(&power(&stft(&t, &stft_cfg)?))?;
            (TargetEmbedding::normalized(e)?, format!("wav:{}", path.display()))
        }
        None => (TargetEmbedding::random(cfg.rng_seed), format!("random:{}", cfg.rng_seed)),
    };

    log::info!("{} on {} ({} samples), target {target_desc}", cfg.method, args.input.display(), wave.len());
    let result = attack_wave(&wave, &stft_cfg, &model, &target, &cfg, &mask_cfg)?;
    let p = &result.perturbation;
    let sample_format = if args.float32 { SampleFormat::Float32 } else { SampleFormat::Pcm16 };
    write_wav(&result.adversarial, dir.join("adversarial.wav"), sample_format)?;
    write_matrix(p.delta.view(), dir.join("delta.mepm"))?;
    if fmt == Format::Csv {
        write_matrix_csv(p.delta.view(), dir.join("delta.csv"))?;
    }

    let snr_db = snr(&wave, &result.adversarial)?;
    let max_abs_delta = p.max_abs_delta();
    let budget_ok = max_abs_delta <= cfg.epsilon;
    let summary = json!({
        "method": cfg.method.name(),
        "epsilon": cfg.epsilon,
        "iterations": cfg.iterations,
        "alpha": cfg.alpha(),
        "eta_th": mask_cfg.eta_th,
        "mep_mode": cfg.mep_mode.name(),
        "seed": cfg.rng_seed,
        "encoder_seed": encoder_seed,
        "target": target_desc,
        "loss_trace": p.loss_trace.iter().map(|&l| num(l)).collect::<Vec<_>>(),
        "final_loss": num(p.final_loss),
        "snr_db": num(snr_db),
        "max_abs_delta": max_abs_delta,
        "budget_ok": budget_ok,
        "masked_fraction": p.mask.as_ref().map(|m| m.masked_fraction()),
    });
    write_text(&dir.join("attack.json"), &serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{}: loss {:.6} -> {:.6}, SNR {snr_db:.2} dB, max|delta| {max_abs_delta:.3e}",
        cfg.method.name(),
        p.loss_trace.first().copied().unwrap_or(f64::NAN),
        p.final_loss
    );
    if !budget_ok {
        eprintln!("error: perturbation exceeds the budget ({max_abs_delta:e} > {:e})", cfg.epsilon);
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_methods(list: &[String]) -> Result<Vec<AttackMethod>> {
    let mut out = Vec::new();
    for name in list.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        if name.eq_ignore_ascii_case("baseline") {
            continue;
        }
        let m: AttackMethod = name.parse().map_err(usage)?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

/// `speaker path` per line; relative paths resolve against the manifest's directory.
fn load_manifest(path: &Path) -> Result<Vec<Utterance>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut labels: Vec<String> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (label, file) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| usage(anyhow!("{}:{}: expected `speaker path`", path.display(), n + 1)))?;
        let speaker = match labels.iter().position(|l| l == label) {
            Some(i) => i,
            None => {
                labels.push(label.to_string());
                counts.push(0);
                labels.len() - 1
            }
        };
        let wav = base.join(file.trim());
        out.push(Utterance {
            speaker,
            index: counts[speaker],
            wave: read_wav(&wav)?,
        });
        counts[speaker] += 1;
    }
    if out.is_empty() {
        bail!("{} lists no utterances", path.display());
    }
    Ok(out)
}

pub fn evaluate(args: EvaluateArgs, file: &ConfigFile) -> Result<ExitCode> {
    let methods = match args.methods {
        Some(list) => parse_methods(&list)?,
        None => match file.get::<String>("methods").map_err(usage)? {
            Some(s) => parse_methods(&s.split(',').map(str::to_string).collect::<Vec<_>>())?,
            None => AttackMethod::ALL.to_vec(),
        },
    };
    let base = attack_config(&args.hyper, file, AttackMethod::IMep)?;
    let mask_cfg = mask_config(&args.hyper.mask, file)?;
    let fmt = format(args.output.format, file)?;
    let (_, model) = model(&args.hyper, file)?;

    let (utterances, corpus) = match &args.manifest {
        Some(path) => (load_manifest(path)?, None),
        None => {
            let d = CorpusSpec::default();
            let spec = CorpusSpec {
                speakers: file.pick(args.speakers, "speakers", d.speakers).map_err(usage)?,
                utterances_per_speaker: file.pick(args.utterances, "utterances", d.utterances_per_speaker).map_err(usage)?,
                duration_secs: file.pick(args.duration, "duration", d.duration_secs).map_err(usage)?,
                seed: file.pick(args.corpus_seed, "corpus_seed", d.seed).map_err(usage)?,
                level: file.pick(args.level, "level", d.level).map_err(usage)?,
            };
            spec.validate().map_err(usage)?;
            (generate(&spec)?, Some(spec))
        }
    };
    let dir = out_dir(&args.output, file)?;
    log::info!("{} utterances, methods {:?}", utterances.len(), methods);

    let report = run_evaluation(&utterances, corpus.as_ref(), &model, &methods, &base, &mask_cfg)?;
    let json = report.to_json();
    let csv = report.to_csv();
    write_text(&dir.join("report.json"), &json)?;
    write_text(&dir.join("report.csv"), &csv)?;
    match fmt {
        Format::Json => println!("{json}"),
        Format::Csv => print!("{csv}"),
    }
    let over: Vec<&str> = report
        .reports
        .iter()
        .filter(|r| !r.budget_ok)
        .map(|r| r.method.as_str())
        .collect();
    if !over.is_empty() {
        eprintln!("error: budget exceeded by {}", over.join(", "));
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn selfcheck(args: SelfcheckArgs, file: &ConfigFile) -> Result<ExitCode> {
    let mut fault = FaultInjection::default();
    match args.inject_fault.as_deref() {
        None => {}
        Some("mel-backward") => fault.corrupt_mel_backward = true,
        Some(other) => return Err(usage(anyhow!("unknown fault `{other}`"))),
    }
    let report = selfcheck::run(fault)?;
    match file.pick_opt(args.format, "format").map_err(usage)? {
        Some(Format::Json) => println!("{}", serde_json::to_string_pretty(&report)?),
        Some(Format::Csv) => {
            println!("suite,passed,total,ok");
            for s in &report.suites {
                println!("{},{},{},{}", s.name, s.passed, s.total, s.ok());
            }
        }
        None => {
            for s in &report.suites {
                let verdict = if s.ok() { "pass" } else { "FAIL" };
                println!("{:<16} {:>3}/{:<3} {verdict}  {}", s.name, s.passed, s.total, s.detail);
            }
        }
    }
    if report.ok() {
        Ok(ExitCode::SUCCESS)
    } else {
        let names: Vec<&str> = report.failed().map(|s| s.name).collect();
        eprintln!("selfcheck failed: {}", names.join(", "));
        Ok(ExitCode::from(1))
    }
}
