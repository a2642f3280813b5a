use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::Serialize;

use kw_core::audio::{
    load_wav, save_wav, synth_corpus_detailed, write_manifest, AudioClip, ManifestEntry, CANONICAL_SAMPLE_RATE,
};
use kw_core::detector::{run_session, write_trace_csv, Detector, DetectorConfig, EnvModel};
use kw_core::features::{FeatureExtractor, InputSide, SpectrogramConfig};
use kw_core::nn::{evaluate, load_params, save_params, train, Dataset, TrainConfig};
use kw_core::pam::FaultConfig;
use kw_gateway::{run_pipeline, BackoffConfig, HttpClient, PipelineConfig, Spool, UploadConfig, Uploader};

use crate::args::{EvalArgs, InferArgs, ReplayArgs, ServeArgs, SimulateArgs, SynthArgs, TrainArgs};
use crate::error::{io_error, CliError};
use crate::run_manifest::{manifest_path, RunManifest};

/// Window length used to cut training images from labeled clips.
pub const TRAIN_WINDOW_MS: u64 = 1000;

fn now_ms() -> DateTime<Utc> {
    let now = Utc::now();
    DateTime::from_timestamp_millis(now.timestamp_millis()).unwrap_or(now)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    let mut out = io::stdout().lock();
    writeln!(out, "{text}").and_then(|_| out.flush()).map_err(|e| CliError::Internal(format!("stdout: {e}")))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| io_error(p, e)),
        _ => Ok(()),
    }
}

/// Loads every clip of a manifest at the canonical rate, labeled.
pub fn load_labeled(manifest: &Path) -> Result<Vec<AudioClip>, CliError> {
    let entries =
        kw_core::audio::read_manifest(manifest).map_err(|e| CliError::Data(format!("{}: {e}", manifest.display())))?;
    if entries.is_empty() {
        return Err(CliError::Data(format!("{}: manifest lists no clips", manifest.display())));
    }
    entries
        .iter()
        .map(|e| {
            let clip = load_wav(&e.path).map_err(|err| CliError::Data(format!("{}: {err}", e.path.display())))?;
            let clip =
                if clip.sample_rate() == CANONICAL_SAMPLE_RATE { clip } else { clip.resample(CANONICAL_SAMPLE_RATE)? };
            Ok(clip.with_label(e.label))
        })
        .collect()
}

pub fn dataset(manifest: &Path, side: usize) -> Result<Dataset, CliError> {
    let clips = load_labeled(manifest)?;
    let side = InputSide::try_from(side).map_err(|e| CliError::Usage(e.to_string()))?;
    let extractor = FeatureExtractor::new(SpectrogramConfig::default(), CANONICAL_SAMPLE_RATE, side)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(Dataset::from_clips(&clips, &extractor, TRAIN_WINDOW_MS)?)
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let started = Utc::now();
    if args.per_class == 0 {
        return Err(CliError::Usage("--per-class must be at least 1".into()));
    }
    if args.sample_rate == 0 {
        return Err(CliError::Usage("--sample-rate must be positive".into()));
    }
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let mut entries = Vec::new();
    for (i, (clip, kind)) in synth_corpus_detailed(args.seed, args.per_class, args.sample_rate).into_iter().enumerate()
    {
        let name = format!("{i:04}_{}.wav", format!("{kind:?}").to_lowercase());
        save_wav(&clip, args.out.join(&name))?;
        entries.push(ManifestEntry { path: PathBuf::from(name), label: kind.class() });
    }
    let manifest = args.out.join("manifest.csv");
    let file = fs::File::create(&manifest).map_err(|e| io_error(&manifest, e))?;
    write_manifest(file, &entries)?;
    let mut run = RunManifest::new("synth", args, Some(args.seed), started);
    run.output(&manifest);
    run.write(&args.out.join("run.json"))?;
    log::info!("wrote {} clips to {}", entries.len(), args.out.display());
    print_json(&serde_json::json!({ "clips": entries.len(), "manifest": manifest }))
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    train_size: usize,
    val_size: usize,
    epochs: usize,
    initial_train_loss: f64,
    final_train_loss: Option<f64>,
    final_val_accuracy: Option<f64>,
    seconds: f64,
    model: PathBuf,
    history: PathBuf,
}

pub fn train_cmd(args: &TrainArgs) -> Result<(), CliError> {
    let started = Utc::now();
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        base_lr: args.lr.unwrap_or(defaults.base_lr),
        batch_size: args.batch_size.unwrap_or(defaults.batch_size),
        epochs: args.epochs,
        dropout_rate: args.dropout.unwrap_or(defaults.dropout_rate),
        validation_fraction: args.validation_fraction.unwrap_or(defaults.validation_fraction),
        optimizer: args.optimizer.into(),
        seed: args.seed,
        ..defaults
    };
    cfg.validate()?;
    let data = dataset(&args.manifest, args.side)?;
    log::info!("training on {} images ({}x{})", data.len(), args.side, args.side);
    let clock = Instant::now();
    let outcome = train(&data, &cfg)?;
    let seconds = clock.elapsed().as_secs_f64();

    ensure_parent(&args.out)?;
    save_params(&outcome.params, &args.out)?;
    let history = args.history.clone().unwrap_or_else(|| {
        let mut s = args.out.as_os_str().to_os_string();
        s.push(".history.csv");
        PathBuf::from(s)
    });
    fs::write(&history, outcome.history.to_csv()).map_err(|e| io_error(&history, e))?;

    let mut run =
        RunManifest::new("train", &serde_json::json!({ "args": args, "train": cfg }), Some(args.seed), started);
    run.output(&args.out).output(&history);
    run.write(&manifest_path(&args.out))?;

    let h = &outcome.history;
    print_json(&TrainSummary {
        train_size: h.train_size,
        val_size: h.val_size,
        epochs: h.epochs.len(),
        initial_train_loss: h.initial_train_loss,
        final_train_loss: h.epochs.last().map(|e| e.train_loss),
        final_val_accuracy: h.final_val_accuracy(),
        seconds,
        model: args.out.clone(),
        history,
    })
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let started = Utc::now();
    let params = load_params(&args.model)?;
    let data = dataset(&args.manifest, params.input_side())?;
    let report = evaluate(&params, &data)?;
    log::info!("{}", report.render());
    match &args.report {
        Some(path) => {
            ensure_parent(path)?;
            write_json(path, &report)?;
            let mut run = RunManifest::new("eval", args, None, started);
            run.output(path);
            run.write(&manifest_path(path))?;
        }
        None => print_json(&report)?,
    }
    Ok(())
}

pub fn infer(args: &InferArgs) -> Result<(), CliError> {
    let started = Utc::now();
    let params = load_params(&args.model)?;
    let clip = load_wav(&args.wav)?;
    let mut detector = Detector::new(params, DetectorConfig::default(), None)?;
    let report = run_session(&clip, &mut detector)?;
    let summary = serde_json::json!({
        "windows": report.trace.len(),
        "episodes": report.episodes,
        "snore_ms": report.snore_ms(),
        "alert_activations": report.alert_activations(),
        "duration_ms": report.duration_ms,
    });
    match &args.out {
        Some(path) => {
            ensure_parent(path)?;
            let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
            write_trace_csv(&report.trace, io::BufWriter::new(file))?;
            let mut run = RunManifest::new("infer", args, None, started);
            run.output(path);
            run.write(&manifest_path(path))?;
            print_json(&summary)
        }
        None => {
            log::info!("{summary}");
            Ok(write_trace_csv(&report.trace, io::stdout().lock())?)
        }
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let started = Utc::now();
    let params = load_params(&args.model)?;
    let clip = load_wav(&args.wav)?;
    if args.env_period_ms == 0 {
        return Err(CliError::Usage("--env-period-ms must be positive".into()));
    }
    let env = EnvModel { period_ms: args.env_period_ms, seed: args.seed, ..EnvModel::default() };
    let mut detector = Detector::new(params, DetectorConfig::default(), Some(env))?;

    let mut cfg = PipelineConfig::new(args.device_id.clone(), args.started_at.unwrap_or_else(now_ms));
    cfg.faults = FaultConfig { drop_rate: args.loss, dup_rate: args.dup, corrupt_rate: args.corrupt, seed: args.seed };
    cfg.upload = UploadConfig {
        batch_size: args.batch_size,
        backoff: BackoffConfig {
            base_ms: args.backoff_base_ms,
            cap_ms: args.backoff_cap_ms,
            seed: args.seed,
            ..BackoffConfig::default()
        },
        max_attempts: args.max_attempts,
    };
    cfg.spool_root = args.spool_dir.clone();

    let api = HttpClient::new(&args.server, args.token.clone());
    let report = run_pipeline(&clip, &mut detector, api, &cfg)?;
    let out = serde_json::json!({
        "session_id": report.session_id,
        "device_id": cfg.device_id,
        "started_at": cfg.started_at,
        "complete": report.is_complete(),
        "ended": report.ended,
        "emitted": report.emitted.len(),
        "delivered": report.central.delivered,
        "undelivered_indications": report.undelivered_indications,
        "peripheral": report.peripheral,
        "central": report.central,
        "upload": report.upload,
        "clips": report.clips,
        "detector": {
            "windows": report.detector.trace.len(),
            "episodes": report.detector.episodes,
            "snore_ms": report.detector.snore_ms(),
            "alert_activations": report.detector.alert_activations(),
            "duration_ms": report.detector.duration_ms,
        },
        "failures": report.failures,
    });
    if let Some(path) = &args.report {
        ensure_parent(path)?;
        write_json(path, &out)?;
        let mut run = RunManifest::new("simulate", args, Some(args.seed), started);
        run.output(path);
        run.write(&manifest_path(path))?;
    }
    print_json(&out)?;
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Network(format!("session {} incomplete: {}", report.session_id, report.failures.join("; "))))
    }
}

pub fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let started = Utc::now();
    fs::create_dir_all(&args.data_dir).map_err(|e| io_error(&args.data_dir, e))?;
    let cfg = kw_cloud::ServerConfig {
        bind: args.bind,
        port: args.port,
        data_dir: args.data_dir.clone(),
        token: args.token.clone(),
        fault_rate: args.fault_503,
        fault_seed: args.fault_seed,
    };
    let run_path = args.data_dir.join("serve.run.json");
    let mut run = RunManifest::new("serve", args, Some(args.fault_seed), started);
    run.output(&args.data_dir);
    let mut ready_error = None;
    kw_cloud::run(&cfg, |addr| {
        if let Err(e) = run.write(&run_path) {
            ready_error = Some(e);
        }
        // Scripts wait for this line to learn the port.
        println!("listening on http://{addr}");
        let _ = io::stdout().flush();
    })?;
    if let Some(e) = ready_error {
        return Err(e);
    }
    run.write(&run_path)
}

#[derive(Debug, Serialize)]
struct ReplayOutcome {
    session_id: String,
    dir: PathBuf,
    resent: usize,
    accepted: u64,
    duplicates: u64,
    ended: bool,
    errors: Vec<String>,
}

pub fn replay(args: &ReplayArgs) -> Result<(), CliError> {
    if !args.spool_dir.is_dir() {
        return Err(CliError::Data(format!("{}: no such spool directory", args.spool_dir.display())));
    }
    let cfg = UploadConfig {
        batch_size: args.batch_size,
        backoff: BackoffConfig { base_ms: args.backoff_base_ms, seed: args.seed, ..BackoffConfig::default() },
        max_attempts: args.max_attempts,
    };
    let dirs = Spool::list(&args.spool_dir).map_err(|e| io_error(&args.spool_dir, e))?;
    let mut outcomes = Vec::new();
    for dir in dirs {
        let spool = Spool::open(&dir).map_err(|e| io_error(&dir, e))?;
        if spool.is_ended() && spool.unacked().is_empty() {
            continue;
        }
        let session = spool.session().clone();
        let resent = spool.unacked().len();
        let api = HttpClient::new(&args.server, args.token.clone());
        let mut uploader = Uploader::new(api, session.session_id.clone(), cfg.clone(), Some(spool))?;
        let mut errors: Vec<String> =
            uploader.replay().into_iter().filter_map(Result::err).map(|e| e.to_string()).collect();
        let mut ended = false;
        if errors.is_empty() {
            if let Some(at) = session.ended_at {
                match uploader.end_session(Some(at)) {
                    Ok(()) => ended = true,
                    Err(e) => errors.push(format!("end: {e}")),
                }
            }
        }
        let stats = uploader.stats();
        outcomes.push(ReplayOutcome {
            session_id: session.session_id,
            dir,
            resent,
            accepted: stats.accepted,
            duplicates: stats.duplicates,
            ended,
            errors,
        });
    }
    print_json(&outcomes)?;
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.errors.is_empty()).map(|o| o.session_id.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Network(format!("replay incomplete for {}", failed.join(", "))))
    }
}
