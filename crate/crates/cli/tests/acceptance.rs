//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

// `!(x >= bound)` in checks is meant to fail on NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::fs;
use std::io::{BufRead, BufReader};
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use kw_core::api::{CreateSession, EventBatch};
use kw_core::audio::{load_wav, read_manifest, save_wav, stream_windows, synth_night, NightPlan, RecentAudioRing};
use kw_core::detector::{run_session, AlertMachine, Detector, DetectorConfig, EnvModel};
use kw_core::event::GatewayEvent;
use kw_core::features::{
    dft_magnitude, FeatureExtractor, FeatureImage, InputSide, SpectrogramConfig, Spectrum, WindowFn,
};
use kw_core::nn::{backward, batch_loss, evaluate, load_params, Classify, ModelParams};
use kw_core::pam::{decode, encode, link, CharacteristicMessage, EnvValue, FaultConfig, LinkFrame};
use kw_core::SnoreClass;
use kw_gateway::{clip_episode, ClipError, HttpClient, IngestApi, Relay, Spool, SpoolSession, UploadConfig, Uploader};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion = fn(&mut Fixture) -> Outcome;
/// Episode bounds and the clip they should produce, if any.
type ClipFixture = ((u64, u64), Option<(u64, u64)>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

struct Fixture {
    dir: tempfile::TempDir,
    corpus: Option<PathBuf>,
    model24: Option<PathBuf>,
    train24_secs: Option<f64>,
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn model24(&self) -> Result<PathBuf, String> {
        self.model24.clone().ok_or_else(|| "needs the model trained by criterion 2".to_string())
    }
}

fn kw() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_kw"));
    c.env("RUST_LOG", "warn").env_remove("KW_SERVER_URL").env_remove("KW_TOKEN");
    c
}

fn run_kw<I, S>(args: I) -> Result<String, String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = kw().args(args).output().map_err(err)?;
    if !out.status.success() {
        return Err(format!("kw exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr).trim()));
    }
    String::from_utf8(out.stdout).map_err(err)
}

struct Server {
    child: Child,
    _stdout: BufReader<ChildStdout>,
    url: String,
}

impl Server {
    fn start(data_dir: &Path, extra: &[&str]) -> Result<Server, String> {
        let mut child = kw()
            .args(["serve", "--port", "0", "--data-dir"])
            .arg(data_dir)
            .args(extra)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(err)?;
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut line = String::new();
        stdout.read_line(&mut line).map_err(err)?;
        let Some(url) = line.trim().strip_prefix("listening on ") else {
            let _ = child.kill();
            return Err(format!("unexpected serve output {line:?}"));
        };
        Ok(Server { url: url.to_string(), child, _stdout: stdout })
    }

    fn sigkill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn sigterm(&mut self) -> Result<(), String> {
        // SAFETY: plain syscall on our own child's pid.
        let rc = unsafe { libc::kill(self.child.id() as libc::pid_t, libc::SIGTERM) };
        ensure!(rc == 0, "kill(SIGTERM) failed");
        let status = self.child.wait().map_err(err)?;
        ensure!(status.success(), "serve exited with {status} after SIGTERM");
        Ok(())
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.sigkill();
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

/// GET with retries through injected 503s.
fn get_json(url: &str) -> Result<Value, String> {
    let agent = agent();
    for _ in 0..500 {
        let mut resp = agent.get(url).call().map_err(err)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(err)?;
        if status == 503 {
            thread::sleep(Duration::from_millis(2));
            continue;
        }
        ensure!(status == 200, "GET {url}: {status} {body}");
        return serde_json::from_str(&body).map_err(err);
    }
    Err(format!("GET {url}: still 503 after 500 tries"))
}

fn stored_events(url: &str, session: &str) -> Result<Vec<GatewayEvent>, String> {
    let v = get_json(&format!("{url}/api/v1/sessions/{session}/events"))?;
    let batch: EventBatch = serde_json::from_value(v).map_err(err)?;
    Ok(batch.events)
}

// 1 ------------------------------------------------------------------------

#[allow(clippy::needless_range_loop)]
fn gradient_check(_: &mut Fixture) -> Outcome {
    const EPS: f64 = 1e-4;
    const REL_TOL: f64 = 1e-3;
    const ABS_FLOOR: f64 = 1e-8;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut params = ModelParams::random(12, [3, 4, 5], &mut rng).map_err(err)?;
    // Nonzero biases move pre-activations off exact zero.
    for b in params.conv.iter_mut().map(|l| &mut l.biases).chain(params.dense.iter_mut().map(|l| &mut l.biases)) {
        b.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
    }
    let images: Vec<FeatureImage> =
        (0..3).map(|_| FeatureImage::new(12, (0..144).map(|_| rng.random::<f32>()).collect()).unwrap()).collect();
    let batch = vec![
        (&images[0], SnoreClass::Snoring),
        (&images[1], SnoreClass::NonSnoring),
        (&images[2], SnoreClass::Snoring),
    ];
    let mask = || ChaCha8Rng::seed_from_u64(0);
    let (grads, _) = backward(&params, &batch, &mut mask(), 0.0).map_err(err)?;
    let mut work = params.clone();
    let (mut checked, mut worst, mut failures) = (0usize, 0.0f64, 0usize);
    let mut signal = vec![false; params.tensors().len()];
    for t in 0..params.tensors().len() {
        for i in 0..params.tensors()[t].len() {
            let x = params.tensors()[t][i];
            let (plus, minus) = ((x as f64 + EPS) as f32, (x as f64 - EPS) as f32);
            work.tensors_mut()[t][i] = plus;
            let lp = batch_loss(&work, &batch, &mut mask(), 0.0).map_err(err)?;
            work.tensors_mut()[t][i] = minus;
            let lm = batch_loss(&work, &batch, &mut mask(), 0.0).map_err(err)?;
            work.tensors_mut()[t][i] = x;
            let numeric = (lp - lm) / (plus as f64 - minus as f64);
            let analytic = grads.tensors[t][i];
            let scale = analytic.abs().max(numeric.abs());
            let rel = if scale < ABS_FLOOR { 0.0 } else { (analytic - numeric).abs() / scale };
            let ok = if scale < ABS_FLOOR { (analytic - numeric).abs() < ABS_FLOOR } else { rel <= REL_TOL };
            failures += usize::from(!ok);
            worst = worst.max(rel);
            signal[t] |= scale >= ABS_FLOOR;
            checked += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(checked == params.param_count(), "checked {checked} of {} parameters", params.param_count());
    ensure!(failures == 0, "{failures} of {checked} parameters outside 1e-3 (worst {worst:.2e})");
    ensure!(signal.iter().all(|&s| s), "a tensor carried no gradient signal");
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!("{checked} parameters, worst relative error {worst:.2e}, {secs:.1}s"))
}

// 2 ------------------------------------------------------------------------

fn column(csv: &str, name: &str) -> Result<Vec<f64>, String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().ok_or("empty history")?.split(',').collect();
    let idx = header.iter().position(|h| *h == name).ok_or_else(|| format!("history has no {name} column"))?;
    lines.map(|l| l.split(',').nth(idx).ok_or("short row")?.parse::<f64>().map_err(err)).collect()
}

fn desk_scale_learning(fx: &mut Fixture) -> Outcome {
    let corpus = fx.path("corpus");
    run_kw([
        OsArg::from("synth"),
        "--out".into(),
        corpus.clone().into(),
        "--per-class".into(),
        "200".into(),
        "--seed".into(),
        "7".into(),
    ])?;
    let manifest = corpus.join("manifest.csv");
    let entries = read_manifest(&manifest).map_err(err)?;
    let snores = entries.iter().filter(|e| e.label == SnoreClass::Snoring).count();
    ensure!(entries.len() == 400 && snores == 200, "corpus has {} clips, {snores} snoring", entries.len());
    fx.corpus = Some(manifest.clone());

    let model = fx.path("m24.kwnn");
    let train = |out: &Path| {
        run_kw([
            OsArg::from("train"),
            "--manifest".into(),
            manifest.clone().into(),
            "--side".into(),
            "24".into(),
            "--epochs".into(),
            "30".into(),
            "--seed".into(),
            "7".into(),
            "--out".into(),
            out.to_path_buf().into(),
        ])
    };
    let started = Instant::now();
    let summary: Value = serde_json::from_str(&train(&model)?).map_err(err)?;
    let secs = started.elapsed().as_secs_f64();
    fx.train24_secs = summary["seconds"].as_f64();

    let history = fs::read_to_string(fx.path("m24.kwnn.history.csv")).map_err(err)?;
    let loss = column(&history, "train_loss")?;
    let val = column(&history, "val_accuracy")?;
    ensure!(loss.len() == 30, "history has {} epochs", loss.len());
    let smoothed: Vec<f64> = loss.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    if let Some(i) = smoothed.windows(2).position(|w| w[1] >= w[0]) {
        return Err(format!("smoothed loss rose at epoch {}: {:.5} -> {:.5}", i + 6, smoothed[i], smoothed[i + 1]));
    }
    let acc = *val.last().unwrap();
    ensure!(acc >= 0.95, "validation accuracy {acc:.3}");
    ensure!(secs < 600.0, "training took {secs:.0}s");

    let report_path = fx.path("eval.json");
    run_kw([
        OsArg::from("eval"),
        "--manifest".into(),
        manifest.clone().into(),
        "--model".into(),
        model.clone().into(),
        "--report".into(),
        report_path.clone().into(),
    ])?;
    let mut report: Value = serde_json::from_str(&fs::read_to_string(&report_path).map_err(err)?).map_err(err)?;
    for key in ["total", "accuracy", "false_positive_rate", "false_negative_rate", "confusion", "mean_latency_ms"] {
        ensure!(report.get(key).is_some(), "eval report lacks {key}");
    }
    let params = load_params(&model).map_err(err)?;
    let data = kw_cli::commands::dataset(&manifest, 24).map_err(err)?;
    let mut direct = serde_json::to_value(evaluate(&params, &data).map_err(err)?).map_err(err)?;
    // Wall-clock latency is the one field that cannot repeat.
    report.as_object_mut().unwrap().remove("mean_latency_ms");
    direct.as_object_mut().unwrap().remove("mean_latency_ms");
    ensure!(report == direct, "kw eval {report} differs from evaluate {direct}");

    let again = fx.path("m24-again.kwnn");
    train(&again)?;
    ensure!(
        fs::read(&model).map_err(err)? == fs::read(&again).map_err(err)?,
        "retraining with the same seed changed the weights"
    );
    ensure!(
        history == fs::read_to_string(fx.path("m24-again.kwnn.history.csv")).map_err(err)?,
        "retraining with the same seed changed the history"
    );
    fx.model24 = Some(model);
    Ok(format!(
        "val accuracy {acc:.3}, smoothed loss {:.4} -> {:.4} strictly decreasing, train {secs:.1}s, eval accuracy {:.3}, rerun identical",
        smoothed[0],
        smoothed[smoothed.len() - 1],
        report["accuracy"].as_f64().unwrap_or(f64::NAN)
    ))
}

type OsArg = std::ffi::OsString;

// 3 ------------------------------------------------------------------------

/// Mean ms per window for feature extraction plus the forward pass, and for
/// the forward pass alone.
const PASSES: usize = 5;

fn per_window_ms(params: &ModelParams, windows: &[kw_core::audio::FrameWindow]) -> Result<(f64, f64), String> {
    let side = InputSide::try_from(params.input_side()).map_err(err)?;
    let ex = FeatureExtractor::new(SpectrogramConfig::default(), 16_000, side).map_err(err)?;
    for w in windows.iter().take(5) {
        params.classify(&ex.extract(w).map_err(err)?).map_err(err)?;
    }
    let mut forward = 0.0;
    let started = Instant::now();
    for _ in 0..PASSES {
        for w in windows {
            let image = ex.extract(w).map_err(err)?;
            let t = Instant::now();
            params.classify(&image).map_err(err)?;
            forward += t.elapsed().as_secs_f64() * 1e3;
        }
    }
    let n = (PASSES * windows.len()) as f64;
    Ok((started.elapsed().as_secs_f64() * 1e3 / n, forward / n))
}

fn fast_slow_duality(fx: &mut Fixture) -> Outcome {
    let model24 = fx.model24()?;
    let manifest = fx.corpus.clone().ok_or("no corpus")?;
    let model64 = fx.path("m64.kwnn");
    let out = run_kw([
        OsArg::from("train"),
        "--manifest".into(),
        manifest.into(),
        "--side".into(),
        "64".into(),
        "--epochs".into(),
        "30".into(),
        "--seed".into(),
        "7".into(),
        "--out".into(),
        model64.clone().into(),
    ])?;
    let train64: Value = serde_json::from_str(&out).map_err(err)?;
    let train64_secs = train64["seconds"].as_f64().unwrap_or(f64::NAN);

    let plan = NightPlan { duration_ms: 20_000, episodes: vec![(4_000, 12_000)] };
    let clip = synth_night(3, &plan, 16_000);
    let windows = stream_windows(&clip, 1000, 333);
    let (full24, fwd24) = per_window_ms(&load_params(&model24).map_err(err)?, &windows)?;
    let (full64, fwd64) = per_window_ms(&load_params(&model64).map_err(err)?, &windows)?;
    // The slowdown is the network's; extraction cost is shared by both sides.
    let ratio = fwd64 / fwd24;
    let detail = format!(
        "forward pass 24x24 {fwd24:.3} ms, 64x64 {fwd64:.3} ms (x{ratio:.1}); whole window incl. features {full24:.2} vs {full64:.2} ms; training {:.1}s vs {train64_secs:.1}s",
        fx.train24_secs.unwrap_or(f64::NAN)
    );
    ensure!(ratio >= 4.0, "{detail}");
    ensure!(full24 <= 50.0, "{detail}");
    ensure!(train64_secs > fx.train24_secs.unwrap_or(f64::INFINITY), "64x64 did not train slower: {detail}");
    Ok(detail)
}

// 4 ------------------------------------------------------------------------

fn naive_dft(x: &[f64], n: usize) -> Vec<(f64, f64)> {
    (0..=n / 2)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, &v)| {
                let a = TAU * ((k * i) % n) as f64 / n as f64;
                (re + v * a.cos(), im - v * a.sin())
            })
        })
        .collect()
}

fn dsp_oracle(_: &mut Fixture) -> Outcome {
    let n = 512;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let hann: Vec<f64> = (0..n).map(|i| 0.5 * (1.0 - (TAU * i as f64 / n as f64).cos())).collect();
    let spectrum = Spectrum::new(n).map_err(err)?;
    let (mut worst_dft, mut worst_parseval) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let frame: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let windowed: Vec<f64> = frame.iter().zip(&hann).map(|(x, w)| x * w).collect();
        let fast = dft_magnitude(&frame, n).map_err(err)?;
        for (f, (re, im)) in fast.iter().zip(naive_dft(&windowed, n)) {
            let m = re.hypot(im);
            worst_dft = worst_dft.max((f - m).abs() / f.abs().max(m).max(1e-12));
        }
        let rect = spectrum.magnitude(&frame, WindowFn::Rectangular).map_err(err)?;
        for (x, mag) in [(&frame, &rect), (&windowed, &fast)] {
            let time: f64 = x.iter().map(|v| v * v).sum();
            let freq: f64 = mag
                .iter()
                .enumerate()
                .map(|(k, m)| if k == 0 || k == n / 2 { m * m } else { 2.0 * m * m })
                .sum::<f64>()
                / n as f64;
            worst_parseval = worst_parseval.max((time - freq).abs() / time);
        }
    }
    ensure!(worst_dft <= 1e-6, "worst DFT relative error {worst_dft:.2e}");
    ensure!(worst_parseval <= 1e-6, "worst Parseval gap {worst_parseval:.2e}");
    Ok(format!("1000 frames, worst DFT error {worst_dft:.1e}, worst Parseval gap {worst_parseval:.1e}"))
}

// 5 ------------------------------------------------------------------------

fn random_message(rng: &mut ChaCha8Rng) -> CharacteristicMessage {
    use CharacteristicMessage as M;
    let t: u64 = rng.random();
    match rng.random_range(0..7) {
        0 => {
            let bp = rng.random_range(0..=10_000);
            M::ActivityInstantaneous { timestamp_ms: t, p_snore_bp: bp, p_non_snore_bp: 10_000 - bp }
        }
        1 => {
            let start = rng.random_range(0..u64::MAX / 2);
            M::ActivitySummary {
                window_start_ms: start,
                window_end_ms: start + rng.random_range(1..=1u64 << 40),
                inferred_class: if rng.random() { SnoreClass::Snoring } else { SnoreClass::NonSnoring },
                episode_count: rng.random(),
            }
        }
        2 => M::Environment { timestamp_ms: t, value: EnvValue::Temperature(rng.random()) },
        3 => M::Environment { timestamp_ms: t, value: EnvValue::Humidity(rng.random_range(0..=10_000)) },
        4 => M::Environment { timestamp_ms: t, value: EnvValue::Pressure(rng.random()) },
        5 => M::Alerting { timestamp_ms: t, active: true, intensity_byte: rng.random() },
        _ => M::Alerting { timestamp_ms: t, active: false, intensity_byte: 0 },
    }
}

fn codec_round_trip(_: &mut Fixture) -> Outcome {
    let fixture = encode(&CharacteristicMessage::ActivityInstantaneous {
        timestamp_ms: 0,
        p_snore_bp: 5000,
        p_non_snore_bp: 5000,
    })
    .map_err(err)?;
    ensure!(
        fixture == [0, 0, 0, 0, 0, 0, 0, 0, 0x88, 0x13, 0x88, 0x13],
        "instantaneous fixture encodes to {fixture:02x?}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let (mut flips, mut payload_errors) = (0usize, 0usize);
    let mut kinds = BTreeSet::new();
    for i in 0..10_000 {
        let m = random_message(&mut rng);
        let id = m.char_id() as u8;
        let bytes = encode(&m).map_err(err)?;
        let expected_len = match id {
            1 => 12,
            2 => 21,
            3 | 4 => 13,
            5 => 15,
            6 => 10,
            other => return Err(format!("unknown char id {other}")),
        };
        ensure!(bytes.len() == expected_len, "message {i} ({m:?}) encodes to {} bytes", bytes.len());
        ensure!(decode(id, &bytes).map_err(err)? == m, "message {i} does not round-trip: {m:?}");
        kinds.insert(id);
        let frame = LinkFrame::for_message(i, &m).map_err(err)?.encode();
        for bit in 0..bytes.len() * 8 {
            let mut mutated = bytes.clone();
            mutated[bit / 8] ^= 1 << (bit % 8);
            match decode(id, &mutated) {
                Ok(other) => ensure!(other != m, "message {i}: bit {bit} flip decodes to the same message"),
                Err(_) => payload_errors += 1,
            }
            let mut wire = frame.clone();
            let at = 7 * 8 + bit;
            wire[at / 8] ^= 1 << (at % 8);
            ensure!(LinkFrame::decode(&wire).is_err(), "message {i}: bit {bit} flip passed the frame check");
            flips += 1;
        }
    }
    ensure!(kinds.len() == 6, "only char ids {kinds:?} generated");
    Ok(format!("10000 messages over 6 characteristics, {flips} single-bit mutations all detected ({payload_errors} rejected by the payload decoder alone)"))
}

// 6 ------------------------------------------------------------------------

/// Activations and deactivations by looking back over the raw history.
fn reference_toggles(seq: &[bool], m: usize, n: usize) -> Vec<(usize, bool)> {
    let mut active = false;
    let mut out = Vec::new();
    for i in 0..seq.len() {
        let tail = |len: usize, v: bool| i + 1 >= len && seq[i + 1 - len..=i].iter().all(|&s| s == v);
        if !active && tail(m, true) {
            active = true;
            out.push((i, true));
        } else if active && tail(n, false) {
            active = false;
            out.push((i, false));
        }
    }
    out
}

fn random_runs(rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut v: bool = rng.random();
    let mut out = Vec::new();
    for _ in 0..rng.random_range(1..40) {
        out.extend(std::iter::repeat_n(v, rng.random_range(1..=40)));
        v = !v;
    }
    out
}

fn hysteresis(_: &mut Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut pairs = vec![(9u32, 15u32, 10_000usize)];
    pairs.extend((0..20).map(|_| (rng.random_range(1..=30), rng.random_range(1..=30), 500)));
    let (mut sequences, mut toggles) = (0usize, 0usize);
    for &(m, n, count) in &pairs {
        let cfg = DetectorConfig { alert_on_count: m, alert_off_count: n, ..DetectorConfig::default() };
        for s in 0..count {
            let seq = random_runs(&mut rng);
            let mut machine = AlertMachine::new(&cfg);
            let mut got = Vec::new();
            let mut was = false;
            for (i, &snore) in seq.iter().enumerate() {
                machine.update(if snore { SnoreClass::Snoring } else { SnoreClass::NonSnoring }, i as u64 * 333);
                let now = machine.state().active;
                if now != was {
                    got.push((i, now));
                }
                was = now;
            }
            let want = reference_toggles(&seq, m as usize, n as usize);
            ensure!(got == want, "M={m} N={n} sequence {s}: machine {got:?} vs reference {want:?}");
            sequences += 1;
            toggles += want.len();
        }
    }
    Ok(format!("{sequences} sequences over {} (M,N) pairs, {toggles} transitions matched", pairs.len()))
}

// 7 ------------------------------------------------------------------------

fn exactly_once(fx: &mut Fixture) -> Outcome {
    let model = fx.model24()?;
    let plan = NightPlan { duration_ms: 60_000, episodes: vec![(8_000, 19_000), (30_000, 40_000), (52_000, 60_000)] };
    let wav = fx.path("night.wav");
    save_wav(&synth_night(71, &plan, 16_000), &wav).map_err(err)?;
    let data = fx.path("e2e-data");
    let mut server = Server::start(&data, &["--fault-503", "0.5", "--fault-seed", "72"])?;

    let started_at = "2026-03-01T23:00:00Z";
    let report_path = fx.path("simulate.json");
    let clock = Instant::now();
    run_kw([
        "simulate",
        "--wav",
        wav.to_str().unwrap(),
        "--model",
        model.to_str().unwrap(),
        "--server",
        &server.url,
        "--loss",
        "0.1",
        "--dup",
        "0.05",
        "--seed",
        "73",
        "--device-id",
        "bedroom",
        "--started-at",
        started_at,
        "--env-period-ms",
        "10000",
        "--backoff-base-ms",
        "10",
        "--backoff-cap-ms",
        "200",
        "--max-attempts",
        "64",
        "--report",
        report_path.to_str().unwrap(),
    ])?;
    let wall = clock.elapsed().as_secs_f64();
    let report: Value = serde_json::from_str(&fs::read_to_string(&report_path).map_err(err)?).map_err(err)?;
    let session = report["session_id"].as_str().ok_or("report has no session_id")?.to_string();

    // Dedup oracle: the same detector log pushed through an identically
    // seeded link, keeping what the receiver accepts.
    let clip = load_wav(&wav).map_err(err)?;
    let env = EnvModel { period_ms: 10_000, seed: 73, ..EnvModel::default() };
    let mut detector =
        Detector::new(load_params(&model).map_err(err)?, DetectorConfig::default(), Some(env)).map_err(err)?;
    let trace = run_session(&clip, &mut detector).map_err(err)?;
    let (mut peripheral, central) =
        link(FaultConfig { drop_rate: 0.1, dup_rate: 0.05, corrupt_rate: 0.0, seed: 73 }).map_err(err)?;
    for m in &trace.log {
        peripheral.send(&m.message).map_err(err)?;
    }
    drop(peripheral);
    let origin = started_at.parse::<DateTime<Utc>>().map_err(err)?.timestamp_millis() as u64;
    let mut relay = Relay::new("bedroom", origin, 0);
    let expected: Vec<GatewayEvent> = central.map(|r| relay.map(&r.message)).collect();

    let stored = stored_events(&server.url, &session)?;
    let summary = get_json(&format!("{}/api/v1/sessions/{session}/summary", server.url))?;
    let status = get_json(&format!("{}/api/v1/sessions/{session}", server.url))?;
    server.sigterm()?;

    let emitted = report["emitted"].as_u64().unwrap_or(0) as usize;
    ensure!(
        stored.len() == emitted && emitted == expected.len(),
        "stored {} events, gateway emitted {emitted}, oracle expects {}",
        stored.len(),
        expected.len()
    );
    if let Some(i) = (0..stored.len()).find(|&i| stored[i] != expected[i]) {
        return Err(format!("event {i} differs: stored {:?} vs expected {:?}", stored[i], expected[i]));
    }
    ensure!(stored.iter().enumerate().all(|(i, e)| e.seq == i as u64), "stored seqs are not 0..{}", stored.len());
    ensure!(status["status"] == "closed", "session not closed: {status}");
    let dropped = trace.log.len() - expected.len();

    let truth_ms = trace.snore_ms() as f64;
    ensure!(truth_ms > 0.0, "the detector found no snoring in the night recording");
    let minutes = summary["snore_minutes"].as_f64().ok_or("summary has no snore_minutes")?;
    let gap_ms = (minutes * 60_000.0 - truth_ms).abs();
    ensure!(gap_ms <= 1000.0, "snore_minutes {minutes:.4} vs trace {:.4} ({gap_ms:.0} ms apart)", truth_ms / 60_000.0);
    ensure!(wall < 30.0, "60 s session took {wall:.1}s");
    Ok(format!(
        "{} events stored = emitted = oracle ({dropped} notifications lost on the link, {} HTTP retries), snore {:.3} min vs trace {:.3} min, {} episodes, {wall:.1}s",
        stored.len(),
        report["upload"]["retries"],
        minutes,
        truth_ms / 60_000.0,
        summary["episode_count"]
    ))
}

// 8 ------------------------------------------------------------------------

fn synthetic_events(device: &str, origin: u64, n: usize, seed: u64) -> Vec<GatewayEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut relay = Relay::new(device, origin, 0);
    let mut snoring = false;
    let mut episodes = 0;
    (0..n)
        .map(|i| {
            let t = i as u64 * 333;
            let m = if i % 25 == 0 {
                snoring = !snoring;
                episodes += u32::from(snoring);
                CharacteristicMessage::ActivitySummary {
                    window_start_ms: t,
                    window_end_ms: t + 1000,
                    inferred_class: if snoring { SnoreClass::Snoring } else { SnoreClass::NonSnoring },
                    episode_count: episodes,
                }
            } else {
                CharacteristicMessage::instantaneous(t, rng.random_range(0.0..1.0))
            };
            relay.map(&m)
        })
        .collect()
}

fn create(api: &HttpClient, device: &str, started_at: DateTime<Utc>, key: &str) -> Result<String, String> {
    let req = CreateSession { device_id: device.to_string(), started_at };
    Ok(api.create_session(&req, key).map_err(err)?.session_id)
}

fn without_session_id(mut v: Value) -> Value {
    if let Some(o) = v.as_object_mut() {
        o.remove("session_id");
    }
    v
}

fn idempotency_and_durability(fx: &mut Fixture) -> Outcome {
    let started_at: DateTime<Utc> = "2026-03-02T22:30:00Z".parse().map_err(err)?;
    let origin = started_at.timestamp_millis() as u64;
    let events = synthetic_events("dev-8", origin, 600, 81);
    let mut rng = ChaCha8Rng::seed_from_u64(82);

    // Random prefix replays converge on the single-pass state.
    let mut server = Server::start(&fx.path("idem-data"), &[])?;
    let api = HttpClient::new(&server.url, None);
    let baseline = create(&api, "dev-8", started_at, "baseline")?;
    for chunk in events.chunks(50) {
        api.post_events(&baseline, &EventBatch { events: chunk.to_vec() }).map_err(err)?;
    }
    let want_events = stored_events(&server.url, &baseline)?;
    let want_summary = without_session_id(get_json(&format!("{}/api/v1/sessions/{baseline}/summary", server.url))?);
    ensure!(want_events == events, "single-pass upload stored {} events", want_events.len());
    let trials = 12;
    let mut posts = 0;
    for trial in 0..trials {
        let session = create(&api, "dev-8", started_at, &format!("trial-{trial}"))?;
        let mut sent = 0;
        let mut accepted = 0;
        while sent < events.len() {
            let next = (sent + rng.random_range(1..=120)).min(events.len());
            accepted +=
                api.post_events(&session, &EventBatch { events: events[sent..next].to_vec() }).map_err(err)?.accepted;
            posts += 1;
            sent = next;
            while rng.random_bool(0.5) {
                let a = rng.random_range(0..sent);
                let b = rng.random_range(a + 1..=(a + 150).min(sent));
                let r = api.post_events(&session, &EventBatch { events: events[a..b].to_vec() }).map_err(err)?;
                ensure!(
                    r.accepted == 0 && r.duplicates == (b - a) as u64,
                    "replaying {a}..{b} accepted {}",
                    r.accepted
                );
                accepted += r.accepted;
                posts += 1;
            }
        }
        ensure!(accepted == events.len() as u64, "trial {trial} accepted {accepted} events");
        ensure!(stored_events(&server.url, &session)? == want_events, "trial {trial} stored a different event log");
        let summary = without_session_id(get_json(&format!("{}/api/v1/sessions/{session}/summary", server.url))?);
        ensure!(summary == want_summary, "trial {trial} summary {summary} differs from {want_summary}");
    }
    server.sigterm()?;

    // SIGKILL the service while a spooled uploader is running.
    let data = fx.path("crash-data");
    let spool_root = fx.path("spool");
    let mut server = Server::start(&data, &[])?;
    let ended_at = started_at + chrono::Duration::minutes(10);
    let session = create(&HttpClient::new(&server.url, None), "dev-8", started_at, "crash")?;
    let spool_dir = spool_root.join(&session);
    let spool_session =
        SpoolSession { session_id: session.clone(), device_id: "dev-8".into(), started_at, ended_at: Some(ended_at) };
    Spool::create(&spool_dir, spool_session).map_err(err)?;
    let cfg = UploadConfig {
        batch_size: 50,
        backoff: kw_gateway::BackoffConfig { base_ms: 2, cap_ms: 10, ..Default::default() },
        max_attempts: 2,
    };
    let mut acked = BTreeSet::new();
    let mut next_batch = 0;
    let batches: Vec<Vec<GatewayEvent>> = events.chunks(50).map(<[GatewayEvent]>::to_vec).collect();
    let mut kills = 0;
    for round in 0..4 {
        let spool = Spool::open(&spool_dir).map_err(err)?;
        let mut up = Uploader::new(HttpClient::new(&server.url, None), session.clone(), cfg.clone(), Some(spool))
            .map_err(err)?;
        let todo: Vec<Vec<GatewayEvent>> = batches[next_batch..(next_batch + 3).min(batches.len())].to_vec();
        next_batch += todo.len();
        let worker = thread::spawn(move || {
            let mut receipts = up.replay();
            for b in &todo {
                receipts.push(up.upload_batch(b));
                thread::sleep(Duration::from_millis(3));
            }
            receipts
        });
        if round < 3 {
            thread::sleep(Duration::from_millis(rng.random_range(1..40)));
        } else {
            // Last round: let every request finish, kill between batches.
            while !worker.is_finished() {
                thread::sleep(Duration::from_millis(1));
            }
        }
        server.sigkill();
        kills += 1;
        for r in worker.join().map_err(|_| "uploader thread panicked")?.into_iter().flatten() {
            acked.extend(r.first_seq..=r.last_seq);
        }
        server = Server::start(&data, &[])?;
        let stored = stored_events(&server.url, &session)?;
        let seqs: BTreeSet<u64> = stored.iter().map(|e| e.seq).collect();
        if let Some(lost) = acked.difference(&seqs).next() {
            return Err(format!("round {round}: acknowledged event {lost} lost after SIGKILL"));
        }
        ensure!(stored.iter().all(|e| *e == events[e.seq as usize]), "round {round}: stored event altered");
    }
    ensure!(next_batch == batches.len(), "only {next_batch} batches attempted");
    let out = run_kw([
        "replay",
        "--spool-dir",
        spool_root.to_str().unwrap(),
        "--server",
        &server.url,
        "--backoff-base-ms",
        "5",
    ])?;
    let stored = stored_events(&server.url, &session)?;
    ensure!(stored == events, "after replay {} of {} events stored: {out}", stored.len(), events.len());
    let status = get_json(&format!("{}/api/v1/sessions/{session}", server.url))?;
    ensure!(status["status"] == "closed", "session not closed after replay: {status}");
    server.sigterm()?;
    Ok(format!(
        "{trials} random replay schedules ({posts} posts) match the single-pass state; {kills} SIGKILLs lost none of {} acknowledged events, replay completed all 600",
        acked.len()
    ))
}

// 9 ------------------------------------------------------------------------

fn ring_fidelity(_: &mut Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let mut checked = 0;
    for &rate in &[16_000u32, 44_100, 8_000] {
        let source: Vec<f32> = (0..rate as usize * 200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut ring = RecentAudioRing::new(60_000, rate);
        let mut written = 0usize;
        let per_rate = if rate == 16_000 { 500 } else { 250 };
        let mut done = 0;
        while done < per_rate && written < source.len() {
            let n = rng.random_range(1..=rate as usize / 4).min(source.len() - written);
            ring.write(&source[written..written + n]);
            written += n;
            {
                let (oldest, now) = (ring.oldest_ms(), ring.now_ms());
                if now <= oldest {
                    continue;
                }
                let from = rng.random_range(oldest..now);
                let to = rng.random_range(from + 1..=now);
                let got = ring.extract(from, to).map_err(err)?;
                let (a, b) = ((from * rate as u64 / 1000) as usize, (to * rate as u64 / 1000) as usize);
                ensure!(got.samples() == &source[a..b], "{rate} Hz [{from}, {to}) ms differs from the source slice");
                done += 1;
                checked += 1;
            }
        }
        ensure!(done == per_rate, "only {done} ranges at {rate} Hz");
    }

    // Padding and clamping on a ring holding [30 s, 90 s).
    let rate = 16_000u32;
    let source: Vec<f32> = (0..rate as usize * 90).map(|i| ((i % 1000) as f32 / 1000.0) - 0.5).collect();
    let mut ring = RecentAudioRing::new(60_000, rate);
    ring.write(&source);
    ensure!(kw_gateway::EPISODE_PAD_MS == 5_000, "pad is {} ms", kw_gateway::EPISODE_PAD_MS);
    let slice = |a: u64, b: u64| &source[(a * 16) as usize..(b * 16) as usize];
    let fixtures: [ClipFixture; 7] = [
        ((40_000, 50_000), Some((35_000, 55_000))),
        ((32_000, 40_000), Some((30_000, 45_000))),
        ((80_000, 88_000), Some((75_000, 90_000))),
        ((20_000, 31_000), Some((30_000, 36_000))),
        ((35_000, 85_000), Some((30_000, 90_000))),
        ((30_001, 30_002), Some((30_000, 35_002))),
        ((10_000, 30_000), None),
    ];
    for ((start, end), want) in fixtures {
        match (clip_episode(&ring, start, end, 5_000), want) {
            (Ok(c), Some((a, b))) => {
                ensure!(
                    (c.clip_start_ms, c.clip_end_ms) == (a, b),
                    "episode [{start}, {end}) clipped to [{}, {})",
                    c.clip_start_ms,
                    c.clip_end_ms
                );
                ensure!((c.episode_start_ms, c.episode_end_ms) == (start, end), "episode bounds not kept");
                ensure!(c.audio.samples() == slice(a, b), "episode [{start}, {end}) audio differs");
            }
            (Err(ClipError::Evicted { .. }), None) => {}
            (got, _) => return Err(format!("episode [{start}, {end}): unexpected {got:?}")),
        }
    }
    ensure!(
        matches!(clip_episode(&ring, 50_000, 50_000, 5_000), Err(ClipError::Range { .. })),
        "empty episode accepted"
    );
    let mut young = RecentAudioRing::new(60_000, rate);
    young.write(&source[..rate as usize * 20]);
    let c = clip_episode(&young, 2_000, 6_000, 5_000).map_err(err)?;
    ensure!(
        (c.clip_start_ms, c.clip_end_ms) == (0, 11_000) && c.audio.samples() == slice(0, 11_000),
        "unwrapped ring clip wrong"
    );
    Ok(format!("{checked} random ranges at 16/44.1/8 kHz equal the source; 9 clip boundary fixtures hold"))
}

fn main() {
    let mut fx =
        Fixture { dir: tempfile::tempdir().expect("temp dir"), corpus: None, model24: None, train24_secs: None };
    let criteria: [(&str, Criterion); 9] = [
        ("gradient correctness", gradient_check),
        ("desk-scale learning", desk_scale_learning),
        ("fast/slow duality", fast_slow_duality),
        ("DSP oracle equivalence", dsp_oracle),
        ("codec round-trip", codec_round_trip),
        ("hysteresis correctness", hysteresis),
        ("end-to-end exactly-once", exactly_once),
        ("ingestion idempotency and durability", idempotency_and_durability),
        ("ring fidelity", ring_fidelity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(|| check(&mut fx))).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
