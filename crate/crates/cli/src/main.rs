//! `aec`: run, evaluate and inspect the echo canceller, and generate
//! training data.
//!
//! Exit codes: 0 on success, 1 when processing fails, 2 for usage errors
//! and malformed inputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use aec_core::datagen::{self, Manifest, NonlinearitySpec};
use aec_core::dsp::wav;
use aec_core::metrics;
use aec_core::nn::{load_weights, NetworkWeights, ROLES};
use aec_core::pipeline::{self, RunReport, SessionOptions};
use aec_core::{AecError, HOP};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "aec", version, about = "Hybrid adaptive-filter / GRU acoustic echo canceller")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cancel echo in a far/mic pair of 16 kHz mono WAV files.
    Run(RunArgs),
    /// Score processed audio: ERLE, LSD, response time and model size.
    Eval(EvalArgs),
    /// Generate a training dataset from a manifest.
    SynthData(SynthDataArgs),
    /// Write a seeded synthetic conversation (far, mic, clean near, activity mask).
    SynthScene(SynthSceneArgs),
    /// Print the layer table of a model file.
    InspectModel(InspectArgs),
}

#[derive(Args, Debug)]
struct EngineArgs {
    /// RESW model file (required unless --no-nn).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Bypass the suppression network.
    #[arg(long)]
    no_nn: bool,
    /// Gate suppression with hard VAD decisions.
    #[arg(long)]
    hard_gate: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    far: PathBuf,
    #[arg(long)]
    mic: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    engine: EngineArgs,
    /// Per-frame band gains and VAD outputs as CSV.
    #[arg(long)]
    dump_gains: Option<PathBuf>,
    /// Write the run report as CSV as well.
    #[arg(long)]
    report_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Clean near-end reference.
    #[arg(long)]
    clean: PathBuf,
    /// Microphone signal.
    #[arg(long)]
    mic: PathBuf,
    /// Processed output.
    #[arg(long)]
    out: PathBuf,
    /// Activity CSV with columns frame,echo,speech.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Far-end signal; when given the engine is re-run to time it.
    #[arg(long)]
    far: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthDataArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SynthSceneArgs {
    /// Output directory; receives far.wav, mic.wav, clean.wav, echo.wav, activity.csv.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 60.0)]
    seconds: f64,
    /// none, tanh:DRIVE or clip:DRIVE
    #[arg(long, default_value = "tanh:1.5")]
    nonlinearity: String,
    /// Near-to-echo power ratio.
    #[arg(long, default_value_t = 0.0)]
    snr_db: f64,
}

#[derive(Args, Debug)]
struct InspectArgs {
    model: PathBuf,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<AecError> for Failure {
    fn from(e: AecError) -> Self {
        let code = if e.is_format_error() { 2 } else { 1 };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure { code: 1, message: format!("{}: {e}", path.display()) }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::SynthData(a) => synth_data(a),
        Command::SynthScene(a) => synth_scene(a),
        Command::InspectModel(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn engine(args: &EngineArgs) -> Result<(Option<Arc<NetworkWeights>>, SessionOptions), Failure> {
    let options = SessionOptions {
        use_network: !args.no_nn,
        hard_gate: args.hard_gate,
        ..SessionOptions::default()
    };
    if args.no_nn {
        return Ok((None, options));
    }
    let path = args
        .model
        .as_ref()
        .ok_or_else(|| usage("--model is required unless --no-nn is given"))?;
    let weights = pipeline::load_model(path)?;
    Ok((Some(Arc::new(weights)), options))
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let (weights, options) = engine(&a.engine)?;
    let far = wav::read_wav(&a.far)?;
    let mic = wav::read_wav(&a.mic)?;
    let (out, report) = pipeline::process_signals(&far, &mic, weights, &options, a.dump_gains.is_some())?;
    wav::write_wav(&a.out, &out)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print_run_report(&report);
    if let Some(path) = &a.dump_gains {
        write_gains(path, &report).map_err(|e| io_failure(path, e))?;
    }
    if let Some(path) = &a.report_csv {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_failure(path, e))?;
        let row = [
            report.frames.to_string(),
            report.samples.to_string(),
            format!("{:.3}", report.mean_erle_db),
            format!("{:.4}", report.rt.mean_millis()),
            format!("{:.4}", report.rt.max_micros / 1000.0),
        ];
        w.write_record(["frames", "samples", "erle_db", "rt_mean_ms", "rt_max_ms"])
            .and_then(|_| w.write_record(&row))
            .and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| io_failure(path, e))?;
    }
    Ok(())
}

fn print_run_report(r: &RunReport) {
    println!("frames      {}", r.frames);
    println!("samples     {}", r.samples);
    println!("erle_db     {:.2}  ({} far-active frames)", r.mean_erle_db, r.erle_frames);
    println!("rt_mean_ms  {:.4}", r.rt.mean_millis());
    println!("rt_max_ms   {:.4}", r.rt.max_micros / 1000.0);
}

fn write_gains(path: &Path, report: &RunReport) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["frame".to_string()];
    header.extend((0..aec_core::NUM_BANDS).map(|k| format!("g_{k}")));
    header.extend(["vad_near".to_string(), "vad_far".to_string()]);
    w.write_record(&header)?;
    for t in &report.trace {
        let mut row = vec![t.frame.to_string()];
        row.extend(t.gains.iter().map(|g| format!("{g:.6}")));
        row.push(format!("{:.6}", t.vad_near));
        row.push(format!("{:.6}", t.vad_far));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Echo and speech masks from an activity CSV (`frame,echo,speech`).
fn read_mask(path: &Path, frames: usize) -> Result<(Vec<bool>, Vec<bool>), Failure> {
    let mut r = csv::Reader::from_path(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| usage(format!("{}: {e}", path.display())))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| usage(format!("{}: missing column '{name}'", path.display())))
    };
    let (fi, ei, si) = (col("frame")?, col("echo")?, col("speech")?);
    let mut echo = vec![false; frames];
    let mut speech = vec![false; frames];
    for (line, rec) in r.records().enumerate() {
        let bad = |what: &str| usage(format!("{}: row {}: bad {what}", path.display(), line + 2));
        let rec = rec.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let frame: usize = rec.get(fi).and_then(|v| v.parse().ok()).ok_or_else(|| bad("frame"))?;
        let flag = |i: usize, what: &str| match rec.get(i) {
            Some("1") => Ok(true),
            Some("0") => Ok(false),
            _ => Err(bad(what)),
        };
        if frame >= frames {
            return Err(bad("frame index (beyond the audio)"));
        }
        echo[frame] = flag(ei, "echo")?;
        speech[frame] = flag(si, "speech")?;
    }
    Ok((echo, speech))
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let clean = wav::read_wav(&a.clean)?;
    let mic = wav::read_wav(&a.mic)?;
    let out = wav::read_wav(&a.out)?;
    if clean.len() != mic.len() || mic.len() != out.len() {
        return Err(usage(format!(
            "inputs are misaligned: clean {} / mic {} / out {} samples",
            clean.len(),
            mic.len(),
            out.len()
        )));
    }
    let frames = mic.len().div_ceil(HOP);
    let masks = a.mask.as_deref().map(|p| read_mask(p, frames)).transpose()?;
    let erle = metrics::erle(&mic, &out, HOP, masks.as_ref().map(|m| m.0.as_slice()))?;
    let lsd = metrics::lsd(&clean, &out, masks.as_ref().map(|m| m.1.as_slice()))?;

    let rt_ms = match &a.far {
        Some(far_path) => {
            let (weights, options) = engine(&a.engine)?;
            let far = wav::read_wav(far_path)?;
            let (_, report) = pipeline::process_signals(&far, &mic, weights, &options, false)?;
            Some(report.rt.mean_millis())
        }
        None => None,
    };
    let size_kb = match &a.engine.model {
        Some(p) => Some(std::fs::metadata(p).map_err(|e| AecError::io(p, e))?.len() as f64 / 1024.0),
        None => None,
    };
    let cell = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
    let row = [
        format!("{:.2}", erle.mean_db),
        format!("{:.2}", lsd.mean_db),
        cell(rt_ms, 4),
        cell(size_kb, 1),
    ];
    println!("{:>10} {:>10} {:>14} {:>12}", "ERLE(dB)", "LSD(dB)", "RT(ms/frame)", "Size(kb)");
    println!("{:>10} {:>10} {:>14} {:>12}", row[0], row[1], row[2], row[3]);
    println!("erle frames {}, lsd frames {}", erle.frames_used, lsd.frames_used);
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_failure(path, e))?;
        w.write_record(["erle_db", "lsd_db", "rt_ms_per_frame", "size_kb"])
            .and_then(|_| w.write_record(&row))
            .and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| io_failure(path, e))?;
    }
    Ok(())
}

fn threads() -> Result<Option<usize>, Failure> {
    match std::env::var("AEC_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| usage(format!("AEC_THREADS must be a positive integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

fn synth_data(a: SynthDataArgs) -> Result<(), Failure> {
    let threads = threads()?;
    let mut manifest = Manifest::load(&a.manifest)?;
    if let Some(seed) = a.seed {
        manifest.seed = seed;
    }
    let start = Instant::now();
    let summary = datagen::build_dataset(manifest, &a.out, threads)?;
    println!(
        "wrote {} records from {} scenes to {} in {:.1} s",
        summary.records,
        summary.scenes,
        a.out.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn synth_scene(a: SynthSceneArgs) -> Result<(), Failure> {
    let nl = NonlinearitySpec::parse(&a.nonlinearity).map_err(|e| usage(e.to_string()))?;
    if !(a.seconds > 0.0) {
        return Err(usage("--seconds must be positive"));
    }
    let scene = datagen::evaluation_scene(a.seed, a.seconds, nl, a.snr_db)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| io_failure(&a.out_dir, e))?;
    let dir = &a.out_dir;
    wav::write_wav(dir.join("far.wav"), &scene.far)?;
    wav::write_wav(dir.join("mic.wav"), &scene.mix.mic)?;
    wav::write_wav(dir.join("clean.wav"), &scene.mix.near)?;
    wav::write_wav(dir.join("echo.wav"), &scene.mix.echo)?;
    let path = dir.join("activity.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_failure(&path, e))?;
    let write = |w: &mut csv::Writer<std::fs::File>| -> Result<(), csv::Error> {
        w.write_record(["frame", "echo", "speech"])?;
        for (i, act) in scene.activity(2 * HOP, metrics::ACTIVITY_DBFS).iter().enumerate() {
            w.write_record([i.to_string(), (act.echo as u8).to_string(), (act.speech as u8).to_string()])?;
        }
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(|e| io_failure(&path, e))?;
    println!("wrote scene (seed {}, {:.1} s) to {}", a.seed, a.seconds, dir.display());
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<(), Failure> {
    let bytes = std::fs::read(&a.model).map_err(|e| AecError::io(&a.model, e))?;
    let weights = load_weights(&bytes)
        .map_err(|e| Failure { code: 2, message: format!("{}: {e}", a.model.display()) })?;
    println!("{:<16} {:<6} {:<8} {:>7} {:>8} {:>8}", "layer", "kind", "act", "inputs", "outputs", "params");
    for (role, layer) in ROLES.iter().zip(weights.layers()) {
        let (inputs, outputs) = layer.dims();
        println!(
            "{:<16} {:<6} {:<8} {:>7} {:>8} {:>8}",
            role.name,
            role.kind.name(),
            role.activation.name(),
            inputs,
            outputs,
            layer.param_count()
        );
    }
    println!("parameters  {}", weights.param_count());
    println!("size_kb     {:.1}", bytes.len() as f64 / 1024.0);
    Ok(())
}
