//! `duplex` command-line driver.
//!
//! Stages hand off through files: `synth` writes timelines, `build-seq`
//! turns them into training sequences, `run` drives a policy over them and
//! writes session logs, and `eval` scores those logs. Every command is a
//! pure function of its inputs, flags and `--seed`.

use clap::{Args, Parser, Subcommand, ValueEnum};
use duplex_core::codec::{fit_codebooks_with, mock_embedding, RvqCodec};
use duplex_core::engine::{
    run_session, Policy, RandomPolicy, ScriptedTimelinePolicy, SessionLog, SilentPolicy, ThresholdVadPolicy,
};
use duplex_core::eval::{evaluate, EvalConfig, EvalSample, MetricReport, Scenario};
use duplex_core::sequence::{
    apply_text_lookahead, build_sequence, read_sequences_jsonl, user_frames, BuilderConfig, CharChunkTokenizer,
    TrainingMode,
};
use duplex_core::synth::{synthesize_corpus, CorpusConfig, Flow, Focus, ScenarioTemplate, Specificity};
use duplex_core::timeline::{read_timelines_jsonl, write_timelines_jsonl, ConversationTimeline};
use duplex_core::{seed, Execution, FrameClock};
use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const TIMELINES_FILE: &str = "timelines.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SEQUENCES_FILE: &str = "sequences.jsonl";
pub const SESSIONS_FILE: &str = "sessions.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const CODEC_FILE: &str = "codec.json";
pub const CODEC_REPORT_FILE: &str = "codec_report.json";

/// Frames appended after the last reference event so reactive policies
/// have room to answer.
const TAIL_FRAMES: usize = 25;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: line {line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "duplex", version, about = "Full-duplex dialogue data, simulation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic conversation timelines and a manifest.
    Synth(SynthArgs),
    /// Convert timelines into interleaved training sequences.
    BuildSeq(BuildSeqArgs),
    /// Drive a policy over timelines and write session logs.
    Run(RunArgs),
    /// Score session logs and write a report.
    Eval(EvalArgs),
    /// Fit a codec on mock embeddings and report round-trip error.
    Codec(CodecArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FlowArg {
    Direct,
    Inquiry,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FocusArg {
    General,
    Interruption,
    Backchannel,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Pretraining,
    Finetuning,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// task:1-15, open or game:1-7
    #[arg(long, default_value = "task:1")]
    template: String,
    /// minimal, topic-guided or detailed
    #[arg(long = "spec", default_value = "detailed", value_parser = parse_spec)]
    specificity: Specificity,
    #[arg(long, value_enum, default_value = "direct")]
    flow: FlowArg,
    #[arg(long, value_enum, default_value = "general")]
    focus: FocusArg,
    /// Gap between the end of a barge-in and the reply, in milliseconds.
    #[arg(long = "delay-ms", default_value_t = 800.0)]
    delay_ms: f64,
    /// Enable simultaneous speech in speech-game templates.
    #[arg(long)]
    simultaneous: bool,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BuildSeqArgs {
    /// Timeline JSONL file or a directory containing timelines.jsonl.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "pretraining")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    lookahead: usize,
    /// Codec JSON; defaults to a seeded random codec.
    #[arg(long)]
    codec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// silent, scripted, vad:THRESH or random
    #[arg(long, default_value = "scripted", value_parser = parse_policy)]
    policy: PolicyArg,
    #[arg(long)]
    codec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Session JSONL file or a directory containing sessions.jsonl.
    #[arg(long = "in")]
    input: PathBuf,
    /// Reference timelines; without them no overlap anchors exist.
    #[arg(long)]
    timelines: Option<PathBuf>,
    #[arg(long, default_value = "pause_handling", value_parser = parse_scenario)]
    scenario: Scenario,
    /// EvalConfig JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Accepted for interface uniformity; evaluation uses no randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CodecArgs {
    #[arg(long, default_value_t = 8)]
    depths: usize,
    #[arg(long, default_value_t = 16)]
    k: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 1000)]
    frames: usize,
    #[arg(long, default_value_t = 20)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PolicyArg {
    Silent,
    Scripted,
    Vad(usize),
    Random,
}

fn parse_spec(s: &str) -> Result<Specificity, String> {
    s.parse().map_err(|e: duplex_core::synth::TemplateError| e.to_string())
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: duplex_core::eval::EvalError| e.to_string())
}

fn parse_policy(s: &str) -> Result<PolicyArg, String> {
    match s {
        "silent" => Ok(PolicyArg::Silent),
        "scripted" => Ok(PolicyArg::Scripted),
        "random" => Ok(PolicyArg::Random),
        _ => match s.strip_prefix("vad:").map(str::parse::<usize>) {
            Some(Ok(t)) => Ok(PolicyArg::Vad(t)),
            _ => Err(format!("unknown policy {s:?} (expected silent, scripted, vad:THRESH or random)")),
        },
    }
}

/// Runs the CLI and returns the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match try_run(args) {
        Ok(summary) => {
            if !summary.is_empty() {
                println!("{summary}");
            }
            0
        }
        // clap messages carry their own prefix
        Err(CliError::Usage(msg)) if msg.starts_with("error:") => {
            eprint!("{msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Like [`run`] but returns the summary line or the error.
pub fn try_run<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                return Ok(e.to_string());
            }
            return Err(CliError::Usage(e.to_string()));
        }
    };
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::BuildSeq(a) => build_seq(a),
        Command::Run(a) => run_policy(a),
        Command::Eval(a) => eval(a),
        Command::Codec(a) => codec(a),
    }
}

// ---- file helpers ----

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })
}

/// Writes via a temporary file in the same directory and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let err = |source| CliError::Write { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(contents).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.to_path_buf(), source })
}

/// A file path, or the default file inside a directory.
fn resolve(path: &Path, default_file: &str) -> PathBuf {
    if path.is_dir() {
        path.join(default_file)
    } else {
        path.to_path_buf()
    }
}

fn load_timelines(path: &Path) -> Result<(PathBuf, Vec<ConversationTimeline>), CliError> {
    let path = resolve(path, TIMELINES_FILE);
    let text = read_text(&path)?;
    let tls = read_timelines_jsonl(&text).map_err(|e| CliError::Parse {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    Ok((path, tls))
}

pub fn write_report(report: &MetricReport, path: &Path) -> Result<(), CliError> {
    write_atomic(path, report.to_json().as_bytes())
}

pub fn read_report(path: &Path) -> Result<MetricReport, CliError> {
    MetricReport::from_json(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn default_codec(seed: u64) -> RvqCodec {
    RvqCodec::seeded_random(16, 64, 8, seed::derive(seed, "codec", 0)).expect("valid default codec shape")
}

fn load_codec(path: Option<&Path>, seed: u64) -> Result<RvqCodec, CliError> {
    match path {
        None => Ok(default_codec(seed)),
        Some(p) => RvqCodec::from_json(&read_text(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))),
    }
}

fn to_json_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

// ---- commands ----

fn synth(a: SynthArgs) -> Result<String, CliError> {
    let flow = match a.flow {
        FlowArg::Direct => Flow::Direct,
        FlowArg::Inquiry => Flow::Inquiry,
    };
    let focus = match a.focus {
        FocusArg::General => Focus::General,
        FocusArg::Interruption => Focus::Interruption,
        FocusArg::Backchannel => Focus::Backchannel,
    };
    if !(a.delay_ms.is_finite() && a.delay_ms >= 0.0) {
        return Err(CliError::Usage(format!("--delay-ms must be nonnegative, got {}", a.delay_ms)));
    }
    let mut template = ScenarioTemplate::parse(&a.template, a.specificity, flow)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .with_focus(focus)
        .with_response_delay_ms(a.delay_ms);
    if a.simultaneous {
        template = template.with_simultaneity(true);
    }
    let corpus = synthesize_corpus(&CorpusConfig::new(template, a.n, a.seed), Execution::default());
    ensure_dir(&a.out)?;
    write_atomic(&a.out.join(TIMELINES_FILE), write_timelines_jsonl(&corpus.timelines).as_bytes())?;
    write_atomic(&a.out.join(MANIFEST_FILE), to_json_pretty(&corpus.manifest).as_bytes())?;
    Ok(format!(
        "synth: kept {} of {} attempted timelines -> {}",
        corpus.manifest.filter.kept,
        corpus.manifest.filter.attempted,
        a.out.display()
    ))
}

fn build_seq(a: BuildSeqArgs) -> Result<String, CliError> {
    let (_, timelines) = load_timelines(&a.input)?;
    let codec = load_codec(a.codec.as_deref(), a.seed)?;
    let mode = match a.mode {
        ModeArg::Pretraining => TrainingMode::Pretraining,
        ModeArg::Finetuning => TrainingMode::Finetuning,
    };
    let cfg = BuilderConfig::for_mode(mode).with_lookahead(a.lookahead);
    let tokenizer = CharChunkTokenizer::default();
    let built = Execution::default().map(&timelines, |tl| {
        let seq = build_sequence(tl, &tokenizer, &codec, &cfg)?;
        if a.lookahead > 0 {
            apply_text_lookahead(&seq, a.lookahead)
        } else {
            Ok(seq)
        }
    });
    let mut out = String::new();
    for (tl, r) in timelines.iter().zip(built) {
        let seq = r.map_err(|e| CliError::Data(format!("session {}: {e}", tl.session_id)))?;
        out.push_str(&seq.to_jsonl());
    }
    ensure_dir(&a.out)?;
    write_atomic(&a.out.join(SEQUENCES_FILE), out.as_bytes())?;
    Ok(format!("build-seq: {} sequences -> {}", timelines.len(), a.out.display()))
}

fn run_policy(a: RunArgs) -> Result<String, CliError> {
    let (_, timelines) = load_timelines(&a.input)?;
    let codec = load_codec(a.codec.as_deref(), a.seed)?;
    let indexed: Vec<(usize, &ConversationTimeline)> = timelines.iter().enumerate().collect();
    let logs = Execution::default().map(&indexed, |(i, tl)| -> Result<SessionLog, String> {
        let frames = tl.frame_count() + TAIL_FRAMES;
        let stream = user_frames(tl, &codec, frames).map_err(|e| e.to_string())?;
        let mut policy: Box<dyn Policy> = match a.policy {
            PolicyArg::Silent => Box::new(SilentPolicy),
            PolicyArg::Scripted => Box::new(
                ScriptedTimelinePolicy::from_timeline(
                    tl,
                    &CharChunkTokenizer::default(),
                    &codec,
                    &BuilderConfig::default(),
                )
                .map_err(|e| e.to_string())?,
            ),
            PolicyArg::Vad(t) => Box::new(ThresholdVadPolicy::new(t, ThresholdVadPolicy::default_script())),
            PolicyArg::Random => Box::new(RandomPolicy::new(seed::derive(a.seed, "policy", *i as u64))),
        };
        run_session(&tl.session_id, &stream, policy.as_mut(), &codec).map_err(|e| e.to_string())
    });
    let mut out = String::new();
    let mut coercions = 0;
    for (tl, r) in timelines.iter().zip(logs) {
        let log = r.map_err(|e| CliError::Data(format!("session {}: {e}", tl.session_id)))?;
        coercions += log.coercions;
        out.push_str(&log.to_jsonl());
    }
    ensure_dir(&a.out)?;
    write_atomic(&a.out.join(SESSIONS_FILE), out.as_bytes())?;
    Ok(format!("run: {} sessions, {} coercions -> {}", timelines.len(), coercions, a.out.display()))
}

fn eval(a: EvalArgs) -> Result<String, CliError> {
    let cfg = match &a.config {
        None => EvalConfig::default(),
        Some(p) => {
            let c: EvalConfig = serde_json::from_str(&read_text(p)?).map_err(|e| CliError::Parse {
                path: p.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            c.validate().map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            c
        }
    };
    let path = resolve(&a.input, SESSIONS_FILE);
    let entries = read_sequences_jsonl(&read_text(&path)?).map_err(|e| CliError::Parse {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let references: HashMap<String, ConversationTimeline> = match &a.timelines {
        Some(p) => load_timelines(p)?.1.into_iter().map(|t| (t.session_id.clone(), t)).collect(),
        None => HashMap::new(),
    };
    let clock = FrameClock::default();
    let mut logs = Vec::with_capacity(entries.len());
    for entry in entries {
        let id = entry.sequence.session_id.clone();
        let log = SessionLog::from_entry(entry, &clock)
            .map_err(|e| CliError::Data(format!("{}: session {id}: {e}", path.display())))?;
        logs.push(log);
    }
    if logs.is_empty() {
        return Err(CliError::Data(format!("{}: no sessions", path.display())));
    }
    let empty: Vec<ConversationTimeline> =
        logs.iter().map(|l| ConversationTimeline::new(l.session_id.clone(), clock)).collect();
    let samples: Vec<EvalSample<'_>> = logs
        .iter()
        .zip(&empty)
        .map(|(l, e)| EvalSample {
            session: l,
            reference: references.get(&l.session_id).unwrap_or(e),
            scenario: a.scenario,
        })
        .collect();
    let report = evaluate(&samples, a.scenario, &cfg).map_err(|e| CliError::Data(e.to_string()))?;
    ensure_dir(&a.out)?;
    write_report(&report, &a.out.join(REPORT_FILE))?;
    Ok(format!(
        "eval: {} N={} tor={:.6} respond={:.6} -> {}",
        report.scenario,
        report.total_n,
        report.tor,
        report.behavior.respond,
        a.out.display()
    ))
}

#[derive(serde::Serialize)]
struct CodecReport {
    depths: usize,
    k: usize,
    dim: usize,
    train_frames: usize,
    heldout_frames: usize,
    /// Mean squared reconstruction distance on held-out frames when
    /// decoding the first d depths.
    heldout_mse_by_depth: Vec<f64>,
    /// Final Lloyd MSE per depth on the training set.
    train_mse_by_depth: Vec<f64>,
    json_round_trip: bool,
}

fn codec(a: CodecArgs) -> Result<String, CliError> {
    if a.depths == 0 || a.k == 0 || a.dim == 0 || a.iterations == 0 {
        return Err(CliError::Usage("--depths, --k, --dim and --iterations must be positive".into()));
    }
    let emb = |split: &str, i: usize| mock_embedding(&format!("{}/{split}", a.seed), i as u64, a.dim);
    let train: Vec<Vec<f64>> = (0..a.frames).map(|i| emb("train", i)).collect();
    let heldout: Vec<Vec<f64>> = (0..a.frames.div_ceil(4)).map(|i| emb("heldout", i)).collect();
    let (codec, fit) = fit_codebooks_with(&train, a.depths, a.k, a.iterations, a.seed, Execution::default())
        .map_err(|e| CliError::Data(e.to_string()))?;
    let codes = codec.encode_batch(&heldout, Execution::default()).map_err(|e| CliError::Data(e.to_string()))?;
    let mut mse = Vec::with_capacity(a.depths);
    for d in 1..=a.depths {
        let mut total = 0.0;
        for (x, c) in heldout.iter().zip(&codes) {
            let y = codec.decode_frame(c, d).map_err(|e| CliError::Data(e.to_string()))?;
            total += x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        }
        mse.push(total / heldout.len().max(1) as f64);
    }
    let json = codec.to_json();
    let report = CodecReport {
        depths: a.depths,
        k: a.k,
        dim: a.dim,
        train_frames: train.len(),
        heldout_frames: heldout.len(),
        heldout_mse_by_depth: mse,
        train_mse_by_depth: fit.mse_per_depth.iter().map(|h| h.last().copied().unwrap_or(0.0)).collect(),
        json_round_trip: RvqCodec::from_json(&json).as_ref() == Ok(&codec),
    };
    ensure_dir(&a.out)?;
    write_atomic(&a.out.join(CODEC_FILE), json.as_bytes())?;
    write_atomic(&a.out.join(CODEC_REPORT_FILE), to_json_pretty(&report).as_bytes())?;
    Ok(format!(
        "codec: {} depths x {} codewords, held-out MSE {:.6} -> {}",
        a.depths,
        a.k,
        report.heldout_mse_by_depth.last().copied().unwrap_or(0.0),
        a.out.display()
    ))
}
