//! Offline full-duplex metrics over session logs.
//!
//! Anchors come from the reference timeline a session was driven by; the
//! assistant's behavior comes from the session log's speaking segments.

use crate::clock::SampleInterval;
use crate::engine::SessionLog;
use crate::timeline::{Channel, ConversationTimeline, Role, UtteranceEvent};
use serde::de::Error as _;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no samples to aggregate")]
    Empty,
    #[error("distribution lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("distribution does not sum to 1 (sum {0})")]
    NotNormalized(f64),
    #[error("invalid eval config: {0}")]
    Config(String),
    #[error("unknown scenario {0:?}")]
    Scenario(String),
    #[error("report JSON: {0}")]
    Report(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub takeover_min_seconds: f64,
    pub takeover_min_words: usize,
    pub post_anchor_margin_seconds: f64,
    pub jsd_bins: usize,
    pub jsd_smoothing: f64,
    /// Require both takeover thresholds instead of either.
    pub takeover_requires_both: bool,
    pub sample_rate: u32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            takeover_min_seconds: 1.5,
            takeover_min_words: 5,
            post_anchor_margin_seconds: 0.5,
            jsd_bins: 10,
            jsd_smoothing: 1e-9,
            takeover_requires_both: false,
            sample_rate: 24_000,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.takeover_min_seconds)
            || self.takeover_min_words == 0
            || !positive(self.post_anchor_margin_seconds)
            || !positive(self.jsd_smoothing)
            || self.sample_rate == 0
        {
            return Err(EvalError::Config("thresholds must be positive".into()));
        }
        if self.jsd_bins < 2 {
            return Err(EvalError::Config("jsd_bins must be at least 2".into()));
        }
        Ok(())
    }

    fn seconds(&self, samples: u64) -> f64 {
        samples as f64 / f64::from(self.sample_rate)
    }

    fn samples(&self, seconds: f64) -> u64 {
        (seconds * f64::from(self.sample_rate)).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    PauseHandling,
    Backchannel,
    SmoothTurnTaking,
    UserInterruption,
    UserBackchannel,
    BackgroundSpeech,
    TalkingToOthers,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::PauseHandling,
        Scenario::Backchannel,
        Scenario::SmoothTurnTaking,
        Scenario::UserInterruption,
        Scenario::UserBackchannel,
        Scenario::BackgroundSpeech,
        Scenario::TalkingToOthers,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::PauseHandling => "pause_handling",
            Scenario::Backchannel => "backchannel",
            Scenario::SmoothTurnTaking => "smooth_turn_taking",
            Scenario::UserInterruption => "user_interruption",
            Scenario::UserBackchannel => "user_backchannel",
            Scenario::BackgroundSpeech => "background_speech",
            Scenario::TalkingToOthers => "talking_to_others",
        }
    }

    /// Scenarios scored from the onset of a user overlap.
    pub fn is_overlap(self) -> bool {
        matches!(
            self,
            Scenario::UserInterruption
                | Scenario::UserBackchannel
                | Scenario::BackgroundSpeech
                | Scenario::TalkingToOthers
        )
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        Scenario::ALL.into_iter().find(|sc| sc.as_str() == norm).ok_or_else(|| EvalError::Scenario(s.to_string()))
    }
}

// ---- takeovers ----

pub fn is_takeover(segment: &UtteranceEvent, cfg: &EvalConfig) -> bool {
    let long = cfg.seconds(segment.interval.len()) >= cfg.takeover_min_seconds;
    let wordy = segment.words.len() >= cfg.takeover_min_words;
    if cfg.takeover_requires_both {
        long && wordy
    } else {
        long || wordy
    }
}

/// Assistant speaking segments that claim the floor.
pub fn detect_takeovers<'a>(session: &'a SessionLog, cfg: &EvalConfig) -> Vec<&'a UtteranceEvent> {
    session.assistant_events().filter(|s| is_takeover(s, cfg)).collect()
}

/// Fraction of `true` flags.
pub fn takeover_rate(flags: &[bool]) -> Result<f64, EvalError> {
    if flags.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64)
}

/// One evaluation sample: a session and the timeline that defined it.
#[derive(Debug, Clone, Copy)]
pub struct EvalSample<'a> {
    pub session: &'a SessionLog,
    pub reference: &'a ConversationTimeline,
    pub scenario: Scenario,
}

/// First user event that overlaps the assistant's floor by role.
pub fn overlap_anchor(reference: &ConversationTimeline) -> Option<&UtteranceEvent> {
    reference
        .events
        .iter()
        .filter(|e| {
            e.channel == Channel::User && matches!(e.role, Role::Interrupt | Role::Backchannel | Role::Simultaneous)
        })
        .min_by_key(|e| e.interval.start)
}

/// First sample of the window in which takeovers count.
pub fn scored_window_start(sample: &EvalSample<'_>) -> u64 {
    match sample.scenario {
        Scenario::PauseHandling | Scenario::Backchannel => 0,
        Scenario::SmoothTurnTaking => sample
            .reference
            .events_on(Channel::User)
            .filter(|(_, e)| e.role == Role::Speech)
            .map(|(_, e)| e.interval.end)
            .max()
            .unwrap_or(0),
        _ => overlap_anchor(sample.reference).map_or(0, |e| e.interval.start),
    }
}

pub fn sample_has_takeover(sample: &EvalSample<'_>, cfg: &EvalConfig) -> bool {
    let from = scored_window_start(sample);
    detect_takeovers(sample.session, cfg).iter().any(|s| s.interval.start >= from)
}

pub fn compute_tor(samples: &[EvalSample<'_>], cfg: &EvalConfig) -> Result<f64, EvalError> {
    let flags: Vec<bool> = samples.iter().map(|s| sample_has_takeover(s, cfg)).collect();
    takeover_rate(&flags)
}

// ---- backchannels ----

/// Relative position of `onset` within the user utterance containing it.
fn relative_position(reference: &ConversationTimeline, onset: u64) -> Option<f64> {
    reference
        .events_on(Channel::User)
        .map(|(_, e)| e.interval)
        .find(|iv| iv.contains_sample(onset))
        .map(|iv| (onset - iv.start) as f64 / iv.len() as f64)
}

/// Non-takeover, BC-opened segments of a session.
pub fn backchannel_segments<'a>(session: &'a SessionLog, cfg: &EvalConfig) -> Vec<&'a UtteranceEvent> {
    session.assistant_events().filter(|s| s.role == Role::Backchannel && !is_takeover(s, cfg)).collect()
}

/// Smoothed, normalized histogram of positions in `[0, 1]`.
pub fn timing_histogram(positions: &[f64], bins: usize, smoothing: f64) -> Vec<f64> {
    let mut h = vec![smoothing; bins];
    for &p in positions {
        let b = ((p * bins as f64).floor() as usize).min(bins - 1);
        h[b] += 1.0;
    }
    let total: f64 = h.iter().sum();
    h.iter_mut().for_each(|x| *x /= total);
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackchannelStats {
    pub frequency: f64,
    pub histogram: Vec<f64>,
}

pub fn backchannel_stats(samples: &[EvalSample<'_>], cfg: &EvalConfig) -> Result<BackchannelStats, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut count = 0usize;
    let mut positions = Vec::new();
    for s in samples {
        for seg in backchannel_segments(s.session, cfg) {
            count += 1;
            positions.extend(relative_position(s.reference, seg.interval.start));
        }
    }
    Ok(BackchannelStats {
        frequency: count as f64 / samples.len() as f64,
        histogram: timing_histogram(&positions, cfg.jsd_bins, cfg.jsd_smoothing),
    })
}

/// Human timing histogram from the assistant backchannels of reference timelines.
pub fn reference_histogram(references: &[&ConversationTimeline], cfg: &EvalConfig) -> Vec<f64> {
    let positions: Vec<f64> = references
        .iter()
        .flat_map(|r| {
            r.events_on(Channel::Assistant)
                .filter(|(_, e)| e.role == Role::Backchannel)
                .filter_map(|(_, e)| relative_position(r, e.interval.start))
                .collect::<Vec<_>>()
        })
        .collect();
    timing_histogram(&positions, cfg.jsd_bins, cfg.jsd_smoothing)
}

fn kl2(p: &[f64], m: &[f64]) -> f64 {
    p.iter().zip(m).filter(|(pi, _)| **pi > 0.0).map(|(pi, mi)| pi * (pi / mi).log2()).sum()
}

/// Base-2 Jensen-Shannon divergence, in `[0, 1]`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64, EvalError> {
    if p.len() != q.len() {
        return Err(EvalError::LengthMismatch(p.len(), q.len()));
    }
    for d in [p, q] {
        let s: f64 = d.iter().sum();
        if (s - 1.0).abs() > 1e-9 || d.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(EvalError::NotNormalized(s));
        }
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok((0.5 * kl2(p, &m) + 0.5 * kl2(q, &m)).clamp(0.0, 1.0))
}

// ---- latencies ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatencyMode {
    Response,
    Stop,
}

/// Time from `anchor + margin` to the onset of the first assistant segment
/// starting at or after `search_from`, clipped at zero.
pub fn response_latency(session: &SessionLog, anchor: u64, search_from: u64, cfg: &EvalConfig) -> Option<f64> {
    let target = anchor + cfg.samples(cfg.post_anchor_margin_seconds);
    session
        .assistant_events()
        .filter(|s| s.interval.start >= search_from)
        .min_by_key(|s| s.interval.start)
        .map(|s| (cfg.seconds(s.interval.start) - cfg.seconds(target)).max(0.0))
}

/// Time from `anchor` to the end of the assistant segment active there.
pub fn stop_latency(session: &SessionLog, anchor: u64, cfg: &EvalConfig) -> Option<f64> {
    session
        .assistant_events()
        .find(|s| s.interval.contains_sample(anchor))
        .map(|s| cfg.seconds(s.interval.end - anchor))
}

pub fn compute_latencies(session: &SessionLog, anchor: u64, cfg: &EvalConfig, mode: LatencyMode) -> Option<f64> {
    match mode {
        LatencyMode::Response => response_latency(session, anchor, anchor, cfg),
        LatencyMode::Stop => stop_latency(session, anchor, cfg),
    }
}

/// Mean over defined values with its coverage `n / total`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMean {
    pub mean: Option<f64>,
    pub n: usize,
    pub total: usize,
}

pub fn conditional_mean(values: &[Option<f64>]) -> ConditionalMean {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    ConditionalMean {
        mean: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        n: defined.len(),
        total: values.len(),
    }
}

// ---- behavior ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorLabel {
    Respond,
    Resume,
    Uncertain,
    Unknown,
}

impl BehaviorLabel {
    pub const ALL: [BehaviorLabel; 4] =
        [BehaviorLabel::Respond, BehaviorLabel::Resume, BehaviorLabel::Uncertain, BehaviorLabel::Unknown];
}

/// Labels the first assistant segment beginning at or after the overlap
/// onset by its content tag.
pub fn classify_behavior(
    session: &SessionLog,
    overlap: SampleInterval,
    pre_overlap_tag: &str,
    overlap_tag: &str,
) -> BehaviorLabel {
    let next =
        session.assistant_events().filter(|s| s.interval.start >= overlap.start).min_by_key(|s| s.interval.start);
    match next {
        None => BehaviorLabel::Unknown,
        Some(s) if s.content_tag == overlap_tag => BehaviorLabel::Respond,
        Some(s) if s.content_tag == pre_overlap_tag => BehaviorLabel::Resume,
        Some(_) => BehaviorLabel::Uncertain,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BehaviorDistribution {
    pub respond: f64,
    pub resume: f64,
    pub uncertain: f64,
    pub unknown: f64,
}

impl BehaviorDistribution {
    pub fn from_counts(respond: usize, resume: usize, uncertain: usize, unknown: usize) -> Self {
        let n = (respond + resume + uncertain + unknown) as f64;
        if n == 0.0 {
            return Self::default();
        }
        Self {
            respond: respond as f64 / n,
            resume: resume as f64 / n,
            uncertain: uncertain as f64 / n,
            unknown: unknown as f64 / n,
        }
    }

    pub fn from_labels(labels: &[BehaviorLabel]) -> Self {
        let c = |l| labels.iter().filter(|x| **x == l).count();
        Self::from_counts(
            c(BehaviorLabel::Respond),
            c(BehaviorLabel::Resume),
            c(BehaviorLabel::Uncertain),
            c(BehaviorLabel::Unknown),
        )
    }

    pub fn get(&self, label: BehaviorLabel) -> f64 {
        match label {
            BehaviorLabel::Respond => self.respond,
            BehaviorLabel::Resume => self.resume,
            BehaviorLabel::Uncertain => self.uncertain,
            BehaviorLabel::Unknown => self.unknown,
        }
    }

    pub fn sum(&self) -> f64 {
        self.respond + self.resume + self.uncertain + self.unknown
    }
}

/// Published four-way behavior distributions, kept as fixtures only.
pub const BEHAVIOR_FIXTURES: [(&str, &str, [f64; 4]); 20] = [
    ("user_backchannel", "Moshi", [0.010, 0.092, 0.000, 0.898]),
    ("user_backchannel", "Freeze-Omni", [0.010, 0.480, 0.020, 0.490]),
    ("user_backchannel", "PersonaPlex", [0.020, 0.418, 0.041, 0.520]),
    ("user_backchannel", "MiniCPM-o 4.5", [0.000, 0.520, 0.000, 0.480]),
    ("user_backchannel", "Raon-SpeechChat", [0.010, 0.398, 0.010, 0.582]),
    ("background_speech", "Moshi", [0.210, 0.100, 0.030, 0.660]),
    ("background_speech", "Freeze-Omni", [0.770, 0.100, 0.000, 0.130]),
    ("background_speech", "PersonaPlex", [0.220, 0.160, 0.110, 0.510]),
    ("background_speech", "MiniCPM-o 4.5", [0.460, 0.260, 0.000, 0.280]),
    ("background_speech", "Raon-SpeechChat", [0.530, 0.230, 0.020, 0.220]),
    ("talking_to_others", "Moshi", [0.210, 0.210, 0.030, 0.550]),
    ("talking_to_others", "Freeze-Omni", [0.670, 0.150, 0.000, 0.180]),
    ("talking_to_others", "PersonaPlex", [0.310, 0.120, 0.200, 0.370]),
    ("talking_to_others", "MiniCPM-o 4.5", [0.550, 0.130, 0.010, 0.310]),
    ("talking_to_others", "Raon-SpeechChat", [0.620, 0.150, 0.040, 0.190]),
    ("user_interruption", "Moshi", [0.560, 0.145, 0.020, 0.275]),
    ("user_interruption", "Freeze-Omni", [0.810, 0.085, 0.015, 0.090]),
    ("user_interruption", "PersonaPlex", [0.710, 0.100, 0.075, 0.115]),
    ("user_interruption", "MiniCPM-o 4.5", [0.660, 0.220, 0.005, 0.115]),
    ("user_interruption", "Raon-SpeechChat", [0.725, 0.140, 0.050, 0.085]),
];

pub fn fixture_distribution(row: &[f64; 4]) -> BehaviorDistribution {
    BehaviorDistribution { respond: row[0], resume: row[1], uncertain: row[2], unknown: row[3] }
}

// ---- per-sample evaluation and aggregation ----

#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub session_id: String,
    pub takeover: bool,
    pub backchannels: usize,
    pub bc_positions: Vec<f64>,
    pub behavior: BehaviorLabel,
    pub stop_latency: Option<f64>,
    pub response_latency: Option<f64>,
    pub coercions: usize,
}

/// Content tag of the assistant reference utterance under way at `onset`,
/// or the latest one started before it.
fn pre_overlap_tag(reference: &ConversationTimeline, onset: u64) -> Option<&str> {
    reference
        .events_on(Channel::Assistant)
        .map(|(_, e)| e)
        .filter(|e| e.interval.start < onset && e.role == Role::Speech)
        .max_by_key(|e| e.interval.start)
        .map(|e| e.content_tag.as_str())
}

/// Scores one sample. Without a user overlap in the reference, latencies
/// are undefined and the behavior is `Unknown`.
pub fn evaluate_sample(sample: &EvalSample<'_>, cfg: &EvalConfig) -> SampleResult {
    let session = sample.session;
    let bcs = backchannel_segments(session, cfg);
    let bc_positions = bcs.iter().filter_map(|s| relative_position(sample.reference, s.interval.start)).collect();
    let anchor = overlap_anchor(sample.reference);
    let (behavior, stop, response) = match anchor {
        None => (BehaviorLabel::Unknown, None, None),
        Some(o) => {
            let pre = pre_overlap_tag(sample.reference, o.interval.start).unwrap_or("");
            (
                classify_behavior(session, o.interval, pre, &o.content_tag),
                stop_latency(session, o.interval.start, cfg),
                response_latency(session, o.interval.end, o.interval.start, cfg),
            )
        }
    };
    SampleResult {
        session_id: session.session_id.clone(),
        takeover: sample_has_takeover(sample, cfg),
        backchannels: bcs.len(),
        bc_positions,
        behavior,
        stop_latency: stop,
        response_latency: response,
        coercions: session.coercions,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencySummary {
    pub mean: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub scenario: String,
    pub total_n: usize,
    pub tor: f64,
    pub backchannel_freq: f64,
    pub jsd: f64,
    pub behavior: BehaviorDistribution,
    pub stop_latency: LatencySummary,
    pub response_latency: LatencySummary,
    pub coercion_count: usize,
}

pub fn aggregate_report(
    results: &[SampleResult],
    scenario: &str,
    reference_hist: &[f64],
    cfg: &EvalConfig,
) -> Result<MetricReport, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = results.len();
    let positions: Vec<f64> = results.iter().flat_map(|r| r.bc_positions.iter().copied()).collect();
    let hist = timing_histogram(&positions, cfg.jsd_bins, cfg.jsd_smoothing);
    let labels: Vec<BehaviorLabel> = results.iter().map(|r| r.behavior).collect();
    let stop = conditional_mean(&results.iter().map(|r| r.stop_latency).collect::<Vec<_>>());
    let resp = conditional_mean(&results.iter().map(|r| r.response_latency).collect::<Vec<_>>());
    Ok(MetricReport {
        scenario: scenario.to_string(),
        total_n: n,
        tor: takeover_rate(&results.iter().map(|r| r.takeover).collect::<Vec<_>>())?,
        backchannel_freq: results.iter().map(|r| r.backchannels).sum::<usize>() as f64 / n as f64,
        jsd: jsd(&hist, reference_hist)?,
        behavior: BehaviorDistribution::from_labels(&labels),
        stop_latency: LatencySummary { mean: stop.mean, n: stop.n },
        response_latency: LatencySummary { mean: resp.mean, n: resp.n },
        coercion_count: results.iter().map(|r| r.coercions).sum(),
    })
}

/// Evaluates every sample of one scenario and aggregates the report.
pub fn evaluate(samples: &[EvalSample<'_>], scenario: Scenario, cfg: &EvalConfig) -> Result<MetricReport, EvalError> {
    cfg.validate()?;
    let results: Vec<SampleResult> = samples.iter().map(|s| evaluate_sample(s, cfg)).collect();
    let refs: Vec<&ConversationTimeline> = samples.iter().map(|s| s.reference).collect();
    aggregate_report(&results, scenario.as_str(), &reference_histogram(&refs, cfg), cfg)
}

/// Unweighted mean of sub-benchmark scores.
pub fn suite_mean(scores: &[f64]) -> Result<f64, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

// ---- Report JSON ----

/// Number printed with exactly six decimals.
struct Fixed(f64);

impl Serialize for Fixed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(format!("{:.6}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

pub fn round6(x: f64) -> f64 {
    format!("{x:.6}").parse().expect("formatted float parses")
}

#[derive(Serialize)]
struct BehaviorOut {
    respond: Fixed,
    resume: Fixed,
    uncertain: Fixed,
    unknown: Fixed,
}

#[derive(Serialize)]
struct LatencyOut {
    mean: Option<Fixed>,
    n: usize,
}

#[derive(Serialize)]
struct ReportOut<'a> {
    scenario: &'a str,
    #[serde(rename = "N")]
    n: usize,
    tor: Fixed,
    bc_freq: Fixed,
    jsd: Fixed,
    behavior: BehaviorOut,
    stop_latency: LatencyOut,
    response_latency: LatencyOut,
    coercions: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BehaviorIn {
    respond: f64,
    resume: f64,
    uncertain: f64,
    unknown: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LatencyIn {
    mean: Option<f64>,
    n: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportIn {
    scenario: String,
    #[serde(rename = "N")]
    n: usize,
    tor: f64,
    bc_freq: f64,
    jsd: f64,
    behavior: BehaviorIn,
    stop_latency: LatencyIn,
    response_latency: LatencyIn,
    coercions: usize,
}

impl MetricReport {
    /// Every real rounded to six decimals, as it appears in Report JSON.
    pub fn rounded(&self) -> Self {
        let lat = |l: &LatencySummary| LatencySummary { mean: l.mean.map(round6), n: l.n };
        Self {
            scenario: self.scenario.clone(),
            total_n: self.total_n,
            tor: round6(self.tor),
            backchannel_freq: round6(self.backchannel_freq),
            jsd: round6(self.jsd),
            behavior: BehaviorDistribution {
                respond: round6(self.behavior.respond),
                resume: round6(self.behavior.resume),
                uncertain: round6(self.behavior.uncertain),
                unknown: round6(self.behavior.unknown),
            },
            stop_latency: lat(&self.stop_latency),
            response_latency: lat(&self.response_latency),
            coercion_count: self.coercion_count,
        }
    }

    pub fn to_json(&self) -> String {
        let lat = |l: &LatencySummary| LatencyOut { mean: l.mean.map(Fixed), n: l.n };
        let out = ReportOut {
            scenario: &self.scenario,
            n: self.total_n,
            tor: Fixed(self.tor),
            bc_freq: Fixed(self.backchannel_freq),
            jsd: Fixed(self.jsd),
            behavior: BehaviorOut {
                respond: Fixed(self.behavior.respond),
                resume: Fixed(self.behavior.resume),
                uncertain: Fixed(self.behavior.uncertain),
                unknown: Fixed(self.behavior.unknown),
            },
            stop_latency: lat(&self.stop_latency),
            response_latency: lat(&self.response_latency),
            coercions: self.coercion_count,
        };
        let mut s = serde_json::to_string_pretty(&out).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let r: ReportIn = serde_json::from_str(text).map_err(|e| EvalError::Report(e.to_string()))?;
        let report = Self {
            scenario: r.scenario,
            total_n: r.n,
            tor: r.tor,
            backchannel_freq: r.bc_freq,
            jsd: r.jsd,
            behavior: BehaviorDistribution {
                respond: r.behavior.respond,
                resume: r.behavior.resume,
                uncertain: r.behavior.uncertain,
                unknown: r.behavior.unknown,
            },
            stop_latency: LatencySummary { mean: r.stop_latency.mean, n: r.stop_latency.n },
            response_latency: LatencySummary { mean: r.response_latency.mean, n: r.response_latency.n },
            coercion_count: r.coercions,
        };
        report.check().map_err(|e| EvalError::Report(e.to_string()))?;
        Ok(report)
    }

    fn check(&self) -> Result<(), serde_json::Error> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.tor) || !unit(self.jsd) || self.backchannel_freq < 0.0 {
            return Err(serde_json::Error::custom("metric out of range"));
        }
        if self.stop_latency.n > self.total_n || self.response_latency.n > self.total_n {
            return Err(serde_json::Error::custom("latency coverage exceeds N"));
        }
        Ok(())
    }
}
