//! Scenario templates and dialogue scripting.

use super::grammar::Grammar;
use crate::seed;
use crate::timeline::{Channel, Role};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const TASK_SCENARIOS: u32 = 15;
pub const SPEECH_GAMES: u32 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateFamily {
    TaskOriented,
    OpenDomain,
    SpeechGame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Specificity {
    Minimal,
    TopicGuided,
    Detailed,
}

impl FromStr for Specificity {
    type Err = TemplateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "minimal" => Ok(Specificity::Minimal),
            "topic-guided" | "topic_guided" => Ok(Specificity::TopicGuided),
            "detailed" => Ok(Specificity::Detailed),
            other => Err(TemplateError::Specificity(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    /// The assistant answers straight away.
    Direct,
    /// The assistant asks a clarification question first.
    Inquiry,
}

/// Which overlap behavior a template is built to exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    /// Mixed behaviors drawn from [`OverlapMix`].
    General,
    /// Every session contains a user barge-in followed by a reply to it.
    Interruption,
    /// Long user turns with assistant backchannels.
    Backchannel,
}

/// Per-turn probabilities of overlap events in [`Focus::General`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapMix {
    pub user_backchannel: f64,
    pub assistant_backchannel: f64,
    pub interrupt: f64,
}

impl Default for OverlapMix {
    fn default() -> Self {
        Self { user_backchannel: 0.3, assistant_backchannel: 0.3, interrupt: 0.15 }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unknown template {0:?} (expected task:1-15, open or game:1-7)")]
    Template(String),
    #[error("unknown specificity {0:?} (expected minimal, topic-guided or detailed)")]
    Specificity(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTemplate {
    pub family: TemplateFamily,
    /// 1..=15 for task-oriented, 1..=7 for speech games, 0 for open domain.
    pub scenario_id: u32,
    pub specificity: Specificity,
    pub flow: Flow,
    pub focus: Focus,
    pub simultaneity: bool,
    pub overlap: OverlapMix,
    /// Gap between the end of a barge-in and the assistant's reply.
    pub response_delay_ms: f64,
    pub grammar: Grammar,
}

const TASK_TOPICS: [&[&str]; 15] = [
    &["dinner reservations", "table for four", "the tasting menu"],
    &["hotel rooms", "late checkout", "the suite upgrade"],
    &["flight tickets", "the morning flight", "seat selection"],
    &["account balance", "card payments", "the savings plan"],
    &["weather forecast", "weekend rain", "the heat warning"],
    &["online orders", "the return label", "shoe sizes"],
    &["doctor appointments", "the clinic hours", "prescription refills"],
    &["taxi pickup", "the airport ride", "fare estimates"],
    &["movie showtimes", "the late screening", "ticket prices"],
    &["library books", "the renewal date", "study rooms"],
    &["gym classes", "the yoga session", "trainer availability"],
    &["pasta recipes", "the baking time", "vegan options"],
    &["train routes", "the city tour", "museum passes"],
    &["car insurance", "the claim status", "policy renewal"],
    &["laptop repairs", "the password reset", "printer setup"],
];

const GAMES: [&str; 7] = [
    "word chain",
    "twenty questions",
    "counting game",
    "rhyme game",
    "trivia quiz",
    "story building",
    "tongue twisters",
];

/// Games that naturally have both parties talking at once.
const SIMULTANEOUS_GAMES: [u32; 3] = [3, 5, 7];

const OPEN_TOPICS: &[&str] =
    &["music", "movies", "books", "cooking", "travel plans", "sports", "science news", "history"];

fn base_grammar() -> Grammar {
    // Terminals are at least three characters: the frame grid needs a
    // word onset gap of two frames for BOW plus one text token.
    Grammar::new()
        .rule("greeting", &["hello there", "good morning", "hey there", "good afternoon"])
        .rule(
            "request",
            &[
                "can you help with <topic>",
                "please find <topic> for tomorrow",
                "could you check <topic> for this week",
                "need some help with <topic>",
                "what about <topic> today",
            ],
        )
        .rule(
            "answer",
            &[
                "sure here are the details about <topic>",
                "the <topic> look available tomorrow morning",
                "okay the best option for <topic> costs twenty dollars",
                "right now <topic> are open until nine tonight",
            ],
        )
        .rule("answer_detailed", &["<answer> <detail>"])
        .rule(
            "detail",
            &[
                "and the booking includes free parking",
                "and you can cancel anytime before noon",
                "and there are three more options nearby",
                "and the staff will send the confirmation email",
            ],
        )
        .rule(
            "clarify",
            &[
                "which <topic> would you like",
                "could you tell the date for <topic>",
                "what time works best for <topic>",
            ],
        )
        .rule(
            "clarify_answer",
            &["the one near downtown please", "tomorrow evening around seven", "the cheaper option please"],
        )
        .rule("followup", &["that sounds great thanks", "what else can you suggest", "how long does that take"])
        .rule(
            "interrupt",
            &[
                "wait actually make that <topic> instead",
                "sorry hold one second",
                "stop please change the date",
                "actually forget that and check <topic>",
            ],
        )
        .rule(
            "interrupt_reply",
            &["okay changing that right now", "sure what would you like instead", "understood updating <topic> now"],
        )
        .rule("backchannel", &["yeah", "uh-huh", "right", "okay", "mhm", "sure", "gotcha"])
        .rule(
            "long_user",
            &[
                "well the thing about <topic> that bothers the most lately",
                "honestly last week there was this whole story with <topic> and friends",
                "you know the reason for asking about <topic> goes back years",
            ],
        )
        .rule("closing", &["thanks for the help", "nothing else thanks", "great talk soon"])
}

impl ScenarioTemplate {
    fn with_grammar(
        family: TemplateFamily,
        scenario_id: u32,
        specificity: Specificity,
        flow: Flow,
        grammar: Grammar,
    ) -> Self {
        Self {
            family,
            scenario_id,
            specificity,
            flow,
            focus: Focus::General,
            simultaneity: false,
            overlap: OverlapMix::default(),
            response_delay_ms: 800.0,
            grammar,
        }
    }

    pub fn task_oriented(scenario_id: u32, specificity: Specificity, flow: Flow) -> Result<Self, TemplateError> {
        if !(1..=TASK_SCENARIOS).contains(&scenario_id) {
            return Err(TemplateError::Template(format!("task:{scenario_id}")));
        }
        let mut g = base_grammar();
        g.add("topic", TASK_TOPICS[(scenario_id - 1) as usize]);
        Ok(Self::with_grammar(TemplateFamily::TaskOriented, scenario_id, specificity, flow, g))
    }

    pub fn open_domain(specificity: Specificity, flow: Flow) -> Self {
        let mut g = base_grammar();
        g.add("topic", OPEN_TOPICS);
        Self::with_grammar(TemplateFamily::OpenDomain, 0, specificity, flow, g)
    }

    pub fn speech_game(scenario_id: u32, specificity: Specificity) -> Result<Self, TemplateError> {
        if !(1..=SPEECH_GAMES).contains(&scenario_id) {
            return Err(TemplateError::Template(format!("game:{scenario_id}")));
        }
        let game = GAMES[(scenario_id - 1) as usize];
        let mut g = base_grammar();
        g.add("topic", &[game]);
        g.add("game", &[game]);
        g.add("game_prompt", &["let's play <game> your turn first", "time for <game> ready when you are"]);
        g.add("game_move", &["<token> <token> <token>", "<token> then <token>"]);
        g.add("game_reply", &["nice one next <token>", "good move now <token>"]);
        g.add("token", &["apple", "river", "orange", "seven", "yellow", "castle", "tiger"]);
        g.add("together", &["one two three four", "red lorry yellow lorry", "ready set jump"]);
        let mut t = Self::with_grammar(TemplateFamily::SpeechGame, scenario_id, specificity, Flow::Direct, g);
        t.simultaneity = SIMULTANEOUS_GAMES.contains(&scenario_id);
        Ok(t)
    }

    /// Parses `task:ID`, `open` or `game:ID`.
    pub fn parse(spec: &str, specificity: Specificity, flow: Flow) -> Result<Self, TemplateError> {
        let bad = || TemplateError::Template(spec.to_string());
        let (family, id) = match spec.split_once(':') {
            Some((f, id)) => (f, Some(id.parse::<u32>().map_err(|_| bad())?)),
            None => (spec, None),
        };
        match (family, id) {
            ("task", Some(id)) => Self::task_oriented(id, specificity, flow),
            ("open", None | Some(0)) => Ok(Self::open_domain(specificity, flow)),
            ("game", Some(id)) => Self::speech_game(id, specificity),
            _ => Err(bad()),
        }
    }

    pub fn with_focus(mut self, focus: Focus) -> Self {
        self.focus = focus;
        self
    }

    pub fn with_simultaneity(mut self, on: bool) -> Self {
        self.simultaneity = on;
        self
    }

    pub fn with_response_delay_ms(mut self, ms: f64) -> Self {
        self.response_delay_ms = ms;
        self
    }

    pub fn label(&self) -> String {
        match self.family {
            TemplateFamily::TaskOriented => format!("task{}", self.scenario_id),
            TemplateFamily::OpenDomain => "open".to_string(),
            TemplateFamily::SpeechGame => format!("game{}", self.scenario_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScriptTurn {
    pub speaker: Channel,
    pub role: Role,
    pub text: String,
    pub content_tag: String,
    /// Asks the other party to clarify.
    pub clarification: bool,
    /// Explicit gap before this turn, overriding the sampled turn gap.
    pub delay_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DialogueScript {
    pub turns: Vec<ScriptTurn>,
    pub seed: u64,
}

impl fmt::Display for DialogueScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.turns {
            writeln!(f, "[{} {} {}] {}", t.speaker, t.role, t.content_tag, t.text)?;
        }
        Ok(())
    }
}

struct ScriptWriter<'a, R> {
    grammar: &'a Grammar,
    rng: R,
    turns: Vec<ScriptTurn>,
}

impl<R: Rng> ScriptWriter<'_, R> {
    fn push(&mut self, speaker: Channel, role: Role, rule: &str) -> usize {
        let text = self.grammar.sentence(rule, &mut self.rng);
        let idx = self.turns.len();
        self.turns.push(ScriptTurn {
            speaker,
            role,
            text,
            content_tag: format!("t{idx}"),
            clarification: false,
            delay_ms: None,
        });
        idx
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }
}

/// Seeded stand-in for LLM dialogue synthesis. Deterministic given
/// `(template, seed)`.
pub fn generate_dialogue(template: &ScenarioTemplate, seed: u64) -> DialogueScript {
    use Channel::{Assistant, User};
    let mut w = ScriptWriter { grammar: &template.grammar, rng: seed::rng(seed), turns: Vec::new() };
    let exchanges = match template.specificity {
        Specificity::Minimal => 1 + w.rng.random_range(0..2),
        Specificity::TopicGuided => 2 + w.rng.random_range(0..2),
        Specificity::Detailed => 3 + w.rng.random_range(0..2),
    };
    let answer_rule = if template.specificity == Specificity::Detailed { "answer_detailed" } else { "answer" };

    let is_game = template.family == TemplateFamily::SpeechGame;
    if is_game {
        w.push(Assistant, Role::Speech, "game_prompt");
    } else {
        w.push(User, Role::Speech, "greeting");
        w.push(Assistant, Role::Speech, "greeting");
    }

    let mut simultaneous_done = false;
    for ex in 0..exchanges {
        if is_game {
            w.push(User, Role::Speech, "game_move");
            if template.simultaneity && (!simultaneous_done || w.chance(0.3)) {
                w.push(Assistant, Role::Speech, "game_reply");
                w.push(User, Role::Simultaneous, "together");
                simultaneous_done = true;
            } else {
                w.push(Assistant, Role::Speech, "game_reply");
            }
            continue;
        }

        let long_user = template.focus == Focus::Backchannel
            || (template.focus == Focus::General && w.chance(template.overlap.assistant_backchannel));
        if long_user {
            w.push(User, Role::Speech, "long_user");
            w.push(Assistant, Role::Backchannel, "backchannel");
            w.push(User, Role::Speech, "request");
        } else {
            w.push(User, Role::Speech, "request");
        }

        if ex == 0 && template.flow == Flow::Inquiry {
            let i = w.push(Assistant, Role::Speech, "clarify");
            w.turns[i].clarification = true;
            w.push(User, Role::Speech, "clarify_answer");
        }

        w.push(Assistant, Role::Speech, answer_rule);
        let interrupt = match template.focus {
            Focus::Interruption => ex == 0 || w.chance(0.3),
            Focus::General => w.chance(template.overlap.interrupt),
            Focus::Backchannel => false,
        };
        if interrupt {
            let i = w.push(User, Role::Interrupt, "interrupt");
            let r = w.push(Assistant, Role::Speech, "interrupt_reply");
            w.turns[r].content_tag = w.turns[i].content_tag.clone();
            w.turns[r].delay_ms = Some(template.response_delay_ms.round() as u64);
        } else if template.focus == Focus::General && w.chance(template.overlap.user_backchannel) {
            w.push(User, Role::Backchannel, "backchannel");
        }
        if ex + 1 < exchanges && template.focus == Focus::General && w.chance(0.5) {
            w.push(User, Role::Speech, "followup");
        }
    }
    if !is_game {
        w.push(User, Role::Speech, "closing");
        w.push(Assistant, Role::Speech, "closing");
    }
    DialogueScript { turns: w.turns, seed }
}
