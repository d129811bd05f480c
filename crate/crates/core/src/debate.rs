//! The adversarial debate loop: discovery, arguments, expert testimony,
//! self-reflection, critique, termination and the role-switched re-run.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::arbitration::EvidencePool;
use crate::corpus::{CorpusError, CorpusIndex, Embedder};
use crate::mining::{Claim, PremiseSet};
use crate::prag::{
    build_query, retrieve_progressive, should_stop, DiscoveryContext, PragError, PragQuery, PragRoundStats,
    PragSettings, PragStopReason,
};
use crate::runtime::{render_prompt, AgentError, AgentRuntime, RoleId};

/// Value used for the consistency score when the analyzer reply is unusable.
pub const NEUTRAL_CONSISTENCY: f64 = 6.0;

#[derive(Debug, Error)]
pub enum DebateError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Prag(#[from] PragError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("critic reply unusable in round {round}: {message}")]
    Critic { round: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebateSettings {
    pub max_rounds: usize,
    pub switched_max_rounds: usize,
    /// Plateau fires when two consecutive reflection deltas fall below this.
    pub plateau_delta: f64,
    /// Novelty exhaustion fires when the last two discovery calls average below this.
    pub novelty_floor: f64,
    /// Number of recent messages shown as debate context.
    pub history_window: usize,
    pub prag: PragSettings,
}

impl Default for DebateSettings {
    fn default() -> Self {
        Self {
            max_rounds: 10,
            switched_max_rounds: 2,
            plateau_delta: 0.05,
            novelty_floor: 0.10,
            history_window: 4,
            prag: PragSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plaintiff,
    Defense,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Plaintiff, Side::Defense];

    pub fn role(self) -> RoleId {
        match self {
            Side::Plaintiff => RoleId::Plaintiff,
            Side::Defense => RoleId::Defense,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Side::Plaintiff => "Plaintiff Counsel",
            Side::Defense => "Defense Counsel",
        }
    }

    fn name(self) -> &'static str {
        match self {
            Side::Plaintiff => "Plaintiff",
            Side::Defense => "Defense",
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Plaintiff => Side::Defense,
            Side::Defense => Side::Plaintiff,
        }
    }

    fn index(self) -> usize {
        match self {
            Side::Plaintiff => 0,
            Side::Defense => 1,
        }
    }
}

/// `0.4·logic + 0.3·novelty + 0.3·rebuttal`.
pub fn reflection_total(logic: f64, novelty: f64, rebuttal: f64) -> f64 {
    0.4 * logic + 0.3 * novelty + 0.3 * rebuttal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionReport {
    pub logic: f64,
    pub novelty: f64,
    pub rebuttal: f64,
    pub total: f64,
    pub flaws: Vec<String>,
    pub discovery_need: String,
    pub refined_stance: String,
    /// The reply was unusable and midpoint scores stand in.
    pub defaulted: bool,
}

impl ReflectionReport {
    pub fn new(logic: f64, novelty: f64, rebuttal: f64) -> Self {
        Self {
            logic,
            novelty,
            rebuttal,
            total: reflection_total(logic, novelty, rebuttal),
            flaws: Vec::new(),
            discovery_need: String::new(),
            refined_stance: String::new(),
            defaulted: false,
        }
    }

    pub fn midpoint() -> Self {
        Self { defaulted: true, ..Self::new(0.5, 0.5, 0.5) }
    }

    /// Parses a self-reflection reply; scores may sit under `scores` or at top level.
    pub fn from_json(v: &Value) -> Option<Self> {
        let scores = v.get("scores").unwrap_or(v);
        let unit = |k: &str| scores.get(k).and_then(number).filter(|x| (0.0..=1.0).contains(x));
        let mut out = Self::new(unit("logic")?, unit("novelty")?, unit("rebuttal")?);
        out.flaws = strings(v.get("flaws_identified"));
        out.discovery_need = text(v.get("discovery_need"));
        out.refined_stance = text(v.get("refined_stance"));
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideScores {
    pub logic: f64,
    pub evidence: f64,
    pub rebuttal: f64,
    pub reasoning: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CriticRecommendations {
    pub plaintiff: Vec<String>,
    pub defense: Vec<String>,
    pub queries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticReport {
    pub plaintiff: SideScores,
    pub defense: SideScores,
    pub unresolved_premises: Vec<String>,
    pub recommendations: CriticRecommendations,
    pub debate_resolved: bool,
}

impl CriticReport {
    /// Parses a critic reply. Scores outside `[0, 1]` are clamped and reported.
    pub fn from_json(v: &Value) -> Result<(Self, Vec<String>), String> {
        let mut warnings = Vec::new();
        let mut side = |key: &str| -> Result<SideScores, String> {
            let s = v.get(key).ok_or_else(|| format!("missing `{key}` scores"))?;
            let mut score = |k: &str| -> Result<f64, String> {
                let x = s.get(k).and_then(number).ok_or_else(|| format!("missing `{key}.{k}`"))?;
                if !(0.0..=1.0).contains(&x) {
                    warnings.push(format!("critic {key}.{k}={x} clamped into [0, 1]"));
                }
                Ok(x.clamp(0.0, 1.0))
            };
            Ok(SideScores {
                logic: score("logic")?,
                evidence: score("evidence")?,
                rebuttal: score("rebuttal")?,
                reasoning: text(s.get("reasoning")),
            })
        };
        let plaintiff = side("plaintiff")?;
        let defense = side("defense")?;
        let rec = v.get("recommendations");
        let report = CriticReport {
            plaintiff,
            defense,
            unresolved_premises: strings(v.get("unresolved_premises")),
            recommendations: CriticRecommendations {
                plaintiff: strings(rec.and_then(|r| r.get("plaintiff"))),
                defense: strings(rec.and_then(|r| r.get("defense"))),
                queries: strings(rec.and_then(|r| r.get("queries"))),
            },
            debate_resolved: match v.get("debate_resolved") {
                Some(Value::Bool(b)) => *b,
                Some(Value::String(s)) => s.trim().eq_ignore_ascii_case("true"),
                _ => false,
            },
        };
        Ok((report, warnings))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CourtSignal {
    Wait,
    Close,
}

/// Reads the Court's completion reply: whichever of `close`/`wait` appears first.
pub fn parse_court_signal(reply: &str) -> CourtSignal {
    let lower = reply.to_lowercase();
    match (lower.find("close"), lower.find("wait")) {
        (Some(c), Some(w)) if c < w => CourtSignal::Close,
        (Some(_), None) => CourtSignal::Close,
        _ => CourtSignal::Wait,
    }
}

/// Whether a Court ruling on an expert request grants it.
pub fn parse_grant(reply: &str) -> bool {
    let head: String = reply.trim_start().chars().skip_while(|c| !c.is_alphabetic()).take(7).collect();
    head.eq_ignore_ascii_case("granted")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertTestimony {
    pub requested_by: Side,
    /// The requested expertise; on a grant it becomes the witness persona.
    pub persona: String,
    pub reasoning: String,
    pub granted: bool,
    pub ruling: String,
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryRecord {
    pub side: Side,
    pub query: PragQuery,
    pub stats: PragRoundStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateRound {
    pub index: usize,
    pub discovery: Vec<DiscoveryRecord>,
    pub plaintiff_argument: String,
    pub defense_argument: String,
    pub expert_testimony: Vec<ExpertTestimony>,
    pub plaintiff_reflection: ReflectionReport,
    pub defense_reflection: ReflectionReport,
    pub critic: CriticReport,
    pub court_signal: CourtSignal,
    /// Sum of both counsels' reflection totals.
    pub reflection_sum: f64,
    /// `|S_t - S_{t-1}|`, with `S_0 = 0`.
    pub reflection_delta: f64,
    pub warnings: Vec<String>,
}

impl DebateRound {
    pub fn reflection(&self, side: Side) -> &ReflectionReport {
        match side {
            Side::Plaintiff => &self.plaintiff_reflection,
            Side::Defense => &self.defense_reflection,
        }
    }

    pub fn argument(&self, side: Side) -> &str {
        match side {
            Side::Plaintiff => &self.plaintiff_argument,
            Side::Defense => &self.defense_argument,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReflectionPlateau,
    CriticResolution,
    NoveltyExhaustion,
    JudicialSignal,
    MaxRounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Primary,
    Switched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub claim_id: String,
    pub phase: Phase,
    pub rounds: Vec<DebateRound>,
    pub termination: Termination,
    pub round_cap: usize,
    pub final_pool_size: usize,
    pub prag_stopped: [Option<PragStopReason>; 2],
    pub configuration: DebateSettings,
}

impl DebateTranscript {
    pub fn last_round(&self) -> Option<&DebateRound> {
        self.rounds.last()
    }

    pub fn arguments(&self, side: Side) -> impl Iterator<Item = &str> {
        self.rounds.iter().map(move |r| r.argument(side))
    }

    /// Reflection sums per round.
    pub fn reflection_sums(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.reflection_sum).collect()
    }

    pub fn critic_reports(&self) -> impl Iterator<Item = &CriticReport> {
        self.rounds.iter().map(|r| &r.critic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HistoryEntry {
    speaker: String,
    text: String,
}

/// Shared collaborators for one debate.
pub struct DebateContext<'a> {
    pub claim: &'a Claim,
    pub premises: &'a PremiseSet,
    pub index: &'a CorpusIndex,
    pub embedder: &'a dyn Embedder,
    pub settings: &'a DebateSettings,
}

/// Mutable state carried across rounds of one debate.
#[derive(Debug, Clone)]
pub struct DebateState {
    pub pool: EvidencePool,
    history: Vec<HistoryEntry>,
    prag_history: [Vec<PragRoundStats>; 2],
    prag_stopped: [Option<PragStopReason>; 2],
    /// Mean novelty of every discovery call, in the order they ran.
    wall_novelty: Vec<f64>,
    rounds: Vec<DebateRound>,
}

impl DebateState {
    /// Fresh state: empty history, the given pool.
    pub fn new(pool: EvidencePool) -> Self {
        Self {
            pool,
            history: Vec::new(),
            prag_history: [Vec::new(), Vec::new()],
            prag_stopped: [None, None],
            wall_novelty: Vec::new(),
            rounds: Vec::new(),
        }
    }

    pub fn rounds(&self) -> &[DebateRound] {
        &self.rounds
    }

    pub fn discovery_novelties(&self) -> &[f64] {
        &self.wall_novelty
    }

    fn recent(&self, window: usize) -> String {
        let start = self.history.len().saturating_sub(window);
        if start == self.history.len() {
            return "No statements have been made yet.".to_string();
        }
        self.history[start..].iter().map(|h| format!("{}: {}", h.speaker, h.text)).collect::<Vec<_>>().join("\n\n")
    }

    fn say(&mut self, speaker: &str, text: &str) {
        self.history.push(HistoryEntry { speaker: speaker.to_string(), text: text.to_string() });
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn text(v: Option<&Value>) -> String {
    match v {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(other) => other.to_string(),
    }
}

fn strings(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::Array(xs)) => xs
            .iter()
            .map(|x| match x {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect(),
        Some(Value::String(s)) if !s.trim().is_empty() => vec![s.clone()],
        _ => Vec::new(),
    }
}

fn numbered(items: &[String]) -> String {
    items.iter().enumerate().map(|(i, p)| format!("{}. {p}", i + 1)).collect::<Vec<_>>().join("\n")
}

fn instruction(side: Side) -> Result<&'static str, AgentError> {
    crate::runtime::template(match side {
        Side::Plaintiff => "plaintiff_instruction",
        Side::Defense => "defense_instruction",
    })
}

fn non_empty(reply: String, what: &str, warnings: &mut Vec<String>) -> String {
    if reply.trim().is_empty() {
        let w = format!("{what} was empty");
        tracing::warn!("{w}");
        warnings.push(w);
        "(no statement offered)".to_string()
    } else {
        reply.trim().to_string()
    }
}

fn discovery_step(
    side: Side,
    state: &mut DebateState,
    ctx: &DebateContext<'_>,
    runtime: &AgentRuntime,
    round: usize,
) -> Result<Option<DiscoveryRecord>, DebateError> {
    let i = side.index();
    if state.prag_stopped[i].is_some() {
        return Ok(None);
    }
    let context = state.recent(ctx.settings.history_window);
    let prompt = render_prompt("prag_gap_proposal", &[("job_title", side.title()), ("debate_context", &context)])?;
    let mut gap = runtime.ask(side.role(), "prag_gap_proposal", &prompt)?.trim().to_string();
    if gap.is_empty() {
        gap = ctx.claim.text.clone();
    }
    let need = state.rounds.last().map(|r| r.reflection(side).discovery_need.clone()).unwrap_or_default();
    let query = build_query(&context, &gap, &need, runtime)?;
    let dctx = DiscoveryContext {
        claim: ctx.claim,
        index: ctx.index,
        embedder: ctx.embedder,
        runtime,
        settings: &ctx.settings.prag,
    };
    let previous = state.prag_history[i].last();
    let (_, mut stats) = retrieve_progressive(&query, &mut state.pool, &dctx, round, previous)?;
    state.wall_novelty.push(stats.mean_novelty);
    state.prag_history[i].push(stats.clone());
    let stop = should_stop(&state.prag_history[i], &ctx.settings.prag);
    stats.stop_reason = stop;
    if let Some(last) = state.prag_history[i].last_mut() {
        last.stop_reason = stop;
    }
    state.prag_stopped[i] = stop;
    Ok(Some(DiscoveryRecord { side, query, stats }))
}

fn argument_step(
    side: Side,
    state: &mut DebateState,
    ctx: &DebateContext<'_>,
    runtime: &AgentRuntime,
    warnings: &mut Vec<String>,
) -> Result<String, DebateError> {
    let evidence = state.pool.render_for_counsel();
    let history = state.recent(ctx.settings.history_window);
    let prompt = render_prompt(
        "argument_turn",
        &[
            ("claim_text", &ctx.claim.text),
            ("role_title", side.title()),
            ("instruction", instruction(side)?),
            ("evidence_text", &evidence),
            ("history_text", &history),
        ],
    )?;
    let reply = runtime.ask(side.role(), "argument", &prompt)?;
    let argument = non_empty(reply, &format!("{} argument", side.title()), warnings);
    state.say(side.title(), &argument);
    Ok(argument)
}

fn expert_step(
    side: Side,
    state: &mut DebateState,
    ctx: &DebateContext<'_>,
    runtime: &AgentRuntime,
) -> Result<Option<ExpertTestimony>, DebateError> {
    let history = state.recent(ctx.settings.history_window);
    let prompt = render_prompt("expert_request", &[("history_summary", &history)])?;
    let reply = runtime.ask(side.role(), "expert_request", &prompt)?;
    let request = crate::runtime::extract_json(&reply).ok();
    let persona = text(request.as_ref().and_then(|v| v.get("expert_type"))).trim().to_string();
    if persona.is_empty() || persona.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    let reasoning = text(request.as_ref().and_then(|v| v.get("reasoning")));
    let prompt = render_prompt(
        "court_expert_admissibility",
        &[("requester", side.title()), ("expert_type", &persona), ("reasoning", &reasoning)],
    )?;
    let ruling = runtime.ask(RoleId::Court, "expert_admissibility", &prompt)?;
    let granted = parse_grant(&ruling);
    let mut testimony = ExpertTestimony {
        requested_by: side,
        persona: persona.clone(),
        reasoning: reasoning.clone(),
        granted,
        ruling: ruling.trim().to_string(),
        text: None,
    };
    if granted {
        let system = render_prompt("expert_system", &[("expert_type", &persona)])?;
        let title = format!("Expert Witness ({persona})");
        let instruction =
            render_prompt("expert_instruction", &[("job_title", &persona), ("expertise_list", &reasoning)])?;
        let evidence = state.pool.render_for_counsel();
        let prompt = render_prompt(
            "argument_turn",
            &[
                ("claim_text", &ctx.claim.text),
                ("role_title", &title),
                ("instruction", &instruction),
                ("evidence_text", &evidence),
                ("history_text", &history),
            ],
        )?;
        let said = runtime.ask_as(RoleId::Expert, "expert_testimony", &system, &prompt)?.trim().to_string();
        state.say(&title, &said);
        testimony.text = Some(said);
    }
    Ok(Some(testimony))
}

fn reflection_step(
    side: Side,
    round: usize,
    state: &DebateState,
    ctx: &DebateContext<'_>,
    runtime: &AgentRuntime,
    current: (&str, &str),
    warnings: &mut Vec<String>,
) -> Result<ReflectionReport, DebateError> {
    let collect = |s: Side, now: &str| -> String {
        let mut all: Vec<String> = state.rounds.iter().map(|r| r.argument(s).to_string()).collect();
        all.push(now.to_string());
        all.iter().enumerate().map(|(i, a)| format!("[Phase {}] {a}", i + 1)).collect::<Vec<_>>().join("\n\n")
    };
    let (mine_now, theirs_now) = match side {
        Side::Plaintiff => current,
        Side::Defense => (current.1, current.0),
    };
    let opp = side.opposite();
    let round_s = round.to_string();
    let prompt = render_prompt(
        "self_reflection",
        &[
            ("job_title", side.title()),
            ("side", side.name()),
            ("round_num", &round_s),
            ("claim", &ctx.claim.text),
            ("my_args", &collect(side, mine_now)),
            ("opp_side_upper", &opp.name().to_uppercase()),
            ("opponent_args", &collect(opp, theirs_now)),
            ("opp_side", &opp.name().to_lowercase()),
        ],
    )?;
    let parsed = match runtime.ask_json(side.role(), "self_reflection", &prompt) {
        Ok(v) => ReflectionReport::from_json(&v),
        Err(AgentError::MalformedReply { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(parsed.unwrap_or_else(|| {
        let w = format!("{} reflection unusable; midpoint scores used", side.title());
        tracing::warn!("{w}");
        warnings.push(w);
        ReflectionReport::midpoint()
    }))
}

/// Runs one full round against `state`, appending it to the state's record.
pub fn run_round(
    state: &mut DebateState,
    ctx: &DebateContext<'_>,
    runtime: &AgentRuntime,
) -> Result<DebateRound, DebateError> {
    let index = state.rounds.len() + 1;
    let mut warnings = Vec::new();
    let mut discovery = Vec::new();
    for side in Side::BOTH {
        if let Some(rec) = discovery_step(side, state, ctx, runtime, index)? {
            if rec.query.refinement_fallback {
                warnings.push(format!("{} discovery: Court refinement empty, formulated query used", side.title()));
            }
            discovery.push(rec);
        }
    }

    let plaintiff_argument = argument_step(Side::Plaintiff, state, ctx, runtime, &mut warnings)?;
    let defense_argument = argument_step(Side::Defense, state, ctx, runtime, &mut warnings)?;

    let mut expert_testimony = Vec::new();
    for side in Side::BOTH {
        if let Some(t) = expert_step(side, state, ctx, runtime)? {
            expert_testimony.push(t);
        }
    }

    let current = (plaintiff_argument.as_str(), defense_argument.as_str());
    let plaintiff_reflection = reflection_step(Side::Plaintiff, index, state, ctx, runtime, current, &mut warnings)?;
    let defense_reflection = reflection_step(Side::Defense, index, state, ctx, runtime, current, &mut warnings)?;

    let round_summary = format!("Plaintiff Counsel: {plaintiff_argument}\n\nDefense Counsel: {defense_argument}");
    let round_s = index.to_string();
    let prompt = render_prompt(
        "critic_round",
        &[
            ("claim", &ctx.claim.text),
            ("round_num", &round_s),
            ("premises", &numbered(&ctx.premises.premises)),
            ("history_summary", &round_summary),
        ],
    )?;
    let critic_value = runtime.ask_json(RoleId::Critic, "critic", &prompt).map_err(|e| match e {
        AgentError::MalformedReply { .. } => DebateError::Critic { round: index, message: "unparseable reply".into() },
        other => other.into(),
    })?;
    let (critic, critic_warnings) =
        CriticReport::from_json(&critic_value).map_err(|message| DebateError::Critic { round: index, message })?;
    warnings.extend(critic_warnings);

    let summary = state.recent(ctx.settings.history_window);
    let prompt = render_prompt("court_completion_check", &[("history_summary", &summary)])?;
    let court_signal = parse_court_signal(&runtime.ask(RoleId::Court, "completion_check", &prompt)?);

    let reflection_sum = plaintiff_reflection.total + defense_reflection.total;
    let previous = state.rounds.last().map_or(0.0, |r| r.reflection_sum);
    let round = DebateRound {
        index,
        discovery,
        plaintiff_argument,
        defense_argument,
        expert_testimony,
        plaintiff_reflection,
        defense_reflection,
        critic,
        court_signal,
        reflection_sum,
        reflection_delta: (reflection_sum - previous).abs(),
        warnings,
    };
    state.rounds.push(round.clone());
    Ok(round)
}

/// True when the last two of `deltas` are both below `threshold`.
pub fn plateau(deltas: &[f64], threshold: f64) -> bool {
    deltas.len() >= 2 && deltas[deltas.len() - 2..].iter().all(|d| *d < threshold)
}

/// First termination condition met after the latest round, in fixed order:
/// reflection plateau, critic resolution, novelty exhaustion, judicial
/// signal, round cap.
pub fn check_termination(
    rounds: &[DebateRound],
    discovery_novelties: &[f64],
    settings: &DebateSettings,
    round_cap: usize,
) -> Option<Termination> {
    let last = rounds.last()?;
    // the first round's delta is measured against an empty baseline
    let deltas: Vec<f64> = rounds.iter().skip(1).map(|r| r.reflection_delta).collect();
    if plateau(&deltas, settings.plateau_delta) {
        return Some(Termination::ReflectionPlateau);
    }
    if last.critic.debate_resolved {
        return Some(Termination::CriticResolution);
    }
    if discovery_novelties.len() >= 2 {
        let tail = &discovery_novelties[discovery_novelties.len() - 2..];
        if (tail[0] + tail[1]) / 2.0 < settings.novelty_floor {
            return Some(Termination::NoveltyExhaustion);
        }
    }
    if last.court_signal == CourtSignal::Close {
        return Some(Termination::JudicialSignal);
    }
    if rounds.len() >= round_cap {
        return Some(Termination::MaxRounds);
    }
    None
}

/// Runs rounds until a termination condition fires.
pub fn run_debate(
    mut state: DebateState,
    ctx: &DebateContext<'_>,
    runtime: &AgentRuntime,
    phase: Phase,
    round_cap: usize,
) -> Result<DebateTranscript, DebateError> {
    let round_cap = round_cap.max(1);
    let termination = loop {
        run_round(&mut state, ctx, runtime)?;
        if let Some(t) = check_termination(&state.rounds, &state.wall_novelty, ctx.settings, round_cap) {
            break t;
        }
    };
    tracing::info!(claim = %ctx.claim.claim_id, ?phase, rounds = state.rounds.len(), ?termination, "debate finished");
    Ok(DebateTranscript {
        claim_id: ctx.claim.claim_id.clone(),
        phase,
        final_pool_size: state.pool.len(),
        rounds: state.rounds,
        termination,
        round_cap,
        prag_stopped: state.prag_stopped,
        configuration: ctx.settings.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleSwitchResult {
    pub switched_transcript: DebateTranscript,
    pub agent_a_consistency: Option<f64>,
    pub agent_b_consistency: Option<f64>,
    /// Overall consistency on `[0, 10]`.
    pub overall_consistency: f64,
    pub contradictions: String,
    pub analysis_raw: Option<String>,
    pub warnings: Vec<String>,
}

fn transcript_for_analysis(t: &DebateTranscript, plaintiff_agent: &str, defense_agent: &str) -> String {
    t.rounds
        .iter()
        .map(|r| {
            format!(
                "Round {}\nPlaintiff Counsel ({plaintiff_agent}): {}\nDefense Counsel ({defense_agent}): {}",
                r.index, r.plaintiff_argument, r.defense_argument
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Consistency scores read from the analyzer reply: stated overall if present
/// and in range, else the mean of the per-agent scores.
pub fn consistency_from_json(v: &Value) -> Option<(Option<f64>, Option<f64>, f64)> {
    let score = |k: &str| v.get(k).and_then(number).filter(|x| (0.0..=10.0).contains(x));
    let a = score("agent_a_consistency");
    let b = score("agent_b_consistency");
    let overall = match (score("overall_consistency"), a, b) {
        (Some(o), _, _) => o,
        (None, Some(a), Some(b)) => (a + b) / 2.0,
        _ => return None,
    };
    Some((a, b, overall))
}

/// Re-runs the debate with counsel models swapped from the original
/// pre-debate pool and fresh history, then scores cross-role consistency.
pub fn run_role_switch(
    original_pool: &EvidencePool,
    primary: &DebateTranscript,
    ctx: &DebateContext<'_>,
    runtime: &AgentRuntime,
) -> Result<RoleSwitchResult, DebateError> {
    let swapped = runtime.swapped_counsels()?;
    let state = DebateState::new(original_pool.clone());
    let switched = run_debate(state, ctx, &swapped, Phase::Switched, ctx.settings.switched_max_rounds)?;

    let original = transcript_for_analysis(primary, "Agent A", "Agent B");
    let switched_text = transcript_for_analysis(&switched, "Agent B", "Agent A");
    let prompt = render_prompt(
        "consistency_analysis",
        &[("claim", &ctx.claim.text), ("original_arguments", &original), ("switched_arguments", &switched_text)],
    )?;
    let mut warnings = Vec::new();
    let (value, raw) = match runtime.ask_json(RoleId::Consistency, "consistency_analysis", &prompt) {
        Ok(v) => (Some(v), None),
        Err(AgentError::MalformedReply { raw }) => (None, Some(raw)),
        Err(e) => return Err(e.into()),
    };
    let parsed = value.as_ref().and_then(consistency_from_json);
    let (a, b, overall) = parsed.unwrap_or_else(|| {
        let w = format!("consistency analysis unusable; overall set to {NEUTRAL_CONSISTENCY}");
        tracing::warn!("{w}");
        warnings.push(w);
        (None, None, NEUTRAL_CONSISTENCY)
    });
    Ok(RoleSwitchResult {
        switched_transcript: switched,
        agent_a_consistency: a,
        agent_b_consistency: b,
        overall_consistency: overall,
        contradictions: text(value.as_ref().and_then(|v| v.get("contradictions"))),
        analysis_raw: raw,
        warnings,
    })
}
