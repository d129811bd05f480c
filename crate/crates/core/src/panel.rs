//! Three-judge panel: evaluation, majority vote and calibrated confidence.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::arbitration::EvidencePool;
use crate::debate::{DebateTranscript, RoleSwitchResult, Side};
use crate::mining::{Claim, Label};
use crate::runtime::{extract_json, render_prompt, AgentError, AgentRuntime, RoleId};

/// Scores given to a judge whose reply could not be parsed at all.
const FALLBACK_SCORE: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum JudgeId {
    J1,
    J2,
    J3,
}

impl JudgeId {
    pub const ALL: [JudgeId; 3] = [JudgeId::J1, JudgeId::J2, JudgeId::J3];

    pub fn role(self) -> RoleId {
        match self {
            JudgeId::J1 => RoleId::Judge1,
            JudgeId::J2 => RoleId::Judge2,
            JudgeId::J3 => RoleId::Judge3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Supported,
    NotSupported,
    Inconclusive,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::Supported, Verdict::NotSupported, Verdict::Inconclusive];

    /// Accepts any case, with spaces, underscores or hyphens between words.
    pub fn parse(text: &str) -> Option<Verdict> {
        let norm: String = text
            .trim()
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_uppercase()
            .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
            .filter(|w| !w.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        match norm.as_str() {
            "SUPPORTED" => Some(Verdict::Supported),
            "NOT SUPPORTED" => Some(Verdict::NotSupported),
            "INCONCLUSIVE" => Some(Verdict::Inconclusive),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Supported => "SUPPORTED",
            Verdict::NotSupported => "NOT_SUPPORTED",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

/// Burden of refutation: only an explicit NOT_SUPPORTED refutes.
pub fn map_label(verdict: Verdict) -> Label {
    match verdict {
        Verdict::NotSupported => Label::Refute,
        Verdict::Supported | Verdict::Inconclusive => Label::Support,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeOpinion {
    pub judge_id: JudgeId,
    pub evidence_strength: u8,
    pub argument_validity: u8,
    pub scientific_reliability: u8,
    pub verdict: Verdict,
    pub claim_summary: String,
    pub reasoning: String,
    /// False when neither the reply nor its repair could be parsed.
    pub valid: bool,
    pub warnings: Vec<String>,
}

impl JudgeOpinion {
    pub fn new(judge_id: JudgeId, verdict: Verdict, ev: u8, val: u8, rel: u8) -> Self {
        Self {
            judge_id,
            evidence_strength: ev,
            argument_validity: val,
            scientific_reliability: rel,
            verdict,
            claim_summary: String::new(),
            reasoning: String::new(),
            valid: true,
            warnings: Vec::new(),
        }
    }
}

/// The case file handed to each judge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeBrief {
    pub claim: String,
    pub proponent_args: String,
    pub opponent_args: String,
    pub evidence_summary: String,
    pub role_switch_summary: String,
    pub prag_metrics: String,
    pub critic_evaluations: String,
    pub reflection_history: String,
}

fn join_args(t: &DebateTranscript, side: Side) -> String {
    t.arguments(side).enumerate().map(|(i, a)| format!("[Phase {}] {a}", i + 1)).collect::<Vec<_>>().join("\n\n")
}

impl JudgeBrief {
    /// Assembles the brief from both debates and the pre-debate pool.
    pub fn compose(claim: &Claim, pool: &EvidencePool, primary: &DebateTranscript, switch: &RoleSwitchResult) -> Self {
        let mut evidence = pool.render_for_judges();
        let testimony: Vec<String> = primary
            .rounds
            .iter()
            .flat_map(|r| r.expert_testimony.iter().filter_map(move |t| t.text.as_ref().map(|x| (r.index, t, x))))
            .map(|(i, t, x)| format!("[Phase {i}] Expert Witness ({}): {x}", t.persona))
            .collect();
        if !testimony.is_empty() {
            evidence.push_str("\n\nEXPERT TESTIMONY:\n");
            evidence.push_str(&testimony.join("\n\n"));
        }

        let s = &switch.switched_transcript;
        let fmt_opt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}"));
        let role_switch_summary = format!(
            "Switched debate: {} round(s), ended by {:?}.\nAgent A consistency: {}/10\nAgent B consistency: {}/10\nOverall consistency: {:.1}/10\nContradictions: {}",
            s.rounds.len(),
            s.termination,
            fmt_opt(switch.agent_a_consistency),
            fmt_opt(switch.agent_b_consistency),
            switch.overall_consistency,
            if switch.contradictions.is_empty() { "none reported" } else { &switch.contradictions },
        );

        let prag_metrics = primary
            .rounds
            .iter()
            .flat_map(|r| r.discovery.iter())
            .map(|d| {
                format!(
                    "Phase {} {:?}: query \"{}\" -> {} candidate(s), {} admitted, mean novelty {:.3}, redundancy {:.2}",
                    d.stats.round_index,
                    d.side,
                    d.query.refined,
                    d.stats.candidates,
                    d.stats.admitted,
                    d.stats.mean_novelty,
                    d.stats.redundancy_ratio
                )
            })
            .collect::<Vec<_>>();
        let critic_evaluations = primary
            .rounds
            .iter()
            .map(|r| {
                let c = &r.critic;
                format!(
                    "Phase {}: plaintiff (logic {:.2}, evidence {:.2}, rebuttal {:.2}); defense (logic {:.2}, evidence {:.2}, rebuttal {:.2}); unresolved: {}",
                    r.index,
                    c.plaintiff.logic,
                    c.plaintiff.evidence,
                    c.plaintiff.rebuttal,
                    c.defense.logic,
                    c.defense.evidence,
                    c.defense.rebuttal,
                    if c.unresolved_premises.is_empty() { "none".to_string() } else { c.unresolved_premises.join("; ") }
                )
            })
            .collect::<Vec<_>>();
        let reflection_history = primary
            .rounds
            .iter()
            .map(|r| {
                format!(
                    "Phase {}: plaintiff total {:.3}, defense total {:.3}, combined {:.3} (change {:.3})",
                    r.index,
                    r.plaintiff_reflection.total,
                    r.defense_reflection.total,
                    r.reflection_sum,
                    r.reflection_delta
                )
            })
            .collect::<Vec<_>>();
        let or_none = |v: Vec<String>| if v.is_empty() { "none".to_string() } else { v.join("\n") };
        Self {
            claim: claim.text.clone(),
            proponent_args: join_args(primary, Side::Plaintiff),
            opponent_args: join_args(primary, Side::Defense),
            evidence_summary: evidence,
            role_switch_summary,
            prag_metrics: or_none(prag_metrics),
            critic_evaluations: or_none(critic_evaluations),
            reflection_history: or_none(reflection_history),
        }
    }

    pub fn render(&self) -> Result<String, AgentError> {
        render_prompt(
            "judge_evaluation",
            &[
                ("claim", &self.claim),
                ("proponent_args", &self.proponent_args),
                ("opponent_args", &self.opponent_args),
                ("evidence_summary", &self.evidence_summary),
                ("role_switch_summary", &self.role_switch_summary),
                ("prag_metrics", &self.prag_metrics),
                ("critic_evaluations", &self.critic_evaluations),
                ("reflection_history", &self.reflection_history),
            ],
        )
    }
}

struct ParsedOpinion {
    scores: Option<(u8, u8, u8)>,
    verdict: Option<Verdict>,
    claim_summary: String,
    reasoning: String,
}

fn score_0_10(v: &Value, key: &str) -> Option<u8> {
    let x = match v.get(key)? {
        Value::Number(n) => n.as_f64()?,
        Value::String(s) => s.trim().parse().ok()?,
        _ => return None,
    };
    let r = x.round();
    (0.0..=10.0).contains(&r).then_some(r as u8)
}

fn parse_opinion(v: &Value) -> ParsedOpinion {
    let scores = match (
        score_0_10(v, "evidence_strength"),
        score_0_10(v, "argument_validity"),
        score_0_10(v, "scientific_reliability"),
    ) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let s = |k: &str| v.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
    ParsedOpinion {
        scores,
        verdict: v.get("verdict").and_then(Value::as_str).and_then(Verdict::parse),
        claim_summary: s("claim_summary"),
        reasoning: s("reasoning"),
    }
}

/// One judge's evaluation. A reply missing scores or a valid verdict gets one
/// repair request; a verdict still invalid afterwards becomes INCONCLUSIVE,
/// and a reply never yielding scores becomes INCONCLUSIVE (5, 5, 5), invalid.
pub fn judge_evaluate(brief: &JudgeBrief, judge: JudgeId, runtime: &AgentRuntime) -> Result<JudgeOpinion, AgentError> {
    let role = judge.role();
    let prompt = brief.render()?;
    let (system, user) = runtime.turns_for(role, &prompt)?;
    let first_raw = runtime.invoke(role, "judicial_evaluation", &[system.clone(), user.clone()])?.text;
    let first = extract_json(&first_raw).ok().map(|v| parse_opinion(&v));
    let complete = |p: &ParsedOpinion| p.scores.is_some() && p.verdict.is_some();

    let chosen = match first {
        Some(p) if complete(&p) => Some(p),
        first => {
            tracing::warn!(%role, "judge reply incomplete, requesting repair");
            let second = match runtime.repair_json(role, "judicial_evaluation", system, user, &first_raw) {
                Ok(v) => Some(parse_opinion(&v)),
                Err(AgentError::MalformedReply { .. }) => None,
                Err(e) => return Err(e),
            };
            match (first, second) {
                (_, Some(s)) if complete(&s) => Some(s),
                (Some(f), Some(s)) if s.scores.is_none() && f.scores.is_some() => Some(f),
                (_, Some(s)) => Some(s),
                (f, None) => f,
            }
        }
    };

    let mut opinion = JudgeOpinion::new(judge, Verdict::Inconclusive, FALLBACK_SCORE, FALLBACK_SCORE, FALLBACK_SCORE);
    match chosen {
        Some(p) if p.scores.is_some() => {
            let (ev, val, rel) = p.scores.expect("checked");
            opinion.evidence_strength = ev;
            opinion.argument_validity = val;
            opinion.scientific_reliability = rel;
            opinion.claim_summary = p.claim_summary;
            opinion.reasoning = p.reasoning;
            match p.verdict {
                Some(v) => opinion.verdict = v,
                None => opinion.warnings.push("verdict invalid after repair; recorded as INCONCLUSIVE".into()),
            }
        }
        _ => {
            opinion.valid = false;
            opinion.warnings.push("judge reply unparseable after repair; INCONCLUSIVE (5, 5, 5)".into());
        }
    }
    for w in &opinion.warnings {
        tracing::warn!(?judge, "{w}");
    }
    Ok(opinion)
}

/// Runs the three judges in slot order.
pub fn convene(brief: &JudgeBrief, runtime: &AgentRuntime) -> Result<[JudgeOpinion; 3], AgentError> {
    Ok([
        judge_evaluate(brief, JudgeId::J1, runtime)?,
        judge_evaluate(brief, JudgeId::J2, runtime)?,
        judge_evaluate(brief, JudgeId::J3, runtime)?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub verdict: Verdict,
    pub winning_votes: usize,
    pub sigma: f64,
    pub tie_broken: bool,
}

/// Majority of three; a three-way split defers to the first judge.
pub fn majority_vote(verdicts: [Verdict; 3]) -> VoteOutcome {
    for candidate in Verdict::ALL {
        let votes = verdicts.iter().filter(|v| **v == candidate).count();
        if votes >= 2 {
            return VoteOutcome {
                verdict: candidate,
                winning_votes: votes,
                sigma: votes as f64 / 3.0,
                tie_broken: false,
            };
        }
    }
    VoteOutcome { verdict: verdicts[0], winning_votes: 1, sigma: 1.0 / 3.0, tie_broken: true }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfidenceWeights {
    pub w_consensus: f64,
    pub w_quality: f64,
    pub quality_divisor: f64,
    pub ref_floor: f64,
    pub min_conf_majority: f64,
}

impl Default for ConfidenceWeights {
    fn default() -> Self {
        Self { w_consensus: 0.8, w_quality: 0.3, quality_divisor: 30.0, ref_floor: -0.15, min_conf_majority: 0.10 }
    }
}

impl ConfidenceWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("w_consensus", self.w_consensus),
            ("w_quality", self.w_quality),
            ("quality_divisor", self.quality_divisor),
            ("min_conf_majority", self.min_conf_majority),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.ref_floor.is_finite() && self.ref_floor <= 0.0) {
            return Err(format!("ref_floor must be <= 0, got {}", self.ref_floor));
        }
        Ok(())
    }
}

/// Mean judge quality on `[0, 1]`: sum of the three per-metric means over the divisor.
pub fn quality(opinions: &[JudgeOpinion], divisor: f64) -> f64 {
    if opinions.is_empty() {
        return 0.0;
    }
    let n = opinions.len() as f64;
    let mean = |f: fn(&JudgeOpinion) -> u8| opinions.iter().map(|o| f64::from(f(o))).sum::<f64>() / n;
    (mean(|o| o.evidence_strength) + mean(|o| o.argument_validity) + mean(|o| o.scientific_reliability)) / divisor
}

/// `(c_base, q)` with `c_base = w_consensus·σ + w_quality·q`; may exceed 1 before clamping.
pub fn base_confidence(sigma: f64, opinions: &[JudgeOpinion], weights: &ConfidenceWeights) -> (f64, f64) {
    let q = quality(opinions, weights.quality_divisor);
    (base_from_quality(sigma, q, weights), q)
}

pub fn base_from_quality(sigma: f64, q: f64, weights: &ConfidenceWeights) -> f64 {
    weights.w_consensus * sigma + weights.w_quality * q
}

/// `max(floor, (s_ref - 0.5)·0.6)`.
pub fn reflection_adjustment(s_ref: f64, floor: f64) -> f64 {
    ((s_ref - 0.5) * 0.6).max(floor)
}

/// Role-switch consistency bonus: +0.10 at γ ≥ 7, 0 on `[5, 7)`, −0.05 below 5.
pub fn roleswitch_adjustment(gamma: f64) -> f64 {
    if gamma >= 7.0 {
        0.10
    } else if gamma >= 5.0 {
        0.0
    } else {
        -0.05
    }
}

/// Clamps the adjusted confidence into `[0, 1]`, then floors it when at
/// least two of three judges agreed.
pub fn final_confidence(c_base: f64, delta_rs: f64, delta_ref: f64, sigma: f64, weights: &ConfidenceWeights) -> f64 {
    let c = (c_base + delta_rs + delta_ref).clamp(0.0, 1.0);
    if sigma >= 2.0 / 3.0 - 1e-12 {
        c.max(weights.min_conf_majority)
    } else {
        c
    }
}

/// Every term of the confidence computation, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBreakdown {
    pub sigma: f64,
    pub q: f64,
    pub c_base: f64,
    pub gamma: f64,
    pub delta_rs: f64,
    pub winning_side: Side,
    pub s_ref: f64,
    pub delta_ref: f64,
    pub c_final: f64,
    /// Per-round proxy: `c_final` recomputed with each round's mean reflection as `s_ref`.
    pub round_confidences: Vec<f64>,
}

/// Combines the vote, judge scores, role-switch consistency and the winning
/// side's final reflection into the calibrated confidence.
pub fn score_confidence(
    vote: &VoteOutcome,
    opinions: &[JudgeOpinion],
    primary: &DebateTranscript,
    switch: &RoleSwitchResult,
    weights: &ConfidenceWeights,
) -> ConfidenceBreakdown {
    let (c_base, q) = base_confidence(vote.sigma, opinions, weights);
    let gamma = switch.overall_consistency;
    let delta_rs = roleswitch_adjustment(gamma);
    let winning_side = match map_label(vote.verdict) {
        Label::Support => Side::Plaintiff,
        Label::Refute => Side::Defense,
    };
    let s_ref = primary.last_round().map_or(0.5, |r| r.reflection(winning_side).total);
    let delta_ref = reflection_adjustment(s_ref, weights.ref_floor);
    let c_final = final_confidence(c_base, delta_rs, delta_ref, vote.sigma, weights);
    let round_confidences = primary
        .rounds
        .iter()
        .chain(&switch.switched_transcript.rounds)
        .map(|r| {
            let d = reflection_adjustment(r.reflection_sum / 2.0, weights.ref_floor);
            final_confidence(c_base, delta_rs, d, vote.sigma, weights)
        })
        .collect();
    ConfidenceBreakdown {
        sigma: vote.sigma,
        q,
        c_base,
        gamma,
        delta_rs,
        winning_side,
        s_ref,
        delta_ref,
        c_final,
        round_confidences,
    }
}
