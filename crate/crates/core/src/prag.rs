//! Progressive retrieval during the debate: query construction, novelty-gated
//! admission and adaptive stopping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbitration::{arbitrate, evidence_item, EvidenceOrigin, EvidencePool, EvidenceStatus};
use crate::corpus::{max_similarity, CorpusError, CorpusIndex, Embedder};
use crate::mining::Claim;
use crate::runtime::{render_prompt, AgentError, AgentRuntime, RoleId};

/// Slack when comparing a novelty against the admission threshold, so a
/// candidate sitting exactly on it survives rounding in `1 - cos`.
const THRESHOLD_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PragError {
    #[error("evidence gap must not be empty")]
    EmptyGap,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Retrieval and stopping knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PragSettings {
    pub per_round_k: usize,
    /// Minimum novelty for a candidate to enter the pool.
    pub novelty_tau: f64,
    /// A candidate whose best cosine against the pool exceeds this is redundant.
    pub redundancy_similarity: f64,
    /// Stop once the redundant fraction of a round's candidates exceeds this.
    pub redundancy_ratio_max: f64,
    /// Stop once the round-over-round relevance gain falls below this.
    pub min_relevance_gain: f64,
    pub max_iterations: usize,
}

impl Default for PragSettings {
    fn default() -> Self {
        Self {
            per_round_k: 3,
            novelty_tau: 0.20,
            redundancy_similarity: 0.85,
            redundancy_ratio_max: 0.70,
            min_relevance_gain: 0.05,
            max_iterations: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PragQuery {
    pub debate_context: String,
    pub agent_gap: String,
    pub reflection_need: String,
    pub agent_request: String,
    pub formulated: String,
    pub refined: String,
    /// The Court's refinement was empty and the formulated query was used.
    pub refinement_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PragStopReason {
    Redundancy,
    DiminishingReturns,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PragRoundStats {
    pub round_index: usize,
    pub candidates: usize,
    /// Candidates that passed the novelty filter and entered the pool.
    pub admitted: usize,
    pub mean_novelty: f64,
    pub redundancy_ratio: f64,
    /// Mean retrieval similarity of this call's hits.
    pub mean_similarity: f64,
    /// Change in mean similarity against the same counsel's previous call; absent on the first.
    pub relevance_gain: Option<f64>,
    pub stop_reason: Option<PragStopReason>,
    pub admitted_doc_ids: Vec<String>,
    pub novelties: Vec<f64>,
}

/// `gap`, with `". Focus also on: {need}"` appended when a need is given.
pub fn agent_request(gap: &str, need: &str) -> String {
    let need = need.trim();
    if need.is_empty() {
        gap.to_string()
    } else {
        format!("{gap}. Focus also on: {need}")
    }
}

fn clean_query(reply: &str) -> String {
    let t = reply.trim();
    let t = t.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(t);
    t.trim().to_string()
}

/// Builds a discovery query from the debate context, the counsel's stated gap
/// and its reflection need, via the formulator and Court refinement.
pub fn build_query(context: &str, gap: &str, need: &str, runtime: &AgentRuntime) -> Result<PragQuery, PragError> {
    let gap = gap.trim();
    if gap.is_empty() {
        return Err(PragError::EmptyGap);
    }
    let request = agent_request(gap, need);
    let prompt = render_prompt("prag_formulation", &[("debate_context", context), ("agent_request", &request)])?;
    let mut formulated = clean_query(&runtime.ask(RoleId::PragFormulator, "prag_formulation", &prompt)?);
    if formulated.is_empty() {
        tracing::warn!("formulator returned an empty query; using the agent request");
        formulated = request.clone();
    }
    let prompt =
        render_prompt("court_query_refinement", &[("original_query", &formulated), ("debate_context", context)])?;
    let refined = clean_query(&runtime.ask(RoleId::Court, "court_query_refinement", &prompt)?);
    let refinement_fallback = refined.is_empty();
    if refinement_fallback {
        tracing::warn!("Court refinement was empty; using the formulated query");
    }
    Ok(PragQuery {
        debate_context: context.to_string(),
        agent_gap: gap.to_string(),
        reflection_need: need.trim().to_string(),
        agent_request: request,
        refined: if refinement_fallback { formulated.clone() } else { refined },
        formulated,
        refinement_fallback,
    })
}

/// Where a discovery call runs: the shared corpus plus the scoring context.
pub struct DiscoveryContext<'a> {
    pub claim: &'a Claim,
    pub index: &'a CorpusIndex,
    pub embedder: &'a dyn Embedder,
    pub runtime: &'a AgentRuntime,
    pub settings: &'a PragSettings,
}

/// Retrieves for `query`, admits novel candidates into `pool` and reports the
/// call's statistics. Novelty is measured against the pool as it stood when
/// the call began (admitted and disputed items). Novel candidates still get an
/// arbiter ruling; those that fall short of admission are kept as disputed.
pub fn retrieve_progressive(
    query: &PragQuery,
    pool: &mut EvidencePool,
    ctx: &DiscoveryContext<'_>,
    round_index: usize,
    previous: Option<&PragRoundStats>,
) -> Result<(Vec<String>, PragRoundStats), PragError> {
    let settings = ctx.settings;
    let q = ctx.embedder.embed(&query.refined)?;
    let hits = ctx.index.search(&q, settings.per_round_k)?;
    let seen = pool.seen_embeddings();

    let mut novelties = Vec::with_capacity(hits.len());
    let mut redundant = 0usize;
    let mut to_admit = Vec::new();
    for hit in &hits {
        let best = max_similarity(hit.embedding, &seen)?;
        let novelty = best.map_or(1.0, |m| (1.0 - m).clamp(0.0, 1.0));
        if best.is_some_and(|m| m > settings.redundancy_similarity) {
            redundant += 1;
        }
        if novelty + THRESHOLD_EPS >= settings.novelty_tau && !pool.contains(hit.doc_id) {
            to_admit.push(hit.position);
        }
        novelties.push(novelty);
    }

    let mut admitted_doc_ids = Vec::with_capacity(to_admit.len());
    for position in to_admit {
        let record = &ctx.index.records()[position];
        let mut score = arbitrate(ctx.claim, record, ctx.runtime)?;
        if score.status != EvidenceStatus::Admitted {
            score.status = EvidenceStatus::Disputed;
        }
        pool.merge(evidence_item(record, ctx.index.embedding(position), &score, EvidenceOrigin::Prag));
        admitted_doc_ids.push(record.doc_id.clone());
    }

    let n = hits.len();
    let mean = |xs: &[f64]| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
    let similarities: Vec<f64> = hits.iter().map(|h| h.similarity).collect();
    let mean_similarity = mean(&similarities);
    let stats = PragRoundStats {
        round_index,
        candidates: n,
        admitted: admitted_doc_ids.len(),
        mean_novelty: mean(&novelties),
        redundancy_ratio: if n == 0 { 0.0 } else { redundant as f64 / n as f64 },
        mean_similarity,
        relevance_gain: previous.map(|p| mean_similarity - p.mean_similarity),
        stop_reason: None,
        admitted_doc_ids: admitted_doc_ids.clone(),
        novelties,
    };
    Ok((admitted_doc_ids, stats))
}

/// Whether a counsel's discovery should stop after the latest call, checking
/// redundancy, then diminishing returns, then the iteration cap.
pub fn should_stop(history: &[PragRoundStats], settings: &PragSettings) -> Option<PragStopReason> {
    let latest = history.last()?;
    if latest.redundancy_ratio > settings.redundancy_ratio_max {
        return Some(PragStopReason::Redundancy);
    }
    if latest.relevance_gain.is_some_and(|g| g < settings.min_relevance_gain) {
        return Some(PragStopReason::DiminishingReturns);
    }
    if history.len() >= settings.max_iterations {
        return Some(PragStopReason::IterationCap);
    }
    None
}
