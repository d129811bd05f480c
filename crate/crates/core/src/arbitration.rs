//! Pre-debate evidence negotiation and admissibility scoring.

use std::collections::HashMap;

use serde::{Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{CorpusError, CorpusIndex, CorpusRecord, Embedder, EmbeddingVector};
use crate::mining::{Claim, PremiseSet};
use crate::runtime::{render_prompt, AgentError, AgentRuntime, RoleId};

/// Weights strictly above this are admitted.
pub const ADMIT_ABOVE: f64 = 0.5;
/// Weights at or below this are discarded.
pub const DISCARD_AT_OR_BELOW: f64 = 0.1;
/// Default per-query top-k for initial retrieval.
pub const DEFAULT_K_INIT: usize = 5;

#[derive(Debug, Error)]
pub enum ArbitrationError {
    #[error("{name} {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceStatus {
    Admitted,
    Disputed,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceOrigin {
    PremisePool,
    ProponentPool,
    OpponentPool,
    Prag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub journal: String,
    pub year: i32,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceItem {
    pub doc_id: String,
    pub text: String,
    pub provenance: Provenance,
    #[serde(skip)]
    pub embedding: EmbeddingVector,
    pub relevance: f64,
    pub credibility: f64,
    pub weight: f64,
    pub status: EvidenceStatus,
    pub origin: EvidenceOrigin,
}

impl EvidenceItem {
    fn from_record(
        record: &CorpusRecord,
        embedding: &EmbeddingVector,
        score: &ArbiterScore,
        origin: EvidenceOrigin,
    ) -> Self {
        Self {
            doc_id: record.doc_id.clone(),
            text: record.body.clone(),
            provenance: Provenance { journal: record.journal.clone(), year: record.year, title: record.title.clone() },
            embedding: embedding.clone(),
            relevance: score.relevance,
            credibility: score.credibility,
            weight: score.weight,
            status: score.status,
            origin,
        }
    }

    fn render_line(&self) -> String {
        let flag = if self.status == EvidenceStatus::Disputed { " [DISPUTED]" } else { "" };
        format!(
            "[Source {}]{flag} (w={:.2}) {} ({}, {}): {}",
            self.doc_id, self.weight, self.provenance.title, self.provenance.journal, self.provenance.year, self.text
        )
    }
}

/// `w = relevance × credibility` and the status band it falls in.
pub fn score_admissibility(relevance: f64, credibility: f64) -> Result<(f64, EvidenceStatus), ArbitrationError> {
    for (name, value) in [("relevance", relevance), ("credibility", credibility)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(ArbitrationError::OutOfRange { name, value });
        }
    }
    let weight = relevance * credibility;
    let status = if weight > ADMIT_ABOVE {
        EvidenceStatus::Admitted
    } else if weight > DISCARD_AT_OR_BELOW {
        EvidenceStatus::Disputed
    } else {
        EvidenceStatus::Discarded
    };
    Ok((weight, status))
}

/// Debate-visible evidence, unique by doc_id, kept in first-insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvidencePool {
    items: Vec<EvidenceItem>,
    by_id: HashMap<String, usize>,
}

impl Serialize for EvidencePool {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            items: &'a [EvidenceItem],
        }
        View { items: &self.items }.serialize(s)
    }
}

impl EvidencePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[EvidenceItem] {
        &self.items
    }

    pub fn get(&self, doc_id: &str) -> Option<&EvidenceItem> {
        self.by_id.get(doc_id).map(|&i| &self.items[i])
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.by_id.contains_key(doc_id)
    }

    /// Adds `item`, or replaces an existing entry with the same doc_id when
    /// `item` carries a strictly higher weight. The entry keeps its position.
    pub fn merge(&mut self, item: EvidenceItem) {
        match self.by_id.get(&item.doc_id) {
            Some(&i) => {
                if item.weight > self.items[i].weight {
                    self.items[i] = item;
                }
            }
            None => {
                self.by_id.insert(item.doc_id.clone(), self.items.len());
                self.items.push(item);
            }
        }
    }

    pub fn count(&self, status: EvidenceStatus) -> usize {
        self.items.iter().filter(|i| i.status == status).count()
    }

    /// Admitted items by weight descending, ties by doc_id.
    pub fn admitted_ranked(&self) -> Vec<&EvidenceItem> {
        let mut out: Vec<&EvidenceItem> = self.items.iter().filter(|i| i.status == EvidenceStatus::Admitted).collect();
        out.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.doc_id.cmp(&b.doc_id)));
        out
    }

    pub fn disputed(&self) -> Vec<&EvidenceItem> {
        self.items.iter().filter(|i| i.status == EvidenceStatus::Disputed).collect()
    }

    /// Embeddings that count as already-seen content: admitted and disputed items.
    pub fn seen_embeddings(&self) -> Vec<EmbeddingVector> {
        self.items.iter().filter(|i| i.status != EvidenceStatus::Discarded).map(|i| i.embedding.clone()).collect()
    }

    /// Evidence listing shown to counsels: admitted (ranked) then disputed, flagged.
    pub fn render_for_counsel(&self) -> String {
        let lines: Vec<String> =
            self.admitted_ranked().into_iter().chain(self.disputed()).map(EvidenceItem::render_line).collect();
        if lines.is_empty() {
            "(no admitted evidence)".to_string()
        } else {
            lines.join("\n")
        }
    }

    /// Evidence listing shown to judges: admitted items only.
    pub fn render_for_judges(&self) -> String {
        let lines: Vec<String> = self.admitted_ranked().into_iter().map(EvidenceItem::render_line).collect();
        if lines.is_empty() {
            "(no admitted evidence)".to_string()
        } else {
            lines.join("\n")
        }
    }
}

/// Parsed arbiter ruling for one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ArbiterScore {
    pub relevance: f64,
    pub credibility: f64,
    pub weight: f64,
    pub status: EvidenceStatus,
    pub warning: Option<String>,
}

fn as_unit_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Asks the arbiter to rule on one record. Unusable rulings fall back to the
/// disputed midpoint `(0.5, 0.5)` with a warning.
pub fn arbitrate(claim: &Claim, record: &CorpusRecord, runtime: &AgentRuntime) -> Result<ArbiterScore, AgentError> {
    let evidence_text = format!("{} (Journal: {}, Year: {})", record.passage(), record.journal, record.year);
    let prompt = render_prompt("admissibility", &[("claim", &claim.text), ("evidence_text", &evidence_text)])?;
    let parsed = match runtime.ask_json(RoleId::Arbiter, "admissibility", &prompt) {
        Ok(v) => {
            let r = v.get("relevance").and_then(as_unit_number);
            let c = v.get("credibility").and_then(as_unit_number);
            match (r, c) {
                (Some(r), Some(c)) => score_admissibility(r, c).map(|(w, s)| (r, c, w, s)).map_err(|e| e.to_string()),
                _ => Err("ruling lacks numeric relevance/credibility".to_string()),
            }
        }
        Err(AgentError::MalformedReply { .. }) => Err("unparseable ruling".to_string()),
        Err(e) => return Err(e),
    };
    Ok(match parsed {
        Ok((relevance, credibility, weight, status)) => {
            ArbiterScore { relevance, credibility, weight, status, warning: None }
        }
        Err(reason) => {
            let warning = format!("arbiter ruling for {} unusable ({reason}); marked disputed", record.doc_id);
            tracing::warn!("{warning}");
            ArbiterScore {
                relevance: 0.5,
                credibility: 0.5,
                weight: 0.25,
                status: EvidenceStatus::Disputed,
                warning: Some(warning),
            }
        }
    })
}

/// Builds a pool item for `record` from a ruling.
pub fn evidence_item(
    record: &CorpusRecord,
    embedding: &EmbeddingVector,
    score: &ArbiterScore,
    origin: EvidenceOrigin,
) -> EvidenceItem {
    EvidenceItem::from_record(record, embedding, score, origin)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NegotiationReply {
    pub role: RoleId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub doc_id: String,
    pub origin: EvidenceOrigin,
    pub similarity: f64,
}

/// Everything produced by pre-debate negotiation.
#[derive(Debug, Clone, Serialize)]
pub struct Negotiation {
    pub pool: EvidencePool,
    pub supporting_query: String,
    pub challenging_query: String,
    pub candidates: Vec<Candidate>,
    pub replies: Vec<NegotiationReply>,
    pub warnings: Vec<String>,
}

fn retrieve(
    index: &CorpusIndex,
    embedder: &dyn Embedder,
    query: &str,
    k: usize,
    origin: EvidenceOrigin,
    out: &mut Vec<(usize, EvidenceOrigin, f64)>,
) -> Result<(), CorpusError> {
    let q = embedder.embed(query)?;
    for hit in index.search(&q, k)? {
        out.push((hit.position, origin, hit.similarity));
    }
    Ok(())
}

fn render_discovery_pool(
    index: &CorpusIndex,
    picks: &[(usize, EvidenceOrigin, f64)],
    origin: EvidenceOrigin,
) -> String {
    let lines: Vec<String> = picks
        .iter()
        .filter(|(_, o, _)| *o == origin)
        .map(|(i, _, _)| {
            let r = &index.records()[*i];
            format!("[Source {}] {} ({}, {})", r.doc_id, r.title, r.journal, r.year)
        })
        .collect();
    if lines.is_empty() {
        "(empty)".to_string()
    } else {
        lines.join("\n")
    }
}

/// Premise-grounded and stance-conditioned retrieval, counsel review and
/// arbiter scoring into the initial evidence pool.
pub fn negotiate(
    claim: &Claim,
    premises: &PremiseSet,
    index: &CorpusIndex,
    embedder: &dyn Embedder,
    runtime: &AgentRuntime,
    k_init: usize,
) -> Result<Negotiation, ArbitrationError> {
    let mut warnings = Vec::new();
    let mut picks: Vec<(usize, EvidenceOrigin, f64)> = Vec::new();
    for premise in &premises.premises {
        retrieve(index, embedder, premise, k_init, EvidenceOrigin::PremisePool, &mut picks)?;
    }

    let numbered: String =
        premises.premises.iter().enumerate().map(|(i, p)| format!("{}. {p}", i + 1)).collect::<Vec<_>>().join("\n");
    let prompt = render_prompt("stance_queries", &[("claim", &claim.text), ("premises", &numbered)])?;
    let stance = match runtime.ask_json(RoleId::PragFormulator, "stance_queries", &prompt) {
        Ok(v) => Some(v),
        Err(AgentError::MalformedReply { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let field = |key: &str| -> Option<String> {
        stance
            .as_ref()
            .and_then(|v| v.get(key))
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
    };
    let (supporting_query, challenging_query) = match (field("supporting_query"), field("challenging_query")) {
        (Some(s), Some(c)) => (s, c),
        _ => {
            let w = "stance queries unusable; using the claim text for both".to_string();
            tracing::warn!(claim = %claim.claim_id, "{w}");
            warnings.push(w);
            (claim.text.clone(), claim.text.clone())
        }
    };
    retrieve(index, embedder, &supporting_query, k_init, EvidenceOrigin::ProponentPool, &mut picks)?;
    retrieve(index, embedder, &challenging_query, k_init, EvidenceOrigin::OpponentPool, &mut picks)?;

    let proponent = render_discovery_pool(index, &picks, EvidenceOrigin::ProponentPool);
    let opponent = render_discovery_pool(index, &picks, EvidenceOrigin::OpponentPool);
    let mut replies = Vec::new();
    for (role, title, own, opposing) in [
        (RoleId::Plaintiff, "Plaintiff Counsel", &proponent, &opponent),
        (RoleId::Defense, "Defense Counsel", &opponent, &proponent),
    ] {
        let prompt = render_prompt(
            "negotiation",
            &[("job_title", title), ("claim", &claim.text), ("own_pool", own), ("opposing_pool", opposing)],
        )?;
        let text = runtime.ask(role, "negotiation", &prompt)?;
        replies.push(NegotiationReply { role, text });
    }

    let mut pool = EvidencePool::new();
    let mut candidates = Vec::with_capacity(picks.len());
    for (idx, origin, similarity) in picks {
        let record = &index.records()[idx];
        let score = arbitrate(claim, record, runtime)?;
        if let Some(w) = &score.warning {
            warnings.push(w.clone());
        }
        pool.merge(EvidenceItem::from_record(record, index.embedding(idx), &score, origin));
        candidates.push(Candidate { doc_id: record.doc_id.clone(), origin, similarity });
    }
    Ok(Negotiation { pool, supporting_query, challenging_query, candidates, replies, warnings })
}
