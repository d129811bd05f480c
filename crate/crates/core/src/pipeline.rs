//! Run configuration, per-claim execution of the full evaluation cycle,
//! persistence, and the eval/report entry points.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbitration::{negotiate, ArbitrationError, EvidenceStatus, DEFAULT_K_INIT};
use crate::corpus::{
    read_corpus_jsonl, CorpusError, CorpusIndex, Embedder, HashEmbedder, RemoteEmbedder, DEFAULT_DIMENSION,
};
use crate::debate::{
    run_debate, run_role_switch, DebateContext, DebateError, DebateSettings, DebateState, Phase, Termination,
};
use crate::metrics::{
    classification_metrics, evaluate, mean, parse_markers, sycophancy_metrics, uniform_edges, Classification,
    EvaluationReport, LabeledOutcome, MetricsError, DEFAULT_CONCESSION_MARKERS,
};
use crate::mining::{decompose, Claim, Label, PremiseSet, DEFAULT_PREMISE_CAP};
use crate::panel::{
    convene, majority_vote, map_label, score_confidence, ConfidenceBreakdown, ConfidenceWeights, JudgeBrief,
    JudgeOpinion, Verdict,
};
use crate::prag::PragSettings;
use crate::runtime::{
    AgentError, AgentRuntime, HttpBackend, ModelBackend, RoleBindings, RoleConfig, ScriptedBackend, ScriptedFixture,
};

/// Environment variable holding the API key for the http backend.
pub const API_KEY_ENV: &str = "DELIB_API_KEY";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Arbitration(#[from] ArbitrationError),
    #[error(transparent)]
    Debate(#[from] DebateError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProvider {
    Hash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub provider: EmbeddingProvider,
    pub dimension: usize,
    pub url: Option<String>,
    pub model: Option<String>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { provider: EmbeddingProvider::Hash, dimension: DEFAULT_DIMENSION, url: None, model: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub url: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self { url: "http://127.0.0.1:8000/v1/chat/completions".into(), timeout_secs: 120, max_retries: 3 }
    }
}

/// Secondary debate and retrieval knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoppingConfig {
    pub plateau_delta: f64,
    pub novelty_floor: f64,
    pub redundancy_similarity: f64,
    pub redundancy_ratio_max: f64,
    pub min_relevance_gain: f64,
    pub max_iterations: usize,
    pub history_window: usize,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        let d = DebateSettings::default();
        Self {
            plateau_delta: d.plateau_delta,
            novelty_floor: d.novelty_floor,
            redundancy_similarity: d.prag.redundancy_similarity,
            redundancy_ratio_max: d.prag.redundancy_ratio_max,
            min_relevance_gain: d.prag.min_relevance_gain,
            max_iterations: d.prag.max_iterations,
            history_window: d.history_window,
        }
    }
}

/// Everything one `run` needs. Relative paths resolve against `base_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_path: PathBuf,
    pub claims_path: PathBuf,
    pub output_dir: PathBuf,
    pub backend: BackendKind,
    #[serde(default)]
    pub scripted_fixture_path: Option<PathBuf>,
    #[serde(default = "defaults::max_rounds")]
    pub max_rounds: usize,
    #[serde(default = "defaults::switched_max_rounds")]
    pub switched_max_rounds: usize,
    #[serde(default = "defaults::k_init")]
    pub k_init: usize,
    #[serde(default = "defaults::per_round_k")]
    pub per_round_k: usize,
    #[serde(default = "defaults::novelty_tau")]
    pub novelty_tau: f64,
    #[serde(default = "defaults::premise_cap")]
    pub premise_cap: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::parallel_claims")]
    pub parallel_claims: usize,
    #[serde(default)]
    pub weights: ConfidenceWeights,
    #[serde(default)]
    pub stopping: StoppingConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub http: HttpConfig,
    /// Overrides applied on top of the default role table.
    #[serde(default)]
    pub roles: Vec<RoleConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

mod defaults {
    pub fn max_rounds() -> usize {
        10
    }
    pub fn switched_max_rounds() -> usize {
        2
    }
    pub fn k_init() -> usize {
        super::DEFAULT_K_INIT
    }
    pub fn per_round_k() -> usize {
        3
    }
    pub fn novelty_tau() -> f64 {
        0.20
    }
    pub fn premise_cap() -> usize {
        super::DEFAULT_PREMISE_CAP
    }
    pub fn parallel_claims() -> usize {
        1
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Input { path: path.to_path_buf(), message: e.to_string() })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn debate_settings(&self) -> DebateSettings {
        let s = &self.stopping;
        DebateSettings {
            max_rounds: self.max_rounds,
            switched_max_rounds: self.switched_max_rounds,
            plateau_delta: s.plateau_delta,
            novelty_floor: s.novelty_floor,
            history_window: s.history_window,
            prag: PragSettings {
                per_round_k: self.per_round_k,
                novelty_tau: self.novelty_tau,
                redundancy_similarity: s.redundancy_similarity,
                redundancy_ratio_max: s.redundancy_ratio_max,
                min_relevance_gain: s.min_relevance_gain,
                max_iterations: s.max_iterations,
            },
        }
    }

    pub fn role_bindings(&self) -> RoleBindings {
        let mut roles = RoleBindings::default();
        for r in &self.roles {
            roles.set(r.clone());
        }
        roles
    }

    /// Checks every threshold and binding; run refuses to start otherwise.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let unit = |name: &str, v: f64| -> Result<(), PipelineError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(PipelineError::Config(format!("{name} = {v} outside [0, 1]")))
            }
        };
        for (name, v) in [
            ("max_rounds", self.max_rounds),
            ("switched_max_rounds", self.switched_max_rounds),
            ("k_init", self.k_init),
            ("per_round_k", self.per_round_k),
            ("premise_cap", self.premise_cap),
            ("parallel_claims", self.parallel_claims),
            ("stopping.max_iterations", self.stopping.max_iterations),
            ("stopping.history_window", self.stopping.history_window),
            ("embedding.dimension", self.embedding.dimension),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        unit("novelty_tau", self.novelty_tau)?;
        unit("stopping.plateau_delta", self.stopping.plateau_delta)?;
        unit("stopping.novelty_floor", self.stopping.novelty_floor)?;
        unit("stopping.redundancy_similarity", self.stopping.redundancy_similarity)?;
        unit("stopping.redundancy_ratio_max", self.stopping.redundancy_ratio_max)?;
        unit("stopping.min_relevance_gain", self.stopping.min_relevance_gain)?;
        self.weights.validate().map_err(PipelineError::Config)?;
        self.role_bindings().validate()?;
        if self.backend == BackendKind::Scripted && self.scripted_fixture_path.is_none() {
            return bad("scripted backend requires scripted_fixture_path".into());
        }
        if self.embedding.provider == EmbeddingProvider::Remote && self.embedding.url.is_none() {
            return bad("remote embedding provider requires embedding.url".into());
        }
        let out = self.output_path();
        fs::create_dir_all(&out)
            .map_err(|e| PipelineError::Config(format!("output_dir {} not creatable: {e}", out.display())))?;
        let probe = out.join(".write-probe");
        fs::write(&probe, b"")
            .and_then(|()| fs::remove_file(&probe))
            .map_err(|e| PipelineError::Config(format!("output_dir {} not writable: {e}", out.display())))?;
        Ok(())
    }
}

/// Reads a JSON-lines claims file; ids must be unique and usable as directory names.
pub fn read_claims(path: &Path) -> Result<Vec<Claim>, PipelineError> {
    let input = |message: String| PipelineError::Input { path: path.to_path_buf(), message };
    let file = fs::File::open(path).map_err(|e| input(e.to_string()))?;
    let mut claims = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| input(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let claim: Claim = serde_json::from_str(&line).map_err(|e| input(format!("line {}: {e}", n + 1)))?;
        let id = claim.claim_id.as_str();
        if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']) {
            return Err(input(format!("line {}: claim_id `{id}` is not a valid directory name", n + 1)));
        }
        if claim.text.trim().is_empty() {
            return Err(input(format!("line {}: empty claim text", n + 1)));
        }
        if !seen.insert(claim.claim_id.clone()) {
            return Err(input(format!("line {}: duplicate claim_id `{id}`", n + 1)));
        }
        claims.push(claim);
    }
    Ok(claims)
}

/// Pool composition right after negotiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCounts {
    pub admitted: usize,
    pub disputed: usize,
    pub discarded: usize,
}

/// Final outcome of one claim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub claim_id: String,
    pub claim_text: String,
    pub gold_label: Option<Label>,
    pub verdict: Verdict,
    pub mapped_label: Label,
    pub confidence: f64,
    pub tie_broken: bool,
    pub winning_votes: usize,
    pub confidence_terms: ConfidenceBreakdown,
    pub per_judge: Vec<JudgeOpinion>,
    pub premises: Vec<String>,
    pub initial_pool: PoolCounts,
    pub primary_rounds: usize,
    pub primary_termination: Termination,
    pub switched_rounds: usize,
    pub switched_termination: Termination,
    pub tokens_total: u64,
    pub agent_calls: usize,
    pub warnings: Vec<String>,
    pub primary_transcript: String,
    pub switched_transcript: String,
}

impl CaseResult {
    pub fn per_judge_verdicts(&self) -> Option<[Verdict; 3]> {
        match self.per_judge.as_slice() {
            [a, b, c] => Some([a.verdict, b.verdict, c.verdict]),
            _ => None,
        }
    }

    /// Scoring view against `gold`, if the panel record is complete.
    pub fn outcome(&self, gold: Label) -> Option<LabeledOutcome> {
        Some(LabeledOutcome {
            claim_id: self.claim_id.clone(),
            predicted: self.mapped_label,
            gold,
            confidence: self.confidence,
            per_judge_verdicts: self.per_judge_verdicts()?,
            round_confidences: self.confidence_terms.round_confidences.clone(),
            sigma: self.confidence_terms.sigma,
            q: self.confidence_terms.q,
            delta_rs: self.confidence_terms.delta_rs,
            delta_ref: self.confidence_terms.delta_ref,
        })
    }
}

#[derive(Serialize)]
struct PrimaryRecord<'a> {
    claim: &'a Claim,
    premises: &'a PremiseSet,
    negotiation: &'a crate::arbitration::Negotiation,
    transcript: &'a crate::debate::DebateTranscript,
}

pub const PRIMARY_FILE: &str = "primary.json";
pub const SWITCHED_FILE: &str = "switched.json";
pub const CALLS_FILE: &str = "calls.json";
pub const RESULT_FILE: &str = "result.json";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Shared, read-only inputs for every case in a run.
pub struct CaseEnv<'a> {
    pub index: &'a CorpusIndex,
    pub embedder: &'a dyn Embedder,
    pub settings: &'a DebateSettings,
    pub weights: &'a ConfidenceWeights,
    pub k_init: usize,
    pub premise_cap: usize,
}

/// Executes the full cycle for one claim and persists its transcripts.
/// `result.json` is written last so its presence marks a completed case.
pub fn run_case(
    claim: &Claim,
    env: &CaseEnv<'_>,
    runtime: &AgentRuntime,
    case_dir: &Path,
) -> Result<CaseResult, PipelineError> {
    fs::create_dir_all(case_dir)?;
    let outcome = execute_case(claim, env, runtime, case_dir);
    write_json(&case_dir.join(CALLS_FILE), &runtime.calls())?;
    let result = outcome?;
    write_json(&case_dir.join(RESULT_FILE), &result)?;
    Ok(result)
}

fn execute_case(
    claim: &Claim,
    env: &CaseEnv<'_>,
    runtime: &AgentRuntime,
    case_dir: &Path,
) -> Result<CaseResult, PipelineError> {
    let premises = decompose(claim, runtime, env.premise_cap)?;
    let negotiation = negotiate(claim, &premises, env.index, env.embedder, runtime, env.k_init)?;
    let original_pool = negotiation.pool.clone();
    let ctx =
        DebateContext { claim, premises: &premises, index: env.index, embedder: env.embedder, settings: env.settings };
    let primary =
        run_debate(DebateState::new(original_pool.clone()), &ctx, runtime, Phase::Primary, env.settings.max_rounds)?;
    write_json(
        &case_dir.join(PRIMARY_FILE),
        &PrimaryRecord { claim, premises: &premises, negotiation: &negotiation, transcript: &primary },
    )?;
    let switch = run_role_switch(&original_pool, &primary, &ctx, runtime)?;
    write_json(&case_dir.join(SWITCHED_FILE), &switch)?;

    let brief = JudgeBrief::compose(claim, &original_pool, &primary, &switch);
    let opinions = convene(&brief, runtime)?;
    let vote = majority_vote([opinions[0].verdict, opinions[1].verdict, opinions[2].verdict]);
    let terms = score_confidence(&vote, &opinions, &primary, &switch, env.weights);

    let mut warnings = negotiation.warnings.clone();
    warnings.extend(primary.rounds.iter().flat_map(|r| r.warnings.iter().cloned()));
    warnings.extend(switch.warnings.iter().cloned());
    warnings.extend(opinions.iter().flat_map(|o| o.warnings.iter().cloned()));
    let pool = &negotiation.pool;
    Ok(CaseResult {
        claim_id: claim.claim_id.clone(),
        claim_text: claim.text.clone(),
        gold_label: claim.gold_label,
        verdict: vote.verdict,
        mapped_label: map_label(vote.verdict),
        confidence: terms.c_final,
        tie_broken: vote.tie_broken,
        winning_votes: vote.winning_votes,
        confidence_terms: terms,
        per_judge: opinions.to_vec(),
        premises: premises.premises.clone(),
        initial_pool: PoolCounts {
            admitted: pool.count(EvidenceStatus::Admitted),
            disputed: pool.count(EvidenceStatus::Disputed),
            discarded: pool.count(EvidenceStatus::Discarded),
        },
        primary_rounds: primary.rounds.len(),
        primary_termination: primary.termination,
        switched_rounds: switch.switched_transcript.rounds.len(),
        switched_termination: switch.switched_transcript.termination,
        tokens_total: runtime.tokens_total(),
        agent_calls: runtime.calls().len(),
        warnings,
        primary_transcript: format!("{}/{PRIMARY_FILE}", claim.claim_id),
        switched_transcript: format!("{}/{SWITCHED_FILE}", claim.claim_id),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimStatus {
    pub claim_id: String,
    pub status: CaseStatus,
    /// Completed in an earlier run and skipped this time.
    pub resumed: bool,
    pub error: Option<String>,
    pub tokens_total: u64,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub deterministic: bool,
    pub claims: Vec<ClaimStatus>,
    pub tokens_total: u64,
    pub elapsed_ms: u64,
}

impl RunManifest {
    pub fn ok_count(&self) -> usize {
        self.claims.iter().filter(|c| c.status == CaseStatus::Ok).count()
    }
}

enum Backends {
    Scripted(ScriptedFixture),
    Shared(Arc<dyn ModelBackend>),
}

impl Backends {
    fn for_claim(&self, claim_id: &str) -> Result<Arc<dyn ModelBackend>, AgentError> {
        match self {
            Backends::Scripted(fixture) => fixture
                .0
                .get(claim_id)
                .map(|s| Arc::new(ScriptedBackend::new(s)) as Arc<dyn ModelBackend>)
                .ok_or_else(|| AgentError::Fixture(format!("no script for claim `{claim_id}`"))),
            Backends::Shared(b) => Ok(Arc::clone(b)),
        }
    }

    fn deterministic(&self) -> bool {
        match self {
            Backends::Scripted(_) => true,
            Backends::Shared(b) => b.is_deterministic(),
        }
    }
}

fn build_embedder(cfg: &RunConfig) -> Box<dyn Embedder> {
    let e = &cfg.embedding;
    match e.provider {
        EmbeddingProvider::Hash => Box::new(HashEmbedder::new(e.dimension, cfg.seed)),
        EmbeddingProvider::Remote => Box::new(RemoteEmbedder::new(
            e.url.clone().unwrap_or_default(),
            e.model.clone().unwrap_or_default(),
            e.dimension,
            std::env::var(API_KEY_ENV).ok(),
            Duration::from_secs(cfg.http.timeout_secs),
            cfg.http.max_retries,
        )),
    }
}

fn load_result(path: &Path) -> Option<CaseResult> {
    serde_json::from_str(&fs::read_to_string(path).ok()?).ok()
}

/// Runs every claim, isolating failures and skipping claims that already
/// have a persisted result.
pub fn run(cfg: &RunConfig) -> Result<RunManifest, PipelineError> {
    let started = Instant::now();
    cfg.validate()?;
    let claims = read_claims(&cfg.resolve(&cfg.claims_path))?;
    if claims.is_empty() {
        return Err(PipelineError::Config("claims file holds no claims".into()));
    }
    let embedder = build_embedder(cfg);
    let records = read_corpus_jsonl(&cfg.resolve(&cfg.corpus_path))?;
    let index = CorpusIndex::ingest(records, embedder.as_ref())?;
    let backends = match cfg.backend {
        BackendKind::Scripted => {
            let path = cfg.resolve(cfg.scripted_fixture_path.as_deref().expect("validated"));
            Backends::Scripted(ScriptedFixture::load(&path)?)
        }
        BackendKind::Http => {
            let key = std::env::var(API_KEY_ENV).unwrap_or_default();
            let backend = HttpBackend::new(
                cfg.http.url.clone(),
                key,
                Duration::from_secs(cfg.http.timeout_secs),
                cfg.http.max_retries,
            );
            Backends::Shared(Arc::new(backend))
        }
    };
    let settings = cfg.debate_settings();
    let roles = cfg.role_bindings();
    let env = CaseEnv {
        index: &index,
        embedder: embedder.as_ref(),
        settings: &settings,
        weights: &cfg.weights,
        k_init: cfg.k_init,
        premise_cap: cfg.premise_cap,
    };
    let out = cfg.output_path();
    let results_path = out.join(RESULTS_FILE);
    let appender = Mutex::new(fs::OpenOptions::new().create(true).append(true).open(&results_path)?);

    type Slot = Mutex<Option<(ClaimStatus, Option<CaseResult>)>>;
    let slots: Vec<Slot> = claims.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(claim) = claims.get(i) else { break };
        let t0 = Instant::now();
        let case_dir = out.join(&claim.claim_id);
        let (status, result) = if let Some(done) = load_result(&case_dir.join(RESULT_FILE)) {
            tracing::info!(claim = %claim.claim_id, "already complete; skipping");
            let status = ClaimStatus {
                claim_id: claim.claim_id.clone(),
                status: CaseStatus::Ok,
                resumed: true,
                error: None,
                tokens_total: done.tokens_total,
                elapsed_ms: 0,
            };
            (status, Some(done))
        } else {
            let attempt = backends
                .for_claim(&claim.claim_id)
                .map_err(PipelineError::from)
                .and_then(|b| run_case(claim, &env, &AgentRuntime::new(b, roles.clone()), &case_dir));
            let elapsed_ms = t0.elapsed().as_millis() as u64;
            match attempt {
                Ok(r) => {
                    if let Ok(line) = serde_json::to_string(&r) {
                        let mut f = appender.lock().expect("results writer poisoned");
                        if let Err(e) = writeln!(f, "{line}") {
                            tracing::warn!(error = %e, "could not append to results file");
                        }
                    }
                    let status = ClaimStatus {
                        claim_id: claim.claim_id.clone(),
                        status: CaseStatus::Ok,
                        resumed: false,
                        error: None,
                        tokens_total: r.tokens_total,
                        elapsed_ms,
                    };
                    (status, Some(r))
                }
                Err(e) => {
                    tracing::error!(claim = %claim.claim_id, error = %e, "claim failed");
                    let status = ClaimStatus {
                        claim_id: claim.claim_id.clone(),
                        status: CaseStatus::Failed,
                        resumed: false,
                        error: Some(e.to_string()),
                        tokens_total: 0,
                        elapsed_ms,
                    };
                    (status, None)
                }
            }
        };
        *slots[i].lock().expect("slot poisoned") = Some((status, result));
    };
    let workers = cfg.parallel_claims.min(claims.len()).max(1);
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }
    drop(appender);

    let mut statuses = Vec::with_capacity(claims.len());
    let mut lines = String::new();
    for slot in slots {
        let (status, result) = slot.into_inner().expect("slot poisoned").expect("every claim visited");
        if let Some(r) = result {
            lines.push_str(&serde_json::to_string(&r)?);
            lines.push('\n');
        }
        statuses.push(status);
    }
    // Rewrite in input order so the file is independent of scheduling.
    fs::write(&results_path, lines)?;
    let manifest = RunManifest {
        config: cfg.clone(),
        deterministic: backends.deterministic(),
        tokens_total: statuses.iter().map(|s| s.tokens_total).sum(),
        claims: statuses,
        elapsed_ms: started.elapsed().as_millis() as u64,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_results(path: &Path) -> Result<Vec<CaseResult>, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::Input { path: path.to_path_buf(), message: e.to_string() })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| PipelineError::Input { path: path.to_path_buf(), message: format!("line {}: {e}", n + 1) })
        })
        .collect()
}

/// Loads persisted transcripts next to a results file, for sycophancy metrics.
fn load_transcripts(
    results_path: &Path,
    results: &[CaseResult],
) -> (Vec<crate::debate::DebateTranscript>, Vec<crate::debate::RoleSwitchResult>) {
    let dir = results_path.parent().unwrap_or(Path::new("."));
    let mut primaries = Vec::new();
    let mut switches = Vec::new();
    for r in results {
        let primary = fs::read_to_string(dir.join(&r.primary_transcript))
            .ok()
            .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
            .and_then(|mut v| serde_json::from_value(v.get_mut("transcript")?.take()).ok());
        if let Some(p) = primary {
            primaries.push(p);
        }
        let switched =
            fs::read_to_string(dir.join(&r.switched_transcript)).ok().and_then(|t| serde_json::from_str(&t).ok());
        if let Some(s) = switched {
            switches.push(s);
        }
    }
    (primaries, switches)
}

fn evaluate_results(
    results_path: &Path,
    results: &[CaseResult],
    gold: impl Fn(&CaseResult) -> Option<Label>,
    markers: &[String],
) -> Result<EvaluationReport, PipelineError> {
    let outcomes: Vec<LabeledOutcome> = results.iter().filter_map(|r| r.outcome(gold(r)?)).collect();
    if outcomes.is_empty() {
        return Err(MetricsError::Empty.into());
    }
    let mut report = evaluate(&outcomes, &uniform_edges(10))?;
    let (primaries, switches) = load_transcripts(results_path, results);
    if !primaries.is_empty() {
        let p: Vec<_> = primaries.iter().collect();
        let mut all: Vec<_> = p.clone();
        all.extend(switches.iter().map(|s| &s.switched_transcript));
        let s: Vec<_> = switches.iter().collect();
        report.sycophancy = sycophancy_metrics(&all, &s, markers).ok();
    }
    Ok(report)
}

/// Scores a results file against the gold labels in a claims file.
pub fn eval(results_path: &Path, claims_path: &Path) -> Result<EvaluationReport, PipelineError> {
    let results = read_results(results_path)?;
    let gold: BTreeMap<String, Label> =
        read_claims(claims_path)?.into_iter().filter_map(|c| Some((c.claim_id, c.gold_label?))).collect();
    let markers = parse_markers(DEFAULT_CONCESSION_MARKERS);
    evaluate_results(results_path, &results, |r| gold.get(&r.claim_id).copied(), &markers)
}

/// Label-level summary of several runs merged by per-claim majority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRuns {
    pub runs: usize,
    pub n: usize,
    pub classification: Classification,
    /// Claims where the runs disagreed.
    pub disagreements: usize,
}

/// REFUTE only when a strict majority of runs say REFUTE.
pub fn merge_labels(labels: &[Label]) -> Label {
    let refute = labels.iter().filter(|&&l| l == Label::Refute).count();
    if 2 * refute > labels.len() {
        Label::Refute
    } else {
        Label::Support
    }
}

pub fn merge_runs(runs: &[Vec<CaseResult>]) -> Result<MergedRuns, PipelineError> {
    let mut by_claim: BTreeMap<&str, (Option<Label>, Vec<Label>)> = BTreeMap::new();
    for run in runs {
        for r in run {
            let e = by_claim.entry(&r.claim_id).or_default();
            e.0 = e.0.or(r.gold_label);
            e.1.push(r.mapped_label);
        }
    }
    let mut pairs = Vec::new();
    let mut disagreements = 0;
    for (gold, labels) in by_claim.values() {
        if labels.iter().any(|l| *l != labels[0]) {
            disagreements += 1;
        }
        if let Some(g) = gold {
            pairs.push((merge_labels(labels), *g));
        }
    }
    let classification = classification_metrics(&pairs)?;
    Ok(MergedRuns { runs: runs.len(), n: pairs.len(), classification, disagreements })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub results_path: PathBuf,
    pub evaluation: EvaluationReport,
    pub mean_confidence: f64,
    pub tokens_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunReport>,
    pub merged: Option<MergedRuns>,
}

/// Evaluates one or more results files using their embedded gold labels;
/// with several files the runs are also merged by majority.
pub fn report(results_paths: &[PathBuf], markers: &[String]) -> Result<Report, PipelineError> {
    if results_paths.is_empty() {
        return Err(MetricsError::Empty.into());
    }
    let mut runs = Vec::new();
    let mut all = Vec::new();
    for path in results_paths {
        let results = read_results(path)?;
        let evaluation = evaluate_results(path, &results, |r| r.gold_label, markers)?;
        let confs: Vec<f64> = results.iter().map(|r| r.confidence).collect();
        runs.push(RunReport {
            results_path: path.clone(),
            evaluation,
            mean_confidence: mean(&confs).unwrap_or(0.0),
            tokens_total: results.iter().map(|r| r.tokens_total).sum(),
        });
        all.push(results);
    }
    let merged = if all.len() > 1 { Some(merge_runs(&all)?) } else { None };
    Ok(Report { runs, merged })
}

impl Report {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for r in &self.runs {
            out.push_str(&format!("== {} ==\n", r.results_path.display()));
            out.push_str(&r.evaluation.render_text());
            out.push_str(&format!("Mean confidence: {:.4}\nTokens: {}\n\n", r.mean_confidence, r.tokens_total));
        }
        if let Some(m) = &self.merged {
            out.push_str(&format!(
                "== majority over {} runs ==\n  Acc {:.3}  m-F1 {:.3}  (n={}, {} claims with disagreeing runs)\n",
                m.runs, m.classification.accuracy, m.classification.macro_f1, m.n, m.disagreements
            ));
        }
        out
    }
}
