//! Synthetic corpora and scripted cases shared by the integration and
//! acceptance targets.
#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::sync::Arc;

use delib_core::arbitration::{negotiate, EvidencePool};
use delib_core::corpus::{CorpusIndex, CorpusRecord, HashEmbedder};
use delib_core::debate::{
    run_debate, run_role_switch, DebateContext, DebateSettings, DebateState, DebateTranscript, Phase, RoleSwitchResult,
};
use delib_core::mining::{decompose, Claim, PremiseSet};
use delib_core::panel::Verdict;
use delib_core::prag::PragSettings;
use delib_core::runtime::{AgentCall, AgentRuntime, CaseScript, RoleBindings, RoleId, ScriptedBackend};
use serde_json::json;

/// Enough for any test; arbiter call counts depend on retrieval, not on the script.
pub const ARBITER_REPEAT: usize = 10_000;

/// Body text of document `i`: vocabulary shared with no other document, so
/// hashed embeddings of different documents are nearly orthogonal.
pub fn doc_text(i: usize) -> String {
    (0..8).map(|j| format!("d{i}w{j}")).collect::<Vec<_>>().join(" ")
}

pub fn doc_id(i: usize) -> String {
    format!("doc{i:03}")
}

pub fn synthetic_corpus(n: usize) -> Vec<CorpusRecord> {
    (0..n)
        .map(|i| CorpusRecord {
            doc_id: doc_id(i),
            title: format!("d{i}title"),
            body: doc_text(i),
            journal: format!("d{i}journal"),
            year: 2000 + (i % 25) as i32,
            embedding: None,
        })
        .collect()
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord]) {
    let lines: Vec<String> = records.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
    fs::write(path, lines.join("\n") + "\n").unwrap();
}

/// A query that pulls document `i` to the top.
pub fn query_for(i: usize) -> String {
    format!("d{i}title {}", doc_text(i))
}

#[derive(Debug, Clone)]
pub struct ExpertPlan {
    pub persona: String,
    pub granted: bool,
}

/// Scripted replies for one debate round.
#[derive(Debug, Clone)]
pub struct RoundPlan {
    /// (logic, novelty, rebuttal) for each counsel.
    pub plaintiff: (f64, f64, f64),
    pub defense: (f64, f64, f64),
    pub resolved: bool,
    pub close: bool,
    /// Whether each side still runs discovery this round.
    pub discover: [bool; 2],
    /// Court-refined discovery queries for each side.
    pub queries: [String; 2],
    pub plaintiff_argument: String,
    pub defense_argument: String,
    pub experts: [Option<ExpertPlan>; 2],
}

impl RoundPlan {
    /// A round with fresh discovery targets, `tag` keeping the arguments unique.
    pub fn new(tag: &str, targets: [usize; 2], plaintiff: (f64, f64, f64), defense: (f64, f64, f64)) -> Self {
        Self {
            plaintiff,
            defense,
            resolved: false,
            close: false,
            discover: [true, true],
            queries: [query_for(targets[0]), query_for(targets[1])],
            plaintiff_argument: format!("{tag} plaintiff argument"),
            defense_argument: format!("{tag} defense argument"),
            experts: [None, None],
        }
    }

    pub fn resolved(mut self) -> Self {
        self.resolved = true;
        self
    }

    pub fn close(mut self) -> Self {
        self.close = true;
        self
    }

    pub fn discover(mut self, plaintiff: bool, defense: bool) -> Self {
        self.discover = [plaintiff, defense];
        self
    }
}

pub fn reflection_json((logic, novelty, rebuttal): (f64, f64, f64)) -> String {
    json!({
        "scores": {"logic": logic, "novelty": novelty, "rebuttal": rebuttal},
        "flaws_identified": ["minor gap"],
        "discovery_need": "dose-response data",
        "refined_stance": "unchanged"
    })
    .to_string()
}

pub fn critic_json(resolved: bool) -> String {
    json!({
        "plaintiff": {"logic": 0.7, "evidence": 0.6, "rebuttal": 0.5, "reasoning": "adequate"},
        "defense": {"logic": 0.6, "evidence": 0.7, "rebuttal": 0.6, "reasoning": "adequate"},
        "unresolved_premises": [],
        "recommendations": {"plaintiff": [], "defense": [], "queries": []},
        "debate_resolved": resolved
    })
    .to_string()
}

pub fn judge_json(verdict: Verdict, ev: u8, val: u8, rel: u8) -> String {
    json!({
        "claim_summary": "the claim",
        "evidence_strength": ev,
        "argument_validity": val,
        "scientific_reliability": rel,
        "verdict": verdict.as_str(),
        "reasoning": "weighed the record"
    })
    .to_string()
}

pub fn arbiter_json(relevance: f64, credibility: f64) -> String {
    json!({"relevance": relevance, "credibility": credibility, "reasoning": "on point"}).to_string()
}

/// Everything one case needs, rendered into a [`CaseScript`] in the exact
/// per-role invocation order of the orchestrator.
#[derive(Debug, Clone)]
pub struct CasePlan {
    pub premise_targets: Vec<usize>,
    pub stance_targets: [usize; 2],
    pub arbiter: (f64, f64),
    pub primary: Vec<RoundPlan>,
    pub switched: Vec<RoundPlan>,
    /// (agent A, agent B, overall)
    pub consistency: (f64, f64, f64),
    pub judges: [(Verdict, u8, u8, u8); 3],
}

impl CasePlan {
    pub fn new(primary: Vec<RoundPlan>, switched: Vec<RoundPlan>) -> Self {
        Self {
            premise_targets: vec![0, 1],
            stance_targets: [2, 3],
            arbiter: (0.9, 0.9),
            primary,
            switched,
            consistency: (8.0, 9.0, 8.5),
            judges: [(Verdict::NotSupported, 7, 8, 7), (Verdict::Supported, 7, 6, 6), (Verdict::NotSupported, 8, 7, 8)],
        }
    }

    pub fn script(&self) -> CaseScript {
        let mut s = CaseScript::new();
        let premises: Vec<String> =
            self.premise_targets.iter().enumerate().map(|(n, &i)| format!("{}. {}", n + 1, query_for(i))).collect();
        s.push(RoleId::Miner, premises.join("\n"));
        s.push(
            RoleId::PragFormulator,
            json!({
                "supporting_query": query_for(self.stance_targets[0]),
                "challenging_query": query_for(self.stance_targets[1])
            })
            .to_string(),
        );
        s.push(RoleId::Plaintiff, "I will rely on the supporting studies.");
        s.push(RoleId::Defense, "I challenge the relevance of these studies.");
        s.push_repeated(RoleId::Arbiter, arbiter_json(self.arbiter.0, self.arbiter.1), ARBITER_REPEAT);
        for round in self.primary.iter().chain(&self.switched) {
            push_round(&mut s, round);
        }
        let (a, b, o) = self.consistency;
        s.push(
            RoleId::Consistency,
            json!({
                "agent_a_consistency": a,
                "agent_b_consistency": b,
                "overall_consistency": o,
                "contradictions": "none found"
            })
            .to_string(),
        );
        for (role, &(v, ev, val, rel)) in [RoleId::Judge1, RoleId::Judge2, RoleId::Judge3].iter().zip(&self.judges) {
            s.push(*role, judge_json(v, ev, val, rel));
        }
        s
    }
}

fn push_round(s: &mut CaseScript, r: &RoundPlan) {
    let sides = [RoleId::Plaintiff, RoleId::Defense];
    for (i, role) in sides.iter().enumerate() {
        if r.discover[i] {
            s.push(*role, "gap: missing mechanistic evidence");
            s.push(RoleId::PragFormulator, "formulated discovery query");
            s.push(RoleId::Court, r.queries[i].clone());
        }
    }
    s.push(RoleId::Plaintiff, r.plaintiff_argument.clone());
    s.push(RoleId::Defense, r.defense_argument.clone());
    for (i, role) in sides.iter().enumerate() {
        match &r.experts[i] {
            None => {
                s.push(*role, "None");
            }
            Some(e) => {
                s.push(*role, json!({"expert_type": e.persona, "reasoning": "technical dispute"}).to_string());
                s.push(RoleId::Court, if e.granted { "GRANTED: relevant expertise" } else { "DENIED: not needed" });
                if e.granted {
                    s.push(RoleId::Expert, format!("{} testimony on the mechanism", e.persona));
                }
            }
        }
    }
    s.push(RoleId::Plaintiff, reflection_json(r.plaintiff));
    s.push(RoleId::Defense, reflection_json(r.defense));
    s.push(RoleId::Critic, critic_json(r.resolved));
    s.push(RoleId::Court, if r.close { "CLOSE the debate" } else { "WAIT for more argument" });
}

/// Alternating reflection scores that never plateau.
pub fn lively(k: usize) -> ((f64, f64, f64), (f64, f64, f64)) {
    if k.is_multiple_of(2) {
        ((0.8, 0.7, 0.6), (0.7, 0.6, 0.5))
    } else {
        ((0.4, 0.3, 0.2), (0.3, 0.2, 0.1))
    }
}

/// `n` rounds with fresh targets starting at document `first`, reflections alternating.
pub fn lively_rounds(tag: &str, n: usize, first: usize) -> Vec<RoundPlan> {
    (0..n)
        .map(|k| {
            let (p, d) = lively(k);
            RoundPlan::new(&format!("{tag}-r{}", k + 1), [first + 2 * k, first + 2 * k + 1], p, d)
        })
        .collect()
}

/// A claims file line.
pub fn claim_line(id: &str, text: &str, gold: Option<&str>) -> String {
    match gold {
        Some(g) => json!({"claim_id": id, "text": text, "gold_label": g}).to_string(),
        None => json!({"claim_id": id, "text": text}).to_string(),
    }
}

/// One scripted claim for a pipeline fixture.
#[derive(Debug, Clone)]
pub struct FixtureCase {
    pub claim_id: String,
    pub text: String,
    pub gold: Option<&'static str>,
    pub plan: CasePlan,
}

/// Three claims ending by round cap, critic resolution and judicial close,
/// judged REFUTE, SUPPORT and a 1-1-1 split respectively.
pub fn three_cases() -> Vec<FixtureCase> {
    let mut a = CasePlan::new(lively_rounds("A", 2, 10), lively_rounds("A-switched", 2, 30));
    a.premise_targets = vec![0, 1, 4];

    let mut rounds = lively_rounds("B", 2, 14);
    rounds[1] = rounds[1].clone().resolved();
    let mut b = CasePlan::new(rounds, lively_rounds("B-switched", 2, 34));
    b.judges = [(Verdict::Supported, 8, 8, 8), (Verdict::Supported, 9, 8, 7), (Verdict::Supported, 7, 7, 7)];
    b.consistency = (6.0, 5.0, 5.5);

    let mut rounds = lively_rounds("C", 1, 18);
    rounds[0] = rounds[0].clone().close();
    let mut c = CasePlan::new(rounds, lively_rounds("C-switched", 2, 38));
    c.judges = [(Verdict::Inconclusive, 5, 6, 5), (Verdict::Supported, 6, 6, 6), (Verdict::NotSupported, 6, 5, 6)];
    c.consistency = (4.0, 4.0, 4.0);

    vec![
        FixtureCase {
            claim_id: "claim-a".into(),
            text: "Zinc shortens the common cold.".into(),
            gold: Some("REFUTE"),
            plan: a,
        },
        FixtureCase {
            claim_id: "claim-b".into(),
            text: "Exercise lowers blood pressure.".into(),
            gold: Some("SUPPORT"),
            plan: b,
        },
        FixtureCase {
            claim_id: "claim-c".into(),
            text: "Masks reduce transmission.".into(),
            gold: Some("SUPPORT"),
            plan: c,
        },
    ]
}

pub const FIXTURE_CONFIG: &str = r#"corpus_path = "corpus.jsonl"
claims_path = "claims.jsonl"
output_dir = "out"
backend = "scripted"
scripted_fixture_path = "script.json"
seed = 7
max_rounds = 2
switched_max_rounds = 2
k_init = 1
per_round_k = 1
"#;

/// Writes corpus, claims, script and config into `dir`; returns the config path.
pub fn write_fixture(dir: &Path, cases: &[FixtureCase], extra_config: &str) -> std::path::PathBuf {
    fs::create_dir_all(dir).unwrap();
    write_corpus(&dir.join("corpus.jsonl"), &synthetic_corpus(48));
    let claims: Vec<String> = cases.iter().map(|c| claim_line(&c.claim_id, &c.text, c.gold)).collect();
    fs::write(dir.join("claims.jsonl"), claims.join("\n") + "\n").unwrap();
    let fixture =
        delib_core::runtime::ScriptedFixture(cases.iter().map(|c| (c.claim_id.clone(), c.plan.script())).collect());
    fs::write(dir.join("script.json"), serde_json::to_string_pretty(&fixture).unwrap()).unwrap();
    let config = dir.join("config.toml");
    fs::write(&config, format!("{FIXTURE_CONFIG}{extra_config}")).unwrap();
    config
}

/// Every file under `root` except `skip`, as relative path -> bytes.
pub fn tree(root: &Path, skip: &[&str]) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                if !skip.contains(&rel.as_str()) {
                    out.insert(rel, fs::read(&p).unwrap());
                }
            }
        }
    }
    out
}

/// Retrieval settings under which discovery never stops on its own, so each
/// round's invocation order is fixed.
pub fn steady(max_rounds: usize) -> DebateSettings {
    DebateSettings {
        max_rounds,
        prag: PragSettings {
            per_round_k: 1,
            redundancy_ratio_max: 1.0,
            min_relevance_gain: -10.0,
            max_iterations: 100,
            ..PragSettings::default()
        },
        ..DebateSettings::default()
    }
}

pub struct Outcome {
    pub primary: DebateTranscript,
    pub switch: RoleSwitchResult,
    pub pool: EvidencePool,
    pub calls: Vec<AgentCall>,
}

pub fn drive(plan: &CasePlan, settings: &DebateSettings) -> Outcome {
    let claim = Claim { claim_id: "c1".into(), text: "Vitamin D prevents influenza.".into(), gold_label: None };
    let embedder = HashEmbedder::new(384, 11);
    let index = CorpusIndex::ingest(synthetic_corpus(60), &embedder).unwrap();
    let runtime = AgentRuntime::new(Arc::new(ScriptedBackend::new(&plan.script())), RoleBindings::default());
    let premises: PremiseSet = decompose(&claim, &runtime, 15).unwrap();
    let negotiation = negotiate(&claim, &premises, &index, &embedder, &runtime, 1).unwrap();
    let pool = negotiation.pool;
    let ctx = DebateContext { claim: &claim, premises: &premises, index: &index, embedder: &embedder, settings };
    let primary =
        run_debate(DebateState::new(pool.clone()), &ctx, &runtime, Phase::Primary, settings.max_rounds).unwrap();
    let switch = run_role_switch(&pool, &primary, &ctx, &runtime).unwrap();
    Outcome { primary, switch, pool, calls: runtime.calls() }
}
