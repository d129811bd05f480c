//! Evaluation statistics over finished cases: classification scores,
//! agreement coefficients, calibration, stability and sycophancy indicators.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::debate::{DebateTranscript, RoleSwitchResult, Side};
use crate::mining::Label;
use crate::panel::{final_confidence, map_label, ConfidenceWeights, Verdict};

/// Default concession phrases.
pub const DEFAULT_CONCESSION_MARKERS: &str = include_str!("../assets/concession_markers.txt");

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("nothing to score")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bin edges must be strictly increasing from 0 to 1")]
    BadEdges,
    #[error("rating rows must all have the same number (>= 2) of raters")]
    RaggedRatings,
    #[error("empty weight grid")]
    EmptyGrid,
}

/// One scored claim with everything needed to recompute its confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledOutcome {
    pub claim_id: String,
    pub predicted: Label,
    pub gold: Label,
    pub confidence: f64,
    pub per_judge_verdicts: [Verdict; 3],
    #[serde(default)]
    pub round_confidences: Vec<f64>,
    pub sigma: f64,
    pub q: f64,
    pub delta_rs: f64,
    pub delta_ref: f64,
}

impl LabeledOutcome {
    pub fn correct(&self) -> bool {
        self.predicted == self.gold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: BTreeMap<Label, ClassScores>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, macro F1 over both labels and per-class scores. A class with no
/// gold or predicted instances scores F1 = 0.
pub fn classification_metrics(pairs: &[(Label, Label)]) -> Result<Classification, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let correct = pairs.iter().filter(|(p, g)| p == g).count();
    let mut per_class = BTreeMap::new();
    for class in [Label::Support, Label::Refute] {
        let tp = pairs.iter().filter(|(p, g)| *p == class && *g == class).count();
        let predicted = pairs.iter().filter(|(p, _)| *p == class).count();
        let actual = pairs.iter().filter(|(_, g)| *g == class).count();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        per_class.insert(class, ClassScores { precision, recall, f1, support: actual });
    }
    let macro_f1 = per_class.values().map(|c| c.f1).sum::<f64>() / per_class.len() as f64;
    Ok(Classification { accuracy: ratio(correct, pairs.len()), macro_f1, per_class })
}

/// Cohen's κ. Two raters that are constant and identical score 1.0.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = a.len() as f64;
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut marginals: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    for x in a {
        marginals.entry(x).or_default().0 += 1;
    }
    for y in b {
        marginals.entry(y).or_default().1 += 1;
    }
    let p_e: f64 = marginals.values().map(|(ca, cb)| (*ca as f64 / n) * (*cb as f64 / n)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Mean of Cohen's κ over the three judge pairs.
pub fn mean_pairwise_kappa(verdicts: &[[Verdict; 3]]) -> Result<f64, MetricsError> {
    let col = |j: usize| verdicts.iter().map(|v| v[j]).collect::<Vec<_>>();
    let (a, b, c) = (col(0), col(1), col(2));
    Ok((cohen_kappa(&a, &b)? + cohen_kappa(&a, &c)? + cohen_kappa(&b, &c)?) / 3.0)
}

/// Fleiss' κ over items each rated by the same number of raters. Perfect
/// agreement on a single category scores 1.0.
pub fn fleiss_kappa<T: Ord>(ratings: &[Vec<T>]) -> Result<f64, MetricsError> {
    if ratings.is_empty() {
        return Err(MetricsError::Empty);
    }
    let raters = ratings[0].len();
    if raters < 2 || ratings.iter().any(|r| r.len() != raters) {
        return Err(MetricsError::RaggedRatings);
    }
    let n = raters as f64;
    let items = ratings.len() as f64;
    let mut totals: BTreeMap<&T, usize> = BTreeMap::new();
    let mut p_bar = 0.0;
    for row in ratings {
        let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
        for x in row {
            *counts.entry(x).or_default() += 1;
            *totals.entry(x).or_default() += 1;
        }
        let agree: f64 = counts.values().map(|&c| (c * (c - 1)) as f64).sum();
        p_bar += agree / (n * (n - 1.0));
    }
    p_bar /= items;
    let p_e: f64 = totals.values().map(|&c| (c as f64 / (items * n)).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Mean exact-match rate over the three judge pairs.
pub fn pairwise_agreement(verdicts: &[[Verdict; 3]]) -> f64 {
    if verdicts.is_empty() {
        return 0.0;
    }
    let agree: usize = verdicts
        .iter()
        .map(|v| usize::from(v[0] == v[1]) + usize::from(v[0] == v[2]) + usize::from(v[1] == v[2]))
        .sum();
    agree as f64 / (3 * verdicts.len()) as f64
}

pub fn unanimity(verdicts: &[[Verdict; 3]]) -> f64 {
    ratio(verdicts.iter().filter(|v| v[0] == v[1] && v[1] == v[2]).count(), verdicts.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBucket {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub observed_acc: f64,
    pub mean_conf: f64,
}

/// `count + 1` equal-width edges over `[0, 1]`.
pub fn uniform_edges(count: usize) -> Vec<f64> {
    (0..=count).map(|i| i as f64 / count as f64).collect()
}

fn check_edges(edges: &[f64]) -> Result<(), MetricsError> {
    let ok =
        edges.len() >= 2 && edges[0] == 0.0 && edges[edges.len() - 1] == 1.0 && edges.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(MetricsError::BadEdges)
    }
}

/// Buckets `(confidence, correct)` pairs. Bins are `[lo, hi)` except the
/// last, which is closed. Confidences outside `[0, 1]` are clamped.
pub fn calibration_buckets(pairs: &[(f64, bool)], edges: &[f64]) -> Result<Vec<CalibrationBucket>, MetricsError> {
    check_edges(edges)?;
    let m = edges.len() - 1;
    let mut sums = vec![(0usize, 0usize, 0.0f64); m];
    for &(conf, correct) in pairs {
        let c = conf.clamp(0.0, 1.0);
        let bin = edges[1..m].iter().take_while(|&&e| c >= e).count();
        sums[bin].0 += 1;
        sums[bin].1 += usize::from(correct);
        sums[bin].2 += c;
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (count, hits, conf))| CalibrationBucket {
            lo: edges[i],
            hi: edges[i + 1],
            count,
            observed_acc: ratio(hits, count),
            mean_conf: if count == 0 { 0.0 } else { conf / count as f64 },
        })
        .collect())
}

/// `Σ (|B|/N)·|acc(B) − conf(B)|` over buckets; empty buckets contribute 0.
pub fn ece_from_buckets(buckets: &[CalibrationBucket]) -> f64 {
    let n: usize = buckets.iter().map(|b| b.count).sum();
    if n == 0 {
        return 0.0;
    }
    buckets
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| b.count as f64 / n as f64 * (b.observed_acc - b.mean_conf).abs())
        .sum()
}

pub fn ece(pairs: &[(f64, bool)], edges: &[f64]) -> Result<f64, MetricsError> {
    Ok(ece_from_buckets(&calibration_buckets(pairs, edges)?))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F₁ − F₂|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / xs.len() as f64 - j as f64 / ys.len() as f64).abs());
    }
    Ok(d)
}

/// Marker phrases, one per non-empty line.
pub fn parse_markers(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_lowercase).collect()
}

/// Case-insensitive marker occurrences per 1000 words of `texts`.
pub fn concession_rate<'a>(texts: impl IntoIterator<Item = &'a str>, markers: &[String]) -> f64 {
    let mut words = 0usize;
    let mut hits = 0usize;
    for t in texts {
        words += t.split_whitespace().count();
        let lower = t.to_lowercase();
        hits += markers.iter().filter(|m| !m.is_empty()).map(|m| lower.matches(m.as_str()).count()).sum::<usize>();
    }
    if words == 0 {
        0.0
    } else {
        hits as f64 * 1000.0 / words as f64
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SycophancyReport {
    pub concession_rate_plaintiff: f64,
    pub concession_rate_defense: f64,
    /// Mean `|ΔS|` over every round of every transcript (first round against 0).
    pub mean_reflection_delta: f64,
    pub mean_agent_a_consistency: Option<f64>,
    pub mean_agent_b_consistency: Option<f64>,
    pub mean_overall_consistency: Option<f64>,
}

pub fn sycophancy_metrics(
    transcripts: &[&DebateTranscript],
    switches: &[&RoleSwitchResult],
    markers: &[String],
) -> Result<SycophancyReport, MetricsError> {
    if transcripts.is_empty() {
        return Err(MetricsError::Empty);
    }
    let rate = |side: Side| concession_rate(transcripts.iter().flat_map(|t| t.arguments(side)), markers);
    let deltas: Vec<f64> = transcripts.iter().flat_map(|t| t.rounds.iter().map(|r| r.reflection_delta)).collect();
    let a: Vec<f64> = switches.iter().filter_map(|s| s.agent_a_consistency).collect();
    let b: Vec<f64> = switches.iter().filter_map(|s| s.agent_b_consistency).collect();
    let o: Vec<f64> = switches.iter().map(|s| s.overall_consistency).collect();
    Ok(SycophancyReport {
        concession_rate_plaintiff: rate(Side::Plaintiff),
        concession_rate_defense: rate(Side::Defense),
        mean_reflection_delta: mean(&deltas).unwrap_or(0.0),
        mean_agent_a_consistency: mean(&a),
        mean_agent_b_consistency: mean(&b),
        mean_overall_consistency: mean(&o),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightCalibration {
    pub best_weight: f64,
    pub ece_per_weight: Vec<(f64, f64)>,
}

/// Recomputes every outcome's confidence under each consensus weight and
/// keeps the weight with the lowest ECE (ties: the smaller weight).
pub fn calibrate_consensus_weight(
    outcomes: &[LabeledOutcome],
    grid: &[f64],
    base: &ConfidenceWeights,
    edges: &[f64],
) -> Result<WeightCalibration, MetricsError> {
    if grid.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut curve = Vec::with_capacity(grid.len());
    for &w in grid {
        let weights = ConfidenceWeights { w_consensus: w, ..base.clone() };
        let pairs: Vec<(f64, bool)> = outcomes
            .iter()
            .map(|o| {
                let c_base = w * o.sigma + weights.w_quality * o.q;
                (final_confidence(c_base, o.delta_rs, o.delta_ref, o.sigma, &weights), o.correct())
            })
            .collect();
        curve.push((w, ece(&pairs, edges)?));
    }
    let best =
        curve.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0))).expect("grid is non-empty");
    Ok(WeightCalibration { best_weight: best.0, ece_per_weight: curve })
}

/// The full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: BTreeMap<Label, ClassScores>,
    /// Mean pairwise Cohen's κ between judges.
    pub mean_kappa: f64,
    /// Mean pairwise exact-match rate between judges.
    pub agreement: f64,
    pub unanimity: f64,
    pub split: f64,
    pub fleiss_kappa: f64,
    /// Per-judge Cohen's κ against the gold labels.
    pub kappa_gt: [f64; 3],
    pub ece: f64,
    pub buckets: Vec<CalibrationBucket>,
    pub ks_stability: Option<f64>,
    pub sycophancy: Option<SycophancyReport>,
}

pub fn evaluate(outcomes: &[LabeledOutcome], edges: &[f64]) -> Result<EvaluationReport, MetricsError> {
    let pairs: Vec<(Label, Label)> = outcomes.iter().map(|o| (o.predicted, o.gold)).collect();
    let cls = classification_metrics(&pairs)?;
    let verdicts: Vec<[Verdict; 3]> = outcomes.iter().map(|o| o.per_judge_verdicts).collect();
    let gold: Vec<Label> = outcomes.iter().map(|o| o.gold).collect();
    let mut kappa_gt = [0.0; 3];
    for (j, k) in kappa_gt.iter_mut().enumerate() {
        let judged: Vec<Label> = verdicts.iter().map(|v| map_label(v[j])).collect();
        *k = cohen_kappa(&judged, &gold)?;
    }
    let rows: Vec<Vec<Verdict>> = verdicts.iter().map(|v| v.to_vec()).collect();
    let conf_pairs: Vec<(f64, bool)> = outcomes.iter().map(|o| (o.confidence, o.correct())).collect();
    let buckets = calibration_buckets(&conf_pairs, edges)?;
    let rounds: Vec<f64> = outcomes.iter().flat_map(|o| o.round_confidences.iter().copied()).collect();
    let finals: Vec<f64> = outcomes.iter().map(|o| o.confidence).collect();
    let unan = unanimity(&verdicts);
    Ok(EvaluationReport {
        n: outcomes.len(),
        accuracy: cls.accuracy,
        macro_f1: cls.macro_f1,
        per_class: cls.per_class,
        mean_kappa: mean_pairwise_kappa(&verdicts)?,
        agreement: pairwise_agreement(&verdicts),
        unanimity: unan,
        split: 1.0 - unan,
        fleiss_kappa: fleiss_kappa(&rows)?,
        kappa_gt,
        ece: ece_from_buckets(&buckets),
        buckets,
        ks_stability: ks_statistic(&rounds, &finals).ok(),
        sycophancy: None,
    })
}

impl EvaluationReport {
    /// Plain-text summary table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("Claims scored: {}\n\n", self.n));
        out.push_str("  Acc    m-F1   k-bar  Agr.   Unan.  Split\n");
        out.push_str(&format!(
            "  {:.3}  {:.3}  {:.3}  {:.3}  {:.3}  {:.3}\n\n",
            self.accuracy, self.macro_f1, self.mean_kappa, self.agreement, self.unanimity, self.split
        ));
        out.push_str(&format!(
            "Per-judge kappa vs gold: J1 {:.3}  J2 {:.3}  J3 {:.3}\n",
            self.kappa_gt[0], self.kappa_gt[1], self.kappa_gt[2]
        ));
        out.push_str(&format!("Fleiss kappa: {:.3}\n", self.fleiss_kappa));
        for (label, s) in &self.per_class {
            out.push_str(&format!(
                "{:<8} P {:.3}  R {:.3}  F1 {:.3}  (n={})\n",
                label.as_str(),
                s.precision,
                s.recall,
                s.f1,
                s.support
            ));
        }
        out.push_str(&format!("\nECE: {:.4}\n", self.ece));
        out.push_str("  bin          n     acc    conf\n");
        for b in self.buckets.iter().filter(|b| b.count > 0) {
            out.push_str(&format!(
                "  [{:.1}, {:.1}{}  {:>4}  {:.4}  {:.4}\n",
                b.lo,
                b.hi,
                if b.hi >= 1.0 { "]" } else { ")" },
                b.count,
                b.observed_acc,
                b.mean_conf
            ));
        }
        match self.ks_stability {
            Some(d) => out.push_str(&format!("KS stability D: {d:.4}\n")),
            None => out.push_str("KS stability D: n/a\n"),
        }
        if let Some(s) = &self.sycophancy {
            out.push_str(&format!(
                "\nConcessions per 1000 words: plaintiff {:.3}, defense {:.3}\nMean |dS|: {:.3}\n",
                s.concession_rate_plaintiff, s.concession_rate_defense, s.mean_reflection_delta
            ));
            if let Some(o) = s.mean_overall_consistency {
                out.push_str(&format!("Mean role-switch consistency: {o:.2}/10\n"));
            }
        }
        out
    }
}
