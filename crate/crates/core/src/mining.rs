//! Claim decomposition into atomic premises.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::runtime::{render_prompt, AgentError, AgentRuntime, RoleId};

/// Default soft cap on the number of premises kept from one decomposition.
pub const DEFAULT_PREMISE_CAP: usize = 15;

/// Binary dataset label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Support,
    Refute,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Support => "SUPPORT",
            Label::Refute => "REFUTE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub claim_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiseSet {
    pub premises: Vec<String>,
    /// The miner's reply held no usable premise and the claim itself stands in.
    pub fallback: bool,
    /// More premises were parsed than the cap allowed.
    pub truncated: bool,
    pub raw_reply: String,
}

fn numbered_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[*_>#-]+\s*)?\d+\s*[.)]\s*(.*)$").expect("static regex"))
}

fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_emphasis(text: &str) -> &str {
    let mut body = text.trim();
    loop {
        let next = body.trim_matches(|c| c == '*' || c == '_').trim();
        if next == body {
            return body;
        }
        body = next;
    }
}

/// Parses a numbered list out of a miner reply.
///
/// Lines must start with `N.` or `N)`, optionally behind markdown emphasis or
/// a bullet. Numbering and outer emphasis are stripped, whitespace collapsed,
/// and repeats dropped keeping the first occurrence.
pub fn parse_premises(reply: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in reply.lines() {
        let Some(cap) = numbered_line().captures(line) else { continue };
        let premise = normalize_ws(strip_emphasis(&cap[1]));
        if !premise.is_empty() && !out.contains(&premise) {
            out.push(premise);
        }
    }
    out
}

/// Asks the miner to decompose `claim` and parses its premises.
pub fn decompose(claim: &Claim, runtime: &AgentRuntime, cap: usize) -> Result<PremiseSet, AgentError> {
    let prompt = render_prompt("premise_decomposition", &[("claim_text", &claim.text)])?;
    let reply = runtime.ask(RoleId::Miner, "premise_decomposition", &prompt)?;
    let mut premises = parse_premises(&reply);
    let mut fallback = false;
    let mut truncated = false;
    if premises.is_empty() {
        tracing::warn!(claim = %claim.claim_id, "no premises parsed, falling back to the claim text");
        premises.push(normalize_ws(&claim.text));
        fallback = true;
    } else if premises.len() > cap {
        tracing::warn!(claim = %claim.claim_id, parsed = premises.len(), cap, "premise list truncated");
        premises.truncate(cap);
        truncated = true;
    }
    Ok(PremiseSet { premises, fallback, truncated, raw_reply: reply })
}
