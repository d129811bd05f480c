//! Prompt templates, one UTF-8 text asset per prompt.
//!
//! Placeholders are `{identifier}`; any other brace (JSON schemas inside the
//! prompts) is literal text.

use std::sync::OnceLock;

use regex::Regex;

use super::AgentError;

macro_rules! assets {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../prompts/", $name, ".txt")))),*]
    };
}

static TEMPLATES: &[(&str, &str)] = assets![
    "admissibility",
    "arbiter_system",
    "argument_turn",
    "consistency_analysis",
    "consistency_system",
    "court_completion_check",
    "court_expert_admissibility",
    "court_query_refinement",
    "court_system",
    "critic_round",
    "critic_system",
    "defense_instruction",
    "defense_system",
    "expert_instruction",
    "expert_request",
    "expert_system",
    "judge_evaluation",
    "judge_system",
    "json_repair",
    "miner_system",
    "negotiation",
    "plaintiff_instruction",
    "plaintiff_system",
    "prag_formulation",
    "prag_gap_proposal",
    "prag_system",
    "premise_decomposition",
    "self_reflection",
    "stance_queries",
];

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("static regex"))
}

/// Raw template text by id.
pub fn template(template_id: &str) -> Result<&'static str, AgentError> {
    TEMPLATES
        .iter()
        .find(|(id, _)| *id == template_id)
        .map(|(_, text)| text.trim_end())
        .ok_or_else(|| AgentError::UnknownTemplate(template_id.to_string()))
}

pub fn template_ids() -> impl Iterator<Item = &'static str> {
    TEMPLATES.iter().map(|(id, _)| *id)
}

/// Placeholder names of a template, in order of first appearance.
pub fn placeholders(text: &str) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for cap in placeholder_re().captures_iter(text) {
        let name = cap.get(1).map_or("", |m| m.as_str());
        if !out.contains(&name) {
            out.push(name);
        }
    }
    out
}

/// Substitutes every placeholder of an arbitrary template text in one pass.
///
/// Bound values are inserted verbatim and never re-scanned.
pub fn render_text(text: &str, bindings: &[(&str, &str)]) -> Result<String, AgentError> {
    let re = placeholder_re();
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for cap in re.captures_iter(text) {
        let whole = cap.get(0).expect("group 0");
        let name = &cap[1];
        let value = bindings
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| AgentError::MissingBinding(name.to_string()))?;
        out.push_str(&text[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}

/// Renders a stored template.
pub fn render_prompt(template_id: &str, bindings: &[(&str, &str)]) -> Result<String, AgentError> {
    render_text(template(template_id)?, bindings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_substitution() {
        assert_eq!(render_text("Claim: {claim_text}", &[("claim_text", "X")]).unwrap(), "Claim: X");
    }

    #[test]
    fn no_placeholders_is_identity() {
        let t = "no placeholders here {\"json\": 1}";
        assert_eq!(render_text(t, &[]).unwrap(), t);
    }

    #[test]
    fn missing_binding_names_placeholder() {
        match render_prompt("premise_decomposition", &[]) {
            Err(AgentError::MissingBinding(name)) => assert_eq!(name, "claim_text"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_template() {
        assert!(matches!(render_prompt("nope", &[]), Err(AgentError::UnknownTemplate(_))));
    }

    #[test]
    fn decomposition_prompt_carries_claim() {
        let claim = "Heart muscle cell damage is not an associated condition among hospitalized COVID-19 patients.";
        let p = render_prompt("premise_decomposition", &[("claim_text", claim)]).unwrap();
        assert!(p.contains("decompose it into its core"));
        assert!(p.contains(claim));
    }

    #[test]
    fn values_are_not_rescanned() {
        let out = render_text("{a}-{b}", &[("a", "{b}"), ("b", "x")]).unwrap();
        assert_eq!(out, "{b}-x");
    }

    #[test]
    fn every_asset_renders_when_fully_bound() {
        for id in template_ids() {
            let text = template(id).unwrap();
            let names = placeholders(text);
            let bindings: Vec<(&str, &str)> = names.iter().map(|n| (*n, "v")).collect();
            let out = render_prompt(id, &bindings).unwrap();
            assert!(placeholders(&out).is_empty(), "{id} left placeholders");
        }
    }

    proptest! {
        #[test]
        fn rendering_is_injective_over_bindings(
            a in "[a-z0-9 ]{0,12}", b in "[a-z0-9 ]{0,12}",
            c in "[a-z0-9 ]{0,12}", d in "[a-z0-9 ]{0,12}",
        ) {
            let t = "Proposed Query: \"{q}\"\nContext of proceedings:\n{ctx}\nend";
            let x = render_text(t, &[("q", &a), ("ctx", &b)]).unwrap();
            let y = render_text(t, &[("q", &c), ("ctx", &d)]).unwrap();
            prop_assert_eq!(x == y, a == c && b == d);
        }
    }
}
