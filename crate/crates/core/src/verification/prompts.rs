//! Prompt templates shipped as plain-text assets with `{name}` placeholders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SYSTEM: &str = include_str!("../../assets/prompts/system.txt");
pub const ANSWER_TERNARY: &str = include_str!("../../assets/prompts/answer_ternary.txt");
pub const ANSWER_MCQ: &str = include_str!("../../assets/prompts/answer_mcq.txt");
pub const PLAN_QUESTIONS: &str = include_str!("../../assets/prompts/plan_questions.txt");
pub const PLAN_QUESTIONS_RETRY: &str = include_str!("../../assets/prompts/plan_questions_retry.txt");
pub const STEP_VERIFY: &str = include_str!("../../assets/prompts/step_verify.txt");
pub const INDEPENDENT_ANSWER: &str = include_str!("../../assets/prompts/independent_answer.txt");
pub const COVE_JUDGE: &str = include_str!("../../assets/prompts/cove_judge.txt");
pub const CONTEXTUAL_ANSWER: &str = include_str!("../../assets/prompts/contextual_answer.txt");
const EXEMPLARS_JSON: &str = include_str!("../../assets/prompts/few_shot_exemplars.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarPair {
    pub statement: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplars {
    pub version: u32,
    pub pairs: Vec<ExemplarPair>,
}

impl Exemplars {
    pub fn shipped() -> Self {
        serde_json::from_str(EXEMPLARS_JSON).expect("bundled exemplars are valid JSON")
    }

    pub fn render(&self) -> String {
        self.pairs
            .iter()
            .map(|p| format!("Statement: {}\nVerification question: {}", p.statement, p.question))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// Substitute `{name}` placeholders in one pass over the template.
///
/// Substituted values are never rescanned. A `{` that does not start a
/// `{identifier}` is copied through; an identifier with no value is an error.
pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let ident_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        if ident_len > 0 && after[ident_len..].starts_with('}') {
            let name = &after[..ident_len];
            let value = vars
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Template(format!("no value for placeholder `{{{name}}}`")))?;
            out.push_str(value);
            rest = &after[ident_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out.trim_end().to_string())
}

/// Placeholder names used by a template, in order of appearance.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        if len > 0 && after[len..].starts_with('}') {
            names.push(&after[..len]);
            rest = &after[len + 1..];
        } else {
            rest = after;
        }
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_once_without_rescanning_values() {
        let out = render("Q: {question} / {x}", &[("question", "{x}"), ("x", "1")]).unwrap();
        assert_eq!(out, "Q: {x} / 1");
    }

    #[test]
    fn leaves_non_placeholder_braces() {
        assert_eq!(render("a {b c} {", &[]).unwrap(), "a {b c} {");
    }

    #[test]
    fn missing_value_is_an_error() {
        assert!(matches!(render("{step}", &[]), Err(Error::Template(_))));
    }

    #[test]
    fn shipped_templates_use_expected_placeholders() {
        assert_eq!(placeholders(ANSWER_TERNARY), ["context", "question"]);
        assert_eq!(placeholders(ANSWER_MCQ), ["question", "options"]);
        assert_eq!(placeholders(INDEPENDENT_ANSWER), ["verification_question"]);
        assert_eq!(placeholders(CONTEXTUAL_ANSWER), ["step", "verification_question"]);
        assert_eq!(placeholders(STEP_VERIFY), ["context", "step"]);
        assert_eq!(placeholders(COVE_JUDGE), ["step", "answer"]);
    }

    #[test]
    fn exemplars_include_sideroblast_pair() {
        let ex = Exemplars::shipped();
        assert_eq!(ex.pairs.len(), 3);
        assert!(ex.pairs.iter().any(|p| p.question
            == "What condition are ringed sideroblasts typically indicative of?"));
    }

    #[test]
    fn contextual_prompt_puts_step_under_context_header() {
        let p = render(CONTEXTUAL_ANSWER, &[("step", "S."), ("verification_question", "Q?")]).unwrap();
        assert!(p.starts_with("Context:\nS.\n"));
        assert!(p.find("S.").unwrap() < p.find("Q?").unwrap());
    }
}
