//! Answer-and-explanation generation, verification-question planning and
//! the three verification executors (Step, CoVe, Two-phase).
//!
//! Each executor yields one [`VerificationItem`] per explanation step; the
//! uncertainty level of a question is the fraction of items judged
//! inconsistent. All chain calls decode greedily.

pub mod prompts;
pub mod segment;
pub mod verdict;

use serde::{Deserialize, Serialize};

use crate::backend::{ChatMessage, Completion, Gateway, SamplingParams};
use crate::datasets::{parse_answer, DatasetKind, QARecord};
use crate::entailment::Entailer;
use crate::error::{Error, Result};
use crate::method::Method;

pub use prompts::{render, Exemplars};
pub use segment::{segment_explanation, split_answer, ExplanationStep};
pub use verdict::parse_verdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationItem {
    pub step: ExplanationStep,
    /// Absent for Step Verification, which works without questions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub independent_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contextual_answer: Option<String>,
    pub consistent: bool,
    /// Verdict could not be parsed or the NLI call failed; counted inconsistent.
    #[serde(default)]
    pub flagged: bool,
    pub method: Method,
    pub cache_keys: Vec<String>,
}

impl VerificationItem {
    /// Field-presence rules tying answers to the method.
    pub fn check_shape(&self) -> Result<()> {
        let ok = match self.method {
            Method::Step => {
                self.independent_answer.is_none() && self.contextual_answer.is_none()
            }
            Method::Cove => {
                self.independent_answer.is_some()
                    && self.contextual_answer.is_none()
                    && self.question.is_some()
            }
            Method::TwoPhase => {
                self.independent_answer.is_some()
                    && self.contextual_answer.is_some()
                    && self.question.is_some()
            }
            other => {
                return Err(Error::ContractViolation(format!(
                    "{other} is not a verification method"
                )))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ContractViolation(format!(
                "verification item for step {} has fields inconsistent with {}",
                self.step.index, self.method
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyLevel {
    pub value: f64,
    pub degenerate: bool,
}

/// `inconsistent / total`. With nothing to check the level is 1.0 and the
/// result is marked degenerate.
pub fn uncertainty_level(inconsistent: usize, total: usize) -> Result<UncertaintyLevel> {
    if inconsistent > total {
        return Err(Error::ContractViolation(format!(
            "{inconsistent} inconsistent statements out of {total}"
        )));
    }
    if total == 0 {
        return Ok(UncertaintyLevel {
            value: 1.0,
            degenerate: true,
        });
    }
    Ok(UncertaintyLevel {
        value: inconsistent as f64 / total as f64,
        degenerate: false,
    })
}

/// Uncertainty level recomputed from stored items.
pub fn level_from_items(items: &[VerificationItem]) -> Result<UncertaintyLevel> {
    uncertainty_level(items.iter().filter(|i| !i.consistent).count(), items.len())
}

/// The greedy answer with its explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerDraft {
    pub reply: String,
    pub answer_text: String,
    pub parsed_answer: Option<String>,
    pub steps: Vec<ExplanationStep>,
    pub cache_key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedQuestions {
    pub questions: Vec<String>,
    /// Step indices whose question fell back to the statement template.
    pub padded: Vec<usize>,
    pub cache_keys: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub answer_max_tokens: u32,
    pub verify_max_tokens: u32,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            answer_max_tokens: 512,
            verify_max_tokens: 256,
        }
    }
}

pub fn answer_prompt(record: &QARecord) -> Result<String> {
    match record.dataset {
        DatasetKind::Pubmedqa => render(
            prompts::ANSWER_TERNARY,
            &[
                ("context", record.context.as_deref().unwrap_or_default()),
                ("question", &record.question),
            ],
        ),
        DatasetKind::Medqa | DatasetKind::Medmcqa => render(
            prompts::ANSWER_MCQ,
            &[("question", &record.question), ("options", &record.options_block())],
        ),
    }
}

pub fn independent_prompt(question: &str) -> Result<String> {
    render(prompts::INDEPENDENT_ANSWER, &[("verification_question", question)])
}

pub fn contextual_prompt(step: &str, question: &str) -> Result<String> {
    render(
        prompts::CONTEXTUAL_ANSWER,
        &[("step", step), ("verification_question", question)],
    )
}

pub fn step_verify_prompt(prior: &[ExplanationStep], step: &ExplanationStep) -> Result<String> {
    let context = if prior.is_empty() {
        "(none)".to_string()
    } else {
        prior.iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join("\n")
    };
    render(prompts::STEP_VERIFY, &[("context", &context), ("step", &step.text)])
}

pub fn cove_judge_prompt(step: &str, answer: &str) -> Result<String> {
    render(prompts::COVE_JUDGE, &[("step", step), ("answer", answer)])
}

pub fn plan_prompt(steps: &[ExplanationStep], exemplars: &Exemplars) -> Result<String> {
    let statements = steps
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.text))
        .collect::<Vec<_>>()
        .join("\n");
    render(
        prompts::PLAN_QUESTIONS,
        &[
            ("exemplars", &exemplars.render()),
            ("count", &steps.len().to_string()),
            ("statements", &statements),
        ],
    )
}

/// Fallback question for a step the planner did not cover.
pub fn fallback_question(step: &str) -> String {
    let core = step.trim().trim_end_matches(['.', '!', '?', ';', ':']);
    format!("Is the following statement true: {core}?")
}

/// Numbered questions from a planner reply, in order. Without a list,
/// every line ending in `?` counts as a question.
pub fn parse_questions(reply: &str) -> Vec<String> {
    match segment::list_items(reply) {
        Some(items) => items.into_iter().filter(|q| !q.trim().is_empty()).collect(),
        None => reply
            .lines()
            .map(str::trim)
            .filter(|l| l.ends_with('?'))
            .map(str::to_string)
            .collect(),
    }
}

/// Drives the verification chain for one question at a time.
pub struct Verifier<'a> {
    gateway: &'a Gateway,
    entailer: &'a Entailer<'a>,
    exemplars: Exemplars,
    settings: ChainSettings,
}

impl<'a> Verifier<'a> {
    pub fn new(gateway: &'a Gateway, entailer: &'a Entailer<'a>, settings: ChainSettings) -> Self {
        Self {
            gateway,
            entailer,
            exemplars: Exemplars::shipped(),
            settings,
        }
    }

    fn ask(&self, user: String, max_tokens: u32) -> Result<Completion> {
        let messages = [ChatMessage::system(prompts::SYSTEM.trim_end()), ChatMessage::user(user)];
        self.gateway.complete(&messages, &SamplingParams::greedy(max_tokens))
    }

    fn ask_text(&self, user: String) -> Result<(String, String)> {
        let c = self.ask(user, self.settings.verify_max_tokens)?;
        let text = c.generations[0].text.trim().to_string();
        Ok((text, c.cache_key))
    }

    /// Chat messages for the answer prompt; sampling baselines reuse them.
    pub fn answer_messages(&self, record: &QARecord) -> Result<Vec<ChatMessage>> {
        Ok(vec![
            ChatMessage::system(prompts::SYSTEM.trim_end()),
            ChatMessage::user(answer_prompt(record)?),
        ])
    }

    pub fn generate_answer_and_explanation(&self, record: &QARecord) -> Result<AnswerDraft> {
        let c = self.ask(answer_prompt(record)?, self.settings.answer_max_tokens)?;
        let reply = c.generations[0].text.clone();
        let (answer_text, explanation) = split_answer(&reply);
        Ok(AnswerDraft {
            parsed_answer: parse_answer(&answer_text, record),
            steps: segment_explanation(&explanation),
            answer_text,
            reply,
            cache_key: c.cache_key,
        })
    }

    /// One verification question per step. A wrong count triggers one
    /// re-prompt; slots still missing get [`fallback_question`].
    pub fn plan_verification_questions(
        &self,
        steps: &[ExplanationStep],
        _record: &QARecord,
    ) -> Result<PlannedQuestions> {
        if steps.is_empty() {
            return Err(Error::ContractViolation("planning needs at least one step".into()));
        }
        let max_tokens = self.settings.verify_max_tokens.max(64 * steps.len() as u32);
        let plan = plan_prompt(steps, &self.exemplars)?;
        let first = self.ask(plan.clone(), max_tokens)?;
        let mut cache_keys = vec![first.cache_key];
        let mut questions = parse_questions(&first.generations[0].text);

        if questions.len() != steps.len() {
            let count = steps.len().to_string();
            let retry = render(prompts::PLAN_QUESTIONS_RETRY, &[("plan", &plan), ("count", &count)])?;
            let second = self.ask(retry, max_tokens)?;
            cache_keys.push(second.cache_key);
            let retried = parse_questions(&second.generations[0].text);
            // keep whichever attempt covers more steps
            if retried.len() == steps.len() || retried.len().min(steps.len()) > questions.len().min(steps.len()) {
                questions = retried;
            }
        }

        questions.truncate(steps.len());
        let mut padded = Vec::new();
        for step in &steps[questions.len()..] {
            padded.push(step.index);
            questions.push(fallback_question(&step.text));
        }
        Ok(PlannedQuestions {
            questions,
            padded,
            cache_keys,
        })
    }

    /// Each step judged true/false given the steps before it.
    pub fn step_verify(&self, steps: &[ExplanationStep], _record: &QARecord) -> Result<Vec<VerificationItem>> {
        steps
            .iter()
            .enumerate()
            .map(|(k, step)| {
                let (reply, key) = self.ask_text(step_verify_prompt(&steps[..k], step)?)?;
                let verdict = parse_verdict(&reply);
                Ok(VerificationItem {
                    step: step.clone(),
                    question: None,
                    independent_answer: None,
                    contextual_answer: None,
                    consistent: verdict.unwrap_or(false),
                    flagged: verdict.is_none(),
                    method: Method::Step,
                    cache_keys: vec![key],
                })
            })
            .collect()
    }

    fn check_questions(steps: &[ExplanationStep], questions: &[String]) -> Result<()> {
        if steps.len() != questions.len() {
            return Err(Error::ContractViolation(format!(
                "{} steps but {} verification questions",
                steps.len(),
                questions.len()
            )));
        }
        Ok(())
    }

    /// Answer each question without context, then ask the model whether
    /// that answer agrees with the step.
    pub fn cove_verify(
        &self,
        steps: &[ExplanationStep],
        questions: &[String],
        _record: &QARecord,
    ) -> Result<Vec<VerificationItem>> {
        Self::check_questions(steps, questions)?;
        steps
            .iter()
            .zip(questions)
            .map(|(step, question)| {
                let (independent, k1) = self.ask_text(independent_prompt(question)?)?;
                let (judgment, k2) = self.ask_text(cove_judge_prompt(&step.text, &independent)?)?;
                let verdict = parse_verdict(&judgment);
                Ok(VerificationItem {
                    step: step.clone(),
                    question: Some(question.clone()),
                    independent_answer: Some(independent),
                    contextual_answer: None,
                    consistent: verdict.unwrap_or(false),
                    flagged: verdict.is_none(),
                    method: Method::Cove,
                    cache_keys: vec![k1, k2],
                })
            })
            .collect()
    }

    /// Answer each question twice, without and then with the step as
    /// context; consistent iff the two answers mutually entail each other.
    pub fn two_phase_verify(
        &self,
        steps: &[ExplanationStep],
        questions: &[String],
        _record: &QARecord,
    ) -> Result<Vec<VerificationItem>> {
        Self::check_questions(steps, questions)?;
        steps
            .iter()
            .zip(questions)
            .map(|(step, question)| {
                let (independent, k1) = self.ask_text(independent_prompt(question)?)?;
                let (contextual, k2) = self.ask_text(contextual_prompt(&step.text, question)?)?;
                let (consistent, flagged) = if independent.is_empty() || contextual.is_empty() {
                    (false, true)
                } else {
                    match self
                        .entailer
                        .bidirectionally_equivalent(&independent, &contextual, question)
                    {
                        Ok(eq) => (eq, false),
                        Err(e) => {
                            log::warn!("NLI failed on step {}: {e}", step.index);
                            (false, true)
                        }
                    }
                };
                Ok(VerificationItem {
                    step: step.clone(),
                    question: Some(question.clone()),
                    independent_answer: Some(independent),
                    contextual_answer: Some(contextual),
                    consistent,
                    flagged,
                    method: Method::TwoPhase,
                    cache_keys: vec![k1, k2],
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncertainty_level_contract() {
        assert_eq!(uncertainty_level(2, 5).unwrap().value, 0.4);
        assert_eq!(uncertainty_level(0, 7).unwrap().value, 0.0);
        let d = uncertainty_level(0, 0).unwrap();
        assert_eq!(d.value, 1.0);
        assert!(d.degenerate);
        assert!(matches!(
            uncertainty_level(3, 2),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn fallback_question_template() {
        assert_eq!(
            fallback_question("Statement C."),
            "Is the following statement true: Statement C?"
        );
    }

    #[test]
    fn parse_numbered_questions() {
        let q = parse_questions("1. What is X?\n2. Which enzyme does Y inhibit?");
        assert_eq!(q, ["What is X?", "Which enzyme does Y inhibit?"]);
        let q = parse_questions("Here you go:\nWhat is X?\nWhich is Y?");
        assert_eq!(q, ["What is X?", "Which is Y?"]);
    }
}
