//! Scores one question under every requested method.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{Gateway, SamplingParams};
use crate::datasets::{grade, DatasetKind, QARecord};
use crate::entailment::{Entailer, EntailmentConfig, NliJudge};
use crate::entropy::{
    length_normalized_entropy, lexical_similarity_uncertainty, predictive_entropy, semantic_entropy,
    SampleSet,
};
use crate::error::{Error, Result};
use crate::method::Method;
use crate::verification::{level_from_items, AnswerDraft, ChainSettings, PlannedQuestions, VerificationItem, Verifier};

/// Per-question, per-method score with the correctness of the greedy answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyResult {
    pub question_id: String,
    pub dataset: DatasetKind,
    pub model: String,
    pub method: Method,
    pub score: f64,
    pub parsed_answer: Option<String>,
    pub gold: String,
    pub correct: bool,
    /// Answer unparseable, or no explanation step to verify.
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub items: Vec<VerificationItem>,
    /// Semantic clusters over the samples (SE only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<Vec<Vec<usize>>>,
    /// Cache keys of every prompt that fed this score.
    pub cache_keys: Vec<String>,
}

impl UncertaintyResult {
    /// Range and shape checks; verification scores must equal the fraction
    /// of inconsistent stored items.
    pub fn check(&self) -> Result<()> {
        if !self.score.is_finite() || self.score < 0.0 {
            return Err(Error::ContractViolation(format!("score {} out of range", self.score)));
        }
        if self.method.is_verification() {
            if self.score > 1.0 {
                return Err(Error::ContractViolation(format!(
                    "verification score {} above 1",
                    self.score
                )));
            }
            for item in &self.items {
                item.check_shape()?;
            }
            let level = level_from_items(&self.items)?;
            if level.value != self.score {
                return Err(Error::ContractViolation(format!(
                    "stored score {} differs from item-derived level {}",
                    self.score, level.value
                )));
            }
        }
        Ok(())
    }
}

/// Outcome for one (question, method).
pub type MethodOutcome = (Method, Result<UncertaintyResult>);

#[derive(Debug, Clone, PartialEq)]
pub struct EngineSettings {
    pub chain: ChainSettings,
    /// Sampling for the entropy baselines; `want_logprobs` is set per call.
    pub sampling: SamplingParams,
    pub entailment: EntailmentConfig,
}

impl Default for EngineSettings {
    fn default() -> Self {
        let chain = ChainSettings::default();
        Self {
            sampling: SamplingParams::entropy_protocol(chain.answer_max_tokens),
            chain,
            entailment: EntailmentConfig::default(),
        }
    }
}

pub struct Engine {
    pub gateway: Arc<Gateway>,
    pub judge: Arc<dyn NliJudge>,
    pub settings: EngineSettings,
    pub model: String,
}

struct Base<'r> {
    record: &'r QARecord,
    draft: AnswerDraft,
    correct: bool,
}

impl Engine {
    pub fn new(gateway: Arc<Gateway>, judge: Arc<dyn NliJudge>, settings: EngineSettings, model: impl Into<String>) -> Self {
        Self {
            gateway,
            judge,
            settings,
            model: model.into(),
        }
    }

    fn result(&self, base: &Base, method: Method, score: f64, extra_keys: Vec<String>) -> UncertaintyResult {
        let mut cache_keys = vec![base.draft.cache_key.clone()];
        cache_keys.extend(extra_keys);
        UncertaintyResult {
            question_id: base.record.id.clone(),
            dataset: base.record.dataset,
            model: self.model.clone(),
            method,
            score,
            parsed_answer: base.draft.parsed_answer.clone(),
            gold: base.record.gold.clone(),
            correct: base.correct,
            degenerate: base.draft.parsed_answer.is_none(),
            items: Vec::new(),
            clusters: None,
            cache_keys,
        }
    }

    /// Run every method in `methods` on one record. Chain stages run in
    /// order; a failure in one method does not stop the others unless the
    /// shared answer generation itself failed.
    pub fn score_question(&self, record: &QARecord, methods: &[Method]) -> Vec<MethodOutcome> {
        let entailer = Entailer::new(self.judge.as_ref(), self.settings.entailment.clone());
        let verifier = Verifier::new(&self.gateway, &entailer, self.settings.chain);

        let draft = match verifier.generate_answer_and_explanation(record) {
            Ok(d) => d,
            Err(e) => {
                let msg = e.to_string();
                return methods
                    .iter()
                    .map(|&m| (m, Err(Error::BackendUnavailable(format!("answer generation failed: {msg}")))))
                    .collect();
            }
        };
        let base = Base {
            record,
            correct: grade(draft.parsed_answer.as_deref(), record),
            draft,
        };

        let mut out = Vec::with_capacity(methods.len());
        let mut samples: Option<Result<(SampleSet, String)>> = None;
        let mut plan: Option<Result<PlannedQuestions>> = None;

        for &method in methods {
            let outcome = if method.is_sampling() {
                let sampled = samples.get_or_insert_with(|| self.sample(&verifier, record, methods));
                match sampled {
                    Ok((set, key)) => self.score_sampling(&base, &entailer, method, set, key),
                    Err(e) => Err(clone_err(e)),
                }
            } else {
                self.score_verification(&base, &verifier, method, &mut plan)
            };
            out.push((method, outcome.and_then(|r| r.check().map(|_| r))));
        }
        out
    }

    fn sample(&self, verifier: &Verifier, record: &QARecord, methods: &[Method]) -> Result<(SampleSet, String)> {
        let mut params = self.settings.sampling.clone();
        params.want_logprobs = methods.iter().any(|m| m.needs_logprobs());
        let messages = verifier.answer_messages(record)?;
        let completion = self.gateway.complete(&messages, &params)?;
        Ok((
            SampleSet {
                question_id: record.id.clone(),
                question_text: record.question.clone(),
                generations: completion.generations,
            },
            completion.cache_key,
        ))
    }

    fn score_sampling(
        &self,
        base: &Base,
        entailer: &Entailer,
        method: Method,
        set: &SampleSet,
        key: &str,
    ) -> Result<UncertaintyResult> {
        let keys = vec![key.to_string()];
        Ok(match method {
            Method::Ls => self.result(base, method, lexical_similarity_uncertainty(set)?, keys),
            Method::Pe => self.result(base, method, predictive_entropy(set)?, keys),
            Method::Le => self.result(base, method, length_normalized_entropy(set)?, keys),
            Method::Se => {
                let texts: Vec<&str> = set.generations.iter().map(|g| g.text.trim()).collect();
                if texts.iter().any(|t| t.is_empty()) {
                    return Err(Error::DegenerateSample("empty sampled answer".into()));
                }
                let partition = entailer.cluster_semantically(&texts, &set.question_text)?;
                let mut r = self.result(base, method, semantic_entropy(set, &partition)?, keys);
                r.clusters = Some(partition.clusters);
                r
            }
            other => unreachable!("{other} is not a sampling method"),
        })
    }

    fn score_verification(
        &self,
        base: &Base,
        verifier: &Verifier,
        method: Method,
        plan: &mut Option<Result<PlannedQuestions>>,
    ) -> Result<UncertaintyResult> {
        let steps = &base.draft.steps;
        if steps.is_empty() {
            let mut r = self.result(base, method, 1.0, Vec::new());
            r.degenerate = true;
            return Ok(r);
        }
        let (items, plan_keys) = match method {
            Method::Step => (verifier.step_verify(steps, base.record)?, Vec::new()),
            Method::Cove | Method::TwoPhase => {
                let planned = plan.get_or_insert_with(|| verifier.plan_verification_questions(steps, base.record));
                let planned = planned.as_ref().map_err(clone_err)?;
                let items = if method == Method::Cove {
                    verifier.cove_verify(steps, &planned.questions, base.record)?
                } else {
                    verifier.two_phase_verify(steps, &planned.questions, base.record)?
                };
                (items, planned.cache_keys.clone())
            }
            other => unreachable!("{other} is not a verification method"),
        };
        let level = level_from_items(&items)?;
        let mut keys = plan_keys;
        keys.extend(items.iter().flat_map(|i| i.cache_keys.iter().cloned()));
        let mut r = self.result(base, method, level.value, keys);
        r.degenerate |= level.degenerate;
        r.items = items;
        Ok(r)
    }
}

/// Errors are shared between methods that reuse one failed stage.
fn clone_err(e: &Error) -> Error {
    match e {
        Error::Capability(m) => Error::Capability(m.clone()),
        Error::InsufficientSamples { needed, got } => Error::InsufficientSamples {
            needed: *needed,
            got: *got,
        },
        Error::BackendRejected { status, body } => Error::BackendRejected {
            status: *status,
            body: body.clone(),
        },
        Error::MockScriptMiss(m) => Error::MockScriptMiss(m.clone()),
        Error::Protocol(m) => Error::Protocol(m.clone()),
        other => Error::BackendUnavailable(other.to_string()),
    }
}
