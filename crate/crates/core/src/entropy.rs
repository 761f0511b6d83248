//! Sampling-based uncertainty scores: Lexical Similarity, Predictive Entropy,
//! Length-normalized Entropy and Semantic Entropy.
//!
//! All scores are oriented so that larger means more uncertain. Natural
//! logarithms throughout.

use serde::{Deserialize, Serialize};

use crate::backend::Generation;
use crate::entailment::SemanticPartition;
use crate::error::{Error, Result};

/// Generations sampled for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub question_id: String,
    pub question_text: String,
    pub generations: Vec<Generation>,
}

impl SampleSet {
    fn require_samples(&self) -> Result<()> {
        if self.generations.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: self.generations.len(),
            });
        }
        Ok(())
    }

    fn logprobs(&self) -> Result<Vec<&[f64]>> {
        self.require_samples()?;
        self.generations.iter().map(Generation::logprobs).collect()
    }
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1. Equals `2·LCS / (|reference| + |candidate|)`, so it is
/// symmetric in its arguments. Zero when either side is empty.
pub fn rouge_l_f1<T: PartialEq>(reference: &[T], candidate: &[T]) -> f64 {
    if reference.is_empty() || candidate.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(reference, candidate);
    if lcs == 0 {
        return 0.0;
    }
    let precision = lcs as f64 / candidate.len() as f64;
    let recall = lcs as f64 / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn is_trailing_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '…' | '’' | '”' | '»' | '。' | '、')
}

/// Lowercase, split on Unicode whitespace, strip trailing punctuation.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|t| t.trim_end_matches(is_trailing_punct).to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// One minus the mean pairwise ROUGE-L F1 over all unordered pairs.
pub fn lexical_similarity_uncertainty(samples: &SampleSet) -> Result<f64> {
    samples.require_samples()?;
    let tokens: Vec<Vec<String>> = samples
        .generations
        .iter()
        .map(|g| rouge_tokens(&g.text))
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..tokens.len() {
        for j in i + 1..tokens.len() {
            total += rouge_l_f1(&tokens[i], &tokens[j]);
            pairs += 1;
        }
    }
    Ok(1.0 - total / pairs as f64)
}

/// Mean over samples of the sequence negative log-likelihood.
pub fn predictive_entropy(samples: &SampleSet) -> Result<f64> {
    let lps = samples.logprobs()?;
    let total: f64 = lps.iter().map(|l| -l.iter().sum::<f64>()).sum();
    Ok(total / lps.len() as f64)
}

fn mean_logprob(lps: &[f64], idx: usize) -> Result<f64> {
    if lps.is_empty() {
        return Err(Error::DegenerateSample(format!(
            "generation {idx} has no tokens"
        )));
    }
    Ok(lps.iter().sum::<f64>() / lps.len() as f64)
}

/// Mean over samples of the per-token negative log-likelihood.
pub fn length_normalized_entropy(samples: &SampleSet) -> Result<f64> {
    let lps = samples.logprobs()?;
    let mut total = 0.0;
    for (i, l) in lps.iter().enumerate() {
        total -= mean_logprob(l, i)?;
    }
    Ok(total / lps.len() as f64)
}

fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Shannon entropy over clusters, each weighted by the summed
/// length-normalized likelihoods of its members.
pub fn semantic_entropy(samples: &SampleSet, partition: &SemanticPartition) -> Result<f64> {
    let lps = samples.logprobs()?;
    partition.validate(lps.len())?;
    let log_weights = lps
        .iter()
        .enumerate()
        .map(|(i, l)| mean_logprob(l, i))
        .collect::<Result<Vec<f64>>>()?;
    let cluster_mass: Vec<f64> = partition
        .clusters
        .iter()
        .map(|c| log_sum_exp(c.iter().map(|&i| log_weights[i])))
        .collect();
    let log_total = log_sum_exp(cluster_mass.iter().copied());
    let entropy: f64 = cluster_mass
        .iter()
        .map(|lm| {
            let log_p = lm - log_total;
            -log_p.exp() * log_p
        })
        .sum();
    // bounded by [0, ln k]; clip rounding noise at the ends, including -0.0
    let upper = (cluster_mass.len() as f64).ln();
    Ok(if entropy <= 0.0 { 0.0 } else { entropy.min(upper) })
}
