//! Uncertainty estimation for LLM answers to medical questions.
//!
//! Seven estimators share one answer per question: three verification
//! chains (step verification, chain-of-verification, two-phase
//! verification) and four sampling baselines (lexical similarity,
//! predictive, length-normalized and semantic entropy). Scores are ranked
//! against answer correctness with AUROC.
//!
//! All model traffic goes through [`backend::Gateway`], which caches every
//! response on disk so runs can be replayed offline.

pub mod backend;
pub mod config;
pub mod datasets;
pub mod entailment;
pub mod entropy;
pub mod error;
pub mod evaluation;
pub mod method;
pub mod pipeline;
pub mod run;
pub mod verification;

pub use error::{Error, Result};
pub use method::Method;
