use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The seven uncertainty estimators, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Lexical Similarity.
    Ls,
    /// Semantic Entropy.
    Se,
    /// Predictive Entropy.
    Pe,
    /// Length-normalized Entropy.
    Le,
    Step,
    Cove,
    TwoPhase,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Ls,
        Method::Se,
        Method::Pe,
        Method::Le,
        Method::Step,
        Method::Cove,
        Method::TwoPhase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::Se => "se",
            Method::Pe => "pe",
            Method::Le => "le",
            Method::Step => "step",
            Method::Cove => "cove",
            Method::TwoPhase => "two_phase",
        }
    }

    /// Column heading used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Ls => "LS",
            Method::Se => "SE",
            Method::Pe => "PE",
            Method::Le => "LE",
            Method::Step => "Step",
            Method::Cove => "CoVe",
            Method::TwoPhase => "Two-phase",
        }
    }

    /// Sampling-based methods need several generations at non-zero temperature.
    pub fn is_sampling(self) -> bool {
        matches!(self, Method::Ls | Method::Se | Method::Pe | Method::Le)
    }

    /// Methods that read token log-probabilities.
    pub fn needs_logprobs(self) -> bool {
        matches!(self, Method::Se | Method::Pe | Method::Le)
    }

    pub fn is_verification(self) -> bool {
        matches!(self, Method::Step | Method::Cove | Method::TwoPhase)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == norm || m.label().to_ascii_lowercase().replace('-', "_") == norm)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}
