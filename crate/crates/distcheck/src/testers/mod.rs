//! The regime testers and their verdict type.

mod giant;
mod large;
mod small;

pub use giant::{
    classical_baseline, collision_stats, modeled_quantum_cost, run_giant, sample_count_giant,
    GiantConfig, ANALYSIS_A_COEF, DEFAULT_A_COEF, DEFAULT_C_CLOSE,
};
pub use large::{
    centered_frequency_rv, choose_l, phase1_statistics, run_large, sample_count, Counts,
    LargeConfig, DEFAULT_BIG_C_CONST, DEFAULT_B_CONST, DEFAULT_C_CONST,
};
pub use small::{
    run_small, subset_draw, SmallConfig, SubsetMask, DEFAULT_DELTA_ROUND, DEFAULT_PRECISION,
    DEFAULT_ROUNDS, DEFAULT_THETA_STAR, DEFAULT_VOTE_THRESHOLD,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Accept,
    Reject,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::Accept => write!(f, "accept"),
            Decision::Reject => write!(f, "reject"),
        }
    }
}

/// Which rule produced the decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    /// A Phase-1 count reached the cap `L`.
    LInfCheck,
    /// Comparison of the mean estimate against the acceptance threshold.
    MeanThreshold,
    CollisionFound,
    NoCollision,
    /// The per-round vote against the vote threshold.
    RoundVote,
}

impl std::fmt::Display for Reason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Reason::LInfCheck => "l-inf-check",
            Reason::MeanThreshold => "mean-threshold",
            Reason::CollisionFound => "collision-found",
            Reason::NoCollision => "no-collision",
            Reason::RoundVote => "round-vote",
        };
        write!(f, "{s}")
    }
}

/// A tester's decision plus enough diagnostics to audit which rule fired
/// and what the run cost.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub reason: Reason,
    /// The mean estimate, when the run reached estimation.
    pub mu_hat: Option<f64>,
    /// Code uses charged by this run (all phases).
    pub code_uses: u64,
    pub diagnostics: BTreeMap<String, f64>,
}

impl Verdict {
    pub(crate) fn new(decision: Decision, reason: Reason, code_uses: u64) -> Self {
        Self {
            decision,
            reason,
            mu_hat: None,
            code_uses,
            diagnostics: BTreeMap::new(),
        }
    }

    pub(crate) fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}
