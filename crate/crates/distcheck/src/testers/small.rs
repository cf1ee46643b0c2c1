//! The small-distance closeness tester: hash the domain down to two elements
//! with a uniformly random subset, estimate the subset masses of both
//! distributions, and vote over rounds.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::access::SourceCode;
use crate::error::{Error, Result};
use crate::qme::{qme_estimate, QmeConfig, Rv};
use crate::scalar::Scalar;
use crate::testers::{Decision, Reason, Verdict};

pub const DEFAULT_ROUNDS: u64 = 4000;
/// Midpoint of the two per-round regimes `1/3` and `1/sqrt(8)` (as a
/// multiple of `tau`); the config invariant keeps it strictly between them
/// after accounting for estimate error.
pub const DEFAULT_THETA_STAR: f64 = 0.34345;
pub const DEFAULT_PRECISION: f64 = 1.0 / 400.0;
pub const DEFAULT_DELTA_ROUND: f64 = 1.0 / 600.0;
pub const DEFAULT_VOTE_THRESHOLD: f64 = 7.0 / 192.0;

/// A subset of `[k]`, each element included independently with probability 1/2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsetMask {
    k: usize,
    words: Vec<u64>,
}

impl SubsetMask {
    pub fn random<R: Rng>(k: usize, rng: &mut R) -> Self {
        let n_words = k.div_ceil(64);
        let mut words: Vec<u64> = (0..n_words).map(|_| rng.gen()).collect();
        // Mask off the tail so size() is exact.
        let tail = k % 64;
        if tail != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        Self { k, words }
    }

    pub fn from_indices(k: usize, indices: &[usize]) -> Self {
        let mut words = vec![0u64; k.div_ceil(64)];
        for &i in indices {
            assert!(i < k);
            words[i / 64] |= 1 << (i % 64);
        }
        Self { k, words }
    }

    /// The subset encoded by the low `k` bits of `bits` (for exhaustive
    /// enumeration at small `k`).
    pub fn from_bits(k: usize, bits: u64) -> Self {
        assert!(k <= 64);
        let mask = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
        Self {
            k,
            words: vec![bits & mask],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn contains(&self, j: usize) -> bool {
        self.words[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn size(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.k).filter(|&j| self.contains(j)).collect()
    }

    /// The 0/1 indicator table of the subset; its mean under `p` is `p(S)`.
    pub fn indicator<S: Scalar>(&self) -> Rv<S> {
        let entries = self
            .indices()
            .into_iter()
            .map(|j| (j as u32, S::one()))
            .collect();
        Rv::sparse(self.k, S::zero(), entries).expect("indices lie in the domain")
    }
}

/// Draw a uniformly random subset together with its indicator table.
pub fn subset_draw<R: Rng>(k: usize, rng: &mut R) -> (SubsetMask, Rv<f64>) {
    let mask = SubsetMask::random(k, rng);
    let rv = mask.indicator();
    (mask, rv)
}

/// Configuration of the small-regime (l2 closeness) tester.
#[derive(Clone, Debug)]
pub struct SmallConfig {
    /// The l2 distance threshold.
    pub tau: f64,
    /// Number of voting rounds `T`.
    pub rounds: u64,
    /// Per-round decision threshold, as a multiple of `tau`.
    pub theta_star: f64,
    /// Each subset mass is estimated to within this multiple of `tau`.
    pub per_estimate_precision: f64,
    /// Failure probability of each estimate.
    pub delta_round: f64,
    /// Accept iff the fraction of triggered rounds is at most this.
    pub vote_threshold: f64,
    /// Backend/noise template; accuracy and failure probability are derived.
    pub qme: QmeConfig,
}

impl SmallConfig {
    pub fn new(tau: f64) -> Result<Self> {
        let cfg = Self {
            tau,
            rounds: DEFAULT_ROUNDS,
            theta_star: DEFAULT_THETA_STAR,
            per_estimate_precision: DEFAULT_PRECISION,
            delta_round: DEFAULT_DELTA_ROUND,
            vote_threshold: DEFAULT_VOTE_THRESHOLD,
            qme: QmeConfig::new(1, DEFAULT_DELTA_ROUND),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        let cfg = Self {
            tau,
            ..self.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::InvalidParameter(format!("tau {} must be positive", self.tau)));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("rounds must be positive".into()));
        }
        if !(self.delta_round > 0.0 && self.delta_round < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "delta_round {} outside (0, 1/2)",
                self.delta_round
            )));
        }
        if self.vote_threshold.is_nan() || self.vote_threshold < 0.0 {
            return Err(Error::InvalidParameter("vote threshold must be nonnegative".into()));
        }
        // The round decision must separate the two per-round regimes even
        // after both estimates err by their full precision.
        let lo = 1.0 / 3.0 + 2.0 * self.per_estimate_precision;
        let hi = 1.0 / 8.0f64.sqrt() - 2.0 * self.per_estimate_precision;
        if !(self.theta_star > lo && self.theta_star < hi) {
            return Err(Error::InvalidParameter(format!(
                "theta_star {} outside the separating interval ({lo}, {hi})",
                self.theta_star
            )));
        }
        if 1.0 / (2.0 * self.per_estimate_precision * self.tau) > 1e15 {
            return Err(Error::InvalidParameter(
                "estimate accuracy parameter overflows; raise tau or the precision".into(),
            ));
        }
        Ok(())
    }

    /// The mean-estimation accuracy parameter: a subset-mass indicator has
    /// sigma <= 1/2, so this guarantees `sigma/n <= precision * tau`.
    pub fn estimate_accuracy(&self) -> u64 {
        (1.0 / (2.0 * self.per_estimate_precision * self.tau)).ceil().max(1.0) as u64
    }
}

/// Run the closeness tester on two codes over the same domain.
///
/// Per round: draw a subset, estimate both subset masses, trigger the round
/// iff the estimates differ by more than `theta_star * tau`; accept iff the
/// triggered fraction is at most `vote_threshold` (inclusive).
pub fn run_small(
    code_p: &mut SourceCode,
    code_q: &mut SourceCode,
    cfg: &SmallConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Verdict> {
    cfg.validate()?;
    let k = code_p.domain_size();
    if code_q.domain_size() != k {
        return Err(Error::DimensionMismatch(k, code_q.domain_size()));
    }
    let p_before = code_p.ledger().code_uses();
    let q_before = code_q.ledger().code_uses();
    let n_qme = cfg.estimate_accuracy();
    let qme_cfg = QmeConfig {
        n: n_qme,
        delta: cfg.delta_round,
        ..cfg.qme.clone()
    };
    let mut votes = 0u64;
    for _ in 0..cfg.rounds {
        let (_, y) = subset_draw(k, rng);
        let p_hat = qme_estimate(code_p, &y, &qme_cfg, rng)?;
        let q_hat = qme_estimate(code_q, &y, &qme_cfg, rng)?;
        if (p_hat.value - q_hat.value).abs() > cfg.theta_star * cfg.tau {
            votes += 1;
        }
    }
    let vote_mean = votes as f64 / cfg.rounds as f64;
    let decision = if vote_mean <= cfg.vote_threshold {
        Decision::Accept
    } else {
        Decision::Reject
    };
    let p_uses = code_p.ledger().code_uses() - p_before;
    let q_uses = code_q.ledger().code_uses() - q_before;
    Ok(Verdict::new(decision, Reason::RoundVote, p_uses + q_uses)
        .with("rounds", cfg.rounds as f64)
        .with("votes", votes as f64)
        .with("vote_mean", vote_mean)
        .with("vote_threshold", cfg.vote_threshold)
        .with("n_qme", n_qme as f64)
        .with("p_uses", p_uses as f64)
        .with("q_uses", q_uses as f64))
}
