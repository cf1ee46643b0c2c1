//! The large-distance tester: Phase-1 draws build a centered frequency
//! statistic, a cap on the maximum count screens out heavy elements, and a
//! mean estimate of the statistic is compared against the threshold.

use rand_chacha::ChaCha8Rng;

use crate::access::SourceCode;
use crate::error::{Error, Result};
use crate::qme::{exact_moments, qme_estimate, QmeConfig, Rv};
use crate::testers::{Decision, Reason, Verdict};

pub const DEFAULT_B_CONST: f64 = 1.0;
/// Calibrated so that both the accept and reject guarantees hold with
/// margin at desk scale (k up to 1e4, thresholds 0.1..0.5). Overridable
/// in [`LargeConfig`].
pub const DEFAULT_C_CONST: f64 = 48.0;
pub const DEFAULT_BIG_C_CONST: f64 = 4.0;

/// Configuration of the large-regime tester.
///
/// `gamma` is the divergence threshold (chi-squared on the accept side,
/// squared Hellinger on the reject side). The constants `c` and `C` are the
/// "sufficiently large" calibration knobs; `B` bounds `||p||_inf <= B/k` in
/// the accept case.
#[derive(Clone, Debug)]
pub struct LargeConfig {
    pub gamma: f64,
    pub b_const: f64,
    pub c_const: f64,
    pub big_c_const: f64,
    /// Backend/noise/failure settings; the accuracy parameter `n` is derived
    /// per call as `ceil(C * n_draws)` and overrides whatever is here.
    pub qme: QmeConfig,
    /// Bypass the sample-count formula (used by the scaling benches).
    pub n_override: Option<u64>,
}

impl LargeConfig {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            b_const: DEFAULT_B_CONST,
            c_const: DEFAULT_C_CONST,
            big_c_const: DEFAULT_BIG_C_CONST,
            qme: QmeConfig::new(1, 1e-3),
            n_override: None,
        }
    }
}

/// Phase-1 sample count `ceil(c * k^{1/3} / gamma^{2/3})`.
pub fn sample_count(k: usize, gamma: f64, c_const: f64) -> u64 {
    (c_const * (k as f64).cbrt() / gamma.powf(2.0 / 3.0)).ceil() as u64
}

/// The count cap: `100` when `n <= k^0.99 / B` (inclusive), else `B c ln k`.
///
/// `n` is computed before `L`; the cap formula consumes it.
pub fn choose_l(n: u64, k: usize, b_const: f64, c_const: f64) -> f64 {
    if n as f64 <= (k as f64).powf(0.99) / b_const {
        100.0
    } else {
        b_const * c_const * (k as f64).ln()
    }
}

/// Sparse Phase-1 counts: `X_j` is the number of times `j` was drawn.
/// Memory scales with the number of distinct symbols seen, not with `k`.
#[derive(Clone, Debug)]
pub struct Counts {
    n: u64,
    counts: Vec<(u32, u64)>,
    l_bound: f64,
}

impl Counts {
    pub fn from_draws(draws: &[usize], l_bound: f64) -> Self {
        let mut sorted: Vec<u32> = draws.iter().map(|&d| d as u32).collect();
        sorted.sort_unstable();
        let mut counts: Vec<(u32, u64)> = Vec::new();
        for &s in &sorted {
            match counts.last_mut() {
                Some((sym, c)) if *sym == s => *c += 1,
                _ => counts.push((s, 1)),
            }
        }
        Self {
            n: draws.len() as u64,
            counts,
            l_bound,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn entries(&self) -> &[(u32, u64)] {
        &self.counts
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c).max().unwrap_or(0)
    }

    pub fn l_bound(&self) -> f64 {
        self.l_bound
    }

    pub fn count_of(&self, j: usize) -> u64 {
        self.counts
            .binary_search_by_key(&(j as u32), |&(s, _)| s)
            .map(|pos| self.counts[pos].1)
            .unwrap_or(0)
    }

    /// Dense materialization, for small-domain oracles and tests.
    pub fn dense(&self, k: usize) -> Vec<u64> {
        let mut x = vec![0u64; k];
        for &(s, c) in &self.counts {
            x[s as usize] = c;
        }
        x
    }
}

/// The centered frequency statistic `Y_j = (k/n) X_j - 1`, materialized
/// lazily: unseen symbols share the default value `-1`.
pub fn centered_frequency_rv(k: usize, counts: &Counts) -> Rv<f64> {
    let scale = k as f64 / counts.n() as f64;
    let entries = counts
        .entries()
        .iter()
        .map(|&(s, c)| (s, scale * c as f64 - 1.0))
        .collect();
    Rv::sparse(k, -1.0, entries).expect("counts stay inside the domain")
}

fn check_gamma(gamma: f64, k: usize) -> Result<()> {
    // 1/k <= gamma <= 1, with a hair of slack for thresholds derived by
    // float arithmetic that land exactly on the lower boundary.
    if !(gamma <= 1.0 && gamma * k as f64 >= 1.0 - 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "gamma {gamma} outside [1/k, 1] for k = {k}"
        )));
    }
    Ok(())
}

/// Run the large-regime tester.
///
/// Accepts iff the count cap is not hit and the mean estimate lands at or
/// below `0.995 * gamma`.
pub fn run_large(code: &mut SourceCode, cfg: &LargeConfig, rng: &mut ChaCha8Rng) -> Result<Verdict> {
    let k = code.domain_size();
    check_gamma(cfg.gamma, k)?;
    if cfg.b_const < 1.0 || cfg.c_const <= 0.0 || cfg.big_c_const <= 0.0 {
        return Err(Error::InvalidParameter(
            "large-regime constants must be positive (B >= 1)".into(),
        ));
    }
    let uses_before = code.ledger().code_uses();
    let n = cfg
        .n_override
        .unwrap_or_else(|| sample_count(k, cfg.gamma, cfg.c_const))
        .max(1);
    let l_bound = choose_l(n, k, cfg.b_const, cfg.c_const);

    let draws = code.draw_n(n as usize, "phase1");
    let counts = Counts::from_draws(&draws, l_bound);
    let max_count = counts.max_count();

    if max_count as f64 >= l_bound {
        let code_uses = code.ledger().code_uses() - uses_before;
        return Ok(Verdict::new(Decision::Reject, Reason::LInfCheck, code_uses)
            .with("n", n as f64)
            .with("l_bound", l_bound)
            .with("max_count", max_count as f64));
    }

    let y = centered_frequency_rv(k, &counts);
    let n_qme = (cfg.big_c_const * n as f64).ceil() as u64;
    let qme_cfg = QmeConfig {
        n: n_qme,
        ..cfg.qme.clone()
    };
    let est = qme_estimate(code, &y, &qme_cfg, rng)?;
    let accept = est.value <= 0.995 * cfg.gamma;
    let code_uses = code.ledger().code_uses() - uses_before;
    let decision = if accept { Decision::Accept } else { Decision::Reject };
    let mut verdict = Verdict::new(decision, Reason::MeanThreshold, code_uses)
        .with("n", n as f64)
        .with("l_bound", l_bound)
        .with("max_count", max_count as f64)
        .with("n_qme", n_qme as f64)
        .with("qme_charge", est.charged_uses as f64);
    verdict.mu_hat = Some(est.value);
    Ok(verdict)
}

/// Expose the Phase-1 internals for the moment validators: the counts, the
/// statistic `Y`, and its exact moments against the code's truth.
pub fn phase1_statistics(code: &mut SourceCode, n: u64) -> Result<(Counts, Rv<f64>, f64, f64)> {
    let truth = code.truth().cloned().ok_or(Error::MissingTruth)?;
    let k = code.domain_size();
    let l_bound = choose_l(n, k, DEFAULT_B_CONST, DEFAULT_C_CONST);
    let draws = code.draw_n(n as usize, "phase1");
    let counts = Counts::from_draws(&draws, l_bound);
    let y = centered_frequency_rv(k, &counts);
    let (mu, sigma) = exact_moments(&truth, &y)?;
    Ok((counts, y, mu, sigma))
}
