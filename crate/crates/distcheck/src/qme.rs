//! Mean estimation against a source code, under the contract
//! `Pr[|est - mu| > sigma/n] <= delta` at a charged cost of
//! `O(n log(1/delta))` code uses.
//!
//! Two interchangeable backends realize the contract:
//!
//! * [`QmeBackend::IdealOracle`] computes the exact moments from the code's
//!   privileged truth, perturbs them by a configurable in-band noise mode,
//!   and charges `cost_constant * n * ceil(log2(1/delta))` uses without
//!   drawing. The adversarial modes stress consumers strictly harder than
//!   any real estimator would.
//! * [`QmeBackend::ClassicalMoM`] takes the median of `ceil(8 ln(1/delta))`
//!   batch means, each batch the empirical mean of `n^2` real draws, and
//!   charges the draws it makes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::access::SourceCode;
use crate::dist::Pmf;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A random variable in the tabular sense: a function `[k] -> values`.
///
/// Stored sparsely as a default value plus overrides, so the Phase-1
/// statistic over a large domain costs memory proportional to the number of
/// symbols actually seen, not to `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rv<S: Scalar> {
    k: usize,
    default: S,
    entries: Vec<(u32, S)>,
}

impl<S: Scalar> Rv<S> {
    pub fn constant(k: usize, value: S) -> Self {
        Self {
            k,
            default: value,
            entries: Vec::new(),
        }
    }

    pub fn dense(values: Vec<S>) -> Self {
        let k = values.len();
        Self {
            k,
            default: S::zero(),
            entries: values
                .into_iter()
                .enumerate()
                .map(|(i, v)| (i as u32, v))
                .collect(),
        }
    }

    /// `default` everywhere except the listed overrides.
    pub fn sparse(k: usize, default: S, mut entries: Vec<(u32, S)>) -> Result<Self> {
        if !default.is_finite_value() || entries.iter().any(|(_, v)| !v.is_finite_value()) {
            return Err(Error::InvalidParameter("table values must be finite".into()));
        }
        entries.sort_by_key(|(i, _)| *i);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidParameter(format!(
                    "duplicate table index {}",
                    w[0].0
                )));
            }
        }
        if let Some((i, _)) = entries.last() {
            if *i as usize >= k {
                return Err(Error::InvalidParameter(format!(
                    "table index {i} outside domain of size {k}"
                )));
            }
        }
        Ok(Self {
            k,
            default,
            entries,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn value(&self, j: usize) -> S {
        match self.entries.binary_search_by_key(&(j as u32), |(i, _)| *i) {
            Ok(pos) => self.entries[pos].1.clone(),
            Err(_) => self.default.clone(),
        }
    }

    pub fn entries(&self) -> &[(u32, S)] {
        &self.entries
    }

    pub fn default_value(&self) -> &S {
        &self.default
    }
}

/// Exact mean and variance of `y` under `p`:
/// `mu = sum p_j y_j`, `var = sum p_j y_j^2 - mu^2` (clamped at zero).
pub fn exact_mean_var<S: Scalar>(p: &Pmf<S>, y: &Rv<S>) -> Result<(S, S)> {
    if p.k() != y.k {
        return Err(Error::DimensionMismatch(p.k(), y.k));
    }
    // sum p_j y_j = default + sum_over_entries p_j (y_j - default)
    let mut mean = y.default.clone();
    let mut second = y.default.clone() * y.default.clone();
    for (i, v) in &y.entries {
        let pj = p.prob(*i as usize).clone();
        mean = mean + pj.clone() * (v.clone() - y.default.clone());
        second = second + pj * (v.clone() * v.clone() - y.default.clone() * y.default.clone());
    }
    let mut var = second - mean.clone() * mean.clone();
    if var < S::zero() {
        var = S::zero();
    }
    Ok((mean, var))
}

/// Floating-point convenience: `(mu, sigma)`.
pub fn exact_moments(p: &Pmf<f64>, y: &Rv<f64>) -> Result<(f64, f64)> {
    let (mean, var) = exact_mean_var(p, y)?;
    Ok((mean, var.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QmeBackend {
    IdealOracle,
    ClassicalMoM,
}

impl std::fmt::Display for QmeBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QmeBackend::IdealOracle => write!(f, "ideal"),
            QmeBackend::ClassicalMoM => write!(f, "mom"),
        }
    }
}

/// Noise injected by the ideal oracle inside its permitted band `sigma/n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "target", rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Return the exact mean.
    Zero,
    /// Uniform on `[-sigma/n, sigma/n]`.
    UniformInBand,
    /// Exactly `+sigma/n`.
    AdversarialHigh,
    /// Exactly `-sigma/n`.
    AdversarialLow,
    /// The in-band value closest to the given target.
    AdversarialTowards(f64),
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    /// Parses `zero`, `uniform`, `adv-high`, `adv-low`, `adv-to:<x>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(NoiseMode::Zero),
            "uniform" => Ok(NoiseMode::UniformInBand),
            "adv-high" => Ok(NoiseMode::AdversarialHigh),
            "adv-low" => Ok(NoiseMode::AdversarialLow),
            _ => {
                if let Some(t) = s.strip_prefix("adv-to:") {
                    let target: f64 = t
                        .parse()
                        .map_err(|_| Error::Config(format!("bad noise target '{t}'")))?;
                    Ok(NoiseMode::AdversarialTowards(target))
                } else {
                    Err(Error::Config(format!("unrecognized noise mode '{s}'")))
                }
            }
        }
    }
}

/// Parameters of one mean-estimation call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QmeConfig {
    /// Accuracy parameter: the estimate lands within `sigma/n` of the mean.
    pub n: u64,
    /// Failure probability, in `(0, 1/2)`.
    pub delta: f64,
    pub backend: QmeBackend,
    /// Only consulted by the ideal oracle.
    pub noise: NoiseMode,
    /// Externalized constant of the `O(n log(1/delta))` cost formula.
    pub cost_constant: u64,
}

impl QmeConfig {
    pub fn new(n: u64, delta: f64) -> Self {
        Self {
            n,
            delta,
            backend: QmeBackend::IdealOracle,
            noise: NoiseMode::UniformInBand,
            cost_constant: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("accuracy parameter n must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "failure probability {} outside (0, 1/2)",
                self.delta
            )));
        }
        if self.cost_constant == 0 {
            return Err(Error::InvalidParameter("cost constant must be positive".into()));
        }
        Ok(())
    }
}

/// The estimate together with its audited cost.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub value: f64,
    pub n: u64,
    pub delta: f64,
    pub backend: QmeBackend,
    pub charged_uses: u64,
}

pub fn ceil_log2_inv(delta: f64) -> u64 {
    (1.0 / delta).log2().ceil() as u64
}

/// Declared cost of an ideal-oracle call. Saturates instead of wrapping on
/// absurd configurations.
pub fn ideal_cost(n: u64, delta: f64, cost_constant: u64) -> u64 {
    cost_constant
        .saturating_mul(n)
        .saturating_mul(ceil_log2_inv(delta))
}

pub fn mom_batches(delta: f64) -> u64 {
    (8.0 * (1.0 / delta).ln()).ceil() as u64
}

/// Declared cost of a median-of-means call.
pub fn mom_cost(n: u64, delta: f64) -> u64 {
    n.saturating_mul(n).saturating_mul(mom_batches(delta))
}

/// Estimate the mean of `y` under the code's distribution.
///
/// The backend's randomness is drawn from `rng` (failure coin, noise); real
/// draws made by the classical backend consume the code's own stream.
pub fn qme_estimate(
    code: &mut SourceCode,
    y: &Rv<f64>,
    cfg: &QmeConfig,
    rng: &mut ChaCha8Rng,
) -> Result<MeanEstimate> {
    cfg.validate()?;
    if y.k() != code.domain_size() {
        return Err(Error::DimensionMismatch(y.k(), code.domain_size()));
    }
    let before = code.ledger().code_uses();
    let value = match cfg.backend {
        QmeBackend::IdealOracle => {
            let truth = code.truth().ok_or(Error::MissingTruth)?;
            let (mu, sigma) = exact_moments(truth, y)?;
            let band = sigma / cfg.n as f64;
            code.charge("qme", ideal_cost(cfg.n, cfg.delta, cfg.cost_constant));
            let failed = rng.gen::<f64>() < cfg.delta;
            if failed {
                // A declared out-of-band sample; consumers must survive it at rate delta.
                mu + 10.0 * band
            } else {
                let offset = match cfg.noise {
                    NoiseMode::Zero => 0.0,
                    NoiseMode::UniformInBand => (2.0 * rng.gen::<f64>() - 1.0) * band,
                    NoiseMode::AdversarialHigh => band,
                    NoiseMode::AdversarialLow => -band,
                    NoiseMode::AdversarialTowards(t) => t.clamp(mu - band, mu + band) - mu,
                };
                mu + offset
            }
        }
        QmeBackend::ClassicalMoM => {
            let batches = mom_batches(cfg.delta);
            let batch_size = (cfg.n * cfg.n) as usize;
            let mut means = Vec::with_capacity(batches as usize);
            for _ in 0..batches {
                let mut acc = 0.0f64;
                for _ in 0..batch_size {
                    acc += y.value(code.draw_one("qme"));
                }
                means.push(acc / batch_size as f64);
            }
            means.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mid = means.len() / 2;
            if means.len() % 2 == 1 {
                means[mid]
            } else {
                0.5 * (means[mid - 1] + means[mid])
            }
        }
    };
    let charged_uses = code.ledger().code_uses() - before;
    let declared = match cfg.backend {
        QmeBackend::IdealOracle => ideal_cost(cfg.n, cfg.delta, cfg.cost_constant),
        QmeBackend::ClassicalMoM => mom_cost(cfg.n, cfg.delta),
    };
    assert_eq!(charged_uses, declared, "ledger charge diverged from the declared cost");
    Ok(MeanEstimate {
        value,
        n: cfg.n,
        delta: cfg.delta,
        backend: cfg.backend,
        charged_uses,
    })
}
