//! Experiment harness: configuration, seeded trial execution, lemma
//! validator suites, scaling benches, and CSV/SVG emission.
//!
//! Outputs are deterministic functions of the experiment config and master
//! seed: per-trial streams are derived by counter-based splitting and
//! results are merged in trial order, so the emitted CSV is byte-identical
//! across runs and worker counts. Wall-clock timings are kept out of the
//! serialized outputs for the same reason.

mod bench;
mod svg;
mod trials;
mod validate;

pub use bench::{bench_scaling, BenchAxis, BenchConfig, BenchOutput, BenchRegime, BenchRow};
pub use svg::{write_plot, PlotSeries};
pub use trials::{run_closeness_trials, run_identity_trials, run_trials};
pub use validate::{
    all_pass, collisions_suite, hashing_suite, moments_suite, reduction_suite, validate_lemmas,
    CheckResult, SuiteId,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dist::InstanceSpec;
use crate::error::{Error, Result};
use crate::qme::{NoiseMode, QmeBackend};
use crate::testers::{
    Decision, Reason, Verdict, DEFAULT_A_COEF, DEFAULT_BIG_C_CONST, DEFAULT_B_CONST,
    DEFAULT_C_CLOSE, DEFAULT_C_CONST, DEFAULT_DELTA_ROUND, DEFAULT_PRECISION, DEFAULT_ROUNDS,
    DEFAULT_THETA_STAR, DEFAULT_VOTE_THRESHOLD,
};

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Which tester a uniformity experiment runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Large,
    Small,
    Giant,
    Classical,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "large" => Ok(Regime::Large),
            "small" => Ok(Regime::Small),
            "giant" => Ok(Regime::Giant),
            "classical" => Ok(Regime::Classical),
            _ => Err(Error::Config(format!("unrecognized regime '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QmeSettings {
    pub backend: QmeBackend,
    pub noise: NoiseMode,
    /// Failure probability for large-regime estimation calls.
    pub delta: f64,
    pub cost_constant: u64,
}

impl Default for QmeSettings {
    fn default() -> Self {
        Self {
            backend: QmeBackend::IdealOracle,
            noise: NoiseMode::UniformInBand,
            delta: 1e-3,
            cost_constant: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LargeTunables {
    pub b_const: f64,
    pub c_const: f64,
    pub big_c_const: f64,
    pub n_override: Option<u64>,
}

impl Default for LargeTunables {
    fn default() -> Self {
        Self {
            b_const: DEFAULT_B_CONST,
            c_const: DEFAULT_C_CONST,
            big_c_const: DEFAULT_BIG_C_CONST,
            n_override: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmallTunables {
    pub rounds: u64,
    pub theta_star: f64,
    pub per_estimate_precision: f64,
    pub delta_round: f64,
    pub vote_threshold: f64,
}

impl Default for SmallTunables {
    fn default() -> Self {
        Self {
            rounds: DEFAULT_ROUNDS,
            theta_star: DEFAULT_THETA_STAR,
            per_estimate_precision: DEFAULT_PRECISION,
            delta_round: DEFAULT_DELTA_ROUND,
            vote_threshold: DEFAULT_VOTE_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GiantTunables {
    pub a_coef: f64,
    pub c_close: f64,
}

impl Default for GiantTunables {
    fn default() -> Self {
        Self {
            a_coef: DEFAULT_A_COEF,
            c_close: DEFAULT_C_CLOSE,
        }
    }
}

/// One experiment: a tester, a domain, instances, and trial bookkeeping.
/// Deserializable from a single JSON document; CLI flags override fields.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub k: usize,
    pub trials: u64,
    pub master_seed: u64,
    /// Large-regime divergence threshold.
    pub gamma: Option<f64>,
    /// Small-regime l2 threshold.
    pub tau: Option<f64>,
    /// Giant-regime chi-squared threshold.
    pub theta: Option<f64>,
    /// Classical baseline / identity distance parameter.
    pub epsilon: Option<f64>,
    /// Instances tested against the null hypothesis, one batch of trials each.
    pub instances: Vec<InstanceSpec>,
    /// Second distribution for closeness testing (defaults to uniform).
    pub instance_q: Option<InstanceSpec>,
    /// Load the unknown distribution from a string-oracle file instead of
    /// an instance family.
    pub string_oracle: Option<String>,
    pub qme: QmeSettings,
    pub large: LargeTunables,
    pub small: SmallTunables,
    pub giant: GiantTunables,
    /// Worker threads for trial fan-out; 1 = run serially.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            k: 1000,
            trials: 100,
            master_seed: 0,
            gamma: None,
            tau: None,
            theta: None,
            epsilon: None,
            instances: vec![InstanceSpec::Uniform],
            instance_q: None,
            string_oracle: None,
            qme: QmeSettings::default(),
            large: LargeTunables::default(),
            small: SmallTunables::default(),
            giant: GiantTunables::default(),
            jobs: 1,
        }
    }
}

/// One row of an experiment: the verdict of a single seeded trial.
#[derive(Clone, Debug, Serialize)]
pub struct TrialReport {
    pub trial: u64,
    pub instance: String,
    pub decision: Decision,
    pub reason: Reason,
    pub mu_hat: Option<f64>,
    pub code_uses: u64,
    pub diagnostics: BTreeMap<String, f64>,
    /// In-memory only; excluded from CSV/JSON so outputs stay byte-stable.
    #[serde(skip)]
    pub wall_ms: f64,
}

impl TrialReport {
    pub fn from_verdict(trial: u64, instance: String, verdict: Verdict, wall_ms: f64) -> Self {
        Self {
            trial,
            instance,
            decision: verdict.decision,
            reason: verdict.reason,
            mu_hat: verdict.mu_hat,
            code_uses: verdict.code_uses,
            diagnostics: verdict.diagnostics,
            wall_ms,
        }
    }
}

/// Per-instance aggregate over all trials.
#[derive(Clone, Debug, Serialize)]
pub struct InstanceSummary {
    pub instance: String,
    pub trials: u64,
    pub accepts: u64,
    pub accept_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_code_uses: f64,
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub fn summarize(rows: &[TrialReport]) -> Vec<InstanceSummary> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<&TrialReport>> = BTreeMap::new();
    for row in rows {
        if !grouped.contains_key(&row.instance) {
            order.push(row.instance.clone());
        }
        grouped.entry(row.instance.clone()).or_default().push(row);
    }
    order
        .into_iter()
        .map(|instance| {
            let batch = &grouped[&instance];
            let trials = batch.len() as u64;
            let accepts = batch
                .iter()
                .filter(|r| r.decision == Decision::Accept)
                .count() as u64;
            let accept_rate = accepts as f64 / trials as f64;
            let (lo, hi) = wilson_interval(accepts, trials, 1.96);
            let mean_code_uses =
                batch.iter().map(|r| r.code_uses as f64).sum::<f64>() / trials as f64;
            InstanceSummary {
                instance,
                trials,
                accepts,
                accept_rate,
                wilson_low: lo,
                wilson_high: hi,
                mean_code_uses,
            }
        })
        .collect()
}

fn csv_f64(x: f64) -> String {
    // Shortest round-trip formatting; stable across runs.
    format!("{x}")
}

/// Fixed, versioned trial CSV (schema column first).
pub fn trials_csv(rows: &[TrialReport]) -> String {
    let mut out = String::from("schema_version,trial,instance,decision,reason,mu_hat,code_uses\n");
    for r in rows {
        let mu = r.mu_hat.map(csv_f64).unwrap_or_default();
        out.push_str(&format!(
            "{CSV_SCHEMA_VERSION},{},{},{},{},{},{}\n",
            r.trial, r.instance, r.decision, r.reason, mu, r.code_uses
        ));
    }
    out
}

/// Fixed, versioned bench CSV.
pub fn bench_csv(out: &BenchOutput) -> String {
    let mut s =
        String::from("schema_version,regime,axis,x,k,threshold,n_star,reached,trials,target\n");
    for r in &out.rows {
        let n_star = r.n_star.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{CSV_SCHEMA_VERSION},{},{},{},{},{},{},{},{},{}\n",
            out.regime,
            out.axis,
            csv_f64(r.x),
            r.k,
            csv_f64(r.threshold),
            n_star,
            r.reached,
            out.trials,
            csv_f64(out.target),
        ));
    }
    s
}
