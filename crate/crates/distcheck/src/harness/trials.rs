//! Seeded trial execution with deterministic fan-out.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::access::{code_from_string, SamplerTable, SourceCode, StreamKey, StringOracle};
use crate::dist::{make_instance, InstanceSpec, Pmf};
use crate::error::{Error, Result};
use crate::qme::QmeConfig;
use crate::reduce::identity_test;
use crate::testers::{
    classical_baseline, run_giant, run_large, run_small, GiantConfig, LargeConfig, SmallConfig,
    Verdict,
};

use super::{ExperimentConfig, Regime, TrialReport};

/// A source of codes for one instance batch: either a pmf-backed sampler
/// table or a string oracle, both shareable across worker threads.
enum InstanceSource {
    Table(Arc<SamplerTable>),
    Oracle(Arc<StringOracle>),
}

impl InstanceSource {
    fn code(&self, key: StreamKey) -> SourceCode {
        match self {
            InstanceSource::Table(t) => SourceCode::from_table(t.clone(), key),
            InstanceSource::Oracle(o) => code_from_string(o, key),
        }
    }
}

fn validate_common(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if cfg.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    Ok(())
}

fn instance_sources(cfg: &ExperimentConfig) -> Result<Vec<(String, InstanceSource)>> {
    if let Some(path) = &cfg.string_oracle {
        let file = std::fs::File::open(path)?;
        let oracle = StringOracle::read(std::io::BufReader::new(file))?;
        return Ok(vec![(
            "string-oracle".to_string(),
            InstanceSource::Oracle(Arc::new(oracle)),
        )]);
    }
    if cfg.instances.is_empty() {
        return Err(Error::Config("at least one instance is required".into()));
    }
    cfg.instances
        .iter()
        .map(|spec| {
            let pmf = make_instance(cfg.k, spec)?;
            Ok((
                spec.to_string(),
                InstanceSource::Table(SamplerTable::from_pmf(&pmf)),
            ))
        })
        .collect()
}

fn large_config(cfg: &ExperimentConfig, gamma: f64) -> LargeConfig {
    LargeConfig {
        gamma,
        b_const: cfg.large.b_const,
        c_const: cfg.large.c_const,
        big_c_const: cfg.large.big_c_const,
        qme: QmeConfig {
            n: 1,
            delta: cfg.qme.delta,
            backend: cfg.qme.backend,
            noise: cfg.qme.noise,
            cost_constant: cfg.qme.cost_constant,
        },
        n_override: cfg.large.n_override,
    }
}

fn small_config(cfg: &ExperimentConfig, tau: f64) -> Result<SmallConfig> {
    let small = SmallConfig {
        tau,
        rounds: cfg.small.rounds,
        theta_star: cfg.small.theta_star,
        per_estimate_precision: cfg.small.per_estimate_precision,
        delta_round: cfg.small.delta_round,
        vote_threshold: cfg.small.vote_threshold,
        qme: QmeConfig {
            n: 1,
            delta: cfg.small.delta_round,
            backend: cfg.qme.backend,
            noise: cfg.qme.noise,
            cost_constant: cfg.qme.cost_constant,
        },
    };
    small.validate()?;
    Ok(small)
}

fn fan_out<F>(cfg: &ExperimentConfig, tasks: Vec<(usize, u64)>, run_one: F) -> Result<Vec<TrialReport>>
where
    F: Fn(usize, u64) -> Result<TrialReport> + Sync + Send,
{
    if cfg.jobs <= 1 {
        tasks.into_iter().map(|(i, t)| run_one(i, t)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| {
            tasks
                .into_par_iter()
                .map(|(i, t)| run_one(i, t))
                .collect::<Result<Vec<_>>>()
        })
    }
}

/// Run a uniformity-testing experiment: `trials` seeded runs of the chosen
/// regime per instance. Reports come back in (instance, trial) order
/// regardless of scheduling.
pub fn run_trials(regime: Regime, cfg: &ExperimentConfig) -> Result<Vec<TrialReport>> {
    validate_common(cfg)?;
    match regime {
        Regime::Large => {
            let gamma = cfg
                .gamma
                .ok_or_else(|| Error::Config("large regime requires gamma".into()))?;
            // Fail fast on a bad threshold rather than per-trial.
            if !(gamma <= 1.0 && gamma * cfg.k as f64 >= 1.0 - 1e-9) {
                return Err(Error::Config(format!(
                    "gamma {gamma} outside [1/k, 1] for k = {}",
                    cfg.k
                )));
            }
        }
        Regime::Small => {
            cfg.tau
                .ok_or_else(|| Error::Config("small regime requires tau".into()))?;
        }
        Regime::Giant => {
            let theta = cfg
                .theta
                .ok_or_else(|| Error::Config("giant regime requires theta".into()))?;
            if theta < 1.0 {
                return Err(Error::Config("giant regime requires theta >= 1".into()));
            }
        }
        Regime::Classical => {
            let eps = cfg
                .epsilon
                .ok_or_else(|| Error::Config("classical baseline requires epsilon".into()))?;
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::Config("epsilon must lie in (0, 1)".into()));
            }
        }
    }

    let sources = instance_sources(cfg)?;
    let q_table = if regime == Regime::Small {
        let q_spec = cfg.instance_q.clone().unwrap_or(InstanceSpec::Uniform);
        Some((q_spec.to_string(), SamplerTable::from_pmf(&make_instance(cfg.k, &q_spec)?)))
    } else {
        None
    };

    let root = StreamKey::new(cfg.master_seed);
    let mut tasks = Vec::new();
    for (i, _) in sources.iter().enumerate() {
        for t in 0..cfg.trials {
            tasks.push((i, t));
        }
    }

    let rows = fan_out(cfg, tasks, |i, t| {
        let (label, source) = &sources[i];
        let key = root.child(i as u64).child(t);
        let start = Instant::now();
        let verdict: Verdict = match regime {
            Regime::Large => {
                let mut code = source.code(key.child_label("code"));
                let mut rng = key.child_label("tester").rng();
                run_large(&mut code, &large_config(cfg, cfg.gamma.unwrap()), &mut rng)?
            }
            Regime::Small => {
                let mut code = source.code(key.child_label("code-p"));
                let (_, q_table) = q_table.as_ref().unwrap();
                let mut code_q = SourceCode::from_table(q_table.clone(), key.child_label("code-q"));
                let small = small_config(cfg, cfg.tau.unwrap())?;
                let mut rng = key.child_label("tester").rng();
                run_small(&mut code, &mut code_q, &small, &mut rng)?
            }
            Regime::Giant => {
                let mut code = source.code(key.child_label("code"));
                let giant = GiantConfig {
                    theta: cfg.theta.unwrap(),
                    a_coef: cfg.giant.a_coef,
                    c_close: cfg.giant.c_close,
                };
                run_giant(&mut code, &giant)?
            }
            Regime::Classical => {
                let mut code = source.code(key.child_label("code"));
                classical_baseline(&mut code, cfg.epsilon.unwrap(), None)?
            }
        };
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(TrialReport::from_verdict(t, label.clone(), verdict, wall_ms))
    })?;
    Ok(rows)
}

/// Run a two-distribution l2 closeness experiment (`instances` holds the
/// p-side; `instance_q` the q-side).
pub fn run_closeness_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialReport>> {
    validate_common(cfg)?;
    let tau = cfg
        .tau
        .ok_or_else(|| Error::Config("closeness testing requires tau".into()))?;
    let sources = instance_sources(cfg)?;
    let q_spec = cfg.instance_q.clone().unwrap_or(InstanceSpec::Uniform);
    let q_table = SamplerTable::from_pmf(&make_instance(cfg.k, &q_spec)?);
    let q_label = q_spec.to_string();

    let root = StreamKey::new(cfg.master_seed);
    let mut tasks = Vec::new();
    for (i, _) in sources.iter().enumerate() {
        for t in 0..cfg.trials {
            tasks.push((i, t));
        }
    }
    fan_out(cfg, tasks, |i, t| {
        let (label, source) = &sources[i];
        let key = root.child(i as u64).child(t);
        let start = Instant::now();
        let mut code_p = source.code(key.child_label("code-p"));
        let mut code_q = SourceCode::from_table(q_table.clone(), key.child_label("code-q"));
        let small = small_config(cfg, tau)?;
        let mut rng = key.child_label("tester").rng();
        let verdict = run_small(&mut code_p, &mut code_q, &small, &mut rng)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(TrialReport::from_verdict(
            t,
            format!("{label} vs {q_label}"),
            verdict,
            wall_ms,
        ))
    })
}

/// Run an identity-testing experiment against an explicit reference pmf.
pub fn run_identity_trials(cfg: &ExperimentConfig, reference: &Pmf<f64>) -> Result<Vec<TrialReport>> {
    validate_common(cfg)?;
    let epsilon = cfg
        .epsilon
        .ok_or_else(|| Error::Config("identity testing requires epsilon".into()))?;
    if reference.k() != cfg.k {
        return Err(Error::Config(format!(
            "reference has k = {}, config says k = {}",
            reference.k(),
            cfg.k
        )));
    }
    let sources = instance_sources(cfg)?;
    let large_tpl = large_config(cfg, 1.0); // threshold replaced by dispatch
    let small_tpl = small_config(cfg, 1.0)?;

    let root = StreamKey::new(cfg.master_seed);
    let mut tasks = Vec::new();
    for (i, _) in sources.iter().enumerate() {
        for t in 0..cfg.trials {
            tasks.push((i, t));
        }
    }
    fan_out(cfg, tasks, |i, t| {
        let (label, source) = &sources[i];
        let key = root.child(i as u64).child(t);
        let start = Instant::now();
        let code_p = source.code(key.child_label("code"));
        let verdict = identity_test(
            reference,
            code_p,
            epsilon,
            &large_tpl,
            &small_tpl,
            key.child_label("identity"),
        )?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(TrialReport::from_verdict(t, label.clone(), verdict, wall_ms))
    })
}
