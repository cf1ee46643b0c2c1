//! Scaling benches: binary-search the minimal sample budget that reaches a
//! target success rate, then fit a log-log slope with a bootstrap interval.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::access::{SamplerTable, SourceCode, StreamKey};
use crate::dist::{make_instance, InstanceSpec};
use crate::error::{Error, Result};
use crate::qme::NoiseMode;
use crate::testers::{
    classical_baseline, modeled_quantum_cost, run_large, sample_count_giant, Decision, LargeConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchRegime {
    Large,
    Classical,
    /// Pure arithmetic on the giant-regime cost model (no trials).
    GiantCost,
}

impl std::fmt::Display for BenchRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BenchRegime::Large => write!(f, "large"),
            BenchRegime::Classical => write!(f, "classical"),
            BenchRegime::GiantCost => write!(f, "giant-cost"),
        }
    }
}

impl std::str::FromStr for BenchRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "large" => Ok(BenchRegime::Large),
            "classical" => Ok(BenchRegime::Classical),
            "giant-cost" => Ok(BenchRegime::GiantCost),
            _ => Err(Error::Config(format!("unrecognized bench regime '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchAxis {
    /// Grid over domain sizes at a fixed threshold.
    K,
    /// Grid over thresholds at a fixed domain size; slopes are fitted
    /// against `ln(1/theta)`.
    InvTheta,
}

impl std::fmt::Display for BenchAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BenchAxis::K => write!(f, "k"),
            BenchAxis::InvTheta => write!(f, "inv-theta"),
        }
    }
}

impl std::str::FromStr for BenchAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(BenchAxis::K),
            "inv-theta" => Ok(BenchAxis::InvTheta),
            _ => Err(Error::Config(format!("unrecognized bench axis '{s}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub regime: BenchRegime,
    pub axis: BenchAxis,
    /// Domain sizes (axis `k`) or thresholds (axis `inv-theta`).
    pub grid: Vec<f64>,
    pub fixed_k: usize,
    /// Threshold held fixed on the `k` axis (gamma for the large regime,
    /// epsilon for the classical baseline, theta for the cost model).
    pub fixed_threshold: f64,
    pub a_coef: f64,
    pub target: f64,
    pub trials: u64,
    pub budget_cap: u64,
    pub master_seed: u64,
    pub big_c_const: f64,
    pub b_const: f64,
    pub c_const: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            regime: BenchRegime::Large,
            axis: BenchAxis::K,
            grid: vec![1024.0, 4096.0, 16384.0, 65536.0],
            fixed_k: 4096,
            fixed_threshold: 0.2,
            a_coef: crate::testers::DEFAULT_A_COEF,
            target: 0.9,
            trials: 100,
            budget_cap: 1 << 20,
            master_seed: 0,
            big_c_const: crate::testers::DEFAULT_BIG_C_CONST,
            b_const: crate::testers::DEFAULT_B_CONST,
            c_const: crate::testers::DEFAULT_C_CONST,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchRow {
    /// The fitted abscissa: `k`, or `1/theta`.
    pub x: f64,
    pub k: usize,
    pub threshold: f64,
    /// Minimal sample budget reaching the target, when found under the cap.
    pub n_star: Option<u64>,
    pub reached: bool,
}

#[derive(Clone, Debug)]
pub struct BenchOutput {
    pub regime: BenchRegime,
    pub axis: BenchAxis,
    pub rows: Vec<BenchRow>,
    pub slope: f64,
    pub slope_low: f64,
    pub slope_high: f64,
    pub trials: u64,
    pub target: f64,
}

struct GridPoint {
    k: usize,
    threshold: f64,
    x: f64,
}

fn grid_points(cfg: &BenchConfig) -> Result<Vec<GridPoint>> {
    if cfg.grid.len() < 4 {
        return Err(Error::Config("bench grid needs at least 4 points".into()));
    }
    Ok(match cfg.axis {
        BenchAxis::K => cfg
            .grid
            .iter()
            .map(|&k| GridPoint {
                k: k as usize,
                threshold: cfg.fixed_threshold,
                x: k,
            })
            .collect(),
        BenchAxis::InvTheta => cfg
            .grid
            .iter()
            .map(|&theta| GridPoint {
                k: cfg.fixed_k,
                threshold: theta,
                x: 1.0 / theta,
            })
            .collect(),
    })
}

/// The far instance used by the success probes: uniform on half the domain
/// (squared Hellinger distance ~0.586 from uniform, chi-squared 1).
fn far_instance(k: usize) -> InstanceSpec {
    InstanceSpec::UniformSubset { size: (k / 2).max(1) }
}

fn probe_large(
    cfg: &BenchConfig,
    k: usize,
    gamma: f64,
    n: u64,
    uniform: &std::sync::Arc<SamplerTable>,
    far: &std::sync::Arc<SamplerTable>,
    key: StreamKey,
) -> Result<bool> {
    let mut tester = LargeConfig::new(gamma);
    tester.b_const = cfg.b_const;
    tester.c_const = cfg.c_const;
    tester.big_c_const = cfg.big_c_const;
    tester.n_override = Some(n);
    let mut accepts = 0u64;
    let mut rejects = 0u64;
    for t in 0..cfg.trials {
        let tk = key.child(t);
        let mut near_cfg = tester.clone();
        near_cfg.qme.noise = NoiseMode::AdversarialHigh;
        let mut code = SourceCode::from_table(uniform.clone(), tk.child(0));
        let mut rng = tk.child(1).rng();
        if run_large(&mut code, &near_cfg, &mut rng)?.decision == Decision::Accept {
            accepts += 1;
        }
        let mut far_cfg = tester.clone();
        far_cfg.qme.noise = NoiseMode::AdversarialTowards(0.0);
        let mut code = SourceCode::from_table(far.clone(), tk.child(2));
        let mut rng = tk.child(3).rng();
        if run_large(&mut code, &far_cfg, &mut rng)?.decision == Decision::Reject {
            rejects += 1;
        }
        let _ = k;
    }
    let needed = (cfg.target * cfg.trials as f64).ceil() as u64;
    Ok(accepts >= needed && rejects >= needed)
}

fn probe_classical(
    cfg: &BenchConfig,
    epsilon: f64,
    n: u64,
    uniform: &std::sync::Arc<SamplerTable>,
    far: &std::sync::Arc<SamplerTable>,
    key: StreamKey,
) -> Result<bool> {
    let mut accepts = 0u64;
    let mut rejects = 0u64;
    for t in 0..cfg.trials {
        let tk = key.child(t);
        let mut code = SourceCode::from_table(uniform.clone(), tk.child(0));
        if classical_baseline(&mut code, epsilon, Some(n))?.decision == Decision::Accept {
            accepts += 1;
        }
        let mut code = SourceCode::from_table(far.clone(), tk.child(1));
        if classical_baseline(&mut code, epsilon, Some(n))?.decision == Decision::Reject {
            rejects += 1;
        }
    }
    let needed = (cfg.target * cfg.trials as f64).ceil() as u64;
    Ok(accepts >= needed && rejects >= needed)
}

/// Exponential bracket plus bisection for the minimal passing budget.
fn search_minimal<F>(cap: u64, mut probe: F) -> Result<Option<u64>>
where
    F: FnMut(u64) -> Result<bool>,
{
    if probe(1)? {
        return Ok(Some(1));
    }
    let mut hi = 2u64;
    while !probe(hi)? {
        if hi >= cap {
            return Ok(None);
        }
        hi = (hi * 2).min(cap * 2);
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn bootstrap_slope(points: &[(f64, f64)], rng: &mut ChaCha8Rng) -> (f64, f64) {
    let mut slopes = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let mut sample = Vec::with_capacity(points.len());
        for _ in 0..points.len() {
            sample.push(points[rng.gen_range(0..points.len())]);
        }
        let distinct = {
            let mut xs: Vec<u64> = sample.iter().map(|p| p.0.to_bits()).collect();
            xs.sort_unstable();
            xs.dedup();
            xs.len()
        };
        if distinct >= 2 {
            slopes.push(ols_slope(&sample));
        }
    }
    if slopes.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| slopes[((slopes.len() - 1) as f64 * q).round() as usize];
    (pick(0.025), pick(0.975))
}

/// Run the bench: per grid point, find the minimal budget hitting the
/// target on both the near (accept) and far (reject) side, then fit
/// `ln(n*)` against `ln(x)`.
pub fn bench_scaling(cfg: &BenchConfig) -> Result<BenchOutput> {
    let points = grid_points(cfg)?;
    if !(cfg.target > 0.0 && cfg.target <= 1.0) {
        return Err(Error::Config("target rate must lie in (0, 1]".into()));
    }
    let root = StreamKey::new(cfg.master_seed);
    let mut rows = Vec::with_capacity(points.len());
    for (i, gp) in points.iter().enumerate() {
        let key = root.child(i as u64);
        let n_star = match cfg.regime {
            BenchRegime::GiantCost => {
                Some(modeled_quantum_cost(sample_count_giant(
                    gp.k,
                    gp.threshold,
                    cfg.a_coef,
                )))
            }
            BenchRegime::Large => {
                let uniform = SamplerTable::from_pmf(&make_instance(gp.k, &InstanceSpec::Uniform)?);
                let far = SamplerTable::from_pmf(&make_instance(gp.k, &far_instance(gp.k))?);
                search_minimal(cfg.budget_cap, |n| {
                    probe_large(cfg, gp.k, gp.threshold, n, &uniform, &far, key.child(n))
                })?
            }
            BenchRegime::Classical => {
                let uniform = SamplerTable::from_pmf(&make_instance(gp.k, &InstanceSpec::Uniform)?);
                let far = SamplerTable::from_pmf(&make_instance(gp.k, &far_instance(gp.k))?);
                search_minimal(cfg.budget_cap, |n| {
                    probe_classical(cfg, gp.threshold, n, &uniform, &far, key.child(n))
                })?
            }
        };
        rows.push(BenchRow {
            x: gp.x,
            k: gp.k,
            threshold: gp.threshold,
            n_star,
            reached: n_star.is_some(),
        });
    }

    let fit_points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.n_star.map(|n| (r.x.ln(), (n as f64).ln())))
        .collect();
    if fit_points.len() < 2 {
        return Err(Error::Config(
            "fewer than two grid points reached the target; cannot fit a slope".into(),
        ));
    }
    let slope = ols_slope(&fit_points);
    let mut rng = root.child_label("bootstrap").rng();
    let (slope_low, slope_high) = bootstrap_slope(&fit_points, &mut rng);
    Ok(BenchOutput {
        regime: cfg.regime,
        axis: cfg.axis,
        rows,
        slope,
        slope_low,
        slope_high,
        trials: cfg.trials,
        target: cfg.target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn giant_cost_model_slope_is_one_third() {
        let cfg = BenchConfig {
            regime: BenchRegime::GiantCost,
            axis: BenchAxis::K,
            grid: vec![1e6, 4e6, 1.6e7, 6.4e7, 2.56e8],
            fixed_threshold: 50_000.0,
            ..Default::default()
        };
        let out = bench_scaling(&cfg).unwrap();
        assert!(
            (out.slope - 1.0 / 3.0).abs() < 0.05,
            "slope = {}",
            out.slope
        );
        assert!(out.rows.iter().all(|r| r.reached));
    }

    #[test]
    fn grid_must_have_four_points() {
        let cfg = BenchConfig {
            grid: vec![1024.0, 2048.0],
            ..Default::default()
        };
        assert!(bench_scaling(&cfg).is_err());
    }

    #[test]
    fn binary_search_finds_the_boundary() {
        let boundary = 37u64;
        let n = search_minimal(1 << 20, |n| Ok(n >= boundary)).unwrap();
        assert_eq!(n, Some(boundary));
        let unreachable = search_minimal(64, |_| Ok(false)).unwrap();
        assert_eq!(unreachable, None);
    }

    #[test]
    fn ols_slope_recovers_a_power_law() {
        let pts: Vec<(f64, f64)> = (1..6)
            .map(|i| {
                let x = (i as f64) * 2.0;
                (x.ln(), (3.0 * x.powf(0.5)).ln())
            })
            .collect();
        assert!((ols_slope(&pts) - 0.5).abs() < 1e-9);
    }
}
