use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use distcheck::dist::{pmf_from_json, InstanceSpec};
use distcheck::error::{Error, Result};
use distcheck::harness::{
    bench_csv, bench_scaling, run_closeness_trials, run_identity_trials, run_trials, summarize,
    trials_csv, validate_lemmas, write_plot, BenchAxis, BenchConfig, BenchOutput, BenchRegime,
    ExperimentConfig, InstanceSummary, PlotSeries, Regime, SuiteId, TrialReport,
};
use distcheck::qme::{NoiseMode, QmeBackend};
use distcheck::testers::Decision;

#[derive(Parser)]
#[command(
    name = "distcheck",
    version,
    about = "Distribution-testing laboratory with query-metered sampler access"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test uniformity of an unknown distribution in a chosen regime.
    TestUniformity(TestUniformityArgs),
    /// Test identity against a known reference pmf (one-line JSON array).
    TestIdentity(TestIdentityArgs),
    /// Test l2 closeness of two unknown distributions.
    TestClosenessL2(TestClosenessArgs),
    /// Run the exhaustive lemma validator suites.
    ValidateLemmas(ValidateArgs),
    /// Fit sample-budget scaling slopes across a parameter grid.
    BenchScaling(BenchArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment config; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Domain size.
    #[arg(long)]
    k: Option<usize>,
    /// Trials per instance.
    #[arg(long)]
    trials: Option<u64>,
    /// Master seed; DISTCHECK_SEED is the fallback.
    #[arg(long, env = "DISTCHECK_SEED")]
    seed: Option<u64>,
    /// Mean-estimation backend: ideal | mom.
    #[arg(long)]
    qme_backend: Option<String>,
    /// Ideal-oracle noise: zero | uniform | adv-high | adv-low | adv-to:<x>.
    #[arg(long)]
    qme_noise: Option<String>,
    /// Failure probability of large-regime estimation calls.
    #[arg(long)]
    qme_delta: Option<f64>,
    /// Constant inside the estimation cost formula.
    #[arg(long)]
    cost_constant: Option<u64>,
    /// Write the per-trial CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write an SVG plot here.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Worker threads for trial fan-out.
    #[arg(long)]
    jobs: Option<usize>,
    /// Stream one JSON object per trial to stdout.
    #[arg(long)]
    json: bool,
    /// Large regime: infinity-norm bound constant B.
    #[arg(long)]
    b_const: Option<f64>,
    /// Large regime: sample-count constant c.
    #[arg(long)]
    c_const: Option<f64>,
    /// Large regime: estimation accuracy constant C.
    #[arg(long)]
    big_c_const: Option<f64>,
    /// Large regime: bypass the sample-count formula.
    #[arg(long)]
    n_override: Option<u64>,
    /// Small regime: voting rounds T.
    #[arg(long)]
    rounds: Option<u64>,
    /// Small regime: per-round decision threshold (multiple of tau).
    #[arg(long)]
    theta_star: Option<f64>,
    /// Small regime: per-estimate precision (multiple of tau).
    #[arg(long)]
    precision: Option<f64>,
    /// Small regime: per-estimate failure probability.
    #[arg(long)]
    delta_round: Option<f64>,
    /// Small regime: accept iff the triggered fraction is at most this.
    #[arg(long)]
    vote_threshold: Option<f64>,
    /// Giant regime: sample-count coefficient.
    #[arg(long)]
    a_coef: Option<f64>,
    /// Giant regime: closeness constant.
    #[arg(long)]
    c_close: Option<f64>,
}

#[derive(Args)]
struct TestUniformityArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// large | small | giant | classical.
    #[arg(long)]
    regime: String,
    /// Large-regime divergence threshold.
    #[arg(long)]
    gamma: Option<f64>,
    /// Small-regime l2 threshold.
    #[arg(long)]
    tau: Option<f64>,
    /// Giant-regime chi-squared threshold.
    #[arg(long)]
    theta: Option<f64>,
    /// Classical baseline distance parameter.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Instance under test (repeatable): uniform | perturbed:<eps> |
    /// subset:<size> | spike:<w> | rto1:<r>.
    #[arg(long = "instance")]
    instances: Vec<String>,
    /// Load the unknown distribution from a string-oracle file.
    #[arg(long)]
    string_oracle: Option<PathBuf>,
}

#[derive(Args)]
struct TestIdentityArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Reference pmf file (one-line JSON array of probabilities).
    #[arg(long)]
    reference: PathBuf,
    /// Distance parameter.
    #[arg(long)]
    epsilon: f64,
    /// Instance under test (repeatable).
    #[arg(long = "instance")]
    instances: Vec<String>,
}

#[derive(Args)]
struct TestClosenessArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// l2 threshold.
    #[arg(long)]
    tau: f64,
    /// First distribution (repeatable).
    #[arg(long = "instance-p")]
    instances_p: Vec<String>,
    /// Second distribution.
    #[arg(long = "instance-q")]
    instance_q: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Suite to run (repeatable): moments | hashing | collisions | reduction.
    /// Default: all.
    #[arg(long = "suite")]
    suites: Vec<String>,
    #[arg(long, env = "DISTCHECK_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    /// large | classical | giant-cost.
    #[arg(long)]
    regime: String,
    /// k | inv-theta.
    #[arg(long, default_value = "k")]
    axis: String,
    /// Comma-separated grid: domain sizes (axis k) or thresholds (axis inv-theta).
    #[arg(long)]
    grid: String,
    /// Fixed domain size (axis inv-theta).
    #[arg(long)]
    k: Option<usize>,
    /// Fixed large-regime threshold (axis k).
    #[arg(long)]
    gamma: Option<f64>,
    /// Fixed classical-baseline distance parameter.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Fixed giant-regime threshold (cost model).
    #[arg(long)]
    theta: Option<f64>,
    /// Target success rate per side.
    #[arg(long, default_value_t = 0.9)]
    target: f64,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    /// Largest sample budget the search may try.
    #[arg(long, default_value_t = 1 << 20)]
    budget_cap: u64,
    #[arg(long, env = "DISTCHECK_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    a_coef: Option<f64>,
    #[arg(long)]
    b_const: Option<f64>,
    #[arg(long)]
    c_const: Option<f64>,
    #[arg(long)]
    big_c_const: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

fn parse_backend(s: &str) -> Result<QmeBackend> {
    match s {
        "ideal" => Ok(QmeBackend::IdealOracle),
        "mom" => Ok(QmeBackend::ClassicalMoM),
        _ => Err(Error::Config(format!("unrecognized backend '{s}'"))),
    }
}

fn parse_instances(specs: &[String]) -> Result<Vec<InstanceSpec>> {
    specs.iter().map(|s| s.parse()).collect()
}

fn build_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let body = std::fs::read_to_string(path)?;
            serde_json::from_str(&body)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(k) = common.k {
        cfg.k = k;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(backend) = &common.qme_backend {
        cfg.qme.backend = parse_backend(backend)?;
    }
    if let Some(noise) = &common.qme_noise {
        cfg.qme.noise = NoiseMode::from_str(noise)?;
    }
    if let Some(delta) = common.qme_delta {
        cfg.qme.delta = delta;
    }
    if let Some(cost) = common.cost_constant {
        cfg.qme.cost_constant = cost;
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    if let Some(v) = common.b_const {
        cfg.large.b_const = v;
    }
    if let Some(v) = common.c_const {
        cfg.large.c_const = v;
    }
    if let Some(v) = common.big_c_const {
        cfg.large.big_c_const = v;
    }
    if common.n_override.is_some() {
        cfg.large.n_override = common.n_override;
    }
    if let Some(v) = common.rounds {
        cfg.small.rounds = v;
    }
    if let Some(v) = common.theta_star {
        cfg.small.theta_star = v;
    }
    if let Some(v) = common.precision {
        cfg.small.per_estimate_precision = v;
    }
    if let Some(v) = common.delta_round {
        cfg.small.delta_round = v;
    }
    if let Some(v) = common.vote_threshold {
        cfg.small.vote_threshold = v;
    }
    if let Some(v) = common.a_coef {
        cfg.giant.a_coef = v;
    }
    if let Some(v) = common.c_close {
        cfg.giant.c_close = v;
    }
    Ok(cfg)
}

fn emit_trials(common: &CommonArgs, rows: &[TrialReport]) -> Result<()> {
    if common.json {
        for row in rows {
            println!("{}", serde_json::to_string(row)?);
        }
    }
    if let Some(path) = &common.out {
        std::fs::write(path, trials_csv(rows))?;
    }
    if let Some(path) = &common.plot {
        write_trials_plot(path, rows)?;
    }
    for s in summarize(rows) {
        print_summary(&s);
    }
    let mean_wall = rows.iter().map(|r| r.wall_ms).sum::<f64>() / rows.len().max(1) as f64;
    eprintln!("mean trial wall time: {mean_wall:.3} ms");
    Ok(())
}

fn print_summary(s: &InstanceSummary) {
    println!(
        "instance={} trials={} accepts={} accept_rate={:.4} wilson95=[{:.4},{:.4}] mean_code_uses={:.1}",
        s.instance, s.trials, s.accepts, s.accept_rate, s.wilson_low, s.wilson_high, s.mean_code_uses
    );
}

fn write_trials_plot(path: &Path, rows: &[TrialReport]) -> Result<()> {
    // Mean-estimate scatter when available, decision timeline otherwise.
    let has_mu = rows.iter().any(|r| r.mu_hat.is_some());
    let value = |r: &TrialReport| {
        if has_mu {
            r.mu_hat.unwrap_or(f64::NAN)
        } else if r.decision == Decision::Accept {
            1.0
        } else {
            0.0
        }
    };
    let split = |want: Decision| {
        rows.iter()
            .enumerate()
            .filter(|(_, r)| r.decision == want)
            .map(|(i, r)| (i as f64, value(r)))
            .filter(|(_, y)| y.is_finite())
            .collect::<Vec<_>>()
    };
    let series = vec![
        PlotSeries {
            label: "accept".into(),
            points: split(Decision::Accept),
        },
        PlotSeries {
            label: "reject".into(),
            points: split(Decision::Reject),
        },
    ];
    let ylabel = if has_mu { "mean estimate" } else { "decision" };
    write_plot(path, "trial outcomes", "trial", ylabel, &series, false, None)
}

fn write_bench_plot(path: &Path, out: &BenchOutput) -> Result<()> {
    let points: Vec<(f64, f64)> = out
        .rows
        .iter()
        .filter_map(|r| r.n_star.map(|n| (r.x, n as f64)))
        .collect();
    // Fit line through the mean point in log space.
    let intercept = {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0.ln()).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
        my - out.slope * mx
    };
    let series = vec![PlotSeries {
        label: format!("n* (slope {:.3})", out.slope),
        points,
    }];
    write_plot(
        path,
        &format!("{} scaling vs {}", out.regime, out.axis),
        &out.axis.to_string(),
        "minimal budget",
        &series,
        true,
        Some((out.slope, intercept)),
    )
}

fn cmd_test_uniformity(args: &TestUniformityArgs) -> Result<ExitCode> {
    let mut cfg = build_config(&args.common)?;
    let regime = Regime::from_str(&args.regime)?;
    if args.gamma.is_some() {
        cfg.gamma = args.gamma;
    }
    if args.tau.is_some() {
        cfg.tau = args.tau;
    }
    if args.theta.is_some() {
        cfg.theta = args.theta;
    }
    if args.epsilon.is_some() {
        cfg.epsilon = args.epsilon;
    }
    if !args.instances.is_empty() {
        cfg.instances = parse_instances(&args.instances)?;
    }
    if let Some(path) = &args.string_oracle {
        cfg.string_oracle = Some(path.display().to_string());
    }
    let rows = run_trials(regime, &cfg)?;
    emit_trials(&args.common, &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_test_identity(args: &TestIdentityArgs) -> Result<ExitCode> {
    let mut cfg = build_config(&args.common)?;
    let body = std::fs::read_to_string(&args.reference)?;
    let reference = pmf_from_json(body.trim())?;
    if let Some(k) = args.common.k {
        if k != reference.k() {
            return Err(Error::Config(format!(
                "--k {k} conflicts with reference of size {}",
                reference.k()
            )));
        }
    }
    cfg.k = reference.k();
    cfg.epsilon = Some(args.epsilon);
    if !args.instances.is_empty() {
        cfg.instances = parse_instances(&args.instances)?;
    }
    let rows = run_identity_trials(&cfg, &reference)?;
    emit_trials(&args.common, &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_test_closeness(args: &TestClosenessArgs) -> Result<ExitCode> {
    let mut cfg = build_config(&args.common)?;
    cfg.tau = Some(args.tau);
    if !args.instances_p.is_empty() {
        cfg.instances = parse_instances(&args.instances_p)?;
    }
    if let Some(q) = &args.instance_q {
        cfg.instance_q = Some(q.parse()?);
    }
    let rows = run_closeness_trials(&cfg)?;
    emit_trials(&args.common, &rows)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: &ValidateArgs) -> Result<ExitCode> {
    let mut suites = Vec::new();
    for s in &args.suites {
        if s == "all" {
            suites.clear();
            break;
        }
        suites.push(SuiteId::from_str(s)?);
    }
    let checks = validate_lemmas(&suites, args.seed.unwrap_or(0));
    let mut failures = 0u32;
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("[{}] {}: {status} ({})", c.suite, c.name, c.detail);
        if !c.passed {
            failures += 1;
        }
    }
    if failures > 0 {
        eprintln!("{failures} check(s) failed");
        Ok(ExitCode::from(1))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<ExitCode> {
    let regime = BenchRegime::from_str(&args.regime)?;
    let axis = BenchAxis::from_str(&args.axis)?;
    let grid: Vec<f64> = args
        .grid
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad grid entry '{s}'")))
        })
        .collect::<Result<_>>()?;
    let mut cfg = BenchConfig {
        regime,
        axis,
        grid,
        target: args.target,
        trials: args.trials,
        budget_cap: args.budget_cap,
        master_seed: args.seed.unwrap_or(0),
        ..Default::default()
    };
    if let Some(k) = args.k {
        cfg.fixed_k = k;
    }
    cfg.fixed_threshold = match regime {
        BenchRegime::Large => match (axis, args.gamma) {
            (_, Some(g)) => g,
            // On the inv-theta axis the grid itself carries the thresholds.
            (BenchAxis::InvTheta, None) => 0.0,
            (BenchAxis::K, None) => {
                return Err(Error::Config(
                    "large bench on the k axis requires --gamma".into(),
                ))
            }
        },
        BenchRegime::Classical => args
            .epsilon
            .ok_or_else(|| Error::Config("classical bench requires --epsilon".into()))?,
        BenchRegime::GiantCost => args
            .theta
            .ok_or_else(|| Error::Config("giant-cost bench requires --theta".into()))?,
    };
    if let Some(v) = args.a_coef {
        cfg.a_coef = v;
    }
    if let Some(v) = args.b_const {
        cfg.b_const = v;
    }
    if let Some(v) = args.c_const {
        cfg.c_const = v;
    }
    if let Some(v) = args.big_c_const {
        cfg.big_c_const = v;
    }
    let out = bench_scaling(&cfg)?;
    for row in &out.rows {
        let n_star = row
            .n_star
            .map(|n| n.to_string())
            .unwrap_or_else(|| "unreached".into());
        println!(
            "x={} k={} threshold={} n_star={n_star}",
            row.x, row.k, row.threshold
        );
    }
    println!(
        "slope={:.4} bootstrap95=[{:.4},{:.4}]",
        out.slope, out.slope_low, out.slope_high
    );
    if let Some(path) = &args.out {
        std::fs::write(path, bench_csv(&out))?;
    }
    if let Some(path) = &args.plot {
        write_bench_plot(path, &out)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::TestUniformity(args) => cmd_test_uniformity(args),
        Command::TestIdentity(args) => cmd_test_identity(args),
        Command::TestClosenessL2(args) => cmd_test_closeness(args),
        Command::ValidateLemmas(args) => cmd_validate(args),
        Command::BenchScaling(args) => cmd_bench(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
