//! Lemma validator suites: every exhaustive identity and bound, run at its
//! stated scale, reported one line per check.

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;

use crate::access::{code_from_pmf, StreamKey};
use crate::dist::{random_pmf, Pmf};
use crate::error::{Error, Result};
use crate::exhaustive::{
    enumerate_collisions, enumerate_phase1, rademacher_second_moment, random_rational_pmf,
    rational_pmf_family, subset_tail_probability,
};
use crate::qme::{exact_mean_var, Rv};
use crate::reduce::{reduce_instance, ReductionMaps};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(suite: &'static str, name: &str, passed: bool, detail: String) -> Self {
        Self {
            suite,
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

pub fn all_pass(checks: &[CheckResult]) -> bool {
    checks.iter().all(|c| c.passed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuiteId {
    Moments,
    Hashing,
    Collisions,
    Reduction,
}

impl std::str::FromStr for SuiteId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moments" => Ok(SuiteId::Moments),
            "hashing" => Ok(SuiteId::Hashing),
            "collisions" => Ok(SuiteId::Collisions),
            "reduction" => Ok(SuiteId::Reduction),
            _ => Err(Error::Config(format!("unrecognized suite '{s}'"))),
        }
    }
}

/// Run the selected suites (all four when empty) with a fixed seed.
pub fn validate_lemmas(suites: &[SuiteId], seed: u64) -> Vec<CheckResult> {
    let run_all = suites.is_empty();
    let mut out = Vec::new();
    if run_all || suites.contains(&SuiteId::Moments) {
        out.extend(moments_suite());
    }
    if run_all || suites.contains(&SuiteId::Hashing) {
        out.extend(hashing_suite(seed));
    }
    if run_all || suites.contains(&SuiteId::Collisions) {
        out.extend(collisions_suite());
    }
    if run_all || suites.contains(&SuiteId::Reduction) {
        out.extend(reduction_suite(seed));
    }
    out
}

/// Exhaustive Phase-1 moment identities over the rational pmf family
/// (k <= 4, shared denominators <= 8) for n <= 5, in exact arithmetic:
/// the mean of `mu` is the chi-squared divergence, its variance is
/// `Var_{j~p}[eps_j]/n`, and the per-outcome mean/variance identities hold.
pub fn moments_suite() -> Vec<CheckResult> {
    const SUITE: &str = "moments";
    let family = rational_pmf_family(4, 8);
    let mut cases = 0u64;
    let mut mean_bad = 0u64;
    let mut var_bad = 0u64;
    let mut mu_identity_bad = 0u64;
    let mut sigma_identity_bad = 0u64;
    for p in &family {
        for n in 1..=5 {
            let r = enumerate_phase1(p, n);
            cases += 1;
            if r.mean_of_mu != r.chi_sq {
                mean_bad += 1;
            }
            if r.var_of_mu != r.predicted_var_of_mu {
                var_bad += 1;
            }
            if !r.mu_identity_ok {
                mu_identity_bad += 1;
            }
            if !r.sigma_sq_identity_ok {
                sigma_identity_bad += 1;
            }
        }
    }
    let scale = format!("{} pmfs x 5 sample counts = {cases} cases", family.len());

    // Uniform all-distinct outcomes: mu = 0 and sigma^2 = k/n - 1 exactly,
    // and the f64 sigma is the correctly rounded square root.
    let mut distinct_ok = true;
    for (k, n) in [(10usize, 2u64), (10, 5), (100, 2), (100, 5)] {
        let one = BigRational::one();
        let k_over_n = BigRational::int_ratio(k as i64, n as i64);
        let entries: Vec<(u32, BigRational)> = (0..n as u32)
            .map(|j| (j, k_over_n.clone() - one.clone()))
            .collect();
        let y: Rv<BigRational> = Rv::sparse(k, -one.clone(), entries).unwrap();
        let uniform: Pmf<BigRational> = Pmf::uniform(k);
        let (mu, var) = exact_mean_var(&uniform, &y).unwrap();
        if !mu.is_zero() || var != k_over_n.clone() - one {
            distinct_ok = false;
        }
        let sigma = f64::from_ratio(&var).sqrt();
        if sigma != (k as f64 / n as f64 - 1.0).sqrt() {
            distinct_ok = false;
        }
    }

    vec![
        CheckResult::new(
            SUITE,
            "phase1 mean of mu equals chi-squared",
            mean_bad == 0,
            format!("{scale}; {mean_bad} mismatches"),
        ),
        CheckResult::new(
            SUITE,
            "phase1 variance of mu equals Var[eps]/n",
            var_bad == 0,
            format!("{scale}; {var_bad} mismatches"),
        ),
        CheckResult::new(
            SUITE,
            "per-outcome mu equals average deviation",
            mu_identity_bad == 0,
            format!("{scale}; {mu_identity_bad} mismatches"),
        ),
        CheckResult::new(
            SUITE,
            "per-outcome sigma^2 identity",
            sigma_identity_bad == 0,
            format!("{scale}; {sigma_identity_bad} mismatches"),
        ),
        CheckResult::new(
            SUITE,
            "uniform all-distinct sigma is sqrt(k/n - 1) exactly",
            distinct_ok,
            "k in {10,100}, n in {2,5}, zero tolerance".to_string(),
        ),
    ]
}

/// Exhaustive binary-hashing bounds at k = 10 over random rational pairs:
/// forward `P[|p(S)-q(S)| >= alpha ||delta||] >= (1-4a^2)^2/12`, converse
/// `<= 1/(4b^2)`, and the Rademacher second-moment identity, all exact.
pub fn hashing_suite(seed: u64) -> Vec<CheckResult> {
    const SUITE: &str = "hashing";
    let mut rng = StreamKey::new(seed).child_label("hashing").rng();
    let pairs = 100;
    let k = 10;
    let alphas = [(1i64, 10i64), (1, 4), (7, 20)];
    let betas = [1i64, 2, 4];
    let mut forward_bad = 0u64;
    let mut converse_bad = 0u64;
    let mut rademacher_bad = 0u64;
    let twelve = BigRational::int_ratio(12, 1);
    let four = BigRational::int_ratio(4, 1);
    for _ in 0..pairs {
        let p = random_rational_pmf(k, 50, &mut rng);
        let q = random_rational_pmf(k, 50, &mut rng);
        for (num, den) in alphas {
            let alpha = BigRational::int_ratio(num, den);
            let alpha_sq = alpha.clone() * alpha;
            let tail = subset_tail_probability(&p, &q, &alpha_sq);
            let slack = BigRational::one() - four.clone() * alpha_sq;
            let lower = slack.clone() * slack / twelve.clone();
            if tail < lower {
                forward_bad += 1;
            }
        }
        for b in betas {
            let beta_sq = BigRational::int_ratio(b * b, 1);
            let tail = subset_tail_probability(&p, &q, &beta_sq);
            let upper = BigRational::int_ratio(1, 4 * b * b);
            if tail > upper {
                converse_bad += 1;
            }
        }
        let delta: Vec<BigRational> = p
            .probs()
            .iter()
            .zip(q.probs())
            .map(|(a, b)| a.clone() - b.clone())
            .collect();
        let l2_sq = delta
            .iter()
            .fold(BigRational::zero(), |acc, d| acc + d.clone() * d.clone());
        if rademacher_second_moment(&delta) != l2_sq {
            rademacher_bad += 1;
        }
    }
    let scale = format!("{pairs} random pairs, 2^{k} subsets each");
    vec![
        CheckResult::new(
            SUITE,
            "forward bound at alpha in {0.1, 0.25, 0.35}",
            forward_bad == 0,
            format!("{scale}; {forward_bad} violations"),
        ),
        CheckResult::new(
            SUITE,
            "converse bound at beta in {1, 2, 4}",
            converse_bad == 0,
            format!("{scale}; {converse_bad} violations"),
        ),
        CheckResult::new(
            SUITE,
            "Rademacher second moment equals squared norm",
            rademacher_bad == 0,
            format!("{scale}; {rademacher_bad} mismatches"),
        ),
    ]
}

/// Exhaustive collision moments for k <= 4, N <= 5: the enumerated mean
/// matches the closed form exactly and the enumerated variance respects
/// the upper bound.
pub fn collisions_suite() -> Vec<CheckResult> {
    const SUITE: &str = "collisions";
    let family = rational_pmf_family(4, 6);
    let mut cases = 0u64;
    let mut mean_bad = 0u64;
    let mut var_bad = 0u64;
    for p in &family {
        for n in 2..=5 {
            let r = enumerate_collisions(p, n);
            cases += 1;
            if r.mean != r.predicted_mean {
                mean_bad += 1;
            }
            if r.variance > r.variance_upper {
                var_bad += 1;
            }
        }
    }
    let scale = format!("{} pmfs x 4 sample counts = {cases} cases", family.len());
    vec![
        CheckResult::new(
            SUITE,
            "exhaustive E[Z] equals the closed form",
            mean_bad == 0,
            format!("{scale}; {mean_bad} mismatches"),
        ),
        CheckResult::new(
            SUITE,
            "exhaustive Var[Z] respects the upper bound",
            var_bad == 0,
            format!("{scale}; {var_bad} violations"),
        ),
    ]
}

/// Reduction correctness over random pairs with k <= 50: exact uniformity
/// of the reduced reference, exact grainedness, the TV distortion interval,
/// pushforward agreement on the float path, and draw accounting.
pub fn reduction_suite(seed: u64) -> Vec<CheckResult> {
    const SUITE: &str = "reduction";
    let mut rng = StreamKey::new(seed).child_label("reduction").rng();
    let pairs = 100;
    let mut uniform_bad = 0u64;
    let mut grained_bad = 0u64;
    let mut interval_bad = 0u64;
    for _ in 0..pairs {
        let k = 2 + rng.gen_range(0..49);
        let p = random_rational_pmf(k, 1000, &mut rng);
        let q = random_rational_pmf(k, 1000, &mut rng);
        let maps = ReductionMaps::from_exact(&q).unwrap();

        let reduced_q = maps.apply(&q).unwrap();
        let target = BigRational::int_ratio(1, 4 * k as i64);
        if reduced_q.probs().iter().any(|x| *x != target) {
            uniform_bad += 1;
        }

        let four_k = num_bigint::BigInt::from(4 * k as u64);
        if maps
            .grained()
            .iter()
            .any(|g| !(four_k.clone() % g.denom().clone()).is_zero())
        {
            grained_bad += 1;
        }

        let reduced_p = maps.apply(&p).unwrap();
        let uniform: Pmf<BigRational> = Pmf::uniform(4 * k);
        let tv_out = reduced_p.tv(&uniform).unwrap();
        let tv_in = p.tv(&q).unwrap();
        let quarter = tv_in.clone() / BigRational::int_ratio(4, 1);
        if tv_out < quarter || tv_out > tv_in {
            interval_bad += 1;
        }
    }

    // Float path: pushforward of the reference lands on uniform to 1e-12,
    // and one output draw charges exactly one p-use.
    let mut float_bad = 0u64;
    let mut ledger_bad = 0u64;
    for i in 0..20 {
        let k = 2 + rng.gen_range(0..49);
        let q = random_pmf(k, &mut rng);
        let p = random_pmf(k, &mut rng);
        let maps = ReductionMaps::from_pmf(&q).unwrap();
        let out = maps.apply(&q).unwrap();
        let target = 1.0 / (4 * k) as f64;
        if out.probs().iter().any(|x| (x - target).abs() > 1e-12) {
            float_bad += 1;
        }
        let code = code_from_pmf(&p, StreamKey::new(seed).child(1000 + i));
        let (mut reduced, _) =
            reduce_instance(&q, code, 0.5, StreamKey::new(seed).child(2000 + i)).unwrap();
        reduced.draw_n(10, "draw");
        if reduced.ledger().code_uses() != 10 {
            ledger_bad += 1;
        }
    }

    let scale = format!("{pairs} random rational pairs, k <= 50");
    vec![
        CheckResult::new(
            SUITE,
            "reduced reference is exactly uniform",
            uniform_bad == 0,
            format!("{scale}; {uniform_bad} failures"),
        ),
        CheckResult::new(
            SUITE,
            "grained reference has denominators dividing 4k",
            grained_bad == 0,
            format!("{scale}; {grained_bad} failures"),
        ),
        CheckResult::new(
            SUITE,
            "TV distortion stays in [TV/4, TV]",
            interval_bad == 0,
            format!("{scale}; {interval_bad} violations"),
        ),
        CheckResult::new(
            SUITE,
            "float pushforward of the reference is uniform to 1e-12",
            float_bad == 0,
            format!("20 float pairs; {float_bad} failures"),
        ),
        CheckResult::new(
            SUITE,
            "one output draw charges exactly one p-use",
            ledger_bad == 0,
            format!("20 reduced codes x 10 draws; {ledger_bad} failures"),
        ),
    ]
}
