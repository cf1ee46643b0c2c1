//! Probability mass functions over `[k]`, the distance measures used by the
//! testers, and the hard-instance families the harness draws from.

use std::fmt;
use std::str::FromStr;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Scalars with the transcendental operations the metric suite needs.
pub trait RealScalar: Scalar + Float {}
impl RealScalar for f64 {}
impl RealScalar for f32 {}

/// An explicit probability mass function over `{0, .., k-1}`.
///
/// Entries are validated at construction: nonnegative, and summing to one
/// (within 1e-12 for floats, exactly for rationals). Values are immutable
/// afterwards and safe to share across concurrent trials.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmf<S: Scalar> {
    probs: Vec<S>,
}

impl<S: Scalar> Pmf<S> {
    // The negated comparison also rejects NaN entries, which have no
    // generic is_nan test.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(probs: Vec<S>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidPmf("domain must be nonempty".into()));
        }
        for (i, p) in probs.iter().enumerate() {
            if !(*p >= S::zero()) {
                return Err(Error::InvalidPmf(format!("entry {i} is negative or NaN")));
            }
        }
        let total = S::sum_probs(&probs);
        if !S::sum_is_one(&total) {
            return Err(Error::InvalidPmf(format!("entries sum to {total:?}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Self {
        let p = S::int_ratio(1, k as i64);
        Self {
            probs: vec![p; k],
        }
    }

    pub fn point_mass(k: usize, at: usize) -> Result<Self> {
        if at >= k {
            return Err(Error::InvalidParameter(format!("point {at} outside [{k}]")));
        }
        let mut probs = vec![S::zero(); k];
        probs[at] = S::one();
        Ok(Self { probs })
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> &S {
        &self.probs[i]
    }

    /// Deviation coordinates `e_j` defined by `p_j = (1 + e_j) / k`.
    ///
    /// They sum to zero and lie in `[-1, k-1]`.
    pub fn deviation_coordinates(&self) -> Vec<S> {
        let k = S::from_usize(self.k()).expect("domain size fits scalar");
        self.probs
            .iter()
            .map(|p| k.clone() * p.clone() - S::one())
            .collect()
    }

    /// The signed deviation vector `p - U_k`.
    pub fn delta_from_uniform(&self) -> Vec<S> {
        let u = S::int_ratio(1, self.k() as i64);
        self.probs.iter().map(|p| p.clone() - u.clone()).collect()
    }

    /// Chi-squared divergence from the uniform distribution, via the
    /// identity with the squared Euclidean norm: `k * ||p - U_k||_2^2`.
    pub fn chi_sq_uniform(&self) -> S {
        let k = S::from_usize(self.k()).expect("domain size fits scalar");
        let mut acc = S::zero();
        for d in self.delta_from_uniform() {
            acc = acc + d.clone() * d;
        }
        k * acc
    }

    /// Total variation distance, `(1/2) * ||p - q||_1`.
    pub fn tv(&self, other: &Self) -> Result<S> {
        self.check_dims(other)?;
        let mut acc = S::zero();
        for (p, q) in self.probs.iter().zip(&other.probs) {
            acc = acc + (p.clone() - q.clone()).abs();
        }
        Ok(acc / S::int_ratio(2, 1))
    }

    /// Squared Euclidean distance `||p - q||_2^2`.
    pub fn l2_sq(&self, other: &Self) -> Result<S> {
        self.check_dims(other)?;
        let mut acc = S::zero();
        for (p, q) in self.probs.iter().zip(&other.probs) {
            let d = p.clone() - q.clone();
            acc = acc + d.clone() * d;
        }
        Ok(acc)
    }

    fn check_dims(&self, other: &Self) -> Result<()> {
        if self.k() != other.k() {
            return Err(Error::DimensionMismatch(self.k(), other.k()));
        }
        Ok(())
    }
}

/// The distance/divergence measures exposed by [`distance`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Tv,
    HellingerSq,
    Kl,
    ChiSq,
    L2,
}

impl<S: RealScalar> Pmf<S> {
    /// Squared Hellinger distance, unnormalized convention with range `[0, 2]`.
    pub fn hellinger_sq(&self, other: &Self) -> Result<S> {
        self.check_dims(other)?;
        let mut acc = S::zero();
        for (p, q) in self.probs.iter().zip(&other.probs) {
            let d = p.sqrt() - q.sqrt();
            acc = acc + d * d;
        }
        Ok(acc)
    }

    /// Kullback-Leibler divergence `KL(p || q) = sum p_i ln(p_i / q_i)`, in nats.
    ///
    /// Conventions: `0 * ln(0 / x) = 0`; `x * ln(x / 0) = +inf` for `x > 0`.
    /// This is the orientation under which the chain
    /// `TV^2 <= H^2 <= KL <= chi^2` holds; beware that some texts write the
    /// arguments the other way around.
    pub fn kl(&self, other: &Self) -> Result<S> {
        self.check_dims(other)?;
        let mut acc = S::zero();
        for (p, q) in self.probs.iter().zip(&other.probs) {
            if *p > S::zero() {
                if *q > S::zero() {
                    acc = acc + *p * (*p / *q).ln();
                } else {
                    return Ok(S::infinity());
                }
            }
        }
        Ok(acc)
    }

    /// Chi-squared divergence `sum (p_i - q_i)^2 / q_i`.
    ///
    /// Conventions: a zero entry of `q` contributes 0 when `p_i = q_i` and
    /// `+inf` otherwise.
    pub fn chi_sq(&self, other: &Self) -> Result<S> {
        self.check_dims(other)?;
        let mut acc = S::zero();
        for (p, q) in self.probs.iter().zip(&other.probs) {
            if *q > S::zero() {
                let d = *p - *q;
                acc = acc + d * d / *q;
            } else if *p != *q {
                return Ok(S::infinity());
            }
        }
        Ok(acc)
    }
}

/// Distance between two pmfs over the same domain.
pub fn distance<S: RealScalar>(p: &Pmf<S>, q: &Pmf<S>, metric: Metric) -> Result<S> {
    match metric {
        Metric::Tv => p.tv(q),
        Metric::HellingerSq => p.hellinger_sq(q),
        Metric::Kl => p.kl(q),
        Metric::ChiSq => p.chi_sq(q),
        Metric::L2 => Ok(p.l2_sq(q)?.sqrt()),
    }
}

/// The instance families the harness can materialize.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum InstanceSpec {
    /// The uniform distribution on `[k]`.
    Uniform,
    /// Alternating halves at `(1 +- 2 eps) / k`; total variation from uniform
    /// is exactly `eps`. Requires even `k` and `eps` in `(0, 1/2]`.
    PerturbedUniform { epsilon: f64 },
    /// Uniform on the first `size` elements; `chi^2` from uniform is `k/size - 1`.
    UniformSubset { size: usize },
    /// Mass `weight` on the first element, the rest spread uniformly.
    HeavySpike { weight: f64 },
    /// The pmf induced by an r-to-1 string: uniform on `k/r` elements.
    RTo1String { multiplicity: usize },
}

impl fmt::Display for InstanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceSpec::Uniform => write!(f, "uniform"),
            InstanceSpec::PerturbedUniform { epsilon } => write!(f, "perturbed({epsilon})"),
            InstanceSpec::UniformSubset { size } => write!(f, "subset({size})"),
            InstanceSpec::HeavySpike { weight } => write!(f, "spike({weight})"),
            InstanceSpec::RTo1String { multiplicity } => write!(f, "rto1({multiplicity})"),
        }
    }
}

impl FromStr for InstanceSpec {
    type Err = Error;

    /// Parses `uniform`, `perturbed:<eps>`, `subset:<size>`, `spike:<w>`, `rto1:<r>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |s: &str| Error::Config(format!("unrecognized instance spec '{s}'"));
        if s == "uniform" {
            return Ok(InstanceSpec::Uniform);
        }
        let (name, arg) = s.split_once(':').ok_or_else(|| bad(s))?;
        match name {
            "perturbed" => Ok(InstanceSpec::PerturbedUniform {
                epsilon: arg.parse().map_err(|_| bad(s))?,
            }),
            "subset" => Ok(InstanceSpec::UniformSubset {
                size: arg.parse().map_err(|_| bad(s))?,
            }),
            "spike" => Ok(InstanceSpec::HeavySpike {
                weight: arg.parse().map_err(|_| bad(s))?,
            }),
            "rto1" => Ok(InstanceSpec::RTo1String {
                multiplicity: arg.parse().map_err(|_| bad(s))?,
            }),
            _ => Err(bad(s)),
        }
    }
}

/// Materialize an instance family member over `[k]`.
pub fn make_instance(k: usize, spec: &InstanceSpec) -> Result<Pmf<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    match *spec {
        InstanceSpec::Uniform => Ok(Pmf::uniform(k)),
        InstanceSpec::PerturbedUniform { epsilon } => {
            if !k.is_multiple_of(2) {
                return Err(Error::InvalidParameter(
                    "perturbed-uniform requires even k".into(),
                ));
            }
            if epsilon.is_nan() || epsilon <= 0.0 || epsilon > 0.5 {
                return Err(Error::InvalidParameter(format!(
                    "perturbed-uniform epsilon {epsilon} outside (0, 1/2]"
                )));
            }
            let hi = (1.0 + 2.0 * epsilon) / k as f64;
            let lo = (1.0 - 2.0 * epsilon) / k as f64;
            let probs = (0..k).map(|j| if j % 2 == 0 { hi } else { lo }).collect();
            Pmf::new(probs)
        }
        InstanceSpec::UniformSubset { size } => {
            if size == 0 || size > k {
                return Err(Error::InvalidParameter(format!(
                    "subset size {size} outside 1..={k}"
                )));
            }
            let mut probs = vec![0.0; k];
            for p in probs.iter_mut().take(size) {
                *p = 1.0 / size as f64;
            }
            Pmf::new(probs)
        }
        InstanceSpec::HeavySpike { weight } => {
            if weight.is_nan() || weight <= 0.0 || weight > 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "spike weight {weight} outside (0, 1]"
                )));
            }
            if k == 1 {
                if weight != 1.0 {
                    return Err(Error::InvalidParameter(
                        "spike over a single element must have weight 1".into(),
                    ));
                }
                return Pmf::point_mass(1, 0);
            }
            let rest = (1.0 - weight) / (k - 1) as f64;
            let mut probs = vec![rest; k];
            probs[0] = weight;
            Pmf::new(probs)
        }
        InstanceSpec::RTo1String { multiplicity } => {
            if multiplicity < 2 || !k.is_multiple_of(multiplicity) {
                return Err(Error::InvalidParameter(format!(
                    "r-to-1 multiplicity {multiplicity} must be >= 2 and divide k = {k}"
                )));
            }
            let support = k / multiplicity;
            let mut probs = vec![0.0; k];
            for p in probs.iter_mut().take(support) {
                *p = multiplicity as f64 / k as f64;
            }
            Pmf::new(probs)
        }
    }
}

/// A pmf drawn from the flat Dirichlet: normalized independent
/// unit-exponential draws. Full support with probability one.
pub fn random_pmf<R: Rng>(k: usize, rng: &mut R) -> Pmf<f64> {
    assert!(k >= 1);
    let mut raw: Vec<f64> = (0..k)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let total = f64::sum_probs(&raw);
    for x in raw.iter_mut() {
        *x /= total;
    }
    // Push any residual rounding drift onto the largest entry so the
    // construction invariant holds even for large k.
    let drift = 1.0 - f64::sum_probs(&raw);
    let argmax = raw
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    raw[argmax] += drift;
    Pmf::new(raw).expect("normalized exponentials form a pmf")
}

/// Serialize a pmf as the one-line JSON array interchange format.
pub fn pmf_to_json(p: &Pmf<f64>) -> String {
    serde_json::to_string(p.probs()).expect("f64 slice serializes")
}

/// Parse the one-line JSON array interchange format.
pub fn pmf_from_json(s: &str) -> Result<Pmf<f64>> {
    let probs: Vec<f64> = serde_json::from_str(s)?;
    Pmf::new(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn identity_case_is_zero_in_every_metric() {
        let u: Pmf<f64> = Pmf::uniform(17);
        for m in [
            Metric::Tv,
            Metric::HellingerSq,
            Metric::Kl,
            Metric::ChiSq,
            Metric::L2,
        ] {
            assert_eq!(distance(&u, &u, m).unwrap(), 0.0);
        }
    }

    #[test]
    fn chi_sq_of_uniform_subset() {
        let p = make_instance(8, &InstanceSpec::UniformSubset { size: 2 }).unwrap();
        let u = Pmf::uniform(8);
        close(distance(&p, &u, Metric::ChiSq).unwrap(), 3.0, 1e-12);
        close(p.chi_sq_uniform(), 3.0, 1e-12);
    }

    #[test]
    fn biased_coin_distances() {
        let p = Pmf::new(vec![0.75, 0.25]).unwrap();
        let u = Pmf::uniform(2);
        close(distance(&p, &u, Metric::Tv).unwrap(), 0.25, 1e-12);
        // 2 - 2*(sqrt(0.375) + sqrt(0.125)), evaluated independently.
        close(
            distance(&p, &u, Metric::HellingerSq).unwrap(),
            0.06814834742188044,
            1e-12,
        );
    }

    #[test]
    fn chi_sq_uniform_matches_l2_identity() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let rng = &mut rng;
        for _ in 0..50 {
            let k = 1 + (rng.gen::<usize>() % 30);
            let p = random_pmf(k, rng);
            let u = Pmf::uniform(k);
            let l2 = distance(&p, &u, Metric::L2).unwrap();
            close(p.chi_sq_uniform(), k as f64 * l2 * l2, 1e-12);
            close(
                p.chi_sq_uniform(),
                distance(&p, &u, Metric::ChiSq).unwrap(),
                1e-12,
            );
        }
    }

    #[test]
    fn perturbed_uniform_construction() {
        let p = make_instance(4, &InstanceSpec::PerturbedUniform { epsilon: 0.1 }).unwrap();
        assert_eq!(p.probs(), &[0.3, 0.2, 0.3, 0.2]);
        let u = Pmf::uniform(4);
        close(p.tv(&u).unwrap(), 0.1, 1e-12);
        close(p.chi_sq_uniform(), 4.0 * 0.1 * 0.1, 1e-12);
    }

    #[test]
    fn r_to_1_instance() {
        let p = make_instance(6, &InstanceSpec::RTo1String { multiplicity: 3 }).unwrap();
        assert_eq!(p.probs(), &[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
        close(p.chi_sq_uniform(), 2.0, 1e-12);
    }

    #[test]
    fn subset_instance_forced_by_definition() {
        let p = make_instance(4, &InstanceSpec::UniformSubset { size: 2 }).unwrap();
        assert_eq!(p.probs(), &[0.5, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn divergence_conventions_on_zero_entries() {
        let p = Pmf::new(vec![0.5, 0.5, 0.0]).unwrap();
        let q = Pmf::new(vec![1.0, 0.0, 0.0]).unwrap();
        // p puts mass where q has none.
        assert_eq!(distance(&p, &q, Metric::ChiSq).unwrap(), f64::INFINITY);
        assert_eq!(distance(&p, &q, Metric::Kl).unwrap(), f64::INFINITY);
        // q's support is inside p's: both stay finite.
        assert!(distance(&q, &p, Metric::Kl).unwrap().is_finite());
        assert!(distance(&q, &p, Metric::ChiSq).unwrap().is_finite());
        // Matching zero entries contribute nothing.
        let r = Pmf::new(vec![0.25, 0.75, 0.0]).unwrap();
        assert!(distance(&r, &p, Metric::ChiSq).unwrap().is_finite());
    }

    #[test]
    fn invalid_instances_are_rejected() {
        assert!(make_instance(5, &InstanceSpec::PerturbedUniform { epsilon: 0.1 }).is_err());
        assert!(make_instance(4, &InstanceSpec::PerturbedUniform { epsilon: 0.6 }).is_err());
        assert!(make_instance(4, &InstanceSpec::UniformSubset { size: 0 }).is_err());
        assert!(make_instance(4, &InstanceSpec::UniformSubset { size: 5 }).is_err());
        assert!(make_instance(6, &InstanceSpec::RTo1String { multiplicity: 4 }).is_err());
        assert!(make_instance(4, &InstanceSpec::HeavySpike { weight: 0.0 }).is_err());
    }

    #[test]
    fn pmf_validation() {
        assert!(Pmf::new(vec![0.5, 0.6]).is_err());
        assert!(Pmf::new(vec![-0.1, 1.1]).is_err());
        assert!(Pmf::<f64>::new(vec![]).is_err());
        assert!(Pmf::new(vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn deviation_coordinates_sum_to_zero() {
        let p = Pmf::new(vec![0.5, 0.25, 0.25]).unwrap();
        let eps = p.deviation_coordinates();
        close(eps.iter().sum::<f64>(), 0.0, 1e-12);
        for e in &eps {
            assert!(*e >= -1.0 - 1e-12 && *e <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn exact_rational_instantiation() {
        use num_traits::Zero;
        let third = BigRational::int_ratio(1, 3);
        let p: Pmf<BigRational> = Pmf::new(vec![third.clone(), third.clone(), third]).unwrap();
        assert!(p.chi_sq_uniform().is_zero());
        let q = Pmf::<BigRational>::point_mass(3, 0).unwrap();
        assert_eq!(q.chi_sq_uniform(), BigRational::int_ratio(2, 1));
        assert_eq!(
            q.tv(&Pmf::uniform(3)).unwrap(),
            BigRational::int_ratio(2, 3)
        );
    }

    #[test]
    fn instance_spec_round_trips_through_strings() {
        for s in ["uniform", "perturbed:0.2", "subset:16", "spike:0.9", "rto1:4"] {
            let spec: InstanceSpec = s.parse().unwrap();
            let json = serde_json::to_string(&spec).unwrap();
            let back: InstanceSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(spec, back);
        }
        assert!("perturbed".parse::<InstanceSpec>().is_err());
        assert!("nope:1".parse::<InstanceSpec>().is_err());
    }

    #[test]
    fn pmf_json_round_trip() {
        let p = Pmf::new(vec![0.25, 0.75]).unwrap();
        let s = pmf_to_json(&p);
        assert_eq!(s, "[0.25,0.75]");
        assert_eq!(pmf_from_json(&s).unwrap(), p);
        assert!(pmf_from_json("[0.2,0.2]").is_err());
    }
}
