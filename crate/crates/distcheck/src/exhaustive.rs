//! Brute-force enumeration oracles in exact rational arithmetic.
//!
//! Everything here works by iterating the full outcome space of a small
//! experiment, so identities can be checked with zero tolerance. These
//! routines are deliberately independent of the sampling paths they
//! validate: they consume only pmf tables and the moment definitions.

use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;

use crate::dist::Pmf;
use crate::qme::{exact_mean_var, Rv};
use crate::scalar::Scalar;
use crate::testers::collision_stats;

/// Every pmf over `k <= max_k` elements whose entries share a denominator
/// `d <= max_denom` (compositions of `d` into `k` nonnegative parts).
pub fn rational_pmf_family(max_k: usize, max_denom: u64) -> Vec<Pmf<BigRational>> {
    let mut out = Vec::new();
    for k in 1..=max_k {
        for d in 1..=max_denom {
            let mut parts = vec![0u64; k];
            compositions(d, 0, &mut parts, &mut |parts| {
                let probs = parts
                    .iter()
                    .map(|&a| BigRational::int_ratio(a as i64, d as i64))
                    .collect();
                out.push(Pmf::new(probs).expect("composition forms a pmf"));
            });
        }
    }
    out
}

fn compositions(rest: u64, idx: usize, parts: &mut Vec<u64>, emit: &mut dyn FnMut(&[u64])) {
    if idx == parts.len() - 1 {
        parts[idx] = rest;
        emit(parts);
        return;
    }
    for v in 0..=rest {
        parts[idx] = v;
        compositions(rest - v, idx + 1, parts, emit);
    }
}

/// A full-support random rational pmf: integer weights in `1..=max_weight`
/// normalized by their total.
pub fn random_rational_pmf<R: Rng>(k: usize, max_weight: u64, rng: &mut R) -> Pmf<BigRational> {
    let weights: Vec<u64> = (0..k).map(|_| rng.gen_range(1..=max_weight)).collect();
    let total: u64 = weights.iter().sum();
    let probs = weights
        .into_iter()
        .map(|w| BigRational::int_ratio(w as i64, total as i64))
        .collect();
    Pmf::new(probs).expect("normalized weights form a pmf")
}

/// Exhaustive Phase-1 statistics: enumerate all `k^n` draw sequences, weight
/// each by its probability, and aggregate the moments of the per-outcome
/// mean `mu` of the centered frequency statistic.
pub struct Phase1Exhaustive {
    pub chi_sq: BigRational,
    pub mean_of_mu: BigRational,
    pub var_of_mu: BigRational,
    /// `Var_{j ~ p}[eps_j] / n`, the predicted variance of `mu`.
    pub predicted_var_of_mu: BigRational,
    /// Per outcome, `mu` computed from the table equals the average
    /// deviation coordinate over the draw log.
    pub mu_identity_ok: bool,
    /// Per outcome, the table variance equals
    /// `(k/n)^2 sum_j p_j X_j^2 - (mu + 1)^2`.
    pub sigma_sq_identity_ok: bool,
}

pub fn enumerate_phase1(p: &Pmf<BigRational>, n: usize) -> Phase1Exhaustive {
    assert!(n >= 1);
    let k = p.k();
    let eps = p.deviation_coordinates();
    let support: Vec<usize> = (0..k).filter(|&j| !p.prob(j).is_zero()).collect();
    let k_over_n = BigRational::int_ratio(k as i64, n as i64);
    let inv_n = BigRational::int_ratio(1, n as i64);
    let one = BigRational::int_ratio(1, 1);

    let mut mean_of_mu = BigRational::zero();
    let mut mean_of_mu_sq = BigRational::zero();
    let mut mu_identity_ok = true;
    let mut sigma_sq_identity_ok = true;

    let mut outcome = vec![0usize; n];
    loop {
        // Probability and counts of this draw sequence.
        let mut prob = one.clone();
        let mut counts = vec![0u64; k];
        for &slot in &outcome {
            let j = support[slot];
            prob *= p.prob(j).clone();
            counts[j] += 1;
        }
        // The statistic as a table, and its moments under p.
        let entries: Vec<(u32, BigRational)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(j, &c)| {
                (
                    j as u32,
                    k_over_n.clone() * BigRational::int_ratio(c as i64, 1) - one.clone(),
                )
            })
            .collect();
        let y: Rv<BigRational> =
            Rv::sparse(k, -one.clone(), entries).expect("counts stay in the domain");
        let (mu, var) = exact_mean_var(p, &y).expect("matching dimensions");

        // mu = average deviation coordinate over the draw log.
        let mut mu_direct = BigRational::zero();
        for &slot in &outcome {
            mu_direct += eps[support[slot]].clone();
        }
        mu_direct *= inv_n.clone();
        if mu != mu_direct {
            mu_identity_ok = false;
        }

        // sigma^2 = (k/n)^2 sum_j p_j X_j^2 - (mu + 1)^2.
        let mut weighted_sq = BigRational::zero();
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                let c = BigRational::int_ratio(c as i64, 1);
                weighted_sq += p.prob(j).clone() * c.clone() * c;
            }
        }
        let direct_var = k_over_n.clone() * k_over_n.clone() * weighted_sq
            - (mu.clone() + one.clone()) * (mu.clone() + one.clone());
        if var != direct_var {
            sigma_sq_identity_ok = false;
        }

        mean_of_mu += prob.clone() * mu.clone();
        mean_of_mu_sq += prob * mu.clone() * mu;

        // Odometer over the support.
        let mut pos = 0;
        loop {
            if pos == n {
                break;
            }
            outcome[pos] += 1;
            if outcome[pos] < support.len() {
                break;
            }
            outcome[pos] = 0;
            pos += 1;
        }
        if pos == n {
            break;
        }
    }

    let var_of_mu = mean_of_mu_sq - mean_of_mu.clone() * mean_of_mu.clone();
    // Var_{j~p}[eps_j] = E_p[eps^2] - chi_sq^2 (the mean of eps under p is chi_sq).
    let chi_sq = p.chi_sq_uniform();
    let mut e_eps_sq = BigRational::zero();
    for (j, e) in eps.iter().enumerate() {
        e_eps_sq += p.prob(j).clone() * e.clone() * e.clone();
    }
    let predicted_var_of_mu = inv_n * (e_eps_sq - chi_sq.clone() * chi_sq.clone());

    Phase1Exhaustive {
        chi_sq,
        mean_of_mu,
        var_of_mu,
        predicted_var_of_mu,
        mu_identity_ok,
        sigma_sq_identity_ok,
    }
}

/// Exhaustive collision moments: enumerate all `k^n` draw sequences and
/// aggregate the exact mean and variance of the collision count, next to
/// the closed-form prediction and its variance upper bound.
pub struct CollisionExhaustive {
    pub mean: BigRational,
    pub variance: BigRational,
    pub predicted_mean: BigRational,
    pub variance_upper: BigRational,
}

pub fn enumerate_collisions(p: &Pmf<BigRational>, n: usize) -> CollisionExhaustive {
    assert!(n >= 2);
    let k = p.k();
    let support: Vec<usize> = (0..k).filter(|&j| !p.prob(j).is_zero()).collect();
    let one = BigRational::int_ratio(1, 1);
    let mut mean = BigRational::zero();
    let mut mean_sq = BigRational::zero();

    let mut outcome = vec![0usize; n];
    loop {
        let mut prob = one.clone();
        let mut counts = vec![0u64; k];
        for &slot in &outcome {
            let j = support[slot];
            prob *= p.prob(j).clone();
            counts[j] += 1;
        }
        let z: u64 = counts.iter().map(|&c| c * c.saturating_sub(1) / 2).sum();
        let z = BigRational::int_ratio(z as i64, 1);
        mean += prob.clone() * z.clone();
        mean_sq += prob * z.clone() * z;

        let mut pos = 0;
        loop {
            if pos == n {
                break;
            }
            outcome[pos] += 1;
            if outcome[pos] < support.len() {
                break;
            }
            outcome[pos] = 0;
            pos += 1;
        }
        if pos == n {
            break;
        }
    }

    let variance = mean_sq - mean.clone() * mean.clone();
    let (predicted_mean, variance_upper) =
        collision_stats(p, n as u64).expect("n >= 2 by assertion");
    CollisionExhaustive {
        mean,
        variance,
        predicted_mean,
        variance_upper,
    }
}

/// Exact probability, over all `2^k` subsets `S` of `[k]`, that
/// `(p(S) - q(S))^2 >= factor * ||p - q||_2^2`.
///
/// With `factor = alpha^2` this is the tail event of the binary hashing
/// lemma, compared without square roots so the arithmetic stays rational.
pub fn subset_tail_probability(
    p: &Pmf<BigRational>,
    q: &Pmf<BigRational>,
    factor: &BigRational,
) -> BigRational {
    let k = p.k();
    assert_eq!(k, q.k());
    assert!(k <= 20, "subset enumeration is 2^k");
    let delta: Vec<BigRational> = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| a.clone() - b.clone())
        .collect();
    let l2_sq = delta
        .iter()
        .fold(BigRational::zero(), |acc, d| acc + d.clone() * d.clone());
    let threshold = factor.clone() * l2_sq;
    let mut hits = 0u64;
    for mask in 0u64..(1 << k) {
        let mut d = BigRational::zero();
        for (i, di) in delta.iter().enumerate() {
            if mask >> i & 1 == 1 {
                d += di.clone();
            }
        }
        if d.clone() * d >= threshold {
            hits += 1;
        }
    }
    BigRational::int_ratio(hits as i64, 1 << k)
}

/// Average of `(sum_i delta_i xi_i)^2` over all `2^k` sign patterns `xi`;
/// equals `||delta||_2^2` exactly.
pub fn rademacher_second_moment(delta: &[BigRational]) -> BigRational {
    let k = delta.len();
    assert!(k <= 20);
    let mut total = BigRational::zero();
    for mask in 0u64..(1 << k) {
        let mut z = BigRational::zero();
        for (i, di) in delta.iter().enumerate() {
            if mask >> i & 1 == 1 {
                z += di.clone();
            } else {
                z -= di.clone();
            }
        }
        total += z.clone() * z;
    }
    total / BigRational::int_ratio(1 << k, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn family_members_are_valid_and_plentiful() {
        let family = rational_pmf_family(3, 4);
        assert!(family.len() > 30);
        for p in &family {
            assert!(p.k() <= 3);
        }
    }

    #[test]
    fn phase1_enumeration_on_a_hand_example() {
        // p = (1/2, 1/4, 1/4), n = 2: the mean of mu over all 9 weighted
        // outcomes must equal chi^2(p || U_3).
        let p = Pmf::new(vec![
            BigRational::int_ratio(1, 2),
            BigRational::int_ratio(1, 4),
            BigRational::int_ratio(1, 4),
        ])
        .unwrap();
        let r = enumerate_phase1(&p, 2);
        assert_eq!(r.mean_of_mu, r.chi_sq);
        assert_eq!(r.var_of_mu, r.predicted_var_of_mu);
        assert!(r.mu_identity_ok);
        assert!(r.sigma_sq_identity_ok);
        // chi^2 = 3 * ((1/6)^2 + (1/12)^2 + (1/12)^2) = 3/24 = 1/8.
        assert_eq!(r.chi_sq, BigRational::int_ratio(1, 8));
    }

    #[test]
    fn uniform_all_distinct_case_is_exact() {
        // Uniform p: mu = 0 with certainty, and on the all-distinct outcome
        // the table variance is exactly k/n - 1.
        for (k, n) in [(10usize, 2usize), (10, 5), (100, 2), (100, 5)] {
            let p: Pmf<BigRational> = Pmf::uniform(k);
            let one = BigRational::int_ratio(1, 1);
            let k_over_n = BigRational::int_ratio(k as i64, n as i64);
            let entries: Vec<(u32, BigRational)> = (0..n as u32)
                .map(|j| (j, k_over_n.clone() - one.clone()))
                .collect();
            let y = Rv::sparse(k, -one.clone(), entries).unwrap();
            let (mu, var) = exact_mean_var(&p, &y).unwrap();
            assert!(mu.is_zero());
            assert_eq!(var, k_over_n - one);
        }
    }

    #[test]
    fn collision_enumeration_matches_the_closed_form() {
        let p = Pmf::new(vec![
            BigRational::int_ratio(1, 2),
            BigRational::int_ratio(1, 4),
            BigRational::int_ratio(1, 4),
        ])
        .unwrap();
        let r = enumerate_collisions(&p, 3);
        assert_eq!(r.mean, r.predicted_mean);
        assert!(r.variance <= r.variance_upper);
        // E[Z] = C(3,2) ||p||^2 = 3 * 3/8.
        assert_eq!(r.mean, BigRational::int_ratio(9, 8));
    }

    #[test]
    fn rademacher_average_is_the_squared_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let p = random_rational_pmf(8, 20, &mut rng);
        let q = random_rational_pmf(8, 20, &mut rng);
        let delta: Vec<BigRational> = p
            .probs()
            .iter()
            .zip(q.probs())
            .map(|(a, b)| a.clone() - b.clone())
            .collect();
        let l2_sq = delta
            .iter()
            .fold(BigRational::zero(), |acc, d| acc + d.clone() * d.clone());
        assert_eq!(rademacher_second_moment(&delta), l2_sq);
    }

    #[test]
    fn subset_tail_respects_both_hashing_bounds_on_one_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let p = random_rational_pmf(10, 30, &mut rng);
        let q = random_rational_pmf(10, 30, &mut rng);
        // Forward at alpha = 1/4: tail >= (1 - 4 alpha^2)^2 / 12.
        let alpha_sq = BigRational::int_ratio(1, 16);
        let tail = subset_tail_probability(&p, &q, &alpha_sq);
        let four = BigRational::int_ratio(4, 1);
        let one = BigRational::int_ratio(1, 1);
        let slack = one.clone() - four * alpha_sq;
        let lower = slack.clone() * slack / BigRational::int_ratio(12, 1);
        assert!(tail >= lower);
        // Converse at beta = 2: tail <= 1 / (4 beta^2).
        let beta_sq = BigRational::int_ratio(4, 1);
        let tail = subset_tail_probability(&p, &q, &beta_sq);
        assert!(tail <= BigRational::int_ratio(1, 16));
    }
}
