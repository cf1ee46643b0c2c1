//! Identity-to-uniformity reduction: given a known reference `q` over `[k]`
//! and code for an unknown `p`, build code for a distribution over `[4k]`
//! that equals the uniform distribution exactly when `p = q`, and stays at
//! total variation at least `eps/4` from it when `TV(p, q) >= eps`.
//!
//! The reduction composes three maps, applied in this order:
//!
//! 1. mix the input with the uniform distribution (full support),
//! 2. round each reference probability down to a multiple of `1/(4k)`,
//!    diverting the excess to a fresh `(k+1)`-th symbol,
//! 3. spread each symbol uniformly over its cell of a partition of `[4k]`
//!    whose cell sizes are the grained reference probabilities.
//!
//! The partition and the keep-probabilities are determined by `q` alone.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::access::{code_from_pmf, PostMap, SourceCode, StreamKey};
use crate::dist::Pmf;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::testers::{run_large, run_small, LargeConfig, SmallConfig, Verdict};

/// The sets `S_1 .. S_{k+1}` partitioning `[4k]`, laid out as contiguous
/// index ranges. `|S_i| = 4k * g_i` where `g` is the grained reference over
/// `[k+1]`; the first `k` cells are never empty, the remainder cell may be.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrainedPartition {
    k: usize,
    starts: Vec<u64>,
}

impl GrainedPartition {
    fn from_sizes(k: usize, sizes: &[u64]) -> Self {
        debug_assert_eq!(sizes.len(), k + 1);
        let mut starts = Vec::with_capacity(k + 2);
        let mut acc = 0u64;
        starts.push(0);
        for &s in sizes {
            acc += s;
            starts.push(acc);
        }
        debug_assert_eq!(acc, 4 * k as u64);
        Self { k, starts }
    }

    /// Number of cells, `k + 1`.
    pub fn cells(&self) -> usize {
        self.k + 1
    }

    /// Total number of output symbols, `4k`.
    pub fn total(&self) -> u64 {
        *self.starts.last().unwrap()
    }

    /// The index range of cell `i`.
    pub fn cell(&self, i: usize) -> std::ops::Range<u64> {
        self.starts[i]..self.starts[i + 1]
    }

    pub fn cell_size(&self, i: usize) -> u64 {
        self.starts[i + 1] - self.starts[i]
    }
}

/// Snap a float to the simplest rational within `tol`, by continued-fraction
/// convergents. Values that originated from small rationals are recovered
/// exactly; grainedness is an integer property, so the partition arithmetic
/// never floors a float directly.
pub fn snap_to_rational(x: f64, tol: f64) -> BigRational {
    assert!(x.is_finite(), "cannot snap {x}");
    if x == 0.0 {
        return BigRational::zero();
    }
    let neg = x < 0.0;
    let ax = x.abs();
    let (mut h0, mut k0): (i128, i128) = (1, 0);
    let (mut h1, mut k1): (i128, i128) = (ax.floor() as i128, 1);
    let mut frac = ax - ax.floor();
    for _ in 0..64 {
        if (h1 as f64 / k1 as f64 - ax).abs() <= tol || frac <= 0.0 {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        frac = inv - a;
        let a = a as i128; // saturating; overflow ends the expansion below
        let next = |hi: i128, lo: i128| a.checked_mul(hi).and_then(|v| v.checked_add(lo));
        match (next(h1, h0), next(k1, k0)) {
            (Some(h2), Some(k2)) => {
                h0 = h1;
                k0 = k1;
                h1 = h2;
                k1 = k2;
            }
            _ => break,
        }
    }
    let r = BigRational::new(BigInt::from(h1), BigInt::from(k1));
    if neg {
        -r
    } else {
        r
    }
}

/// Keep-probabilities and floor sizes of the rounding map, for a
/// full-support reference `q'` (exact, summing to one).
///
/// `keep_i = floor(4k q'_i) / (4k q'_i)`; applying the map to `q'` itself
/// yields a `(1/4k)`-grained pmf over `[k+1]`.
pub fn round_down_keep(q_prime: &[BigRational]) -> Result<(Vec<BigRational>, Vec<u64>)> {
    let k = q_prime.len();
    let four_k = BigRational::int_ratio(4 * k as i64, 1);
    let mut keep = Vec::with_capacity(k);
    let mut sizes = Vec::with_capacity(k + 1);
    let mut used = 0u64;
    for (i, q) in q_prime.iter().enumerate() {
        if !q.is_positive() {
            return Err(Error::InvalidParameter(format!(
                "rounding map needs a full-support reference; entry {i} is zero"
            )));
        }
        let scaled = four_k.clone() * q.clone();
        let floor = scaled.floor().to_integer();
        let size = floor.to_u64().ok_or_else(|| {
            Error::InvalidParameter("reference cell size exceeds u64".into())
        })?;
        keep.push(BigRational::from(floor) / scaled);
        sizes.push(size);
        used += size;
    }
    let total = 4 * k as u64;
    if used > total {
        return Err(Error::InvalidPmf(
            "reference probabilities sum above one; cannot grain".into(),
        ));
    }
    sizes.push(total - used);
    Ok((keep, sizes))
}

/// Everything the reduction derives from the reference `q` (and nothing
/// from `p`): the keep-probabilities, the grained reference, the partition.
#[derive(Clone, Debug)]
pub struct ReductionMaps {
    k: usize,
    keep: Vec<BigRational>,
    grained: Vec<BigRational>,
    partition: GrainedPartition,
}

impl ReductionMaps {
    /// Build from an exact rational reference.
    pub fn from_exact(q: &Pmf<BigRational>) -> Result<Self> {
        Self::build(q.probs().to_vec())
    }

    /// Build from a float reference: entries are snapped to rationals at
    /// 1e-12 before flooring. Per-entry snapping keeps every denominator
    /// small; any floor-sum excess from snapping drift (possible only at
    /// very large k) is shaved off the largest cell.
    pub fn from_pmf(q: &Pmf<f64>) -> Result<Self> {
        let snapped: Vec<BigRational> =
            q.probs().iter().map(|&x| snap_to_rational(x, 1e-12)).collect();
        Self::build(snapped)
    }

    fn build(q: Vec<BigRational>) -> Result<Self> {
        let k = q.len();
        let half = BigRational::int_ratio(1, 2);
        let mix = BigRational::int_ratio(1, 2 * k as i64);
        let q_prime: Vec<BigRational> =
            q.into_iter().map(|x| x * half.clone() + mix.clone()).collect();

        let four_k = BigRational::int_ratio(4 * k as i64, 1);
        let mut sizes = Vec::with_capacity(k + 1);
        let mut used: u64 = 0;
        for (i, qp) in q_prime.iter().enumerate() {
            if !qp.is_positive() {
                return Err(Error::InvalidPmf(format!(
                    "mixed reference entry {i} is not positive"
                )));
            }
            let floor = (four_k.clone() * qp.clone()).floor().to_integer();
            let size = floor
                .to_u64()
                .ok_or_else(|| Error::InvalidParameter("cell size exceeds u64".into()))?;
            sizes.push(size);
            used += size;
        }
        let total = 4 * k as u64;
        let mut excess = used.saturating_sub(total);
        while excess > 0 {
            let argmax = (0..k).max_by_key(|&i| sizes[i]).unwrap();
            let shave = excess.min(sizes[argmax].saturating_sub(2));
            if shave == 0 {
                return Err(Error::InvalidPmf(
                    "reference probabilities sum too far above one; cannot grain".into(),
                ));
            }
            sizes[argmax] -= shave;
            excess -= shave;
            used -= shave;
        }
        sizes.push(total - used);

        let keep = q_prime
            .iter()
            .zip(&sizes)
            .map(|(qp, &s)| BigRational::int_ratio(s as i64, 1) / (four_k.clone() * qp.clone()))
            .collect();
        let grained = sizes
            .iter()
            .map(|&s| BigRational::int_ratio(s as i64, 1) / four_k.clone())
            .collect();
        let partition = GrainedPartition::from_sizes(k, &sizes);
        Ok(Self {
            k,
            keep,
            grained,
            partition,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn partition(&self) -> &GrainedPartition {
        &self.partition
    }

    pub fn keep(&self) -> &[BigRational] {
        &self.keep
    }

    pub fn keep_f64(&self) -> Vec<f64> {
        // Big numerators/denominators round independently; clamp the
        // quotient back into [0, 1].
        self.keep
            .iter()
            .map(|r| f64::from_ratio(r).clamp(0.0, 1.0))
            .collect()
    }

    /// The grained reference over `[k+1]`; every entry is an integer
    /// multiple of `1/(4k)`.
    pub fn grained(&self) -> &[BigRational] {
        &self.grained
    }

    /// Exact pushforward of `p` through the full composed reduction.
    pub fn apply<S: Scalar>(&self, p: &Pmf<S>) -> Result<Pmf<S>> {
        let keep: Vec<S> = self.keep.iter().map(|r| S::from_ratio(r)).collect();
        let mixed = phi3_pmf(p);
        let rounded = phi2_pmf(&keep, &mixed)?;
        phi1_pmf(&self.partition, &rounded)
    }
}

/// Mix with the uniform distribution: `(p + U_k) / 2`. Fixed point at `U_k`;
/// every output probability is at least `1/(2k)`.
pub fn phi3_pmf<S: Scalar>(p: &Pmf<S>) -> Pmf<S> {
    let k = p.k();
    let half = S::int_ratio(1, 2);
    let mix = S::int_ratio(1, 2 * k as i64);
    let probs = p
        .probs()
        .iter()
        .map(|x| x.clone() * half.clone() + mix.clone())
        .collect();
    Pmf::new(probs).expect("mixture of pmfs is a pmf")
}

/// Round down: keep symbol `i` with probability `keep_i`, divert the rest
/// to a fresh symbol `k`. Output lives on `[k+1]`.
pub fn phi2_pmf<S: Scalar>(keep: &[S], p: &Pmf<S>) -> Result<Pmf<S>> {
    if keep.len() != p.k() {
        return Err(Error::DimensionMismatch(keep.len(), p.k()));
    }
    let mut probs: Vec<S> = Vec::with_capacity(p.k() + 1);
    let mut kept = S::zero();
    for (c, x) in keep.iter().zip(p.probs()) {
        let v = c.clone() * x.clone();
        kept = kept + v.clone();
        probs.push(v);
    }
    let mut rest = S::one() - kept;
    if rest < S::zero() {
        // keep <= 1 entrywise, so any negativity here is float rounding.
        rest = S::zero();
    }
    probs.push(rest);
    Pmf::new(probs)
}

/// Spread each input symbol uniformly over its partition cell.
pub fn phi1_pmf<S: Scalar>(partition: &GrainedPartition, p: &Pmf<S>) -> Result<Pmf<S>> {
    if p.k() != partition.cells() {
        return Err(Error::DimensionMismatch(p.k(), partition.cells()));
    }
    let mut out = vec![S::zero(); partition.total() as usize];
    // Float summation can leave ~1e-16 of phantom mass on the remainder
    // cell even when every keep-probability is one; genuinely positive
    // mass on an empty cell is still an error.
    let drift_tolerance = S::int_ratio(1, 1_000_000_000);
    for i in 0..partition.cells() {
        let mass = p.prob(i);
        if *mass == S::zero() {
            continue;
        }
        let size = partition.cell_size(i);
        if size == 0 {
            if *mass <= drift_tolerance {
                continue;
            }
            return Err(Error::InvalidParameter(format!(
                "positive mass on empty partition cell {i}"
            )));
        }
        let share = mass.clone() / S::from_u64(size).expect("cell size fits scalar");
        for j in partition.cell(i) {
            out[j as usize] = share.clone();
        }
    }
    Pmf::new(out)
}

/// Code form of the uniform mixing map.
pub fn phi3_code(code: SourceCode, key: StreamKey) -> Result<SourceCode> {
    code.wrap(PostMap::MixUniform, key)
}

/// Code form of the rounding map.
pub fn phi2_code(code: SourceCode, keep: Vec<f64>, key: StreamKey) -> Result<SourceCode> {
    if keep.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
        return Err(Error::InvalidParameter(
            "keep probabilities must lie in [0, 1]".into(),
        ));
    }
    code.wrap(PostMap::RoundDown { keep }, key)
}

/// Code form of the spreading map.
pub fn phi1_code(
    code: SourceCode,
    partition: GrainedPartition,
    key: StreamKey,
) -> Result<SourceCode> {
    code.wrap(PostMap::Spread(partition), key)
}

/// Build the reduced instance: code over `[4k]` together with the reduced
/// distance parameter `eps / 4`. One draw of the output uses the inner
/// `p`-code exactly once.
pub fn reduce_instance(
    q: &Pmf<f64>,
    code_p: SourceCode,
    epsilon: f64,
    key: StreamKey,
) -> Result<(SourceCode, f64)> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon {epsilon} outside (0, 1]"
        )));
    }
    if q.k() != code_p.domain_size() {
        return Err(Error::DimensionMismatch(q.k(), code_p.domain_size()));
    }
    let maps = ReductionMaps::from_pmf(q)?;
    let mixed = phi3_code(code_p, key.child(0))?;
    let rounded = phi2_code(mixed, maps.keep_f64(), key.child(1))?;
    let spread = phi1_code(rounded, maps.partition().clone(), key.child(2))?;
    Ok((spread, epsilon / 4.0))
}

/// Identity testing against a known reference, by reduction to uniformity.
///
/// Dispatch: with `eps' = eps/4` and `k' = 4k`, run the large-regime tester
/// at threshold `eps'^2` when `eps' >= 1/sqrt(k')` (tie goes to the large
/// regime), else the small-regime tester against a synthesized uniform code
/// at `tau = 2 eps' / sqrt(k')`.
pub fn identity_test(
    q: &Pmf<f64>,
    code_p: SourceCode,
    epsilon: f64,
    large_template: &LargeConfig,
    small_template: &SmallConfig,
    key: StreamKey,
) -> Result<Verdict> {
    let (mut reduced, eps_out) = reduce_instance(q, code_p, epsilon, key.child_label("reduce"))?;
    let k4 = reduced.domain_size();
    let boundary = 1.0 / (k4 as f64).sqrt();
    let mut rng = key.child_label("tester").rng();
    if eps_out >= boundary {
        let cfg = LargeConfig {
            gamma: eps_out * eps_out,
            ..large_template.clone()
        };
        let mut verdict = run_large(&mut reduced, &cfg, &mut rng)?;
        verdict.diagnostics.insert("dispatch_large".into(), 1.0);
        Ok(verdict)
    } else {
        let tau = 2.0 * eps_out / (k4 as f64).sqrt();
        let cfg = small_template.with_tau(tau)?;
        let mut reference = code_from_pmf(&Pmf::uniform(k4), key.child_label("reference"));
        let mut verdict = run_small(&mut reduced, &mut reference, &cfg, &mut rng)?;
        // The resource being metered is uses of the p-code; the synthesized
        // reference is free knowledge and reported separately.
        let aux = verdict.diagnostics.get("q_uses").copied().unwrap_or(0.0);
        verdict.code_uses = reduced.ledger().code_uses();
        verdict.diagnostics.insert("aux_reference_uses".into(), aux);
        verdict.diagnostics.insert("dispatch_large".into(), 0.0);
        Ok(verdict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{make_instance, random_pmf, InstanceSpec};
    use crate::testers::Decision;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mixing_map_fixed_point_and_point_mass() {
        let u: Pmf<f64> = Pmf::uniform(6);
        assert_eq!(phi3_pmf(&u), u);
        let point = Pmf::<f64>::point_mass(2, 0).unwrap();
        assert_eq!(phi3_pmf(&point).probs(), &[0.75, 0.25]);
    }

    #[test]
    fn mixing_map_halves_tv_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let k = 2 + rand::Rng::gen_range(&mut rng, 0..20);
            let p = random_pmf(k, &mut rng);
            let q = random_pmf(k, &mut rng);
            let tv = p.tv(&q).unwrap();
            let tv_mixed = phi3_pmf(&p).tv(&phi3_pmf(&q)).unwrap();
            assert!((tv_mixed - tv / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rounding_map_passes_through_already_grained_references() {
        // Uniform reference: 4k q'_i = 4, keep = 1, nothing diverted.
        let k = 5;
        let q_prime: Vec<BigRational> =
            (0..k).map(|_| BigRational::int_ratio(1, k as i64)).collect();
        let (keep, sizes) = round_down_keep(&q_prime).unwrap();
        assert!(keep.iter().all(|c| c == &BigRational::int_ratio(1, 1)));
        assert_eq!(sizes, vec![4, 4, 4, 4, 4, 0]);

        // (3/8, 5/8) over k = 2 is already 1/8-grained: passthrough.
        let q_prime = vec![BigRational::int_ratio(3, 8), BigRational::int_ratio(5, 8)];
        let (keep, sizes) = round_down_keep(&q_prime).unwrap();
        assert!(keep.iter().all(|c| c == &BigRational::int_ratio(1, 1)));
        assert_eq!(sizes, vec![3, 5, 0]);
    }

    #[test]
    fn rounding_map_floor_arithmetic() {
        // q' = (0.3, 0.7), k = 2: 8 * 0.3 = 2.4 -> keep 2/2.4 = 5/6;
        // 8 * 0.7 = 5.6 -> keep 5/5.6 = 25/28.
        let q_prime = vec![BigRational::int_ratio(3, 10), BigRational::int_ratio(7, 10)];
        let (keep, sizes) = round_down_keep(&q_prime).unwrap();
        assert_eq!(keep[0], BigRational::int_ratio(5, 6));
        assert_eq!(keep[1], BigRational::int_ratio(25, 28));
        assert_eq!(sizes, vec![2, 5, 1]);

        // Applying the map to q' itself gives (0.25, 0.625, 0.125): 1/8-grained.
        let q_pmf: Pmf<BigRational> = Pmf::new(q_prime).unwrap();
        let rounded = phi2_pmf(&keep, &q_pmf).unwrap();
        assert_eq!(
            rounded.probs(),
            &[
                BigRational::int_ratio(1, 4),
                BigRational::int_ratio(5, 8),
                BigRational::int_ratio(1, 8)
            ]
        );
    }

    #[test]
    fn spreading_the_grained_reference_gives_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..20 {
            let k = 2 + rand::Rng::gen_range(&mut rng, 0..12);
            let q = random_pmf(k, &mut rng);
            let maps = ReductionMaps::from_pmf(&q).unwrap();
            let grained: Pmf<BigRational> = Pmf::new(maps.grained().to_vec()).unwrap();
            let spread = phi1_pmf(maps.partition(), &grained).unwrap();
            let target = BigRational::int_ratio(1, 4 * k as i64);
            assert!(spread.probs().iter().all(|x| *x == target));
        }
    }

    #[test]
    fn uniform_reference_composition_formula() {
        // With q = U_k every cell has 4 elements and the composed output
        // puts (p_i/2 + 1/(2k))/4 on each element of cell i.
        let k = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let p = random_pmf(k, &mut rng);
        let maps = ReductionMaps::from_pmf(&Pmf::uniform(k)).unwrap();
        let out = maps.apply(&p).unwrap();
        for i in 0..k {
            let want = (p.prob(i) / 2.0 + 1.0 / (2.0 * k as f64)) / 4.0;
            for j in maps.partition().cell(i) {
                assert!((out.prob(j as usize) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spreading_rejects_mass_on_empty_cells() {
        // Uniform reference leaves the remainder cell empty.
        let maps = ReductionMaps::from_pmf(&Pmf::uniform(4)).unwrap();
        assert_eq!(maps.partition().cell_size(4), 0);
        let bad = Pmf::<f64>::point_mass(5, 4).unwrap();
        assert!(phi1_pmf(maps.partition(), &bad).is_err());
    }

    #[test]
    fn point_mass_spreads_uniformly_over_its_cell() {
        let maps = ReductionMaps::from_pmf(&Pmf::uniform(4)).unwrap();
        let input = Pmf::<f64>::point_mass(5, 2).unwrap();
        let out = phi1_pmf(maps.partition(), &input).unwrap();
        for (j, &x) in out.probs().iter().enumerate() {
            let expected = if (8..12).contains(&j) { 0.25 } else { 0.0 };
            assert_eq!(x, expected, "position {j}");
        }
    }

    #[test]
    fn grainedness_is_exact_in_rationals() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..25 {
            let k = 2 + rand::Rng::gen_range(&mut rng, 0..49);
            let q = random_pmf(k, &mut rng);
            let maps = ReductionMaps::from_pmf(&q).unwrap();
            let four_k = BigInt::from(4 * k as u64);
            for g in maps.grained() {
                // Denominator divides 4k exactly.
                assert!((four_k.clone() % g.denom().clone()).is_zero());
            }
            let total: BigRational = maps.grained().iter().fold(BigRational::zero(), |a, b| a + b);
            assert!(num_traits::One::is_one(&total));
        }
    }

    #[test]
    fn reducing_the_reference_itself_yields_exact_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..25 {
            let k = 2 + rand::Rng::gen_range(&mut rng, 0..49);
            let q = random_pmf(k, &mut rng);
            let maps = ReductionMaps::from_pmf(&q).unwrap();
            let out = maps.apply(&q).unwrap();
            let target = 1.0 / (4 * k) as f64;
            for &x in out.probs() {
                assert!((x - target).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tv_distortion_stays_inside_the_proven_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..60 {
            let k = 2 + rand::Rng::gen_range(&mut rng, 0..30);
            let p = random_pmf(k, &mut rng);
            let q = random_pmf(k, &mut rng);
            let maps = ReductionMaps::from_pmf(&q).unwrap();
            let out = maps.apply(&p).unwrap();
            let uniform = Pmf::uniform(4 * k);
            let tv_out = out.tv(&uniform).unwrap();
            let tv_in = p.tv(&q).unwrap();
            assert!(
                tv_out >= tv_in / 4.0 - 1e-12 && tv_out <= tv_in + 1e-12,
                "tv_in = {tv_in}, tv_out = {tv_out}"
            );
        }
    }

    #[test]
    fn partition_is_deterministic_and_never_reads_p() {
        let q = Pmf::new(vec![0.15, 0.35, 0.5]).unwrap();
        let a = ReductionMaps::from_pmf(&q).unwrap();
        let b = ReductionMaps::from_pmf(&q).unwrap();
        assert_eq!(a.partition(), b.partition());
        assert_eq!(a.keep(), b.keep());
    }

    #[test]
    fn one_output_draw_charges_exactly_one_p_use() {
        let q = Pmf::new(vec![0.15, 0.35, 0.5]).unwrap();
        let p = Pmf::new(vec![0.6, 0.2, 0.2]).unwrap();
        let code = code_from_pmf(&p, StreamKey::new(50));
        let (mut reduced, eps_out) = reduce_instance(&q, code, 0.4, StreamKey::new(51)).unwrap();
        assert_eq!(eps_out, 0.1);
        assert_eq!(reduced.domain_size(), 12);
        for n in 1..=30u64 {
            reduced.draw_one("draw");
            assert_eq!(reduced.ledger().code_uses(), n);
        }
    }

    #[test]
    fn reduced_code_truth_matches_exact_pushforward() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let q = random_pmf(7, &mut rng);
        let p = random_pmf(7, &mut rng);
        let maps = ReductionMaps::from_pmf(&q).unwrap();
        let direct = maps.apply(&p).unwrap();
        let code = code_from_pmf(&p, StreamKey::new(60));
        let (reduced, _) = reduce_instance(&q, code, 0.5, StreamKey::new(61)).unwrap();
        for (a, b) in reduced.truth().unwrap().probs().iter().zip(direct.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_accepts_the_reference_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let q = random_pmf(1000, &mut rng);
        let large = LargeConfig::new(0.5);
        let small = SmallConfig::new(0.1).unwrap();
        let mut accepts = 0;
        for t in 0..15 {
            let code = code_from_pmf(&q, StreamKey::new(70).child(t));
            let v = identity_test(&q, code, 0.3, &large, &small, StreamKey::new(71).child(t))
                .unwrap();
            assert_eq!(v.diagnostics["dispatch_large"], 1.0);
            if v.decision == Decision::Accept {
                accepts += 1;
            }
        }
        assert!(accepts >= 14, "accepts = {accepts}");
    }

    #[test]
    fn identity_rejects_a_far_instance() {
        let k = 1000;
        let q = Pmf::uniform(k);
        let p = make_instance(k, &InstanceSpec::UniformSubset { size: k / 2 }).unwrap();
        let large = LargeConfig::new(0.5);
        let small = SmallConfig::new(0.1).unwrap();
        let mut rejects = 0;
        for t in 0..15 {
            let code = code_from_pmf(&p, StreamKey::new(80).child(t));
            let v = identity_test(&q, code, 0.4, &large, &small, StreamKey::new(81).child(t))
                .unwrap();
            if v.decision == Decision::Reject {
                rejects += 1;
            }
        }
        assert!(rejects >= 14, "rejects = {rejects}");
    }

    #[test]
    fn dispatch_boundary_goes_to_the_large_regime() {
        // eps/4 exactly 1/sqrt(4k): inclusive tie.
        let k = 16;
        let eps = 4.0 / (4.0 * k as f64).sqrt();
        let q = Pmf::uniform(k);
        let code = code_from_pmf(&q, StreamKey::new(90));
        let large = LargeConfig::new(0.5);
        let small = SmallConfig::new(0.1).unwrap();
        let v = identity_test(&q, code, eps, &large, &small, StreamKey::new(91)).unwrap();
        assert_eq!(v.diagnostics["dispatch_large"], 1.0);
    }

    #[test]
    fn small_branch_dispatch_and_verdict() {
        let k = 25; // eps' = 0.075 < 1/sqrt(100) = 0.1
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let q = random_pmf(k, &mut rng);
        let large = LargeConfig::new(0.5);
        let mut small = SmallConfig::new(0.1).unwrap();
        small.rounds = 200;
        let code = code_from_pmf(&q, StreamKey::new(92));
        let v = identity_test(&q, code, 0.3, &large, &small, StreamKey::new(93)).unwrap();
        assert_eq!(v.diagnostics["dispatch_large"], 0.0);
        assert_eq!(v.decision, Decision::Accept);
    }

    #[test]
    fn small_branch_rejects_a_far_instance() {
        let k = 25;
        let q = Pmf::uniform(k);
        // TV(subset(12), U_25) = 0.52 > eps = 0.3.
        let p = make_instance(k, &InstanceSpec::UniformSubset { size: 12 }).unwrap();
        let large = LargeConfig::new(0.5);
        let small = SmallConfig::new(0.1).unwrap();
        let mut rejects = 0;
        for t in 0..10 {
            let code = code_from_pmf(&p, StreamKey::new(94).child(t));
            let v = identity_test(&q, code, 0.3, &large, &small, StreamKey::new(95).child(t))
                .unwrap();
            assert_eq!(v.diagnostics["dispatch_large"], 0.0);
            if v.decision == Decision::Reject {
                rejects += 1;
            }
        }
        assert!(rejects >= 7, "rejects = {rejects}");
    }

    #[test]
    fn snapping_recovers_simple_rationals() {
        assert_eq!(snap_to_rational(0.25, 1e-12), BigRational::int_ratio(1, 4));
        assert_eq!(snap_to_rational(1.0 / 3.0, 1e-12), BigRational::int_ratio(1, 3));
        assert_eq!(snap_to_rational(0.0, 1e-12), BigRational::zero());
        let x = 0.12345678901;
        let r = snap_to_rational(x, 1e-12);
        assert!((f64::from_ratio(&r) - x).abs() <= 1e-12);
    }
}
