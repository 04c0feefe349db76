//! How soon a union of `κ_n` rank-`n` cylinders can be hit: the `ε_n`
//! bound on `μ(τ ≤ n)`, Hamming-ball counting, and entropy thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::DEFAULT_ENUMERATION_CAP;
use crate::process::{ModelKind, ProcessModel};
use crate::targets::{hamming_ball_size, hamming_radius};

pub const D0_SCAN_POINTS: usize = 10_000;
pub const D0_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RarityBound {
    pub n: usize,
    /// `(1/n) ln κ_n`.
    pub rate: f64,
    pub entropy: f64,
    pub h: f64,
    pub k: usize,
    pub m: usize,
    pub kappa: f64,
    /// `1 − μ(Γ(n − m))`, or its single-level surrogate.
    pub aep_deficiency: f64,
    pub epsilon: f64,
    pub surrogate: bool,
}

impl RarityBound {
    /// Covering term `m κ_n e^{−(n−m)h}`.
    pub fn covering_term(&self) -> f64 {
        self.m as f64 * self.kappa * (-((self.n - self.m) as f64) * self.h).exp()
    }
}

/// Smallest `k ≥ 1` with `rate < (1 − 1/k) h`.
fn minimal_k(rate: f64, h: f64) -> usize {
    let mut k = ((h / (h - rate)).floor() as usize).max(1);
    while rate >= (1.0 - 1.0 / k as f64) * h {
        k += 1;
    }
    while k > 1 && rate < (1.0 - 1.0 / (k - 1) as f64) * h {
        k -= 1;
    }
    k
}

pub fn epsilon_bound(model: &ProcessModel, kappa: f64, n: usize) -> Result<RarityBound> {
    if n == 0 {
        return Err(Error::EmptyWord);
    }
    if !(kappa >= 1.0) {
        return Err(Error::EmptyTarget);
    }
    let entropy = model.entropy();
    if !(entropy > 0.0) {
        return Err(Error::NonPositiveEntropy);
    }
    let rate = kappa.ln() / n as f64;
    if rate >= entropy {
        return Err(Error::RateExceedsEntropy { rate, entropy });
    }
    let h = 0.5 * (rate + entropy);
    let k = minimal_k(rate, h);
    let m = n.div_ceil(k);
    let level = n - m;
    let (aep_deficiency, surrogate) = if model.is_uniform_iid() {
        // Every cylinder of rank N has measure q^{-N} ≤ e^{-Nh} since h < ln q.
        (0.0, false)
    } else {
        (heavy_word_mass(model, level, h)?, true)
    };
    let covering = m as f64 * kappa * (-(level as f64) * h).exp();
    Ok(RarityBound {
        n,
        rate,
        entropy,
        h,
        k,
        m,
        kappa,
        aep_deficiency,
        epsilon: k as f64 * (covering + aep_deficiency),
        surrogate,
    })
}

/// `Σ μ([w])` over words of length `len` with `μ([w]) > e^{−len·h}`.
pub fn heavy_word_mass(model: &ProcessModel, len: usize, h: f64) -> Result<f64> {
    if len == 0 {
        return Ok(0.0);
    }
    let log_threshold = -(len as f64) * h;
    match model.kind() {
        ModelKind::Iid => Ok(iid_heavy_mass(model.stationary(), len, log_threshold)),
        ModelKind::Markov => markov_heavy_mass(model, len, log_threshold.exp()),
    }
}

fn iid_heavy_mass(probs: &[f64], len: usize, log_threshold: f64) -> f64 {
    let log_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=len).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    let mut counts = vec![0usize; probs.len()];
    let mut total = 0.0;
    compositions(&mut counts, 0, len, &mut |c| {
        let mut log_p = 0.0;
        for (&ci, &p) in c.iter().zip(probs) {
            if ci > 0 {
                if p == 0.0 {
                    return;
                }
                log_p += ci as f64 * p.ln();
            }
        }
        if log_p > log_threshold {
            let log_mult = log_fact[len] - c.iter().map(|&ci| log_fact[ci]).sum::<f64>();
            total += (log_mult + log_p).exp();
        }
    });
    total.min(1.0)
}

fn compositions(counts: &mut [usize], at: usize, left: usize, visit: &mut impl FnMut(&[usize])) {
    if at + 1 == counts.len() {
        counts[at] = left;
        visit(counts);
        return;
    }
    for c in 0..=left {
        counts[at] = c;
        compositions(counts, at + 1, left - c, visit);
    }
}

fn markov_heavy_mass(model: &ProcessModel, len: usize, threshold: f64) -> Result<f64> {
    // Prefix measures only shrink, so a light prefix has no heavy extension.
    let mut visited: u128 = 0;
    let mut total = 0.0;
    let mut stack: Vec<(usize, usize, f64)> = model
        .stationary()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(s, &p)| (s, 1, p))
        .collect();
    while let Some((last, depth, p)) = stack.pop() {
        visited += 1;
        if visited > DEFAULT_ENUMERATION_CAP {
            return Err(Error::EnumerationTooLarge { size: visited, cap: DEFAULT_ENUMERATION_CAP });
        }
        if depth == len {
            total += p;
            continue;
        }
        for (next, &t) in model.row(last).iter().enumerate() {
            let pn = p * t;
            if pn > threshold {
                stack.push((next, depth + 1, pn));
            }
        }
    }
    Ok(total.min(1.0))
}

/// `k(1 − H(m)) ≥ 1 − H(n)` from the hitting tail; returns both sides.
pub fn subadditivity(hitting: &[f64], n: usize, k: usize, m: usize) -> Result<(f64, f64)> {
    let at = |j: usize| {
        hitting
            .get(j)
            .copied()
            .ok_or(Error::HorizonTooShort { needed: j, available: hitting.len().saturating_sub(1) })
    };
    Ok((k as f64 * (1.0 - at(m)?), 1.0 - at(n)?))
}

/// Base of the closed-form count bound, `(1 + D(q−1)) / D^D`.
pub fn hamming_base(fraction: f64, q: usize) -> f64 {
    (1.0 + fraction * (q as f64 - 1.0)) / fraction.powf(fraction)
}

/// `((1 + D(q−1)) / D^D)^n`, an upper bound on the ball cardinality.
pub fn hamming_kappa_bound(n: usize, fraction: f64, q: usize) -> f64 {
    hamming_base(fraction, q).powi(n as i32)
}

/// Exact ball cardinality, for comparison with the bound.
pub fn hamming_kappa(n: usize, fraction: f64, q: usize) -> u128 {
    hamming_ball_size(n, hamming_radius(n, fraction), q)
}

/// Smallest root of `(1 + D(q−1)) D^{−D} = e^h` in `(0, 1)`.
pub fn solve_d0(q: usize, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::NonPositiveEntropy);
    }
    let g = |d: f64| hamming_base(d, q).ln() - h;
    let step = 1.0 / D0_SCAN_POINTS as f64;
    let mut lo = 0.0;
    for i in 1..D0_SCAN_POINTS {
        let d = i as f64 * step;
        if g(d) >= 0.0 {
            let mut hi = d;
            while hi - lo > D0_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if g(mid) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        lo = d;
    }
    Err(Error::NoCrossing)
}

/// An `ε_n` bound next to the exact `μ(τ ≤ n)` it controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RarityRow {
    pub bound: RarityBound,
    pub short_hits: f64,
    /// `k(1 − H(m))`, the left side of the subadditivity step.
    pub subadditive: f64,
}

impl RarityRow {
    pub fn holds(&self) -> bool {
        self.short_hits <= self.bound.epsilon && self.short_hits <= self.subadditive + 1e-12
    }
}

pub fn rarity_row(model: &ProcessModel, set: &crate::targets::TargetSet) -> Result<RarityRow> {
    let n = set.rank();
    let bound = epsilon_bound(model, set.cardinality() as f64, n)?;
    let tail = crate::exact::hitting_tail(model, set, n)?;
    let (subadditive, short_hits) = subadditivity(tail.values(), n, bound.k, bound.m)?;
    Ok(RarityRow { bound, short_hits, subadditive })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityRate {
    pub rate: f64,
    /// Set when an entropy was supplied: `rate < h_μ`.
    pub below_entropy: Option<bool>,
}

/// `max (1/n) ln κ_n` over the upper half of the table by `n`.
pub fn cardinality_rate(table: &[(usize, f64)], entropy: Option<f64>) -> Result<CardinalityRate> {
    if table.is_empty() {
        return Err(Error::GridEmpty);
    }
    if let Some(&(n, k)) = table.iter().find(|(n, k)| *n == 0 || !(*k >= 1.0)) {
        return Err(Error::InvalidGrid(format!("need n ≥ 1 and κ_n ≥ 1, got n={n}, κ={k}")));
    }
    let mut sorted = table.to_vec();
    sorted.sort_by_key(|&(n, _)| n);
    let tail = &sorted[sorted.len() / 2..];
    let rate = tail.iter().map(|&(n, k)| k.ln() / n as f64).fold(f64::NEG_INFINITY, f64::max);
    Ok(CardinalityRate { rate, below_entropy: entropy.map(|h| rate < h) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedUnionRow {
    pub n: usize,
    /// `n μ(A⁰_n)`.
    pub small_term: f64,
    /// `μ(τ_{A¹_n} ≤ n)`.
    pub entropy_term: f64,
    pub sum: f64,
    /// `μ(τ_{A_n} ≤ n)` for the union.
    pub actual: f64,
    pub holds: bool,
}

/// Splits `μ(τ ≤ n)` for `A⁰ ∪ A¹` into a union bound on the small part and
/// the exact short-hit probability of the other.
pub fn mixed_union_row(
    model: &ProcessModel,
    small: Option<&crate::targets::TargetSet>,
    rest: Option<&crate::targets::TargetSet>,
) -> Result<MixedUnionRow> {
    use crate::exact::hitting_tail;
    use crate::targets::TargetSet;
    let n = small.or(rest).ok_or(Error::EmptyTarget)?.rank();
    let short = |set: &TargetSet| hitting_tail(model, set, n).and_then(|t| t.prob_le(n));
    let small_term = small.map(|a| a.measure(model)).transpose()?.unwrap_or(0.0) * n as f64;
    let entropy_term = rest.map(short).transpose()?.unwrap_or(0.0);
    let union = match (small, rest) {
        (Some(a), Some(b)) => TargetSet::union(&[a.clone(), b.clone()])?,
        (Some(a), None) | (None, Some(a)) => a.clone(),
        (None, None) => unreachable!(),
    };
    let actual = short(&union)?;
    let sum = small_term + entropy_term;
    Ok(MixedUnionRow { n, small_term, entropy_term, sum, actual, holds: actual <= sum + 1e-10 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::hitting_tail;
    use crate::targets::TargetSet;
    use proptest::prelude::*;

    #[test]
    fn uniform_binary_single_cylinder() {
        let m = ProcessModel::uniform(2).unwrap();
        let b = epsilon_bound(&m, 1.0, 20).unwrap();
        assert_eq!(b.rate, 0.0);
        assert!((b.h - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert_eq!((b.k, b.m), (2, 10));
        assert_eq!(b.aep_deficiency, 0.0);
        assert!(!b.surrogate);
        let closed = 2.0 * 10.0 * (-10.0 * b.h).exp();
        assert!((b.epsilon - closed).abs() < 1e-15);
        assert_eq!(b.epsilon, b.k as f64 * b.covering_term());
    }

    #[test]
    fn quaternary_hamming_ball() {
        let m = ProcessModel::uniform(4).unwrap();
        let ball = TargetSet::hamming_ball(vec![0; 10], 0.2, 4, 10_000).unwrap();
        assert_eq!(ball.cardinality(), 436);
        let b = epsilon_bound(&m, 436.0, 10).unwrap();
        assert!(b.epsilon.is_finite());
        assert!(b.m * b.k >= b.n);
        let tail = hitting_tail(&m, &ball, 10).unwrap();
        assert!(tail.prob_le(10).unwrap() <= b.epsilon);
        let (lhs, rhs) = subadditivity(tail.values(), 10, b.k, b.m).unwrap();
        assert!(lhs + 1e-12 >= rhs);
    }

    #[test]
    fn full_shift_is_rejected() {
        let m = ProcessModel::uniform(2).unwrap();
        assert!(matches!(epsilon_bound(&m, 1024.0, 10), Err(Error::RateExceedsEntropy { .. })));
    }

    #[test]
    fn k_is_minimal() {
        for (rate, h) in [(0.0, 1.0), (0.3, 0.5), (0.49, 0.5), (0.25, 0.5)] {
            let k = minimal_k(rate, h);
            assert!(rate < (1.0 - 1.0 / k as f64) * h);
            assert!(k == 1 || rate >= (1.0 - 1.0 / (k - 1) as f64) * h);
        }
        assert_eq!(minimal_k(0.25, 0.5), 3);
    }

    #[test]
    fn heavy_mass_matches_enumeration() {
        let iid = ProcessModel::iid(vec![0.7, 0.2, 0.1]).unwrap();
        let markov = ProcessModel::markov(vec![vec![0.8, 0.2], vec![0.4, 0.6]]).unwrap();
        for model in [iid, markov] {
            let q = model.alphabet_size();
            for len in 1..=7 {
                for h in [0.2, 0.5, 0.9] {
                    let threshold = (-(len as f64) * h).exp();
                    let mut brute = 0.0;
                    for code in 0..q.pow(len as u32) {
                        let word: Vec<u8> =
                            (0..len).map(|i| ((code / q.pow(i as u32)) % q) as u8).collect();
                        let p = model.cylinder_measure(&word).unwrap();
                        if p > threshold {
                            brute += p;
                        }
                    }
                    let fast = heavy_word_mass(&model, len, h).unwrap();
                    assert!((fast - brute).abs() < 1e-12, "len={len} h={h}: {fast} vs {brute}");
                }
            }
        }
    }

    #[test]
    fn non_uniform_is_surrogate() {
        let m = ProcessModel::iid(vec![0.05, 0.95]).unwrap();
        let b = epsilon_bound(&m, 1.0, 12).unwrap();
        assert!(b.surrogate);
        assert!(b.aep_deficiency > 0.0);
    }

    #[test]
    fn closed_form_count_bound() {
        let bound = hamming_kappa_bound(10, 0.2, 4);
        assert!((bound - (1.6 / 0.2f64.powf(0.2)).powi(10)).abs() < 1e-9);
        assert!((2700.0..2800.0).contains(&bound));
        assert!(bound >= 436.0);
        assert!(hamming_kappa_bound(1, 0.3, 2) > 1.0);
        assert!(hamming_kappa_bound(5, 1e-6, 2) >= 1.0);
    }

    #[test]
    fn count_bound_dominates_exact_count() {
        for q in [2, 4] {
            for n in 1..=14 {
                for i in 1..20 {
                    let d = i as f64 * 0.05;
                    assert!(
                        hamming_kappa_bound(n, d, q) * (1.0 + 1e-12) >= hamming_kappa(n, d, q) as f64,
                        "q={q} n={n} D={d}"
                    );
                }
            }
        }
    }

    #[test]
    fn d0_for_dna_entropy() {
        let d0 = solve_d0(4, 1.7 * 2f64.ln()).unwrap();
        assert!((0.40..=0.43).contains(&d0), "{d0}");
        assert!(solve_d0(2, 0.01).unwrap() < solve_d0(2, 0.1).unwrap());
        assert_eq!(solve_d0(2, 2.0).unwrap_err(), Error::NoCrossing);
        assert_eq!(solve_d0(2, 0.0).unwrap_err(), Error::NonPositiveEntropy);
    }

    #[test]
    fn d0_increases_with_entropy() {
        for q in [2, 3, 4] {
            let top = (q as f64).ln();
            let roots: Vec<f64> =
                (1..20).map(|i| solve_d0(q, top * i as f64 / 20.0).unwrap()).collect();
            assert!(roots.windows(2).all(|w| w[0] < w[1]), "q={q}: {roots:?}");
        }
    }

    #[test]
    fn d0_root_quality() {
        for (q, h) in [(4, 1.7 * 2f64.ln()), (2, 0.3), (3, 0.9)] {
            let d0 = solve_d0(q, h).unwrap();
            let f = |d: f64| hamming_base(d, q);
            assert!((f(d0) - h.exp()).abs() <= 1e-5);
            assert!(f(d0 - 1e-4) < h.exp());
        }
    }

    #[test]
    fn cardinality_rates() {
        let ln2 = 2f64.ln();
        let doubling: Vec<_> = (1..=20).map(|n| (n, 2f64.powi(n as i32))).collect();
        let r = cardinality_rate(&doubling, Some(ln2)).unwrap();
        assert!((r.rate - ln2).abs() < 1e-12);
        assert_eq!(r.below_entropy, Some(false));

        let balls: Vec<_> = (1..=30).map(|n| (n, hamming_kappa(n, 0.2, 4) as f64)).collect();
        let r = cardinality_rate(&balls, None).unwrap();
        assert!(r.rate <= hamming_base(0.2, 4).ln());
        assert_eq!(r.below_entropy, None);

        let square = |top: usize| {
            let t: Vec<_> = (1..=top).map(|n| (n, (n * n) as f64)).collect();
            cardinality_rate(&t, None).unwrap().rate
        };
        assert!(square(400) < square(100) && square(100) < square(25));
        assert!(square(400) < 0.06);
        assert!(cardinality_rate(&[(3, 0.5)], None).is_err());
    }

    #[test]
    fn mixed_unions() {
        let m = ProcessModel::uniform(2).unwrap();
        let mut prev = f64::INFINITY;
        for n in 4..=12 {
            let mut deep = vec![1u8; n];
            deep[0] = 0;
            let a0 = TargetSet::cylinder(deep).unwrap();
            let a1 = TargetSet::cylinder(vec![0; n]).unwrap();
            let row = mixed_union_row(&m, Some(&a0), Some(&a1)).unwrap();
            assert!(row.holds, "{row:?}");
            assert!(row.sum < prev);
            prev = row.sum;

            let only1 = mixed_union_row(&m, None, Some(&a1)).unwrap();
            assert_eq!(only1.small_term, 0.0);
            assert_eq!(only1.sum, only1.entropy_term);
            let only0 = mixed_union_row(&m, Some(&a0), None).unwrap();
            assert_eq!(only0.entropy_term, 0.0);
            assert!((only0.sum - n as f64 * 0.5f64.powi(n as i32)).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn epsilon_dominates_short_hits_uniform(
            q in 2usize..=3,
            n in 4usize..=9,
            seed in any::<u64>(),
        ) {
            let m = ProcessModel::uniform(q).unwrap();
            let word: Vec<u8> = (0..n).map(|i| ((seed >> (2 * i)) % q as u64) as u8).collect();
            let set = TargetSet::cylinder(word).unwrap();
            let b = epsilon_bound(&m, 1.0, n).unwrap();
            let tail = hitting_tail(&m, &set, n).unwrap();
            prop_assert!(tail.prob_le(n).unwrap() <= b.epsilon);
            let (lhs, rhs) = subadditivity(tail.values(), n, b.k, b.m).unwrap();
            prop_assert!(lhs + 1e-12 >= rhs);
        }
    }
}
