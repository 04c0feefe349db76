//! Exact hitting and return tails.
//!
//! The occurrence automaton is composed with the source memory (the last
//! emitted symbol) into a finite chain. A probability vector over that chain
//! is pushed one symbol at a time; mass that enters an accepting state after
//! the first window is removed, so the surviving mass after the window ending
//! at position `k + n − 1` is `H(k) = μ(τ_A > k)`.
//!
//! [`brute_force_tail`] recomputes the same quantities by enumerating words
//! and testing windows directly, without the automaton.

use serde::{Deserialize, Serialize};

use crate::automaton::{OccurrenceAutomaton, ROOT};
use crate::error::{Error, Result};
use crate::linalg;
use crate::process::{ProcessModel, Symbol};
use crate::targets::TargetSet;

pub const DEFAULT_ENUMERATION_CAP: u128 = 20_000_000;
pub const DENSE_SOLVE_CAP: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailKind {
    Hitting,
    Return,
}

impl TailKind {
    pub fn name(self) -> &'static str {
        match self {
            TailKind::Hitting => "hitting",
            TailKind::Return => "return",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSource {
    Exact,
    BruteForce,
    Empirical { samples: usize, seed: u64 },
    Synthetic,
}

impl TailSource {
    pub fn label(&self) -> String {
        match self {
            TailSource::Exact => "exact".into(),
            TailSource::BruteForce => "brute_force".into(),
            TailSource::Empirical { samples, seed } => format!("empirical(N={samples},seed={seed})"),
            TailSource::Synthetic => "synthetic".into(),
        }
    }
}

/// `H(0..=K)` for either `μ(τ_A > k)` or `μ(τ_A > k | A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailDistribution {
    kind: TailKind,
    values: Vec<f64>,
    mu_a: f64,
    source: TailSource,
}

impl TailDistribution {
    /// Checks `H(0) = 1`, monotonicity and range.
    pub fn new(kind: TailKind, values: Vec<f64>, mu_a: f64, source: TailSource) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::HorizonNonPositive);
        }
        if values[0] != 1.0 {
            return Err(Error::Config(format!("tail must start at 1, got {}", values[0])));
        }
        for (k, pair) in values.windows(2).enumerate() {
            if !(pair[1] <= pair[0]) || pair[1] < 0.0 {
                return Err(Error::Config(format!("tail not non-increasing at k={}", k + 1)));
            }
        }
        Ok(Self { kind, values, mu_a, source })
    }

    /// `H(k) = e^{−rate·k}`.
    pub fn exponential(kind: TailKind, rate: f64, horizon: usize, mu_a: f64) -> Self {
        let values = (0..=horizon).map(|k| (-rate * k as f64).exp()).collect();
        Self { kind, values, mu_a, source: TailSource::Synthetic }
    }

    pub fn kind(&self) -> TailKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn mu_a(&self) -> f64 {
        self.mu_a
    }

    pub fn source(&self) -> TailSource {
        self.source
    }

    pub fn at(&self, k: usize) -> Result<f64> {
        self.values
            .get(k)
            .copied()
            .ok_or(Error::HorizonTooShort { needed: k, available: self.horizon() })
    }

    /// `μ(τ ≤ k) = 1 − H(k)`.
    pub fn prob_le(&self, k: usize) -> Result<f64> {
        Ok(1.0 - self.at(k)?)
    }

    pub fn truncated(&self, horizon: usize) -> Result<Self> {
        if horizon > self.horizon() {
            return Err(Error::HorizonTooShort { needed: horizon, available: self.horizon() });
        }
        Ok(Self { values: self.values[..=horizon].to_vec(), ..self.clone() })
    }
}

/// Automaton × source-memory chain. States `0..q` are the root with last
/// symbol `y`; state `q + v − 1` is automaton node `v ≥ 1`, whose last
/// symbol is fixed by the node.
#[derive(Debug, Clone)]
pub struct ProductChain {
    q: usize,
    n: usize,
    next: Vec<u32>,
    prob: Vec<f64>,
    accepting: Vec<bool>,
    initial: Vec<f64>,
}

impl ProductChain {
    pub fn build(model: &ProcessModel, set: &TargetSet) -> Result<Self> {
        let q = model.alphabet_size();
        set.check_alphabet(q)?;
        let automaton = OccurrenceAutomaton::build(set, q);
        let nodes = automaton.num_states();
        let states = q + nodes - 1;
        let index = |node: usize, symbol: Symbol| {
            if node == ROOT { symbol as usize } else { q + node - 1 }
        };
        let mut next = Vec::with_capacity(states * q);
        let mut prob = Vec::with_capacity(states * q);
        let mut accepting = Vec::with_capacity(states);
        for p in 0..states {
            let (node, last) = if p < q {
                (ROOT, p as Symbol)
            } else {
                let node = p - q + 1;
                (node, automaton.last_symbol(node).expect("non-root node has a symbol"))
            };
            accepting.push(automaton.is_accepting(node));
            let row = model.row(last as usize);
            for y in 0..q as Symbol {
                next.push(index(automaton.step(node, y), y) as u32);
                prob.push(row[y as usize]);
            }
        }
        let mut initial = vec![0.0; states];
        for (y, &pi) in model.stationary().iter().enumerate() {
            initial[index(automaton.step(ROOT, y as Symbol), y as Symbol)] += pi;
        }
        Ok(Self { q, n: set.rank(), next, prob, accepting, initial })
    }

    pub fn num_states(&self) -> usize {
        self.accepting.len()
    }

    fn push(&self, dist: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (p, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let base = p * self.q;
            for e in base..base + self.q {
                out[self.next[e] as usize] += mass * self.prob[e];
            }
        }
    }

    /// State law after the first window (positions `0..n`) has been read.
    fn first_window(&self) -> Vec<f64> {
        let mut dist = self.initial.clone();
        let mut scratch = vec![0.0; dist.len()];
        for _ in 1..self.n {
            self.push(&dist, &mut scratch);
            std::mem::swap(&mut dist, &mut scratch);
        }
        dist
    }
}

/// Incrementally extendable exact tail.
#[derive(Debug, Clone)]
pub struct TailEngine {
    chain: ProductChain,
    kind: TailKind,
    dist: Vec<f64>,
    scratch: Vec<f64>,
    values: Vec<f64>,
    mu_a: f64,
}

impl TailEngine {
    pub fn new(model: &ProcessModel, set: &TargetSet, kind: TailKind) -> Result<Self> {
        let chain = ProductChain::build(model, set)?;
        let mu_a = set.measure(model)?;
        let mut dist = chain.first_window();
        if kind == TailKind::Return {
            let mass: f64 =
                dist.iter().zip(&chain.accepting).filter(|(_, &a)| a).map(|(m, _)| m).sum();
            if !(mass > 0.0) || mu_a <= 0.0 {
                return Err(Error::ZeroMeasureSet);
            }
            for (m, &acc) in dist.iter_mut().zip(&chain.accepting) {
                *m = if acc { *m / mass } else { 0.0 };
            }
        }
        let scratch = vec![0.0; dist.len()];
        Ok(Self { chain, kind, dist, scratch, values: vec![1.0], mu_a })
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn extend_to(&mut self, horizon: usize) {
        while self.values.len() <= horizon {
            self.chain.push(&self.dist, &mut self.scratch);
            std::mem::swap(&mut self.dist, &mut self.scratch);
            let mut remaining = 0.0;
            for (m, &acc) in self.dist.iter_mut().zip(&self.chain.accepting) {
                if acc {
                    *m = 0.0;
                } else {
                    remaining += *m;
                }
            }
            let prev = *self.values.last().expect("non-empty");
            self.values.push(remaining.min(prev).max(0.0));
        }
    }

    pub fn value(&self, k: usize) -> Option<f64> {
        self.values.get(k).copied()
    }

    pub fn tail(&self) -> TailDistribution {
        TailDistribution {
            kind: self.kind,
            values: self.values.clone(),
            mu_a: self.mu_a,
            source: TailSource::Exact,
        }
    }
}

/// `μ(τ_A > k)` for `k = 0..=horizon`.
pub fn hitting_tail(model: &ProcessModel, set: &TargetSet, horizon: usize) -> Result<TailDistribution> {
    if horizon == 0 {
        return Err(Error::HorizonNonPositive);
    }
    let mut engine = TailEngine::new(model, set, TailKind::Hitting)?;
    engine.extend_to(horizon);
    Ok(engine.tail())
}

/// `μ(τ_A > k | A)` for `k = 0..=horizon`.
pub fn return_tail(model: &ProcessModel, set: &TargetSet, horizon: usize) -> Result<TailDistribution> {
    if horizon == 0 {
        return Err(Error::HorizonNonPositive);
    }
    let mut engine = TailEngine::new(model, set, TailKind::Return)?;
    engine.extend_to(horizon);
    Ok(engine.tail())
}

/// Tail by direct enumeration of all words of length `horizon + n` and a
/// plain window-membership test. Prefixes whose fate is already decided are
/// collapsed into their cylinder measure.
pub fn brute_force_tail(
    model: &ProcessModel,
    set: &TargetSet,
    horizon: usize,
    kind: TailKind,
    cap: u128,
) -> Result<TailDistribution> {
    if horizon == 0 {
        return Err(Error::HorizonNonPositive);
    }
    let q = model.alphabet_size();
    set.check_alphabet(q)?;
    let n = set.rank();
    let length = horizon + n;
    let size = (q as u128).checked_pow(length as u32).unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::EnumerationTooLarge { size, cap });
    }

    /// Neumaier-compensated running sum.
    #[derive(Clone, Copy, Default)]
    struct Sum(f64, f64);

    impl Sum {
        fn add(&mut self, x: f64) {
            let t = self.0 + x;
            self.1 += if self.0.abs() >= x.abs() { (self.0 - t) + x } else { (x - t) + self.0 };
            self.0 = t;
        }

        fn value(self) -> f64 {
            self.0 + self.1
        }
    }

    struct Walk<'a> {
        model: &'a ProcessModel,
        set: &'a TargetSet,
        kind: TailKind,
        n: usize,
        length: usize,
        word: Vec<Symbol>,
        /// `first_hit[k]` = mass with τ = k; index 0 collects τ > horizon.
        first_hit: Vec<Sum>,
        conditioned: Sum,
    }

    impl Walk<'_> {
        fn descend(&mut self, mass: f64) {
            let depth = self.word.len();
            if depth >= self.n {
                let pos = depth - self.n;
                let hit = self.set.contains(&self.word[pos..]);
                if pos == 0 {
                    if self.kind == TailKind::Return {
                        if !hit {
                            return;
                        }
                        self.conditioned.add(mass);
                    }
                } else if hit {
                    self.first_hit[pos].add(mass);
                    return;
                }
            }
            if depth == self.length {
                self.first_hit[0].add(mass);
                return;
            }
            let q = self.model.alphabet_size();
            for y in 0..q {
                let p = match self.word.last() {
                    None => self.model.stationary()[y],
                    Some(&last) => self.model.prob(last as usize, y),
                };
                if p == 0.0 {
                    continue;
                }
                self.word.push(y as Symbol);
                self.descend(mass * p);
                self.word.pop();
            }
        }
    }

    let mut walk = Walk {
        model,
        set,
        kind,
        n,
        length,
        word: Vec::with_capacity(length),
        first_hit: vec![Sum::default(); horizon + 1],
        conditioned: Sum::default(),
    };
    walk.descend(1.0);

    let norm = match kind {
        TailKind::Hitting => 1.0,
        TailKind::Return => walk.conditioned.value(),
    };
    if !(norm > 0.0) {
        return Err(Error::ZeroMeasureSet);
    }
    // Each H(k) is taken from whichever of the mass above k and the mass
    // at or below k is smaller, to keep rounding relative to the small side.
    let hits: Vec<f64> = walk.first_hit.iter().map(|s| s.value()).collect();
    let mut above = vec![0.0; horizon + 1];
    let mut acc = hits[0];
    for k in (0..=horizon).rev() {
        above[k] = acc;
        if k > 0 {
            acc += hits[k];
        }
    }
    let mut below = 0.0;
    let mut values = vec![1.0; horizon + 1];
    for k in 1..=horizon {
        below += hits[k];
        values[k] = if below < above[k] { (norm - below) / norm } else { above[k] / norm };
    }
    Ok(TailDistribution {
        kind,
        values,
        mu_a: set.measure(model)?,
        source: TailSource::BruteForce,
    })
}

/// `E[τ_A | A]` from the fundamental-matrix system `(I − Q)m = 1`, where `Q`
/// is the product chain restricted to transitions into non-accepting states.
pub fn return_expectation(model: &ProcessModel, set: &TargetSet) -> Result<f64> {
    let engine = TailEngine::new(model, set, TailKind::Return)?;
    let chain = &engine.chain;
    let dim = chain.num_states();
    if dim > DENSE_SOLVE_CAP {
        return Err(Error::StateSpaceTooLarge { states: dim, cap: DENSE_SOLVE_CAP });
    }
    let mut a = linalg::identity(dim);
    for p in 0..dim {
        for e in p * chain.q..(p + 1) * chain.q {
            let to = chain.next[e] as usize;
            if !chain.accepting[to] {
                a[p * dim + to] -= chain.prob[e];
            }
        }
    }
    let steps = linalg::solve(a, vec![1.0; dim], dim)?;
    Ok(engine.dist.iter().zip(&steps).map(|(w, m)| w * m).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform2() -> ProcessModel {
        ProcessModel::uniform(2).unwrap()
    }

    fn two_state() -> ProcessModel {
        ProcessModel::markov(vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap()
    }

    fn cyl(w: &[Symbol]) -> TargetSet {
        TargetSet::cylinder(w.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (k, (x, y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() <= tol, "k={k}: {x} vs {y}");
        }
    }

    #[test]
    fn geometric_tails() {
        let m = uniform2();
        let set = cyl(&[1]);
        let expected: Vec<f64> = (0..=20).map(|k| 0.5f64.powi(k)).collect();
        close(hitting_tail(&m, &set, 20).unwrap().values(), &expected, 1e-15);
        close(return_tail(&m, &set, 20).unwrap().values(), &expected, 1e-15);
        let bf = brute_force_tail(&m, &set, 12, TailKind::Hitting, DEFAULT_ENUMERATION_CAP).unwrap();
        close(bf.values(), &expected[..=12], 1e-12);
        let bf = brute_force_tail(&m, &set, 12, TailKind::Return, DEFAULT_ENUMERATION_CAP).unwrap();
        close(bf.values(), &expected[..=12], 1e-12);
    }

    #[test]
    fn pattern_11_counts_fibonacci() {
        let m = uniform2();
        let h = hitting_tail(&m, &cyl(&[1, 1]), 3).unwrap();
        assert_eq!(h.values(), &[1.0, 0.75, 0.625, 0.5]);
        let bf = brute_force_tail(&m, &cyl(&[1, 1]), 3, TailKind::Hitting, 1 << 20).unwrap();
        // 8 of the 16 strings x1..x4 avoid 11.
        assert_eq!(bf.at(3).unwrap(), 8.0 / 16.0);
        let r = return_tail(&m, &cyl(&[1, 1]), 3).unwrap();
        // Given x0 x1 = 11, τ = 1 iff x2 = 1.
        assert!(r.at(1).unwrap() != h.at(1).unwrap());
        assert_eq!(r.at(1).unwrap(), 0.5);
    }

    #[test]
    fn markov_pattern_matches_brute_force() {
        let m = two_state();
        let set = cyl(&[0, 1]);
        for kind in [TailKind::Hitting, TailKind::Return] {
            let bf = brute_force_tail(&m, &set, 10, kind, DEFAULT_ENUMERATION_CAP).unwrap();
            let ex = match kind {
                TailKind::Hitting => hitting_tail(&m, &set, 10).unwrap(),
                TailKind::Return => return_tail(&m, &set, 10).unwrap(),
            };
            close(ex.values(), bf.values(), 1e-12);
        }
    }

    #[test]
    fn full_alphabet_returns_immediately() {
        let m = uniform2();
        let set = TargetSet::from_words(vec![vec![0], vec![1]]).unwrap();
        let r = return_tail(&m, &set, 5).unwrap();
        assert_eq!(r.values(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let bf = brute_force_tail(&m, &set, 5, TailKind::Return, 1 << 20).unwrap();
        assert_eq!(bf.values(), r.values());
    }

    #[test]
    fn first_step_mass_is_the_measure() {
        let m = two_state();
        let set = TargetSet::from_words(vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 1]]).unwrap();
        let h = hitting_tail(&m, &set, 5).unwrap();
        let mu = set.measure(&m).unwrap();
        assert!((h.at(0).unwrap() - h.at(1).unwrap() - mu).abs() < 1e-12);
    }

    #[test]
    fn kac_expectations() {
        assert!((return_expectation(&uniform2(), &cyl(&[1])).unwrap() - 2.0).abs() < 1e-9);
        assert!((return_expectation(&uniform2(), &cyl(&[1, 1])).unwrap() - 4.0).abs() < 1e-9);
        assert!((return_expectation(&two_state(), &cyl(&[0, 1])).unwrap() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn error_paths() {
        let m = uniform2();
        assert_eq!(hitting_tail(&m, &cyl(&[1]), 0).unwrap_err(), Error::HorizonNonPositive);
        let degenerate = ProcessModel::iid(vec![1.0, 0.0]).unwrap();
        assert_eq!(return_tail(&degenerate, &cyl(&[1]), 3).unwrap_err(), Error::ZeroMeasureSet);
        assert_eq!(return_expectation(&degenerate, &cyl(&[1])).unwrap_err(), Error::ZeroMeasureSet);
        let err = brute_force_tail(&m, &cyl(&[1]), 40, TailKind::Hitting, 1 << 20).unwrap_err();
        assert!(matches!(err, Error::EnumerationTooLarge { .. }));
    }

    #[test]
    fn tails_are_monotone_and_extendable() {
        let m = two_state();
        let set = TargetSet::hamming_ball(vec![0, 1, 0, 1], 0.26, 2, 100).unwrap();
        let mut engine = TailEngine::new(&m, &set, TailKind::Hitting).unwrap();
        engine.extend_to(50);
        let short = engine.tail();
        engine.extend_to(500);
        let long = engine.tail();
        assert_eq!(&long.values()[..=50], short.values());
        assert!(long.values().windows(2).all(|w| w[1] <= w[0]));
    }
}
