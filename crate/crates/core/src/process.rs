//! Stationary finite-alphabet sources: i.i.d. and order-1 Markov.
//!
//! A validated [`ProcessModel`] knows its stationary law, the exact measure of
//! every cylinder, its entropy rate and a certified upper bound on the strong
//! mixing coefficient α(g).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub type Symbol = u8;

const ROW_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

/// JSON form of a model: `{"kind":"iid","probs":[..]}` or
/// `{"kind":"markov","transition":[[..],..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Iid { probs: Vec<f64> },
    Markov { transition: Vec<Vec<f64>> },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<ProcessModel> {
        match self {
            ModelSpec::Iid { probs } => ProcessModel::iid(probs.clone()),
            ModelSpec::Markov { transition } => ProcessModel::markov(transition.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Iid,
    Markov,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessModel {
    q: usize,
    kind: ModelKind,
    /// Row-major `q × q`. For i.i.d. models every row equals the marginal.
    transition: Vec<f64>,
    stationary: Vec<f64>,
}

impl ProcessModel {
    pub fn iid(probs: Vec<f64>) -> Result<Self> {
        let q = probs.len();
        if q < 2 {
            return Err(Error::EmptyAlphabet);
        }
        check_row(&probs, 0)?;
        let transition = probs.iter().copied().cycle().take(q * q).collect();
        Ok(Self { q, kind: ModelKind::Iid, transition, stationary: probs })
    }

    pub fn uniform(q: usize) -> Result<Self> {
        Self::iid(vec![1.0 / q as f64; q])
    }

    /// Validates an irreducible aperiodic transition table and solves for its
    /// stationary law.
    pub fn markov(rows: Vec<Vec<f64>>) -> Result<Self> {
        let q = rows.len();
        if q < 2 {
            return Err(Error::EmptyAlphabet);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != q {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {q}",
                    row.len()
                )));
            }
            check_row(row, i)?;
        }
        let transition: Vec<f64> = rows.into_iter().flatten().collect();
        check_primitive(&transition, q)?;
        let stationary = stationary_law(&transition, q)?;
        let model = Self { q, kind: ModelKind::Markov, transition, stationary };
        for j in 0..q {
            let pushed: f64 = (0..q).map(|i| model.stationary[i] * model.prob(i, j)).sum();
            if (pushed - model.stationary[j]).abs() > STATIONARY_TOL {
                return Err(Error::SingularSystem);
            }
        }
        Ok(model)
    }

    pub fn alphabet_size(&self) -> usize {
        self.q
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Law of the next symbol given the previous one.
    pub fn row(&self, last: usize) -> &[f64] {
        &self.transition[last * self.q..(last + 1) * self.q]
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.q + to]
    }

    /// True for an i.i.d. model with equal symbol probabilities.
    pub fn is_uniform_iid(&self) -> bool {
        self.kind == ModelKind::Iid && self.stationary.iter().all(|&p| p == self.stationary[0])
    }

    pub fn to_spec(&self) -> ModelSpec {
        match self.kind {
            ModelKind::Iid => ModelSpec::Iid { probs: self.stationary.clone() },
            ModelKind::Markov => ModelSpec::Markov {
                transition: self.transition.chunks(self.q).map(<[f64]>::to_vec).collect(),
            },
        }
    }

    pub fn check_word(&self, word: &[Symbol]) -> Result<()> {
        if word.is_empty() {
            return Err(Error::EmptyWord);
        }
        match word.iter().find(|&&s| s as usize >= self.q) {
            Some(&s) => Err(Error::SymbolOutOfRange { symbol: s as usize, q: self.q }),
            None => Ok(()),
        }
    }

    /// μ([w₀ … w_{n−1}]).
    pub fn cylinder_measure(&self, word: &[Symbol]) -> Result<f64> {
        self.check_word(word)?;
        let mut measure = self.stationary[word[0] as usize];
        for pair in word.windows(2) {
            measure *= self.prob(pair[0] as usize, pair[1] as usize);
        }
        Ok(measure)
    }

    /// Entropy rate in nats per symbol.
    pub fn entropy(&self) -> f64 {
        let h: f64 = match self.kind {
            ModelKind::Iid => plogp_sum(&self.stationary),
            ModelKind::Markov => (0..self.q)
                .map(|i| self.stationary[i] * plogp_sum(self.row(i)))
                .sum(),
        };
        h.max(0.0)
    }

    pub fn mixing_bound(&self) -> MixingBound {
        MixingBound { model: self.clone() }
    }

    /// Certified upper bound α̂(g) ≥ α(g).
    pub fn alpha_bound(&self, gap: u64) -> Result<f64> {
        self.mixing_bound().at(gap)
    }
}

fn plogp_sum(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

fn check_row(row: &[f64], index: usize) -> Result<()> {
    let sum: f64 = row.iter().sum();
    let min = row.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min >= 0.0) || !((sum - 1.0).abs() <= ROW_TOL) {
        return Err(Error::NonStochastic { row: index, sum, min });
    }
    Ok(())
}

/// Some power `P^k`, `k ≤ q²`, must be strictly positive. When it is not,
/// distinguishes reducible tables from irreducible periodic ones.
fn check_primitive(transition: &[f64], q: usize) -> Result<()> {
    let support: Vec<bool> = transition.iter().map(|&p| p > 0.0).collect();
    let mut power = support.clone();
    for _ in 0..q * q {
        if power.iter().all(|&b| b) {
            return Ok(());
        }
        power = bool_mul(&power, &support, q);
    }
    // Reachability closure: (I + P)^(q-1) > 0 iff irreducible.
    let mut reach = support.clone();
    for i in 0..q {
        reach[i * q + i] = true;
    }
    for _ in 0..q {
        reach = bool_mul(&reach, &reach, q);
    }
    if reach.iter().all(|&b| b) {
        Err(Error::Periodic)
    } else {
        Err(Error::Reducible)
    }
}

fn bool_mul(a: &[bool], b: &[bool], q: usize) -> Vec<bool> {
    let mut out = vec![false; q * q];
    for i in 0..q {
        for k in 0..q {
            if a[i * q + k] {
                for j in 0..q {
                    out[i * q + j] |= b[k * q + j];
                }
            }
        }
    }
    out
}

/// Solves π(P − I) = 0 with the last equation replaced by Σπ = 1.
fn stationary_law(transition: &[f64], q: usize) -> Result<Vec<f64>> {
    // Unknown π as a column: (Pᵀ − I) π = 0.
    let mut a = vec![0.0; q * q];
    for i in 0..q {
        for j in 0..q {
            a[j * q + i] = transition[i * q + j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..q {
        a[(q - 1) * q + i] = 1.0;
    }
    let mut b = vec![0.0; q];
    b[q - 1] = 1.0;
    let mut pi = linalg::solve(a, b, q)?;
    for p in &mut pi {
        if *p < 0.0 && *p > -1e-15 {
            *p = 0.0;
        }
    }
    Ok(pi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingDecay {
    /// α ≡ 0.
    Independent,
    /// α̂(g+1)/α̂(g) approaches `rate`.
    Geometric { rate: f64 },
}

/// Upper bound on α(g): zero for i.i.d. sources, and for Markov sources the
/// β-mixing coefficient Σᵢ πᵢ · ½Σⱼ |Pᵍ(i,j) − πⱼ| computed from an exact
/// matrix power.
#[derive(Debug, Clone)]
pub struct MixingBound {
    model: ProcessModel,
}

impl MixingBound {
    pub fn at(&self, gap: u64) -> Result<f64> {
        if gap == 0 {
            return Err(Error::GapNonPositive);
        }
        let m = &self.model;
        if m.kind == ModelKind::Iid {
            return Ok(0.0);
        }
        let q = m.q;
        let power = linalg::matpow(&m.transition, q, gap);
        let beta: f64 = (0..q)
            .map(|i| {
                let tv: f64 =
                    (0..q).map(|j| (power[i * q + j] - m.stationary[j]).abs()).sum::<f64>() / 2.0;
                m.stationary[i] * tv
            })
            .sum();
        Ok(beta.clamp(0.0, 1.0))
    }

    /// Rate read off the ratio of consecutive bounds, at the largest gap
    /// (up to 64) where the bound is still well above rounding noise.
    pub fn decay(&self) -> MixingDecay {
        if self.model.kind == ModelKind::Iid {
            return MixingDecay::Independent;
        }
        let mut gap = 1;
        let mut prev = self.at(1).unwrap_or(0.0);
        let mut rate = 0.0;
        while gap < 64 {
            let next = self.at(gap + 1).unwrap_or(0.0);
            if next < 1e-7 {
                break;
            }
            rate = next / prev;
            prev = next;
            gap += 1;
        }
        MixingDecay::Geometric { rate }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_state() -> ProcessModel {
        ProcessModel::markov(vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap()
    }

    fn binary_entropy(p: f64) -> f64 {
        -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
    }

    #[test]
    fn uniform_iid_is_valid() {
        let m = ProcessModel::iid(vec![0.5, 0.5]).unwrap();
        assert_eq!(m.stationary(), &[0.5, 0.5]);
        assert!(m.is_uniform_iid());
    }

    #[test]
    fn markov_stationary_solves_fixed_point() {
        let m = two_state();
        assert!((m.stationary()[0] - 5.0 / 6.0).abs() < 1e-14);
        assert!((m.stationary()[1] - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_tables() {
        assert_eq!(
            ProcessModel::markov(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap_err(),
            Error::Periodic
        );
        assert_eq!(
            ProcessModel::markov(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap_err(),
            Error::Reducible
        );
        assert!(matches!(
            ProcessModel::iid(vec![0.5, 0.6]).unwrap_err(),
            Error::NonStochastic { .. }
        ));
        assert!(matches!(
            ProcessModel::iid(vec![1.2, -0.2]).unwrap_err(),
            Error::NonStochastic { .. }
        ));
        assert_eq!(ProcessModel::iid(vec![1.0]).unwrap_err(), Error::EmptyAlphabet);
        assert_eq!(ProcessModel::markov(vec![]).unwrap_err(), Error::EmptyAlphabet);
        assert!(matches!(
            ProcessModel::markov(vec![vec![0.5, 0.5], vec![1.0]]).unwrap_err(),
            Error::DimensionMismatch(_)
        ));
    }

    #[test]
    fn three_cycle_is_periodic() {
        let rows = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        assert_eq!(ProcessModel::markov(rows).unwrap_err(), Error::Periodic);
    }

    #[test]
    fn cylinder_measures() {
        let u = ProcessModel::uniform(2).unwrap();
        assert_eq!(u.cylinder_measure(&[0, 0, 0]).unwrap(), 0.125);
        let m = two_state();
        assert!((m.cylinder_measure(&[0, 1]).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(m.cylinder_measure(&[]).unwrap_err(), Error::EmptyWord);
        assert_eq!(
            m.cylinder_measure(&[0, 2]).unwrap_err(),
            Error::SymbolOutOfRange { symbol: 2, q: 2 }
        );
    }

    #[test]
    fn entropies() {
        let u4 = ProcessModel::uniform(4).unwrap();
        assert!((u4.entropy() - 4f64.ln()).abs() < 1e-15);
        let det = ProcessModel::iid(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(det.entropy(), 0.0);
        let expected = 5.0 / 6.0 * binary_entropy(0.9) + 1.0 / 6.0 * binary_entropy(0.5);
        assert!((two_state().entropy() - expected).abs() < 1e-14);
    }

    #[test]
    fn alpha_bound_iid_is_zero() {
        let u = ProcessModel::uniform(3).unwrap();
        for g in [1, 5, 100] {
            assert_eq!(u.alpha_bound(g).unwrap(), 0.0);
        }
        assert_eq!(u.alpha_bound(0).unwrap_err(), Error::GapNonPositive);
        assert_eq!(u.mixing_bound().decay(), MixingDecay::Independent);
    }

    #[test]
    fn alpha_bound_decays_at_second_eigenvalue() {
        let m = two_state();
        let a1 = m.alpha_bound(1).unwrap();
        let a2 = m.alpha_bound(2).unwrap();
        assert!(a2 <= a1);
        // β(g) = 2π₀π₁·0.4^g for a two-state chain with eigenvalue 0.4.
        let closed = |g: i32| 2.0 * (5.0 / 6.0) * (1.0 / 6.0) * 0.4f64.powi(g);
        for g in 1..20 {
            assert!((m.alpha_bound(g as u64).unwrap() - closed(g)).abs() < 1e-15);
        }
        let ratio = m.alpha_bound(11).unwrap() / m.alpha_bound(10).unwrap();
        assert!((ratio - 0.4).abs() < 1e-9);
        match m.mixing_bound().decay() {
            MixingDecay::Geometric { rate } => assert!((rate - 0.4).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn model_spec_json() {
        let spec: ModelSpec = serde_json::from_str(r#"{"kind":"iid","probs":[0.5,0.5]}"#).unwrap();
        assert_eq!(spec.validate().unwrap().alphabet_size(), 2);
        let spec: ModelSpec =
            serde_json::from_str(r#"{"kind":"markov","transition":[[0.9,0.1],[0.5,0.5]]}"#)
                .unwrap();
        assert_eq!(spec.validate().unwrap().to_spec(), spec);
        assert!(serde_json::from_str::<ModelSpec>(r#"{"kind":"iid","probs":[1],"x":1}"#).is_err());
    }

    fn markov_strategy() -> impl Strategy<Value = ProcessModel> {
        (2usize..=4)
            .prop_flat_map(|q| proptest::collection::vec(0.05f64..1.0, q * q).prop_map(move |w| (q, w)))
            .prop_map(|(q, w)| {
                let rows = w
                    .chunks(q)
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        let mut row: Vec<f64> = r.iter().map(|x| x / s).collect();
                        let head: f64 = row[..q - 1].iter().sum();
                        row[q - 1] = 1.0 - head;
                        row
                    })
                    .collect();
                ProcessModel::markov(rows).unwrap()
            })
    }

    fn all_words(q: usize, n: usize) -> Vec<Vec<Symbol>> {
        let mut words = vec![vec![]];
        for _ in 0..n {
            words = words
                .into_iter()
                .flat_map(|w| {
                    (0..q as Symbol).map(move |s| {
                        let mut w = w.clone();
                        w.push(s);
                        w
                    })
                })
                .collect();
        }
        words
    }

    proptest! {
        #[test]
        fn iid_measure_is_multiplicative(
            probs in proptest::collection::vec(0.01f64..1.0, 2..5),
            seed_u in proptest::collection::vec(0usize..100, 1..6),
            seed_v in proptest::collection::vec(0usize..100, 1..6),
        ) {
            let s: f64 = probs.iter().sum();
            let mut probs: Vec<f64> = probs.iter().map(|p| p / s).collect();
            let head: f64 = probs[..probs.len() - 1].iter().sum();
            let last = probs.len() - 1;
            probs[last] = 1.0 - head;
            let q = probs.len();
            let m = ProcessModel::iid(probs).unwrap();
            let u: Vec<Symbol> = seed_u.iter().map(|&x| (x % q) as Symbol).collect();
            let v: Vec<Symbol> = seed_v.iter().map(|&x| (x % q) as Symbol).collect();
            let uv: Vec<Symbol> = u.iter().chain(&v).copied().collect();
            let lhs = m.cylinder_measure(&uv).unwrap();
            let rhs = m.cylinder_measure(&u).unwrap() * m.cylinder_measure(&v).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-15 * rhs.max(1e-300) + 1e-300);
        }

        #[test]
        fn markov_invariants(m in markov_strategy()) {
            let q = m.alphabet_size();
            let h = m.entropy();
            prop_assert!(h >= 0.0 && h <= (q as f64).ln() + 1e-12);
            let mut prev = f64::INFINITY;
            for g in 1..=100u64 {
                let a = m.alpha_bound(g).unwrap();
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!(a <= prev + 1e-15);
                prev = a;
            }
            prop_assert!(prev < 1e-6);
            let n = if q <= 2 { 8 } else if q == 3 { 6 } else { 5 };
            let total: f64 = all_words(q, n).iter().map(|w| m.cylinder_measure(w).unwrap()).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
