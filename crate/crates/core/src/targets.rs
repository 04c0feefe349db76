//! Rare events as finite unions of rank-n cylinders.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{ProcessModel, Symbol};

pub const DEFAULT_EXPANSION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Cylinder,
    HammingBall { center: Vec<Symbol>, fraction: f64, radius: usize },
    ExplicitUnion,
}

/// Distinct words of a common length `n`, kept in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    n: usize,
    words: Vec<Vec<Symbol>>,
    provenance: Provenance,
}

impl TargetSet {
    pub fn cylinder(word: Vec<Symbol>) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::EmptyWord);
        }
        Ok(Self { n: word.len(), words: vec![word], provenance: Provenance::Cylinder })
    }

    /// Explicit list; duplicates are removed.
    pub fn from_words(words: impl IntoIterator<Item = Vec<Symbol>>) -> Result<Self> {
        let set: BTreeSet<Vec<Symbol>> = words.into_iter().collect();
        let n = set.first().ok_or(Error::EmptyTarget)?.len();
        if n == 0 {
            return Err(Error::EmptyWord);
        }
        if let Some(bad) = set.iter().find(|w| w.len() != n) {
            return Err(Error::RankMismatch { left: n, right: bad.len() });
        }
        let provenance =
            if set.len() == 1 { Provenance::Cylinder } else { Provenance::ExplicitUnion };
        Ok(Self { n, words: set.into_iter().collect(), provenance })
    }

    /// Every word within Hamming distance ⌊D·n⌋ of `center`.
    pub fn hamming_ball(center: Vec<Symbol>, fraction: f64, q: usize, cap: u128) -> Result<Self> {
        let ball = HammingBall::new(center, fraction)?;
        let size = hamming_ball_size(ball.center.len(), ball.radius, q);
        if size > cap {
            return Err(Error::ExpansionTooLarge { size, cap });
        }
        if let Some(&s) = ball.center.iter().find(|&&s| s as usize >= q) {
            return Err(Error::SymbolOutOfRange { symbol: s as usize, q });
        }
        let mut words = Vec::with_capacity(size as usize);
        let mut current = ball.center.clone();
        expand_ball(&ball.center, &mut current, 0, ball.radius, q, &mut words);
        words.sort();
        Ok(Self {
            n: ball.center.len(),
            words,
            provenance: Provenance::HammingBall {
                center: ball.center,
                fraction,
                radius: ball.radius,
            },
        })
    }

    /// De-duplicated union of sets of equal rank.
    pub fn union(sets: &[TargetSet]) -> Result<Self> {
        let first = sets.first().ok_or(Error::EmptyTarget)?;
        if let Some(bad) = sets.iter().find(|s| s.n != first.n) {
            return Err(Error::RankMismatch { left: first.n, right: bad.n });
        }
        let set: BTreeSet<Vec<Symbol>> =
            sets.iter().flat_map(|s| s.words.iter().cloned()).collect();
        Ok(Self { n: first.n, words: set.into_iter().collect(), provenance: Provenance::ExplicitUnion })
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    pub fn words(&self) -> &[Vec<Symbol>] {
        &self.words
    }

    /// κ: number of rank-n cylinders in the set.
    pub fn cardinality(&self) -> usize {
        self.words.len()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn contains(&self, window: &[Symbol]) -> bool {
        self.words.binary_search_by(|w| w.as_slice().cmp(window)).is_ok()
    }

    /// μ(A) as the sum of its cylinder measures.
    pub fn measure(&self, model: &ProcessModel) -> Result<f64> {
        self.words.iter().map(|w| model.cylinder_measure(w)).sum()
    }

    pub fn check_alphabet(&self, q: usize) -> Result<()> {
        for w in &self.words {
            if let Some(&s) = w.iter().find(|&&s| s as usize >= q) {
                return Err(Error::SymbolOutOfRange { symbol: s as usize, q });
            }
        }
        Ok(())
    }
}

fn expand_ball(
    center: &[Symbol],
    current: &mut Vec<Symbol>,
    from: usize,
    budget: usize,
    q: usize,
    out: &mut Vec<Vec<Symbol>>,
) {
    out.push(current.clone());
    if budget == 0 {
        return;
    }
    for pos in from..center.len() {
        for s in 0..q as Symbol {
            if s == center[pos] {
                continue;
            }
            current[pos] = s;
            expand_ball(center, current, pos + 1, budget - 1, q, out);
        }
        current[pos] = center[pos];
    }
}

/// Σ_{k ≤ radius} C(n,k)(q−1)^k, saturating at `u128::MAX`.
pub fn hamming_ball_size(n: usize, radius: usize, q: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    let mut pow: u128 = 1;
    for k in 0..=radius.min(n) {
        if k > 0 {
            binom = binom.saturating_mul((n - k + 1) as u128) / k as u128;
            pow = pow.saturating_mul((q - 1) as u128);
        }
        total = total.saturating_add(binom.saturating_mul(pow));
    }
    total
}

/// Radius ⌊D·n⌋, guarded against `0.3 * 10 = 2.999…`.
pub fn hamming_radius(n: usize, fraction: f64) -> usize {
    (fraction * n as f64 + 1e-9).floor() as usize
}

/// Membership predicate for a Hamming ball that is never expanded.
#[derive(Debug, Clone, PartialEq)]
pub struct HammingBall {
    pub center: Vec<Symbol>,
    pub radius: usize,
}

impl HammingBall {
    pub fn new(center: Vec<Symbol>, fraction: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::EmptyWord);
        }
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidFraction(fraction));
        }
        let radius = hamming_radius(center.len(), fraction);
        Ok(Self { center, radius })
    }

    pub fn contains(&self, window: &[Symbol]) -> bool {
        window.len() == self.center.len()
            && window.iter().zip(&self.center).filter(|(a, b)| a != b).count() <= self.radius
    }
}

/// JSON target description:
/// `{"cylinder":"0,1,1"}`, `{"hamming":{"center":"0,0,0","D":0.2}}` or
/// `{"union":[…]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetSpec {
    Cylinder(String),
    Hamming(HammingSpec),
    Union(Vec<TargetSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HammingSpec {
    pub center: String,
    #[serde(rename = "D")]
    pub fraction: f64,
}

impl TargetSpec {
    pub fn resolve(&self, q: usize, cap: u128) -> Result<TargetSet> {
        let set = match self {
            TargetSpec::Cylinder(word) => TargetSet::cylinder(parse_word(word)?)?,
            TargetSpec::Hamming(h) => {
                TargetSet::hamming_ball(parse_word(&h.center)?, h.fraction, q, cap)?
            }
            TargetSpec::Union(parts) => {
                let sets =
                    parts.iter().map(|p| p.resolve(q, cap)).collect::<Result<Vec<_>>>()?;
                TargetSet::union(&sets)?
            }
        };
        set.check_alphabet(q)?;
        Ok(set)
    }

    /// Parses the command-line shorthand `cyl:0,1,1`, `ham:0,0,0:0.2`, or a
    /// `+`-separated union of those, falling back to inline JSON.
    pub fn parse_shorthand(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.starts_with('{') {
            return serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()));
        }
        if text.contains('+') {
            let parts = text.split('+').map(Self::parse_shorthand).collect::<Result<Vec<_>>>()?;
            return Ok(TargetSpec::Union(parts));
        }
        if let Some(word) = text.strip_prefix("cyl:") {
            parse_word(word)?;
            return Ok(TargetSpec::Cylinder(word.to_string()));
        }
        if let Some(rest) = text.strip_prefix("ham:") {
            let (center, fraction) = rest
                .rsplit_once(':')
                .ok_or_else(|| Error::Config(format!("expected ham:<center>:<D>, got {text}")))?;
            parse_word(center)?;
            let fraction: f64 =
                fraction.parse().map_err(|_| Error::Config(format!("bad fraction {fraction}")))?;
            return Ok(TargetSpec::Hamming(HammingSpec { center: center.to_string(), fraction }));
        }
        Err(Error::Config(format!("unrecognized target {text}")))
    }
}

pub fn parse_word(text: &str) -> Result<Vec<Symbol>> {
    let word = text
        .split(',')
        .map(|s| s.trim().parse::<Symbol>().map_err(|_| Error::Config(format!("bad symbol {s:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if word.is_empty() {
        return Err(Error::EmptyWord);
    }
    Ok(word)
}

pub fn format_word(word: &[Symbol]) -> String {
    word.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// An infinite symbol sequence whose rank-n prefixes give cylinder families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Point {
    /// `prefix` followed by `period` repeated forever.
    EventuallyPeriodic { prefix: Vec<Symbol>, period: Vec<Symbol> },
    /// Concatenated base-q expansions of 1, 2, 3, …
    Champernowne { q: usize },
}

impl Point {
    pub fn periodic(period: Vec<Symbol>) -> Self {
        Point::EventuallyPeriodic { prefix: Vec::new(), period }
    }

    pub fn prefix(&self, n: usize) -> Result<Vec<Symbol>> {
        match self {
            Point::EventuallyPeriodic { prefix, period } => {
                if period.is_empty() {
                    return Err(Error::EmptyWord);
                }
                Ok(prefix.iter().chain(period.iter().cycle()).take(n).copied().collect())
            }
            Point::Champernowne { q } => {
                if *q < 2 {
                    return Err(Error::EmptyAlphabet);
                }
                let mut out = Vec::with_capacity(n + 64);
                let mut value = 1u64;
                while out.len() < n {
                    let mut digits = Vec::new();
                    let mut v = value;
                    while v > 0 {
                        digits.push((v % *q as u64) as Symbol);
                        v /= *q as u64;
                    }
                    out.extend(digits.iter().rev());
                    value += 1;
                }
                out.truncate(n);
                Ok(out)
            }
        }
    }

    /// `point:0,1` (periodic), `point:1,1/0` (prefix then period) or `champernowne:q`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.starts_with('{') {
            return serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()));
        }
        if let Some(q) = text.strip_prefix("champernowne:") {
            let q = q.parse().map_err(|_| Error::Config(format!("bad alphabet size {q}")))?;
            return Ok(Point::Champernowne { q });
        }
        let body = text.strip_prefix("point:").unwrap_or(text);
        match body.split_once('/') {
            Some((prefix, period)) => Ok(Point::EventuallyPeriodic {
                prefix: parse_word(prefix)?,
                period: parse_word(period)?,
            }),
            None => Ok(Point::periodic(parse_word(body)?)),
        }
    }
}

/// Rank-indexed targets built around a point: the cylinder `[a₀ … a_{n−1}]`,
/// or its Hamming ball when a fraction is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFamily {
    pub point: Point,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
}

impl TargetFamily {
    pub fn cylinders(point: Point) -> Self {
        Self { point, fraction: None }
    }

    pub fn at(&self, n: usize, q: usize, cap: u128) -> Result<TargetSet> {
        let prefix = self.point.prefix(n)?;
        let set = match self.fraction {
            None => TargetSet::cylinder(prefix)?,
            Some(d) => TargetSet::hamming_ball(prefix, d, q, cap)?,
        };
        set.check_alphabet(q)?;
        Ok(set)
    }
}

impl fmt::Display for TargetSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rank {} with {} word(s)", self.n, self.words.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binom(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
    }

    #[test]
    fn cylinders() {
        let s = TargetSet::cylinder(vec![1, 1, 1]).unwrap();
        assert_eq!((s.rank(), s.cardinality()), (3, 1));
        let s = TargetSet::cylinder(vec![0, 1]).unwrap();
        assert_eq!((s.rank(), s.cardinality()), (2, 1));
        for n in 1..=6 {
            let s = TargetSet::cylinder(vec![0; n]).unwrap();
            assert_eq!((s.rank(), s.cardinality()), (n, 1));
        }
        assert_eq!(TargetSet::cylinder(vec![]).unwrap_err(), Error::EmptyWord);
    }

    #[test]
    fn radius_one_ball() {
        let s = TargetSet::hamming_ball(vec![0, 0, 0], 0.34, 2, DEFAULT_EXPANSION_CAP).unwrap();
        assert_eq!(
            s.words(),
            &[vec![0, 0, 0], vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]
        );
    }

    #[test]
    fn ball_sizes() {
        let s = TargetSet::hamming_ball(vec![0; 10], 0.2, 4, DEFAULT_EXPANSION_CAP).unwrap();
        assert_eq!(s.cardinality(), 436);
        let s = TargetSet::hamming_ball(vec![1, 0, 1], 0.1, 2, DEFAULT_EXPANSION_CAP).unwrap();
        assert_eq!(s.words(), &[vec![1, 0, 1]]);
        let err = TargetSet::hamming_ball(vec![0; 20], 0.5, 4, 1000).unwrap_err();
        assert!(matches!(err, Error::ExpansionTooLarge { .. }));
        assert!(err.is_resource_cap());
        assert_eq!(
            TargetSet::hamming_ball(vec![0; 3], 1.5, 2, 10).unwrap_err(),
            Error::InvalidFraction(1.5)
        );
    }

    #[test]
    fn unions() {
        let a = TargetSet::cylinder(vec![0, 0, 0]).unwrap();
        let b = TargetSet::cylinder(vec![1, 1, 1]).unwrap();
        assert_eq!(TargetSet::union(&[a.clone(), b]).unwrap().cardinality(), 2);
        let ball = TargetSet::hamming_ball(vec![0, 0, 0], 0.34, 2, 100).unwrap();
        assert_eq!(TargetSet::union(&[ball, a]).unwrap().cardinality(), 4);
        let short = TargetSet::cylinder(vec![0, 1]).unwrap();
        let long = TargetSet::cylinder(vec![0, 1, 1]).unwrap();
        assert_eq!(
            TargetSet::union(&[short, long]).unwrap_err(),
            Error::RankMismatch { left: 2, right: 3 }
        );
    }

    #[test]
    fn measures() {
        let u = ProcessModel::uniform(2).unwrap();
        let ball = TargetSet::hamming_ball(vec![0, 0, 0], 0.34, 2, 100).unwrap();
        assert_eq!(ball.measure(&u).unwrap(), 0.5);
        assert_eq!(TargetSet::cylinder(vec![1, 1]).unwrap().measure(&u).unwrap(), 0.25);
        let m = ProcessModel::markov(vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap();
        let mu = TargetSet::cylinder(vec![0, 1]).unwrap().measure(&m).unwrap();
        assert!((mu - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn ball_sizes_match_binomial_sums() {
        for q in 2..=4usize {
            for n in 1..=12usize {
                for radius in 0..=n.min(3) {
                    let expected: u64 =
                        (0..=radius as u64).map(|k| binom(n as u64, k) * (q as u64 - 1).pow(k as u32)).sum();
                    assert_eq!(hamming_ball_size(n, radius, q), expected as u128);
                    let fraction = radius as f64 / n as f64;
                    if fraction < 1.0 && expected < 20_000 {
                        let s = TargetSet::hamming_ball(vec![0; n], fraction, q, 1 << 20).unwrap();
                        assert_eq!(s.cardinality() as u64, expected, "q={q} n={n} r={radius}");
                    }
                }
            }
        }
    }

    #[test]
    fn spec_json_and_shorthand() {
        let spec: TargetSpec = serde_json::from_str(
            r#"{"union":[{"cylinder":"0,0,0"},{"hamming":{"center":"1,1,1","D":0.34}}]}"#,
        )
        .unwrap();
        assert_eq!(spec.resolve(2, 100).unwrap().cardinality(), 5);
        assert_eq!(
            TargetSpec::parse_shorthand("cyl:1,1").unwrap(),
            TargetSpec::Cylinder("1,1".into())
        );
        let ham = TargetSpec::parse_shorthand("ham:0,0,0:0.34").unwrap();
        assert_eq!(ham.resolve(2, 100).unwrap().cardinality(), 4);
        let both = TargetSpec::parse_shorthand("cyl:1,1,1+ham:0,0,0:0.34").unwrap();
        assert_eq!(both.resolve(2, 100).unwrap().cardinality(), 5);
        assert!(TargetSpec::parse_shorthand("cyl:0,x").is_err());
        assert!(matches!(
            TargetSpec::Cylinder("0,3".into()).resolve(2, 10).unwrap_err(),
            Error::SymbolOutOfRange { .. }
        ));
        assert!(serde_json::from_str::<TargetSpec>(r#"{"cylinder":"0","extra":1}"#).is_err());
    }

    #[test]
    fn points() {
        assert_eq!(Point::periodic(vec![0, 1]).prefix(5).unwrap(), vec![0, 1, 0, 1, 0]);
        let p = Point::parse("point:1,1/0").unwrap();
        assert_eq!(p.prefix(4).unwrap(), vec![1, 1, 0, 0]);
        // 1 10 11 100
        assert_eq!(
            Point::parse("champernowne:2").unwrap().prefix(8).unwrap(),
            vec![1, 1, 0, 1, 1, 1, 0, 0]
        );
        assert_eq!(Point::parse("0").unwrap(), Point::periodic(vec![0]));
    }

    proptest! {
        #[test]
        fn union_measure_is_additive_on_disjoint_lists(
            words in proptest::collection::btree_set(proptest::collection::vec(0u8..3, 4), 2..12),
            split in 1usize..11,
        ) {
            let words: Vec<_> = words.into_iter().collect();
            let split = split.min(words.len() - 1);
            let m = ProcessModel::iid(vec![0.2, 0.3, 0.5]).unwrap();
            let a = TargetSet::from_words(words[..split].to_vec()).unwrap();
            let b = TargetSet::from_words(words[split..].to_vec()).unwrap();
            let u = TargetSet::union(&[a.clone(), b.clone()]).unwrap();
            let (ma, mb, mu) = (a.measure(&m).unwrap(), b.measure(&m).unwrap(), u.measure(&m).unwrap());
            prop_assert!((mu - (ma + mb)).abs() < 1e-14);
            let overlap = TargetSet::union(&[a.clone(), u.clone()]).unwrap();
            prop_assert!(overlap.measure(&m).unwrap() <= ma + mu + 1e-14);
        }

        #[test]
        fn ball_measure_monotone_in_fraction(
            center in proptest::collection::vec(0u8..3, 3..8),
            steps in proptest::collection::vec(0.0f64..0.99, 2..6),
        ) {
            let m = ProcessModel::iid(vec![0.5, 0.3, 0.2]).unwrap();
            let mut steps = steps;
            steps.sort_by(f64::total_cmp);
            let mut prev = 0.0;
            for d in steps {
                let mu = TargetSet::hamming_ball(center.clone(), d, 3, 1 << 20).unwrap().measure(&m).unwrap();
                prop_assert!(mu + 1e-15 >= prev);
                prev = mu;
            }
        }
    }
}
