//! Seeded Monte Carlo estimation of hitting and return times.
//!
//! Trajectory `i` of a batch with master seed `s` draws from a ChaCha8
//! generator seeded with [`trajectory_seed`]`(s, i)`, the `(i+1)`-th output
//! of a SplitMix64 stream started at `s`:
//!
//! ```text
//! z = s + (i + 1) · 0x9E3779B97F4A7C15          (wrapping)
//! z = (z ^ (z >> 30)) · 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) · 0x94D049BB133111EB
//! seed_i = z ^ (z >> 31)
//! ```
//!
//! Batches therefore do not depend on thread scheduling, and a trajectory's
//! times agree across runs that differ only in the censoring cap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::automaton::{OccurrenceAutomaton, ROOT};
use crate::error::{Error, Result};
use crate::exact::{TailDistribution, TailKind, TailSource};
use crate::process::{ProcessModel, Symbol};
use crate::targets::{HammingBall, TargetSet};

pub const DEFAULT_REJECTION_BUDGET: u64 = 1_000_000;

pub fn trajectory_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Censoring cap `⌈50 / (λ·μ(A))⌉`.
pub fn default_censor_cap(mu_a: f64, lambda_guess: f64) -> u64 {
    (50.0 / (lambda_guess * mu_a)).ceil().clamp(1.0, 1e12) as u64
}

/// How window membership is decided during a scan.
#[derive(Debug, Clone)]
pub enum Membership {
    Explicit(TargetSet),
    /// Unexpanded Hamming ball; return sampling uses rejection.
    Hamming(HammingBall),
}

impl Membership {
    pub fn rank(&self) -> usize {
        match self {
            Membership::Explicit(set) => set.rank(),
            Membership::Hamming(ball) => ball.center.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    /// Hitting or return time; equals the cap when censored.
    pub time: u64,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub kind: TailKind,
    pub seed: u64,
    pub censor_cap: u64,
    pub samples: Vec<Sample>,
    /// Rejected initial windows (return sampling by rejection only).
    pub rejections: u64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn censored(&self) -> usize {
        self.samples.iter().filter(|s| s.censored).count()
    }

    /// Accepted initial windows over all drawn windows.
    pub fn acceptance_rate(&self) -> f64 {
        self.samples.len() as f64 / (self.samples.len() as u64 + self.rejections) as f64
    }
}

fn draw(probs: &[f64], rng: &mut ChaCha8Rng) -> Symbol {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut fallback = 0;
    for (s, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            fallback = s;
            if u < acc {
                return s as Symbol;
            }
        }
    }
    fallback as Symbol
}

/// O(1)-memory window tracker.
enum Scanner<'a> {
    Automaton { automaton: &'a OccurrenceAutomaton, state: usize },
    Ring { ball: &'a HammingBall, window: Vec<Symbol>, head: usize, filled: usize },
}

impl Scanner<'_> {
    /// Feeds a symbol; true if the window ending here is in the target.
    fn feed(&mut self, s: Symbol) -> bool {
        match self {
            Scanner::Automaton { automaton, state } => {
                *state = automaton.step(*state, s);
                automaton.is_accepting(*state)
            }
            Scanner::Ring { ball, window, head, filled } => {
                let n = window.len();
                window[*head] = s;
                *head = (*head + 1) % n;
                *filled = (*filled + 1).min(n);
                *filled == n
                    && (0..n)
                        .filter(|&i| window[(*head + i) % n] != ball.center[i])
                        .count()
                        <= ball.radius
            }
        }
    }
}

struct Sampler<'a> {
    model: &'a ProcessModel,
    membership: &'a Membership,
    automaton: Option<OccurrenceAutomaton>,
    /// Cumulative conditional law over explicit target words.
    word_cdf: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(model: &'a ProcessModel, membership: &'a Membership, kind: TailKind) -> Result<Self> {
        let q = model.alphabet_size();
        let (automaton, word_cdf) = match membership {
            Membership::Explicit(set) => {
                set.check_alphabet(q)?;
                let mut cdf = Vec::new();
                if kind == TailKind::Return {
                    let mut acc = 0.0;
                    for w in set.words() {
                        acc += model.cylinder_measure(w)?;
                        cdf.push(acc);
                    }
                    if !(acc > 0.0) {
                        return Err(Error::ZeroMeasureSet);
                    }
                    cdf.iter_mut().for_each(|c| *c /= acc);
                }
                (Some(OccurrenceAutomaton::build(set, q)), cdf)
            }
            Membership::Hamming(ball) => {
                model.check_word(&ball.center)?;
                (None, Vec::new())
            }
        };
        Ok(Self { model, membership, automaton, word_cdf })
    }

    fn scanner(&self) -> Scanner<'_> {
        match (self.membership, &self.automaton) {
            (Membership::Explicit(_), Some(automaton)) => Scanner::Automaton { automaton, state: ROOT },
            (Membership::Hamming(ball), _) => Scanner::Ring {
                ball,
                window: vec![0; ball.center.len()],
                head: 0,
                filled: 0,
            },
            _ => unreachable!("explicit membership always carries an automaton"),
        }
    }

    /// Scans windows at positions `1..=cap` after the first window.
    fn scan(&self, scanner: &mut Scanner<'_>, mut last: Symbol, rng: &mut ChaCha8Rng, cap: u64) -> Sample {
        for k in 1..=cap {
            let s = draw(self.model.row(last as usize), rng);
            last = s;
            if scanner.feed(s) {
                return Sample { time: k, censored: false };
            }
        }
        Sample { time: cap, censored: true }
    }

    fn hitting(&self, rng: &mut ChaCha8Rng, cap: u64) -> Sample {
        let n = self.membership.rank();
        let mut scanner = self.scanner();
        let mut last = draw(self.model.stationary(), rng);
        scanner.feed(last);
        for _ in 1..n {
            last = draw(self.model.row(last as usize), rng);
            scanner.feed(last);
        }
        self.scan(&mut scanner, last, rng, cap)
    }

    /// Returns the sample and the number of rejected initial windows.
    fn returning(&self, rng: &mut ChaCha8Rng, cap: u64, budget: u64) -> Result<(Sample, u64)> {
        let mut scanner = self.scanner();
        match self.membership {
            Membership::Explicit(set) => {
                let u: f64 = rng.random();
                let index = self.word_cdf.partition_point(|&c| c <= u).min(self.word_cdf.len() - 1);
                let word = &set.words()[index];
                for &s in word {
                    scanner.feed(s);
                }
                let last = *word.last().expect("non-empty word");
                Ok((self.scan(&mut scanner, last, rng, cap), 0))
            }
            Membership::Hamming(ball) => {
                let n = ball.center.len();
                let mut window = vec![0; n];
                for rejected in 0..=budget {
                    window[0] = draw(self.model.stationary(), rng);
                    for i in 1..n {
                        window[i] = draw(self.model.row(window[i - 1] as usize), rng);
                    }
                    if ball.contains(&window) {
                        for &s in &window {
                            scanner.feed(s);
                        }
                        return Ok((self.scan(&mut scanner, window[n - 1], rng, cap), rejected));
                    }
                }
                Err(Error::RejectionBudgetExceeded { budget })
            }
        }
    }
}

/// `count` stationary trajectories, each scanned for the first target window
/// at position ≥ 1 and censored at `censor_cap`.
pub fn sample_hitting(
    model: &ProcessModel,
    membership: &Membership,
    count: usize,
    seed: u64,
    censor_cap: u64,
) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    let sampler = Sampler::new(model, membership, TailKind::Hitting)?;
    let samples = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(seed, i));
            sampler.hitting(&mut rng, censor_cap)
        })
        .collect();
    Ok(SampleBatch { kind: TailKind::Hitting, seed, censor_cap, samples, rejections: 0 })
}

/// Like [`sample_hitting`] but started from the conditional law on the target.
/// Explicit sets are conditioned directly; Hamming predicates by rejection
/// with `rejection_budget` draws per trajectory.
pub fn sample_return(
    model: &ProcessModel,
    membership: &Membership,
    count: usize,
    seed: u64,
    censor_cap: u64,
    rejection_budget: u64,
) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    let sampler = Sampler::new(model, membership, TailKind::Return)?;
    let results: Vec<(Sample, u64)> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(seed, i));
            sampler.returning(&mut rng, censor_cap, rejection_budget)
        })
        .collect::<Result<_>>()?;
    let rejections = results.iter().map(|(_, r)| r).sum();
    let samples = results.into_iter().map(|(s, _)| s).collect();
    Ok(SampleBatch { kind: TailKind::Return, seed, censor_cap, samples, rejections })
}

/// Samples with the default cap `⌈50/μ(A)⌉`; if anything was censored, the
/// cap is re-derived once from the observed mean and the batch redrawn.
pub fn sample_adaptive(
    model: &ProcessModel,
    membership: &Membership,
    kind: TailKind,
    count: usize,
    seed: u64,
    mu_a: f64,
) -> Result<SampleBatch> {
    if !(mu_a > 0.0) {
        return Err(Error::ZeroMeasureSet);
    }
    let run = |cap| match kind {
        TailKind::Hitting => sample_hitting(model, membership, count, seed, cap),
        TailKind::Return => {
            sample_return(model, membership, count, seed, cap, DEFAULT_REJECTION_BUDGET)
        }
    };
    let cap = default_censor_cap(mu_a, 1.0);
    let batch = run(cap)?;
    if batch.censored() == 0 {
        return Ok(batch);
    }
    let mean = batch.samples.iter().map(|s| s.time as f64).sum::<f64>() / batch.len() as f64;
    let lambda_hat = 1.0 / (mu_a * mean);
    let adapted = default_censor_cap(mu_a, lambda_hat);
    if adapted > cap { run(adapted) } else { Ok(batch) }
}

/// `H_emp(k)` = fraction of samples exceeding `k`, for `k = 0..=cap`.
pub fn empirical_tail(batch: &SampleBatch, mu_a: f64) -> Result<TailDistribution> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let cap = batch.censor_cap as usize;
    let mut hits_at = vec![0u64; cap + 1];
    for s in batch.samples.iter().filter(|s| !s.censored) {
        hits_at[s.time as usize] += 1;
    }
    let total = batch.len() as f64;
    let mut alive = batch.len() as u64;
    let values = hits_at
        .iter()
        .map(|&h| {
            alive -= h;
            alive as f64 / total
        })
        .collect();
    TailDistribution::new(
        batch.kind,
        values,
        mu_a,
        TailSource::Empirical { samples: batch.len(), seed: batch.seed },
    )
}

/// `max_k |H_a(k) − H_b(k)|` over a common horizon.
pub fn ks_distance(a: &TailDistribution, b: &TailDistribution) -> Result<f64> {
    if a.horizon() != b.horizon() {
        return Err(Error::HorizonMismatch { left: a.horizon(), right: b.horizon() });
    }
    Ok(a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}
