//! Scale selection, the normalizing constant λ(A), and the explicit
//! exponential-approximation bound.
//!
//! With `d = 2μ(τ ≤ n) + α̂(n)` and `δ = 3√d`, the quantitative regime is
//! `δ < 1/4`. There the scale `s` is the smallest integer `> 2n` with
//! `μ(τ ≤ s − 2n) ≥ √d`, and `λ(A) = −ln H(s − 2n) / (s·μ(A))`. Every
//! inequality the scale is supposed to satisfy is recomputed from the tail
//! and recorded in the certificate's `checks`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{TailDistribution, TailEngine, TailKind, TailSource};
use crate::process::ProcessModel;
use crate::targets::{Point, TargetSet};

/// Slack for floating-point comparisons in recorded checks.
pub const CHECK_SLACK: f64 = 1e-12;
/// Tail level at which the unchecked `k > K` are bounded by the truncation residual.
pub const TRUNCATION_LEVEL: f64 = 1e-4;
pub const HORIZON_HARD_CAP: usize = 100_000_000;
/// DKW 95% constant.
pub const DKW_95: f64 = 1.36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// δ < 1/4: the scale exists and λ is defined by formula.
    Quantitative,
    /// δ ≥ 1/4: the bound is at least 3 and says nothing.
    Trivial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambda {
    pub value: f64,
    /// Set in the trivial regime, where λ = 1 is a placeholder.
    pub nominal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleCertificate {
    pub n: usize,
    pub alpha_n: f64,
    pub d: f64,
    pub delta: f64,
    pub regime: Regime,
    pub s: Option<usize>,
    pub lambda: Option<Lambda>,
    #[serde(rename = "mu_A")]
    pub mu_a: f64,
    pub source: TailSource,
    pub checks: BTreeMap<String, bool>,
}

impl ScaleCertificate {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.values().all(|&ok| ok)
    }

    pub fn sqrt_d(&self) -> f64 {
        self.d.sqrt()
    }

    /// The companion bound `12√d`.
    pub fn bound(&self) -> f64 {
        12.0 * self.d.sqrt()
    }

    pub fn lambda_value(&self) -> Option<f64> {
        self.lambda.map(|l| l.value)
    }

    pub fn with_lambda(mut self, lambda: Lambda) -> Self {
        if !lambda.nominal {
            let cap = lambda_cap(self.delta);
            self.checks.insert("lambda_positive".into(), lambda.value > 0.0);
            self.checks
                .insert("lambda_le_inv_one_minus_delta".into(), lambda.value <= cap + CHECK_SLACK);
            self.checks.insert("lambda_le_2".into(), lambda.value <= 2.0 + CHECK_SLACK);
        }
        self.lambda = Some(lambda);
        self
    }
}

/// `1/(1 − δ)`, infinite once δ ≥ 1.
pub fn lambda_cap(delta: f64) -> f64 {
    if delta < 1.0 { 1.0 / (1.0 - delta) } else { f64::INFINITY }
}

/// Computes `d`, `δ` and, in the quantitative regime, the scale `s` from a
/// hitting tail. Fails with [`Error::HorizonTooShort`] when the tail does not
/// reach far enough to locate and check `s`.
pub fn scale_search(tail: &TailDistribution, n: usize, alpha_n: f64) -> Result<ScaleCertificate> {
    if tail.kind() != TailKind::Hitting {
        return Err(Error::WrongTailKind { expected: "hitting" });
    }
    if n == 0 {
        return Err(Error::HorizonNonPositive);
    }
    let short = tail.prob_le(n)?;
    let d = 2.0 * short + alpha_n;
    let delta = 3.0 * d.sqrt();
    let mut cert = ScaleCertificate {
        n,
        alpha_n,
        d,
        delta,
        regime: Regime::Trivial,
        s: None,
        lambda: None,
        mu_a: tail.mu_a(),
        source: tail.source(),
        checks: BTreeMap::new(),
    };
    if delta >= 0.25 {
        return Ok(cert);
    }
    cert.regime = Regime::Quantitative;
    let root = d.sqrt();
    let offset = (1..=tail.horizon())
        .find(|&j| 1.0 - tail.values()[j] >= root)
        .ok_or(Error::HorizonTooShort { needed: 2 * tail.horizon(), available: tail.horizon() })?;
    let s = offset + 2 * n;
    let at_s = tail.prob_le(s)?;
    let at_offset = tail.prob_le(offset)?;
    let before = tail.prob_le(offset - 1)?;
    let ratio = (tail.prob_le(2 * n)? + alpha_n) / at_offset;

    let checks = &mut cert.checks;
    checks.insert("s_gt_2n".into(), s > 2 * n);
    checks.insert("reaches_sqrt_d".into(), at_offset >= root);
    checks.insert("minimal_s".into(), before < root);
    checks.insert("short_hits_le_sqrt_d_plus_2d".into(), at_s <= root + 2.0 * d + CHECK_SLACK);
    checks.insert("short_hits_le_delta".into(), at_s <= delta + CHECK_SLACK);
    checks.insert("ratio_le_sqrt_d".into(), ratio <= root + CHECK_SLACK);
    checks.insert("ratio_le_delta".into(), ratio <= delta + CHECK_SLACK);
    cert.s = Some(s);
    Ok(cert)
}

/// `−ln H(s − 2n) / (s·μ(A))` given the tail value at `s − 2n`.
pub fn lambda_formula(tail_at_offset: f64, s: usize, mu_a: f64) -> f64 {
    -tail_at_offset.ln() / (s as f64 * mu_a)
}

/// λ(A) for a certificate; `1` flagged nominal in the trivial regime.
pub fn compute_lambda(tail: &TailDistribution, cert: &ScaleCertificate, mu_a: f64) -> Result<Lambda> {
    let s = match (cert.regime, cert.s) {
        (Regime::Trivial, _) => return Ok(Lambda { value: 1.0, nominal: true }),
        (Regime::Quantitative, Some(s)) => s,
        (Regime::Quantitative, None) => return Err(Error::NotQuantitative),
    };
    if !(mu_a > 0.0) {
        return Err(Error::ZeroMeasureSet);
    }
    let h = tail.at(s - 2 * cert.n)?;
    if h <= 0.0 {
        return Err(Error::ZeroTail);
    }
    Ok(Lambda { value: lambda_formula(h, s, mu_a), nominal: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub sup_dev: f64,
    pub bound: f64,
    /// Extra room for empirical tails: `2·1.36/√N`.
    pub sampling_allowance: f64,
    /// `max(H(K), e^{−λμK})`, bounding every deviation at `k > K`.
    pub truncation_residual: f64,
    pub pass: bool,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

/// Compares `H(k)` with `e^{−λμ(A)k}` on `0..=K`.
pub fn verify_exponential_bound(
    tail: &TailDistribution,
    lambda: f64,
    mu_a: f64,
    cert: &ScaleCertificate,
) -> Result<VerificationReport> {
    let rate = lambda * mu_a;
    let horizon = tail.horizon();
    let last_exp = (-rate * horizon as f64).exp();
    let last = tail.values()[horizon];
    if last > TRUNCATION_LEVEL || last_exp > TRUNCATION_LEVEL {
        let needed = ((TRUNCATION_LEVEL.recip().ln() / rate).ceil() as usize).max(2 * horizon);
        return Err(Error::HorizonTooShort { needed, available: horizon });
    }
    let residuals: Vec<f64> = tail
        .values()
        .iter()
        .enumerate()
        .map(|(k, h)| (h - (-rate * k as f64).exp()).abs())
        .collect();
    let sup_dev = residuals.iter().copied().fold(0.0, f64::max);
    let sampling_allowance = match tail.source() {
        TailSource::Empirical { samples, .. } => 2.0 * DKW_95 / (samples as f64).sqrt(),
        _ => 0.0,
    };
    let truncation_residual = last.max(last_exp);
    let bound = cert.bound();
    let pass = sup_dev <= bound + sampling_allowance + truncation_residual;
    Ok(VerificationReport { sup_dev, bound, sampling_allowance, truncation_residual, pass, residuals })
}

/// Exact tail, certificate, λ and verification for one target, with the
/// tail horizon doubled until every step has the room it needs.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub hitting: TailDistribution,
    pub certificate: ScaleCertificate,
    pub report: VerificationReport,
}

impl Analysis {
    pub fn lambda(&self) -> f64 {
        self.certificate.lambda_value().expect("analysis always sets lambda")
    }
}

fn grow(engine: &mut TailEngine, needed: usize) -> Result<()> {
    let mut target = engine.horizon().max(1);
    while target < needed {
        target *= 2;
    }
    if target > HORIZON_HARD_CAP {
        return Err(Error::HorizonCapExceeded { cap: HORIZON_HARD_CAP });
    }
    engine.extend_to(target);
    Ok(())
}

pub fn analyze(model: &ProcessModel, set: &TargetSet) -> Result<Analysis> {
    let n = set.rank();
    let mut engine = TailEngine::new(model, set, TailKind::Hitting)?;
    let mu_a = set.measure(model)?;
    if !(mu_a > 0.0) {
        return Err(Error::ZeroMeasureSet);
    }
    let alpha_n = model.alpha_bound(n as u64)?;
    engine.extend_to(64.max(4 * n));

    let certificate = loop {
        match scale_search(&engine.tail(), n, alpha_n) {
            Ok(cert) => break cert,
            Err(Error::HorizonTooShort { needed, .. }) => grow(&mut engine, needed)?,
            Err(e) => return Err(e),
        }
    };
    let lambda = compute_lambda(&engine.tail(), &certificate, mu_a)?;
    let certificate = certificate.with_lambda(lambda);

    let report = loop {
        match verify_exponential_bound(&engine.tail(), lambda.value, mu_a, &certificate) {
            Ok(report) => break report,
            Err(Error::HorizonTooShort { needed, .. }) => grow(&mut engine, needed)?,
            Err(e) => return Err(e),
        }
    };
    Ok(Analysis { hitting: engine.tail(), certificate, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub n: usize,
    #[serde(rename = "mu_A")]
    pub mu_a: f64,
    pub lambda: f64,
    pub nominal: bool,
    pub delta: f64,
    pub lambda_cap: f64,
    pub regime: Regime,
}

/// λ(A_n) along the cylinder prefixes `A_n = [a₀ … a_{n−1}]` of a point.
pub fn lambda_trajectory(
    model: &ProcessModel,
    point: &Point,
    ranks: impl IntoIterator<Item = usize>,
) -> Result<Vec<TrajectoryRow>> {
    ranks
        .into_iter()
        .map(|n| {
            let set = TargetSet::cylinder(point.prefix(n)?)?;
            let analysis = analyze(model, &set)?;
            let cert = &analysis.certificate;
            let lambda = cert.lambda.expect("set by analyze");
            Ok(TrajectoryRow {
                n,
                mu_a: cert.mu_a,
                lambda: lambda.value,
                nominal: lambda.nominal,
                delta: cert.delta,
                lambda_cap: lambda_cap(cert.delta),
                regime: cert.regime,
            })
        })
        .collect()
}
