//! Rescaled laws `F_A(t) = μ(λμτ ≤ t)` and `G_A(s) = λ⁻¹ μ(λμτ > s | A)`,
//! the relations tying them together, and per-rank convergence diagnostics.
//!
//! Laws built from tails are step functions on the grid `t = k·λμ(A)`.
//! Integrals of `G` are summed exactly over the flats, and suprema against
//! the exponential are taken at the jump points, where they are attained.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{TailDistribution, TailEngine, TailKind};
use crate::process::ProcessModel;
use crate::scaling::{analyze, lambda_cap};
use crate::targets::TargetSet;

pub const DEFAULT_RETURN_START: f64 = 0.05;
pub const RELATION_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LawRole {
    /// Rescaled hitting-time distribution function.
    F,
    /// Normalized rescaled return-time tail.
    G,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// Value `values[k]` on `[k·scale, (k+1)·scale)`; `prefix[k]` = Σ_{j<k} values[j]·scale.
    Step { values: Vec<f64>, prefix: Vec<f64>, scale: f64 },
    /// `F = 1 − e^{−t}` or `G = e^{−s}`.
    Exponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RescaledLaw {
    role: LawRole,
    shape: Shape,
    lambda: f64,
    mu_a: f64,
}

fn check_scale(lambda: f64, mu_a: f64) -> Result<f64> {
    let scale = lambda * mu_a;
    if !(lambda > 0.0) || !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Config(format!("rescaling needs λ > 0 and μ(A) > 0, got {lambda}, {mu_a}")));
    }
    Ok(scale)
}

fn step(values: Vec<f64>, scale: f64) -> Shape {
    let mut prefix = Vec::with_capacity(values.len() + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for v in &values {
        acc += v * scale;
        prefix.push(acc);
    }
    Shape::Step { values, prefix, scale }
}

/// `F(t) = 1 − H(⌊t/(λμ)⌋)`.
pub fn make_f(hitting: &TailDistribution, lambda: f64, mu_a: f64) -> Result<RescaledLaw> {
    if hitting.kind() != TailKind::Hitting {
        return Err(Error::WrongTailKind { expected: "hitting" });
    }
    let scale = check_scale(lambda, mu_a)?;
    let values = hitting.values().iter().map(|h| 1.0 - h).collect();
    Ok(RescaledLaw { role: LawRole::F, shape: step(values, scale), lambda, mu_a })
}

/// `G(s) = H_ret(⌊s/(λμ)⌋) / λ`.
pub fn make_g(returning: &TailDistribution, lambda: f64, mu_a: f64) -> Result<RescaledLaw> {
    if returning.kind() != TailKind::Return {
        return Err(Error::WrongTailKind { expected: "return" });
    }
    let scale = check_scale(lambda, mu_a)?;
    let values = returning.values().iter().map(|h| h / lambda).collect();
    Ok(RescaledLaw { role: LawRole::G, shape: step(values, scale), lambda, mu_a })
}

/// The limiting pair `F = 1 − e^{−t}`, `G = e^{−s}` with λ = 1.
pub fn exponential_pair(mu_a: f64) -> (RescaledLaw, RescaledLaw) {
    let law = |role| RescaledLaw { role, shape: Shape::Exponential, lambda: 1.0, mu_a };
    (law(LawRole::F), law(LawRole::G))
}

impl RescaledLaw {
    pub fn role(&self) -> LawRole {
        self.role
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu_a(&self) -> f64 {
        self.mu_a
    }

    /// Supremum of the times at which the law is known.
    pub fn domain_end(&self) -> f64 {
        match &self.shape {
            Shape::Step { values, scale, .. } => values.len() as f64 * scale,
            Shape::Exponential => f64::INFINITY,
        }
    }

    fn index(&self, t: f64) -> Result<(usize, f64, &[f64], &[f64])> {
        let Shape::Step { values, prefix, scale } = &self.shape else {
            unreachable!("index is only used for step laws")
        };
        if !(t >= 0.0) {
            return Err(Error::InvalidGrid(format!("negative time {t}")));
        }
        let mut k = (t / scale).floor() as usize;
        if (k + 1) as f64 * scale <= t {
            k += 1;
        }
        if k >= values.len() {
            return Err(Error::HorizonTooShort { needed: k, available: values.len() - 1 });
        }
        Ok((k, *scale, values, prefix))
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        match &self.shape {
            Shape::Exponential => Ok(match self.role {
                LawRole::F => 1.0 - (-t).exp(),
                LawRole::G => (-t).exp(),
            }),
            Shape::Step { .. } => {
                let (k, _, values, _) = self.index(t)?;
                Ok(values[k])
            }
        }
    }

    /// `∫₀ᵗ` of the law, exact on step functions.
    pub fn integral(&self, t: f64) -> Result<f64> {
        match &self.shape {
            Shape::Exponential => Ok(match self.role {
                LawRole::F => t - (1.0 - (-t).exp()),
                LawRole::G => 1.0 - (-t).exp(),
            }),
            Shape::Step { .. } => {
                let (k, scale, values, prefix) = self.index(t)?;
                Ok(prefix[k] + (t - k as f64 * scale) * values[k])
            }
        }
    }

    /// Right limit at zero.
    pub fn at_zero_plus(&self) -> f64 {
        match &self.shape {
            Shape::Exponential => match self.role {
                LawRole::F => 0.0,
                LawRole::G => 1.0,
            },
            Shape::Step { values, .. } => values[0],
        }
    }
}

fn same_scaling(f: &RescaledLaw, g: &RescaledLaw) -> Result<()> {
    if f.role != LawRole::F || g.role != LawRole::G {
        return Err(Error::LawMismatch);
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-15 * a.abs().max(b.abs());
    if !close(f.lambda, g.lambda) || !close(f.mu_a, g.mu_a) {
        return Err(Error::LawMismatch);
    }
    Ok(())
}

/// `max_s (G(s) − 1/s)` over the grid; non-positive when `G(s) ≤ 1/s` holds.
pub fn kac_violation(g: &RescaledLaw, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::GridEmpty);
    }
    grid.iter().try_fold(f64::NEG_INFINITY, |worst, &s| {
        if !(s > 0.0) {
            return Err(Error::InvalidGrid(format!("Kac bound needs s > 0, got {s}")));
        }
        Ok(worst.max(g.eval(s)? - 1.0 / s))
    })
}

/// Every grid point of `(0, end)` where a step law with this scale jumps,
/// plus midpoints of each flat.
pub fn law_grid(law: &RescaledLaw, limit: usize) -> Vec<f64> {
    match &law.shape {
        Shape::Step { values, scale, .. } => {
            let stride = (values.len() / limit.max(1)).max(1);
            (0..values.len())
                .step_by(stride)
                .flat_map(|k| [k as f64 * scale, (k as f64 + 0.5) * scale])
                .filter(|&t| t > 0.0)
                .collect()
        }
        Shape::Exponential => (1..=limit).map(|i| i as f64 * 10.0 / limit as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichResult {
    /// Largest signed excess over either side of
    /// `∫G − μ(A) ≤ F(t′) − F(t) ≤ ∫G + μ(A)`; ≤ 0 means both hold.
    pub worst_violation: f64,
    pub worst_pair: (f64, f64),
    pub pass: bool,
}

/// Two-sided bound on increments of `F` by integrals of `G`.
pub fn check_sandwich(
    f: &RescaledLaw,
    g: &RescaledLaw,
    mu_a: f64,
    pairs: &[(f64, f64)],
) -> Result<SandwichResult> {
    same_scaling(f, g)?;
    if pairs.is_empty() {
        return Err(Error::GridEmpty);
    }
    let mut worst = (f64::NEG_INFINITY, (0.0, 0.0));
    for &(t, t2) in pairs {
        if !(t <= t2) {
            return Err(Error::InvalidGrid(format!("need t ≤ t′, got ({t}, {t2})")));
        }
        let increment = f.eval(t2)? - f.eval(t)?;
        let area = g.integral(t2)? - g.integral(t)?;
        let violation = (area - mu_a - increment).max(increment - area - mu_a);
        if violation > worst.0 {
            worst = (violation, (t, t2));
        }
    }
    Ok(SandwichResult { worst_violation: worst.0, worst_pair: worst.1, pass: worst.0 <= RELATION_SLACK })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralResidual {
    pub t: f64,
    pub f: f64,
    pub integral_g: f64,
    /// `|F(t) − F(0+) − ∫₀ᵗ G|`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralRelation {
    pub rows: Vec<IntegralResidual>,
    pub max_residual: f64,
    /// `max_residual ≤ μ(A)` (plus slack).
    pub within_measure: bool,
    /// `F(t) ≤ ∫₀ᵗ G ≤ F(t) + μ(A)` on every row.
    pub ordered: bool,
}

/// Residuals of `F(t) = F(0+) + ∫₀ᵗ G` on a grid.
pub fn check_integral_relation(
    f: &RescaledLaw,
    g: &RescaledLaw,
    grid: &[f64],
) -> Result<IntegralRelation> {
    same_scaling(f, g)?;
    let f0 = f.at_zero_plus();
    let rows = grid
        .iter()
        .map(|&t| {
            let (fv, ig) = (f.eval(t)?, g.integral(t)?);
            Ok(IntegralResidual { t, f: fv, integral_g: ig, residual: (fv - f0 - ig).abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let within_measure = max_residual <= f.mu_a + RELATION_SLACK;
    let ordered = rows
        .iter()
        .all(|r| r.f <= r.integral_g + RELATION_SLACK && r.integral_g <= r.f + f.mu_a + RELATION_SLACK);
    Ok(IntegralRelation { rows, max_residual, within_measure, ordered })
}

/// `sup_{t ≥ start} |tail(⌊t/c⌋)/norm − e^{−t}|` over the known range, and
/// the residual bounding everything past it.
fn sup_against_exponential(values: &[f64], norm: f64, scale: f64, start: f64) -> (f64, f64) {
    let mut sup: f64 = 0.0;
    for (k, v) in values.iter().enumerate() {
        let right = (k + 1) as f64 * scale;
        if right <= start {
            continue;
        }
        let left = (k as f64 * scale).max(start);
        let v = v / norm;
        sup = sup.max((v - (-left).exp()).abs()).max((v - (-right).exp()).abs());
    }
    let end = values.len() as f64 * scale;
    let residual = (values.last().copied().unwrap_or(0.0) / norm).max((-end).exp());
    (sup, residual)
}

/// `sup_t |1 − F(t) − e^{−t}|` for a hitting tail rescaled by `λμ`.
pub fn hitting_deviation(hitting: &TailDistribution, lambda: f64, mu_a: f64) -> Result<(f64, f64)> {
    let scale = check_scale(lambda, mu_a)?;
    Ok(sup_against_exponential(hitting.values(), 1.0, scale, 0.0))
}

/// `sup_{t ≥ start} |G(t) − e^{−t}|` for a return tail rescaled by `λμ`.
pub fn return_deviation(
    returning: &TailDistribution,
    lambda: f64,
    mu_a: f64,
    start: f64,
) -> Result<(f64, f64)> {
    let scale = check_scale(lambda, mu_a)?;
    Ok(sup_against_exponential(returning.values(), lambda, scale, start))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub n: usize,
    #[serde(rename = "mu_A")]
    pub mu_a: f64,
    pub lambda: f64,
    pub nominal: bool,
    pub delta: f64,
    pub lambda_cap: f64,
    /// `μ(τ ≤ n)`.
    pub short_hits: f64,
    #[serde(rename = "D_hit")]
    pub d_hit: f64,
    #[serde(rename = "D_ret")]
    pub d_ret: f64,
    /// `12√(2μ(τ ≤ n) + α̂(n)) + 2μ(A_n)`.
    pub bound: f64,
    pub truncation: f64,
}

/// Per-rank deviations of the rescaled hitting and return laws from the
/// exponential, next to their companion bound.
pub fn convergence_diagnostics<F>(
    model: &ProcessModel,
    family: F,
    ranks: impl IntoIterator<Item = usize>,
    return_start: f64,
) -> Result<Vec<DiagnosticRow>>
where
    F: Fn(usize) -> Result<TargetSet>,
{
    ranks
        .into_iter()
        .map(|n| {
            let set = family(n)?;
            diagnose(model, &set, return_start)
        })
        .collect()
}

pub fn diagnose(model: &ProcessModel, set: &TargetSet, return_start: f64) -> Result<DiagnosticRow> {
    let analysis = analyze(model, set)?;
    let cert = &analysis.certificate;
    let lambda = analysis.lambda();
    let mut engine = TailEngine::new(model, set, TailKind::Return)?;
    engine.extend_to(analysis.hitting.horizon());
    let returning = engine.tail();
    let (d_hit, hit_res) = hitting_deviation(&analysis.hitting, lambda, cert.mu_a)?;
    let (d_ret, ret_res) = return_deviation(&returning, lambda, cert.mu_a, return_start)?;
    Ok(DiagnosticRow {
        n: set.rank(),
        mu_a: cert.mu_a,
        lambda,
        nominal: cert.lambda.is_some_and(|l| l.nominal),
        delta: cert.delta,
        lambda_cap: lambda_cap(cert.delta),
        short_hits: analysis.hitting.prob_le(set.rank())?,
        d_hit,
        d_ret,
        bound: cert.bound() + 2.0 * cert.mu_a,
        truncation: hit_res.max(ret_res),
    })
}
