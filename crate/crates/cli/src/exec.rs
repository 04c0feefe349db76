use std::fmt::Write;

use raretime::exact::{hitting_tail, return_tail, TailEngine};
use raretime::limitlaw::{
    check_integral_relation, check_sandwich, hitting_deviation, kac_violation, law_grid, make_f,
    make_g, return_deviation, convergence_diagnostics,
};
use raretime::mc::{empirical_tail, ks_distance, sample_adaptive, sample_hitting, sample_return, Membership};
use raretime::mc::DEFAULT_REJECTION_BUDGET;
use raretime::rarity::{
    cardinality_rate, hamming_base, hamming_kappa, hamming_kappa_bound, rarity_row, solve_d0,
};
use raretime::report::{batch_csv, diagnostics_csv, json, rarity_csv, tail_csv};
use raretime::scaling::{analyze, lambda_cap, DKW_95};
use raretime::targets::TargetFamily;
use raretime::{Error, ProcessModel, Result, TailKind, TargetSet, TargetSpec};
use serde_json::json;

use crate::config::{Analysis, Format, RunConfig};

/// A rendered report and the assertions it failed (checked only under `assert`).
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: String,
    pub failures: Vec<String>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    model: Option<ProcessModel>,
    failures: Vec<String>,
}

impl Ctx<'_> {
    fn model(&self) -> Result<&ProcessModel> {
        self.model.as_ref().ok_or_else(|| Error::Config("this analysis needs --model".into()))
    }

    fn target(&self, spec: &TargetSpec) -> Result<TargetSet> {
        spec.resolve(self.model()?.alphabet_size(), self.cfg.expansion_cap)
    }

    fn family(&self, family: &TargetFamily, n: usize, q: usize) -> Result<TargetSet> {
        family.at(n, q, self.cfg.expansion_cap)
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn csv(&self) -> bool {
        self.cfg.format == Format::Csv
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let model = match &cfg.model {
        Some(spec) => Some(spec.validate()?),
        None if cfg.analysis.needs_model() => {
            return Err(Error::Config("this analysis needs --model".into()));
        }
        None => None,
    };
    let mut ctx = Ctx { cfg, model, failures: Vec::new() };
    let report = match &cfg.analysis {
        Analysis::Tail { target, horizon } => tail(&mut ctx, target, *horizon)?,
        Analysis::Lambda { target } => lambda(&mut ctx, target)?,
        Analysis::Verify { target } => verify(&mut ctx, target)?,
        Analysis::Limitlaw { target, grid_points, return_start } => {
            limitlaw(&mut ctx, target, *grid_points, *return_start)?
        }
        Analysis::Mc { target, tail, samples, seed, censor_cap } => {
            mc(&mut ctx, target, *tail, *samples, *seed, *censor_cap)?
        }
        Analysis::Sweep { family, n_min, n_max, return_start } => {
            sweep(&mut ctx, family, *n_min, *n_max, *return_start)?
        }
        Analysis::RarityEpsilon { family, n_min, n_max } => epsilon(&mut ctx, family, *n_min, *n_max)?,
        Analysis::RarityD0 { q, h } => d0(&mut ctx, *q, *h)?,
        Analysis::RarityRate { family, n_min, n_max, q } => rate(&mut ctx, family, *n_min, *n_max, *q)?,
        Analysis::RarityKappa { q, fraction, n_min, n_max } => {
            kappa(&mut ctx, *q, *fraction, *n_min, *n_max)
        }
    };
    let failures = if cfg.assert { ctx.failures } else { Vec::new() };
    Ok(Outcome { report, failures })
}

fn tail(ctx: &mut Ctx, target: &TargetSpec, horizon: usize) -> Result<String> {
    let set = ctx.target(target)?;
    let hit = hitting_tail(ctx.model()?, &set, horizon)?;
    let ret = return_tail(ctx.model()?, &set, horizon)?;
    let mu = hit.mu_a();
    for j in 1..=horizon {
        let gap = (hit.values()[j - 1] - hit.values()[j] - mu * ret.values()[j - 1]).abs();
        ctx.check(gap <= 1e-12, || format!("H(j-1)-H(j) != mu*H_ret(j-1) at j={j} (gap {gap:e})"));
    }
    Ok(if ctx.csv() {
        tail_csv(&hit, Some(&ret))
    } else {
        json(&json!({
            "mu_A": mu,
            "source": hit.source().label(),
            "H_hit": hit.values(),
            "H_ret": ret.values(),
        }))
    })
}

fn lambda(ctx: &mut Ctx, target: &TargetSpec) -> Result<String> {
    let set = ctx.target(target)?;
    let cert = analyze(ctx.model()?, &set)?.certificate;
    let failed: Vec<_> = cert.checks.iter().filter(|(_, ok)| !**ok).map(|(k, _)| k.clone()).collect();
    ctx.check(failed.is_empty(), || format!("certificate checks failed: {}", failed.join(", ")));
    Ok(if ctx.csv() {
        let lam = cert.lambda.expect("analyze always sets lambda");
        let s = cert.s.map(|s| s.to_string()).unwrap_or_default();
        format!(
            "n,mu_A,d,delta,regime,s,lambda,nominal\n{},{},{},{},{},{},{},{}\n",
            cert.n,
            cert.mu_a,
            cert.d,
            cert.delta,
            serde_json::to_value(cert.regime).unwrap().as_str().unwrap(),
            s,
            lam.value,
            u8::from(lam.nominal)
        )
    } else {
        json(&cert)
    })
}

fn verify(ctx: &mut Ctx, target: &TargetSpec) -> Result<String> {
    let set = ctx.target(target)?;
    let a = analyze(ctx.model()?, &set)?;
    let (cert, rep) = (&a.certificate, &a.report);
    ctx.check(rep.pass, || {
        format!("sup deviation {} exceeds {} + {}", rep.sup_dev, rep.bound, rep.truncation_residual)
    });
    ctx.check(cert.all_checks_pass(), || "certificate checks failed".into());
    Ok(if ctx.csv() {
        format!(
            "n,mu_A,lambda,sup_dev,bound,truncation_residual,pass\n{},{},{},{},{},{},{}\n",
            cert.n,
            cert.mu_a,
            a.lambda(),
            rep.sup_dev,
            rep.bound,
            rep.truncation_residual,
            u8::from(rep.pass)
        )
    } else {
        json(&json!({ "certificate": cert, "report": rep }))
    })
}

fn limitlaw(ctx: &mut Ctx, target: &TargetSpec, points: usize, start: f64) -> Result<String> {
    let set = ctx.target(target)?;
    let model = ctx.model()?;
    let a = analyze(model, &set)?;
    let (lambda, mu) = (a.lambda(), a.certificate.mu_a);
    let mut engine = TailEngine::new(model, &set, TailKind::Return)?;
    engine.extend_to(a.hitting.horizon());
    let ret = engine.tail();
    let f = make_f(&a.hitting, lambda, mu)?;
    let g = make_g(&ret, lambda, mu)?;
    let grid = law_grid(&f, points.max(1));
    let kac = kac_violation(&g, &grid)?;
    let pairs: Vec<_> = (0..grid.len())
        .flat_map(|i| grid[i..].iter().map(move |&t2| (i, t2)))
        .map(|(i, t2)| (grid[i], t2))
        .collect();
    let sandwich = check_sandwich(&f, &g, mu, &pairs)?;
    let relation = check_integral_relation(&f, &g, &grid)?;
    let (d_hit, _) = hitting_deviation(&a.hitting, lambda, mu)?;
    let (d_ret, _) = return_deviation(&ret, lambda, mu, start)?;
    ctx.check(kac <= 1e-12, || format!("G(s) exceeds 1/s by {kac:e}"));
    ctx.check(sandwich.pass, || format!("sandwich violated by {:e}", sandwich.worst_violation));
    ctx.check(relation.within_measure && relation.ordered, || {
        format!("integral relation residual {} exceeds mu_A={mu}", relation.max_residual)
    });
    let summary = json!({
        "mu_A": mu,
        "lambda": lambda,
        "nominal": a.certificate.lambda.is_some_and(|l| l.nominal),
        "kac_max_violation": kac,
        "sandwich_worst_violation": sandwich.worst_violation,
        "sandwich_pass": sandwich.pass,
        "integral_max_residual": relation.max_residual,
        "integral_within_measure": relation.within_measure,
        "integral_ordered": relation.ordered,
        "D_hit": d_hit,
        "D_ret": d_ret,
        "return_start": start,
        "bound": a.certificate.bound() + 2.0 * mu,
    });
    Ok(if ctx.csv() {
        let mut out = String::new();
        for (k, v) in summary.as_object().unwrap() {
            writeln!(out, "# {k}={v}").unwrap();
        }
        out.push_str("t,F,G,int_G,residual\n");
        for r in &relation.rows {
            writeln!(out, "{},{},{},{},{}", r.t, r.f, g.eval(r.t)?, r.integral_g, r.residual).unwrap();
        }
        out
    } else {
        json(&summary)
    })
}

fn mc(
    ctx: &mut Ctx,
    target: &TargetSpec,
    kind: TailKind,
    samples: usize,
    seed: u64,
    censor_cap: Option<u64>,
) -> Result<String> {
    let set = ctx.target(target)?;
    let model = ctx.model()?;
    let mu = set.measure(model)?;
    let membership = Membership::Explicit(set.clone());
    let batch = match (censor_cap, kind) {
        (None, _) => sample_adaptive(model, &membership, kind, samples, seed, mu)?,
        (Some(cap), TailKind::Hitting) => sample_hitting(model, &membership, samples, seed, cap)?,
        (Some(cap), TailKind::Return) => {
            sample_return(model, &membership, samples, seed, cap, DEFAULT_REJECTION_BUDGET)?
        }
    };
    let horizon = batch.censor_cap as usize;
    let exact = match kind {
        TailKind::Hitting => hitting_tail(model, &set, horizon)?,
        TailKind::Return => return_tail(model, &set, horizon)?,
    };
    let ks = ks_distance(&empirical_tail(&batch, mu)?, &exact)?;
    let threshold = DKW_95 / (samples as f64).sqrt();
    ctx.check(ks <= threshold, || format!("KS distance {ks} exceeds {threshold}"));
    Ok(if ctx.csv() {
        let mut out = batch_csv(&batch);
        let body = out.split_off(out.find("trajectory_index").unwrap());
        writeln!(out, "# ks_vs_exact={ks}").unwrap();
        out + &body
    } else {
        let mean = batch.samples.iter().map(|s| s.time as f64).sum::<f64>() / batch.len() as f64;
        json(&json!({
            "kind": kind,
            "master_seed": seed,
            "samples": batch.len(),
            "censor_cap": batch.censor_cap,
            "censored": batch.censored(),
            "rejections": batch.rejections,
            "mean_time": mean,
            "mu_A": mu,
            "ks_vs_exact": ks,
            "ks_threshold": threshold,
        }))
    })
}

fn sweep(ctx: &mut Ctx, family: &TargetFamily, lo: usize, hi: usize, start: f64) -> Result<String> {
    let model = ctx.model()?;
    let q = model.alphabet_size();
    let rows = convergence_diagnostics(model, |n| ctx.family(family, n, q), lo..=hi, start)?;
    for r in &rows {
        ctx.check(r.d_hit <= r.bound, || format!("n={}: D_hit {} exceeds bound {}", r.n, r.d_hit, r.bound));
        ctx.check(r.lambda <= lambda_cap(r.delta), || {
            format!("n={}: lambda {} exceeds 1/(1-delta)", r.n, r.lambda)
        });
    }
    Ok(if ctx.csv() { diagnostics_csv(&rows) } else { json(&rows) })
}

fn epsilon(ctx: &mut Ctx, family: &TargetFamily, lo: usize, hi: usize) -> Result<String> {
    let model = ctx.model()?;
    let q = model.alphabet_size();
    let rows = (lo..=hi)
        .map(|n| rarity_row(model, &ctx.family(family, n, q)?))
        .collect::<Result<Vec<_>>>()?;
    for r in rows.iter().filter(|r| !r.bound.surrogate) {
        ctx.check(r.holds(), || {
            format!("n={}: mu(tau<=n)={} exceeds epsilon={}", r.bound.n, r.short_hits, r.bound.epsilon)
        });
    }
    Ok(if ctx.csv() { rarity_csv(&rows) } else { json(&rows) })
}

fn d0(ctx: &mut Ctx, q: usize, h: f64) -> Result<String> {
    let d0 = solve_d0(q, h)?;
    let gap = (hamming_base(d0, q) - h.exp()).abs();
    ctx.check(gap <= 1e-5, || format!("root residual {gap:e}"));
    Ok(if ctx.csv() {
        format!("q,h,D0\n{q},{h},{d0}\n")
    } else {
        json(&json!({ "q": q, "h": h, "D0": d0 }))
    })
}

fn rate(ctx: &mut Ctx, family: &TargetFamily, lo: usize, hi: usize, q: Option<usize>) -> Result<String> {
    let q = match (&ctx.model, q) {
        (Some(m), _) => m.alphabet_size(),
        (None, Some(q)) => q,
        (None, None) => return Err(Error::Config("rarity rate needs --model or --q".into())),
    };
    let entropy = ctx.model.as_ref().map(ProcessModel::entropy);
    let table = (lo.max(1)..=hi)
        .map(|n| Ok((n, ctx.family(family, n, q)?.cardinality() as f64)))
        .collect::<Result<Vec<_>>>()?;
    let r = cardinality_rate(&table, entropy)?;
    ctx.check(r.below_entropy != Some(false), || {
        format!("cardinality rate {} not below entropy {:?}", r.rate, entropy)
    });
    Ok(if ctx.csv() {
        let mut out = format!("# rate={}\n", r.rate);
        if let (Some(h), Some(b)) = (entropy, r.below_entropy) {
            writeln!(out, "# entropy={h}\n# below_entropy={}", u8::from(b)).unwrap();
        }
        out.push_str("n,kappa,log_kappa_over_n\n");
        for (n, k) in &table {
            writeln!(out, "{n},{k},{}", k.ln() / *n as f64).unwrap();
        }
        out
    } else {
        json(&json!({ "rate": r.rate, "entropy": entropy, "below_entropy": r.below_entropy, "table": table }))
    })
}

fn kappa(ctx: &mut Ctx, q: usize, fraction: f64, lo: usize, hi: usize) -> String {
    let rows: Vec<_> = (lo.max(1)..=hi)
        .map(|n| (n, hamming_kappa(n, fraction, q), hamming_kappa_bound(n, fraction, q)))
        .collect();
    for &(n, exact, bound) in &rows {
        ctx.check(bound * (1.0 + 1e-12) >= exact as f64, || format!("n={n}: bound {bound} < {exact}"));
    }
    if ctx.csv() {
        let mut out = String::from("n,kappa,bound\n");
        for (n, exact, bound) in &rows {
            writeln!(out, "{n},{exact},{bound}").unwrap();
        }
        out
    } else {
        let rows: Vec<_> =
            rows.iter().map(|(n, e, b)| json!({ "n": n, "kappa": e.to_string(), "bound": b })).collect();
        json(&rows)
    }
}
