//! Flat-file renderings of tails, sample batches, certificates and tables.
//!
//! Floats print in Rust's shortest round-trip form, so identical inputs give
//! byte-identical files.

use std::fmt::Write;

use crate::exact::TailDistribution;
use crate::limitlaw::DiagnosticRow;
use crate::mc::SampleBatch;
use crate::rarity::RarityRow;

/// `k,H_hit,H_ret` with `# mu_A=` and `# source=` header lines.
pub fn tail_csv(hitting: &TailDistribution, returning: Option<&TailDistribution>) -> String {
    let mut out = String::new();
    writeln!(out, "# mu_A={}", hitting.mu_a()).unwrap();
    writeln!(out, "# source={}", hitting.source().label()).unwrap();
    out.push_str("k,H_hit,H_ret\n");
    for (k, h) in hitting.values().iter().enumerate() {
        match returning.and_then(|r| r.values().get(k)) {
            Some(r) => writeln!(out, "{k},{h},{r}").unwrap(),
            None => writeln!(out, "{k},{h},").unwrap(),
        }
    }
    out
}

/// `trajectory_index,time,censored` with the master seed in the header.
pub fn batch_csv(batch: &SampleBatch) -> String {
    let mut out = String::with_capacity(16 * batch.len() + 64);
    writeln!(out, "# master_seed={}", batch.seed).unwrap();
    writeln!(out, "# kind={}", batch.kind.name()).unwrap();
    writeln!(out, "# censor_cap={}", batch.censor_cap).unwrap();
    out.push_str("trajectory_index,time,censored\n");
    for (i, s) in batch.samples.iter().enumerate() {
        writeln!(out, "{i},{},{}", s.time, u8::from(s.censored)).unwrap();
    }
    out
}

pub fn diagnostics_csv(rows: &[DiagnosticRow]) -> String {
    let mut out = String::from("n,mu_A,lambda,D_hit,D_ret,bound,nominal,delta,mu_tau_le_n\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.n,
            r.mu_a,
            r.lambda,
            r.d_hit,
            r.d_ret,
            r.bound,
            u8::from(r.nominal),
            r.delta,
            r.short_hits
        )
        .unwrap();
    }
    out
}

pub fn rarity_csv(rows: &[RarityRow]) -> String {
    let mut out = String::from("n,kappa,h,k,m,epsilon_n,mu_tau_le_n,surrogate\n");
    for r in rows {
        let b = &r.bound;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            b.n,
            b.kappa,
            b.h,
            b.k,
            b.m,
            b.epsilon,
            r.short_hits,
            u8::from(b.surrogate)
        )
        .unwrap();
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
