//! Hitting- and return-time statistics of rare events in finite-alphabet
//! stationary processes.
//!
//! Targets are unions of rank-n cylinders. Tails `μ(τ_A > k)` are computed
//! exactly through an occurrence automaton, or estimated by seeded Monte
//! Carlo; on top of them sit the scale certificate and normalizing constant
//! `λ(A)`, the exponential-approximation check, the hitting/return integral
//! relation, and the rarity bounds for families of targets.

pub mod automaton;
pub mod error;
pub mod exact;
pub mod limitlaw;
mod linalg;
pub mod mc;
pub mod process;
pub mod rarity;
pub mod report;
pub mod scaling;
pub mod targets;

pub use error::{Error, Result};
pub use exact::{TailDistribution, TailKind, TailSource};
pub use process::{ModelSpec, ProcessModel, Symbol};
pub use targets::{TargetSet, TargetSpec};
