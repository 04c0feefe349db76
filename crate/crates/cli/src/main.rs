use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use raretime::targets::{Point, TargetFamily, DEFAULT_EXPANSION_CAP};
use raretime::{Error, TailKind, TargetSpec};
use raretime_cli::{execute, exit_code, parse_model, Analysis, Format, RunConfig};

#[derive(Parser)]
#[command(name = "raretime", version, about = "Hitting and return times of rare events")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// `iid-uniform-<q>`, a JSON file, or inline JSON.
    #[arg(long)]
    model: Option<String>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Exit with status 2 if any checked inequality fails.
    #[arg(long)]
    assert: bool,
    #[arg(long, default_value_t = DEFAULT_EXPANSION_CAP)]
    expansion_cap: u128,
}

#[derive(Args, Clone)]
struct FamilyArgs {
    /// `point:0`, `point:1,1/0` (prefix/period) or `champernowne:<q>`.
    #[arg(long)]
    point: String,
    /// Hamming fraction; cylinders when absent.
    #[arg(long = "D")]
    fraction: Option<f64>,
    /// Inclusive rank range `lo:hi`.
    #[arg(long)]
    n_range: String,
}

#[derive(Subcommand)]
enum Command {
    /// Exact hitting and return tails.
    Tail {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target: String,
        #[arg(long = "K")]
        horizon: usize,
    },
    /// Scale certificate and λ(A).
    Lambda {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target: String,
    },
    /// Exponential approximation bound on the exact hitting tail.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target: String,
    },
    /// Rescaled laws F and G and the relations between them.
    Limitlaw {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 100)]
        grid: usize,
        #[arg(long, default_value_t = raretime::limitlaw::DEFAULT_RETURN_START)]
        s0: f64,
    },
    /// Seeded Monte Carlo sample of hitting or return times.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target: String,
        #[arg(long = "N")]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "hitting", value_parser = parse_kind)]
        tail: TailKind,
        /// Censoring cap; adaptive when absent.
        #[arg(long = "K")]
        censor_cap: Option<u64>,
    },
    /// Per-rank convergence diagnostics along a family of targets.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long, default_value_t = raretime::limitlaw::DEFAULT_RETURN_START)]
        s0: f64,
    },
    /// Rarity bounds and Hamming counting.
    Rarity {
        #[command(subcommand)]
        task: RarityTask,
    },
    /// Repeat a run from its resolved config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the report path stored in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum RarityTask {
    /// ε_n next to the exact μ(τ ≤ n).
    Epsilon {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        family: FamilyArgs,
    },
    /// Largest admissible Hamming fraction for a given entropy.
    D0 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        q: usize,
        #[arg(long, conflicts_with = "h_nats", required_unless_present = "h_nats")]
        h_bits: Option<f64>,
        #[arg(long)]
        h_nats: Option<f64>,
    },
    /// Growth rate of κ_n along a family.
    Rate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        family: FamilyArgs,
        #[arg(long)]
        q: Option<usize>,
    },
    /// Exact Hamming-ball sizes against the closed-form bound.
    Kappa {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        q: usize,
        #[arg(long = "D")]
        fraction: f64,
        #[arg(long)]
        n_range: String,
    },
}

fn parse_kind(text: &str) -> Result<TailKind, String> {
    match text {
        "hitting" => Ok(TailKind::Hitting),
        "return" => Ok(TailKind::Return),
        _ => Err(format!("expected hitting or return, got {text}")),
    }
}

fn parse_range(text: &str) -> Result<(usize, usize), Error> {
    let (lo, hi) = text
        .split_once("..")
        .or_else(|| text.split_once(':'))
        .ok_or_else(|| Error::Config(format!("expected lo:hi, got {text}")))?;
    let num = |s: &str| s.trim().parse().map_err(|_| Error::Config(format!("bad rank {s:?}")));
    Ok((num(lo)?, num(hi.trim_start_matches('='))?))
}

fn family(args: &FamilyArgs) -> Result<(TargetFamily, usize, usize), Error> {
    let (lo, hi) = parse_range(&args.n_range)?;
    Ok((TargetFamily { point: Point::parse(&args.point)?, fraction: args.fraction }, lo, hi))
}

fn resolve(common: Common, analysis: Analysis) -> Result<RunConfig, Error> {
    Ok(RunConfig {
        model: common.model.as_deref().map(parse_model).transpose()?,
        analysis,
        assert: common.assert,
        format: common.format,
        out: common.out,
        expansion_cap: common.expansion_cap,
    })
}

fn build(command: Command) -> Result<RunConfig, Error> {
    let target = |t: &str| TargetSpec::parse_shorthand(t);
    match command {
        Command::Tail { common, target: t, horizon } => {
            resolve(common, Analysis::Tail { target: target(&t)?, horizon })
        }
        Command::Lambda { common, target: t } => resolve(common, Analysis::Lambda { target: target(&t)? }),
        Command::Verify { common, target: t } => resolve(common, Analysis::Verify { target: target(&t)? }),
        Command::Limitlaw { common, target: t, grid, s0 } => resolve(
            common,
            Analysis::Limitlaw { target: target(&t)?, grid_points: grid, return_start: s0 },
        ),
        Command::Mc { common, target: t, samples, seed, tail, censor_cap } => resolve(
            common,
            Analysis::Mc { target: target(&t)?, tail, samples, seed, censor_cap },
        ),
        Command::Sweep { common, family: f, s0 } => {
            let (family, n_min, n_max) = family(&f)?;
            resolve(common, Analysis::Sweep { family, n_min, n_max, return_start: s0 })
        }
        Command::Rarity { task } => match task {
            RarityTask::Epsilon { common, family: f } => {
                let (family, n_min, n_max) = family(&f)?;
                resolve(common, Analysis::RarityEpsilon { family, n_min, n_max })
            }
            RarityTask::D0 { common, q, h_bits, h_nats } => {
                let h = h_nats.unwrap_or_else(|| h_bits.unwrap_or(f64::NAN) * std::f64::consts::LN_2);
                resolve(common, Analysis::RarityD0 { q, h })
            }
            RarityTask::Rate { common, family: f, q } => {
                let (family, n_min, n_max) = family(&f)?;
                resolve(common, Analysis::RarityRate { family, n_min, n_max, q })
            }
            RarityTask::Kappa { common, q, fraction, n_range } => {
                let (n_min, n_max) = parse_range(&n_range)?;
                resolve(common, Analysis::RarityKappa { q, fraction, n_min, n_max })
            }
        },
        Command::Run { config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if out.is_some() {
                cfg.out = out;
            }
            Ok(cfg)
        }
    }
}

fn write(path: &std::path::Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let cfg = match build(cli.command) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match cfg.config_path() {
        Some(path) => {
            if let Err(e) = write(&path, &cfg.to_json()) {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
        None => eprint!("{}", cfg.to_json()),
    }
    let result = execute(&cfg).and_then(|outcome| {
        match &cfg.out {
            Some(path) => write(path, &outcome.report)?,
            None => print!("{}", outcome.report),
        }
        Ok(outcome)
    });
    match &result {
        Ok(outcome) => {
            for failure in &outcome.failures {
                eprintln!("assertion failed: {failure}");
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
