//! `khinchin-lab`: evaluate the special functions, run the lemma checks and
//! the end-to-end inequality checks, and write JSON or CSV reports.
//!
//! Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 invalid
//! configuration, 3 numerical rejection (a precondition does not hold).

mod config;
mod run;

use clap::{Args, Parser, Subcommand};
use config::{Command, ConfigError, RawConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "khinchin-lab", version, about = "Numerics for sharp Khinchin-type inequalities")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Haagerup's function Psi0(s) (or its derivative with --order 1).
    EvalPsi0(Flags),
    /// Ball's function Phi0(s) (derivatives up to --order 2).
    EvalPhi0(Flags),
    /// Perturbed Psi(s) for a law on the line.
    EvalPsi(Flags),
    /// Perturbed Phi(s) for a radial law in R^3.
    EvalPhi(Flags),
    /// Run every lemma check and aggregate the verdicts.
    CertifyLemmas(Flags),
    /// Check E|sum a_j X_j| >= E|(X_1 + X_2)/sqrt 2|.
    VerifySzarek(Flags),
    /// Check E|sum a_j X_j|^-1 <= E|(X_1 + X_2)/sqrt 2|^-1 in R^3.
    VerifyBall(Flags),
    /// Distribution-function sign-change analysis for a in [1, pi/3].
    NpAnalysis(Flags),
    /// Monotonicity scan of psi0, phi0, psi or phi over a grid in s.
    Sweep(Flags),
}

#[derive(Args)]
struct Flags {
    /// File of `key = value` lines with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Law: rademacher, two-point, four-point, uniform-noise, sphere,
    /// radius-shift, radius-two-point, or none (certify-lemmas); `kind:c`
    /// sets the parameter inline.
    #[arg(long, allow_hyphen_values = true)]
    dist: Option<String>,
    /// Family parameter c.
    #[arg(long, allow_hyphen_values = true)]
    param: Option<String>,
    /// Coordinates such as `1/√3,1/√3,1/√3` or `0.6,0.8` (rescaled to unit
    /// norm), or `random(n[, seed][, small|any])`.
    #[arg(long, allow_hyphen_values = true)]
    vector: Option<String>,
    /// A single value, `grid(min, max, points[, log])` or `min:max:points[:log]`.
    #[arg(long = "s", allow_hyphen_values = true)]
    s: Option<String>,
    /// Derivative order.
    #[arg(long, allow_hyphen_values = true)]
    order: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tol: Option<String>,
    #[arg(long = "mc-samples", allow_hyphen_values = true)]
    mc_samples: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    /// Parameter a of the sign-change analysis.
    #[arg(long = "a", allow_hyphen_values = true)]
    a: Option<String>,
    /// psi0, phi0, psi or phi (sweep).
    #[arg(long, allow_hyphen_values = true)]
    functional: Option<String>,
    /// Write the report here instead of stdout.
    #[arg(long, allow_hyphen_values = true)]
    output: Option<String>,
    /// json (default) or csv (sweep only).
    #[arg(long, allow_hyphen_values = true)]
    format: Option<String>,
}

impl Flags {
    fn raw(&self) -> RawConfig {
        let mut r = RawConfig::default();
        let pairs = [
            ("dist", &self.dist),
            ("param", &self.param),
            ("vector", &self.vector),
            ("s", &self.s),
            ("order", &self.order),
            ("tol", &self.tol),
            ("mc_samples", &self.mc_samples),
            ("seed", &self.seed),
            ("a", &self.a),
            ("functional", &self.functional),
            ("output", &self.output),
            ("format", &self.format),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                r.set(k, v.clone());
            }
        }
        r
    }
}

fn split(cmd: Cmd) -> (Command, Flags) {
    match cmd {
        Cmd::EvalPsi0(f) => (Command::EvalPsi0, f),
        Cmd::EvalPhi0(f) => (Command::EvalPhi0, f),
        Cmd::EvalPsi(f) => (Command::EvalPsi, f),
        Cmd::EvalPhi(f) => (Command::EvalPhi, f),
        Cmd::CertifyLemmas(f) => (Command::CertifyLemmas, f),
        Cmd::VerifySzarek(f) => (Command::VerifySzarek, f),
        Cmd::VerifyBall(f) => (Command::VerifyBall, f),
        Cmd::NpAnalysis(f) => (Command::NpAnalysis, f),
        Cmd::Sweep(f) => (Command::Sweep, f),
    }
}

/// Applies `KHINCHIN_LAB_THREADS`; returns the thread count in use.
fn configure_threads() -> Result<usize, ConfigError> {
    let requested = match std::env::var("KHINCHIN_LAB_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| ConfigError {
            field: "KHINCHIN_LAB_THREADS".into(),
            message: format!("expected a positive integer, got {v:?}"),
        })?),
        Err(_) => None,
    };
    if requested == Some(1) {
        khinchin_core::par::set_sequential(true);
    }
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = requested {
            // Fails only if a global pool already exists, which cannot happen here.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Ok(if khinchin_core::par::is_parallel() { rayon::current_num_threads() } else { 1 })
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = requested;
        Ok(1)
    }
}

fn invalid(e: &ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = split(cli.command);
    let threads = match configure_threads() {
        Ok(n) => n,
        Err(e) => return invalid(&e),
    };
    let file = match &flags.config {
        Some(p) => match RawConfig::from_file(p) {
            Ok(r) => r,
            Err(e) => return invalid(&e),
        },
        None => RawConfig::default(),
    };
    let cfg = match file.merge(flags.raw()).validate(command) {
        Ok(c) => c,
        Err(e) => return invalid(&e),
    };
    let outcome = run::execute(&cfg, threads);
    for line in &outcome.summary {
        eprintln!("{line}");
    }
    let text = outcome.render(cfg.format);
    match &cfg.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                return invalid(&ConfigError { field: "output".into(), message: format!("{}: {e}", path.display()) });
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(outcome.status.exit_code() as u8)
}
