//! Executes a validated [`RunConfig`] and assembles the report document.

use crate::config::{Command, DistSpec, Format, Functional, RunConfig};
use khinchin_core::certify::{self, CertifyConfig};
use khinchin_core::par;
use khinchin_core::perturbed;
use khinchin_core::report::{LemmaReport, Verdict};
use khinchin_core::specialfn;
use khinchin_core::verify::{self, VerifyOptions};
use serde_json::{json, Map, Value};
use std::fmt::Write as _;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub const SCHEMA: &str = "khinchin-lab/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Rejected,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Rejected => 3,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Rejected => "rejected",
        }
    }
}

/// One row of a scan table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub s: f64,
    pub value: f64,
    pub uncertainty: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: Status,
    pub document: Value,
    pub table: Vec<Row>,
    /// One line per report for the terminal.
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.document).expect("serializable");
                s.push('\n');
                s
            }
            Format::Csv => csv(&self.table),
        }
    }
}

pub fn csv(rows: &[Row]) -> String {
    let mut out = String::from("s,value,uncertainty,bound,margin\n");
    for r in rows {
        let _ = writeln!(out, "{:e},{:e},{:e},{:e},{:e}", r.s, r.value, r.uncertainty, r.bound, r.margin);
    }
    out
}

/// Fail beats rejection: a failed inequality is the stronger finding.
fn status_of(reports: &[LemmaReport]) -> Status {
    if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        Status::Fail
    } else if reports.iter().any(|r| r.verdict == Verdict::Rejected) {
        Status::Rejected
    } else {
        Status::Pass
    }
}

fn summary_line(r: &LemmaReport) -> String {
    let verdict = match r.verdict {
        Verdict::Pass => "pass",
        Verdict::Fail => "FAIL",
        Verdict::Rejected => "REJECTED",
    };
    let mut line = format!("{:<16} {verdict:<8} margin={:+.6e} unc={:.1e}", r.lemma_id, r.margin, r.uncertainty);
    if !r.tolerance_met {
        line.push_str(" (tolerance not met)");
    }
    if r.verdict == Verdict::Rejected {
        if let Some(n) = r.notes.last() {
            line.push_str(": ");
            line.push_str(n);
        }
    }
    line
}

pub fn execute(cfg: &RunConfig, threads: usize) -> Outcome {
    let started = Instant::now();
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut doc = Map::new();
    let (status, body, table, summary) = dispatch(cfg);
    doc.insert("schema".into(), json!(SCHEMA));
    doc.insert("command".into(), json!(cfg.command.name()));
    doc.insert("inputs".into(), cfg.echo());
    doc.insert("status".into(), json!(status.name()));
    doc.insert("exit_code".into(), json!(status.exit_code()));
    for (k, v) in body {
        doc.insert(k, v);
    }
    doc.insert(
        "meta".into(),
        json!({
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": khinchin_core::VERSION,
            "parallel": par::is_parallel(),
            "threads": threads,
            "timestamp_unix": timestamp,
            "wall_clock_seconds": started.elapsed().as_secs_f64(),
        }),
    );
    Outcome { status, document: Value::Object(doc), table, summary }
}

type Dispatched = (Status, Map<String, Value>, Vec<Row>, Vec<String>);

fn reports_body(reports: Vec<LemmaReport>) -> Dispatched {
    let status = status_of(&reports);
    let summary = reports.iter().map(summary_line).collect();
    let mut body = Map::new();
    body.insert("reports".into(), json!(reports));
    (status, body, Vec::new(), summary)
}

fn rejected(message: String) -> Dispatched {
    let mut body = Map::new();
    body.insert("error".into(), json!(message));
    (Status::Rejected, body, Vec::new(), vec![format!("rejected: {message}")])
}

fn dispatch(cfg: &RunConfig) -> Dispatched {
    match cfg.command {
        Command::EvalPsi0 | Command::EvalPhi0 | Command::EvalPsi | Command::EvalPhi => eval(cfg),
        Command::CertifyLemmas => certify(cfg),
        Command::VerifySzarek | Command::VerifyBall => verify_theorem(cfg),
        Command::NpAnalysis => np(cfg),
        Command::Sweep => sweep(cfg),
    }
}

/// `(value, uncertainty, converged, method)` of the requested function at `s`.
fn point(cfg: &RunConfig, f: Functional, s: f64, order: u8) -> Result<(f64, f64, bool, Option<Value>), String> {
    let special = |v: Result<specialfn::SpecialValue, specialfn::SpecialError>| {
        v.map(|v| (v.value, v.uncertainty, v.converged, Some(json!(v.method)))).map_err(|e| e.to_string())
    };
    let perturbed = |v: Result<perturbed::Eval, perturbed::PerturbedError>| {
        v.map(|v| (v.value, v.uncertainty, v.converged, None)).map_err(|e| e.to_string())
    };
    match (f, &cfg.dist) {
        (Functional::Psi0, _) if order == 0 => special(specialfn::psi0_gamma(s)),
        (Functional::Psi0, _) => special(specialfn::psi0_prime(s)),
        (Functional::Phi0, _) => special(specialfn::phi0_with(s, order, cfg.tol)),
        (Functional::Psi, Some(DistSpec::Line(d))) if order == 0 => perturbed(perturbed::psi_with(s, d, cfg.tol)),
        (Functional::Psi, Some(DistSpec::Line(d))) => perturbed(perturbed::psi_prime_with(s, d, cfg.tol)),
        (Functional::Phi, Some(DistSpec::Radial(d))) if order == 0 => perturbed(perturbed::phi3_with(s, d, cfg.tol)),
        (Functional::Phi, Some(DistSpec::Radial(d))) => perturbed(perturbed::phi3_prime_with(s, d, cfg.tol)),
        _ => Err("law does not match the functional".into()),
    }
}

fn eval(cfg: &RunConfig) -> Dispatched {
    let f = match cfg.command {
        Command::EvalPsi0 => Functional::Psi0,
        Command::EvalPhi0 => Functional::Phi0,
        Command::EvalPsi => Functional::Psi,
        _ => Functional::Phi,
    };
    let grid = cfg.s.expect("validated").values();
    let points = par::map_slice(&grid, |&s| point(cfg, f, s, cfg.order));
    let mut results = Vec::with_capacity(points.len());
    let mut summary = Vec::new();
    for (s, p) in grid.iter().zip(points) {
        match p {
            Ok((value, uncertainty, converged, method)) => {
                let mut entry = json!({ "s": s, "value": value, "uncertainty": uncertainty, "converged": converged });
                if let Some(m) = method {
                    entry["method"] = m;
                }
                summary.push(format!("s={s} value={value:.16e} unc={uncertainty:.1e}"));
                results.push(entry);
            }
            Err(e) => return rejected(format!("s = {s}: {e}")),
        }
    }
    let mut body = Map::new();
    body.insert("results".into(), Value::Array(results));
    (Status::Pass, body, Vec::new(), summary)
}

fn certify(cfg: &RunConfig) -> Dispatched {
    let mut c = CertifyConfig::new(cfg.tol);
    c.seed = cfg.seed;
    match &cfg.dist {
        Some(DistSpec::Line(d)) => c.line_dists = vec![d.clone()],
        Some(DistSpec::Radial(d)) => c.radial_dists = vec![d.clone()],
        Some(DistSpec::Empty) => {
            c.line_dists.clear();
            c.radial_dists.clear();
        }
        None => {}
    }
    let s = certify::certify_with(&c);
    let (status, mut body, table, summary) = reports_body(s.reports);
    body.insert("all_pass".into(), json!(s.all_pass));
    body.insert("tolerance_met".into(), json!(s.tolerance_met));
    body.insert("laws".into(), json!({ "line": c.line_dists, "radial": c.radial_dists }));
    (status, body, table, summary)
}

fn verify_theorem(cfg: &RunConfig) -> Dispatched {
    let a = cfg.vector.as_ref().expect("validated");
    let opts = VerifyOptions { mc_samples: cfg.mc_samples, seed: cfg.seed, tol: cfg.tol };
    let report = match &cfg.dist {
        Some(DistSpec::Line(d)) => verify::verify_szarek(a, d, &opts),
        Some(DistSpec::Radial(d)) => verify::verify_ball(a, d, &opts),
        _ => unreachable!("validated"),
    };
    reports_body(vec![report])
}

fn np(cfg: &RunConfig) -> Dispatched {
    match verify::np_sign_change(cfg.a) {
        Ok(analysis) => {
            let report = certify::sign_change_report(&analysis);
            let (status, mut body, table, summary) = reports_body(vec![report]);
            body.insert("analysis".into(), json!(analysis));
            (status, body, table, summary)
        }
        Err(e) => rejected(e.to_string()),
    }
}

/// Monotonicity scans: `Psi0`, `Psi` should not drop below their value at
/// `s = 2`, `Phi0`, `Phi` should not exceed it.
fn sweep(cfg: &RunConfig) -> Dispatched {
    let f = cfg.functional.expect("validated");
    let grid = cfg.s.expect("validated").values();
    let base = match point(cfg, f, 2.0, 0) {
        Ok(b) => b,
        Err(e) => return rejected(format!("s = 2: {e}")),
    };
    let sign = if matches!(f, Functional::Psi0 | Functional::Psi) { 1.0 } else { -1.0 };
    let id = if sign > 0.0 { "Psi2" } else { "Phi2" };
    let points = par::map_slice(&grid, |&s| point(cfg, f, s, 0));
    let mut rows = Vec::with_capacity(grid.len());
    let mut converged = base.2;
    for (&s, p) in grid.iter().zip(points) {
        match p {
            Ok((value, uncertainty, conv, _)) => {
                converged &= conv;
                rows.push(Row {
                    s,
                    value,
                    uncertainty: uncertainty + base.1,
                    bound: base.0,
                    margin: sign * (value - base.0),
                });
            }
            Err(e) => return rejected(format!("s = {s}: {e}")),
        }
    }
    let worst = rows.iter().min_by(|a, b| (a.margin + a.uncertainty).total_cmp(&(b.margin + b.uncertainty))).copied();
    let mut report = LemmaReport::new(id).input("points", rows.len());
    report.tolerance_met = converged;
    report.quantity("value(s=2)", base.0, base.1);
    let report = match worst {
        Some(w) => {
            report.quantity("argmin margin", w.s, 0.0);
            report.conclude(base.0, w.margin, w.uncertainty)
        }
        None => report.reject("empty grid"),
    };
    let (status, mut body, _, summary) = reports_body(vec![report]);
    body.insert(
        "table".into(),
        Value::Array(
            rows.iter()
                .map(|r| json!({ "s": r.s, "value": r.value, "uncertainty": r.uncertainty, "bound": r.bound, "margin": r.margin }))
                .collect(),
        ),
    );
    (status, body, rows, summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_rows() {
        let rows = [Row { s: 2.0, value: 1.0, uncertainty: 0.0, bound: 1.0, margin: 0.0 }];
        let text = csv(&rows);
        assert_eq!(text.lines().next(), Some("s,value,uncertainty,bound,margin"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn fail_outranks_rejection() {
        let f = LemmaReport::new("f").conclude(0.0, -1.0, 0.0);
        let r = LemmaReport::new("r").reject("x");
        assert_eq!(status_of(&[r.clone(), f]), Status::Fail);
        assert_eq!(status_of(&[r]), Status::Rejected);
        assert_eq!(status_of(&[]), Status::Pass);
    }
}
