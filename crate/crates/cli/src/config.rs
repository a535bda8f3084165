//! Run configuration: merging flags with a `key = value` file, and
//! validating everything before any computation starts.

use khinchin_core::dist::{
    make_perturbed_rademacher, make_radial, Distribution1D, Kind1D, RadialDist3D, RadialKind, UnitVector,
};
use khinchin_core::perturbed::{linear_grid, log_grid};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Keys accepted on the command line and in config files.
pub const KEYS: [&str; 12] =
    ["dist", "param", "vector", "s", "order", "tol", "mc_samples", "seed", "a", "functional", "output", "format"];

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid config: {field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    EvalPsi0,
    EvalPhi0,
    EvalPsi,
    EvalPhi,
    CertifyLemmas,
    VerifySzarek,
    VerifyBall,
    NpAnalysis,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::EvalPsi0 => "eval-psi0",
            Command::EvalPhi0 => "eval-phi0",
            Command::EvalPsi => "eval-psi",
            Command::EvalPhi => "eval-phi",
            Command::CertifyLemmas => "certify-lemmas",
            Command::VerifySzarek => "verify-szarek",
            Command::VerifyBall => "verify-ball",
            Command::NpAnalysis => "np-analysis",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistSpec {
    Line(Distribution1D),
    Radial(RadialDist3D),
    /// `dist = none`: no perturbed laws (certify-lemmas only).
    Empty,
}

impl DistSpec {
    fn echo(&self) -> Value {
        match self {
            DistSpec::Line(d) => json!(d),
            DistSpec::Radial(d) => json!(d),
            DistSpec::Empty => Value::String("none".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SSpec {
    Single(f64),
    Grid { min: f64, max: f64, points: usize, spacing: Spacing },
}

impl SSpec {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            SSpec::Single(s) => vec![s],
            SSpec::Grid { min, max, points, spacing: Spacing::Linear } => linear_grid(min, max, points),
            SSpec::Grid { min, max, points, spacing: Spacing::Log } => log_grid(min, max, points),
        }
    }

    fn echo(&self) -> Value {
        match *self {
            SSpec::Single(s) => json!(s),
            SSpec::Grid { min, max, points, spacing } => json!({
                "min": min, "max": max, "points": points,
                "spacing": if spacing == Spacing::Log { "log" } else { "linear" },
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    Psi0,
    Phi0,
    Psi,
    Phi,
}

impl Functional {
    fn name(self) -> &'static str {
        match self {
            Functional::Psi0 => "psi0",
            Functional::Phi0 => "phi0",
            Functional::Psi => "psi",
            Functional::Phi => "phi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub dist: Option<DistSpec>,
    pub vector: Option<UnitVector>,
    /// The vector as written, echoed into reports.
    pub vector_literal: Option<String>,
    pub s: Option<SSpec>,
    pub order: u8,
    pub tol: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub a: f64,
    pub functional: Option<Functional>,
    pub output: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    /// Everything that influences the numbers, in a stable order.
    pub fn echo(&self) -> Value {
        let mut m = serde_json::Map::new();
        m.insert("command".into(), json!(self.command.name()));
        if let Some(d) = &self.dist {
            m.insert("dist".into(), d.echo());
        }
        if let Some(v) = &self.vector {
            m.insert("vector".into(), json!(v.coords()));
        }
        if let Some(l) = &self.vector_literal {
            m.insert("vector_literal".into(), json!(l));
        }
        if let Some(s) = &self.s {
            m.insert("s".into(), s.echo());
        }
        if let Some(f) = self.functional {
            m.insert("functional".into(), json!(f.name()));
        }
        m.insert("order".into(), json!(self.order));
        m.insert("tol".into(), json!(self.tol));
        m.insert("mc_samples".into(), json!(self.mc_samples));
        m.insert("seed".into(), json!(self.seed));
        if self.command == Command::NpAnalysis {
            m.insert("a".into(), json!(self.a));
        }
        Value::Object(m)
    }
}

/// Raw `key -> value` pairs; flags override the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig(pub BTreeMap<String, String>);

impl fmt::Display for RawConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.0 {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

fn normalize_key(k: &str) -> String {
    let k = k.trim().replace('-', "_");
    match k.as_str() {
        // Distribution files use kind/param/seed.
        "kind" => "dist".into(),
        _ => k,
    }
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(normalize_key(key), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(err("config", format!("line {}: expected key = value", i + 1)));
            };
            let key = normalize_key(k);
            if !KEYS.contains(&key.as_str()) {
                return Err(err(&key, format!("unknown key on line {}", i + 1)));
            }
            raw.0.insert(key, v.trim().to_string());
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(mut self, other: RawConfig) -> Self {
        self.0.extend(other.0);
        self
    }

    pub fn validate(&self, command: Command) -> Result<RunConfig, ConfigError> {
        let seed = match self.get("seed") {
            Some(v) => {
                v.parse::<u64>().map_err(|_| err("seed", format!("expected an unsigned 64-bit integer, got {v:?}")))?
            }
            None => 0,
        };
        let tol = match self.get("tol") {
            Some(v) => {
                let t = parse_f64("tol", v)?;
                if !(t > 0.0 && t.is_finite()) {
                    return Err(err("tol", "must be positive and finite"));
                }
                t
            }
            None => 1e-8,
        };
        let mc_samples = match self.get("mc_samples") {
            Some(v) => v
                .parse::<usize>()
                .map_err(|_| err("mc_samples", format!("expected a nonnegative integer, got {v:?}")))?,
            None => 100_000,
        };
        if mc_samples != 0 && mc_samples < khinchin_core::verify::MIN_SAMPLES {
            return Err(err("mc_samples", format!("use 0 or at least {}", khinchin_core::verify::MIN_SAMPLES)));
        }
        let order = match self.get("order") {
            Some(v) => v.parse::<u8>().map_err(|_| err("order", format!("expected 0, 1 or 2, got {v:?}")))?,
            None => 0,
        };
        let max_order = match command {
            Command::EvalPhi0 => 2,
            Command::EvalPsi0 | Command::EvalPsi | Command::EvalPhi => 1,
            _ => 0,
        };
        if order > max_order {
            return Err(err("order", format!("{} supports orders 0..={max_order}", command.name())));
        }
        let format = match self.get("format") {
            None | Some("json") => Format::Json,
            Some("csv") if command == Command::Sweep => Format::Csv,
            Some("csv") => return Err(err("format", "csv is only available for sweep")),
            Some(v) => return Err(err("format", format!("expected json or csv, got {v:?}"))),
        };
        let a = match self.get("a") {
            Some(v) => parse_f64("a", v)?,
            None => 1.0,
        };
        let functional = match self.get("functional") {
            None => None,
            Some("psi0") => Some(Functional::Psi0),
            Some("phi0") => Some(Functional::Phi0),
            Some("psi") => Some(Functional::Psi),
            Some("phi") => Some(Functional::Phi),
            Some(v) => return Err(err("functional", format!("expected psi0, phi0, psi or phi, got {v:?}"))),
        };
        let dist = match self.get("dist") {
            Some(v) => Some(parse_dist(v, self.get("param"))?),
            None if self.get("param").is_some() => return Err(err("param", "given without dist")),
            None => None,
        };
        let s = self.get("s").map(parse_s).transpose()?;
        let (vector, vector_literal) = match self.get("vector") {
            Some(v) => (Some(parse_vector(v, seed)?), Some(v.to_string())),
            None => (None, None),
        };
        let output = self.get("output").map(PathBuf::from);

        let mut cfg = RunConfig {
            command,
            dist,
            vector,
            vector_literal,
            s,
            order,
            tol,
            mc_samples,
            seed,
            a,
            functional,
            output,
            format,
        };
        check_command(&mut cfg)?;
        Ok(cfg)
    }
}

/// Per-command required fields and law types.
fn check_command(cfg: &mut RunConfig) -> Result<(), ConfigError> {
    let need_s = |cfg: &RunConfig| cfg.s.ok_or_else(|| err("s", format!("required by {}", cfg.command.name())));
    let want_line = |cfg: &RunConfig, default: Option<Distribution1D>| match (&cfg.dist, default) {
        (Some(DistSpec::Line(_)), _) => Ok(cfg.dist.clone()),
        (None, Some(d)) => Ok(Some(DistSpec::Line(d))),
        (None, None) => Err(err("dist", format!("{} needs a law on the line", cfg.command.name()))),
        _ => Err(err(
            "dist",
            format!(
                "{} needs a law on the line (rademacher, two-point, four-point, uniform-noise)",
                cfg.command.name()
            ),
        )),
    };
    let want_radial = |cfg: &RunConfig, default: Option<RadialDist3D>| match (&cfg.dist, default) {
        (Some(DistSpec::Radial(_)), _) => Ok(cfg.dist.clone()),
        (None, Some(d)) => Ok(Some(DistSpec::Radial(d))),
        (None, None) => Err(err("dist", format!("{} needs a radial law in R^3", cfg.command.name()))),
        _ => Err(err(
            "dist",
            format!("{} needs a radial law in R^3 (sphere, radius-shift, radius-two-point)", cfg.command.name()),
        )),
    };
    match cfg.command {
        Command::EvalPsi0 | Command::EvalPhi0 => {
            need_s(cfg)?;
        }
        Command::EvalPsi => {
            need_s(cfg)?;
            cfg.dist = want_line(cfg, None)?;
        }
        Command::EvalPhi => {
            need_s(cfg)?;
            cfg.dist = want_radial(cfg, None)?;
        }
        Command::CertifyLemmas => {}
        Command::VerifySzarek | Command::VerifyBall => {
            if cfg.vector.is_none() {
                return Err(err("vector", format!("required by {}", cfg.command.name())));
            }
            cfg.dist = if cfg.command == Command::VerifySzarek {
                want_line(cfg, Some(Distribution1D::rademacher()))?
            } else {
                want_radial(cfg, Some(RadialDist3D::sphere()))?
            };
        }
        Command::NpAnalysis => {
            if !(cfg.a.is_finite() && (1.0..=std::f64::consts::FRAC_PI_3).contains(&cfg.a)) {
                return Err(err("a", format!("must lie in [1, pi/3], got {}", cfg.a)));
            }
        }
        Command::Sweep => {
            let f = cfg.functional.ok_or_else(|| err("functional", "required by sweep"))?;
            let s = need_s(cfg)?;
            if s.values().iter().any(|&x| !(x >= 2.0 && x.is_finite())) {
                return Err(err("s", "sweep grid must lie in [2, inf)"));
            }
            match f {
                Functional::Psi => cfg.dist = want_line(cfg, None)?,
                Functional::Phi => cfg.dist = want_radial(cfg, None)?,
                _ => {}
            }
        }
    }
    if cfg.dist == Some(DistSpec::Empty) && cfg.command != Command::CertifyLemmas {
        return Err(err("dist", "none is only meaningful for certify-lemmas"));
    }
    Ok(())
}

fn parse_f64(field: &str, v: &str) -> Result<f64, ConfigError> {
    v.trim().parse::<f64>().map_err(|_| err(field, format!("expected a number, got {v:?}")))
}

/// `kind` or `kind:c`; the parameter may also come from `param`.
pub fn parse_dist(v: &str, param: Option<&str>) -> Result<DistSpec, ConfigError> {
    let (kind, inline) = match v.split_once(':') {
        Some((k, c)) => (k.trim(), Some(c)),
        None => (v.trim(), None),
    };
    if inline.is_some() && param.is_some() {
        return Err(err("param", "given both inline in dist and separately"));
    }
    let c = match inline.or(param) {
        Some(c) => Some(parse_f64(if inline.is_some() { "dist" } else { "param" }, c)?),
        None => None,
    };
    let need = |c: Option<f64>| c.ok_or_else(|| err("param", format!("{kind} needs a parameter c")));
    let bad = |e: khinchin_core::dist::DistError| err(if inline.is_some() { "dist" } else { "param" }, e.to_string());
    let no_param = |c: Option<f64>| match c {
        Some(_) => Err(err("param", format!("{kind} takes no parameter"))),
        None => Ok(()),
    };
    Ok(match kind {
        "rademacher" => {
            no_param(c)?;
            DistSpec::Line(Distribution1D::rademacher())
        }
        "two-point" => DistSpec::Line(make_perturbed_rademacher(Kind1D::TwoPoint { c: need(c)? }).map_err(bad)?),
        "four-point" => DistSpec::Line(make_perturbed_rademacher(Kind1D::FourPoint { c: need(c)? }).map_err(bad)?),
        "uniform-noise" => DistSpec::Line(make_perturbed_rademacher(Kind1D::UniformNoise { c: need(c)? }).map_err(bad)?),
        "sphere" => {
            no_param(c)?;
            DistSpec::Radial(RadialDist3D::sphere())
        }
        "radius-shift" => DistSpec::Radial(make_radial(RadialKind::RadiusShift { c: need(c)? }).map_err(bad)?),
        "radius-two-point" => DistSpec::Radial(make_radial(RadialKind::RadiusTwoPoint { c: need(c)? }).map_err(bad)?),
        "none" => {
            no_param(c)?;
            DistSpec::Empty
        }
        _ => {
            return Err(err(
                "dist",
                format!(
                    "unknown family {kind:?}; expected rademacher, two-point, four-point, uniform-noise, sphere, radius-shift, radius-two-point or none"
                ),
            ))
        }
    })
}

/// A number, `grid(min, max, points[, log|linear])` or `min:max:points[:log|linear]`.
pub fn parse_s(v: &str) -> Result<SSpec, ConfigError> {
    let v = v.trim();
    let parts: Vec<&str> = if let Some(inner) = v.strip_prefix("grid(").and_then(|r| r.strip_suffix(')')) {
        inner.split(',').map(str::trim).collect()
    } else if v.contains(':') {
        v.split(':').map(str::trim).collect()
    } else {
        return Ok(SSpec::Single(parse_f64("s", v)?));
    };
    if !(3..=4).contains(&parts.len()) {
        return Err(err("s", "grid needs min, max, points and optionally log|linear"));
    }
    let min = parse_f64("s", parts[0])?;
    let max = parse_f64("s", parts[1])?;
    let points =
        parts[2].parse::<usize>().map_err(|_| err("s", format!("points must be an integer, got {:?}", parts[2])))?;
    let spacing = match parts.get(3) {
        None | Some(&"linear") => Spacing::Linear,
        Some(&"log") => Spacing::Log,
        Some(x) => return Err(err("s", format!("spacing must be log or linear, got {x:?}"))),
    };
    if !(min.is_finite() && max.is_finite() && min < max) {
        return Err(err("s", "grid needs finite min < max"));
    }
    if points < 2 {
        return Err(err("s", "grid needs at least 2 points"));
    }
    if spacing == Spacing::Log && min <= 0.0 {
        return Err(err("s", "log grid needs min > 0"));
    }
    Ok(SSpec::Grid { min, max, points, spacing })
}

/// One coordinate: a decimal, or `1/√k` (also `1/sqrt(k)`, `1/sqrtk`), with
/// an optional leading minus sign.
fn parse_coord(t: &str) -> Result<f64, ConfigError> {
    let t = t.trim();
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest.trim()),
        None => (1.0, t),
    };
    if let Some(rest) = body.strip_prefix("1/") {
        let rest = rest.trim();
        let k = rest
            .strip_prefix('√')
            .or_else(|| rest.strip_prefix("sqrt"))
            .map(|k| k.trim().trim_start_matches('(').trim_end_matches(')'));
        if let Some(k) = k {
            let k = parse_f64("vector", k)?;
            if !(k > 0.0 && k.is_finite()) {
                return Err(err("vector", format!("1/sqrt(k) needs k > 0, got {k}")));
            }
            return Ok(sign / k.sqrt());
        }
    }
    Ok(sign * parse_f64("vector", body)?)
}

/// Comma-separated coordinates, rescaled to unit norm, or
/// `random(n[, seed][, small|any])`.
pub fn parse_vector(v: &str, default_seed: u64) -> Result<UnitVector, ConfigError> {
    let v = v.trim();
    if let Some(inner) = v.strip_prefix("random(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        let n = parts[0]
            .parse::<usize>()
            .map_err(|_| err("vector", format!("random(n, ...) needs an integer n, got {:?}", parts[0])))?;
        let mut seed = default_seed;
        let mut small = true;
        for p in &parts[1..] {
            match *p {
                "small" | "true" => small = true,
                "any" | "false" => small = false,
                x => {
                    seed = x
                        .parse::<u64>()
                        .map_err(|_| err("vector", format!("random seed must be an integer, got {x:?}")))?
                }
            }
        }
        if n > 64 {
            return Err(err("vector", "random vectors are limited to 64 coordinates"));
        }
        return UnitVector::random(n, seed, small).map_err(|e| err("vector", e.to_string()));
    }
    let coords = v.split(',').map(parse_coord).collect::<Result<Vec<_>, _>>()?;
    UnitVector::normalized(coords).map_err(|e| err("vector", e.to_string()))
}
