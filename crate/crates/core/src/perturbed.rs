//! The perturbed functionals
//!
//! `Psi(s) = (2/(pi sqrt s)) int_0^inf (1 - |phi(u)|^s) u^-2 du` for a symmetric law on the
//! line, and
//!
//! `Phi(s) = (2 sqrt(s) / pi) int_0^inf |kappa(r)|^s dr` for a radial law in R^3
//! (`kappa` the radial characteristic function),
//!
//! their derivatives in `s`, and the quantitative perturbation bounds that
//! compare them with `Psi0` and `Phi0`.

use crate::dist::{regime_s0, Distribution1D, Kind1D, RadialDist3D};
use crate::par;
use crate::quad::{self, Integrand, PeriodicTail, QuadError, QuadOptions, QuadResult, TailModel};
use crate::report::LemmaReport;
use crate::specialfn::{self, gamma_half_ratio, kernel_series, log_kernel_series, SpecialError, LARGE_S};
use serde::Serialize;
use std::f64::consts::{E, FRAC_PI_2, PI, SQRT_2};
use thiserror::Error;

/// Default absolute tolerance for perturbed functionals.
pub const PERTURBED_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbedError {
    #[error("{name} requires {requirement}, got s = {s}")]
    Domain { name: &'static str, requirement: &'static str, s: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("non-finite result at s = {s}")]
    NonFinite { s: f64 },
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

fn require(ok: bool, name: &'static str, requirement: &'static str, s: f64) -> Result<(), PerturbedError> {
    if ok && s.is_finite() {
        Ok(())
    } else {
        Err(PerturbedError::Domain { name, requirement, s })
    }
}

/// Value of `Psi`, `Psi'`, `Phi` or `Phi'` at one `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eval {
    pub s: f64,
    pub value: f64,
    pub uncertainty: f64,
    pub converged: bool,
    pub dist: String,
}

pub type PsiEval = Eval;
pub type PhiEval = Eval;

fn eval_from(s: f64, q: &QuadResult, name: &str) -> Result<Eval, PerturbedError> {
    finite(Eval { s, value: q.value, uncertainty: q.uncertainty(), converged: q.converged, dist: name.to_string() })
}

fn finite(e: Eval) -> Result<Eval, PerturbedError> {
    if e.value.is_finite() && e.uncertainty.is_finite() {
        Ok(e)
    } else {
        Err(PerturbedError::NonFinite { s: e.s })
    }
}

/// `|u^s log u| <= 1/(e s)` on `(0, 1)`.
fn log_sup(s: f64) -> f64 {
    1.0 / (E * s)
}

/// `|cos u|^s ln^n|cos u|`, zero where `cos u = 0`.
fn cos_pow_log(u: f64, s: f64, n: i32) -> f64 {
    let l = specialfn::ln_abs_cos(u);
    if l == f64::NEG_INFINITY {
        0.0
    } else {
        (s * l).exp() * l.powi(n)
    }
}

/// Law on the line whose `|cf|` is a fast `|cos u|` times a slowly varying
/// factor `m(c u)`.
#[derive(Debug, Clone, Copy)]
enum Slow {
    Cos,
    Sinc,
}

enum LineTail {
    /// `|cf(u)| = |cos(lambda u)|`.
    Periodic {
        lambda: f64,
    },
    Modulated {
        c: f64,
        slow: Slow,
    },
}

fn line_tail(d: &Distribution1D) -> LineTail {
    match d.kind {
        Kind1D::TwoPoint { c } => LineTail::Periodic { lambda: 1.0 + c },
        Kind1D::FourPoint { c: 0.0 } | Kind1D::UniformNoise { c: 0.0 } => LineTail::Periodic { lambda: 1.0 },
        Kind1D::FourPoint { c } => LineTail::Modulated { c, slow: Slow::Cos },
        Kind1D::UniformNoise { c } => LineTail::Modulated { c, slow: Slow::Sinc },
    }
}

/// Mean of `|cos|^s` over a period: `Gamma((s+1)/2) / (sqrt(pi) Gamma(s/2 + 1))`.
fn cos_power_mean(s: f64) -> f64 {
    gamma_half_ratio(0.5 * s).0 / (PI.sqrt() * 0.5 * s)
}

/// `c int_{cT}^inf m(v)^s ln^n m(v) v^-2 dv` with `m = |cos|` or `|sinc|`.
fn slow_integral(s: f64, slow: Slow, log: bool, c: f64, t0: f64, tol: f64) -> Result<QuadResult, QuadError> {
    let n = i32::from(log);
    let start = c * t0;
    let f = match slow {
        Slow::Cos => Integrand::new(move |v: f64| cos_pow_log(v, s, n) / (v * v)).with_period(PI, FRAC_PI_2).with_tail(
            TailModel::Periodic(if log {
                PeriodicTail::new(PI, FRAC_PI_2, 2.0).term(0, log_sup(s), move |v| cos_pow_log(v, s, 1))
            } else {
                PeriodicTail::new(PI, FRAC_PI_2, 2.0).term(0, 1.0, move |v| cos_pow_log(v, s, 0))
            }),
        ),
        Slow::Sinc => {
            let sin_pow = move |v: f64| v.sin().abs().powf(s);
            let tail = if log {
                PeriodicTail::new(PI, 0.0, s + 2.0)
                    .term(0, log_sup(s), move |v: f64| {
                        let a = v.sin().abs();
                        if a == 0.0 {
                            0.0
                        } else {
                            a.powf(s) * a.ln()
                        }
                    })
                    .term(1, 1.0, move |v| -sin_pow(v))
            } else {
                PeriodicTail::new(PI, 0.0, s + 2.0).term(0, 1.0, sin_pow)
            };
            Integrand::new(move |v: f64| {
                let l = specialfn::ln_abs_sinc(v);
                if l == f64::NEG_INFINITY {
                    0.0
                } else {
                    (s * l).exp() * l.powi(n) / (v * v)
                }
            })
            .with_period(PI, 0.0)
            .with_tail(TailModel::Periodic(tail))
        }
    };
    let q = quad::integrate_from(&f, start, tol / c, &QuadOptions::default())?;
    Ok(q.scaled(c, 0.0))
}

/// Largest number of fast periods integrated before a modulated tail.
const MAX_MODULATED_PERIODS: f64 = 8192.0;

/// `int_0^inf K(u) u^-2 du` with `K = 1 - |cf|^s` (`log = false`) or
/// `K = |cf|^s ln|cf|` (`log = true`).
pub(crate) fn line_integral(s: f64, d: &Distribution1D, log: bool, tol: f64) -> Result<QuadResult, QuadError> {
    let k = d.log_cf_series();
    let series = if log { log_kernel_series(s, k) } else { kernel_series(s, k) };
    let kernel = move |u: f64| {
        let l = d.ln_abs_cf(u);
        if log {
            if l == f64::NEG_INFINITY {
                0.0
            } else {
                (s * l).exp() * l / (u * u)
            }
        } else {
            -(s * l).exp_m1() / (u * u)
        }
    };
    match line_tail(d) {
        LineTail::Periodic { lambda } => {
            let (period, phase) = (PI / lambda, FRAC_PI_2 / lambda);
            let tail = if log {
                PeriodicTail::new(period, phase, 2.0).term(0, log_sup(s), move |u| cos_pow_log(lambda * u, s, 1))
            } else {
                PeriodicTail::new(period, phase, 2.0)
                    .term(0, 1.0, move |u| -(s * specialfn::ln_abs_cos(lambda * u)).exp_m1())
            };
            let f = Integrand::new(kernel)
                .with_series(series)
                .with_period(period, phase)
                .with_tail(TailModel::Periodic(tail));
            quad::integrate_semi_infinite(&f, tol)
        }
        LineTail::Modulated { c, slow } => {
            // |cf(u)|^s = |cos u|^s m(cu)^s. Past T the fast factor is replaced by
            // its period mean; two integrations by parts bound the error by
            // 2 P^2 int_T^inf |g''| with g = m^s (ln m^s) / u^2.
            let weight = if log { 4.0 } else { 1.0 };
            let bound_at =
                |t: f64| 2.0 * PI * PI * weight * (s * s * c * c / t + 2.0 * s * c / (t * t) + 2.0 / t.powi(3));
            let mut k = 64.0;
            while bound_at(FRAC_PI_2 + k * PI) > 0.25 * tol && k < MAX_MODULATED_PERIODS {
                k *= 2.0;
            }
            let cutoff = FRAC_PI_2 + k * PI;
            let model_err = bound_at(cutoff);
            let f = Integrand::new(kernel).with_series(series).with_period(PI, FRAC_PI_2);
            let head = quad::integrate_finite(&f, 0.0, cutoff, 0.5 * tol)?;
            let mean = cos_power_mean(s);
            let s0 = slow_integral(s, slow, false, c, cutoff, 0.1 * tol)?;
            let (tail, tail_err, conv) = if log {
                // mean of |cos|^s ln|cos| over a period
                let g = Integrand::new(move |u: f64| cos_pow_log(u, s, 1));
                let lm = quad::integrate_finite(&g, -FRAC_PI_2, FRAC_PI_2, 1e-14)?;
                let lmean = lm.value / PI;
                let s1 = slow_integral(s, slow, true, c, cutoff, 0.1 * tol)?;
                (
                    lmean * s0.value + mean * s1.value,
                    lmean.abs() * s0.uncertainty() + lm.uncertainty() / PI * s0.value.abs() + mean * s1.uncertainty(),
                    s0.converged && s1.converged && lm.converged,
                )
            } else {
                (1.0 / cutoff - mean * s0.value, mean * s0.uncertainty(), s0.converged)
            };
            Ok(QuadResult {
                value: head.value + tail,
                abs_error_est: head.abs_error_est,
                tail_bound: tail_err + model_err,
                cutoff,
                panels: head.panels,
                converged: head.converged && conv && model_err <= 0.25 * tol,
            })
        }
    }
}

/// `Psi(s)` with the default tolerance.
pub fn psi(s: f64, d: &Distribution1D) -> Result<PsiEval, PerturbedError> {
    psi_with(s, d, PERTURBED_TOL)
}

pub fn psi_with(s: f64, d: &Distribution1D, tol: f64) -> Result<PsiEval, PerturbedError> {
    require(s >= 1.0, "psi", "s >= 1", s)?;
    let scale = 2.0 / (PI * s.sqrt());
    let q = line_integral(s, d, false, tol / scale)?;
    eval_from(s, &q.scaled(scale, 0.0), &d.name)
}

/// `Psi'(s) = -Psi(s)/(2s) - (2/(pi sqrt s)) int_0^inf |cf|^s ln|cf| u^-2 du`.
pub fn psi_prime(s: f64, d: &Distribution1D) -> Result<PsiEval, PerturbedError> {
    psi_prime_with(s, d, PERTURBED_TOL)
}

pub fn psi_prime_with(s: f64, d: &Distribution1D, tol: f64) -> Result<PsiEval, PerturbedError> {
    require(s >= 2.0, "psi_prime", "s >= 2", s)?;
    let scale = 2.0 / (PI * s.sqrt());
    let value = psi_with(s, d, tol)?;
    let q = line_integral(s, d, true, 0.5 * tol / scale)?;
    finite(Eval {
        s,
        value: -value.value / (2.0 * s) - scale * q.value,
        uncertainty: value.uncertainty / (2.0 * s) + scale * q.uncertainty(),
        converged: value.converged && q.converged,
        dist: d.name.clone(),
    })
}

/// Largest cutoff used with the envelope tail of radial laws.
const RADIAL_MAX_CUTOFF: f64 = 1.0e6;

/// `int_0^inf |kappa(r)|^s ln^n|kappa(r)| dr` for `n = 0, 1`.
pub(crate) fn radial_integral(s: f64, d: &RadialDist3D, log: bool, tol: f64) -> Result<QuadResult, QuadError> {
    let n = i32::from(log);
    if s >= LARGE_S {
        return radial_rescaled(s, d, n, tol);
    }
    let kernel = move |r: f64| {
        let l = d.ln_abs_cf(r);
        if l == f64::NEG_INFINITY {
            0.0
        } else {
            (s * l).exp() * l.powi(n)
        }
    };
    if let Some(lambda) = d.fixed_radius() {
        // kappa(r) = sin(lambda r) / (lambda r): integrate in u = lambda r,
        // where |kappa|^s = |sin u|^s u^-s.
        let g = move |u: f64| kernel(u / lambda);
        let sin_pow = move |u: f64| u.sin().abs().powf(s);
        let tail = PeriodicTail::new(PI, 0.0, s);
        let tail = if log {
            tail.term(0, log_sup(s), move |u: f64| {
                let a = u.sin().abs();
                if a == 0.0 {
                    0.0
                } else {
                    a.powf(s) * a.ln()
                }
            })
            .term(1, 1.0, move |u: f64| -sin_pow(u))
        } else {
            tail.term(0, 1.0, sin_pow)
        };
        let f = Integrand::new(g).with_period(PI, 0.0).with_tail(TailModel::Periodic(tail));
        return Ok(quad::integrate_semi_infinite(&f, tol * lambda)?.scaled(1.0 / lambda, 0.0));
    }
    // |kappa(r)| <= C0 / r: bracket the tail between 0 and the envelope. The
    // log tail uses the s-derivative of the same bracket, so value and
    // derivative stay consistent.
    let c0 = d.decay_c0();
    let env_at = |t: f64| envelope_tail(c0, s, t);
    let mut cutoff = 64.0 * PI;
    while env_at(cutoff) > tol && cutoff < RADIAL_MAX_CUTOFF {
        cutoff *= 2.0;
    }
    let cutoff = cutoff.clamp(64.0 * PI, RADIAL_MAX_CUTOFF);
    let f = Integrand::new(kernel).with_period(PI, 0.0);
    let head = quad::integrate_finite(&f, 0.0, cutoff, 0.5 * tol)?;
    let env = env_at(cutoff);
    let half = if log { -0.5 * env * ((cutoff / c0).ln() + 1.0 / (s - 1.0)) } else { 0.5 * env };
    Ok(QuadResult {
        value: head.value + half,
        tail_bound: half.abs(),
        converged: head.converged && half.abs() <= 0.5 * tol,
        ..head
    })
}

/// `int_t^inf (c0/r)^s dr = c0^s t^(1-s) / (s-1)`, in log space since `c0^s`
/// alone may overflow.
fn envelope_tail(c0: f64, s: f64, t: f64) -> f64 {
    (s * c0.ln() + (1.0 - s) * t.ln() - (s - 1.0).ln()).exp()
}

/// Rescaled route `v = r sqrt(s)` for large `s`.
fn radial_rescaled(s: f64, d: &RadialDist3D, n: i32, tol: f64) -> Result<QuadResult, QuadError> {
    let root = s.sqrt();
    let f = Integrand::new(move |v: f64| {
        let l = d.ln_abs_cf(v / root);
        if l == f64::NEG_INFINITY {
            0.0
        } else {
            (s * l).exp() * l.powi(n)
        }
    });
    let c0 = d.decay_c0();
    let x = (2.0 * E * c0).max(PI);
    // Past r = x: |kappa|^s |log kappa|^n <= (c0/r)^s log^n(r/c0).
    let lx = (x / c0).ln() + 1.0 / (s - 1.0);
    let bound = envelope_tail(c0, s, x) * (1.0 + lx).powi(2 * n);
    let mut breaks = vec![0.0];
    let mut b = 1.0;
    while b < x * root {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(x * root);
    let q = quad::integrate_partition(&f, &breaks, tol * root, &QuadOptions::default())?;
    let sign = if n % 2 == 1 { -1.0 } else { 1.0 };
    Ok(QuadResult {
        value: q.value / root + sign * 0.5 * bound,
        abs_error_est: q.abs_error_est / root,
        tail_bound: 0.5 * bound,
        ..q
    })
}

/// `Phi(s)` with the default tolerance.
pub fn phi3(s: f64, d: &RadialDist3D) -> Result<PhiEval, PerturbedError> {
    phi3_with(s, d, PERTURBED_TOL)
}

pub fn phi3_with(s: f64, d: &RadialDist3D, tol: f64) -> Result<PhiEval, PerturbedError> {
    require(s >= 2.0, "phi3", "s >= 2", s)?;
    let c0 = d.decay_c0();
    if !(c0.is_finite() && c0 > 0.0) {
        return Err(PerturbedError::Precondition("decay constant C0 must be finite".into()));
    }
    let scale = 2.0 * s.sqrt() / PI;
    let q = radial_integral(s, d, false, tol / scale)?;
    eval_from(s, &q.scaled(scale, 0.0), &d.name)
}

/// `Phi'(s) = Phi(s)/(2s) + (2 sqrt(s)/pi) int_0^inf |kappa|^s ln|kappa| dr`.
pub fn phi3_prime(s: f64, d: &RadialDist3D) -> Result<PhiEval, PerturbedError> {
    phi3_prime_with(s, d, PERTURBED_TOL)
}

pub fn phi3_prime_with(s: f64, d: &RadialDist3D, tol: f64) -> Result<PhiEval, PerturbedError> {
    let value = phi3_with(s, d, tol)?;
    let scale = 2.0 * s.sqrt() / PI;
    let q = radial_integral(s, d, true, 0.5 * tol / scale)?;
    finite(Eval {
        s,
        value: value.value / (2.0 * s) + scale * q.value,
        uncertainty: value.uncertainty / (2.0 * s) + scale * q.uncertainty(),
        converged: value.converged && q.converged,
        dist: d.name.clone(),
    })
}

/// `(2/pi) sqrt(2 delta (delta + 2))`.
pub fn psi_unif_bound(delta: f64) -> f64 {
    2.0 / PI * (2.0 * delta * (delta + 2.0)).sqrt()
}

/// `0.62 sqrt(delta (delta + 2))`.
pub fn der_psi_unif_bound(delta: f64) -> f64 {
    0.62 * (delta * (delta + 2.0)).sqrt()
}

/// `2^{11/4}/(3 pi) s^{3/4} (delta(delta+2))^{1/4} (C0^2 + 1)^{3/4}`.
pub fn phi_bulk_bound(s: f64, delta: f64, c0: f64) -> f64 {
    2f64.powf(2.75) / (3.0 * PI) * s.powf(0.75) * (delta * (delta + 2.0)).powf(0.25) * (c0 * c0 + 1.0).powf(0.75)
}

/// Two-term bound on `|Phi' - Phi0'|`.
pub fn phi_der_bound(s: f64, delta: f64, c0: f64) -> f64 {
    let dd = delta * (delta + 2.0);
    2f64.powf(1.75) / (3.0 * PI) * dd.powf(0.25) * (c0 * c0 + 1.0).powf(0.75) * s.powf(-0.25)
        + 1.04 * dd.powf(1.0 / 7.0) * (c0.powf(1.5) + 1.0).powf(6.0 / 7.0) * s.sqrt()
}

/// Simplified form `s^{-1/4} delta^{1/4} C1^{3/2} + 2.1 s^{1/2} delta^{1/7} C1^{9/7}`.
pub fn phi_der_bound_simplified(s: f64, delta: f64, c1: f64) -> f64 {
    s.powf(-0.25) * delta.powf(0.25) * c1.powf(1.5) + 2.1 * s.sqrt() * delta.powf(1.0 / 7.0) * c1.powf(9.0 / 7.0)
}

fn deviation_section(id: &str, rows: &[(f64, f64, f64, f64, f64, bool)], what: &str) -> LemmaReport {
    // rows: (s, perturbed, reference, uncertainty, bound, converged)
    let mut r = LemmaReport::new(id).input("points", rows.len());
    let mut margin = f64::INFINITY;
    let mut bound = f64::NAN;
    let mut unc = 0.0;
    for &(s, v, v0, u, b, conv) in rows {
        r.quantity(format!("{what}(s={s})"), v, u);
        r.quantity(format!("{what}0(s={s})"), v0, 0.0);
        let m = b - (v - v0).abs();
        r.tolerance_met &= conv;
        if m - u < margin - unc || margin.is_infinite() {
            margin = m;
            bound = b;
            unc = u;
        }
    }
    if rows.is_empty() {
        return r.reject("empty s grid");
    }
    r.conclude(bound, margin, unc)
}

/// Checks `|Psi - Psi0|` (for `s >= 1`) and `|Psi' - Psi0'|` (for `s >= 2`)
/// against their uniform bounds, with `delta` the law's W2 distance.
pub fn lemma_psi_bounds(d: &Distribution1D, s_grid: &[f64]) -> LemmaReport {
    lemma_psi_bounds_with(d, s_grid, PERTURBED_TOL)
}

pub fn lemma_psi_bounds_with(d: &Distribution1D, s_grid: &[f64], tol: f64) -> LemmaReport {
    let delta = d.w2_rademacher();
    if s_grid.iter().any(|&s| !(s >= 1.0 && s.is_finite())) {
        return LemmaReport::new("Psi-unif").input("dist", d).reject("s grid must lie in [1, inf)");
    }
    let rows: Vec<Result<_, PerturbedError>> = par::map_slice(s_grid, |&s| {
        let v = psi_with(s, d, tol)?;
        let v0 = specialfn::psi0_gamma(s)?;
        let der = if s >= 2.0 {
            let p = psi_prime_with(s, d, tol)?;
            let p0 = specialfn::psi0_prime(s)?;
            Some((s, p.value, p0.value, p.uncertainty + p0.uncertainty, der_psi_unif_bound(delta), p.converged))
        } else {
            None
        };
        Ok(((s, v.value, v0.value, v.uncertainty + v0.uncertainty, psi_unif_bound(delta), v.converged), der))
    });
    let mut values = Vec::new();
    let mut ders = Vec::new();
    for row in rows {
        match row {
            Ok((v, der)) => {
                values.push(v);
                ders.extend(der);
            }
            Err(e) => return LemmaReport::new("Psi-unif").input("dist", d).reject(e.to_string()),
        }
    }
    let mut sections = vec![deviation_section("Psi-unif", &values, "Psi")];
    if !ders.is_empty() {
        sections.push(deviation_section("DerPsi-unif", &ders, "dPsi"));
    }
    let mut r = LemmaReport::from_sections("Psi-bounds", sections);
    r.inputs.insert("dist".into(), serde_json::to_value(d).unwrap_or_default());
    r.inputs.insert("delta".into(), delta.into());
    r
}

/// The two regimes behind `Psi(s) >= Psi(2)`: `2 eta <= Psi0(3) - Psi0(2)` for
/// `s >= 3`, and `0.017 - 0.62 sqrt(delta(delta+2)) > 0` on `(2, 3)`.
pub fn psi2_regimes(delta: f64) -> LemmaReport {
    let eta = psi_unif_bound(delta);
    let p2 = specialfn::psi0_gamma(2.0);
    let p3 = specialfn::psi0_gamma(3.0);
    let (p2, p3) = match (p2, p3) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return LemmaReport::new("Psi2-regimes").reject("psi0 evaluation failed"),
    };
    let gap = p3.value - p2.value;
    let mut large = LemmaReport::new("Psi2-regimes/s>=3").input("delta", delta);
    large.quantity("eta", eta, 0.0);
    large.quantity("psi0(3)-psi0(2)", gap, p2.uncertainty + p3.uncertainty);
    let large = large.conclude(gap, gap - 2.0 * eta, p2.uncertainty + p3.uncertainty);
    let mut small = LemmaReport::new("Psi2-regimes/2<s<3").input("delta", delta);
    let slope = 0.017 - der_psi_unif_bound(delta);
    small.quantity("0.017 - 0.62 sqrt(delta(delta+2))", slope, 0.0);
    let small = small.conclude(0.0, slope, 0.0);
    let mut r = LemmaReport::from_sections("Psi2-regimes", vec![large, small]);
    r.inputs.insert("delta".into(), delta.into());
    r
}

/// Checks `|Phi - Phi0|` and `|Phi' - Phi0'|` against their bounds.
pub fn lemma_phi_bounds(d: &RadialDist3D, s_grid: &[f64]) -> LemmaReport {
    lemma_phi_bounds_with(d, s_grid, PERTURBED_TOL)
}

pub fn lemma_phi_bounds_with(d: &RadialDist3D, s_grid: &[f64], tol: f64) -> LemmaReport {
    let delta = d.w2_sphere();
    let c0 = d.decay_c0();
    if s_grid.iter().any(|&s| !(s >= 2.0 && s.is_finite())) {
        return LemmaReport::new("Phi-bounds").input("dist", d).reject("s grid must lie in [2, inf)");
    }
    let rows: Vec<Result<_, PerturbedError>> = par::map_slice(s_grid, |&s| {
        let v = phi3_with(s, d, tol)?;
        let v0 = specialfn::phi0_with(s, 0, tol.max(1e-12))?;
        let p = phi3_prime_with(s, d, tol)?;
        let p0 = specialfn::phi0_with(s, 1, tol.max(1e-12))?;
        Ok((
            (
                s,
                v.value,
                v0.value,
                v.uncertainty + v0.uncertainty,
                phi_bulk_bound(s, delta, c0),
                v.converged && v0.converged,
            ),
            (
                s,
                p.value,
                p0.value,
                p.uncertainty + p0.uncertainty,
                phi_der_bound(s, delta, c0),
                p.converged && p0.converged,
            ),
        ))
    });
    let mut values = Vec::new();
    let mut ders = Vec::new();
    for row in rows {
        match row {
            Ok((v, p)) => {
                values.push(v);
                ders.push(p);
            }
            Err(e) => return LemmaReport::new("Phi-bounds").input("dist", d).reject(e.to_string()),
        }
    }
    let mut der = deviation_section("Phi-der", &ders, "dPhi");
    let c1 = c0.max(1.0);
    for &(s, ..) in &ders {
        der.quantity(format!("simplified_bound(s={s})"), phi_der_bound_simplified(s, delta, c1), 0.0);
    }
    let mut r = LemmaReport::from_sections("Phi-bounds", vec![deviation_section("Phi-bulk", &values, "Phi"), der]);
    r.inputs.insert("dist".into(), serde_json::to_value(d).unwrap_or_default());
    r.inputs.insert("delta".into(), delta.into());
    r.inputs.insert("C0".into(), c0.into());
    r
}

/// `points` values from `min` to `max`, evenly spaced in `log s`.
pub fn log_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![min],
        _ => {
            let (a, b) = (min.ln(), max.ln());
            let mut g: Vec<f64> = (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect();
            g[0] = min;
            g[points - 1] = max;
            g
        }
    }
}

/// `points` evenly spaced values from `min` to `max`.
pub fn linear_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..points).map(|i| min + (max - min) * i as f64 / (points - 1) as f64).collect(),
    }
}

/// Geometric grid with 200 points per decade plus the special points
/// `2, 2.01, 3` that fall inside `[min, max]`; sorted, no duplicates.
pub fn scan_grid(min: f64, max: f64) -> Vec<f64> {
    let decades = (max / min).log10().max(0.0);
    let points = ((200.0 * decades).ceil() as usize).max(2);
    let mut g = log_grid(min, max, points);
    g.extend([2.0, 2.01, 3.0].into_iter().filter(|s| (min..=max).contains(s)));
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// `min_s Psi(s) - Psi(2) >= -uncertainty` over `s_grid`.
pub fn psi_monotone_scan(d: &Distribution1D, s_grid: &[f64]) -> LemmaReport {
    let r = LemmaReport::new("Psi2").input("dist", d).input("points", s_grid.len());
    if s_grid.iter().any(|&s| !(s >= 2.0 && s.is_finite())) {
        return r.reject("s grid must lie in [2, inf)");
    }
    let base = match psi(2.0, d) {
        Ok(v) => v,
        Err(e) => return r.reject(e.to_string()),
    };
    let vals = par::map_slice(s_grid, |&s| psi(s, d));
    scan_report(r, &base, vals, 1.0)
}

/// `max_s Phi(s) - Phi(2) <= uncertainty` over `s_grid`.
pub fn phi_dominance_scan(d: &RadialDist3D, s_grid: &[f64]) -> LemmaReport {
    let r = LemmaReport::new("Phi2").input("dist", d).input("points", s_grid.len());
    if s_grid.iter().any(|&s| !(s >= 2.0 && s.is_finite())) {
        return r.reject("s grid must lie in [2, inf)");
    }
    let base = match phi3(2.0, d) {
        Ok(v) => v,
        Err(e) => return r.reject(e.to_string()),
    };
    let vals = par::map_slice(s_grid, |&s| phi3(s, d));
    scan_report(r, &base, vals, -1.0)
}

/// Margin `sign * (value(s) - value(2))`, minimized over the grid.
fn scan_report(mut r: LemmaReport, base: &Eval, vals: Vec<Result<Eval, PerturbedError>>, sign: f64) -> LemmaReport {
    r.quantity("value(s=2)", base.value, base.uncertainty);
    let mut worst: Option<(f64, f64, f64)> = None;
    for v in vals {
        let v = match v {
            Ok(v) => v,
            Err(e) => return r.reject(e.to_string()),
        };
        r.tolerance_met &= v.converged;
        let m = sign * (v.value - base.value);
        let u = v.uncertainty + base.uncertainty;
        if worst.is_none_or(|(wm, wu, _)| m + u < wm + wu) {
            worst = Some((m, u, v.s));
        }
    }
    match worst {
        Some((m, u, s)) => {
            r.quantity("worst_s", s, 0.0);
            r.conclude(base.value, m, u)
        }
        None => r.reject("empty s grid"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussBoundInput {
    pub delta: f64,
    pub c0: f64,
    pub m3: f64,
    pub theta: f64,
    pub s: f64,
}

impl GaussBoundInput {
    /// `theta = 1/(100 m3)`.
    pub fn with_default_theta(delta: f64, c0: f64, m3: f64, s: f64) -> Self {
        Self { delta, c0, m3, theta: 1.0 / (100.0 * m3), s }
    }

    /// `alpha = (1/sqrt(3) - delta)^2 - theta m3 / 3`.
    pub fn alpha(&self) -> f64 {
        (1.0 / 3f64.sqrt() - self.delta).powi(2) - self.theta * self.m3 / 3.0
    }

    pub fn validate(&self) -> Result<(), PerturbedError> {
        let GaussBoundInput { delta, c0, m3, theta, s } = *self;
        let fail = |m: String| Err(PerturbedError::Precondition(m));
        if !(delta >= 0.0 && delta.is_finite()) {
            return fail(format!("delta = {delta} must be finite and >= 0"));
        }
        if delta >= 1.0 / 3f64.sqrt() {
            return fail(format!("delta = {delta} must be < 1/sqrt(3)"));
        }
        if !(c0 > 0.0 && c0.is_finite()) {
            return fail(format!("C0 = {c0} must be positive"));
        }
        if c0 > PI / E && delta > (15.0 * c0).powi(-2) {
            return fail(format!("delta = {delta} must be <= (15 C0)^-2 when C0 > pi/e"));
        }
        if !(m3 > 0.0 && m3.is_finite()) {
            return fail(format!("E|X|^3 = {m3} must be positive"));
        }
        let upper = (1.0 - delta * 3f64.sqrt()).powi(2) / (3.0 * m3);
        if !(theta > 0.0 && theta < upper) {
            return fail(format!("theta = {theta} must lie in (0, {upper})"));
        }
        if !(s >= 2.0 && s.is_finite()) {
            return fail(format!("s = {s} must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussTailBound {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub total: f64,
}

/// `A1 + A2 + A3`, an upper bound on `Phi(s)` that does not grow with `s`.
pub fn gauss_tail_bound(inp: &GaussBoundInput) -> Result<GaussTailBound, PerturbedError> {
    inp.validate()?;
    let GaussBoundInput { delta, c0, m3, theta, s } = *inp;
    let k = (6.0 / PI).sqrt();
    let a1 = k * ((1.0 - delta * 3f64.sqrt()).powi(2) - theta * m3).powf(-0.5);
    let a2 = k * (-s * (theta * theta / 6.0 - 26.0 * delta * (delta + 2.0))).exp();
    let a3 = 2.0 * c0 * (s.sqrt() + 2.0 / s.sqrt()) * (-s).exp();
    Ok(GaussTailBound { a1, a2, a3, total: a1 + a2 + a3 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineInput {
    pub delta: f64,
    pub c0: f64,
    pub m3: f64,
}

impl PipelineInput {
    pub fn from_dist(d: &RadialDist3D) -> Self {
        Self { delta: d.w2_sphere(), c0: d.decay_c0(), m3: d.third_moment() }
    }
}

/// The three-regime argument for `Phi(s) <= Phi(2)`, evaluated on its bound
/// expressions.
pub fn regime_pipeline(inp: &PipelineInput) -> LemmaReport {
    let PipelineInput { delta, c0, m3 } = *inp;
    let c1 = c0.max(1.0);
    let s0 = regime_s0(c1, m3);
    let limit = 1.0 / 150.0;

    let mut large = LemmaReport::new("Phi2-regimes/large-s").input("s0", s0);
    let gin = GaussBoundInput::with_default_theta(delta, c0, m3, s0);
    let a4 = 2f64.powf(1.75) * delta.powf(0.25) * c1.powf(1.5);
    large.quantity("A4", a4, 0.0);
    let large = match gauss_tail_bound(&gin) {
        Ok(g) => {
            large.quantity("A1", g.a1, 0.0);
            large.quantity("A2", g.a2, 0.0);
            large.quantity("A3", g.a3, 0.0);
            let checks = [
                ("A1 < sqrt(2) - 1/50", SQRT_2 - 0.02 - g.a1),
                ("A2 <= 1/150", limit - g.a2),
                ("A3 <= 1/150", limit - g.a3),
                ("A4 <= 1/150", limit - a4),
                ("sqrt(2) - A4 - (A1 + A2 + A3)", SQRT_2 - a4 - g.total),
            ];
            let worst = checks.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            for (name, m) in checks {
                large.quantity(name, m, 0.0);
            }
            large.conclude(limit, worst, 0.0)
        }
        Err(e) => {
            large.note(e.to_string());
            large.conclude(limit, f64::NEG_INFINITY, 0.0)
        }
    };

    let mut moderate = LemmaReport::new("Phi2-regimes/moderate-s").input("s0", s0);
    let err = 3.0 * s0.powf(0.75) * delta.powf(0.25) * c1.powf(1.5);
    moderate.quantity("3 s0^{3/4} delta^{1/4} C1^{3/2}", err, 0.0);
    let moderate = moderate.conclude(2e-4, 2e-4 - err, 0.0);

    let mut small = LemmaReport::new("Phi2-regimes/small-s");
    let slope = -0.02 + (delta * c1.powi(6)).powf(0.25) + 3.0 * (delta * c1.powi(9)).powf(1.0 / 7.0);
    small.quantity("upper bound on Phi'(s), 2 <= s <= 2.01", slope, 0.0);
    let small = small.conclude(0.0, -slope, 0.0);

    let mut r = LemmaReport::from_sections("Phi2-regimes", vec![large, moderate, small]);
    r.inputs.insert("delta".into(), delta.into());
    r.inputs.insert("C0".into(), c0.into());
    r.inputs.insert("m3".into(), m3.into());
    r
}

/// [`regime_pipeline`] for a law, optionally overriding `delta`; without an
/// override the small-`s` regime is also checked numerically on `[2, 2.01]`.
pub fn regime_pipeline_for(d: &RadialDist3D, delta_override: Option<f64>) -> LemmaReport {
    let mut inp = PipelineInput::from_dist(d);
    if let Some(delta) = delta_override {
        inp.delta = delta;
    }
    let mut r = regime_pipeline(&inp);
    r.inputs.insert("dist".into(), serde_json::to_value(d).unwrap_or_default());
    if delta_override.is_some() {
        r.note("delta overridden; law used for C0 and E|X|^3 only");
        return r;
    }
    let grid: Vec<f64> = (0..5).map(|i| 2.0 + 0.0025 * i as f64).collect();
    let ders = par::map_slice(&grid, |&s| phi3_prime(s, d));
    let mut num = LemmaReport::new("Phi2-regimes/small-s-numeric");
    let mut worst = f64::INFINITY;
    let mut unc = 0.0;
    for v in ders {
        match v {
            Ok(v) => {
                num.quantity(format!("Phi'(s={})", v.s), v.value, v.uncertainty);
                num.tolerance_met &= v.converged;
                if -v.value < worst {
                    worst = -v.value;
                    unc = v.uncertainty;
                }
            }
            Err(e) => return r.reject(e.to_string()),
        }
    }
    let num = num.conclude(0.0, worst, unc);
    let mut sections = std::mem::take(&mut r.sections);
    sections.push(num);
    let inputs = std::mem::take(&mut r.inputs);
    let mut out = LemmaReport::from_sections("Phi2-regimes", sections);
    out.inputs = inputs;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{make_perturbed_rademacher, make_radial, RadialKind};
    use crate::report::Verdict;
    use crate::specialfn::Method;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn two_point(c: f64) -> Distribution1D {
        make_perturbed_rademacher(Kind1D::TwoPoint { c }).unwrap()
    }

    #[test]
    fn psi_reduces_to_psi0_for_rademacher() {
        let r = Distribution1D::rademacher();
        let v = psi(2.0, &r).unwrap();
        assert!((v.value - FRAC_1_SQRT_2).abs() <= 1e-8, "{v:?}");
        for s in [3.0, 5.0, 10.0] {
            let v = psi(s, &r).unwrap();
            let v0 = specialfn::psi0(s, Method::GammaClosedForm).unwrap().value;
            assert!((v.value - v0).abs() <= v.uncertainty + 1e-12, "s={s}");
        }
    }

    #[test]
    fn psi_two_point_endpoint() {
        let c = 1e-3;
        let v = psi(2.0, &two_point(c)).unwrap();
        assert!((v.value - (1.0 + c) * FRAC_1_SQRT_2).abs() <= 1e-8);
    }

    #[test]
    fn psi_prime_reduces_to_psi0_prime() {
        let r = Distribution1D::rademacher();
        for s in [2.0, 2.5, 3.0] {
            let v = psi_prime(s, &r).unwrap();
            let v0 = specialfn::psi0_prime(s).unwrap().value;
            assert!((v.value - v0).abs() <= v.uncertainty + 1e-12, "s={s}: {} vs {v0}", v.value);
        }
    }

    #[test]
    fn modulated_tail_matches_long_direct_integration() {
        // Four-point law at moderate s: compare against integrating far out
        // with a crude 1/u^2 bracket.
        let d = make_perturbed_rademacher(Kind1D::FourPoint { c: 1e-3 }).unwrap();
        let s = 3.0;
        let fast = line_integral(s, &d, false, 1e-10).unwrap();
        let series = kernel_series(s, d.log_cf_series());
        let dd = &d;
        let f = Integrand::new(move |u: f64| -(s * dd.ln_abs_cf(u)).exp_m1() / (u * u))
            .with_series(series)
            .with_period(PI, FRAC_PI_2);
        let far = 4.0e5;
        let slow = quad::integrate_finite(&f, 0.0, far, 1e-11).unwrap();
        // Tail past `far`: 1/far minus the |cf|^s mass, which lies in [0, 1/far].
        let diff = fast.value - slow.value;
        assert!(diff >= -1e-9 && diff <= 1.0 / far + 1e-9, "{diff}");
        assert!(fast.uncertainty() < 1e-8, "{fast:?}");
    }

    #[test]
    fn modulated_log_tail_matches_finite_differences() {
        for d in [
            make_perturbed_rademacher(Kind1D::FourPoint { c: 1e-4 }).unwrap(),
            make_perturbed_rademacher(Kind1D::UniformNoise { c: 1e-2 }).unwrap(),
        ] {
            let s = 2.0;
            let h = 1e-4;
            let f = |x: f64| psi_with(x, &d, 1e-12).unwrap().value;
            let fd = (f(s + h) - f(s - h)) / (2.0 * h);
            let v = psi_prime(s, &d).unwrap();
            assert!((fd - v.value).abs() <= 1e-6, "{}: {fd} vs {}", d.name, v.value);
        }
    }

    #[test]
    fn psi_bounds_hold() {
        let grid = [2.0, 2.5, 3.0, 5.0, 10.0];
        let r = lemma_psi_bounds(&Distribution1D::rademacher(), &grid);
        assert!(r.passed(), "{r:#?}");
        let r = lemma_psi_bounds(&two_point(1e-4), &grid);
        assert!(r.passed() && r.certified, "{r:#?}");
        let d = make_perturbed_rademacher(Kind1D::FourPoint { c: 1e-3 }).unwrap();
        let r = lemma_psi_bounds(&d, &grid);
        assert!(r.passed() && r.certified, "{r:#?}");
    }

    #[test]
    fn der_psi_within_bound_for_two_point() {
        let d = two_point(1e-4);
        let v = psi_prime(2.5, &d).unwrap().value;
        let v0 = specialfn::psi0_prime(2.5).unwrap().value;
        assert!((v - v0).abs() <= der_psi_unif_bound(1e-4));
    }

    #[test]
    fn psi2_regime_constants() {
        let r = psi2_regimes(1e-4);
        assert!(r.passed() && r.certified);
        let r = psi2_regimes(1e-2);
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn phi3_reduces_to_phi0_and_scales() {
        let sphere = RadialDist3D::sphere();
        let v = phi3(2.0, &sphere).unwrap();
        assert!((v.value - SQRT_2).abs() <= 1e-8, "{v:?}");
        for s in [3.0, 10.0] {
            let v = phi3(s, &sphere).unwrap();
            let v0 = specialfn::phi0(s, 0).unwrap();
            assert!((v.value - v0.value).abs() <= v.uncertainty + v0.uncertainty);
        }
        let c = 0.01;
        let shifted = make_radial(RadialKind::RadiusShift { c }).unwrap();
        let v = phi3(2.0, &shifted).unwrap();
        assert!((v.value - SQRT_2 / (1.0 + c)).abs() <= 1e-8, "{v:?}");
    }

    #[test]
    fn phi3_prime_matches_phi0_prime_and_finite_differences() {
        let sphere = RadialDist3D::sphere();
        for s in [2.005, 3.0] {
            let v = phi3_prime(s, &sphere).unwrap();
            let v0 = specialfn::phi0(s, 1).unwrap();
            assert!((v.value - v0.value).abs() <= v.uncertainty + v0.uncertainty, "s={s}");
        }
        assert!(phi3_prime(2.005, &sphere).unwrap().value <= -0.02);
        for d in [
            make_radial(RadialKind::RadiusTwoPoint { c: 1e-6 }).unwrap(),
            make_radial(RadialKind::RadiusShift { c: 0.2 }).unwrap(),
        ] {
            let s = 2.5;
            let h = 1e-4;
            let f = |x: f64| phi3_with(x, &d, 1e-11).unwrap().value;
            let fd = (f(s + h) - f(s - h)) / (2.0 * h);
            let v = phi3_prime(s, &d).unwrap().value;
            assert!((fd - v).abs() <= 1e-6, "{}: {fd} vs {v}", d.name);
        }
    }

    #[test]
    fn phi_bounds_hold() {
        let grid = [2.0, 2.5, 3.0, 10.0];
        assert!(lemma_phi_bounds(&RadialDist3D::sphere(), &grid).passed());
        for d in [
            make_radial(RadialKind::RadiusShift { c: 1e-5 }).unwrap(),
            make_radial(RadialKind::RadiusTwoPoint { c: 1e-5 }).unwrap(),
        ] {
            let r = lemma_phi_bounds(&d, &grid);
            assert!(r.passed() && r.certified, "{r:#?}");
        }
    }

    #[test]
    fn gauss_bound_examples() {
        let g = gauss_tail_bound(&GaussBoundInput { delta: 0.0, c0: 1.0, m3: 1.0, theta: 0.01, s: 1e6 }).unwrap();
        assert!((g.a1 - (6.0 / PI).sqrt() / 0.99f64.sqrt()).abs() < 1e-15);
        assert!(g.total < SQRT_2 && (g.total - 1.389).abs() < 1e-3);
        let g2 = gauss_tail_bound(&GaussBoundInput { delta: 0.0, c0: 1.0, m3: 1.0, theta: 0.01, s: 2.0 }).unwrap();
        assert!(g2.total >= phi3(2.0, &RadialDist3D::sphere()).unwrap().value);
        let bad = GaussBoundInput { delta: 1.0 / 3f64.sqrt(), c0: 1.0, m3: 1.0, theta: 0.01, s: 2.0 };
        assert!(matches!(gauss_tail_bound(&bad), Err(PerturbedError::Precondition(m)) if m.contains("1/sqrt(3)")));
        let bad_theta = GaussBoundInput { delta: 0.0, c0: 1.0, m3: 1.0, theta: 0.5, s: 2.0 };
        assert!(gauss_tail_bound(&bad_theta).is_err());
    }

    #[test]
    fn regime_pipeline_examples() {
        let sphere = RadialDist3D::sphere();
        let r = regime_pipeline_for(&sphere, None);
        assert!(r.passed(), "{r:#?}");
        let tiny = regime_pipeline(&PipelineInput { delta: 1e-38, c0: 1.0, m3: 1.0 });
        assert!(tiny.passed());
        let a4 = tiny.sections[0].computed.iter().find(|q| q.name == "A4").unwrap().value;
        assert!((a4 - 2f64.powf(1.75) * 10f64.powf(-9.5)).abs() < 1e-20 && a4 < 1.0 / 150.0);
        let big = regime_pipeline(&PipelineInput { delta: 1e-3, c0: 1.0, m3: 1.0 });
        assert_eq!(big.verdict, Verdict::Fail);
        assert_eq!(big.sections[1].verdict, Verdict::Fail);
        assert!(big.sections[1].margin < 0.0);
    }

    #[test]
    fn grids() {
        let g = scan_grid(2.0, 1e3);
        assert!(g.contains(&2.01) && g.contains(&3.0) && g[0] == 2.0 && *g.last().unwrap() == 1e3);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!((log_grid(1.0, 100.0, 3)[1] - 10.0).abs() < 1e-12);
        assert_eq!(linear_grid(2.0, 3.0, 3), vec![2.0, 2.5, 3.0]);
    }

    #[test]
    fn monotone_scans_pass() {
        let grid = log_grid(2.0, 100.0, 12);
        let r = psi_monotone_scan(&two_point(1e-4), &grid);
        assert!(r.passed(), "{r:#?}");
        let r = phi_dominance_scan(&RadialDist3D::sphere(), &grid);
        assert!(r.passed(), "{r:#?}");
    }

    #[test]
    fn domain_errors() {
        let r = Distribution1D::rademacher();
        assert!(psi(0.5, &r).is_err());
        assert!(psi_prime(1.5, &r).is_err());
        assert!(phi3(1.5, &RadialDist3D::sphere()).is_err());
    }

    #[test]
    fn large_radius_spread_does_not_overflow() {
        // R = lambda fixed: Phi(s) = Phi0(s) / lambda exactly.
        for c in [-0.5, 0.5] {
            let d = make_radial(RadialKind::RadiusShift { c }).unwrap();
            for s in [3.0, 2000.0, 5e4] {
                let v = phi3(s, &d).unwrap();
                let want = specialfn::phi0(s, 0).unwrap().value / (1.0 + c);
                assert!((v.value - want).abs() < 1e-8, "c={c} s={s}: {} vs {want}", v.value);
            }
        }
        // Gaussian limit sqrt(6/pi) / sqrt(E R^2) with E R^2 = 1 + c^2.
        let d = make_radial(RadialKind::RadiusTwoPoint { c: 0.5 }).unwrap();
        for s in [9e3, 1e6] {
            let v = phi3(s, &d).unwrap();
            let want = specialfn::phi0(s, 0).unwrap().value / 1.25f64.sqrt();
            assert!((v.value - want).abs() < 1e-4, "s={s}: {} vs {want}", v.value);
            assert!(phi3_prime(s, &d).unwrap().value.is_finite());
        }
    }
}
