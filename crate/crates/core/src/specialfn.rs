//! Haagerup's function `Psi0`, Ball's function `Phi0` and the sinc-power
//! integrals `I(s) = int_0^inf |sin u / u|^s du`, each available through at
//! least two independent routes.
//!
//! `Psi0(s) = (2/sqrt(pi s)) Gamma((s+1)/2) / Gamma(s/2)
//!          = sqrt(2/pi) prod_k (1 - (s+2k+1)^-2)^(1/2)
//!          = (2/(pi sqrt s)) int_0^inf (1 - |cos u|^s) u^-2 du`
//!
//! `Phi0(s) = (2 sqrt(s) / pi) I(s)`.

use crate::par;
use crate::quad::{self, EvenSeries, Integrand, PeriodicTail, QuadError, QuadOptions, QuadResult, TailModel};
use serde::Serialize;
use std::f64::consts::{E, PI};
use thiserror::Error;

/// Default absolute tolerance for special-function quadrature.
pub const SPECIAL_TOL: f64 = 1e-10;
/// Default number of explicit factors in the product route.
pub const PRODUCT_TERMS: usize = 1_000_000;
/// From here on `I(s)` is computed in the rescaled variable `v = u sqrt(s)`.
pub const LARGE_S: f64 = 1.0e4;
/// Upper bound on `int_0^inf |sin u/u|^s log^2|sin u/u|` for `s >= 2`.
pub fn second_derivative_bound() -> f64 {
    48.0 * (-2.0f64).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GammaClosedForm,
    InfiniteProduct,
    DirectQuadrature,
    DerivativeSeries,
    DerivativeQuadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpecialValue {
    pub s: f64,
    pub value: f64,
    pub method: Method,
    pub uncertainty: f64,
    /// `false` if the quadrature budget ran out before the tolerance was met.
    pub converged: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecialError {
    #[error("{name} requires {requirement}, got s = {s}")]
    Domain { name: &'static str, requirement: &'static str, s: f64 },
    #[error("product truncation needs at least 10 factors, got {0}")]
    TooFewTerms(usize),
    #[error("unsupported derivative order {0}")]
    Order(u8),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

fn require(ok: bool, name: &'static str, requirement: &'static str, s: f64) -> Result<(), SpecialError> {
    if ok && s.is_finite() {
        Ok(())
    } else {
        Err(SpecialError::Domain { name, requirement, s })
    }
}

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + LANCZOS_G + 0.5;
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

// Gamma(x + 1/2) / (Gamma(x) sqrt(x)) = sum_i c_i x^-i
const HALF_RATIO: [f64; 7] =
    [1.0, -1.0 / 8.0, 1.0 / 128.0, 5.0 / 1024.0, -21.0 / 32768.0, -399.0 / 262_144.0, 869.0 / 4_194_304.0];

/// `Gamma(x + 1/2) / Gamma(x)` with its relative error bound.
pub fn gamma_half_ratio(x: f64) -> (f64, f64) {
    if x >= 40.0 {
        let inv = 1.0 / x;
        let mut acc = 0.0;
        let mut pw = 1.0;
        for c in HALF_RATIO {
            acc += c * pw;
            pw *= inv;
        }
        (x.sqrt() * acc, 1e-3 * pw + 4.0 * f64::EPSILON)
    } else {
        let (la, lb) = (ln_gamma(x + 0.5), ln_gamma(x));
        ((la - lb).exp(), 2e-15 + 2.0 * f64::EPSILON * (la.abs() + lb.abs()))
    }
}

const BERNOULLI: [f64; 7] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0];

/// Hurwitz zeta `sum_{k>=0} (a + k)^-n` for integer `n >= 2` and `a > 0`.
pub fn hurwitz_zeta(n: u32, a: f64) -> f64 {
    assert!(n >= 2 && a > 0.0);
    let nf = n as f64;
    let mut head = 0.0;
    let mut b = a;
    while b < 20.0 {
        head += b.powi(-(n as i32));
        b += 1.0;
    }
    let mut sum = b.powf(1.0 - nf) / (nf - 1.0) + 0.5 * b.powf(-nf);
    let mut poch = nf;
    let mut fact = 2.0;
    let mut pw = b.powf(-nf - 1.0);
    for (j, bern) in BERNOULLI.iter().enumerate() {
        let j = (j + 1) as f64;
        sum += bern / fact * poch * pw;
        poch *= (nf + 2.0 * j - 1.0) * (nf + 2.0 * j);
        fact *= (2.0 * j + 1.0) * (2.0 * j + 2.0);
        pw /= b * b;
    }
    head + sum
}

/// Even expansion of `(1 - phi(u)^s) / u^2` from the cumulants
/// `ln phi(u) = k1 u^2 + k2 u^4 + k3 u^6 + ...`.
pub fn kernel_series(s: f64, k: [f64; 3]) -> EvenSeries {
    let [k1, k2, k3] = k;
    EvenSeries {
        c0: -s * k1,
        c2: -(s * k2 + 0.5 * s * s * k1 * k1),
        c4: -(s * k3 + s * s * k1 * k2 + s * s * s * k1 * k1 * k1 / 6.0),
    }
}

/// Even expansion of `ln phi(u) / u^2`, the log factor in derivative
/// integrands, paired with `phi^s` to first order.
pub fn log_kernel_series(s: f64, k: [f64; 3]) -> EvenSeries {
    let [k1, k2, k3] = k;
    EvenSeries { c0: k1, c2: k2 + s * k1 * k1, c4: k3 + 2.0 * s * k1 * k2 + 0.5 * s * s * k1 * k1 * k1 }
}

/// `ln|cos u|`, accurate near the maxima of `|cos|`.
pub fn ln_abs_cos(u: f64) -> f64 {
    let w = u - PI * (u / PI).round();
    let h = (0.5 * w).sin();
    (-2.0 * h * h).ln_1p()
}

/// `ln|sin u / u|`, accurate near `u = 0`.
pub fn ln_abs_sinc(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        let u2 = u * u;
        -u2 / 6.0 - u2 * u2 / 180.0 - u2 * u2 * u2 / 2835.0
    } else {
        u.sin().abs().ln() - u.abs().ln()
    }
}

/// `Psi0(s)` by the chosen route with default settings.
pub fn psi0(s: f64, method: Method) -> Result<SpecialValue, SpecialError> {
    match method {
        Method::GammaClosedForm => psi0_gamma(s),
        Method::InfiniteProduct => psi0_product(s, PRODUCT_TERMS),
        Method::DirectQuadrature => psi0_quadrature(s, SPECIAL_TOL),
        other => Err(SpecialError::Domain { name: "psi0", requirement: value_method(other), s }),
    }
}

fn value_method(_: Method) -> &'static str {
    "a value method (gamma_closed_form, infinite_product or direct_quadrature)"
}

pub fn psi0_gamma(s: f64) -> Result<SpecialValue, SpecialError> {
    require(s > 0.0, "psi0", "s > 0", s)?;
    let (ratio, rel) = gamma_half_ratio(0.5 * s);
    let value = 2.0 / (PI * s).sqrt() * ratio;
    Ok(SpecialValue {
        s,
        value,
        method: Method::GammaClosedForm,
        uncertainty: value * (rel + 2.0 * f64::EPSILON),
        converged: true,
    })
}

/// Product route with `terms` explicit factors; the remaining factors are
/// folded in through Hurwitz zeta sums.
pub fn psi0_product(s: f64, terms: usize) -> Result<SpecialValue, SpecialError> {
    require(s > 0.0, "psi0", "s > 0", s)?;
    if terms < 10 {
        return Err(SpecialError::TooFewTerms(terms));
    }
    const CHUNK: usize = 1 << 16;
    let chunks = terms.div_ceil(CHUNK);
    let partial = par::map_indexed(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(terms);
        let logs: Vec<f64> = (lo..hi)
            .map(|k| {
                let x = 1.0 / (s + 2.0 * k as f64 + 1.0);
                (-x * x).ln_1p()
            })
            .collect();
        par::ordered_sum(&logs)
    });
    let head = par::ordered_sum(&partial);
    // sum_{k>=K} ln(1 - x_k^2) = -(1/4) zeta(2, a) - (1/32) zeta(4, a) - ...
    let a = 0.5 * (s + 1.0) + terms as f64;
    let tail = -0.25 * hurwitz_zeta(2, a) - hurwitz_zeta(4, a) / 32.0;
    let remainder = 1.01 * hurwitz_zeta(6, a) / 192.0;
    let value = ((2.0 / PI).ln() * 0.5 + 0.5 * (head + tail)).exp();
    let rounding = 4.0 * f64::EPSILON * (1.0 + head.abs());
    Ok(SpecialValue {
        s,
        value,
        method: Method::InfiniteProduct,
        uncertainty: value * (0.5 * remainder + rounding),
        converged: true,
    })
}

/// Quadrature route: `(2/(pi sqrt s)) int_0^inf (1 - |cos u|^s) u^-2 du`.
pub fn psi0_quadrature(s: f64, tol: f64) -> Result<SpecialValue, SpecialError> {
    require(s >= 1.0, "psi0 quadrature", "s >= 1", s)?;
    let scale = 2.0 / (PI * s.sqrt());
    let f = Integrand::new(move |u: f64| -(s * ln_abs_cos(u)).exp_m1() / (u * u))
        .with_series(kernel_series(s, [-0.5, -1.0 / 12.0, -1.0 / 45.0]))
        .with_period(PI, 0.5 * PI)
        .with_tail(TailModel::Periodic(
            PeriodicTail::new(PI, 0.5 * PI, 2.0).term(0, 1.0, move |u: f64| -(s * ln_abs_cos(u)).exp_m1()),
        ));
    let q = quad::integrate_semi_infinite(&f, tol / scale)?;
    Ok(from_quad(s, q.scaled(scale, 0.0), Method::DirectQuadrature))
}

fn from_quad(s: f64, q: QuadResult, method: Method) -> SpecialValue {
    SpecialValue { s, value: q.value, method, uncertainty: q.uncertainty(), converged: q.converged }
}

/// `Psi0'(s) = Psi0(s) sum_k x_k^3 / (1 - x_k^2)`, `x_k = 1/(s+2k+1)`.
pub fn psi0_prime(s: f64) -> Result<SpecialValue, SpecialError> {
    psi0_prime_with_terms(s, 10_000)
}

pub fn psi0_prime_with_terms(s: f64, terms: usize) -> Result<SpecialValue, SpecialError> {
    require(s > 0.0, "psi0_prime", "s > 0", s)?;
    if terms < 10 {
        return Err(SpecialError::TooFewTerms(terms));
    }
    let body: Vec<f64> = (0..terms)
        .map(|k| {
            let x = 1.0 / (s + 2.0 * k as f64 + 1.0);
            x * x * x / (1.0 - x * x)
        })
        .collect();
    let head = par::ordered_sum(&body);
    let a = 0.5 * (s + 1.0) + terms as f64;
    let tail = hurwitz_zeta(3, a) / 8.0 + hurwitz_zeta(5, a) / 32.0 + hurwitz_zeta(7, a) / 128.0;
    let remainder = 1.01 * hurwitz_zeta(9, a) / 512.0;
    let sum = head + tail;
    let base = psi0_gamma(s)?;
    let value = base.value * sum;
    let uncertainty = base.uncertainty * sum + base.value * (remainder + 4.0 * f64::EPSILON * sum);
    Ok(SpecialValue { s, value, method: Method::DerivativeSeries, uncertainty, converged: true })
}

fn sinc_log_tail(s: f64, order: u8) -> PeriodicTail<'static> {
    let sin_pow = move |u: f64| u.sin().abs().powf(s);
    let sin_pow_log = move |u: f64, m: i32| {
        let a = u.sin().abs();
        if a == 0.0 {
            0.0
        } else {
            a.powf(s) * a.ln().powi(m)
        }
    };
    let sup = |m: i32| (m as f64 / (E * s)).powi(m);
    let tail = PeriodicTail::new(PI, 0.0, s);
    match order {
        0 => tail.term(0, 1.0, sin_pow),
        1 => tail.term(0, sup(1), move |u| sin_pow_log(u, 1)).term(1, 1.0, move |u| -sin_pow(u)),
        _ => tail
            .term(0, sup(2), move |u| sin_pow_log(u, 2))
            .term(1, 2.0 * sup(1), move |u| -2.0 * sin_pow_log(u, 1))
            .term(2, 1.0, sin_pow),
    }
}

/// `I(s)` (order 0), `I'(s)` (order 1) or `I''(s)` (order 2), where
/// `I^{(n)}(s) = int_0^inf |sin u/u|^s log^n|sin u/u| du`.
pub fn ball_i(s: f64, order: u8) -> Result<SpecialValue, SpecialError> {
    ball_i_with(s, order, SPECIAL_TOL)
}

pub fn ball_i_with(s: f64, order: u8, tol: f64) -> Result<SpecialValue, SpecialError> {
    if order > 2 {
        return Err(SpecialError::Order(order));
    }
    if order == 2 {
        require(s >= 2.0, "ball_i order 2", "s >= 2", s)?;
    } else {
        require(s > 1.0, "ball_i", "s > 1 (the integral diverges otherwise)", s)?;
    }
    let method = if order == 0 { Method::DirectQuadrature } else { Method::DerivativeQuadrature };
    if s >= LARGE_S {
        return Ok(from_quad(s, sinc_power_rescaled(s, order, tol)?, method));
    }
    let n = order as i32;
    let f = Integrand::new(move |u: f64| {
        let l = ln_abs_sinc(u);
        if l == f64::NEG_INFINITY {
            0.0
        } else {
            (s * l).exp() * l.powi(n)
        }
    })
    .with_period(PI, 0.0)
    .with_tail(TailModel::Periodic(sinc_log_tail(s, order)));
    let q = quad::integrate_semi_infinite(&f, tol)?;
    Ok(from_quad(s, q, method))
}

/// `I^{(n)}(s)` through `v = u sqrt(s)`, which keeps the bulk of the
/// integrand on a fixed scale as `s` grows.
fn sinc_power_rescaled(s: f64, order: u8, tol: f64) -> Result<QuadResult, QuadError> {
    let root = s.sqrt();
    let n = order as i32;
    let f = Integrand::new(move |v: f64| {
        let l = ln_abs_sinc(v / root);
        if l == f64::NEG_INFINITY {
            0.0
        } else {
            (s * l).exp() * l.powi(n)
        }
    });
    // Past u = pi: |sinc|^s |log sinc|^n <= u^-s log^n u.
    let x = PI;
    let lx = x.ln() + 1.0 / (s - 1.0);
    let bound = x.powf(1.0 - s) / (s - 1.0) * (1.0 + lx).powi(2 * n);
    let mut breaks = vec![0.0];
    let mut b = 1.0;
    while b < x * root {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(x * root);
    let q = quad::integrate_partition(&f, &breaks, tol * root, &QuadOptions::default())?;
    let sign = if order % 2 == 1 { -1.0 } else { 1.0 };
    Ok(QuadResult {
        value: (q.value + sign * 0.5 * bound * root) / root,
        abs_error_est: q.abs_error_est / root,
        tail_bound: 0.5 * bound,
        ..q
    })
}

/// `Phi0(s)` (order 0) or `Phi0'(s)` (order 1).
pub fn phi0(s: f64, order: u8) -> Result<SpecialValue, SpecialError> {
    phi0_with(s, order, SPECIAL_TOL)
}

pub fn phi0_with(s: f64, order: u8, tol: f64) -> Result<SpecialValue, SpecialError> {
    require(s > 1.0, "phi0", "s > 1", s)?;
    let root = s.sqrt();
    let i0 = ball_i_with(s, 0, tol * PI / (2.0 * root))?;
    match order {
        0 => {
            Ok(SpecialValue { value: 2.0 * root / PI * i0.value, uncertainty: 2.0 * root / PI * i0.uncertainty, ..i0 })
        }
        1 => {
            let i1 = ball_i_with(s, 1, tol * PI / (2.0 * root))?;
            Ok(SpecialValue {
                s,
                value: 2.0 / PI * (i0.value / (2.0 * root) + root * i1.value),
                method: Method::DerivativeQuadrature,
                uncertainty: 2.0 / PI * (i0.uncertainty / (2.0 * root) + root * i1.uncertainty),
                converged: i0.converged && i1.converged,
            })
        }
        other => Err(SpecialError::Order(other)),
    }
}

/// `-pi/12 - (1/(2 pi)) sum_{k>=1} log(k pi)/(k+1)^2`: the analytic upper
/// bound for `I'(2)` obtained lobe by lobe.
pub fn lobe_bound_for_i_prime_2() -> f64 {
    const N: usize = 1_000_000;
    let terms: Vec<f64> = (1..=N)
        .map(|k| {
            let k = k as f64;
            (k * PI).ln() / ((k + 1.0) * (k + 1.0))
        })
        .collect();
    // Integral estimate of the rest, with midpoint shift.
    let x = N as f64 + 0.5;
    let rest = ((PI * x).ln() + 1.0) / (x + 1.0);
    -PI / 12.0 - (par::ordered_sum(&terms) + rest) / (2.0 * PI)
}

/// `exp(-u^2/6) - sin(u)/u`, nonnegative on `(0, pi)`.
pub fn sinc_gaussian_gap(u: f64) -> f64 {
    (-u * u / 6.0).exp() - u.sin() / u
}

/// `|u - v| - |u^s ln u - v^s ln v|`, nonnegative for `u, v in (0, 1)`, `s >= 2`.
pub fn sulogu_gap(u: f64, v: f64, s: f64) -> f64 {
    let g = |x: f64| x.powf(s) * x.ln();
    (u - v).abs() - (g(u) - g(v)).abs()
}
