//! Both sides of the two main inequalities, computed by exact enumeration,
//! Monte Carlo and integral representations, together with the AM-GM and
//! Hölder intermediate bounds and the level-set comparison behind Ball's
//! integral inequality.

use crate::dist::{
    check_thm1_hypothesis, check_thm2_hypothesis, one_minus_sinc, sinc, stream_rng, DistError, Distribution1D, Kind1D,
    RadialDist3D, RadialKind, UnitVector,
};
use crate::par;
use crate::perturbed::{self, PerturbedError};
use crate::quad::{self, Integrand, PeriodicTail, QuadError, QuadOptions, QuadResult, TailModel};
use crate::report::LemmaReport;
use crate::specialfn::{self, kernel_series, SpecialError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_2_PI, FRAC_PI_2, FRAC_PI_3, PI, SQRT_2};
use thiserror::Error;

/// Largest `n` accepted by [`exact_rademacher_mean`].
pub const MAX_ENUMERATION: usize = 26;
/// Default absolute tolerance of the integral representations.
pub const VERIFY_TOL: f64 = 1e-9;
/// Cutoff cap when only a `1/t^2` bracket is available for the tail.
pub const FOURIER_MAX_CUTOFF: f64 = 1.0e5;
/// Smallest Monte Carlo sample count accepted.
pub const MIN_SAMPLES: usize = 1000;

const MC_CHUNK: usize = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("exact enumeration needs n <= {max}, got n = {n}")]
    Budget { n: usize, max: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Perturbed(#[from] PerturbedError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    ExactEnumeration,
    MonteCarlo,
    FourierRep,
    GorinFavorov,
    AmGm,
    Holder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub value: f64,
    /// Standard error for Monte Carlo, an absolute error bound otherwise.
    pub stderr_or_bound: f64,
    pub method: EstimateMethod,
    /// Sample count for Monte Carlo, quadrature cutoff for integrals.
    pub n_samples_or_cutoff: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub converged: bool,
    /// Exactly-zero sums redrawn by the negative-moment sampler.
    pub zero_resamples: u64,
}

impl MomentEstimate {
    fn deterministic(value: f64, bound: f64, method: EstimateMethod, cutoff: f64, converged: bool) -> Self {
        Self {
            value,
            stderr_or_bound: bound,
            method,
            n_samples_or_cutoff: cutoff,
            seed: None,
            converged,
            zero_resamples: 0,
        }
    }

    fn from_quad(q: &QuadResult, method: EstimateMethod) -> Self {
        Self::deterministic(q.value, q.uncertainty(), method, q.cutoff, q.converged)
    }
}

/// Nonzero coordinates of `a`, in order.
fn nonzero(a: &UnitVector) -> Vec<f64> {
    a.coords().iter().copied().filter(|&x| x != 0.0).collect()
}

/// Common `|a_j|` if all nonzero coordinates agree in absolute value.
fn equal_abs(c: &[f64]) -> Option<f64> {
    let first = c.first()?.abs();
    c.iter().all(|x| (x.abs() - first).abs() <= 4.0 * f64::EPSILON * first).then_some(first)
}

/// `E|sum a_j eps_j|` over all `2^n` sign patterns.
pub fn exact_rademacher_mean(a: &UnitVector) -> Result<MomentEstimate, VerifyError> {
    let c: Vec<f64> = nonzero(a).into_iter().map(f64::abs).collect();
    let n = c.len();
    if n > MAX_ENUMERATION {
        return Err(VerifyError::Budget { n, max: MAX_ENUMERATION });
    }
    // The first sign is fixed by symmetry; the next `hi` signs select a
    // chunk and the last `lo` are walked in Gray-code order.
    let rest = &c[1..];
    let lo = rest.len().min(10);
    let hi = rest.len() - lo;
    let sums = par::map_indexed(1usize << hi, |chunk| {
        let mut base = c[0];
        for j in 0..hi {
            base += if chunk >> j & 1 == 1 { -rest[lo + j] } else { rest[lo + j] };
        }
        let mut s = base + rest[..lo].iter().sum::<f64>();
        let mut signs = vec![1.0f64; lo];
        let mut acc = vec![s.abs()];
        for k in 1..(1usize << lo) {
            let j = k.trailing_zeros() as usize;
            s -= 2.0 * signs[j] * rest[j];
            signs[j] = -signs[j];
            acc.push(s.abs());
        }
        par::ordered_sum(&acc)
    });
    let total = par::ordered_sum(&sums);
    let value = total / (1u64 << (n - 1)) as f64;
    Ok(MomentEstimate::deterministic(value, 4.0 * n as f64 * f64::EPSILON, EstimateMethod::ExactEnumeration, 0.0, true))
}

/// `1 - prod_j cf(a_j t)`, accurate when the product is close to 1.
fn one_minus_product(d: &Distribution1D, c: &[f64], t: f64) -> f64 {
    let mut prod = 1.0;
    let mut log = 0.0;
    let mut positive = true;
    for &a in c {
        let v = d.cf(a * t);
        prod *= v;
        if v > 0.0 {
            log += d.ln_abs_cf(a * t);
        } else {
            positive = false;
        }
    }
    if positive {
        -log.exp_m1()
    } else {
        1.0 - prod
    }
}

/// `E|sum a_j X_j| = (2/pi) int_0^inf (1 - prod_j cf(a_j t)) t^-2 dt`.
pub fn fourier_mean(a: &UnitVector, d: &Distribution1D) -> Result<MomentEstimate, VerifyError> {
    fourier_mean_with(a, d, VERIFY_TOL)
}

pub fn fourier_mean_with(a: &UnitVector, d: &Distribution1D, tol: f64) -> Result<MomentEstimate, VerifyError> {
    let c = nonzero(a);
    let n = c.len();
    let k = d.log_cf_series();
    let moment = |p: i32| c.iter().map(|x| x.abs().powi(p)).sum::<f64>();
    let series = kernel_series(1.0, [k[0] * moment(2), k[1] * moment(4), k[2] * moment(6)]);
    let inner = 0.5 * PI * tol;
    let cc = c.clone();
    let kernel = move |t: f64| one_minus_product(d, &cc, t) / (t * t);
    let q = match (equal_abs(&c), d.kind) {
        (Some(alpha), Kind1D::TwoPoint { c: shift }) => {
            // prod = cos(w t)^n with w = (1 + shift) alpha
            let w = (1.0 + shift) * alpha;
            let period = if n.is_multiple_of(2) { PI / w } else { 2.0 * PI / w };
            let tail =
                PeriodicTail::new(period, 0.0, 2.0).term(0, 2.0, move |t: f64| 1.0 - (w * t).cos().powi(n as i32));
            let f = Integrand::new(kernel)
                .with_series(series)
                .with_period(PI / w, FRAC_PI_2 / w)
                .with_tail(TailModel::Periodic(tail));
            quad::integrate_semi_infinite(&f, inner)?
        }
        (Some(alpha), _) if n.is_multiple_of(2) => {
            // prod = |cf(alpha t)|^n: the Psi integrand at s = n, rescaled
            perturbed::line_integral(n as f64, d, false, inner / alpha)?.scaled(alpha, 0.0)
        }
        _ => {
            let amax = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let f = Integrand::new(kernel)
                .with_series(series)
                .with_period(PI / amax, 0.0)
                .with_tail(TailModel::Power { lower: 0.0, upper: 2.0, p: 2.0, from: 0.0 });
            let opts = QuadOptions { max_cutoff: FOURIER_MAX_CUTOFF, ..Default::default() };
            quad::integrate_from(&f, 0.0, inner, &opts)?
        }
    };
    Ok(MomentEstimate::from_quad(&q.scaled(FRAC_2_PI, 0.0), EstimateMethod::FourierRep))
}

/// `E|sum a_j X_j|^-1 = (2/pi) int_0^inf prod_j kappa(a_j r) dr` in R^3.
pub fn gf_neg_moment(a: &UnitVector, d: &RadialDist3D) -> Result<MomentEstimate, VerifyError> {
    gf_neg_moment_with(a, d, VERIFY_TOL)
}

pub fn gf_neg_moment_with(a: &UnitVector, d: &RadialDist3D, tol: f64) -> Result<MomentEstimate, VerifyError> {
    gf_from_coeffs(&nonzero(a), d, tol)
}

/// `E|X|^-1` from the same representation with a single coefficient; equals
/// `E R^-1` and pins the normalizing constant.
pub fn gf_single(d: &RadialDist3D) -> Result<MomentEstimate, VerifyError> {
    gf_from_coeffs(&[1.0], d, VERIFY_TOL)
}

fn gf_from_coeffs(c: &[f64], d: &RadialDist3D, tol: f64) -> Result<MomentEstimate, VerifyError> {
    let n = c.len();
    let c0 = d.decay_c0();
    if n == 0 {
        return Err(VerifyError::Precondition("no nonzero coefficients".into()));
    }
    if !(c0.is_finite() && c0 > 0.0) {
        return Err(VerifyError::Precondition("decay constant C0 must be finite".into()));
    }
    let inner = FRAC_PI_2 * tol;
    let cc: Vec<f64> = c.iter().map(|x| x.abs()).collect();
    let cc2 = cc.clone();
    let kernel = move |r: f64| cc2.iter().map(|&a| d.cf_radial(a * r)).product::<f64>();
    let q = match (equal_abs(&cc), d.fixed_radius()) {
        (Some(alpha), Some(lambda)) if n == 1 => {
            // sin(w r)/(w r): alternating lobes, summed with repeated averaging
            let w = lambda * alpha;
            quad::integrate_semi_infinite(&Integrand::new(kernel).with_period(PI / w, 0.0), inner)?
        }
        (Some(alpha), Some(lambda)) => {
            // prod = sinc(w r)^n with w = lambda alpha
            let w = lambda * alpha;
            let scale = w.powi(-(n as i32));
            let tail = PeriodicTail::new(PI / w, 0.0, n as f64)
                .term(0, scale, move |r: f64| scale * (w * r).sin().powi(n as i32));
            let f = Integrand::new(kernel).with_period(PI / w, 0.0).with_tail(TailModel::Periodic(tail));
            quad::integrate_semi_infinite(&f, inner)?
        }
        (Some(alpha), None) if n.is_multiple_of(2) => {
            perturbed::radial_integral(n as f64, d, false, inner * alpha)?.scaled(1.0 / alpha, 0.0)
        }
        _ if n == 1 => {
            return Err(VerifyError::Precondition(
                "n = 1 needs an exact tail; the decay bound C0/r is not integrable".into(),
            ))
        }
        _ => {
            // |prod| <= C0^m / (a_(1) ... a_(m)) r^-m for the m largest coefficients.
            let mut sorted = cc.clone();
            sorted.sort_by(|x, y| y.total_cmp(x));
            let reference: f64 = 1.0e3;
            let (cm, m) = (2..=n)
                .map(|m| {
                    let cm = c0.powi(m as i32) / sorted[..m].iter().product::<f64>();
                    (cm, m as f64)
                })
                .min_by(|x, y| {
                    let bx = x.0 * reference.powf(1.0 - x.1) / (x.1 - 1.0);
                    let by = y.0 * reference.powf(1.0 - y.1) / (y.1 - 1.0);
                    bx.total_cmp(&by)
                })
                .expect("n >= 2");
            let f = Integrand::new(kernel).with_period(PI / sorted[0], 0.0).with_tail(TailModel::envelope(cm, m));
            quad::integrate_from(&f, 0.0, inner, &QuadOptions::default())?
        }
    };
    Ok(MomentEstimate::from_quad(&q.scaled(FRAC_2_PI, 0.0), EstimateMethod::GorinFavorov))
}

/// Chunked, seed-deterministic sample mean of `f`; `f` returns the sample
/// and how many draws were rejected before it.
fn mc_estimate(
    n: usize,
    seed: u64,
    f: impl Fn(&mut ChaCha8Rng) -> (f64, u64) + Sync,
) -> Result<MomentEstimate, VerifyError> {
    if n < MIN_SAMPLES {
        return Err(VerifyError::Precondition(format!("need at least {MIN_SAMPLES} samples, got {n}")));
    }
    let chunks = n.div_ceil(MC_CHUNK);
    let parts = par::map_indexed(chunks, |i| {
        let mut rng = stream_rng(seed, i as u64);
        let len = MC_CHUNK.min(n - i * MC_CHUNK);
        let mut xs = Vec::with_capacity(len);
        let mut zeros = 0;
        for _ in 0..len {
            let (x, z) = f(&mut rng);
            xs.push(x);
            zeros += z;
        }
        let sum = par::ordered_sum(&xs);
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        (sum, par::ordered_sum(&sq), zeros)
    });
    let sum = par::ordered_sum(&parts.iter().map(|p| p.0).collect::<Vec<_>>());
    let sq = par::ordered_sum(&parts.iter().map(|p| p.1).collect::<Vec<_>>());
    let zeros = parts.iter().map(|p| p.2).sum();
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(MomentEstimate {
        value: mean,
        stderr_or_bound: (var / nf).sqrt(),
        method: EstimateMethod::MonteCarlo,
        n_samples_or_cutoff: nf,
        seed: Some(seed),
        converged: true,
        zero_resamples: zeros,
    })
}

/// Sample mean of `|sum a_j X_j|`.
pub fn mc_mean(a: &UnitVector, d: &Distribution1D, n: usize, seed: u64) -> Result<MomentEstimate, VerifyError> {
    let c = nonzero(a);
    mc_estimate(n, seed, |rng| (c.iter().map(|&a| a * d.sample(rng)).sum::<f64>().abs(), 0))
}

fn sample_sum3<R: Rng + ?Sized>(c: &[f64], d: &RadialDist3D, rng: &mut R) -> f64 {
    let mut s = [0.0; 3];
    for &a in c {
        let x = d.sample3d(rng);
        for k in 0..3 {
            s[k] += a * x[k];
        }
    }
    (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt()
}

/// Sample mean of `|sum a_j X_j|^-1` in R^3; exact zeros are redrawn and
/// counted.
pub fn mc_neg_moment(a: &UnitVector, d: &RadialDist3D, n: usize, seed: u64) -> Result<MomentEstimate, VerifyError> {
    mc_q_moment(a, d, -1.0, n, seed)
}

/// Sample mean of `|sum a_j X_j|^q` in R^3.
pub fn mc_q_moment(
    a: &UnitVector,
    d: &RadialDist3D,
    q: f64,
    n: usize,
    seed: u64,
) -> Result<MomentEstimate, VerifyError> {
    let c = nonzero(a);
    mc_estimate(n, seed, |rng| {
        let mut zeros = 0;
        loop {
            let r = sample_sum3(&c, d, rng);
            if r > 0.0 {
                return (r.powf(q), zeros);
            }
            zeros += 1;
        }
    })
}

/// `sum_j a_j^2 Psi(a_j^-2)`, a lower bound on `E|sum a_j X_j|`.
pub fn amgm_lower_bound(a: &UnitVector, d: &Distribution1D) -> Result<MomentEstimate, VerifyError> {
    let terms = distinct_terms(a, |s| perturbed::psi(s.max(1.0), d))?;
    let value = terms.iter().map(|t| t.0 * t.1).sum();
    let unc = terms.iter().map(|t| t.0 * t.2).sum();
    let conv = terms.iter().all(|t| t.3);
    Ok(MomentEstimate::deterministic(value, unc, EstimateMethod::AmGm, 0.0, conv))
}

/// `prod_j Phi(a_j^-2)^{a_j^2}`, an upper bound on `E|sum a_j X_j|^-1`;
/// needs `max |a_j| <= 1/sqrt(2)`.
pub fn holder_upper_bound(a: &UnitVector, d: &RadialDist3D) -> Result<MomentEstimate, VerifyError> {
    if !a.small_coeff() {
        return Err(VerifyError::Precondition(format!(
            "outside small-coefficient regime: max |a_j| = {} > 1/sqrt(2)",
            a.max_abs()
        )));
    }
    let terms = distinct_terms(a, |s| perturbed::phi3(s.max(2.0), d))?;
    let log: f64 = terms.iter().map(|t| t.0 * t.1.ln()).sum();
    let value = log.exp();
    let rel: f64 = terms.iter().map(|t| t.0 * t.2 / t.1).sum();
    let conv = terms.iter().all(|t| t.3);
    Ok(MomentEstimate::deterministic(value, value * rel, EstimateMethod::Holder, 0.0, conv))
}

/// `(a_j^2, value, uncertainty, converged)` per nonzero coordinate, with
/// `eval(a_j^-2)` computed once per distinct `|a_j|`.
fn distinct_terms(
    a: &UnitVector,
    eval: impl Fn(f64) -> Result<perturbed::Eval, PerturbedError> + Sync,
) -> Result<Vec<(f64, f64, f64, bool)>, VerifyError> {
    let abs: Vec<f64> = nonzero(a).into_iter().map(f64::abs).collect();
    let mut distinct = abs.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let evals = par::map_slice(&distinct, |&x| eval(1.0 / (x * x)));
    let mut table = Vec::with_capacity(distinct.len());
    for (x, e) in distinct.iter().zip(evals) {
        table.push((*x, e?));
    }
    Ok(abs
        .iter()
        .map(|x| {
            let e = &table.iter().find(|t| t.0 == *x).expect("present").1;
            (x * x, e.value, e.uncertainty, e.converged)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    /// Monte Carlo corroboration samples; 0 skips it.
    pub mc_samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { mc_samples: 100_000, seed: 0, tol: VERIFY_TOL }
    }
}

fn add_estimate(r: &mut LemmaReport, name: &str, e: &MomentEstimate) {
    r.quantity(name, e.value, e.stderr_or_bound);
    r.tolerance_met &= e.converged;
}

/// Corroborates `value` against a Monte Carlo estimate at 5 standard errors.
fn mc_note(r: &mut LemmaReport, value: &MomentEstimate, mc: &MomentEstimate) {
    add_estimate(r, "monte_carlo", mc);
    let gap = (mc.value - value.value).abs();
    let allowed = 5.0 * mc.stderr_or_bound + value.stderr_or_bound;
    r.note(if gap <= allowed {
        format!("monte carlo agrees: |diff| = {gap:.3e} <= {allowed:.3e}")
    } else {
        format!("monte carlo disagrees: |diff| = {gap:.3e} > {allowed:.3e}")
    });
    if mc.zero_resamples > 0 {
        r.note(format!("{} exactly-zero sums redrawn", mc.zero_resamples));
    }
}

/// `E|sum a_j X_j| >= E|(X_1 + X_2)/sqrt(2)|` for `max |a_j| <= 1/sqrt(2)`.
/// Outside that regime only the Rademacher convexity bound is checked.
pub fn verify_szarek(a: &UnitVector, d: &Distribution1D, opts: &VerifyOptions) -> LemmaReport {
    let mut r = LemmaReport::new("Thm1").input("a", a.coords()).input("dist", d).input("options", opts);
    if !a.small_coeff() {
        if d.is_rademacher() {
            return trivial_regime_check(a);
        }
        return r.reject(format!("outside small-coefficient regime: max |a_j| = {} > 1/sqrt(2)", a.max_abs()));
    }
    let hyp = check_thm1_hypothesis(d);
    if !hyp.passed() {
        r.note("law is outside the closeness hypothesis; the inequality is checked anyway");
    }
    let lhs = if d.is_rademacher() && a.len() <= MAX_ENUMERATION {
        exact_rademacher_mean(a)
    } else {
        fourier_mean_with(a, d, opts.tol)
    };
    let bench = match d.kind {
        Kind1D::TwoPoint { c } => Ok(MomentEstimate::deterministic(
            (1.0 + c) * FRAC_1_SQRT_2,
            f64::EPSILON,
            EstimateMethod::ExactEnumeration,
            0.0,
            true,
        )),
        _ => UnitVector::equal(2).map_err(VerifyError::from).and_then(|b| fourier_mean_with(&b, d, opts.tol)),
    };
    let (lhs, bench) = match (lhs, bench) {
        (Ok(l), Ok(b)) => (l, b),
        (Err(e), _) | (_, Err(e)) => return r.reject(e.to_string()),
    };
    add_estimate(&mut r, "mean", &lhs);
    add_estimate(&mut r, "benchmark", &bench);
    match amgm_lower_bound(a, d) {
        Ok(m) => add_estimate(&mut r, "amgm_lower_bound", &m),
        Err(e) => r.note(format!("amgm bound unavailable: {e}")),
    }
    if opts.mc_samples > 0 {
        match mc_mean(a, d, opts.mc_samples, opts.seed) {
            Ok(mc) => mc_note(&mut r, &lhs, &mc),
            Err(e) => r.note(format!("monte carlo skipped: {e}")),
        }
    }
    let mut r = r.conclude(bench.value, lhs.value - bench.value, lhs.stderr_or_bound + bench.stderr_or_bound);
    r.sections.push(hyp);
    r
}

/// `E|sum a_j eps_j| >= max |a_j|`, from independence and convexity.
pub fn trivial_regime_check(a: &UnitVector) -> LemmaReport {
    let r = LemmaReport::new("Thm1-trivial").input("a", a.coords());
    match exact_rademacher_mean(a) {
        Ok(m) => {
            let mut r = r;
            add_estimate(&mut r, "mean", &m);
            let amax = a.max_abs();
            r.conclude(amax, m.value - amax, m.stderr_or_bound)
        }
        Err(e) => r.reject(e.to_string()),
    }
}

/// `E|sum a_j X_j|^-1 <= E|(X_1 + X_2)/sqrt(2)|^-1` in R^3 for
/// `max |a_j| <= 1/sqrt(2)`.
pub fn verify_ball(a: &UnitVector, d: &RadialDist3D, opts: &VerifyOptions) -> LemmaReport {
    let mut r = LemmaReport::new("Thm2").input("a", a.coords()).input("dist", d).input("options", opts);
    if !a.small_coeff() {
        return r.reject(format!("outside small-coefficient regime: max |a_j| = {} > 1/sqrt(2)", a.max_abs()));
    }
    let hyp = check_thm2_hypothesis(d);
    if !hyp.passed() {
        r.note("law is outside the closeness hypothesis; the inequality is checked anyway");
    }
    let exact = |v: f64| MomentEstimate::deterministic(v, 2.0 * f64::EPSILON, EstimateMethod::GorinFavorov, 0.0, true);
    let bench = match d.kind {
        RadialKind::Sphere => Ok(exact(SQRT_2)),
        RadialKind::RadiusShift { c } => Ok(exact(SQRT_2 / (1.0 + c))),
        RadialKind::RadiusTwoPoint { .. } => {
            UnitVector::equal(2).map_err(VerifyError::from).and_then(|b| gf_neg_moment_with(&b, d, opts.tol))
        }
    };
    let (lhs, bench) = match (gf_neg_moment_with(a, d, opts.tol), bench) {
        (Ok(l), Ok(b)) => (l, b),
        (Err(e), _) | (_, Err(e)) => return r.reject(e.to_string()),
    };
    add_estimate(&mut r, "neg_moment", &lhs);
    add_estimate(&mut r, "benchmark", &bench);
    match holder_upper_bound(a, d) {
        Ok(h) => add_estimate(&mut r, "holder_upper_bound", &h),
        Err(e) => r.note(format!("holder bound unavailable: {e}")),
    }
    if opts.mc_samples > 0 {
        match mc_neg_moment(a, d, opts.mc_samples, opts.seed) {
            Ok(mc) => mc_note(&mut r, &lhs, &mc),
            Err(e) => r.note(format!("monte carlo skipped: {e}")),
        }
    }
    let mut r = r.conclude(bench.value, bench.value - lhs.value, lhs.stderr_or_bound + bench.stderr_or_bound);
    r.sections.push(hyp);
    r
}

/// `g(x) = |sin(pi x) / (pi x)|`.
fn g(x: f64) -> f64 {
    sinc(PI * x).abs()
}

/// Root of a monotone `f` on `[lo, hi]` with `f(lo)` and `f(hi)` of opposite
/// signs, to full precision.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Position and height of the maximum of `g` on `(m, m + 1)`, `m >= 1`:
/// the root of `tan(pi x) = pi x`.
pub fn lobe_peak(m: usize) -> (f64, f64) {
    let mf = m as f64;
    let h = |x: f64| (PI * x).sin() - PI * x * (PI * x).cos();
    let x = bisect(h, mf, mf + 0.5);
    (x, g(x))
}

/// Lobe peaks `y_1 > y_2 > ...` and their positions.
struct Lobes {
    peaks: Vec<(f64, f64)>,
}

impl Lobes {
    fn new(count: usize) -> Self {
        Self { peaks: (1..=count).map(lobe_peak).collect() }
    }

    /// `G(y) = |{x > 0 : g(x) > y}|` for `y = exp(-w)`, summing lobe widths.
    /// Stops early once the partial sum exceeds `stop`; the second field
    /// says whether the value is exact.
    fn level_measure(&self, w: f64, stop: f64) -> (f64, bool) {
        let y = (-w).exp();
        let deficit = -(-w).exp_m1();
        // main lobe: 1 - g(x) = 1 - y on (0, 1)
        let mut total = bisect(|x| one_minus_sinc(PI * x) - deficit, 0.0, 1.0);
        for (m, &(xm, ym)) in self.peaks.iter().enumerate() {
            if ym <= y {
                return (total, true);
            }
            let m = (m + 1) as f64;
            let left = bisect(|x| g(x) - y, m, xm);
            let right = bisect(|x| g(x) - y, xm, m + 1.0);
            total += right - left;
            if total > stop {
                return (total, false);
            }
        }
        let exact = self.peaks.last().is_none_or(|p| p.1 <= y);
        (total, exact)
    }
}

/// `F_a(y) = sqrt(2 ln(1/y) / (pi a))` with `y = exp(-w)`.
fn level_gauss(a: f64, w: f64) -> f64 {
    (2.0 * w / (PI * a)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NpAnalysis {
    pub a_param: f64,
    /// Sign change of `F_a - G`, refined by bisection.
    pub y0: f64,
    pub crossings: usize,
    /// `"-+"` when `F_a - G` goes from negative to positive as `y` grows.
    pub sign_pattern: String,
    /// `y_m` for `m = 1..=20`.
    pub lobe_maxima: Vec<f64>,
    pub lobes_in_brackets: bool,
    pub lobes_decreasing: bool,
    /// `int_0^1 2y (F_1(y) - G(y)) dy`, which vanishes.
    pub moment_identity_residual: f64,
    pub grid_points: usize,
}

const NP_GRID: usize = 10_000;
const NP_W_MAX: f64 = 20.0;
const NP_LOBES: usize = 2000;

/// Counts the sign changes of `F_a - G` on a grid of `10^4` points of
/// `(e^-20, 1)`, evenly spaced in `ln y`.
pub fn np_sign_change(a_param: f64) -> Result<NpAnalysis, VerifyError> {
    if !(1.0..=FRAC_PI_3).contains(&a_param) {
        return Err(VerifyError::Precondition(format!("a = {a_param} must lie in [1, pi/3]")));
    }
    let lobes = Lobes::new(NP_LOBES);
    // w from 20 down to 20/N, i.e. y increasing
    let ws: Vec<f64> = (0..NP_GRID).map(|i| NP_W_MAX * (1.0 - i as f64 / NP_GRID as f64)).collect();
    let diff = |w: f64| {
        let f = level_gauss(a_param, w);
        let (gm, _) = lobes.level_measure(w, f + 1.0);
        f - gm
    };
    let vals = par::map_slice(&ws, |&w| diff(w));
    let mut crossings = 0;
    let mut pattern = String::new();
    let mut first_change = None;
    let mut prev = 0.0f64;
    for (i, &v) in vals.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let sign = if v > 0.0 { '+' } else { '-' };
        if pattern.is_empty() || (prev > 0.0) != (v > 0.0) {
            if !pattern.is_empty() {
                crossings += 1;
                first_change.get_or_insert(i);
            }
            pattern.push(sign);
        }
        prev = v;
    }
    let y0 = match first_change {
        Some(i) => (-bisect(diff, ws[i - 1], ws[i])).exp(),
        None => f64::NAN,
    };
    let lobe_maxima: Vec<f64> = lobes.peaks[..20].iter().map(|p| p.1).collect();
    let lobes_in_brackets = lobe_maxima.iter().enumerate().all(|(i, &y)| {
        let m = (i + 1) as f64;
        y > 1.0 / (PI * (m + 0.5)) && y < 1.0 / (PI * m)
    });
    let lobes_decreasing = lobe_maxima.windows(2).all(|w| w[0] > w[1]);
    Ok(NpAnalysis {
        a_param,
        y0,
        crossings,
        sign_pattern: pattern,
        lobe_maxima,
        lobes_in_brackets,
        lobes_decreasing,
        moment_identity_residual: moment_identity_residual()?,
        grid_points: NP_GRID,
    })
}

/// `int_0^1 2y (F_1(y) - G(y)) dy = int (f_1^2 - g^2) dx`, which is zero.
///
/// Above the peak `y_K` of lobe `K` the `y` integral is taken piece by piece
/// between consecutive peaks; below it the two layer-cake integrals are
/// evaluated directly.
pub fn moment_identity_residual() -> Result<f64, VerifyError> {
    const K: usize = 50;
    let lobes = Lobes::new(K);
    let tol = 1e-12;
    let diff = |y: f64| {
        let w = -y.ln();
        2.0 * y * (level_gauss(1.0, w) - lobes.level_measure(w, f64::INFINITY).0)
    };
    // top piece (y_1, 1): y = 1 - v^2
    let y1 = lobes.peaks[0].1;
    let top = Integrand::new(|v: f64| 2.0 * v * diff(1.0 - v * v));
    let mut pieces = vec![quad::integrate_finite(&top, 0.0, (1.0 - y1).sqrt(), tol)?.value];
    // (y_{m+1}, y_m): y = y_m - v^2 removes the square-root edge where lobe m vanishes
    let piece_vals = par::map_indexed(K - 1, |m| {
        let (hi, lo) = (lobes.peaks[m].1, lobes.peaks[m + 1].1);
        let f = Integrand::new(move |v: f64| 2.0 * v * diff(hi - v * v));
        quad::integrate_finite(&f, 0.0, (hi - lo).sqrt(), tol).map(|q| q.value)
    });
    for p in piece_vals {
        pieces.push(p?);
    }
    let yk = lobes.peaks[K - 1].1;
    // int_0^{y_K} 2y F_1 dy with y = exp(-w)
    let wk = -yk.ln();
    let gauss = Integrand::new(|w: f64| 2.0 * (-2.0 * w).exp() * level_gauss(1.0, w))
        .with_tail(TailModel::Exponential { c: 2.0, rate: 1.9 });
    pieces.push(quad::integrate_from(&gauss, wk, tol, &QuadOptions::default())?.value);
    // int_0^{y_K} 2y G dy = int min(g, y_K)^2 dx; past lobe K, g < y_K
    let tail = PeriodicTail::new(1.0, 0.0, 2.0).term(0, 1.0 / (PI * PI), |x: f64| (PI * x).sin().powi(2) / (PI * PI));
    let low =
        Integrand::new(move |x: f64| g(x).min(yk).powi(2)).with_period(1.0, 0.0).with_tail(TailModel::Periodic(tail));
    pieces.push(-quad::integrate_semi_infinite(&low, tol)?.value);
    Ok(par::ordered_sum(&pieces))
}

/// Ball-type bound `Phi0(s) <= sqrt(2/a)` for `s >= s0`, given the coupling
/// `Phi0(s0) = sqrt(2/a)`.
pub fn np_majorization_check(a_param: f64, s0: f64, s_grid: &[f64]) -> LemmaReport {
    let r = LemmaReport::new("sec-impr-ball").input("a", a_param).input("s0", s0).input("points", s_grid.len());
    if !(1.0..=FRAC_PI_3).contains(&a_param) {
        return r.reject(format!("a = {a_param} must lie in [1, pi/3]"));
    }
    if !(s0 >= 2.0) || s_grid.iter().any(|&s| !(s >= s0 && s.is_finite())) {
        return r.reject("need s0 >= 2 and every grid point >= s0");
    }
    let target = (2.0 / a_param).sqrt();
    let at_s0 = match specialfn::phi0(s0, 0) {
        Ok(v) => v,
        Err(e) => return r.reject(e.to_string()),
    };
    let mut r = r;
    r.quantity("phi0(s0)", at_s0.value, at_s0.uncertainty);
    r.quantity("sqrt(2/a)", target, 0.0);
    if (at_s0.value - target).abs() > 1e-8 {
        return r.reject(format!("inconsistent (a, s0): phi0(s0) = {} but sqrt(2/a) = {target}", at_s0.value));
    }
    let vals = par::map_slice(s_grid, |&s| specialfn::phi0(s, 0));
    let mut worst = (f64::INFINITY, 0.0);
    for v in vals {
        match v {
            Ok(v) => {
                r.tolerance_met &= v.converged;
                let m = target - v.value;
                if m + v.uncertainty < worst.0 + worst.1 {
                    worst = (m, v.uncertainty);
                }
            }
            Err(e) => return r.reject(e.to_string()),
        }
    }
    if s_grid.is_empty() {
        return r.reject("empty s grid");
    }
    r.conclude(target, worst.0, worst.1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnimodalPoint {
    pub q: f64,
    /// Estimate of `(1+q) E|sum a_j R_j U_j|^q`, which equals `E|sum a_j X_j|^q`.
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnimodalLimit {
    pub points: Vec<UnimodalPoint>,
    /// `E|sum a_j X_j|^-1` from the integral representation.
    pub limit: MomentEstimate,
    /// Whether `|value - limit|` shrinks as `q` decreases; reported only.
    pub monotone_trend: bool,
}

/// `(1+q) E|sum a_j R_j U_j|^q` for `q` in `q_seq`, with `U_j` uniform on
/// `[-1, 1]`. The coordinate with the largest `|a_j|` is integrated out
/// exactly given the others, which keeps the variance bounded as `q -> -1`.
pub fn unimodal_limit(
    a: &UnitVector,
    d: &RadialDist3D,
    q_seq: &[f64],
    n: usize,
    seed: u64,
) -> Result<UnimodalLimit, VerifyError> {
    if let Some(q) = q_seq.iter().find(|q| !(**q > -1.0 && **q < 0.0)) {
        return Err(VerifyError::Precondition(format!("q = {q} must lie in (-1, 0)")));
    }
    let c: Vec<f64> = nonzero(a).into_iter().map(f64::abs).collect();
    let lead = c.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).map(|x| x.0).unwrap_or(0);
    let points = q_seq
        .iter()
        .map(|&q| {
            let e = mc_estimate(n, seed, |rng| {
                let mut rest = 0.0;
                let mut b = 0.0;
                for (j, &aj) in c.iter().enumerate() {
                    let r = d.sample_radius(rng);
                    if j == lead {
                        b = aj * r;
                    } else {
                        rest += aj * r * rng.random_range(-1.0..=1.0);
                    }
                }
                let p = q + 1.0;
                let signed = |v: f64| v.signum() * v.abs().powf(p);
                ((signed(rest + b) - signed(rest - b)) / (2.0 * b), 0)
            })?;
            Ok(UnimodalPoint { q, value: e.value, stderr: e.stderr_or_bound })
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;
    let limit = gf_neg_moment(a, d).or_else(|_| gf_from_coeffs(&c, d, VERIFY_TOL))?;
    let mut order: Vec<&UnimodalPoint> = points.iter().collect();
    order.sort_by(|x, y| y.q.total_cmp(&x.q));
    let monotone_trend = order.windows(2).all(|w| (w[1].value - limit.value).abs() <= (w[0].value - limit.value).abs());
    Ok(UnimodalLimit { points, limit, monotone_trend })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{make_perturbed_rademacher, make_radial};
    use crate::report::Verdict;

    fn v(x: &[f64]) -> UnitVector {
        UnitVector::normalized(x.to_vec()).unwrap()
    }

    #[test]
    fn enumeration_examples() {
        let e = exact_rademacher_mean(&UnitVector::equal(2).unwrap()).unwrap();
        assert!((e.value - FRAC_1_SQRT_2).abs() < 1e-15);
        let e = exact_rademacher_mean(&v(&[1.0, 0.0, 0.0])).unwrap();
        assert!((e.value - 1.0).abs() < 1e-15);
        let e = exact_rademacher_mean(&UnitVector::equal(3).unwrap()).unwrap();
        assert!((e.value - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(matches!(
            exact_rademacher_mean(&UnitVector::equal(27).unwrap()),
            Err(VerifyError::Budget { n: 27, .. })
        ));
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for seed in 0..5 {
            let a = UnitVector::random(13, seed, false).unwrap();
            let c = a.coords();
            let mut total = 0.0;
            for mask in 0..(1u32 << 13) {
                let s: f64 = c.iter().enumerate().map(|(j, x)| if mask >> j & 1 == 1 { -x } else { *x }).sum();
                total += s.abs();
            }
            let brute = total / 8192.0;
            assert!((exact_rademacher_mean(&a).unwrap().value - brute).abs() < 1e-13);
        }
    }

    #[test]
    fn fourier_examples() {
        let r = Distribution1D::rademacher();
        let e = fourier_mean(&UnitVector::equal(2).unwrap(), &r).unwrap();
        assert!((e.value - FRAC_1_SQRT_2).abs() <= 1e-9, "{e:?}");
        let e = fourier_mean(&UnitVector::equal(3).unwrap(), &r).unwrap();
        assert!((e.value - 3f64.sqrt() / 2.0).abs() <= 1e-9, "{e:?}");
        let c = 3e-3;
        let tp = make_perturbed_rademacher(Kind1D::TwoPoint { c }).unwrap();
        let e = fourier_mean(&UnitVector::equal(2).unwrap(), &tp).unwrap();
        assert!((e.value - (1.0 + c) * FRAC_1_SQRT_2).abs() <= 1e-9);
        // generic vector through the bracketed tail
        let a = v(&[0.6, 0.5, 0.4, 0.3]);
        let e = fourier_mean(&a, &r).unwrap();
        let x = exact_rademacher_mean(&a).unwrap();
        assert!((e.value - x.value).abs() <= e.stderr_or_bound, "{e:?} vs {x:?}");
    }

    #[test]
    fn gf_examples() {
        let sphere = RadialDist3D::sphere();
        let e = gf_neg_moment(&UnitVector::equal(2).unwrap(), &sphere).unwrap();
        assert!((e.value - SQRT_2).abs() <= 1e-9, "{e:?}");
        let c = 0.01;
        let shift = make_radial(RadialKind::RadiusShift { c }).unwrap();
        let e = gf_neg_moment(&UnitVector::equal(2).unwrap(), &shift).unwrap();
        assert!((e.value - SQRT_2 / (1.0 + c)).abs() <= 1e-9);
        let e = gf_neg_moment(&UnitVector::equal(3).unwrap(), &sphere).unwrap();
        assert!(e.value <= SQRT_2);
        let single = gf_single(&sphere).unwrap();
        assert!((single.value - 1.0).abs() <= 1e-8, "{single:?}");
        let two = make_radial(RadialKind::RadiusTwoPoint { c: 0.1 }).unwrap();
        assert!(gf_single(&two).is_err());
    }

    #[test]
    fn gf_general_vectors_match_monte_carlo() {
        let sphere = RadialDist3D::sphere();
        let a = v(&[0.6, 0.5, 0.4, 0.3, 0.2]);
        let e = gf_neg_moment(&a, &sphere).unwrap();
        let mc = mc_neg_moment(&a, &sphere, 200_000, 7).unwrap();
        assert!((e.value - mc.value).abs() <= 5.0 * mc.stderr_or_bound + e.stderr_or_bound);
        assert!(e.stderr_or_bound < 1e-8);
    }

    #[test]
    fn mc_examples() {
        let r = Distribution1D::rademacher();
        let e = mc_mean(&UnitVector::equal(2).unwrap(), &r, 100_000, 3).unwrap();
        assert!((e.value - FRAC_1_SQRT_2).abs() <= 3.0 * e.stderr_or_bound + 1e-12);
        let again = mc_mean(&UnitVector::equal(2).unwrap(), &r, 100_000, 3).unwrap();
        assert_eq!(e, again);
        let d = make_perturbed_rademacher(Kind1D::UniformNoise { c: 0.2 }).unwrap();
        let e = mc_mean(&v(&[1.0, 0.0]), &d, 100_000, 5).unwrap();
        assert!((e.value - 1.0).abs() <= 3.0 * e.stderr_or_bound);
        let e = mc_neg_moment(&UnitVector::equal(2).unwrap(), &RadialDist3D::sphere(), 100_000, 9).unwrap();
        assert!((e.value - SQRT_2).abs() <= 4.0 * e.stderr_or_bound);
        assert_eq!(e.zero_resamples, 0);
        assert!(mc_mean(&UnitVector::equal(2).unwrap(), &r, 10, 0).is_err());
    }

    #[test]
    fn amgm_and_holder_examples() {
        let r = Distribution1D::rademacher();
        let e = amgm_lower_bound(&UnitVector::equal(2).unwrap(), &r).unwrap();
        assert!((e.value - FRAC_1_SQRT_2).abs() <= 1e-8);
        let e = amgm_lower_bound(&UnitVector::equal(3).unwrap(), &r).unwrap();
        assert!((e.value - 4.0 / (PI * 3f64.sqrt())).abs() <= 1e-8);
        let a = v(&[0.8, 0.6]);
        let lower = amgm_lower_bound(&a, &r).unwrap();
        assert!(lower.value <= exact_rademacher_mean(&a).unwrap().value);

        let sphere = RadialDist3D::sphere();
        let h = holder_upper_bound(&UnitVector::equal(2).unwrap(), &sphere).unwrap();
        assert!((h.value - SQRT_2).abs() <= 1e-8);
        let h = holder_upper_bound(&UnitVector::equal(3).unwrap(), &sphere).unwrap();
        let gf = gf_neg_moment(&UnitVector::equal(3).unwrap(), &sphere).unwrap();
        assert!(h.value >= gf.value - h.stderr_or_bound - gf.stderr_or_bound);
        let bad = v(&[0.9, (1.0f64 - 0.81).sqrt()]);
        assert!(
            matches!(holder_upper_bound(&bad, &sphere), Err(VerifyError::Precondition(m)) if m.contains("small-coefficient"))
        );
    }

    #[test]
    fn theorem_checks() {
        let opts = VerifyOptions { mc_samples: 20_000, ..Default::default() };
        let a = UnitVector::random(8, 11, true).unwrap();
        let r = verify_szarek(&a, &Distribution1D::rademacher(), &opts);
        assert!(r.passed() && r.certified, "{r:#?}");
        let r = verify_ball(&UnitVector::equal(3).unwrap(), &RadialDist3D::sphere(), &opts);
        assert!(r.passed() && r.certified, "{r:#?}");
        let tp = make_perturbed_rademacher(Kind1D::TwoPoint { c: 5e-5 }).unwrap();
        for seed in 0..3 {
            let a = UnitVector::random(3, seed, true).unwrap();
            assert!(verify_szarek(&a, &tp, &opts).passed());
        }
        let wide = v(&[0.9, (1.0f64 - 0.81).sqrt()]);
        let r = verify_ball(&wide, &RadialDist3D::sphere(), &opts);
        assert_eq!(r.verdict, Verdict::Rejected);
        let r = verify_szarek(&wide, &Distribution1D::rademacher(), &opts);
        assert_eq!(r.lemma_id, "Thm1-trivial");
        assert!(r.passed());
    }

    #[test]
    fn lobe_peaks_in_brackets() {
        let (x1, y1) = lobe_peak(1);
        assert!((x1 - 1.430_296_653).abs() < 1e-8, "{x1}");
        assert!(y1 > 1.0 / (1.5 * PI) && y1 < 1.0 / PI);
    }

    #[test]
    fn level_measure_of_main_lobe() {
        let lobes = Lobes::new(10);
        // above y_1 only the main lobe counts
        let y: f64 = 0.5;
        let (gm, exact) = lobes.level_measure(-y.ln(), f64::INFINITY);
        assert!(exact);
        assert!((g(gm) - y).abs() < 1e-14);
    }

    #[test]
    fn np_sign_change_examples() {
        let r = np_sign_change(1.0).unwrap();
        assert_eq!(r.crossings, 1);
        assert_eq!(r.sign_pattern, "-+");
        assert!(r.lobes_in_brackets && r.lobes_decreasing);
        assert!(r.moment_identity_residual.abs() <= 1e-6, "{}", r.moment_identity_residual);
        assert_eq!(np_sign_change(1.03).unwrap().crossings, 1);
        assert!(np_sign_change(0.9).is_err());
    }

    #[test]
    fn majorization_examples() {
        let grid = perturbed::log_grid(2.0, 1e4, 30);
        assert!(np_majorization_check(1.0, 2.0, &grid).passed());
        let p = specialfn::phi0(2.01, 0).unwrap().value;
        let a = 2.0 / (p * p);
        let grid = perturbed::log_grid(2.01, 1e4, 30);
        // equality at s0 itself, so the margin there is exactly zero
        let r = np_majorization_check(a, 2.01, &grid);
        assert!(r.passed() && r.margin.abs() < 1e-12, "{r:#?}");
        assert_eq!(np_majorization_check(0.9, 2.0, &grid).verdict, Verdict::Rejected);
        assert_eq!(np_majorization_check(1.01, 2.0, &perturbed::log_grid(2.0, 10.0, 3)).verdict, Verdict::Rejected);
    }

    #[test]
    fn unimodal_examples() {
        let sphere = RadialDist3D::sphere();
        let a = UnitVector::equal(2).unwrap();
        let u = unimodal_limit(&a, &sphere, &[-0.9, -0.99], 200_000, 1).unwrap();
        for p in &u.points {
            let exact = SQRT_2.powf(p.q + 2.0) / (p.q + 2.0);
            assert!((p.value - exact).abs() <= 5.0 * p.stderr, "{p:?} vs {exact}");
        }
        assert!((u.points[1].value - SQRT_2).abs() <= 0.05);
        assert!(unimodal_limit(&a, &sphere, &[0.5], 1000, 0).is_err());
    }
}
