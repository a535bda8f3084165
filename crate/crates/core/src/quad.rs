//! Adaptive Gauss-Kronrod quadrature on finite and semi-infinite ranges.
//!
//! Finite ranges are split at caller-supplied breakpoints (for example the
//! zeros of an oscillatory factor) and refined with a 10/21-point
//! Gauss-Kronrod pair. Semi-infinite ranges are truncated at a cutoff `T`
//! whose remainder is handled by one of the [`TailModel`]s:
//!
//! * `Power`: the integrand is bracketed by `lower t^-p ..= upper t^-p`, giving a
//!   midpoint estimate and an analytic bound on the truncated mass.
//! * `Exponential`: `|f(t)| <= c e^{-rate t}`.
//! * `Periodic`: the integrand is `sum_i h_i(t) t^-p (ln t)^L_i` with periodic
//!   `h_i`; the tail is summed window by window from the Taylor moments of
//!   `h_i` over one period and Euler-Maclaurin sums of the weight derivatives.
//!
//! With only a period hint and no tail model, the integral is summed lobe by
//! lobe as an alternating series with repeated averaging of partial sums.

use crate::par;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("integrand returned {value} at t = {at}")]
    NonFinite { at: f64, value: f64 },
    #[error("invalid interval [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("cannot bound tail: integrand has neither a tail model nor a period hint")]
    CannotBoundTail,
    #[error("tail model t^-{0} is not integrable at infinity (need p > 1)")]
    DivergentTail(f64),
    #[error("lobe integrals do not alternate in sign near t = {at}")]
    NotAlternating { at: f64 },
}

/// Outcome of one integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    /// Estimated error of the quadrature over `[start, cutoff]`.
    pub abs_error_est: f64,
    /// Bound on the error committed beyond `cutoff`.
    pub tail_bound: f64,
    pub cutoff: f64,
    pub panels: usize,
    /// `false` when the requested tolerance could not be met within the
    /// panel or cutoff budget; `value` is then the best available estimate.
    pub converged: bool,
}

impl QuadResult {
    pub fn uncertainty(&self) -> f64 {
        self.abs_error_est + self.tail_bound
    }

    /// Affine rescaling `k * value + shift`, with errors scaled by `|k|`.
    pub fn scaled(self, k: f64, shift: f64) -> QuadResult {
        QuadResult {
            value: k * self.value + shift,
            abs_error_est: k.abs() * self.abs_error_est,
            tail_bound: k.abs() * self.tail_bound,
            ..self
        }
    }
}

/// Two-term even model `c0 + c2 t^2` of an integrand near `t = 0`, with the
/// next coefficient `c4` used to size the patched interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvenSeries {
    pub c0: f64,
    pub c2: f64,
    pub c4: f64,
}

/// Breakpoints at `phase + k * period`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Period {
    pub period: f64,
    pub phase: f64,
}

type Func<'a> = Box<dyn Fn(f64) -> f64 + Sync + Send + 'a>;

struct PeriodicTerm<'a> {
    h: Func<'a>,
    log_power: u32,
    sup_abs: f64,
}

/// Tail `sum_i h_i(t) t^-power (ln t)^{L_i}` with every `h_i` periodic.
pub struct PeriodicTail<'a> {
    pub period: f64,
    pub phase: f64,
    pub power: f64,
    terms: Vec<PeriodicTerm<'a>>,
}

impl<'a> PeriodicTail<'a> {
    pub fn new(period: f64, phase: f64, power: f64) -> Self {
        Self { period, phase, power, terms: Vec::new() }
    }

    /// Adds `h(t) t^-power (ln t)^log_power`, where `|h| <= sup_abs`.
    pub fn term(mut self, log_power: u32, sup_abs: f64, h: impl Fn(f64) -> f64 + Sync + Send + 'a) -> Self {
        assert!(log_power <= 2, "log powers above 2 are not supported");
        self.terms.push(PeriodicTerm { h: Box::new(h), log_power, sup_abs });
        self
    }
}

pub enum TailModel<'a> {
    /// `lower * t^-p <= f(t) <= upper * t^-p` for `t >= from`.
    Power {
        lower: f64,
        upper: f64,
        p: f64,
        from: f64,
    },
    /// `|f(t)| <= c * exp(-rate * t)` for all `t`.
    Exponential {
        c: f64,
        rate: f64,
    },
    Periodic(PeriodicTail<'a>),
}

impl TailModel<'_> {
    /// Symmetric envelope `|f(t)| <= c t^-p`.
    pub fn envelope(c: f64, p: f64) -> Self {
        TailModel::Power { lower: -c, upper: c, p, from: 0.0 }
    }
}

/// A real integrand on `t > 0` plus the hints the integrators can use.
pub struct Integrand<'a> {
    eval: Func<'a>,
    pub series: Option<EvenSeries>,
    pub period: Option<Period>,
    pub tail: Option<TailModel<'a>>,
}

impl<'a> Integrand<'a> {
    pub fn new(f: impl Fn(f64) -> f64 + Sync + Send + 'a) -> Self {
        Self { eval: Box::new(f), series: None, period: None, tail: None }
    }

    pub fn with_series(mut self, series: EvenSeries) -> Self {
        self.series = Some(series);
        self
    }

    pub fn with_period(mut self, period: f64, phase: f64) -> Self {
        self.period = Some(Period { period, phase });
        self
    }

    pub fn with_tail(mut self, tail: TailModel<'a>) -> Self {
        self.tail = Some(tail);
        self
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }
}

/// Budgets for the integrators.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub max_panels: usize,
    /// Largest cutoff a `Power` tail may push `T` to.
    pub max_cutoff: f64,
    /// Largest number of lobes summed in alternating mode.
    pub max_lobes: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self { max_panels: 2_000_000, max_cutoff: 1.0e6, max_lobes: 1 << 20 }
    }
}

// 21-point Kronrod extension of the 10-point Gauss rule (abscissae descending).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_600_525_551,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];
// Gauss weights, paired with XGK[1], XGK[3], ..., XGK[9].
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    frozen: bool,
}

fn checked(f: &(dyn Fn(f64) -> f64 + Sync), t: f64) -> Result<f64, QuadError> {
    let v = f(t);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(QuadError::NonFinite { at: t, value: v })
    }
}

fn gk21(f: &(dyn Fn(f64) -> f64 + Sync), a: f64, b: f64) -> Result<Panel, QuadError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = checked(f, center)?;
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    let mut resabs = (WGK[10] * fc).abs();
    let mut fv = [(0.0, 0.0); 10];
    for (j, x) in XGK[..10].iter().enumerate() {
        let dx = half * x;
        let f1 = checked(f, center - dx)?;
        let f2 = checked(f, center + dx)?;
        fv[j] = (f1, f2);
        kronrod += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        resasc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let value = kronrod * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok(Panel { a, b, value, err, frozen: false })
}

#[derive(Debug, Clone, Copy)]
struct Adaptive {
    value: f64,
    err: f64,
    panels: usize,
    converged: bool,
}

/// Globally adaptive refinement starting from the partition `breaks`.
///
/// Every round bisects all panels whose error exceeds `tol / (2 n)`; halves
/// are evaluated through [`par::map_indexed`] and spliced back in order, so
/// the result does not depend on scheduling.
fn adaptive(
    f: &(dyn Fn(f64) -> f64 + Sync),
    breaks: &[f64],
    tol: f64,
    max_panels: usize,
) -> Result<Adaptive, QuadError> {
    let mut panels: Vec<Panel> = par::map_indexed(breaks.len() - 1, |i| gk21(f, breaks[i], breaks[i + 1]))
        .into_iter()
        .collect::<Result<_, _>>()?;
    loop {
        let errs: Vec<f64> = panels.iter().map(|p| p.err).collect();
        let total_err = par::ordered_sum(&errs);
        let n = panels.len();
        if total_err <= tol {
            return Ok(finish(&panels, total_err, true));
        }
        let threshold = tol / (2.0 * n as f64);
        let mut chosen: Vec<usize> = (0..n).filter(|&i| !panels[i].frozen && panels[i].err > threshold).collect();
        if chosen.is_empty() || n >= max_panels {
            return Ok(finish(&panels, total_err, false));
        }
        let room = max_panels - n;
        if chosen.len() > room {
            chosen.sort_by(|&i, &j| panels[j].err.total_cmp(&panels[i].err).then(i.cmp(&j)));
            chosen.truncate(room.max(1));
            chosen.sort_unstable();
        }
        let halves: Vec<(Panel, Panel)> = par::map_indexed(chosen.len(), |k| {
            let p = panels[chosen[k]];
            let mid = 0.5 * (p.a + p.b);
            Ok((gk21(f, p.a, mid)?, gk21(f, mid, p.b)?))
        })
        .into_iter()
        .collect::<Result<_, QuadError>>()?;
        let mut next = Vec::with_capacity(n + chosen.len());
        let mut c = 0;
        for (i, p) in panels.iter().enumerate() {
            if c < chosen.len() && chosen[c] == i {
                let (mut l, mut r) = halves[c];
                // No gain from bisection, or panels at the resolution limit.
                let stalled =
                    l.err + r.err >= 0.999 * p.err && p.err <= 100.0 * f64::EPSILON * p.value.abs().max(1e-300);
                let tiny = (p.b - p.a) <= 1e-13 * p.a.abs().max(p.b.abs()).max(1e-300);
                if stalled || tiny {
                    l.frozen = true;
                    r.frozen = true;
                }
                next.push(l);
                next.push(r);
                c += 1;
            } else {
                next.push(*p);
            }
        }
        panels = next;
    }
}

fn finish(panels: &[Panel], err: f64, converged: bool) -> Adaptive {
    let vals: Vec<f64> = panels.iter().map(|p| p.value).collect();
    Adaptive { value: par::ordered_sum(&vals), err, panels: panels.len(), converged }
}

fn validate_tol(tol: f64) -> Result<(), QuadError> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(QuadError::InvalidTolerance(tol))
    }
}

/// Breakpoints `a, phase + kP ..., b` (or just `a, b`).
fn partition(a: f64, b: f64, period: Option<Period>, max_points: usize) -> Vec<f64> {
    let mut pts = vec![a];
    if let Some(Period { period, phase }) = period {
        if period > 0.0 {
            let k0 = ((a - phase) / period).floor() as i64 + 1;
            let mut k = k0;
            loop {
                let x = phase + k as f64 * period;
                if x >= b || pts.len() >= max_points {
                    break;
                }
                if x > a * (1.0 + 1e-15) + 1e-300 {
                    pts.push(x);
                }
                k += 1;
            }
        }
    }
    pts.push(b);
    pts
}

/// Integrates over the finite interval `[a, b]`.
///
/// When `a == 0` and the integrand carries an [`EvenSeries`], `[0, eps]` is
/// replaced by the series integral with `eps` sized so that the neglected
/// `c4` term stays below `tol / 10`.
pub fn integrate_finite(f: &Integrand<'_>, a: f64, b: f64, tol: f64) -> Result<QuadResult, QuadError> {
    integrate_finite_with(f, a, b, tol, &QuadOptions::default())
}

pub fn integrate_finite_with(
    f: &Integrand<'_>,
    a: f64,
    b: f64,
    tol: f64,
    opts: &QuadOptions,
) -> Result<QuadResult, QuadError> {
    validate_tol(tol)?;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(QuadError::InvalidInterval { a, b });
    }
    let (start, patch_value, patch_err) = series_patch(f, a, b, tol);
    let breaks = partition(start, b, f.period, opts.max_panels / 2);
    let ad = adaptive(&*f.eval, &breaks, tol - patch_err, opts.max_panels)?;
    Ok(QuadResult {
        value: ad.value + patch_value,
        abs_error_est: ad.err + patch_err,
        tail_bound: 0.0,
        cutoff: b,
        panels: ad.panels,
        converged: ad.converged,
    })
}

/// Integrates over `[breaks[0], breaks[last]]`, refining from the given
/// partition. Hints on `f` other than the series patch are ignored.
pub fn integrate_partition(
    f: &Integrand<'_>,
    breaks: &[f64],
    tol: f64,
    opts: &QuadOptions,
) -> Result<QuadResult, QuadError> {
    validate_tol(tol)?;
    if breaks.len() < 2 {
        return Err(QuadError::InvalidInterval { a: f64::NAN, b: f64::NAN });
    }
    let (a, b) = (breaks[0], breaks[breaks.len() - 1]);
    if breaks.windows(2).any(|w| !(w[0] < w[1])) || !a.is_finite() || !b.is_finite() {
        return Err(QuadError::InvalidInterval { a, b });
    }
    let (start, patch_value, patch_err) = series_patch(f, a, breaks[1], tol);
    let mut pts = breaks.to_vec();
    pts[0] = start;
    let ad = adaptive(&*f.eval, &pts, tol - patch_err, opts.max_panels)?;
    Ok(QuadResult {
        value: ad.value + patch_value,
        abs_error_est: ad.err + patch_err,
        tail_bound: 0.0,
        cutoff: b,
        panels: ad.panels,
        converged: ad.converged,
    })
}

fn series_patch(f: &Integrand<'_>, a: f64, b: f64, tol: f64) -> (f64, f64, f64) {
    match f.series {
        Some(EvenSeries { c0, c2, c4 }) if a == 0.0 => {
            let cap = 0.25 * (b - a);
            let eps = if c4 != 0.0 { (tol / (2.0 * c4.abs())).powf(0.2).min(cap) } else { cap.min(1e-3) };
            let value = c0 * eps + c2 * eps.powi(3) / 3.0;
            let err = c4.abs() * eps.powi(5) / 5.0;
            (eps, value, err)
        }
        _ => (a, 0.0, 0.0),
    }
}

/// Integrates over `[0, inf)`.
pub fn integrate_semi_infinite(f: &Integrand<'_>, tol: f64) -> Result<QuadResult, QuadError> {
    integrate_from(f, 0.0, tol, &QuadOptions::default())
}

/// Integrates over `[start, inf)`.
pub fn integrate_from(f: &Integrand<'_>, start: f64, tol: f64, opts: &QuadOptions) -> Result<QuadResult, QuadError> {
    validate_tol(tol)?;
    if !start.is_finite() || start < 0.0 {
        return Err(QuadError::InvalidInterval { a: start, b: f64::INFINITY });
    }
    match &f.tail {
        Some(TailModel::Power { lower, upper, p, from }) => {
            let p = *p;
            if p <= 1.0 {
                return Err(QuadError::DivergentTail(p));
            }
            let width = 0.5 * (upper - lower);
            let mid = 0.5 * (upper + lower);
            // width * T^(1-p) / (p-1) <= tol/2
            let mut cutoff = if width > 0.0 { (2.0 * width / ((p - 1.0) * tol)).powf(1.0 / (p - 1.0)) } else { 1.0 };
            cutoff = cutoff.max(*from).max(start + 1.0);
            let mut converged = true;
            if cutoff > opts.max_cutoff {
                cutoff = opts.max_cutoff.max(start + 1.0).max(*from);
                converged = false;
            }
            let head = finite_part(f, start, cutoff, tol / 2.0, opts)?;
            let scale = cutoff.powf(1.0 - p) / (p - 1.0);
            Ok(QuadResult {
                value: head.value + mid * scale,
                abs_error_est: head.abs_error_est,
                tail_bound: width * scale,
                cutoff,
                panels: head.panels,
                converged: converged && head.converged,
            })
        }
        Some(TailModel::Exponential { c, rate }) => {
            if !(*rate > 0.0) {
                return Err(QuadError::DivergentTail(0.0));
            }
            let cutoff = ((c / (rate * tol * 0.5)).ln() / rate).max(start + 1.0);
            let head = finite_part(f, start, cutoff, tol / 2.0, opts)?;
            Ok(QuadResult { tail_bound: c * (-rate * cutoff).exp() / rate, ..head })
        }
        Some(TailModel::Periodic(pt)) => {
            let p = pt.power;
            let align = |t: f64| pt.phase + ((t - pt.phase) / pt.period).ceil() * pt.period;
            // Fast decay: a short cutoff whose crude bound is negligible.
            let short = align(start.max(64.0 * pt.period));
            let cutoff = if crude_tail_bound(pt, short) <= 1e-3 * tol {
                short
            } else {
                align(start.max((64.0f64).max(8.0 * (p + 12.0)) * pt.period))
            };
            let head = finite_part(f, start, cutoff, tol / 2.0, opts)?;
            let (tail, tail_err) = periodic_tail_from(pt, cutoff, tol / 2.0)?;
            Ok(QuadResult {
                value: head.value + tail,
                abs_error_est: head.abs_error_est,
                tail_bound: tail_err,
                cutoff,
                panels: head.panels,
                converged: head.converged && tail_err <= tol / 2.0,
            })
        }
        None => match f.period {
            Some(period) => alternating_lobes(f, start, period, tol, opts),
            None => Err(QuadError::CannotBoundTail),
        },
    }
}

fn finite_part(f: &Integrand<'_>, start: f64, end: f64, tol: f64, opts: &QuadOptions) -> Result<QuadResult, QuadError> {
    let (a, patch_value, patch_err) = series_patch(f, start, end, tol);
    let breaks =
        if f.period.is_some() { partition(a, end, f.period, opts.max_panels / 2) } else { geometric_partition(a, end) };
    let ad = adaptive(&*f.eval, &breaks, (tol - patch_err).max(tol * 0.5), opts.max_panels)?;
    Ok(QuadResult {
        value: ad.value + patch_value,
        abs_error_est: ad.err + patch_err,
        tail_bound: 0.0,
        cutoff: end,
        panels: ad.panels,
        converged: ad.converged,
    })
}

fn geometric_partition(a: f64, b: f64) -> Vec<f64> {
    let mut pts = vec![a];
    let mut x = if a > 0.0 { 2.0 * a } else { 1.0 };
    while x < b {
        pts.push(x);
        x *= 2.0;
    }
    pts.push(b);
    pts
}

const BERNOULLI_2K: [f64; 8] =
    [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0, -3617.0 / 510.0];
const TAYLOR_ORDER: usize = 10;
const EM_TERMS: usize = 6;

/// `d^n/du^n [u^-p (ln u)^L]` for `L <= 2`.
fn weight_derivative(log_power: u32, p: f64, n: usize, u: f64) -> f64 {
    let mut g = u.powf(-p);
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for i in 0..n {
        let q = p + i as f64;
        g *= -q / u;
        s1 += 1.0 / q;
        s2 += 1.0 / (q * q);
    }
    let l = u.ln() - s1;
    match log_power {
        0 => g,
        1 => g * l,
        _ => g * (l * l - s2),
    }
}

/// `int_u^inf t^-p (ln t)^L dt`.
fn weight_integral(log_power: u32, p: f64, u: f64) -> f64 {
    let f = u.powf(1.0 - p) / (p - 1.0);
    let l = u.ln() + 1.0 / (p - 1.0);
    match log_power {
        0 => f,
        1 => f * l,
        _ => f * (l * l + 1.0 / ((p - 1.0) * (p - 1.0))),
    }
}

/// Euler-Maclaurin value of `sum_{k>=0} w^{(j)}(a + kP)`, plus the size of
/// the last correction kept.
fn lattice_sum(log_power: u32, p: f64, a: f64, period: f64, j: usize) -> (f64, f64) {
    let integral = if j == 0 { weight_integral(log_power, p, a) } else { -weight_derivative(log_power, p, j - 1, a) };
    let mut sum = integral / period + 0.5 * weight_derivative(log_power, p, j, a);
    let mut fact = 1.0;
    let mut last = 0.0;
    for (i, b) in BERNOULLI_2K.iter().take(EM_TERMS).enumerate() {
        let k = 2 * (i + 1);
        fact *= ((k - 1) * k) as f64;
        let term = b / fact * period.powi(k as i32 - 1) * weight_derivative(log_power, p, j + k - 1, a);
        sum -= term;
        last = term.abs();
    }
    (sum, last)
}

fn crude_tail_bound(pt: &PeriodicTail<'_>, t0: f64) -> f64 {
    pt.terms.iter().map(|t| t.sup_abs * weight_integral(t.log_power, pt.power, t0).abs()).sum()
}

/// Tail `int_{t0}^inf` of a [`PeriodicTail`]; `t0` must be a window start.
pub fn periodic_tail_from(pt: &PeriodicTail<'_>, t0: f64, tol: f64) -> Result<(f64, f64), QuadError> {
    let p = pt.power;
    if p <= 1.0 {
        return Err(QuadError::DivergentTail(p));
    }
    let crude = crude_tail_bound(pt, t0);
    if crude <= 1e-3 * tol {
        return Ok((0.0, crude));
    }
    let period = pt.period;
    let center = t0 + 0.5 * period;
    let mut value = 0.0;
    let mut err = 0.0;
    for term in &pt.terms {
        let sums: Vec<(f64, f64)> =
            (0..=TAYLOR_ORDER).map(|j| lattice_sum(term.log_power, p, center, period, j)).collect();
        let moments: Vec<Adaptive> = par::map_indexed(TAYLOR_ORDER + 1, |j| {
            let g = |u: f64| (term.h)(u) * (u - center).powi(j as i32);
            let scale = term.sup_abs.max(1e-300) * period * (0.5 * period).powi(j as i32);
            adaptive(&g, &[t0, center, t0 + period], 1e-15 * scale, 20_000)
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
        let mut fact = 1.0;
        for j in 0..=TAYLOR_ORDER {
            if j > 0 {
                fact *= j as f64;
            }
            let (s, em_last) = sums[j];
            let contrib = moments[j].value / fact * s;
            value += contrib;
            err += moments[j].err / fact * s.abs() + moments[j].value.abs() / fact * em_last;
            if j == TAYLOR_ORDER {
                // Size of the first omitted Taylor term, bounded by the last kept one.
                err += contrib.abs();
            }
        }
    }
    Ok((value, err))
}

/// Alternating-series summation over lobes `[phase + kP, phase + (k+1)P]`.
fn alternating_lobes(
    f: &Integrand<'_>,
    start: f64,
    period: Period,
    tol: f64,
    opts: &QuadOptions,
) -> Result<QuadResult, QuadError> {
    let Period { period: len, phase } = period;
    let mut first = phase + ((start - phase) / len).floor() * len;
    while first <= start {
        first += len;
    }
    let head = if first > start {
        adaptive(&*f.eval, &[start, first], tol * 1e-2, opts.max_panels)?
    } else {
        Adaptive { value: 0.0, err: 0.0, panels: 0, converged: true }
    };
    const BLOCK: usize = 256;
    const LEVELS: usize = 12;
    let mut lobes: Vec<f64> = Vec::new();
    let mut lobe_err = 0.0;
    let mut panels = head.panels;
    let mut converged_quad = head.converged;
    loop {
        let base = lobes.len();
        let block: Vec<Adaptive> = par::map_indexed(BLOCK, |i| {
            let a = first + (base + i) as f64 * len;
            adaptive(&*f.eval, &[a, a + len], tol * 1e-6, 10_000)
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
        for ad in &block {
            lobes.push(ad.value);
            lobe_err += ad.err;
            panels += ad.panels;
            converged_quad &= ad.converged;
        }
        // Alternation and monotone decay are required beyond the first lobes.
        for k in base.max(2)..lobes.len() {
            let (prev, cur) = (lobes[k - 1], lobes[k]);
            if prev * cur > 0.0 || cur.abs() > prev.abs() * (1.0 + 1e-9) + 1e-300 {
                return Err(QuadError::NotAlternating { at: first + k as f64 * len });
            }
        }
        let mut partial = Vec::with_capacity(LEVELS + 1);
        let mut acc = head.value;
        for (k, v) in lobes.iter().enumerate() {
            acc += v;
            if k + LEVELS + 1 >= lobes.len() {
                partial.push(acc);
            }
        }
        let mut level = partial;
        let mut prev_best = *level.last().unwrap();
        let mut est_err = f64::INFINITY;
        while level.len() > 1 {
            level = level.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            let best = *level.last().unwrap();
            est_err = (best - prev_best).abs();
            prev_best = best;
        }
        let value = prev_best;
        let done = est_err <= 0.5 * tol;
        if done || lobes.len() + BLOCK > opts.max_lobes {
            return Ok(QuadResult {
                value,
                abs_error_est: head.err + lobe_err,
                tail_bound: est_err,
                cutoff: first + lobes.len() as f64 * len,
                panels,
                converged: done && converged_quad,
            });
        }
    }
}
