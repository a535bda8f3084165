//! Symmetric laws on the line, rotationally invariant laws in R^3 and unit
//! coefficient vectors.
//!
//! Every family has its characteristic function, moments and W2 distance to
//! the reference law (Rademacher, resp. uniform on the unit sphere) wired in
//! closed form. Samplers draw from per-stream ChaCha8 generators, so a
//! `(seed, stream)` pair always reproduces the same draws.

use crate::report::LemmaReport;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::f64::consts::FRAC_1_SQRT_2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("{family}: parameter c = {c} outside {allowed}")]
    Parameter { family: &'static str, c: f64, allowed: &'static str },
    #[error("unit vector needs at least 2 coordinates, got {0}")]
    TooShort(usize),
    #[error("coordinates have squared norm {0}, expected 1")]
    NotUnit(f64),
    #[error("coordinates must be finite")]
    NonFinite,
}

/// Independent generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Cumulant-style coefficients `[k1, k2, k3]` of `ln(1 - m2 x^2 w2 + m4 x^4 w4 - m6 x^6 w6)`
/// where the `w`s are the Taylor weights of the kernel (`1/2!, 1/4!, 1/6!`
/// for cosine, `1/3!, 1/5!, 1/7!` for sinc).
fn log_series(m: [f64; 3], w: [f64; 3]) -> [f64; 3] {
    let a1 = -m[0] * w[0];
    let a2 = m[1] * w[1];
    let a3 = -m[2] * w[2];
    [a1, a2 - 0.5 * a1 * a1, a3 - a1 * a2 + a1 * a1 * a1 / 3.0]
}

const COS_WEIGHTS: [f64; 3] = [0.5, 1.0 / 24.0, 1.0 / 720.0];
const SINC_WEIGHTS: [f64; 3] = [1.0 / 6.0, 1.0 / 120.0, 1.0 / 5040.0];

/// `1 - sin(x)/x`, accurate for small `x`.
pub fn one_minus_sinc(x: f64) -> f64 {
    let x2 = x * x;
    if x2 < 1e-2 {
        x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0)))
    } else {
        1.0 - x.sin() / x
    }
}

pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// `ln|1 - d|` given the deficit `d = 1 - value`, accurate when `d` is small.
fn ln_abs_from_deficit(d: f64) -> f64 {
    if d.abs() < 0.5 {
        (-d).ln_1p()
    } else {
        (1.0 - d).abs().ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kind1D {
    /// `X = +-(1+c)`.
    TwoPoint { c: f64 },
    /// `|X|` uniform on `{1-c, 1+c}`.
    FourPoint { c: f64 },
    /// `X = eps (1 + c U)` with `U` uniform on `[-1, 1]`.
    UniformNoise { c: f64 },
}

/// A symmetric law on the real line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution1D {
    pub name: String,
    pub kind: Kind1D,
}

pub fn make_perturbed_rademacher(kind: Kind1D) -> Result<Distribution1D, DistError> {
    let name = match kind {
        Kind1D::TwoPoint { c } => {
            if !(c > -1.0 && c.is_finite()) {
                return Err(DistError::Parameter { family: "two-point", c, allowed: "(-1, inf)" });
            }
            if c == 0.0 {
                "rademacher".to_string()
            } else {
                format!("two-point(c={c})")
            }
        }
        Kind1D::FourPoint { c } => {
            if !(0.0..1.0).contains(&c) {
                return Err(DistError::Parameter { family: "four-point", c, allowed: "[0, 1)" });
            }
            format!("four-point(c={c})")
        }
        Kind1D::UniformNoise { c } => {
            if !(0.0..1.0).contains(&c) {
                return Err(DistError::Parameter { family: "uniform-noise", c, allowed: "[0, 1)" });
            }
            format!("uniform-noise(c={c})")
        }
    };
    Ok(Distribution1D { name, kind })
}

impl Distribution1D {
    pub fn rademacher() -> Self {
        Self { name: "rademacher".into(), kind: Kind1D::TwoPoint { c: 0.0 } }
    }

    pub fn is_rademacher(&self) -> bool {
        self.kind == Kind1D::TwoPoint { c: 0.0 }
    }

    /// `E cos(tX)`.
    pub fn cf(&self, t: f64) -> f64 {
        match self.kind {
            Kind1D::TwoPoint { c } => ((1.0 + c) * t).cos(),
            Kind1D::FourPoint { c } => t.cos() * (c * t).cos(),
            Kind1D::UniformNoise { c } => t.cos() * sinc(c * t),
        }
    }

    /// `1 - cf(t)` without cancellation near `t = 0`.
    pub fn one_minus_cf(&self, t: f64) -> f64 {
        let hs = |x: f64| {
            let h = (0.5 * x).sin();
            h * h
        };
        match self.kind {
            Kind1D::TwoPoint { c } => 2.0 * hs((1.0 + c) * t),
            Kind1D::FourPoint { c } => hs((1.0 - c) * t) + hs((1.0 + c) * t),
            Kind1D::UniformNoise { c } => 2.0 * hs(t) + t.cos() * one_minus_sinc(c * t),
        }
    }

    /// `ln|cf(t)|` (`-inf` at zeros).
    pub fn ln_abs_cf(&self, t: f64) -> f64 {
        ln_abs_from_deficit(self.one_minus_cf(t))
    }

    /// `E|X|^p`.
    pub fn abs_moment(&self, p: f64) -> f64 {
        match self.kind {
            Kind1D::TwoPoint { c } => (1.0 + c).powf(p),
            Kind1D::FourPoint { c } => 0.5 * ((1.0 - c).powf(p) + (1.0 + c).powf(p)),
            Kind1D::UniformNoise { c } => {
                if c == 0.0 {
                    1.0
                } else {
                    ((1.0 + c).powf(p + 1.0) - (1.0 - c).powf(p + 1.0)) / (2.0 * c * (p + 1.0))
                }
            }
        }
    }

    /// `|| |X| - 1 ||_2`.
    pub fn w2_rademacher(&self) -> f64 {
        match self.kind {
            Kind1D::TwoPoint { c } | Kind1D::FourPoint { c } => c.abs(),
            Kind1D::UniformNoise { c } => c / 3f64.sqrt(),
        }
    }

    /// `[k1, k2, k3]` with `ln cf(t) = k1 t^2 + k2 t^4 + k3 t^6 + O(t^8)`.
    pub fn log_cf_series(&self) -> [f64; 3] {
        log_series([self.abs_moment(2.0), self.abs_moment(4.0), self.abs_moment(6.0)], COS_WEIGHTS)
    }

    /// Smallest period of `|cf|`, when `|cf|` is periodic.
    pub fn abs_cf_period(&self) -> Option<f64> {
        match self.kind {
            Kind1D::TwoPoint { c } => Some(std::f64::consts::PI / (1.0 + c)),
            _ => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let modulus = match self.kind {
            Kind1D::TwoPoint { c } => 1.0 + c,
            Kind1D::FourPoint { c } => {
                if rng.random::<bool>() {
                    1.0 + c
                } else {
                    1.0 - c
                }
            }
            Kind1D::UniformNoise { c } => 1.0 + c * rng.random_range(-1.0..=1.0),
        };
        sign * modulus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialKind {
    /// `R = 1`.
    Sphere,
    /// `R = 1 + c`.
    RadiusShift { c: f64 },
    /// `R` uniform on `{1-c, 1+c}`.
    RadiusTwoPoint { c: f64 },
}

/// `X = R xi` with `xi` uniform on the unit sphere of R^3, independent of `R`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialDist3D {
    pub name: String,
    pub kind: RadialKind,
}

pub fn make_radial(kind: RadialKind) -> Result<RadialDist3D, DistError> {
    let name = match kind {
        RadialKind::Sphere => "sphere".to_string(),
        RadialKind::RadiusShift { c } => {
            if !(c > -1.0 && c.is_finite()) {
                return Err(DistError::Parameter { family: "radius-shift", c, allowed: "(-1, inf)" });
            }
            if c == 0.0 {
                "sphere".to_string()
            } else {
                format!("radius-shift(c={c})")
            }
        }
        RadialKind::RadiusTwoPoint { c } => {
            if !(0.0..1.0).contains(&c) {
                return Err(DistError::Parameter {
                    family: "radius-two-point",
                    c,
                    allowed: "[0, 1) (c = 1 puts an atom at the origin)",
                });
            }
            format!("radius-two-point(c={c})")
        }
    };
    Ok(RadialDist3D { name, kind })
}

impl RadialDist3D {
    pub fn sphere() -> Self {
        Self { name: "sphere".into(), kind: RadialKind::Sphere }
    }

    /// Radii and their probabilities.
    fn atoms(&self) -> ([f64; 2], [f64; 2]) {
        match self.kind {
            RadialKind::Sphere => ([1.0, 1.0], [1.0, 0.0]),
            RadialKind::RadiusShift { c } => ([1.0 + c, 1.0], [1.0, 0.0]),
            RadialKind::RadiusTwoPoint { c } => ([1.0 - c, 1.0 + c], [0.5, 0.5]),
        }
    }

    fn radial_mean(&self, f: impl Fn(f64) -> f64) -> f64 {
        let (r, p) = self.atoms();
        p[0] * f(r[0]) + if p[1] > 0.0 { p[1] * f(r[1]) } else { 0.0 }
    }

    /// `E sin(R r) / (R r)`.
    pub fn cf_radial(&self, r: f64) -> f64 {
        self.radial_mean(|rad| sinc(rad * r))
    }

    pub fn one_minus_cf(&self, r: f64) -> f64 {
        self.radial_mean(|rad| one_minus_sinc(rad * r))
    }

    pub fn ln_abs_cf(&self, r: f64) -> f64 {
        ln_abs_from_deficit(self.one_minus_cf(r))
    }

    /// `E R^p`.
    pub fn radius_moment(&self, p: f64) -> f64 {
        self.radial_mean(|rad| rad.powf(p))
    }

    /// `E|X|^3`.
    pub fn third_moment(&self) -> f64 {
        self.radius_moment(3.0)
    }

    /// `C0 = E R^-1`, so that `|cf_radial(r)| <= C0 / r`.
    pub fn decay_c0(&self) -> f64 {
        self.radius_moment(-1.0)
    }

    /// `C1 = max(C0, 1)`.
    pub fn c1(&self) -> f64 {
        self.decay_c0().max(1.0)
    }

    /// `|| R - 1 ||_2`.
    pub fn w2_sphere(&self) -> f64 {
        match self.kind {
            RadialKind::Sphere => 0.0,
            RadialKind::RadiusShift { c } | RadialKind::RadiusTwoPoint { c } => c.abs(),
        }
    }

    /// True when the law is the uniform distribution on the sphere itself.
    pub fn w2_exactly_zero(&self) -> bool {
        match self.kind {
            RadialKind::Sphere => true,
            RadialKind::RadiusShift { c } | RadialKind::RadiusTwoPoint { c } => c == 0.0,
        }
    }

    /// Single deterministic radius, if any.
    pub fn fixed_radius(&self) -> Option<f64> {
        match self.kind {
            RadialKind::Sphere => Some(1.0),
            RadialKind::RadiusShift { c } => Some(1.0 + c),
            RadialKind::RadiusTwoPoint { c } => (c == 0.0).then_some(1.0),
        }
    }

    /// `[k1, k2, k3]` with `ln cf_radial(r) = k1 r^2 + k2 r^4 + k3 r^6 + O(r^8)`.
    pub fn log_cf_series(&self) -> [f64; 3] {
        log_series([self.radius_moment(2.0), self.radius_moment(4.0), self.radius_moment(6.0)], SINC_WEIGHTS)
    }

    pub fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            RadialKind::RadiusTwoPoint { c } => {
                if rng.random::<bool>() {
                    1.0 + c
                } else {
                    1.0 - c
                }
            }
            _ => self.atoms().0[0],
        }
    }

    pub fn sample3d<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        let r = self.sample_radius(rng);
        let d = uniform_direction(rng);
        [r * d[0], r * d[1], r * d[2]]
    }
}

/// Uniform point on the unit sphere of R^3 (normalised Gaussian triple).
pub fn uniform_direction<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let g: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if n > 1e-300 {
            return [g[0] / n, g[1] / n, g[2] / n];
        }
    }
}

/// A coefficient vector with unit Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitVector {
    coords: Vec<f64>,
}

impl UnitVector {
    /// Accepts `coords` if its squared norm is 1 within `1e-12`.
    pub fn new(coords: Vec<f64>) -> Result<Self, DistError> {
        if coords.len() < 2 {
            return Err(DistError::TooShort(coords.len()));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(DistError::NonFinite);
        }
        let sq: f64 = coords.iter().map(|x| x * x).sum();
        if (sq - 1.0).abs() > 1e-12 {
            return Err(DistError::NotUnit(sq));
        }
        Ok(Self { coords })
    }

    /// Rescales to unit norm.
    pub fn normalized(coords: Vec<f64>) -> Result<Self, DistError> {
        if coords.len() < 2 {
            return Err(DistError::TooShort(coords.len()));
        }
        let n = coords.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(DistError::NonFinite);
        }
        Self::new(coords.into_iter().map(|x| x / n).collect())
    }

    /// `(1/sqrt(n), ..., 1/sqrt(n))`.
    pub fn equal(n: usize) -> Result<Self, DistError> {
        Self::normalized(vec![1.0; n])
    }

    /// Gaussian direction in R^n; with `small_coeff` redraws until
    /// `max |a_j| <= 1/sqrt(2)` (for `n = 2` that is the equal vector).
    pub fn random(n: usize, seed: u64, small_coeff: bool) -> Result<Self, DistError> {
        if n < 2 {
            return Err(DistError::TooShort(n));
        }
        if small_coeff && n == 2 {
            return Self::equal(2);
        }
        let mut rng = stream_rng(seed, 0x5eed);
        loop {
            let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let v = Self::normalized(g)?;
            if !small_coeff || v.small_coeff() {
                return Ok(v);
            }
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.coords.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// `max |a_j| <= 1/sqrt(2)`, up to `1e-12`.
    pub fn small_coeff(&self) -> bool {
        self.max_abs() <= FRAC_1_SQRT_2 + 1e-12
    }

    /// `|a_j|` for the nonzero coordinates.
    pub fn nonzero_abs(&self) -> Vec<f64> {
        self.coords.iter().map(|x| x.abs()).filter(|&x| x > 0.0).collect()
    }
}

/// Threshold on W2 under which the error terms of the cube-slicing
/// perturbation argument close: `1e-38 C1^-9 min(m3^-6, 1)`.
pub fn thm2_threshold(c1: f64, m3: f64) -> f64 {
    1e-38 * c1.powi(-9) * m3.powi(-6).min(1.0)
}

/// `s0 = max(1e6 m3^2, 2 ln C1)`.
pub fn regime_s0(c1: f64, m3: f64) -> f64 {
    (1e6 * m3 * m3).max(2.0 * c1.ln())
}

/// Closeness condition for the L1 inequality: `W2 <= 1e-4`.
pub fn check_thm1_hypothesis(d: &Distribution1D) -> LemmaReport {
    let w2 = d.w2_rademacher();
    let mut r = LemmaReport::new("Thm1-hypothesis").input("dist", d);
    r.quantity("w2_rademacher", w2, 0.0);
    r.conclude(1e-4, 1e-4 - w2, 0.0)
}

/// Closeness condition for the cube-slicing inequality.
pub fn check_thm2_hypothesis(d: &RadialDist3D) -> LemmaReport {
    let (c0, m3, w2) = (d.decay_c0(), d.third_moment(), d.w2_sphere());
    let c1 = c0.max(1.0);
    let threshold = thm2_threshold(c1, m3);
    let mut r = LemmaReport::new("Thm2-hypothesis").input("dist", d);
    r.quantity("C0", c0, 0.0);
    r.quantity("C1", c1, 0.0);
    r.quantity("third_moment", m3, 0.0);
    r.quantity("w2_sphere", w2, 0.0);
    r.quantity("threshold", threshold, 0.0);
    r.quantity("s0", regime_s0(c1, m3), 0.0);
    let margin = if d.w2_exactly_zero() {
        r.note("W2 is exactly zero for this family");
        threshold
    } else {
        threshold - w2
    };
    r.conclude(threshold, margin, 0.0)
}

/// Either kind of law, for checks that accept both.
#[derive(Debug, Clone, Copy)]
pub enum Law<'a> {
    Line(&'a Distribution1D),
    Radial(&'a RadialDist3D),
}

/// `|cf(t) - cf_ref(t)| <= delta (delta + 2) t^2 / 2` on `t_grid`, with the
/// reference `cos t` on the line and `sin r / r` in R^3.
pub fn cf_deviation_check(law: Law<'_>, t_grid: &[f64]) -> LemmaReport {
    let (id, delta, dev): (&str, f64, Box<dyn Fn(f64) -> f64 + '_>) = match law {
        Law::Line(d) => {
            let reference = Distribution1D::rademacher();
            let f = move |t: f64| (reference.one_minus_cf(t) - d.one_minus_cf(t)).abs();
            ("phi-unif", d.w2_rademacher(), Box::new(f))
        }
        Law::Radial(d) => {
            ("phi-unif-vec", d.w2_sphere(), Box::new(move |r: f64| (one_minus_sinc(r) - d.one_minus_cf(r)).abs()))
        }
    };
    let mut r = LemmaReport::new(id).input("delta", delta).input("grid_points", t_grid.len());
    if t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return r.reject("t grid must be finite and positive");
    }
    let k = 0.5 * delta * (delta + 2.0);
    let mut margin = f64::INFINITY;
    let mut worst_bound = 0.0;
    let mut unc = 0.0f64;
    for &t in t_grid {
        let bound = k * t * t;
        let m = bound - dev(t);
        unc = unc.max(8.0 * f64::EPSILON * (1.0 + t * t));
        if m < margin {
            margin = m;
            worst_bound = bound;
        }
    }
    r.quantity("min_margin", margin, unc);
    r.conclude(worst_bound, margin, unc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Verdict;
    use proptest::prelude::*;

    fn all_1d() -> Vec<Distribution1D> {
        vec![
            Distribution1D::rademacher(),
            make_perturbed_rademacher(Kind1D::TwoPoint { c: 0.05 }).unwrap(),
            make_perturbed_rademacher(Kind1D::FourPoint { c: 0.1 }).unwrap(),
            make_perturbed_rademacher(Kind1D::UniformNoise { c: 0.2 }).unwrap(),
        ]
    }

    fn all_radial() -> Vec<RadialDist3D> {
        vec![
            RadialDist3D::sphere(),
            make_radial(RadialKind::RadiusShift { c: 0.05 }).unwrap(),
            make_radial(RadialKind::RadiusTwoPoint { c: 0.1 }).unwrap(),
        ]
    }

    #[test]
    fn family_examples() {
        let r = make_perturbed_rademacher(Kind1D::TwoPoint { c: 0.0 }).unwrap();
        assert!(r.is_rademacher() && r.w2_rademacher() == 0.0);
        assert_eq!(r.cf(1.3), 1.3f64.cos());
        let t = make_perturbed_rademacher(Kind1D::TwoPoint { c: 0.2 }).unwrap();
        assert!((t.cf(0.7) - (1.2f64 * 0.7).cos()).abs() < 1e-15);
        assert!((t.w2_rademacher() - 0.2).abs() < 1e-15);
        let f = make_perturbed_rademacher(Kind1D::FourPoint { c: 0.1 }).unwrap();
        let t0 = 2.3f64;
        assert!((f.cf(t0) - 0.5 * ((0.9 * t0).cos() + (1.1 * t0).cos())).abs() < 1e-15);
        assert!((f.w2_rademacher() - 0.1).abs() < 1e-15);

        let s = RadialDist3D::sphere();
        assert_eq!(s.cf_radial(2.0), 2f64.sin() / 2.0);
        assert_eq!((s.decay_c0(), s.third_moment(), s.w2_sphere()), (1.0, 1.0, 0.0));
        let sh = make_radial(RadialKind::RadiusShift { c: 0.3 }).unwrap();
        assert!((sh.cf_radial(2.0) - (2.6f64).sin() / 2.6).abs() < 1e-15);
        assert!((sh.w2_sphere() - 0.3).abs() < 1e-15);
        let tp = make_radial(RadialKind::RadiusTwoPoint { c: 0.1 }).unwrap();
        assert!((tp.decay_c0() - 0.5 * (1.0 / 0.9 + 1.0 / 1.1)).abs() < 1e-15);
        assert!((tp.w2_sphere() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(make_perturbed_rademacher(Kind1D::TwoPoint { c: -1.0 }).is_err());
        assert!(make_perturbed_rademacher(Kind1D::FourPoint { c: 1.0 }).is_err());
        assert!(make_perturbed_rademacher(Kind1D::UniformNoise { c: -0.1 }).is_err());
        assert!(make_radial(RadialKind::RadiusTwoPoint { c: 1.0 }).is_err());
        assert!(make_radial(RadialKind::RadiusShift { c: -1.0 }).is_err());
    }

    #[test]
    fn w2_matches_moment_expansion() {
        for d in all_1d() {
            let w = d.w2_rademacher();
            let expanded = d.abs_moment(2.0) - 2.0 * d.abs_moment(1.0) + 1.0;
            assert!((w * w - expanded).abs() < 1e-14, "{}", d.name);
        }
    }

    #[test]
    fn log_series_matches_cf() {
        for d in all_1d() {
            let [k1, k2, k3] = d.log_cf_series();
            let t: f64 = 0.05;
            let series = k1 * t * t + k2 * t.powi(4) + k3 * t.powi(6);
            assert!((series - d.ln_abs_cf(t)).abs() < 1e-12, "{}", d.name);
        }
        for d in all_radial() {
            let [k1, k2, k3] = d.log_cf_series();
            let r: f64 = 0.05;
            let series = k1 * r * r + k2 * r.powi(4) + k3 * r.powi(6);
            assert!((series - d.ln_abs_cf(r)).abs() < 1e-13, "{}", d.name);
        }
    }

    #[test]
    fn sampler_matches_cf_and_moments() {
        let n = 1_000_000;
        for (i, d) in all_1d().into_iter().enumerate() {
            let mut rng = stream_rng(7, i as u64);
            let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
            for t in [0.5, 1.0, 2.0] {
                let emp = xs.iter().map(|x| (t * x).cos()).sum::<f64>() / n as f64;
                assert!((emp - d.cf(t)).abs() <= 4.0 / (n as f64).sqrt(), "{} t={t}", d.name);
            }
            for p in [1.0, 2.0] {
                let vals: Vec<f64> = xs.iter().map(|x| x.abs().powf(p)).collect();
                let mean = crate::par::ordered_sum(&vals) / n as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                assert!((mean - d.abs_moment(p)).abs() <= 5.0 * se + 1e-12, "{} p={p}", d.name);
            }
        }
    }

    #[test]
    fn radial_sampler_is_isotropic_and_matches_cf() {
        let n = 1_000_000;
        for (i, d) in all_radial().into_iter().enumerate() {
            let mut rng = stream_rng(11, i as u64);
            let mut mean_dir = [0.0; 3];
            let mut emp = 0.0;
            let t = [0.0, 0.0, 1.5];
            for _ in 0..n {
                let x = d.sample3d(&mut rng);
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                for k in 0..3 {
                    mean_dir[k] += x[k] / r;
                }
                emp += (t[2] * x[2]).cos();
            }
            let norm = mean_dir.iter().map(|m| (m / n as f64).powi(2)).sum::<f64>().sqrt();
            assert!(norm <= 5.0 / (n as f64).sqrt(), "{}", d.name);
            assert!((emp / n as f64 - d.cf_radial(1.5)).abs() <= 4.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn decay_constant_dominates() {
        for d in all_radial() {
            let c0 = d.decay_c0();
            for i in 0..=100_000 {
                let r = 1.0 + 999.0 * i as f64 / 100_000.0;
                assert!(r * d.cf_radial(r).abs() <= c0 + 1e-9, "{}", d.name);
            }
        }
    }

    #[test]
    fn hypothesis_checks() {
        assert!(check_thm1_hypothesis(&Distribution1D::rademacher()).margin == 1e-4);
        let ok = make_perturbed_rademacher(Kind1D::TwoPoint { c: 5e-5 }).unwrap();
        assert!(check_thm1_hypothesis(&ok).passed());
        let bad = make_perturbed_rademacher(Kind1D::TwoPoint { c: 0.01 }).unwrap();
        assert_eq!(check_thm1_hypothesis(&bad).verdict, Verdict::Fail);

        let sphere = check_thm2_hypothesis(&RadialDist3D::sphere());
        assert!(sphere.passed());
        assert_eq!(sphere.bound, 1e-38);
        let s0 = sphere.computed.iter().find(|q| q.name == "s0").unwrap().value;
        assert_eq!(s0, 1e6);
        let tiny = make_radial(RadialKind::RadiusShift { c: 1e-39 }).unwrap();
        assert!(check_thm2_hypothesis(&tiny).passed());
        let far = make_radial(RadialKind::RadiusShift { c: 0.01 }).unwrap();
        assert_eq!(check_thm2_hypothesis(&far).verdict, Verdict::Fail);
    }

    #[test]
    fn cf_deviation_examples() {
        let grid: Vec<f64> = (1..=100).map(|i| 0.1 * i as f64).collect();
        let rad = Distribution1D::rademacher();
        let r = cf_deviation_check(Law::Line(&rad), &grid);
        assert!(r.passed() && r.margin == 0.0);
        let tp = make_perturbed_rademacher(Kind1D::TwoPoint { c: 1e-3 }).unwrap();
        let r = cf_deviation_check(Law::Line(&tp), &grid);
        assert!(r.certified, "{r:?}");
        // independent oracle: direct cosine difference
        let k = 0.5 * 1e-3 * (1e-3 + 2.0);
        for &t in &grid {
            assert!(((1.001f64 * t).cos() - t.cos()).abs() <= k * t * t);
        }
        let s = RadialDist3D::sphere();
        assert!(cf_deviation_check(Law::Radial(&s), &grid).passed());
        assert_eq!(cf_deviation_check(Law::Line(&rad), &[0.0]).verdict, Verdict::Rejected);
    }

    #[test]
    fn unit_vector_rules() {
        assert!(UnitVector::new(vec![1.0]).is_err());
        assert!(UnitVector::new(vec![0.6, 0.7]).is_err());
        let v = UnitVector::new(vec![0.6, 0.8]).unwrap();
        assert!(!v.small_coeff());
        assert!(UnitVector::equal(2).unwrap().small_coeff());
        let r = UnitVector::random(8, 3, true).unwrap();
        assert!(r.small_coeff() && r.len() == 8);
        assert_eq!(UnitVector::random(8, 3, true).unwrap(), r);
    }

    proptest! {
        #[test]
        fn cf_is_bounded_and_even(t in -200.0..200.0f64, c in 0.0..0.9f64) {
            for d in [
                make_perturbed_rademacher(Kind1D::TwoPoint { c }).unwrap(),
                make_perturbed_rademacher(Kind1D::FourPoint { c }).unwrap(),
                make_perturbed_rademacher(Kind1D::UniformNoise { c }).unwrap(),
            ] {
                prop_assert!(d.cf(t).abs() <= 1.0);
                prop_assert_eq!(d.cf(t), d.cf(-t));
                prop_assert!((1.0 - d.one_minus_cf(t) - d.cf(t)).abs() < 1e-12);
            }
        }

        #[test]
        fn radial_cf_within_envelope(r in 1e-3..500.0f64, c in 0.0..0.9f64) {
            for d in [
                make_radial(RadialKind::RadiusShift { c }).unwrap(),
                make_radial(RadialKind::RadiusTwoPoint { c }).unwrap(),
            ] {
                let v = d.cf_radial(r).abs();
                prop_assert!(v <= 1.0 && v <= d.decay_c0() / r * (1.0 + 1e-12));
                prop_assert!(d.decay_c0() <= d.radius_moment(-1.0) * (1.0 + 1e-15));
            }
        }

        #[test]
        fn random_unit_vectors_are_unit(n in 2usize..30, seed in any::<u64>()) {
            let v = UnitVector::random(n, seed, false).unwrap();
            let sq: f64 = v.coords().iter().map(|x| x * x).sum();
            prop_assert!((sq - 1.0).abs() < 1e-12);
        }
    }
}
