//! Batch driver: one report per lemma in scope.

use crate::dist::{
    cf_deviation_check, check_thm2_hypothesis, make_perturbed_rademacher, make_radial, stream_rng, Distribution1D,
    Kind1D, Law, RadialDist3D, RadialKind,
};
use crate::par;
use crate::perturbed::{self, GaussBoundInput, PipelineInput};
use crate::report::{LemmaReport, Verdict};
use crate::specialfn::{self, hurwitz_zeta};
use crate::verify;
use rand::Rng;
use serde::Serialize;
use std::f64::consts::{E, FRAC_PI_3, PI, SQRT_2};

/// Lemma ids in report order.
pub const LEMMA_IDS: [&str; 17] = [
    "Psi1-bounds",
    "phi-unif",
    "Psi-unif",
    "sulogu",
    "DerPsi-unif",
    "Psi2-regimes",
    "phi-unif-vec",
    "Phi-bulk",
    "Phi-big-s",
    "Phi-der",
    "Phi0-der",
    "Phi0",
    "sec-der-2",
    "Phi0-der-lb",
    "sec-sign-change",
    "sec-impr-ball",
    "Phi2-regimes",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifyConfig {
    pub tol: f64,
    pub line_dists: Vec<Distribution1D>,
    pub radial_dists: Vec<RadialDist3D>,
    /// Seed for the randomized scalar-inequality sample.
    pub seed: u64,
}

impl CertifyConfig {
    pub fn new(tol: f64) -> Self {
        let line = [Kind1D::TwoPoint { c: 1e-4 }, Kind1D::FourPoint { c: 1e-4 }, Kind1D::UniformNoise { c: 1e-4 }];
        let radial = [RadialKind::RadiusShift { c: 1e-5 }, RadialKind::RadiusTwoPoint { c: 1e-5 }];
        Self {
            tol,
            line_dists: line.into_iter().map(|k| make_perturbed_rademacher(k).expect("valid")).collect(),
            radial_dists: radial.into_iter().map(|k| make_radial(k).expect("valid")).collect(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifySummary {
    pub all_pass: bool,
    pub tolerance_met: bool,
    pub reports: Vec<LemmaReport>,
}

/// Runs every lemma check with the default laws.
pub fn certify_all(tol: f64) -> CertifySummary {
    certify_with(&CertifyConfig::new(tol))
}

pub fn certify_with(cfg: &CertifyConfig) -> CertifySummary {
    if !(cfg.tol > 0.0 && cfg.tol.is_finite()) {
        let reports =
            LEMMA_IDS.iter().map(|id| LemmaReport::new(*id).reject(format!("tol = {} must be > 0", cfg.tol))).collect();
        return CertifySummary { all_pass: false, tolerance_met: false, reports };
    }
    // Without laws, the perturbation checks fall back to the unperturbed ones.
    let line = if cfg.line_dists.is_empty() { vec![Distribution1D::rademacher()] } else { cfg.line_dists.clone() };
    let radial = if cfg.radial_dists.is_empty() { vec![RadialDist3D::sphere()] } else { cfg.radial_dists.clone() };
    let fallback_note = |r: LemmaReport, empty: bool| {
        if empty {
            r.with_note("no laws supplied; checked on the unperturbed law")
        } else {
            r
        }
    };
    let tol = cfg.tol;
    let psi_grid = [1.0, 1.5, 2.0, 2.5, 3.0, 5.0, 10.0];
    let phi_grid = [2.0, 2.5, 3.0, 10.0];

    type Job<'a> = Box<dyn Fn() -> LemmaReport + Sync + Send + 'a>;
    let psi_bounds = |which: usize| {
        let id = ["Psi-unif", "DerPsi-unif"][which];
        let sections =
            par::map_slice(&line, |d| pick_section(perturbed::lemma_psi_bounds_with(d, &psi_grid, tol), id, &d.name));
        fallback_note(LemmaReport::from_sections(id, sections), cfg.line_dists.is_empty())
    };
    let phi_bounds = |which: usize| {
        let id = ["Phi-bulk", "Phi-der"][which];
        let sections =
            par::map_slice(&radial, |d| pick_section(perturbed::lemma_phi_bounds_with(d, &phi_grid, tol), id, &d.name));
        fallback_note(LemmaReport::from_sections(id, sections), cfg.radial_dists.is_empty())
    };
    let jobs: Vec<Job> = vec![
        Box::new(psi1_bounds),
        Box::new(|| {
            let grid = perturbed::log_grid(1e-3, 1e3, 400);
            let s = line.iter().map(|d| renamed(cf_deviation_check(Law::Line(d), &grid), &d.name)).collect();
            fallback_note(LemmaReport::from_sections("phi-unif", s), cfg.line_dists.is_empty())
        }),
        Box::new(|| psi_bounds(0)),
        Box::new(|| sulogu(cfg.seed)),
        Box::new(|| psi_bounds(1)),
        Box::new(|| {
            let mut sections = vec![perturbed::psi2_regimes(1e-4)];
            let grid = perturbed::log_grid(2.0, 1e3, 30);
            sections.extend(line.iter().map(|d| renamed(perturbed::psi_monotone_scan(d, &grid), &d.name)));
            fallback_note(LemmaReport::from_sections("Psi2-regimes", sections), cfg.line_dists.is_empty())
        }),
        Box::new(|| {
            let grid = perturbed::log_grid(1e-3, 1e3, 400);
            let s = radial.iter().map(|d| renamed(cf_deviation_check(Law::Radial(d), &grid), &d.name)).collect();
            fallback_note(LemmaReport::from_sections("phi-unif-vec", s), cfg.radial_dists.is_empty())
        }),
        Box::new(|| phi_bounds(0)),
        Box::new(|| phi_big_s(&radial)),
        Box::new(|| phi_bounds(1)),
        Box::new(|| phi0_der(tol)),
        Box::new(|| phi0_scan(tol)),
        Box::new(sec_der_2),
        Box::new(|| phi0_der_lb(tol)),
        Box::new(sec_sign_change),
        Box::new(sec_impr_ball),
        Box::new(|| phi2_regimes(&radial)),
    ];
    let reports = par::map_slice(&jobs, |job| job());
    let all_pass = reports.iter().all(LemmaReport::passed);
    let tolerance_met = reports.iter().all(|r| r.tolerance_met);
    CertifySummary { all_pass, tolerance_met, reports }
}

fn renamed(mut r: LemmaReport, name: &str) -> LemmaReport {
    r.lemma_id = format!("{}/{name}", r.lemma_id);
    r
}

/// The section `id` of a combined report, or the report itself if it was
/// rejected before splitting.
fn pick_section(r: LemmaReport, id: &str, name: &str) -> LemmaReport {
    if r.verdict == Verdict::Rejected && r.sections.is_empty() {
        return renamed(LemmaReport { lemma_id: id.into(), ..r }, name);
    }
    let inputs = r.inputs.clone();
    match r.sections.into_iter().find(|s| s.lemma_id == id) {
        Some(mut s) => {
            s.inputs.extend(inputs);
            renamed(s, name)
        }
        None => LemmaReport::new(format!("{id}/{name}")).reject("section missing"),
    }
}

/// `min_{s in [2,3]} Psi0'(s) >= (zeta(3) - 1) / (8 sqrt 2)`.
pub fn psi1_bounds() -> LemmaReport {
    let bound = (hurwitz_zeta(3, 1.0) - 1.0) / (8.0 * SQRT_2);
    let grid = perturbed::linear_grid(2.0, 3.0, 1001);
    let mut r = LemmaReport::new("Psi1-bounds").input("points", grid.len());
    let vals = par::map_slice(&grid, |&s| specialfn::psi0_prime(s));
    let mut worst = (f64::INFINITY, 0.0, 0.0);
    for v in vals {
        match v {
            Ok(v) if v.value < worst.0 => worst = (v.value, v.uncertainty, v.s),
            Ok(_) => {}
            Err(e) => return r.reject(e.to_string()),
        }
    }
    r.quantity("min psi0'", worst.0, worst.1);
    r.quantity("argmin", worst.2, 0.0);
    match specialfn::psi0_gamma(2.0) {
        Ok(p) => r.quantity("psi0(2)", p.value, p.uncertainty),
        Err(e) => return r.reject(e.to_string()),
    }
    r.conclude(bound, worst.0 - bound, worst.1)
}

/// `|u^s ln u - v^s ln v| <= |u - v|` on a seeded sample of
/// `u, v in (0, 1)`, `s in [2, 50]`.
pub fn sulogu(seed: u64) -> LemmaReport {
    const N: usize = 100_000;
    let mut rng = stream_rng(seed, 0x5a10);
    let mut margin = f64::INFINITY;
    for _ in 0..N {
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let v: f64 = rng.random_range(f64::EPSILON..1.0);
        let s: f64 = rng.random_range(2.0..=50.0);
        margin = margin.min(specialfn::sulogu_gap(u, v, s));
    }
    let mut r = LemmaReport::new("sulogu").input("samples", N).input("seed", seed);
    r.quantity("min gap", margin, 4.0 * f64::EPSILON);
    r.conclude(0.0, margin, 4.0 * f64::EPSILON)
}

/// The Gaussian tail bound at `(delta, C0, m3, theta, s) = (0, 1, 1, 0.01, 10^6)`
/// lies below `sqrt 2`, and the bound dominates `Phi` for the sphere and for
/// each perturbed law wherever it is finite.
pub fn phi_big_s(radial: &[RadialDist3D]) -> LemmaReport {
    let base = GaussBoundInput { delta: 0.0, c0: 1.0, m3: 1.0, theta: 0.01, s: 1e6 };
    let mut below = LemmaReport::new("Phi-big-s/bound<sqrt2").input("input", base);
    let below = match perturbed::gauss_tail_bound(&base) {
        Ok(g) => {
            below.quantity("A1", g.a1, 0.0);
            below.quantity("A2", g.a2, 0.0);
            below.quantity("A3", g.a3, 0.0);
            below.conclude(SQRT_2, SQRT_2 - g.total, 0.0)
        }
        Err(e) => below.reject(e.to_string()),
    };
    let mut sections = vec![below];
    let mut laws = vec![RadialDist3D::sphere()];
    laws.extend(radial.iter().filter(|d| !d.w2_exactly_zero()).cloned());
    let s_values = [2.0, 10.0, 100.0, 1e4, 1e6];
    for d in &laws {
        let inp = PipelineInput::from_dist(d);
        let mut r = LemmaReport::new(format!("Phi-big-s/dominates/{}", d.name));
        let mut worst = (f64::INFINITY, 0.0);
        for &s in &s_values {
            let g = GaussBoundInput::with_default_theta(inp.delta, inp.c0, inp.m3, s);
            let bound = match perturbed::gauss_tail_bound(&g) {
                Ok(b) => b.total,
                Err(e) => {
                    r.note(e.to_string());
                    continue;
                }
            };
            if !bound.is_finite() {
                r.note(format!("bound overflows at s = {s}"));
                continue;
            }
            match perturbed::phi3(s, d) {
                Ok(v) => {
                    r.quantity(format!("bound(s={s})"), bound, 0.0);
                    r.quantity(format!("Phi(s={s})"), v.value, v.uncertainty);
                    r.tolerance_met &= v.converged;
                    if bound - v.value < worst.0 {
                        worst = (bound - v.value, v.uncertainty);
                    }
                }
                Err(e) => r.note(format!("Phi({s}) unavailable: {e}")),
            }
        }
        sections.push(if worst.0.is_finite() {
            r.conclude(f64::NAN, worst.0, worst.1)
        } else {
            r.reject("no finite bound")
        });
    }
    LemmaReport::from_sections("Phi-big-s", sections)
}

/// `Phi0'(s) <= -0.02` on `[2, 2.01]`, directly and via the second-derivative
/// chain `1/(2 sqrt s) + (2 sqrt(s)/pi) (-0.48 + 48 e^-2 (s - 2))`.
pub fn phi0_der(tol: f64) -> LemmaReport {
    let grid = perturbed::linear_grid(2.0, 2.01, 20);
    let mut direct = LemmaReport::new("Phi0-der/direct").input("points", grid.len());
    let vals = par::map_slice(&grid, |&s| specialfn::phi0_with(s, 1, tol));
    let mut worst = (f64::INFINITY, 0.0);
    for v in vals {
        match v {
            Ok(v) => {
                direct.tolerance_met &= v.converged;
                if -0.02 - v.value < worst.0 {
                    worst = (-0.02 - v.value, v.uncertainty);
                }
            }
            Err(e) => return direct.reject(e.to_string()),
        }
    }
    direct.quantity("max Phi0' + 0.02", -worst.0, worst.1);
    let direct = direct.conclude(-0.02, worst.0, worst.1);
    let mut chain = LemmaReport::new("Phi0-der/chain");
    let k = specialfn::second_derivative_bound();
    let worst_chain = grid
        .iter()
        .map(|&s| -0.02 - (0.5 / s.sqrt() + 2.0 * s.sqrt() / PI * (-0.48 + k * (s - 2.0))))
        .fold(f64::INFINITY, f64::min);
    chain.quantity("48 e^-2", k, 0.0);
    let chain = chain.conclude(-0.02, worst_chain, 0.0);
    LemmaReport::from_sections("Phi0-der", vec![direct, chain])
}

/// `Phi0(s) <= sqrt(2) - 2e-4` on 200 log-spaced points of `[2.01, 10^4]`.
pub fn phi0_scan(tol: f64) -> LemmaReport {
    let grid = perturbed::log_grid(2.01, 1e4, 200);
    let bound = SQRT_2 - 2e-4;
    let mut r = LemmaReport::new("Phi0").input("points", grid.len());
    let vals = par::map_slice(&grid, |&s| specialfn::phi0_with(s, 0, tol));
    let mut worst = (f64::INFINITY, 0.0, 0.0);
    for v in vals {
        match v {
            Ok(v) => {
                r.tolerance_met &= v.converged;
                if bound - v.value < worst.0 {
                    worst = (bound - v.value, v.uncertainty, v.s);
                }
            }
            Err(e) => return r.reject(e.to_string()),
        }
    }
    r.quantity("argmax", worst.2, 0.0);
    r.conclude(bound, worst.0, worst.1)
}

/// `I'(2) <= lobe bound <= -0.48`.
pub fn sec_der_2() -> LemmaReport {
    let mut r = LemmaReport::new("sec-der-2");
    let v = match specialfn::ball_i(2.0, 1) {
        Ok(v) => v,
        Err(e) => return r.reject(e.to_string()),
    };
    let lobe = specialfn::lobe_bound_for_i_prime_2();
    r.quantity("int (sin u/u)^2 ln|sin u/u| du", v.value, v.uncertainty);
    r.quantity("lobe bound", lobe, 1e-9);
    let margin = (lobe - v.value).min(-0.48 - lobe);
    r.conclude(-0.48, margin, v.uncertainty + 1e-9)
}

/// `Phi0'(s) >= -12 sqrt(s) / (pi e)` on `[2, 100]`, and the consequence
/// `Phi0(2.01) >= sqrt(2) - 0.02`.
pub fn phi0_der_lb(tol: f64) -> LemmaReport {
    let grid = perturbed::log_grid(2.0, 100.0, 50);
    let mut lb = LemmaReport::new("Phi0-der-lb/derivative").input("points", grid.len());
    let vals = par::map_slice(&grid, |&s| specialfn::phi0_with(s, 1, tol));
    let mut worst = (f64::INFINITY, 0.0);
    for v in vals {
        match v {
            Ok(v) => {
                lb.tolerance_met &= v.converged;
                let m = v.value + 12.0 * v.s.sqrt() / (PI * E);
                if m < worst.0 {
                    worst = (m, v.uncertainty);
                }
            }
            Err(e) => return lb.reject(e.to_string()),
        }
    }
    let lb = lb.conclude(f64::NAN, worst.0, worst.1);
    let mut at = LemmaReport::new("Phi0-der-lb/phi0(2.01)");
    let at = match specialfn::phi0_with(2.01, 0, tol) {
        Ok(v) => {
            at.quantity("phi0(2.01)", v.value, v.uncertainty);
            at.conclude(SQRT_2 - 0.02, v.value - (SQRT_2 - 0.02), v.uncertainty)
        }
        Err(e) => at.reject(e.to_string()),
    };
    LemmaReport::from_sections("Phi0-der-lb", vec![lb, at])
}

/// One sign change of `F_a - G` for `a in {1, 1.01, 1.03}`, lobe peaks in
/// their brackets, and the vanishing moment identity.
pub fn sec_sign_change() -> LemmaReport {
    let sections = [1.0, 1.01, 1.03]
        .iter()
        .map(|&a| match verify::np_sign_change(a) {
            Ok(np) => sign_change_report(&np),
            Err(e) => LemmaReport::new(format!("sec-sign-change/a={a}")).input("a", a).reject(e.to_string()),
        })
        .collect();
    LemmaReport::from_sections("sec-sign-change", sections)
}

/// Verdict on one sign-change analysis: a single `-+` crossing, lobe maxima
/// in their brackets and decreasing, and `|moment residual| <= 1e-6`.
pub fn sign_change_report(np: &verify::NpAnalysis) -> LemmaReport {
    let mut r = LemmaReport::new(format!("sec-sign-change/a={}", np.a_param))
        .input("a", np.a_param)
        .input("sign_pattern", &np.sign_pattern);
    r.quantity("crossings", np.crossings as f64, 0.0);
    r.quantity("y0", np.y0, 0.0);
    r.quantity("moment_identity_residual", np.moment_identity_residual, 0.0);
    let ok = np.crossings == 1 && np.sign_pattern == "-+" && np.lobes_in_brackets && np.lobes_decreasing;
    if !ok {
        r.note("sign-change structure violated");
    }
    let margin = if ok { 1e-6 - np.moment_identity_residual.abs() } else { -1.0 };
    r.conclude(1e-6, margin, 0.0)
}

/// `Phi0(s) <= sqrt(2/a)` for `s >= 2.01` with `a = 2 / Phi0(2.01)^2 < 1.03 < pi/3`.
pub fn sec_impr_ball() -> LemmaReport {
    let p = match specialfn::phi0(2.01, 0) {
        Ok(p) => p.value,
        Err(e) => return LemmaReport::new("sec-impr-ball").reject(e.to_string()),
    };
    let a = 2.0 / (p * p);
    let mut range = LemmaReport::new("sec-impr-ball/a-range").input("a", a);
    range.quantity("a", a, 0.0);
    let range = range.conclude(1.03, (1.03 - a).min(FRAC_PI_3 - 1.03).min(a - 1.0), 0.0);
    let grid = perturbed::log_grid(2.01, 1e4, 100);
    let check = verify::np_majorization_check(a, 2.01, &grid);
    LemmaReport::from_sections("sec-impr-ball", vec![range, check])
}

/// The three-regime argument on the unit sphere, at the symbolic scale
/// `delta = 1e-38`, and for every supplied law inside the hypothesis.
pub fn phi2_regimes(radial: &[RadialDist3D]) -> LemmaReport {
    let mut sections = vec![renamed(perturbed::regime_pipeline_for(&RadialDist3D::sphere(), None), "sphere")];
    sections
        .push(renamed(perturbed::regime_pipeline(&PipelineInput { delta: 1e-38, c0: 1.0, m3: 1.0 }), "delta=1e-38"));
    let mut skipped = Vec::new();
    for d in radial.iter().filter(|d| !d.w2_exactly_zero()) {
        if check_thm2_hypothesis(d).passed() {
            sections.push(renamed(perturbed::regime_pipeline_for(d, None), &d.name));
        } else {
            skipped.push(d.name.clone());
        }
    }
    let mut r = LemmaReport::from_sections("Phi2-regimes", sections);
    for name in skipped {
        r.note(format!("{name}: W2 above the hypothesis threshold; pipeline not applicable"));
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certify_defaults_all_pass() {
        let s = certify_all(1e-8);
        assert_eq!(s.reports.len(), 17);
        for (r, id) in s.reports.iter().zip(LEMMA_IDS) {
            assert_eq!(r.lemma_id, id);
            assert!(r.passed(), "{r:#?}");
        }
        assert!(s.all_pass);
    }

    #[test]
    fn empty_law_lists_still_run() {
        let cfg = CertifyConfig { line_dists: vec![], radial_dists: vec![], ..CertifyConfig::new(1e-8) };
        let s = certify_with(&cfg);
        assert_eq!(s.reports.len(), 17);
        assert!(s.all_pass);
    }

    #[test]
    fn psi1_bound_constant() {
        let r = psi1_bounds();
        assert!(r.passed() && r.certified);
        assert!((r.bound - 0.017_85).abs() < 1e-5);
    }

    #[test]
    fn tight_tolerance_is_reported_not_failed() {
        let s = certify_all(1e-15);
        for r in &s.reports {
            println!("{} {:?} tol_met={} margin={:e}", r.lemma_id, r.verdict, r.tolerance_met, r.margin);
        }
        assert!(!s.tolerance_met);
        assert!(s.all_pass);
    }
}
