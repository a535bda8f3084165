use khinchin_core::dist::{
    make_perturbed_rademacher, make_radial, Distribution1D, Kind1D, RadialDist3D, RadialKind, UnitVector,
};
use khinchin_core::quad::{integrate_finite, integrate_semi_infinite, EvenSeries, Integrand, PeriodicTail, TailModel};
use khinchin_core::specialfn;
use khinchin_core::verify::{self, VerifyOptions};
use khinchin_core::{perturbed, report::Verdict};
use proptest::prelude::*;
use std::f64::consts::PI;

fn kernel(b: f64) -> Integrand<'static> {
    // (1 - cos(b t)) / t^2, integral pi b / 2.
    Integrand::new(move |t: f64| {
        let h = (0.5 * b * t).sin();
        2.0 * h * h / (t * t)
    })
    .with_series(EvenSeries { c0: 0.5 * b * b, c2: -b.powi(4) / 24.0, c4: b.powi(6) / 720.0 })
    .with_period(2.0 * PI / b, 0.0)
    .with_tail(TailModel::Periodic(
        PeriodicTail::new(2.0 * PI / b, 0.0, 2.0).term(0, 2.0, move |t: f64| 1.0 - (b * t).cos()),
    ))
}

fn line_laws(c: f64) -> Vec<Distribution1D> {
    vec![
        Distribution1D::rademacher(),
        make_perturbed_rademacher(Kind1D::TwoPoint { c }).unwrap(),
        make_perturbed_rademacher(Kind1D::FourPoint { c }).unwrap(),
        make_perturbed_rademacher(Kind1D::UniformNoise { c }).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refinement_stays_within_reported_error(b in 0.2..5.0f64, exp in 5.0..9.0f64) {
        let tol = 10f64.powf(-exp);
        let f = kernel(b);
        let coarse = integrate_semi_infinite(&f, tol).unwrap();
        let fine = integrate_semi_infinite(&f, tol / 10.0).unwrap();
        prop_assert!((coarse.value - fine.value).abs() <= coarse.abs_error_est + coarse.tail_bound + 1e-15);
        prop_assert!((fine.value - PI * b / 2.0).abs() <= fine.uncertainty() + 1e-13);
    }

    #[test]
    fn truncation_plus_analytic_tail(rate in 0.05..3.0f64, t in 1.0..30.0f64) {
        let f = Integrand::new(move |x: f64| (-rate * x).exp()).with_tail(TailModel::Exponential { c: 1.0, rate });
        let whole = integrate_semi_infinite(&f, 1e-11).unwrap();
        let head = integrate_finite(&Integrand::new(move |x: f64| (-rate * x).exp()), 0.0, t, 1e-12).unwrap();
        let split = head.value + (-rate * t).exp() / rate;
        prop_assert!((whole.value - split).abs() <= whole.uncertainty() + head.uncertainty() + 1e-14);
    }

    /// With the alternating weight `sign(sin t)` the lobe integrals of
    /// `|sin t/t|^s` alternate and the error after `k` lobes is below the
    /// next lobe.
    #[test]
    fn lobe_sums_alternate(p in 2u32..=4, k in 3usize..60) {
        let g = move |t: f64| if t < 1e-8 { 1.0 } else { let x = t.sin() / t; x.abs().powi(p as i32) * t.sin().signum() };
        let total = integrate_semi_infinite(&Integrand::new(g).with_period(PI, 0.0), 1e-12).unwrap();
        let lobe = |j: usize| integrate_finite(&Integrand::new(g), j as f64 * PI, (j + 1) as f64 * PI, 1e-14).unwrap().value;
        let lobes: Vec<f64> = (0..=k).map(lobe).collect();
        for w in lobes.windows(2) {
            prop_assert!(w[0] * w[1] < 0.0 && w[1].abs() < w[0].abs());
        }
        let partial: f64 = lobes[..k].iter().sum();
        prop_assert!((total.value - partial).abs() <= lobes[k].abs() + total.uncertainty());
    }

    #[test]
    fn sinc_below_gaussian(u in 1e-6..PI) {
        prop_assert!(specialfn::sinc_gaussian_gap(u) >= -1e-16);
    }

    #[test]
    fn phi0_at_most_sqrt2(s in 2.0..1e4f64) {
        let v = specialfn::phi0(s, 0).unwrap();
        prop_assert!(v.value <= std::f64::consts::SQRT_2 + v.uncertainty);
    }

    #[test]
    fn reference_laws_reduce_to_special_functions(s in 2.0..100.0f64) {
        let p = perturbed::psi(s, &Distribution1D::rademacher()).unwrap();
        let p0 = specialfn::psi0_gamma(s).unwrap();
        prop_assert!((p.value - p0.value).abs() <= p.uncertainty + p0.uncertainty + 1e-12);
        let f = perturbed::phi3(s, &RadialDist3D::sphere()).unwrap();
        let f0 = specialfn::phi0(s, 0).unwrap();
        prop_assert!((f.value - f0.value).abs() <= f.uncertainty + f0.uncertainty + 1e-12);
    }

    #[test]
    fn bound_ordering(n in 3usize..=10, seed in any::<u64>(), c in 0.0..0.2f64) {
        let a = UnitVector::random(n, seed, true).unwrap();
        for d in line_laws(c) {
            let lower = verify::amgm_lower_bound(&a, &d).unwrap();
            let mean = verify::fourier_mean(&a, &d).unwrap();
            prop_assert!(lower.value <= mean.value + lower.stderr_or_bound + mean.stderr_or_bound, "{}", d.name);
        }
        for d in [RadialDist3D::sphere(), make_radial(RadialKind::RadiusTwoPoint { c }).unwrap()] {
            let upper = verify::holder_upper_bound(&a, &d).unwrap();
            let m = verify::gf_neg_moment(&a, &d).unwrap();
            prop_assert!(m.value <= upper.value + upper.stderr_or_bound + m.stderr_or_bound, "{}", d.name);
        }
    }

    #[test]
    fn main_inequalities_on_compliant_laws(n in 2usize..=10, seed in any::<u64>(), c in 0.0..1e-4f64) {
        let a = UnitVector::random(n, seed, true).unwrap();
        let opts = VerifyOptions { mc_samples: 0, ..VerifyOptions::default() };
        for d in line_laws(c) {
            let r = verify::verify_szarek(&a, &d, &opts);
            prop_assert_eq!(r.verdict, Verdict::Pass, "{}: {:?}", d.name, r.notes);
        }
        for d in [RadialDist3D::sphere(), make_radial(RadialKind::RadiusShift { c: 0.0 }).unwrap()] {
            let r = verify::verify_ball(&a, &d, &opts);
            prop_assert_eq!(r.verdict, Verdict::Pass, "{}: {:?}", d.name, r.notes);
        }
    }

    #[test]
    fn fourier_matches_enumeration(n in 2usize..=14, seed in any::<u64>(), small in any::<bool>()) {
        let a = UnitVector::random(n, seed, small).unwrap();
        let exact = verify::exact_rademacher_mean(&a).unwrap();
        let f = verify::fourier_mean(&a, &Distribution1D::rademacher()).unwrap();
        prop_assert!((exact.value - f.value).abs() <= f.stderr_or_bound + exact.stderr_or_bound + 1e-12);
    }
}
