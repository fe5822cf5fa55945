use std::f64::consts::PI;

use isospec::billiards::length_spectrum;
use isospec::eigensolver::exact_rectangle_spectrum;
use isospec::wave_trace::{default_k_window, estimate_order, probe, scan_peaks, Frequencies, WaveError};
use isospec::{BoundaryCondition, Spectrum, Trapezoid};
use proptest::prelude::*;

fn square(n: usize) -> Spectrum {
    exact_rectangle_spectrum(1.0, 1.0, n, BoundaryCondition::Dirichlet)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probe_is_linear_in_the_spectrum(
        a in prop::collection::vec(1.0f64..1e4, 1..60),
        b in prop::collection::vec(1.0f64..1e4, 1..60),
        t0 in 0.5f64..6.0,
        sigma in 0.05f64..0.3,
        k in 1.0f64..100.0,
    ) {
        let both: Vec<f64> = a.iter().chain(&b).copied().collect();
        let (sa, sb, sab) = (
            Spectrum::new(a.clone(), BoundaryCondition::Dirichlet),
            Spectrum::new(b.clone(), BoundaryCondition::Dirichlet),
            Spectrum::new(both, BoundaryCondition::Dirichlet),
        );
        let pa = probe(&sa, t0, sigma, &[k]).unwrap().samples[0];
        let pb = probe(&sb, t0, sigma, &[k]).unwrap().samples[0];
        let pab = probe(&sab, t0, sigma, &[k]).unwrap().samples[0];
        let tol = 4.0 * (a.len() + b.len()) as f64 * f64::EPSILON * sigma * (2.0 * PI).sqrt();
        prop_assert!((pab.re - pa.re - pb.re).abs() <= tol);
        prop_assert!((pab.im - pa.im - pb.im).abs() <= tol);
    }
}

#[test]
fn single_eigenvalue_gives_gaussian() {
    let s = Spectrum::new(vec![100.0], BoundaryCondition::Dirichlet);
    let v = Frequencies::new(&s).value(1.0, 0.2, 9.0);
    let want = 0.2 * (2.0 * PI).sqrt() * (-0.5 * 0.04f64).exp();
    assert!((v.norm() - want).abs() < 1e-15);
    assert!((v.arg() - 1.0).abs() < 1e-15);
}

#[test]
fn square_peaks_stand_out() {
    let s = square(5000);
    let on = probe(&s, 2.0, 0.15, &[40.0]).unwrap().samples[0].abs();
    let off = probe(&s, 1.3, 0.15, &[40.0]).unwrap().samples[0].abs();
    assert!(off * 10.0 < on, "on {on} off {off}");

    // Off-length times carry no singularity of their own, so no order is reported.
    let kw = default_k_window(&s);
    let band = estimate_order(&s, 2.0, 0.15, kw).unwrap();
    assert!((0.2..=0.8).contains(&band.order), "{band:?}");
    for t in [1.3, 1.7, 2.45, 3.3] {
        let r = estimate_order(&s, t, 0.15, kw);
        assert!(matches!(r, Err(WaveError::NoiseFloor { .. })), "t = {t}: {r:?}");
    }
}

#[test]
fn scans_repeat_and_match_lengths() {
    let s = square(3000);
    let k_ref = 0.5 * Frequencies::new(&s).top();
    let run = || scan_peaks(&s, (0.9, 4.3), 0.15, k_ref, 3.0).unwrap();
    let mut scan = run();
    assert_eq!(scan, run());
    let lengths = length_spectrum(&Trapezoid::rectangle(1.0, 1.0).unwrap(), 4.6).unwrap();
    scan.match_lengths(&lengths, 0.05);
    assert!(!scan.candidates.is_empty());
    assert!(scan.unmatched().is_empty(), "{:?}", scan.unmatched());
}
