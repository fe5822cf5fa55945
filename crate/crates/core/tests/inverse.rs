use std::f64::consts::{FRAC_PI_2, PI};

use isospec::eigensolver::exact_rectangle_spectrum;
use isospec::geometry::{angle_function, angle_function_inverse, RECTANGLE_Q};
use isospec::heat_trace::fit_invariants;
use isospec::inverse::{
    check_isospectral_consistency, height_family, reconstruct_rectangle, solve_case_two, solve_from_h,
    solve_from_lf_halpha, Consistency, InverseError,
};
use isospec::{BoundaryCondition, OrbitCatalog, Trapezoid};
use proptest::prelude::*;

/// Angles stay 4.5 degrees clear of `pi/2`: closer to a right angle the
/// invariants fix the angles only to about `1e-8` in double precision.
fn trapezoids() -> impl Strategy<Value = Trapezoid> {
    (0.5f64..3.0, 0.05f64..=0.95, 0.05f64..=1.0, 0.05f64..0.95).prop_map(|(base, ua, ub, uh)| {
        let alpha = ua * FRAC_PI_2;
        let beta = ub * alpha;
        let hmax = (base / (1.0 / alpha.tan() + 1.0 / beta.tan())).min(2.0 * base);
        Trapezoid::new(base, uh * hmax, alpha, beta).unwrap()
    })
}

fn congruent(a: &Trapezoid, b: &Trapezoid, tol: f64) -> bool {
    [(a.base(), b.base()), (a.height(), b.height()), (a.alpha(), b.alpha()), (a.beta(), b.beta())]
        .iter()
        .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn height_path_round_trips(t in trapezoids()) {
        let r = solve_from_h(t.area(), t.perimeter(), t.angle_invariant().q, t.height()).unwrap();
        prop_assert!(congruent(&t, &r, 1e-8), "{t:?} -> {r:?}");
    }

    #[test]
    fn fagnano_path_round_trips(t in trapezoids()) {
        let c = OrbitCatalog::new(&t);
        if let Some(f) = c.fagnano.filter(|f| f.exists_inside) {
            let r = solve_from_lf_halpha(t.perimeter(), t.angle_invariant().q, f.length, 0.5 * c.two_h_alpha.length, Some(t.area()))
                .unwrap();
            prop_assert!(congruent(&t, &r, 1e-8), "{t:?} -> {r:?}");
        }
    }

    #[test]
    fn height_family_passes_through_the_trapezoid(t in trapezoids()) {
        let (a, l, h) = (t.area(), t.perimeter(), t.height());
        let members: Vec<Trapezoid> = (0..=400).filter_map(|i| height_family(a, l, h, i as f64 / 400.0)).collect();
        prop_assert!(members.len() > 300);
        for m in &members {
            prop_assert!((m.area() - a).abs() < 1e-9 * a && (m.perimeter() - l).abs() < 1e-9 * l);
        }
        let closest = members.iter().map(|m| (m.alpha() - t.alpha()).abs()).fold(f64::INFINITY, f64::min);
        prop_assert!(closest < 0.01);
    }

    #[test]
    fn different_trapezoids_are_told_apart(s in trapezoids(), t in trapezoids()) {
        let v = check_isospectral_consistency(&s, &t);
        prop_assert!(matches!(v, Consistency::DistinctInvariants { .. }), "{v:?}");
        prop_assert_eq!(check_isospectral_consistency(&s, &s), Consistency::Congruent);
    }

    #[test]
    fn rectangles_from_first_eigenvalue(a in 0.2f64..3.0, c in 0.2f64..3.0) {
        let (lo, hi) = (a.min(c), a.max(c));
        let l1 = PI * PI * (1.0 / (lo * lo) + 1.0 / (hi * hi));
        let (ra, rc) = reconstruct_rectangle(l1, lo * hi).unwrap();
        prop_assert!((ra - lo).abs() < 1e-6 * hi && (rc - hi).abs() < 1e-6 * hi);
    }
}

#[test]
fn angle_function_decreases_and_inverts() {
    let xs: Vec<f64> = (1..=2000).map(|i| FRAC_PI_2 * i as f64 / 2000.0).collect();
    for w in xs.windows(2) {
        assert!(angle_function(w[1]) < angle_function(w[0]));
    }
    for &x in &xs[1..] {
        let back = angle_function_inverse(angle_function(x)).unwrap();
        assert!((back - x).abs() < 1e-7, "{x} -> {back}");
    }
    assert!((2.0 * angle_function(FRAC_PI_2) - RECTANGLE_Q).abs() < 1e-15);
}

/// Along each level set of `q`, `csc alpha + csc beta` increases from the
/// isosceles point to `alpha = pi/2`; this is what makes the height path unique.
#[test]
fn csc_sum_is_monotone_on_level_sets() {
    for i in 1..=60 {
        let q = RECTANGLE_Q * (1.0 + 0.01 * (i * i) as f64);
        let iso = angle_function_inverse(0.5 * q).unwrap();
        let sums: Vec<f64> = (0..=1000)
            .filter_map(|k| {
                let alpha = iso + (FRAC_PI_2 - iso) * k as f64 / 1000.0;
                let beta = angle_function_inverse(q - angle_function(alpha))?;
                Some(1.0 / alpha.sin() + 1.0 / beta.sin())
            })
            .collect();
        assert!(sums.len() > 990);
        assert!(sums.windows(2).all(|w| w[1] >= w[0] - 1e-13), "q = {q}");
    }
}

#[test]
fn case_two_never_solves() {
    for (b, h, deg) in [(2.0, 1.0, 68.0), (1.0, 0.5, 75.0), (3.0, 0.4, 50.0), (1.5, 1.2, 80.0)] {
        let t = Trapezoid::new(b, h, f64::to_radians(deg), f64::to_radians(deg)).unwrap();
        let c = OrbitCatalog::new(&t);
        let Some(f) = c.fagnano.filter(|f| f.exists_inside) else { continue };
        let r = solve_case_two(t.angle_invariant().q, f.length, 0.5 * c.two_h_alpha.length);
        assert!(matches!(r, Err(InverseError::NoSolution(_))), "{t:?}: {r:?}");
    }
}

#[test]
fn exact_rectangle_invariants() {
    let s = exact_rectangle_spectrum(1.0, 2.0, 2000, BoundaryCondition::Dirichlet);
    let inv = fit_invariants(&s, None, 64).unwrap();
    assert!((inv.area - 2.0).abs() < 0.02 && (inv.perimeter - 6.0).abs() < 0.12);
    assert!((inv.q_estimate - RECTANGLE_Q).abs() < 0.1 * RECTANGLE_Q);
}
