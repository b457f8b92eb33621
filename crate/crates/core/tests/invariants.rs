use proptest::prelude::*;

use lclab::costs::{cost_eval, n_cost, n_inverse, CostSpec, CostVariant};
use lclab::density::format::{fmt17, read_text, write_text};
use lclab::families::{make_convex_body_2d, make_gaussian, steiner_symmetrize_2d};
use lclab::functions::TestFunctionFamily;
use lclab::inequality::{poincare_constant, sup_convolution, verify_transport_entropy, verify_weighted_poincare};
use lclab::knothe::entropy_lower_bound;
use lclab::recentering::build_recentering;
use lclab::transport_1d::monotone_map;
use lclab::variance::{variance_identity, Decomposition, Evaluation};
use lclab::{BoxDomain, GridDensity, KnotheMap, Potential, Smoothness, Status, VerificationReport};

fn gauss2(rho: f64, m: usize) -> GridDensity<f64> {
    let p = make_gaussian::<f64>(2, &[vec![1.0, rho], vec![rho, 1.0]], 7.0).unwrap();
    GridDensity::build(&p, &[m, m]).unwrap()
}

fn gauss1(mean: f64, var: f64) -> GridDensity<f64> {
    let p = Potential::new(BoxDomain::cube(1, 8.0).unwrap(), Smoothness::C1, move |x: &[f64]| {
        (x[0] - mean).powi(2) / (2.0 * var)
    });
    GridDensity::build(&p, &[801]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn report_status_follows_margin(lhs in -10.0f64..10.0, rhs in -10.0f64..10.0, tol in 0.0f64..1.0) {
        let r = VerificationReport::inequality("p", lhs, rhs, 1.0, tol);
        prop_assert_eq!(r.margin, rhs - lhs);
        prop_assert_eq!(r.status == Status::Pass, r.margin >= -tol);
    }

    #[test]
    fn fmt17_round_trips(x in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn n_inverse_inverts(t in 0.0f64..50.0) {
        let y = n_cost(t);
        prop_assert!((n_inverse(y) - t).abs() <= 1e-9 * (1.0 + t));
    }

    #[test]
    fn one_dim_map_is_monotone(m1 in -1.0f64..1.0, v1 in 0.3f64..2.0, m2 in -1.0f64..1.0, v2 in 0.3f64..2.0) {
        let t = monotone_map(&gauss1(m1, v1), &gauss1(m2, v2)).unwrap();
        prop_assert!(t.values().windows(2).all(|w| w[1] >= w[0]));
        // Gaussian to Gaussian: affine near the center
        let want = m2 + (v2 / v1).sqrt() * (0.3 - m1);
        prop_assert!((t.eval(0.3) - want).abs() < 0.05);
    }

    #[test]
    fn costs_vanish_on_diagonal_and_are_nonnegative(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, y0 in -2.0f64..2.0, y1 in -2.0f64..2.0) {
        let mu = gauss2(0.4, 65);
        for v in [CostVariant::Sum, CostVariant::Norm] {
            let spec = CostSpec::new(&mu, v);
            prop_assert_eq!(cost_eval(&spec, &[x0, x1], &[x0, x1]).unwrap(), 0.0);
            prop_assert!(cost_eval(&spec, &[x0, x1], &[y0, y1]).unwrap() >= 0.0);
        }
    }

    #[test]
    fn recentering_round_trip(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, rho in -0.7f64..0.7) {
        let pair = build_recentering(&gauss2(rho, 129));
        let xbar = pair.r(&[x0, x1]).unwrap();
        let back = pair.s(&xbar).unwrap();
        prop_assert!((back[0] - x0).abs() < 1e-9 && (back[1] - x1).abs() < 1e-9, "{:?}", back);
    }

    #[test]
    fn knothe_is_triangular_and_increasing(x0 in -1.5f64..1.5, a in -1.5f64..1.5, b in -1.5f64..1.5, rho in -0.7f64..0.7) {
        let mu = gauss2(0.0, 97);
        let nu = gauss2(rho, 97);
        let map = KnotheMap::new(&mu, &nu).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let ya = map.apply(&[x0, lo]).unwrap();
        let yb = map.apply(&[x0, hi]).unwrap();
        prop_assert_eq!(ya[0], yb[0]);
        prop_assert!(yb[1] >= ya[1]);
        prop_assert!(map.diag_jacobian(&[x0, lo]).unwrap().iter().all(|&j| j > 0.0));
    }

    #[test]
    fn sup_convolution_dominates(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, t in 1e-4f64..5e-2) {
        let pair = build_recentering(&gauss2(0.3, 97));
        let f = |x: &[f64]| (x[0] + 0.5 * x[1]).tanh();
        let v = sup_convolution(&pair, &f, 1.0, t, &[x0, x1]).unwrap();
        prop_assert!(v >= f(&[x0, x1]));
        let w = sup_convolution(&pair, &f, 1.0, 2.0 * t, &[x0, x1]).unwrap();
        prop_assert!(w >= v - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn text_format_round_trips(rho in -0.8f64..0.8, m in 9usize..40) {
        let g = gauss2(rho, m);
        let mut buf = Vec::new();
        write_text(&g, &mut buf).unwrap();
        let back: GridDensity<f64> = read_text(&buf[..]).unwrap();
        prop_assert_eq!(back.values(), g.values());
    }

    #[test]
    fn tilts_obey_entropy_and_transport_bounds(t0 in -0.6f64..0.6, t1 in -0.6f64..0.6, rho in -0.6f64..0.6) {
        let mu = gauss2(rho, 97);
        let nu = mu.tilt(&[t0, t1]).unwrap();
        let (_, _, margin) = entropy_lower_bound(&mu, &nu).unwrap();
        prop_assert!(margin >= -1e-6);
        prop_assert!(verify_transport_entropy(&mu, &nu).unwrap().passed());
    }

    #[test]
    fn poincare_holds_on_tilted_gaussians(t0 in -0.8f64..0.8, t1 in -0.8f64..0.8, rho in -0.7f64..0.7) {
        let mu = gauss2(rho, 97).tilt(&[t0, t1]).unwrap();
        let fam = TestFunctionFamily::standard(2);
        for r in verify_weighted_poincare(&mu, &fam, poincare_constant()) {
            prop_assert!(r.passed(), "{:?}", r);
        }
    }

    #[test]
    fn identity_is_exact_on_quadrature(t0 in -0.8f64..0.8, rho in -0.7f64..0.7) {
        let mu = gauss2(rho, 97).tilt(&[t0, 0.0]).unwrap();
        let d = Decomposition::of_density(&mu, &Evaluation::Quadrature).unwrap();
        for r in variance_identity(&d) {
            prop_assert!(r.passed(), "{:?}", r);
        }
    }

    #[test]
    fn steiner_preserves_area_and_is_symmetric(
        pts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 3..8)
    ) {
        let pts: Vec<[f64; 2]> = pts.into_iter().map(|(a, b)| [a, b]).collect();
        let Ok(body) = make_convex_body_2d(&pts) else { return Ok(()) };
        prop_assume!(body.area() > 1e-2);
        let b = body.barycentered();
        let s = steiner_symmetrize_2d(&b).unwrap();
        prop_assert!((s.area() - b.area()).abs() < 1e-9 * (1.0 + b.area()));
        for v in s.vertices() {
            prop_assert!(s.contains(v[0], -v[1]) || v[1].abs() < 1e-9);
        }
    }
}
