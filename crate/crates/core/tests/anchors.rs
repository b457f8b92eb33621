//! Closed-form oracles against the numerical routines.

use lclab::costs::relative_entropy;
use lclab::families::make_gaussian;
use lclab::knothe::entropy_lower_bound;
use lclab::recentering::conditional_moments;
use lclab::variance::{borell_ratio, check_variance_bounds, variance_identity, Decomposition, Evaluation};
use lclab::{BoxDomain, GridDensity, KnotheMap, Potential, Smoothness};

fn gaussian(cov: &[Vec<f64>], r: f64, m: usize) -> GridDensity<f64> {
    let p = make_gaussian::<f64>(cov.len(), cov, r).unwrap();
    GridDensity::build(&p, &vec![m; cov.len()]).unwrap()
}

fn corr(rho: f64) -> Vec<Vec<f64>> {
    vec![vec![1.0, rho], vec![rho, 1.0]]
}

#[test]
fn conditional_moments_of_correlated_gaussian() {
    for rho in [0.0, 0.3, 0.5, 0.8] {
        let g = gaussian(&corr(rho), 8.0, 257);
        let cm = conditional_moments(&g);
        let nodes = g.axis(0).nodes();
        for (k, &x) in nodes.iter().enumerate().filter(|(_, x)| x.abs() <= 2.0) {
            assert!((cm.mean_table(1)[k] - rho * x).abs() < 1e-6, "rho {rho} x {x}");
            assert!((cm.var_table(1)[k] - (1.0 - rho * rho)).abs() < 1e-6);
        }
    }
}

#[test]
fn knothe_map_matches_cholesky() {
    let rho = 0.6;
    let mu = gaussian(&corr(0.0), 8.0, 257);
    let nu = gaussian(&corr(rho), 8.0, 257);
    let map = KnotheMap::new(&mu, &nu).unwrap();
    let s = (1.0 - rho * rho).sqrt();
    let h = nu.axis(0).step();
    for x in [[0.0, 0.0], [0.5, -1.0], [-1.2, 0.7], [1.5, 1.5]] {
        let y = map.apply(&x).unwrap();
        assert!((y[0] - x[0]).abs() < 0.5 * h, "{x:?} -> {y:?}");
        assert!((y[1] - (rho * x[0] + s * x[1])).abs() < 0.5 * h, "{x:?} -> {y:?}");
    }
}

#[test]
fn variance_change_entropy_and_bound() {
    // N(0,1) -> N(0, s^2): D = (s^2 - 1 - ln s^2)/2, bound = s - 1 - ln s
    let mu = gaussian(&[vec![1.0]], 8.0, 2001);
    let nu = gaussian(&[vec![0.25]], 8.0, 2001);
    let (bound, entropy, margin) = entropy_lower_bound(&mu, &nu).unwrap();
    let s: f64 = 0.5;
    assert!((entropy - (s * s - 1.0 - (s * s).ln()) / 2.0).abs() < 1e-6);
    assert!((bound - (s - 1.0 - s.ln())).abs() < 1e-4);
    assert!((bound - 0.19315).abs() < 1e-3 && (entropy - 0.31815).abs() < 1e-3);
    assert!(margin > 0.0);
}

#[test]
fn entropy_of_shifted_gaussian() {
    let d = BoxDomain::cube(2, 8.0).unwrap();
    let m = [0.4, -0.3];
    let shifted = Potential::new(d.clone(), Smoothness::C1, move |x: &[f64]| {
        ((x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2)) / 2.0
    });
    let nu = GridDensity::build(&shifted, &[129, 129]).unwrap();
    let mu = gaussian(&corr(0.0), 8.0, 129);
    let d = relative_entropy(&nu, &mu).unwrap();
    assert!((d - (m[0] * m[0] + m[1] * m[1]) / 2.0).abs() < 1e-8, "{d}");
}

#[test]
fn chi_square_variance_of_norm() {
    for n in 1..=3 {
        let cov: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let m = [2001, 257, 61][n - 1];
        let g = gaussian(&cov, 8.0, m);
        let d = Decomposition::of_density(&g, &Evaluation::Quadrature).unwrap();
        let reps = check_variance_bounds(&d, Some(&g)).unwrap();
        let v = reps.iter().find(|r| r.inequality_id == "variance_norm_sq").unwrap();
        assert!((v.lhs - 2.0 * n as f64).abs() < 1e-3, "n {n}: {}", v.lhs);
        assert!(reps.iter().all(|r| r.passed()));
    }
}

#[test]
fn laplace_borell_ratio() {
    let p = Potential::new(BoxDomain::cube(1, 40.0).unwrap(), Smoothness::Nonsmooth, |x: &[f64]| x[0].abs());
    let g = GridDensity::build(&p, &[8001]).unwrap();
    assert!((borell_ratio(&g, 0) - 6.0).abs() < 1e-3);
}

#[test]
fn identity_terms_of_correlated_gaussian() {
    // X' = (0, rho X1): Var|X'|^2 = 2 rho^4, Var|X|^2 = 4 + 4 rho^2 ... via E|X|^4 - (E|X|^2)^2
    let rho: f64 = 0.5;
    let g = gaussian(&corr(rho), 8.0, 257);
    let d = Decomposition::of_density(&g, &Evaluation::Quadrature).unwrap();
    let reps = variance_identity(&d);
    let id = reps.iter().find(|r| r.inequality_id == "variance_identity").unwrap();
    let var_norm = 4.0 + 4.0 * rho * rho;
    assert!((id.lhs - var_norm).abs() < 1e-6, "{}", id.lhs);
    assert!((id.lhs - id.rhs).abs() <= 1e-6 * 12.0);
    assert!((id.detail_value("var_xprime_sq").unwrap() - 2.0 * rho.powi(4)).abs() < 1e-6);
}

#[test]
fn single_precision_grid_agrees() {
    let p32 = make_gaussian::<f32>(2, &corr(0.5), 8.0).unwrap();
    let g32 = GridDensity::build(&p32, &[129, 129]).unwrap();
    let c = g32.covariance();
    assert!((c[0][1] - 0.5).abs() < 1e-4 && (c[1][1] - 1.0).abs() < 1e-4);
}
