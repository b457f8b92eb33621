//! Variance bounds for `|Xbar|^2`, the decomposition `X = Xbar + X'`,
//! quadratic variation of martingale increments and thin-shell tails.

use rayon::prelude::*;

use crate::density::{sample, GridDensity, Measure, SampleSet};
use crate::error::{Error, Result};
use crate::families::martingale_increment_check;
use crate::inequality::poincare_constant;
use crate::recentering::build_recentering;
use crate::report::VerificationReport;
use crate::scalar::{pairwise_sum, Real};

/// Quadrature over the grid, or Monte Carlo over draws from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluation {
    Quadrature,
    MonteCarlo { count: usize, seed: u64 },
}

/// One weighted point with its parts `x = xbar + xprime`.
#[derive(Debug, Clone)]
pub struct Atom {
    pub weight: f64,
    pub x: Vec<f64>,
    pub xbar: Vec<f64>,
    pub xprime: Vec<f64>,
}

/// `X = Xbar + X'` with `X'_i = E[X_i | X_{<i}]`, as a weighted point set.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub dim: usize,
    pub atoms: Vec<Atom>,
    /// Quadrature (orthogonality holds to rounding) rather than sampling.
    pub exact: bool,
    pub digest: String,
}

impl Decomposition {
    /// From the moment tables of `mu`, at its nodes or at draws from it.
    pub fn of_density<T: Real>(mu: &GridDensity<T>, eval: &Evaluation) -> Result<Self> {
        let pair = build_recentering(mu);
        let n = mu.dim();
        let to64 = |v: &[T]| v.iter().map(|a| a.f64()).collect::<Vec<_>>();
        let make = |w: f64, x: Vec<f64>, xp: Vec<f64>| Atom {
            weight: w,
            xbar: x.iter().zip(&xp).map(|(a, b)| a - b).collect(),
            x,
            xprime: xp,
        };
        match *eval {
            Evaluation::Quadrature => {
                let vals = mu.values();
                let flats: Vec<usize> = (0..vals.len()).filter(|&f| vals[f] > T::zero()).collect();
                let atoms = flats
                    .par_iter()
                    .map(|&f| {
                        let mut idx = vec![0usize; n];
                        mu.unravel(f, &mut idx);
                        make((mu.node_weight(&idx) * vals[f]).f64(), to64(&mu.point(&idx)), to64(&pair.reduced_at_node(&idx)))
                    })
                    .collect();
                Ok(Decomposition { dim: n, atoms, exact: true, digest: mu.digest() })
            }
            Evaluation::MonteCarlo { count, seed } => {
                let s = sample(mu, count, seed)?;
                let atoms = s
                    .points()
                    .par_iter()
                    .zip(s.weights())
                    .map(|(x, &w)| Ok(make(w.f64(), to64(x), to64(&pair.reduced(x)?))))
                    .collect::<Result<_>>()?;
                Ok(Decomposition { dim: n, atoms, exact: false, digest: s.digest() })
            }
        }
    }

    /// A law already in the martingale-increment class: `Xbar = X`, `X' = 0`.
    pub fn of_martingale_law<T: Real>(law: &Measure<T>) -> Self {
        let n = law.dim();
        let atoms = law
            .atoms()
            .into_iter()
            .map(|(x, w)| {
                let x: Vec<f64> = x.iter().map(|v| v.f64()).collect();
                Atom { weight: w.f64(), xbar: x.clone(), x, xprime: vec![0.0; n] }
            })
            .collect();
        Decomposition { dim: n, atoms, exact: matches!(law, Measure::Grid(_)), digest: law.digest() }
    }

    /// `E[g]`, normalized by the total weight.
    pub fn expect<F: Fn(&Atom) -> f64 + Sync>(&self, g: F) -> f64 {
        let terms: Vec<f64> = self.atoms.par_iter().map(|a| a.weight * g(a)).collect();
        let total: Vec<f64> = self.atoms.iter().map(|a| a.weight).collect();
        pairwise_sum(&terms) / pairwise_sum(&total)
    }

    fn variance<F: Fn(&Atom) -> f64 + Sync>(&self, g: F) -> f64 {
        let m = self.expect(&g);
        self.expect(|a| (g(a) - m).powi(2))
    }

    /// Standard error of `Var(g)` from 20 batch means (sample mode).
    fn batch_stderr<F: Fn(&Atom) -> f64 + Sync>(&self, g: F) -> f64 {
        let b = 20;
        let size = self.atoms.len() / b;
        if size < 2 {
            return f64::NAN;
        }
        let vars: Vec<f64> = (0..b)
            .map(|j| {
                let part = Decomposition {
                    dim: self.dim,
                    atoms: self.atoms[j * size..(j + 1) * size].to_vec(),
                    exact: false,
                    digest: String::new(),
                };
                part.variance(&g)
            })
            .collect();
        let m = vars.iter().sum::<f64>() / b as f64;
        (vars.iter().map(|v| (v - m).powi(2)).sum::<f64>() / ((b - 1) * b) as f64).sqrt()
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `E[Y^4] / E[Y^2]^2`.
pub fn borell_ratio<T: Real>(density: &GridDensity<T>, axis: usize) -> f64 {
    let m2 = density.expect(|x| x[axis] * x[axis]).f64();
    let m4 = density.expect(|x| x[axis].powi(4)).f64();
    m4 / (m2 * m2)
}

/// Largest Borell ratio of the centered one-dimensional conditionals of
/// `mu` along `axis`, over prefix rows of positive mass.
pub fn conditional_borell_ratio<T: Real>(mu: &GridDensity<T>, axis: usize) -> Result<f64> {
    let mut best = 0.0f64;
    for row in 0..mu.prefix_count(axis) {
        if !(mu.prefix_mass(axis, row) > T::zero()) {
            continue;
        }
        let law = mu.conditional_law_at_node(axis, row)?;
        let m = law.mean();
        let m2 = law.expect(|y| (y - m).powi(2)).f64();
        let m4 = law.expect(|y| (y - m).powi(4)).f64();
        if m2 > 0.0 {
            best = best.max(m4 / (m2 * m2));
        }
    }
    Ok(best)
}

/// Fourth-moment bounds for `Xbar`:
///
/// * `Var|Xbar|^2 <= 4 a sum E[Xbar_i^4]`, `a = (4 sqrt 3 + 1)^2` (gating);
/// * `E[Xbar_i^4] <= 16 E[X_i^4]` for each `i` (gating);
/// * `Var|X|^2` with Borell ratios of the marginals and, when `mu` is
///   given, of the 1D conditionals; the chained bound
///   `Var|Xbar|^2 <= 64 a a' sum E[X_i^2]^2` with the empirical `a'` (informational).
pub fn check_variance_bounds<T: Real>(d: &Decomposition, mu: Option<&GridDensity<T>>) -> Result<Vec<VerificationReport>> {
    let n = d.dim;
    let a = poincare_constant();
    let nb2 = |at: &Atom| norm_sq(&at.xbar);
    let var_bar = d.variance(nb2);
    let var_x = d.variance(|at| norm_sq(&at.x));
    let xbar4: Vec<f64> = (0..n).map(|i| d.expect(|at| at.xbar[i].powi(4))).collect();
    let x4: Vec<f64> = (0..n).map(|i| d.expect(|at| at.x[i].powi(4))).collect();
    let x2: Vec<f64> = (0..n).map(|i| d.expect(|at| at.x[i] * at.x[i])).collect();
    let sum_bar4: f64 = xbar4.iter().sum();
    let tol = |scale: f64| 1e-9 * (1.0 + scale.abs());

    let mut out = Vec::new();
    out.push(
        VerificationReport::inequality("variance_chain", var_bar, 4.0 * a * sum_bar4, 4.0 * a, tol(4.0 * a * sum_bar4))
            .with_best(if sum_bar4 > 0.0 { var_bar / sum_bar4 } else { f64::NAN })
            .with_digest(d.digest.clone())
            .detail("sum_xbar4", sum_bar4),
    );
    for i in 0..n {
        out.push(
            VerificationReport::inequality(format!("fourth_moment/x{}", i + 1), xbar4[i], 16.0 * x4[i], 16.0, tol(16.0 * x4[i]))
                .with_best(if x4[i] > 0.0 { xbar4[i] / x4[i] } else { f64::NAN })
                .with_digest(d.digest.clone()),
        );
    }
    let mut borell = 0.0f64;
    let mut info = VerificationReport::inequality("variance_norm_sq", var_x, 2.0 * n as f64, f64::NAN, 0.0)
        .informational()
        .with_digest(d.digest.clone())
        .detail("var_norm_sq_bar", var_bar);
    for i in 0..n {
        let r = x4[i] / (x2[i] * x2[i]);
        borell = borell.max(r);
        info = info.detail(format!("borell/x{}", i + 1), r);
    }
    if let Some(mu) = mu {
        for i in 0..n {
            let r = conditional_borell_ratio(mu, i)?;
            borell = borell.max(r);
            info = info.detail(format!("borell_conditional/x{}", i + 1), r);
        }
    }
    let chained = 64.0 * a * borell * x2.iter().map(|v| v * v).sum::<f64>();
    info = info
        .with_best(borell)
        .detail("chained_bound", chained)
        .detail("chained_holds", if var_bar <= chained { 1.0 } else { 0.0 });
    if !d.exact {
        info = info.detail("var_norm_sq_stderr", d.batch_stderr(|at| norm_sq(&at.x)));
    }
    out.push(info.note("rhs is the Gaussian value 2n for reference; best is the empirical a'"));
    Ok(out)
}

/// The six-term expansion of `Var|X|^2` along `X = Xbar + X'`, the
/// orthogonality of `Xbar_i` and `X'_i`, the cross-term bound
/// `E[(Xbar . X')^2] <= sum E[X_i^4]`, the resulting upper bound
/// `Var|X|^2 <= (sqrt Var|Xbar|^2 + sqrt Var|X'|^2 + 2 sqrt(sum E X_i^4))^2`,
/// and the empirical constants of both comparisons between `Var|X|^2` and
/// `n + Var|X'|^2`.
///
/// The expansion uses `E[Xbar . X'] = 0`; on samples it holds only up to
/// sampling error, so the identity and orthogonality are informational there.
pub fn variance_identity(d: &Decomposition) -> Vec<VerificationReport> {
    let n = d.dim;
    let a_ = |at: &Atom| norm_sq(&at.xbar);
    let b_ = |at: &Atom| norm_sq(&at.xprime);
    let c_ = |at: &Atom| dot(&at.xbar, &at.xprime);
    let (ea, eb) = (d.expect(a_), d.expect(b_));
    let var_x = d.variance(|at| norm_sq(&at.x));
    let var_a = d.variance(a_);
    let var_b = d.variance(b_);
    let cov_ab = d.expect(|at| (a_(at) - ea) * (b_(at) - eb));
    let e_c2 = d.expect(|at| c_(at).powi(2));
    let e_ac = d.expect(|at| a_(at) * c_(at));
    let e_bc = d.expect(|at| b_(at) * c_(at));
    let terms = [var_a, var_b, 2.0 * cov_ab, 4.0 * e_c2, 4.0 * e_ac, 4.0 * e_bc];
    let sum: f64 = terms.iter().sum();
    let ex4 = d.expect(|at| norm_sq(&at.x).powi(2));
    let ex2 = d.expect(|at| norm_sq(&at.x));
    let gate = |r: VerificationReport| {
        if d.exact {
            r
        } else {
            r.informational().note("sample mode: orthogonality holds only up to sampling error")
        }
    };

    let mut id = VerificationReport::identity("variance_identity", var_x, sum, 1e-6 * ex4).with_digest(d.digest.clone());
    for (name, v) in ["var_xbar_sq", "var_xprime_sq", "cov_term", "cross_sq_term", "xbar_cross_term", "xprime_cross_term"]
        .iter()
        .zip(terms)
    {
        id = id.detail(*name, v);
    }
    let mut out = vec![gate(id.detail("e_norm4", ex4))];
    for i in 0..n {
        let o = d.expect(|at| at.xbar[i] * at.xprime[i]);
        out.push(gate(
            VerificationReport::identity(format!("orthogonality/x{}", i + 1), o, 0.0, 1e-8 * ex2.max(f64::MIN_POSITIVE))
                .with_digest(d.digest.clone()),
        ));
    }
    let sum_x4: f64 = (0..n).map(|i| d.expect(|at| at.x[i].powi(4))).sum();
    out.push(
        VerificationReport::inequality("cross_term_bound", e_c2, sum_x4, 1.0, 1e-9 * (1.0 + sum_x4))
            .with_best(if sum_x4 > 0.0 { e_c2 / sum_x4 } else { f64::NAN })
            .with_digest(d.digest.clone()),
    );
    let upper = (var_a.sqrt() + var_b.sqrt() + 2.0 * sum_x4.sqrt()).powi(2);
    out.push(gate(
        VerificationReport::inequality("variance_upper_chain", var_x, upper, 1.0, 1e-9 * (1.0 + upper))
            .with_digest(d.digest.clone()),
    ));
    let nf = n as f64;
    out.push(
        VerificationReport::inequality("variance_comparison", var_x, nf + var_b, f64::NAN, 0.0)
            .informational()
            .with_best((var_x / (nf + var_b)).max(var_b / (nf + var_x)))
            .with_digest(d.digest.clone())
            .detail("ratio_x_over_xprime", var_x / (nf + var_b))
            .detail("ratio_xprime_over_x", var_b / (nf + var_x)),
    );
    out
}

/// Empirical constant in `Var(sum_{i<=k} X_i^2) <= c sum_{i<=k} E[X_i^4]`,
/// maximized over `k`, for a law of martingale increments.
pub fn quadratic_variation_check<T: Real>(law: &Measure<T>, tol: Option<f64>) -> Result<VerificationReport> {
    let check = martingale_increment_check(law, tol);
    if !check.passed() {
        return Err(Error::NotMartingaleIncrements(check.lhs));
    }
    let d = Decomposition::of_martingale_law(law);
    let n = d.dim;
    let mut r = VerificationReport::inequality("quadratic_variation", 0.0, 0.0, f64::NAN, 0.0)
        .informational()
        .with_digest(d.digest.clone());
    let mut best = 0.0f64;
    for k in 1..=n {
        let v = d.variance(|at| at.x[..k].iter().map(|a| a * a).sum());
        let s: f64 = (0..k).map(|i| d.expect(|at| at.x[i].powi(4))).sum();
        let ratio = if s > 0.0 { v / s } else { 0.0 };
        best = best.max(ratio);
        r = r.detail(format!("ratio/k={k}"), ratio);
        if k == n {
            r.lhs = v;
            r.rhs = s;
            r.margin = s - v;
        }
    }
    Ok(r.with_best(best).detail("martingale_worst", check.lhs))
}

/// Probabilities of the thin-shell event at the default `t` values.
pub const THIN_SHELL_T: [f64; 5] = [0.0, 0.1, 0.2, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub t: f64,
    pub probability: f64,
    /// 95% Wilson interval.
    pub lower: f64,
    pub upper: f64,
}

fn wilson(p: f64, n: f64) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let z2 = z * z;
    let c = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let h = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((c - h).max(0.0), (c + h).min(1.0))
}

/// `P(||X| - sqrt n| >= t sqrt n)` with Wilson intervals. The sample must be
/// isotropic up to `isotropy_tol` in every mean and covariance entry.
pub fn thin_shell_tail<T: Real>(samples: &SampleSet<T>, isotropy_tol: f64, ts: &[f64]) -> Result<Vec<TailRow>> {
    let n = samples.dim();
    let pts: Vec<Vec<f64>> = samples.points().iter().map(|x| x.iter().map(|v| v.f64()).collect()).collect();
    let w: Vec<f64> = samples.weights().iter().map(|v| v.f64()).collect();
    let total: f64 = w.iter().sum();
    let e = |g: &dyn Fn(&[f64]) -> f64| pts.iter().zip(&w).map(|(x, &wi)| wi * g(x)).sum::<f64>() / total;
    let mut dev = 0.0f64;
    for i in 0..n {
        dev = dev.max(e(&|x| x[i]).abs());
        for j in i..n {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((e(&|x| x[i] * x[j]) - target).abs());
        }
    }
    if dev > isotropy_tol {
        return Err(Error::NotIsotropic(dev));
    }
    let rn = (n as f64).sqrt();
    let count = pts.len() as f64;
    Ok(ts
        .iter()
        .map(|&t| {
            let p = e(&|x| if (norm_sq(x).sqrt() - rn).abs() >= t * rn { 1.0 } else { 0.0 });
            let (lower, upper) = wilson(p, count);
            TailRow { t, probability: p, lower, upper }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{BoxDomain, Potential, Smoothness};
    use crate::families::make_gaussian;

    fn gaussian(cov: &[Vec<f64>], r: f64, m: usize) -> GridDensity<f64> {
        let n = cov.len();
        GridDensity::build(&make_gaussian::<f64>(n, cov, r).unwrap(), &vec![m; n]).unwrap()
    }

    fn identity(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    #[test]
    fn product_gaussian_variance_of_norm() {
        for (n, m) in [(1, 513), (2, 257), (3, 97)] {
            let g = gaussian(&identity(n), 9.0, m);
            let d = Decomposition::of_density(&g, &Evaluation::Quadrature).unwrap();
            let reps = check_variance_bounds(&d, Some(&g)).unwrap();
            let info = reps.iter().find(|r| r.inequality_id == "variance_norm_sq").unwrap();
            assert!((info.lhs - 2.0 * n as f64).abs() < 1e-3, "{n}: {}", info.lhs);
            assert!(reps.iter().all(|r| r.passed()));
        }
    }

    #[test]
    fn laplace_borell_ratio() {
        let p = Potential::new(BoxDomain::new(vec![-40.0], vec![40.0]).unwrap(), Smoothness::Nonsmooth, |x: &[f64]| x[0].abs());
        let g = GridDensity::build(&p, &[8001]).unwrap();
        assert!((borell_ratio(&g, 0) - 6.0).abs() < 1e-3, "{}", borell_ratio(&g, 0));
    }

    #[test]
    fn correlated_identity_and_orthogonality() {
        let g = gaussian(&[vec![1.0, 0.5], vec![0.5, 1.0]], 8.0, 257);
        let d = Decomposition::of_density(&g, &Evaluation::Quadrature).unwrap();
        let reps = variance_identity(&d);
        for r in &reps {
            assert!(r.passed(), "{r:?}");
        }
        let id = &reps[0];
        // X' = (0, X1/2): direct expansion of E|X|^4 for this Gaussian gives Var|X|^2 = 2(1 + 1 + 2 rho^2)
        assert!((id.lhs - 5.0).abs() < 1e-6, "{}", id.lhs);
        // X1, X2 with E[X2|X1] = X1/2: Var|X'|^2 = Var(X1^2)/16 = 1/8
        assert!((id.detail_value("var_xprime_sq").unwrap() - 0.125).abs() < 1e-6);
        let chain = check_variance_bounds(&d, Some(&g)).unwrap();
        assert!(chain.iter().all(|r| r.passed()));
    }

    #[test]
    fn centered_product_collapses() {
        let g = gaussian(&[vec![1.0, 0.0], vec![0.0, 0.5]], 8.0, 129);
        let d = Decomposition::of_density(&g, &Evaluation::Quadrature).unwrap();
        assert!(d.atoms.iter().all(|a| a.xprime.iter().all(|v| v.abs() < 1e-12)));
        let reps = variance_identity(&d);
        assert!((reps[0].lhs - reps[0].detail_value("var_xbar_sq").unwrap()).abs() < 1e-9);
    }

    #[test]
    fn sample_mode_runs() {
        let g = gaussian(&[vec![1.0, 0.3], vec![0.3, 1.0]], 8.0, 129);
        let d = Decomposition::of_density(&g, &Evaluation::MonteCarlo { count: 50_000, seed: 4 }).unwrap();
        let reps = variance_identity(&d);
        assert!(reps.iter().all(|r| r.passed()));
        assert!((reps[0].lhs - 2.0 * (2.0 + 2.0 * 0.09)).abs() < 0.3);
        let bounds = check_variance_bounds::<f64>(&d, None).unwrap();
        assert!(bounds.iter().all(|r| r.passed()));
        assert!(bounds.last().unwrap().detail_value("var_norm_sq_stderr").unwrap() > 0.0);
    }

    #[test]
    fn quadratic_variation() {
        let g = gaussian(&[vec![1.0, 0.0], vec![0.0, 2.0]], 9.0, 257);
        let r = quadratic_variation_check(&Measure::Grid(g), None).unwrap();
        let k1 = r.detail_value("ratio/k=1").unwrap();
        assert!(k1 <= 1.0 && (k1 - 2.0 / 3.0).abs() < 1e-6);
        let c = make_gaussian::<f64>(2, &[vec![1.0, 0.5], vec![0.5, 1.0]], 8.0).unwrap();
        let corr = GridDensity::build(&c, &[129, 129]).unwrap();
        assert!(matches!(quadratic_variation_check(&Measure::Grid(corr), None), Err(Error::NotMartingaleIncrements(_))));
    }

    #[test]
    fn thin_shell() {
        let g = gaussian(&identity(3), 7.0, 129);
        let s = sample(&g, 100_000, 17).unwrap();
        let rows = thin_shell_tail(&s, 0.02, &THIN_SHELL_T).unwrap();
        assert_eq!(rows[0].probability, 1.0);
        assert!(rows.windows(2).all(|w| w[1].probability <= w[0].probability));
        let last = rows.last().unwrap();
        assert!(last.probability < 0.05 && last.lower <= last.probability && last.probability <= last.upper);
        let stretched = s.map(|x| x.iter().map(|v| 2.0 * v).collect()).unwrap();
        assert!(matches!(thin_shell_tail(&stretched, 0.02, &THIN_SHELL_T), Err(Error::NotIsotropic(_))));
    }
}
