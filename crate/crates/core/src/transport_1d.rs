//! One-dimensional monotone transport, Cheeger weights and the 1D functional
//! inequalities behind the main transport bound.

use std::fmt::Write as _;

use crate::costs::n_cost;
use crate::density::format::fmt17;
use crate::density::{Axis, GridDensity, Law1D};
use crate::error::{Error, Result};
use crate::report::VerificationReport;
use crate::scalar::{pairwise_sum, Real};

/// Nondecreasing map sampled at the nodes of a source axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneMap1D<T> {
    axis: Axis<T>,
    values: Vec<T>,
    left_continuous: bool,
}

impl<T: Real> MonotoneMap1D<T> {
    /// `F_nu^{-1} o F_mu` at the source nodes.
    ///
    /// Rounding in the cumulative tables can make consecutive quantiles dip by
    /// an ulp; a running maximum restores exact monotonicity.
    pub fn between(mu: &Law1D<T>, nu: &Law1D<T>) -> Self {
        let mut values: Vec<T> = (0..mu.axis().len()).map(|k| mu.transport_node(nu, k)).collect();
        for k in 1..values.len() {
            if values[k] < values[k - 1] {
                values[k] = values[k - 1];
            }
        }
        MonotoneMap1D { axis: mu.axis().clone(), values, left_continuous: true }
    }

    pub fn from_parts(axis: Axis<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != axis.len() {
            return Err(Error::InvalidShape(format!("{} values for {} nodes", values.len(), axis.len())));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parse("map values must be nondecreasing".into()));
        }
        Ok(MonotoneMap1D { axis, values, left_continuous: true })
    }

    pub fn axis(&self) -> &Axis<T> {
        &self.axis
    }

    pub fn source_grid(&self) -> Vec<T> {
        self.axis.nodes()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn left_continuous(&self) -> bool {
        self.left_continuous
    }

    /// Linear interpolation between nodes; constant extension outside.
    pub fn eval(&self, x: T) -> T {
        if x <= self.axis.lo() {
            return self.values[0];
        }
        if x >= self.axis.hi() {
            return *self.values.last().unwrap();
        }
        let (k, f) = self.axis.locate(x).expect("inside axis");
        self.values[k] + (self.values[k + 1] - self.values[k]) * f
    }

    /// Generalized inverse `inf { x : T(x) >= y }` of the interpolated map.
    pub fn inverse(&self, y: T) -> T {
        let k = self.values.partition_point(|&v| v < y);
        if k == 0 {
            return self.axis.lo();
        }
        if k >= self.values.len() {
            return self.axis.hi();
        }
        let (a, b) = (self.values[k - 1], self.values[k]);
        let f = if b > a { (y - a) / (b - a) } else { T::one() };
        self.axis.node(k - 1) + self.axis.step() * f
    }

    /// Two whitespace-separated columns: node, value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, &v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{} {}", fmt17(self.axis.node(k).f64()), fmt17(v.f64()));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let cols: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            if cols.len() != 2 {
                return Err(Error::Parse(format!("line {}: expected 2 columns", i + 1)));
            }
            nodes.push(T::lit(cols[0]));
            values.push(T::lit(cols[1]));
        }
        if nodes.len() < 2 {
            return Err(Error::Parse("need at least two nodes".into()));
        }
        let axis = Axis::new(nodes[0], *nodes.last().unwrap(), nodes.len())?;
        Self::from_parts(axis, values)
    }
}

fn law_of<T: Real>(g: &GridDensity<T>) -> Result<Law1D<T>> {
    g.law1d()
}

/// Quantile coupling map from `mu` to `nu` (both one-dimensional).
pub fn monotone_map<T: Real>(mu: &GridDensity<T>, nu: &GridDensity<T>) -> Result<MonotoneMap1D<T>> {
    Ok(MonotoneMap1D::between(&law_of(mu)?, &law_of(nu)?))
}

/// `1 / (3 Var)`, the working Cheeger weight squared, and the variance.
/// The weight is `+inf` when the variance vanishes.
pub fn cheeger_weight<T: Real>(law: &Law1D<T>) -> (T, T) {
    let var = law.variance();
    let lsq = if var > T::zero() { T::one() / (T::lit(3.0) * var) } else { T::infinity() };
    (lsq, var)
}

/// `(lambda^2, Var)` for a one-dimensional grid density.
pub fn cheeger_constant<T: Real>(gamma: &GridDensity<T>) -> Result<(T, T)> {
    Ok(cheeger_weight(&law_of(gamma)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OneDimMode {
    /// `lambda int |f - m(f)| <= int |f'|`, `m` a median.
    CheegerMedian,
    /// `(1/16) int N(lambda (f - mean f)) <= int N(f')`.
    CheegerGammaN,
}

struct Sampled {
    mass: Vec<f64>,
    f: Vec<f64>,
    df: Vec<f64>,
}

/// Forward difference quotient maximum over the nodes at step `delta`.
fn max_slope<T: Real>(axis: &Axis<T>, f: &dyn Fn(T) -> T, delta: T) -> f64 {
    (0..axis.len())
        .map(|k| axis.node(k))
        .filter(|&x| x + delta <= axis.hi())
        .map(|x| ((f(x + delta) - f(x)) / delta).abs().f64())
        .fold(0.0, f64::max)
}

fn sample_function<T: Real>(law: &Law1D<T>, f: &dyn Fn(T) -> T) -> Result<Sampled> {
    let axis = law.axis();
    let h = axis.step();
    let coarse = max_slope(axis, f, h);
    let fine = max_slope(axis, f, h / T::lit(4.0));
    if !(fine.is_finite()) || (coarse == 0.0 && fine > 0.0) || (coarse > 0.0 && fine / coarse > 1.5) {
        let ratio = if coarse > 0.0 { fine / coarse } else { f64::INFINITY };
        return Err(Error::NonLipschitzOnGrid { ratio });
    }
    let m = axis.len();
    let nodes = axis.nodes();
    let fv: Vec<f64> = nodes.iter().map(|&x| f(x).f64()).collect();
    let hf = h.f64();
    let df = (0..m)
        .map(|k| match k {
            0 => (fv[1] - fv[0]) / hf,
            k if k == m - 1 => (fv[m - 1] - fv[m - 2]) / hf,
            _ => (fv[k + 1] - fv[k - 1]) / (2.0 * hf),
        })
        .collect();
    let mass = (0..m).map(|k| (axis.weight(k) * law.density()[k]).f64()).collect();
    Ok(Sampled { mass, f: fv, df })
}

fn integrate(mass: &[f64], g: impl Fn(usize) -> f64) -> f64 {
    let terms: Vec<f64> = mass.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(k, &w)| w * g(k)).collect();
    pairwise_sum(&terms)
}

/// Median of the pushforward of the nodal masses by `f`: sort nodes by
/// f-value (ties by node order), take the first value with cumulative mass
/// at least one half.
fn weighted_median(f: &[f64], mass: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| f[a].total_cmp(&f[b]).then(a.cmp(&b)));
    let total: f64 = pairwise_sum(mass);
    let mut acc = 0.0;
    for &k in &order {
        acc += mass[k];
        if acc >= 0.5 * total {
            return f[k];
        }
    }
    f[*order.last().unwrap()]
}

/// Checks one of the 1D Cheeger-type inequalities for `f` under `gamma`.
///
/// Derivatives are central differences at the grid step (one-sided at the
/// ends). Fails with [`Error::NonLipschitzOnGrid`] when the largest
/// difference quotient grows by more than 1.5x under 4x refinement.
pub fn verify_one_dim_functional<T: Real>(
    gamma: &GridDensity<T>,
    f: &dyn Fn(T) -> T,
    mode: OneDimMode,
) -> Result<VerificationReport> {
    let law = law_of(gamma)?;
    let s = sample_function(&law, f)?;
    let (lsq, var) = cheeger_weight(&law);
    let lambda = lsq.f64().sqrt();
    let (id, lhs, rhs, spread) = match mode {
        OneDimMode::CheegerMedian => {
            let med = weighted_median(&s.f, &s.mass);
            let dev = integrate(&s.mass, |k| (s.f[k] - med).abs());
            let rhs = integrate(&s.mass, |k| s.df[k].abs());
            ("cheeger_median", if dev == 0.0 { 0.0 } else { lambda * dev }, rhs, dev)
        }
        OneDimMode::CheegerGammaN => {
            let lo = s.f.iter().copied().fold(f64::INFINITY, f64::min);
            let mean = lo + integrate(&s.mass, |k| s.f[k] - lo) / pairwise_sum(&s.mass);
            let lhs = integrate(&s.mass, |k| n_cost(lambda * (s.f[k] - mean))) / 16.0;
            let rhs = integrate(&s.mass, |k| n_cost(s.df[k]));
            ("cheeger_gamma_n", lhs, rhs, lhs)
        }
    };
    let tol = 1e-6 * (1.0 + lhs.abs() + rhs.abs());
    let best = if spread > 0.0 && mode == OneDimMode::CheegerMedian { rhs / spread } else { f64::NAN };
    Ok(VerificationReport::inequality(id, lhs, rhs, lambda, tol)
        .with_best(best)
        .with_digest(gamma.digest())
        .detail("variance", var.f64())
        .detail("lambda_sq", lsq.f64()))
}

/// Fixed family of 50 test functions for estimating a 1D Cheeger constant:
/// ramps of two widths centered at 24 quantile levels, plus `x` and `|x - median|`.
pub fn cheeger_family<T: Real>(law: &Law1D<T>) -> Vec<Box<dyn Fn(T) -> T + Send + Sync>> {
    let sd = law.variance().sqrt();
    let h = law.axis().step();
    let mut fam: Vec<Box<dyn Fn(T) -> T + Send + Sync>> = Vec::with_capacity(50);
    for j in 0..24 {
        let c = law.quantile(T::lit(0.04 * (j + 1) as f64));
        for scale in [0.02, 0.2] {
            let w = (sd * T::lit(scale)).max(h * T::lit(4.0));
            fam.push(Box::new(move |x: T| ((x - c) / w).max(-T::one()).min(T::one())));
        }
    }
    let med = law.quantile(T::lit(0.5));
    fam.push(Box::new(|x: T| x));
    fam.push(Box::new(move |x: T| (x - med).abs()));
    fam
}

/// Empirical Cheeger constant `min_f RHS/LHS` over [`cheeger_family`], with
/// the bracket `[sqrt(1/(3 Var)), sqrt(2/Var)]`.
pub fn cheeger_estimate<T: Real>(gamma: &GridDensity<T>) -> Result<(f64, f64, f64)> {
    let law = law_of(gamma)?;
    let (_, var) = cheeger_weight(&law);
    let var = var.f64();
    let mut best = f64::INFINITY;
    for f in cheeger_family(&law) {
        let s = sample_function(&law, &*f)?;
        let med = weighted_median(&s.f, &s.mass);
        let dev = integrate(&s.mass, |k| (s.f[k] - med).abs());
        if dev > 0.0 {
            best = best.min(integrate(&s.mass, |k| s.df[k].abs()) / dev);
        }
    }
    Ok((best, (1.0 / (3.0 * var)).sqrt(), (2.0 / var).sqrt()))
}
