//! Conditional moments, Cheeger weights and the recentering map
//! `R_i(x) = x_i - m_i(x_{<i})` with its inverse `S`.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::density::format::fmt17;
use crate::density::{sample, BoxDomain, GridDensity, Measure};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Per-axis tables over prefix nodes: marginal mass of the prefix,
/// conditional mean, conditional variance and `lambda^2 = 1 / (3 var)`.
///
/// Rows with zero prefix mass hold NaN and raise [`Error::UndefinedPrefix`]
/// only when an off-grid lookup cannot avoid them.
#[derive(Debug, Clone)]
pub struct ConditionalMoments<T> {
    mu: GridDensity<T>,
    mass: Vec<Vec<T>>,
    mean: Vec<Vec<T>>,
    var: Vec<Vec<T>>,
}

fn lambda_sq<T: Real>(var: T) -> T {
    if var > T::zero() {
        T::one() / (T::lit(3.0) * var)
    } else if var == T::zero() {
        T::infinity()
    } else {
        T::nan()
    }
}

impl<T: Real> ConditionalMoments<T> {
    pub fn new(mu: &GridDensity<T>) -> Self {
        let n = mu.dim();
        let mut mass = Vec::with_capacity(n);
        let mut mean = Vec::with_capacity(n);
        let mut var = Vec::with_capacity(n);
        for i in 0..n {
            let m = mu.shape()[i];
            let axis = mu.axis(i);
            let nodes = axis.nodes();
            let w = axis.weights();
            let stats: Vec<(T, T, T)> = mu
                .prefix_marginal(i)
                .par_chunks(m)
                .map(|row| {
                    let a0 = row.iter().zip(&w).fold(T::zero(), |acc, (&v, &wk)| acc + v * wk);
                    if !(a0 > T::zero()) {
                        return (T::zero(), T::nan(), T::nan());
                    }
                    let a1 = row.iter().zip(&w).zip(&nodes).fold(T::zero(), |acc, ((&v, &wk), &u)| acc + v * wk * u);
                    let c = a1 / a0;
                    let a2 = row
                        .iter()
                        .zip(&w)
                        .zip(&nodes)
                        .fold(T::zero(), |acc, ((&v, &wk), &u)| acc + v * wk * (u - c) * (u - c));
                    (a0, c, (a2 / a0).max(T::zero()))
                })
                .collect();
            mass.push(stats.iter().map(|s| s.0).collect());
            mean.push(stats.iter().map(|s| s.1).collect());
            var.push(stats.iter().map(|s| s.2).collect());
        }
        ConditionalMoments { mu: mu.clone(), mass, mean, var }
    }

    pub fn dim(&self) -> usize {
        self.mu.dim()
    }

    pub fn density(&self) -> &GridDensity<T> {
        &self.mu
    }

    /// Tables indexed by prefix node (row-major over `shape[..i]`).
    pub fn mean_table(&self, i: usize) -> &[T] {
        &self.mean[i]
    }

    pub fn var_table(&self, i: usize) -> &[T] {
        &self.var[i]
    }

    pub fn lambda_sq_table(&self, i: usize) -> Vec<T> {
        self.var[i].iter().map(|&v| lambda_sq(v)).collect()
    }

    pub fn prefix_mass(&self, i: usize, row: usize) -> T {
        self.mass[i][row]
    }

    /// Mixture statistics over the multilinear corners of `prefix`:
    /// `(mean, variance)` by the law of total variance.
    fn mixture(&self, i: usize, prefix: &[T]) -> Option<(T, T)> {
        let corners = self.mu.prefix_corners(i, prefix).ok()?;
        let mut total = T::zero();
        let mut m1 = T::zero();
        for &(r, c) in &corners {
            let p = c * self.mass[i][r];
            if p > T::zero() {
                total = total + p;
                m1 = m1 + p * self.mean[i][r];
            }
        }
        if !(total > T::zero()) {
            return None;
        }
        let mean = m1 / total;
        let mut v = T::zero();
        for &(r, c) in &corners {
            let p = c * self.mass[i][r];
            if p > T::zero() {
                let d = self.mean[i][r] - mean;
                v = v + p * (self.var[i][r] + d * d);
            }
        }
        Some((mean, (v / total).max(T::zero())))
    }

    /// `(m_i, Var_i)` at an arbitrary prefix. A prefix with zero mass on the
    /// boundary of the support is read as its limit from the side of the mean.
    pub fn stats_at(&self, i: usize, prefix: &[T]) -> Result<(T, T)> {
        if prefix.len() != i {
            return Err(Error::DimMismatch { expected: i, got: prefix.len() });
        }
        if let Some(s) = self.mixture(i, prefix) {
            return Ok(s);
        }
        if i > 0 {
            let centre = self.mu.mean_vector_prefix(i);
            let eps = T::lit(1e-6);
            let nudged: Vec<T> = prefix.iter().zip(&centre).map(|(&p, &c)| p + (c - p) * eps).collect();
            if let Some(s) = self.mixture(i, &nudged) {
                return Ok(s);
            }
        }
        Err(Error::UndefinedPrefix { axis: i })
    }

    pub fn mean_at(&self, i: usize, prefix: &[T]) -> Result<T> {
        Ok(self.stats_at(i, prefix)?.0)
    }

    pub fn var_at(&self, i: usize, prefix: &[T]) -> Result<T> {
        Ok(self.stats_at(i, prefix)?.1)
    }

    pub fn lambda_sq_at(&self, i: usize, prefix: &[T]) -> Result<T> {
        Ok(lambda_sq(self.stats_at(i, prefix)?.1))
    }

    /// Prefix row indices `(row_0, .., row_{n-1})` of a grid multi-index.
    pub fn rows_of(&self, idx: &[usize]) -> Vec<usize> {
        let mut rows = Vec::with_capacity(idx.len());
        let mut r = 0usize;
        for (a, &k) in idx.iter().enumerate() {
            rows.push(r);
            r = r * self.mu.shape()[a] + k;
        }
        rows
    }

    /// CSV with columns `axis, x1..x{n-1}, mean, variance, lambda_sq`, one row
    /// per prefix node of positive mass; axes and coordinates are 1-based.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut s = String::from("axis");
        for j in 1..n {
            let _ = write!(s, ",x{j}");
        }
        s.push_str(",mean,variance,lambda_sq\n");
        for i in 0..n {
            let mut idx = vec![0usize; i];
            for r in 0..self.mean[i].len() {
                if !(self.mass[i][r] > T::zero()) {
                    continue;
                }
                crate::density::unravel_prefix(r, &self.mu.shape()[..i], &mut idx);
                let _ = write!(s, "{}", i + 1);
                for j in 0..n - 1 {
                    if j < i {
                        let _ = write!(s, ",{}", fmt17(self.mu.axis(j).node(idx[j]).f64()));
                    } else {
                        s.push(',');
                    }
                }
                let v = self.var[i][r];
                let _ = writeln!(
                    s,
                    ",{},{},{}",
                    fmt17(self.mean[i][r].f64()),
                    fmt17(v.f64()),
                    fmt17(lambda_sq(v).f64())
                );
            }
        }
        s
    }
}

pub fn conditional_moments<T: Real>(mu: &GridDensity<T>) -> ConditionalMoments<T> {
    ConditionalMoments::new(mu)
}

/// `R` and its inverse `S`, sharing one set of moment tables.
#[derive(Debug, Clone)]
pub struct RecenteringPair<T> {
    moments: Arc<ConditionalMoments<T>>,
}

impl<T: Real> RecenteringPair<T> {
    pub fn new(moments: ConditionalMoments<T>) -> Self {
        RecenteringPair { moments: Arc::new(moments) }
    }

    pub fn moments(&self) -> &ConditionalMoments<T> {
        &self.moments
    }

    pub fn dim(&self) -> usize {
        self.moments.dim()
    }

    fn check(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    /// `R(x)`, i.e. `x - m(x)`.
    pub fn r(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(x.iter().zip(self.reduced(x)?).map(|(&a, b)| a - b).collect())
    }

    /// The reduced vector `(m_1, m_2(x_1), .., m_n(x_{<n}))`.
    pub fn reduced(&self, x: &[T]) -> Result<Vec<T>> {
        self.check(x)?;
        (0..x.len()).map(|i| self.moments.mean_at(i, &x[..i])).collect()
    }

    /// `S(xbar)` by forward substitution.
    pub fn s(&self, xbar: &[T]) -> Result<Vec<T>> {
        self.check(xbar)?;
        let mut x: Vec<T> = Vec::with_capacity(xbar.len());
        for i in 0..xbar.len() {
            let m = self.moments.mean_at(i, &x)?;
            x.push(xbar[i] + m);
        }
        Ok(x)
    }

    /// `lambda_i^2(S(xbar))` for every `i`.
    pub fn weights_sq(&self, xbar: &[T]) -> Result<Vec<T>> {
        let x = self.s(xbar)?;
        (0..x.len()).map(|i| self.moments.lambda_sq_at(i, &x[..i])).collect()
    }

    /// Reduced vector at a grid node, read straight from the tables.
    pub fn reduced_at_node(&self, idx: &[usize]) -> Vec<T> {
        self.moments
            .rows_of(idx)
            .iter()
            .enumerate()
            .map(|(i, &r)| self.moments.mean[i][r])
            .collect()
    }

    /// Conditional variances at a grid node's prefixes.
    pub fn var_at_node(&self, idx: &[usize]) -> Vec<T> {
        self.moments
            .rows_of(idx)
            .iter()
            .enumerate()
            .map(|(i, &r)| self.moments.var[i][r])
            .collect()
    }
}

pub fn build_recentering<T: Real>(mu: &GridDensity<T>) -> RecenteringPair<T> {
    RecenteringPair::new(ConditionalMoments::new(mu))
}

/// How a pushforward law is represented.
#[derive(Debug, Clone, PartialEq)]
pub enum LawMode<T> {
    /// Cloud-in-cell re-binning of node images. Without an explicit grid the
    /// box is the bounding box of the images padded by one source cell, with
    /// the source shape.
    Grid { domain: Option<BoxDomain<T>>, shape: Option<Vec<usize>> },
    /// Samples drawn from the source and mapped.
    Sample { count: usize, seed: u64 },
}

impl<T> LawMode<T> {
    pub fn grid() -> Self {
        LawMode::Grid { domain: None, shape: None }
    }
}

fn pushforward<T: Real, F>(mu: &GridDensity<T>, mode: &LawMode<T>, f: F) -> Result<Measure<T>>
where
    F: Fn(&[usize], &[T]) -> Vec<T> + Sync,
{
    match mode {
        LawMode::Sample { count, seed } => {
            let s = sample(mu, *count, *seed)?;
            let pair_free = |x: &[T]| -> Result<Vec<T>> {
                let idx: Vec<usize> = Vec::new();
                Ok(f(&idx, x))
            };
            Ok(Measure::Samples(s.try_map(pair_free)?))
        }
        LawMode::Grid { domain, shape } => {
            if mu.dim() > 3 {
                return Err(Error::InvalidShape("grid pushforward needs dim <= 3".into()));
            }
            let n = mu.dim();
            let flats: Vec<usize> = (0..mu.len()).filter(|&k| mu.values()[k] > T::zero()).collect();
            let images: Vec<(Vec<T>, T)> = flats
                .par_iter()
                .map(|&flat| {
                    let mut idx = vec![0usize; n];
                    mu.unravel(flat, &mut idx);
                    let x = mu.point(&idx);
                    (f(&idx, &x), mu.node_weight(&idx) * mu.values()[flat])
                })
                .collect();
            let domain = match domain {
                Some(d) => d.clone(),
                None => {
                    let mut lo = vec![T::infinity(); n];
                    let mut hi = vec![T::neg_infinity(); n];
                    for (y, _) in &images {
                        for j in 0..n {
                            lo[j] = lo[j].min(y[j]);
                            hi[j] = hi[j].max(y[j]);
                        }
                    }
                    for j in 0..n {
                        let pad = mu.axis(j).step();
                        lo[j] = lo[j] - pad;
                        hi[j] = hi[j] + pad;
                    }
                    BoxDomain::new(lo, hi)?
                }
            };
            let shape = shape.clone().unwrap_or_else(|| mu.shape().to_vec());
            Ok(Measure::Grid(GridDensity::rebin(domain, &shape, images)?))
        }
    }
}

/// Law of `Xbar = R(X)`.
pub fn recentered_law<T: Real>(mu: &GridDensity<T>, mode: &LawMode<T>) -> Result<Measure<T>> {
    let pair = build_recentering(mu);
    match mode {
        LawMode::Sample { .. } => {
            let s = match pushforward(mu, mode, |_, x| x.to_vec())? {
                Measure::Samples(s) => s,
                Measure::Grid(_) => unreachable!(),
            };
            Ok(Measure::Samples(s.try_map(|x| pair.r(x))?))
        }
        LawMode::Grid { .. } => pushforward(mu, mode, |idx, x| {
            x.iter().zip(pair.reduced_at_node(idx)).map(|(&a, b)| a - b).collect()
        }),
    }
}

/// Law of the reduced vector `X' = (m_1, m_2(X_1), ..)`.
pub fn reduced_vector_law<T: Real>(mu: &GridDensity<T>, mode: &LawMode<T>) -> Result<Measure<T>> {
    let pair = build_recentering(mu);
    match mode {
        LawMode::Sample { .. } => {
            let s = match pushforward(mu, mode, |_, x| x.to_vec())? {
                Measure::Samples(s) => s,
                Measure::Grid(_) => unreachable!(),
            };
            Ok(Measure::Samples(s.try_map(|x| pair.reduced(x))?))
        }
        LawMode::Grid { .. } => pushforward(mu, mode, |idx, _| pair.reduced_at_node(idx)),
    }
}
