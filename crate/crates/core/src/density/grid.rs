use std::fmt;
use std::sync::OnceLock;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::domain::{Axis, BoxDomain};
use super::law1d::Law1D;
use super::potential::{Potential, AUDIT_PAIRS, AUDIT_TOL};
use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, Real};

/// Largest admissible number of grid nodes.
pub const MAX_GRID_NODES: usize = 1 << 26;
/// Smallest admissible number of nodes per axis.
pub const MIN_AXIS_NODES: usize = 8;

/// Normalized density on a tensor grid, integrated with the trapezoid rule.
///
/// Values are stored row-major (last axis fastest). Marginals of every
/// coordinate prefix are computed lazily on first use and cached; the cache is
/// write-once so a `GridDensity` can be shared across threads.
#[derive(Clone)]
pub struct GridDensity<T> {
    domain: BoxDomain<T>,
    axes: Vec<Axis<T>>,
    shape: Vec<usize>,
    values: Vec<T>,
    log_values: Vec<T>,
    tower: OnceLock<Tower<T>>,
    mean: OnceLock<Vec<T>>,
}

/// Unnormalized prefix marginals: `levels[a]` is the density of `(x_0..=x_a)`
/// on `shape[..=a]`, `cums[a]` the trapezoid cumulative along axis `a`.
#[derive(Debug, Clone)]
struct Tower<T> {
    levels: Vec<Vec<T>>,
    cums: Vec<Vec<T>>,
}

impl<T: fmt::Debug> fmt::Debug for GridDensity<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridDensity")
            .field("domain", &self.domain)
            .field("shape", &self.shape)
            .finish_non_exhaustive()
    }
}

fn validate_shape(shape: &[usize], min_nodes: usize) -> Result<usize> {
    let mut total: usize = 1;
    for (i, &m) in shape.iter().enumerate() {
        if m < min_nodes {
            return Err(Error::InvalidShape(format!("axis {i} has {m} nodes, need at least {min_nodes}")));
        }
        total = total
            .checked_mul(m)
            .filter(|&t| t <= MAX_GRID_NODES)
            .ok_or_else(|| Error::InvalidShape(format!("more than {MAX_GRID_NODES} nodes")))?;
    }
    Ok(total)
}

impl<T: Real> GridDensity<T> {
    /// Evaluates `exp(-V)` on the tensor grid and normalizes it.
    pub fn build(potential: &Potential<T>, shape: &[usize]) -> Result<Self> {
        potential.audit_convexity(AUDIT_PAIRS, AUDIT_TOL)?;
        let domain = potential.domain().clone();
        let axes = domain.axes(shape)?;
        let total = validate_shape(shape, MIN_AXIS_NODES)?;
        let row = *shape.last().unwrap();
        let mut log_values = vec![T::zero(); total];
        let n = shape.len();
        log_values.par_chunks_mut(row).enumerate().for_each(|(r, chunk)| {
            let mut idx = vec![0usize; n];
            unravel(r * row, shape, &mut idx);
            let mut x: Vec<T> = idx.iter().zip(&axes).map(|(&k, a)| a.node(k)).collect();
            for (k, slot) in chunk.iter_mut().enumerate() {
                x[n - 1] = axes[n - 1].node(k);
                let v = potential.eval(&x);
                *slot = if v.is_nan() { T::neg_infinity() } else { -v };
            }
        });
        Self::assemble(domain, axes, shape.to_vec(), log_values)
    }

    /// Density proportional to `exp(log_values)`.
    pub fn from_log_values(domain: BoxDomain<T>, shape: &[usize], log_values: Vec<T>) -> Result<Self> {
        let axes = domain.axes(shape)?;
        let total = validate_shape(shape, 2)?;
        if total != log_values.len() {
            return Err(Error::InvalidShape(format!("{} values for {} nodes", log_values.len(), total)));
        }
        Self::assemble(domain, axes, shape.to_vec(), log_values)
    }

    /// Density proportional to nonnegative `values`.
    pub fn from_values(domain: BoxDomain<T>, shape: &[usize], values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| *v < T::zero() || v.is_nan()) {
            return Err(Error::Parse("density values must be nonnegative".into()));
        }
        let logs = values.into_iter().map(|v| v.ln()).collect();
        Self::from_log_values(domain, shape, logs)
    }

    /// Adopts already-normalized values verbatim (used by the file readers).
    pub fn from_normalized_values(domain: BoxDomain<T>, shape: &[usize], values: Vec<T>) -> Result<Self> {
        let axes = domain.axes(shape)?;
        let total = validate_shape(shape, 2)?;
        if total != values.len() {
            return Err(Error::InvalidShape(format!("{} values for {} nodes", values.len(), total)));
        }
        if values.iter().any(|v| *v < T::zero() || !v.is_finite()) {
            return Err(Error::Parse("density values must be finite and nonnegative".into()));
        }
        let log_values = values.iter().map(|v| v.ln()).collect();
        let g = GridDensity { domain, axes, shape: shape.to_vec(), values, log_values, tower: OnceLock::new(), mean: OnceLock::new() };
        let mass = g.mass();
        if (mass - T::one()).abs() > T::lit(1e-6) {
            return Err(Error::Parse(format!("stored density has mass {mass}, expected 1")));
        }
        Ok(g)
    }

    fn assemble(domain: BoxDomain<T>, axes: Vec<Axis<T>>, shape: Vec<usize>, mut log_values: Vec<T>) -> Result<Self> {
        let top = log_values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(T::neg_infinity(), T::max);
        if !top.is_finite() {
            return Err(Error::MassUnderflow);
        }
        let mut values: Vec<T> = log_values.iter().map(|&l| (l - top).exp()).collect();
        let mut g = GridDensity { domain, axes, shape, values: Vec::new(), log_values: Vec::new(), tower: OnceLock::new(), mean: OnceLock::new() };
        let weights = g.node_weight_table();
        let mass = pairwise_sum(&values.iter().zip(&weights).map(|(&v, &w)| v * w).collect::<Vec<_>>());
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(Error::MassUnderflow);
        }
        let shift = top + mass.ln();
        for v in values.iter_mut() {
            *v = *v / mass;
        }
        for l in log_values.iter_mut() {
            *l = *l - shift;
        }
        g.values = values;
        g.log_values = log_values;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn domain(&self) -> &BoxDomain<T> {
        &self.domain
    }

    pub fn axes(&self) -> &[Axis<T>] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis<T> {
        &self.axes[i]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn log_values(&self) -> &[T] {
        &self.log_values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn unravel(&self, flat: usize, idx: &mut [usize]) {
        unravel(flat, &self.shape, idx)
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (&k, &m)| acc * m + k)
    }

    pub fn point(&self, idx: &[usize]) -> Vec<T> {
        idx.iter().zip(&self.axes).map(|(&k, a)| a.node(k)).collect()
    }

    pub fn node_weight(&self, idx: &[usize]) -> T {
        idx.iter().zip(&self.axes).fold(T::one(), |acc, (&k, a)| acc * a.weight(k))
    }

    fn node_weight_table(&self) -> Vec<T> {
        let n = self.dim();
        let total: usize = self.shape.iter().product();
        let mut idx = vec![0usize; n];
        (0..total)
            .map(|flat| {
                unravel(flat, &self.shape, &mut idx);
                self.node_weight(&idx)
            })
            .collect()
    }

    /// Trapezoid quadrature mass (1 up to rounding).
    pub fn mass(&self) -> T {
        self.integrate(|_, _| T::one())
    }

    /// `sum_nodes w(node) p(node) f(idx, x)`, skipping nodes of zero density.
    ///
    /// Parallel over the first axis with an order-fixed reduction, so the
    /// result does not depend on the thread count.
    pub fn integrate<F>(&self, f: F) -> T
    where
        F: Fn(&[usize], &[T]) -> T + Sync,
    {
        let n = self.dim();
        let inner = self.values.len() / self.shape[0];
        let partial: Vec<T> = (0..self.shape[0])
            .into_par_iter()
            .map(|i0| {
                let mut idx = vec![0usize; n];
                idx[0] = i0;
                let mut x = self.point(&idx);
                let mut acc = T::zero();
                for off in 0..inner {
                    let flat = i0 * inner + off;
                    if off > 0 {
                        advance(&mut idx, &self.shape, &self.axes, &mut x);
                    }
                    let v = self.values[flat];
                    if v > T::zero() {
                        acc = acc + self.node_weight(&idx) * v * f(&idx, &x);
                    }
                }
                acc
            })
            .collect();
        pairwise_sum(&partial)
    }

    pub fn expect<F>(&self, f: F) -> T
    where
        F: Fn(&[T]) -> T + Sync,
    {
        self.integrate(|_, x| f(x))
    }

    /// `int prod_i x_i^{p_i} dmu`.
    pub fn moments(&self, powers: &[u32]) -> Result<T> {
        if powers.len() != self.dim() {
            return Err(Error::DimMismatch { expected: self.dim(), got: powers.len() });
        }
        Ok(self.expect(|x| x.iter().zip(powers).fold(T::one(), |acc, (&v, &p)| acc * v.powi(p as i32))))
    }

    pub fn mean_vector(&self) -> Vec<T> {
        self.mean.get_or_init(|| (0..self.dim()).map(|i| self.expect(|x| x[i])).collect()).clone()
    }

    /// Mean of `(x_0, .., x_{len-1})`.
    pub fn mean_vector_prefix(&self, len: usize) -> Vec<T> {
        self.mean.get_or_init(|| (0..self.dim()).map(|i| self.expect(|x| x[i])).collect())[..len].to_vec()
    }

    /// Covariance matrix, row-major.
    pub fn covariance(&self) -> Vec<Vec<T>> {
        let m = self.mean_vector();
        let n = self.dim();
        let mut c = vec![vec![T::zero(); n]; n];
        for i in 0..n {
            for j in i..n {
                let v = self.expect(|x| (x[i] - m[i]) * (x[j] - m[j]));
                c[i][j] = v;
                c[j][i] = v;
            }
        }
        c
    }

    /// Density proportional to `exp(g(x)) p(x)`.
    pub fn reweight<F>(&self, g: F) -> Result<Self>
    where
        F: Fn(&[T]) -> T + Sync,
    {
        let n = self.dim();
        let logs: Vec<T> = (0..self.len())
            .into_par_iter()
            .map(|flat| {
                let mut idx = vec![0usize; n];
                unravel(flat, &self.shape, &mut idx);
                let l = self.log_values[flat];
                if l == T::neg_infinity() {
                    l
                } else {
                    l + g(&self.point(&idx))
                }
            })
            .collect();
        Self::assemble(self.domain.clone(), self.axes.clone(), self.shape.clone(), logs)
    }

    /// Exponential tilt `exp(theta . x) p(x)`, normalized.
    pub fn tilt(&self, theta: &[T]) -> Result<Self> {
        if theta.len() != self.dim() {
            return Err(Error::DimMismatch { expected: self.dim(), got: theta.len() });
        }
        self.reweight(|x| x.iter().zip(theta).fold(T::zero(), |a, (&u, &t)| a + u * t))
    }

    fn tower(&self) -> &Tower<T> {
        self.tower.get_or_init(|| {
            let n = self.dim();
            let mut levels: Vec<Vec<T>> = vec![Vec::new(); n];
            levels[n - 1] = self.values.clone();
            for a in (0..n - 1).rev() {
                let m = self.shape[a + 1];
                let w = self.axes[a + 1].weights();
                levels[a] = levels[a + 1]
                    .par_chunks(m)
                    .map(|row| row.iter().zip(&w).fold(T::zero(), |acc, (&v, &wk)| acc + v * wk))
                    .collect();
            }
            let cums = (0..n)
                .map(|a| {
                    let m = self.shape[a];
                    let h = self.axes[a].step();
                    let half = T::lit(0.5);
                    let mut out = vec![T::zero(); levels[a].len()];
                    out.par_chunks_mut(m).zip(levels[a].par_chunks(m)).for_each(|(c, row)| {
                        for k in 1..m {
                            c[k] = c[k - 1] + h * half * (row[k - 1] + row[k]);
                        }
                    });
                    out
                })
                .collect();
            Tower { levels, cums }
        })
    }

    /// Number of prefix nodes for conditioning axis `axis` (product of `shape[..axis]`).
    pub fn prefix_count(&self, axis: usize) -> usize {
        self.shape[..axis].iter().product()
    }

    /// Unnormalized marginal density of `(x_0..=x_axis)` on its subgrid, row-major.
    pub fn prefix_marginal(&self, axis: usize) -> &[T] {
        &self.tower().levels[axis]
    }

    /// Marginal density of `x_{<axis}` at the prefix node `row`.
    pub fn prefix_mass(&self, axis: usize, row: usize) -> T {
        let m = self.shape[axis];
        let c = &self.tower().cums[axis];
        c[row * m + m - 1]
    }

    /// Multilinear interpolation corners `(row, weight)` of an off-grid prefix.
    pub fn prefix_corners(&self, axis: usize, prefix: &[T]) -> Result<Vec<(usize, T)>> {
        if prefix.len() != axis {
            return Err(Error::DimMismatch { expected: axis, got: prefix.len() });
        }
        let mut cells = Vec::with_capacity(axis);
        for (j, &y) in prefix.iter().enumerate() {
            cells.push(self.axes[j].locate(y).ok_or(Error::OutOfSupport { axis: j })?);
        }
        let mut corners = Vec::with_capacity(1 << axis);
        'mask: for mask in 0..(1usize << axis) {
            let mut row = 0usize;
            let mut w = T::one();
            for (j, &(k, f)) in cells.iter().enumerate() {
                let bit = (mask >> j) & 1 == 1;
                let fw = if bit { f } else { T::one() - f };
                if fw == T::zero() {
                    continue 'mask;
                }
                w = w * fw;
                row = row * self.shape[j] + k + usize::from(bit);
            }
            corners.push((row, w));
        }
        Ok(corners)
    }

    /// Conditional law of `x_axis` given the prefix node `row` of `x_{<axis}`.
    pub fn conditional_law_at_node(&self, axis: usize, row: usize) -> Result<Law1D<T>> {
        let m = self.shape[axis];
        let data = &self.tower().levels[axis][row * m..(row + 1) * m];
        Law1D::from_unnormalized(self.axes[axis].clone(), data.to_vec(), axis)
    }

    /// Conditional law of `x_axis` given an arbitrary prefix; off-grid prefixes
    /// interpolate the prefix marginal multilinearly.
    pub fn conditional_law(&self, axis: usize, prefix: &[T]) -> Result<Law1D<T>> {
        let corners = self.prefix_corners(axis, prefix)?;
        let m = self.shape[axis];
        let level = &self.tower().levels[axis];
        let mut raw = vec![T::zero(); m];
        for &(row, w) in &corners {
            for (acc, &v) in raw.iter_mut().zip(&level[row * m..(row + 1) * m]) {
                *acc = *acc + w * v;
            }
        }
        Law1D::from_unnormalized(self.axes[axis].clone(), raw, axis)
    }

    /// Conditional quantile `F^{-1}(u | prefix)` without materializing the law.
    pub fn conditional_quantile(&self, axis: usize, prefix: &[T], u: T) -> Result<T> {
        let corners = self.prefix_corners(axis, prefix)?;
        let m = self.shape[axis];
        let cums = &self.tower().cums[axis];
        let cum_at = |k: usize| corners.iter().fold(T::zero(), |acc, &(row, w)| acc + w * cums[row * m + k]);
        let total = cum_at(m - 1);
        if !(total > T::tiny()) {
            return Err(Error::ZeroMassSlice { axis });
        }
        let target = u * total;
        let (mut lo, mut hi) = (0usize, m - 1);
        if cum_at(0) >= target {
            return Ok(self.axes[axis].node(0));
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if cum_at(mid) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let (ca, cb) = (cum_at(lo), cum_at(hi));
        let f = if cb > ca { ((target - ca) / (cb - ca)).min(T::one()) } else { T::one() };
        let ax = &self.axes[axis];
        Ok(ax.node(lo) + (ax.node(hi) - ax.node(lo)) * f)
    }

    /// One-dimensional conditional density given values of a coordinate prefix.
    ///
    /// `fixed` must name exactly the axes `0..i` for some `i < dim`.
    pub fn conditional_slice(&self, fixed: &[(usize, T)]) -> Result<GridDensity<T>> {
        let mut sorted = fixed.to_vec();
        sorted.sort_by_key(|&(a, _)| a);
        for (expect, &(a, _)) in sorted.iter().enumerate() {
            if a != expect {
                return Err(Error::NotPrefix(format!("axis {a} fixed without axis {expect}")));
            }
        }
        let axis = sorted.len();
        if axis >= self.dim() {
            return Err(Error::NotPrefix("every axis fixed; nothing left to condition".into()));
        }
        let prefix: Vec<T> = sorted.iter().map(|&(_, v)| v).collect();
        let law = self.conditional_law(axis, &prefix)?;
        GridDensity::from_law1d(&law)
    }

    /// Marginal of the first coordinate.
    pub fn first_marginal(&self) -> Result<Law1D<T>> {
        self.conditional_law_at_node(0, 0)
    }

    pub fn from_law1d(law: &Law1D<T>) -> Result<GridDensity<T>> {
        let ax = law.axis().clone();
        let domain = BoxDomain::new(vec![ax.lo()], vec![ax.hi()])?;
        GridDensity::from_values(domain, &[ax.len()], law.density().to_vec())
    }

    /// This density as a [`Law1D`]; only for `dim == 1`.
    pub fn law1d(&self) -> Result<Law1D<T>> {
        if self.dim() != 1 {
            return Err(Error::DimMismatch { expected: 1, got: self.dim() });
        }
        Law1D::from_unnormalized(self.axes[0].clone(), self.values.clone(), 0)
    }

    /// Pushes point masses onto a grid by multilinear (cloud-in-cell) splitting.
    ///
    /// Each mass goes to the `2^n` nodes of the cell containing its point with
    /// linear weights, so total mass is conserved exactly; points outside the
    /// box are clamped to it.
    pub fn rebin<I>(domain: BoxDomain<T>, shape: &[usize], masses: I) -> Result<GridDensity<T>>
    where
        I: IntoIterator<Item = (Vec<T>, T)>,
    {
        let axes = domain.axes(shape)?;
        let total = validate_shape(shape, 2)?;
        let n = shape.len();
        let mut acc = vec![T::zero(); total];
        let mut cells = vec![(0usize, T::zero()); n];
        for (x, q) in masses {
            if !(q > T::zero()) {
                continue;
            }
            for j in 0..n {
                let xj = x[j].max(axes[j].lo()).min(axes[j].hi());
                cells[j] = axes[j].locate(xj).expect("clamped");
            }
            for mask in 0..(1usize << n) {
                let mut flat = 0usize;
                let mut w = q;
                for (j, &(k, f)) in cells.iter().enumerate() {
                    let bit = (mask >> j) & 1 == 1;
                    w = w * if bit { f } else { T::one() - f };
                    flat = flat * shape[j] + k + usize::from(bit);
                }
                if w > T::zero() {
                    acc[flat] = acc[flat] + w;
                }
            }
        }
        let mut idx = vec![0usize; n];
        for (flat, a) in acc.iter_mut().enumerate() {
            unravel(flat, shape, &mut idx);
            let w = idx.iter().zip(&axes).fold(T::one(), |p, (&k, ax)| p * ax.weight(k));
            *a = *a / w;
        }
        GridDensity::from_values(domain, shape, acc)
    }

    /// Total-variation distance `1/2 int |p - q|` on a common grid.
    pub fn total_variation(&self, other: &GridDensity<T>) -> Result<T> {
        if self.shape != other.shape || self.domain != other.domain {
            return Err(Error::InvalidShape("total variation needs a common grid".into()));
        }
        let n = self.dim();
        let mut idx = vec![0usize; n];
        let terms: Vec<T> = (0..self.len())
            .map(|flat| {
                unravel(flat, &self.shape, &mut idx);
                self.node_weight(&idx) * (self.values[flat] - other.values[flat]).abs()
            })
            .collect();
        Ok(pairwise_sum(&terms) / T::lit(2.0))
    }

    /// Largest discrete second difference of `log_values` along grid lines
    /// (over triples of finite values). Nonpositive up to rounding for
    /// log-concave densities.
    pub fn log_concavity_defect(&self) -> T {
        let n = self.dim();
        let mut worst = T::neg_infinity();
        let mut idx = vec![0usize; n];
        for flat in 0..self.len() {
            unravel(flat, &self.shape, &mut idx);
            for a in 0..n {
                if idx[a] == 0 || idx[a] + 1 >= self.shape[a] {
                    continue;
                }
                let stride: usize = self.shape[a + 1..].iter().product();
                let (l, c, r) = (self.log_values[flat - stride], self.log_values[flat], self.log_values[flat + stride]);
                if l.is_finite() && c.is_finite() && r.is_finite() {
                    let scale = T::one() + l.abs().max(c.abs()).max(r.abs());
                    worst = worst.max((l - c - c + r) / scale);
                }
            }
        }
        worst
    }

    /// Short content hash of the grid, box and values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for &m in &self.shape {
            h.update((m as u64).to_le_bytes());
        }
        for (&a, &b) in self.domain.lo().iter().zip(self.domain.hi()) {
            h.update(a.f64().to_le_bytes());
            h.update(b.f64().to_le_bytes());
        }
        for &v in &self.values {
            h.update(v.f64().to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Row-major multi-index of `flat`.
pub(crate) fn unravel(mut flat: usize, shape: &[usize], idx: &mut [usize]) {
    for a in (0..shape.len()).rev() {
        idx[a] = flat % shape[a];
        flat /= shape[a];
    }
}

/// Odometer step of a row-major index, keeping the coordinates in sync.
fn advance<T: Real>(idx: &mut [usize], shape: &[usize], axes: &[Axis<T>], x: &mut [T]) {
    for a in (0..shape.len()).rev() {
        idx[a] += 1;
        if idx[a] < shape[a] {
            x[a] = axes[a].node(idx[a]);
            return;
        }
        idx[a] = 0;
        x[a] = axes[a].node(0);
    }
}
