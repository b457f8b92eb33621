//! Knothe-Rosenblatt triangular maps between grid densities.
//!
//! `T_1` is the monotone map between first marginals; `T_i(x)` is the
//! monotone map from the source conditional law of `x_i` given `x_{<i}` to
//! the target conditional law given the image prefix `T_{<i}(x)`. Slices at
//! source prefix nodes are memoized in write-once cells.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::density::{Axis, GridDensity, Law1D};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::transport_1d::MonotoneMap1D;

/// Relative density below which a point counts as outside the support.
pub const SUPPORT_FLOOR: f64 = 1e-300;

/// One coordinate of the map at a fixed source prefix.
#[derive(Debug, Clone)]
pub struct Slice<T> {
    pub source: Law1D<T>,
    pub target: Law1D<T>,
    /// `T_{<i}` at the source prefix.
    pub image_prefix: Vec<T>,
    /// `E[T_i(X) | X_{<i} = prefix]` under the source conditional law.
    pub image_mean: T,
}

impl<T: Real> Slice<T> {
    fn new(source: Law1D<T>, target: Law1D<T>, image_prefix: Vec<T>) -> Self {
        let image_mean = source.expect(|u| source.transport(&target, u));
        Slice { source, target, image_prefix, image_mean }
    }

    pub fn map(&self, u: T) -> T {
        self.source.transport(&self.target, u)
    }

    pub fn monotone_map(&self) -> MonotoneMap1D<T> {
        MonotoneMap1D::between(&self.source, &self.target)
    }
}

/// Image of one positive-mass source node.
#[derive(Debug, Clone)]
pub struct NodeImage<T> {
    pub flat: usize,
    /// Quadrature mass `w(node) p(node)`.
    pub mass: T,
    pub x: Vec<T>,
    pub tx: Vec<T>,
    pub jacobian: Vec<T>,
    /// `E[T_i | X_{<i}]` for each `i` at this node's prefixes.
    pub image_means: Vec<T>,
}

/// Triangular map pushing `mu` to `nu`.
#[derive(Debug)]
pub struct KnotheMap<T> {
    mu: GridDensity<T>,
    nu: GridDensity<T>,
    slices: Vec<Vec<OnceLock<Result<Slice<T>>>>>,
}

/// Index `k` when `x` is exactly the `k`-th node.
fn node_index<T: Real>(axis: &Axis<T>, x: T) -> Option<usize> {
    let k = axis.nearest(x);
    (axis.node(k) == x).then_some(k)
}

/// Conditional law of `g` at `prefix`; a zero-mass prefix on the boundary of
/// the support is replaced by its limit from the direction of the mean.
pub(crate) fn limit_conditional_law<T: Real>(g: &GridDensity<T>, axis: usize, prefix: &[T]) -> Result<Law1D<T>> {
    match g.conditional_law(axis, prefix) {
        Err(Error::ZeroMassSlice { .. }) if axis > 0 => {
            let mean = g.mean_vector_prefix(axis);
            let eps = T::lit(1e-6);
            let nudged: Vec<T> = prefix.iter().zip(&mean).map(|(&p, &m)| p + (m - p) * eps).collect();
            g.conditional_law(axis, &nudged).map_err(|_| Error::ZeroMassSlice { axis })
        }
        other => other,
    }
}

impl<T: Real> KnotheMap<T> {
    pub fn new(mu: &GridDensity<T>, nu: &GridDensity<T>) -> Result<Self> {
        if mu.dim() != nu.dim() {
            return Err(Error::DimMismatch { expected: mu.dim(), got: nu.dim() });
        }
        let slices = (0..mu.dim())
            .map(|i| (0..mu.prefix_count(i)).map(|_| OnceLock::new()).collect())
            .collect();
        let map = KnotheMap { mu: mu.clone(), nu: nu.clone(), slices };
        map.slice_at_node(0, 0)?;
        Ok(map)
    }

    pub fn dim(&self) -> usize {
        self.mu.dim()
    }

    pub fn source(&self) -> &GridDensity<T> {
        &self.mu
    }

    pub fn target(&self) -> &GridDensity<T> {
        &self.nu
    }

    /// Memoized slice for axis `i` at the source prefix node `row`.
    pub fn slice_at_node(&self, i: usize, row: usize) -> Result<&Slice<T>> {
        self.slices[i][row]
            .get_or_init(|| {
                let source = self
                    .mu
                    .conditional_law_at_node(i, row)
                    .map_err(|_| Error::OutOfSupport { axis: i })?;
                let mut idx = vec![0usize; i];
                let mut r = row;
                for a in (0..i).rev() {
                    idx[a] = r % self.mu.shape()[a];
                    r /= self.mu.shape()[a];
                }
                let prefix: Vec<T> = idx.iter().enumerate().map(|(a, &k)| self.mu.axis(a).node(k)).collect();
                let image_prefix = self.image_of_prefix(&prefix)?;
                let target = limit_conditional_law(&self.nu, i, &image_prefix)?;
                Ok(Slice::new(source, target, image_prefix))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `T_{<i}(prefix)` for `i = prefix.len()`.
    fn image_of_prefix(&self, prefix: &[T]) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(prefix.len());
        for j in 0..prefix.len() {
            let s = self.slice(j, &prefix[..j], &out)?;
            out.push(s.map(prefix[j]));
        }
        Ok(out)
    }

    /// Slice for axis `i` at an arbitrary prefix whose image is `image`.
    fn slice(&self, i: usize, prefix: &[T], image: &[T]) -> Result<std::borrow::Cow<'_, Slice<T>>> {
        let mut row = 0usize;
        let mut on_grid = true;
        for (a, &x) in prefix.iter().enumerate() {
            match node_index(self.mu.axis(a), x) {
                Some(k) => row = row * self.mu.shape()[a] + k,
                None => {
                    on_grid = false;
                    break;
                }
            }
        }
        if on_grid {
            return self.slice_at_node(i, row).map(std::borrow::Cow::Borrowed);
        }
        let source = self.mu.conditional_law(i, prefix).map_err(|e| match e {
            Error::ZeroMassSlice { axis } => Error::OutOfSupport { axis },
            e => e,
        })?;
        let target = limit_conditional_law(&self.nu, i, image)?;
        Ok(std::borrow::Cow::Owned(Slice::new(source, target, image.to_vec())))
    }

    /// `T(x)`.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_point(x)?;
        let mut tx = self.image_of_prefix(&x[..x.len() - 1])?;
        let last = x.len() - 1;
        let s = self.slice(last, &x[..last], &tx)?;
        tx.push(s.map(x[last]));
        Ok(tx)
    }

    fn check_point(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimMismatch { expected: self.dim(), got: x.len() });
        }
        for (a, &v) in x.iter().enumerate() {
            let ax = self.mu.axis(a);
            if !(v >= ax.lo() && v <= ax.hi()) {
                return Err(Error::OutOfSupport { axis: a });
            }
        }
        Ok(())
    }

    /// `d T_i / d x_i` for one slice at `u`, by the density ratio.
    ///
    /// The half-cell difference quotient of the map serves as a fallback
    /// when the target density is below the support floor, and as a
    /// resolution check: when the two disagree by more than a factor 2 the
    /// map varies too fast within the cell for a pointwise ratio to be a
    /// useful quadrature value, and the quotient is used instead. A quotient
    /// that rounds to zero (the map saturates in floating point deep in a
    /// tail) is not a resolution signal, and the ratio is kept.
    fn slice_derivative(&self, i: usize, s: &Slice<T>, u: T) -> Result<T> {
        let floor = T::lit(SUPPORT_FLOOR);
        let ps = s.source.density_at(u);
        if !(ps > floor * s.source.max_density()) {
            return Err(Error::OutOfSupport { axis: i });
        }
        let ax = s.source.axis();
        let h = ax.step() / T::lit(2.0);
        let (a, b) = ((u - h).max(ax.lo()), (u + h).min(ax.hi()));
        let quotient = (s.map(b) - s.map(a)) / (b - a);
        let pt = s.target.density_at(s.map(u));
        let two = T::lit(2.0);
        let d = if pt > floor * s.target.max_density() {
            let ratio = ps / pt;
            if !(quotient > T::tiny()) || (ratio <= two * quotient && quotient <= two * ratio) {
                ratio
            } else {
                quotient
            }
        } else {
            quotient
        };
        if !(d > T::tiny()) || !d.is_finite() {
            return Err(Error::DegenerateJacobian { axis: i });
        }
        Ok(d)
    }

    /// Diagonal entries `d_i T_i(x)`.
    pub fn diag_jacobian(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_point(x)?;
        let mut tx = Vec::with_capacity(x.len());
        let mut jac = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let s = self.slice(i, &x[..i], &tx)?;
            jac.push(self.slice_derivative(i, &s, x[i])?);
            tx.push(s.map(x[i]));
        }
        Ok(jac)
    }

    /// Images, Jacobians and conditional image means at every positive-mass
    /// source node, in row-major order.
    pub fn node_images(&self) -> Result<Vec<NodeImage<T>>> {
        let n = self.dim();
        let shape = self.mu.shape().to_vec();
        let vals = self.mu.values();
        let flats: Vec<usize> = (0..vals.len()).filter(|&f| vals[f] > T::zero()).collect();
        flats
            .par_iter()
            .map(|&flat| {
                let mut idx = vec![0usize; n];
                self.mu.unravel(flat, &mut idx);
                let x = self.mu.point(&idx);
                let mut tx = Vec::with_capacity(n);
                let mut jac = Vec::with_capacity(n);
                let mut means = Vec::with_capacity(n);
                let mut row = 0usize;
                for i in 0..n {
                    let s = self.slice_at_node(i, row)?;
                    jac.push(self.slice_derivative(i, s, x[i])?);
                    tx.push(s.map(x[i]));
                    means.push(s.image_mean);
                    row = row * shape[i] + idx[i];
                }
                Ok(NodeImage { flat, mass: self.mu.node_weight(&idx) * vals[flat], x, tx, jacobian: jac, image_means: means })
            })
            .collect()
    }
}

/// Builds the Knothe map from `mu` to `nu`.
pub fn build_knothe<T: Real>(mu: &GridDensity<T>, nu: &GridDensity<T>) -> Result<KnotheMap<T>> {
    KnotheMap::new(mu, nu)
}

/// `D(nu || mu) >= int sum_i (d_i T_i - 1 - log d_i T_i) dmu` with `T` the
/// Knothe map from `mu` to `nu`. Returns `(bound, entropy, entropy - bound)`.
pub fn entropy_lower_bound<T: Real>(mu: &GridDensity<T>, nu: &GridDensity<T>) -> Result<(T, T, T)> {
    let entropy = crate::costs::relative_entropy(nu, mu)?;
    if entropy == T::infinity() {
        return Err(Error::AbsoluteContinuityViolated);
    }
    let map = KnotheMap::new(mu, nu)?;
    let terms: Vec<T> = map
        .node_images()?
        .iter()
        .map(|im| im.mass * im.jacobian.iter().fold(T::zero(), |acc, &j| acc + (j - T::one() - j.ln())))
        .collect();
    let bound = crate::scalar::pairwise_sum(&terms);
    Ok((bound, entropy, entropy - bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{BoxDomain, Potential, Smoothness};

    fn gauss2(rho: f64, shift: [f64; 2], m: usize) -> GridDensity<f64> {
        let d = BoxDomain::cube(2, 8.0).unwrap();
        let det = 1.0 - rho * rho;
        let p = Potential::new(d, Smoothness::C1, move |x: &[f64]| {
            let (a, b) = (x[0] - shift[0], x[1] - shift[1]);
            (a * a - 2.0 * rho * a * b + b * b) / (2.0 * det)
        });
        GridDensity::build(&p, &[m, m]).unwrap()
    }

    fn gauss1(var: f64, mean: f64, r: f64, m: usize) -> GridDensity<f64> {
        let p = Potential::new(BoxDomain::cube(1, r).unwrap(), Smoothness::C1, move |x: &[f64]| {
            (x[0] - mean).powi(2) / (2.0 * var)
        });
        GridDensity::build(&p, &[m]).unwrap()
    }

    #[test]
    fn identity_has_unit_jacobian() {
        let g = gauss2(0.3, [0.0, 0.0], 129);
        let t = build_knothe(&g, &g).unwrap();
        for x in [[0.0, 0.0], [1.0, -0.5], [-1.3, 0.4]] {
            let tx = t.apply(&x).unwrap();
            assert!((tx[0] - x[0]).abs() < 0.13 && (tx[1] - x[1]).abs() < 0.13);
            for j in t.diag_jacobian(&x).unwrap() {
                assert!((j - 1.0).abs() < 1e-2, "{j}");
            }
        }
    }

    #[test]
    fn translation() {
        let mu = gauss2(0.0, [0.0, 0.0], 257);
        let nu = gauss2(0.0, [1.0, 0.0], 257);
        let t = build_knothe(&mu, &nu).unwrap();
        let h = mu.axis(0).step();
        for x in [[0.0, 0.0], [1.0, -1.0], [-1.5, 2.0]] {
            let tx = t.apply(&x).unwrap();
            assert!((tx[0] - x[0] - 1.0).abs() <= h && (tx[1] - x[1]).abs() <= h);
        }
    }

    #[test]
    fn triangular_and_memoized() {
        let mu = gauss2(0.0, [0.0, 0.0], 65);
        let nu = gauss2(0.5, [0.0, 0.0], 65);
        let t = build_knothe(&mu, &nu).unwrap();
        let a = t.apply(&[0.3, -1.0]).unwrap();
        let b = t.apply(&[0.3, 2.0]).unwrap();
        assert_eq!(a[0], b[0]);
        let node = mu.axis(0).node(40);
        let s1 = t.slice_at_node(1, 40).unwrap() as *const Slice<f64>;
        let s2 = t.slice_at_node(1, 40).unwrap() as *const Slice<f64>;
        assert_eq!(s1, s2);
        assert_eq!(t.slice_at_node(1, 40).unwrap().image_prefix, t.apply(&[node, 0.0]).unwrap()[..1].to_vec());
    }

    #[test]
    fn product_slices_do_not_depend_on_prefix() {
        let mu = gauss2(0.0, [0.0, 0.0], 65);
        let nu = gauss2(0.0, [0.5, -0.5], 65);
        let t = build_knothe(&mu, &nu).unwrap();
        let a = t.slice_at_node(1, 20).unwrap().monotone_map();
        let b = t.slice_at_node(1, 45).unwrap().monotone_map();
        for (u, v) in a.values().iter().zip(b.values()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn one_dim_jacobians() {
        let mu = gauss1(1.0, 0.0, 10.0, 2001);
        let nu = gauss1(0.25, 0.0, 10.0, 2001);
        let t = build_knothe(&mu, &nu).unwrap();
        for x in [-1.5, -0.2, 0.0, 0.9, 1.6] {
            assert!((t.diag_jacobian(&[x]).unwrap()[0] - 0.5).abs() < 1e-4);
        }
        let u1 = GridDensity::build(
            &Potential::new(BoxDomain::new(vec![0.0], vec![1.0]).unwrap(), Smoothness::C1, |_: &[f64]| 0.0),
            &[101],
        )
        .unwrap();
        let u2 = GridDensity::build(
            &Potential::new(BoxDomain::new(vec![0.0], vec![2.0]).unwrap(), Smoothness::C1, |_: &[f64]| 0.0),
            &[101],
        )
        .unwrap();
        let t = build_knothe(&u1, &u2).unwrap();
        for x in [0.0, 0.25, 0.5, 0.99, 1.0] {
            assert!((t.diag_jacobian(&[x]).unwrap()[0] - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn entropy_bound_examples() {
        let mu = gauss1(1.0, 0.0, 10.0, 2001);
        let (b, e, m) = entropy_lower_bound(&mu, &mu).unwrap();
        assert!(b.abs() < 1e-8 && e.abs() < 1e-8 && m.abs() < 1e-8);
        let nu = gauss1(1.0, 1.0, 10.0, 2001);
        let (b, e, _) = entropy_lower_bound(&mu, &nu).unwrap();
        assert!(b.abs() < 1e-4 && (e - 0.5).abs() < 1e-4, "{b} {e}");
        let nu = gauss1(0.25, 0.0, 10.0, 2001);
        let (b, e, m) = entropy_lower_bound(&mu, &nu).unwrap();
        let want_b = 0.5 - 1.0 - 0.5f64.ln();
        let want_e = (0.25 - 1.0 - 0.25f64.ln()) / 2.0;
        assert!((b - want_b).abs() < 1e-4 && (e - want_e).abs() < 1e-4, "{b} {e}");
        assert!((m - (want_e - want_b)).abs() < 2e-4);
    }

    #[test]
    fn absolute_continuity_is_required() {
        let d = BoxDomain::cube(1, 2.0).unwrap();
        let mu = GridDensity::build(
            &Potential::new(d.clone(), Smoothness::Nonsmooth, |x: &[f64]| if x[0] < 0.0 { 0.0 } else { f64::INFINITY }),
            &[41],
        )
        .unwrap();
        let nu = GridDensity::build(&Potential::new(d, Smoothness::C1, |_: &[f64]| 0.0), &[41]).unwrap();
        assert!(matches!(entropy_lower_bound(&mu, &nu), Err(Error::AbsoluteContinuityViolated)));
    }
}
