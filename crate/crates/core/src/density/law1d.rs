//! Normalized one-dimensional nodal densities.
//!
//! The density is stored at the nodes of an [`Axis`] and integrated with the
//! trapezoid rule. The cumulative table holds the trapezoid mass of each
//! prefix of cells; between nodes the CDF is linear, so the quantile function
//! is exact inversion of that piecewise-linear CDF.

use super::domain::Axis;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Law1D<T> {
    axis: Axis<T>,
    density: Vec<T>,
    cdf: Vec<T>,
    /// Survival table accumulated from the right, so the upper tail keeps
    /// full relative precision.
    sf: Vec<T>,
}

impl<T: Real> Law1D<T> {
    /// Normalizes a nonnegative nodal density. `axis` identifies the conditional
    /// axis for the error payload only.
    pub fn from_unnormalized(grid: Axis<T>, raw: Vec<T>, axis: usize) -> Result<Self> {
        assert_eq!(grid.len(), raw.len(), "density length must match axis");
        let h = grid.step();
        let half = T::lit(0.5);
        let mut cdf = Vec::with_capacity(raw.len());
        let mut acc = T::zero();
        cdf.push(acc);
        for k in 1..raw.len() {
            acc = acc + h * half * (raw[k - 1] + raw[k]);
            cdf.push(acc);
        }
        if !(acc > T::tiny()) || !acc.is_finite() {
            return Err(Error::ZeroMassSlice { axis });
        }
        let density: Vec<T> = raw.into_iter().map(|v| v / acc).collect();
        for c in cdf.iter_mut() {
            *c = *c / acc;
        }
        let last = cdf.len() - 1;
        cdf[last] = T::one();
        let mut sf = vec![T::zero(); cdf.len()];
        for k in (0..last).rev() {
            sf[k] = sf[k + 1] + h * half * (density[k] + density[k + 1]);
        }
        let top = sf[0];
        for v in sf.iter_mut() {
            *v = *v / top;
        }
        Ok(Law1D { axis: grid, density, cdf, sf })
    }

    pub fn axis(&self) -> &Axis<T> {
        &self.axis
    }

    pub fn density(&self) -> &[T] {
        &self.density
    }

    pub fn cdf_table(&self) -> &[T] {
        &self.cdf
    }

    /// `F(x) = mass of (-inf, x]`.
    pub fn cdf(&self, x: T) -> T {
        if x <= self.axis.lo() {
            return T::zero();
        }
        if x >= self.axis.hi() {
            return T::one();
        }
        let (k, f) = self.axis.locate(x).expect("inside axis");
        self.cdf[k] + (self.cdf[k + 1] - self.cdf[k]) * f
    }

    /// `1 - F(x)`, accurate in the upper tail.
    pub fn sf(&self, x: T) -> T {
        if x <= self.axis.lo() {
            return T::one();
        }
        if x >= self.axis.hi() {
            return T::zero();
        }
        let (k, f) = self.axis.locate(x).expect("inside axis");
        self.sf[k] + (self.sf[k + 1] - self.sf[k]) * f
    }

    pub fn sf_table(&self) -> &[T] {
        &self.sf
    }

    /// `inf { x : 1 - F(x) <= s }`, the quantile at level `1 - s` computed
    /// from the survival table.
    pub fn quantile_sf(&self, s: T) -> T {
        if s >= T::one() {
            return self.quantile(T::zero());
        }
        let k = self.sf.partition_point(|&v| v > s);
        if k == 0 {
            return self.axis.lo();
        }
        if k >= self.sf.len() {
            return self.axis.hi();
        }
        let (a, b) = (self.axis.node(k - 1), self.axis.node(k));
        let (sa, sb) = (self.sf[k - 1], self.sf[k]);
        let f = ((sa - s) / (sa - sb)).min(T::one());
        a + (b - a) * f
    }

    /// Monotone transport of `u` to `target`: `F_target^{-1}(F_self(u))`,
    /// evaluated through survival functions in the upper half.
    pub fn transport(&self, target: &Law1D<T>, u: T) -> T {
        let t = self.cdf(u);
        if t <= T::lit(0.5) {
            target.quantile(t)
        } else {
            target.quantile_sf(self.sf(u))
        }
    }

    /// [`Law1D::transport`] at the `k`-th node.
    pub fn transport_node(&self, target: &Law1D<T>, k: usize) -> T {
        let t = self.cdf[k];
        if t <= T::lit(0.5) {
            target.quantile(t)
        } else {
            target.quantile_sf(self.sf[k])
        }
    }

    /// `inf { x : F(x) >= t }`; for `t <= 0` the left end of the support.
    pub fn quantile(&self, t: T) -> T {
        let m = self.cdf.len();
        if t <= T::zero() {
            let k = self.cdf.partition_point(|&c| c <= T::zero());
            return self.axis.node(k.saturating_sub(1));
        }
        let k = self.cdf.partition_point(|&c| c < t);
        if k >= m {
            return self.axis.hi();
        }
        let (a, b) = (self.axis.node(k - 1), self.axis.node(k));
        let (ca, cb) = (self.cdf[k - 1], self.cdf[k]);
        let f = ((t - ca) / (cb - ca)).min(T::one());
        a + (b - a) * f
    }

    /// Linear interpolation of the nodal density; zero outside the axis.
    pub fn density_at(&self, x: T) -> T {
        match self.axis.locate(x) {
            Some((k, f)) => self.density[k] * (T::one() - f) + self.density[k + 1] * f,
            None => T::zero(),
        }
    }

    pub fn expect<F: Fn(T) -> T>(&self, f: F) -> T {
        let mut acc = T::zero();
        for (k, &d) in self.density.iter().enumerate() {
            if d > T::zero() {
                acc = acc + self.axis.weight(k) * d * f(self.axis.node(k));
            }
        }
        acc
    }

    pub fn mean(&self) -> T {
        self.expect(|x| x)
    }

    /// Centered second moment.
    pub fn variance(&self) -> T {
        let m = self.mean();
        self.expect(|x| (x - m) * (x - m)).max(T::zero())
    }

    pub fn moment(&self, p: i32) -> T {
        self.expect(|x| x.powi(p))
    }

    /// Indices of the first and last nodes carrying positive density.
    pub fn support_nodes(&self) -> (usize, usize) {
        let first = self.density.iter().position(|&d| d > T::zero()).unwrap_or(0);
        let last = self.density.iter().rposition(|&d| d > T::zero()).unwrap_or(self.density.len() - 1);
        (first, last)
    }

    pub fn max_density(&self) -> T {
        self.density.iter().fold(T::zero(), |a, &b| a.max(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(lo: f64, hi: f64, m: usize) -> Law1D<f64> {
        Law1D::from_unnormalized(Axis::new(lo, hi, m).unwrap(), vec![1.0; m], 0).unwrap()
    }

    #[test]
    fn uniform_quantile_is_linear() {
        let u = uniform(0.0, 2.0, 65);
        for &t in &[0.1, 0.25, 0.5, 0.9] {
            assert!((u.quantile(t) - 2.0 * t).abs() < 1e-12);
            assert!((u.cdf(2.0 * t) - t).abs() < 1e-12);
        }
        assert!((u.mean() - 1.0).abs() < 1e-12);
        assert!((u.variance() - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn quantile_zero_is_left_end_of_support() {
        let ax = Axis::new(0.0f64, 1.0, 11).unwrap();
        let mut raw = vec![0.0; 11];
        for v in raw.iter_mut().skip(4) {
            *v = 1.0;
        }
        let law = Law1D::from_unnormalized(ax, raw, 0).unwrap();
        assert!((law.quantile(0.0) - 0.3).abs() < 1e-12);
        assert_eq!(law.quantile(1.0), 1.0);
        assert_eq!(law.support_nodes(), (4, 10));
    }

    #[test]
    fn survival_quantile_matches_cdf_quantile() {
        let ax = Axis::new(-10.0f64, 10.0, 2001).unwrap();
        let raw: Vec<f64> = ax.nodes().iter().map(|x| (-x * x / 2.0).exp()).collect();
        let law = Law1D::from_unnormalized(ax, raw, 0).unwrap();
        for &t in &[0.6, 0.75, 0.9, 0.999] {
            assert!((law.quantile(t) - law.quantile_sf(1.0 - t)).abs() < 1e-9);
        }
        // deep upper tail resolved through the survival table
        let x = law.quantile_sf(1e-20);
        assert!((x - 9.262).abs() < 0.01, "{x}");
        assert!((law.transport(&law, 8.5) - 8.5).abs() < 1e-9);
    }

    #[test]
    fn zero_mass_rejected() {
        let ax = Axis::new(0.0f64, 1.0, 8).unwrap();
        assert!(matches!(
            Law1D::from_unnormalized(ax, vec![0.0; 8], 3),
            Err(Error::ZeroMassSlice { axis: 3 })
        ));
    }
}
