use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform node set `lo, lo + h, ..., hi` on one coordinate axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis<T> {
    lo: T,
    hi: T,
    len: usize,
}

impl<T: Real> Axis<T> {
    pub fn new(lo: T, hi: T, len: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidBox(format!("axis bounds [{lo}, {hi}]")));
        }
        if len < 2 {
            return Err(Error::InvalidShape(format!("axis needs at least 2 nodes, got {len}")));
        }
        Ok(Axis { lo, hi, len })
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn step(&self) -> T {
        (self.hi - self.lo) / T::from_usize_lossy(self.len - 1)
    }

    #[inline]
    pub fn node(&self, k: usize) -> T {
        if k + 1 == self.len {
            return self.hi;
        }
        self.lo + self.step() * T::from_usize_lossy(k)
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.len).map(|k| self.node(k)).collect()
    }

    /// Trapezoid weight of node `k`.
    #[inline]
    pub fn weight(&self, k: usize) -> T {
        let h = self.step();
        if k == 0 || k + 1 == self.len {
            h / T::lit(2.0)
        } else {
            h
        }
    }

    pub fn weights(&self) -> Vec<T> {
        (0..self.len).map(|k| self.weight(k)).collect()
    }

    /// Cell index `k` and fraction `f` in `[0, 1]` with `x = node(k) + f h`.
    /// `None` when `x` lies outside `[lo, hi]`.
    pub fn locate(&self, x: T) -> Option<(usize, T)> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        let h = self.step();
        let pos = (x - self.lo) / h;
        let mut k = pos.floor().to_usize().unwrap_or(0);
        if k >= self.len - 1 {
            k = self.len - 2;
        }
        let f = (pos - T::from_usize_lossy(k)).max(T::zero()).min(T::one());
        Some((k, f))
    }

    /// Index of the node closest to `x` (clamped to the axis).
    pub fn nearest(&self, x: T) -> usize {
        let pos = ((x - self.lo) / self.step()).round();
        if pos <= T::zero() {
            0
        } else {
            pos.to_usize().unwrap_or(self.len - 1).min(self.len - 1)
        }
    }
}

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_n, hi_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain<T> {
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> BoxDomain<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::InvalidBox("dimension must be at least 1".into()));
        }
        if lo.len() != hi.len() {
            return Err(Error::DimMismatch { expected: lo.len(), got: hi.len() });
        }
        for (i, (&a, &b)) in lo.iter().zip(&hi).enumerate() {
            if !(a < b) || !a.is_finite() || !b.is_finite() {
                return Err(Error::InvalidBox(format!("axis {i}: [{a}, {b}]")));
            }
        }
        Ok(BoxDomain { lo, hi })
    }

    /// Cube `[-r, r]^dim`.
    pub fn cube(dim: usize, r: T) -> Result<Self> {
        Self::new(vec![-r; dim], vec![r; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[T] {
        &self.lo
    }

    pub fn hi(&self) -> &[T] {
        &self.hi
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&v, (&a, &b))| v >= a && v <= b)
    }

    pub fn center(&self) -> Vec<T> {
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| (a + b) / T::lit(2.0)).collect()
    }

    pub fn axes(&self, shape: &[usize]) -> Result<Vec<Axis<T>>> {
        if shape.len() != self.dim() {
            return Err(Error::DimMismatch { expected: self.dim(), got: shape.len() });
        }
        (0..self.dim()).map(|i| Axis::new(self.lo[i], self.hi[i], shape[i])).collect()
    }
}
