use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub type PotentialFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    C1,
    Nonsmooth,
}

/// Number of random pairs drawn by [`Potential::audit_convexity`].
pub const AUDIT_PAIRS: usize = 1000;
/// Midpoint slack accepted by the audit.
pub const AUDIT_TOL: f64 = 1e-9;
const AUDIT_SEED: u64 = 0x6c63_6c61_625f_6175;

/// Convex potential `V` on a box; the density is proportional to `exp(-V)`.
///
/// `V` may return `+inf` to encode the indicator of a convex subset.
#[derive(Clone)]
pub struct Potential<T> {
    domain: BoxDomain<T>,
    eval: PotentialFn<T>,
    smoothness: Smoothness,
}

impl<T: fmt::Debug> fmt::Debug for Potential<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("domain", &self.domain)
            .field("smoothness", &self.smoothness)
            .finish_non_exhaustive()
    }
}

impl<T: Real> Potential<T> {
    pub fn new<F>(domain: BoxDomain<T>, smoothness: Smoothness, eval: F) -> Self
    where
        F: Fn(&[T]) -> T + Send + Sync + 'static,
    {
        Potential { domain, eval: Arc::new(eval), smoothness }
    }

    pub fn from_arc(domain: BoxDomain<T>, smoothness: Smoothness, eval: PotentialFn<T>) -> Self {
        Potential { domain, eval, smoothness }
    }

    pub fn domain(&self) -> &BoxDomain<T> {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn function(&self) -> PotentialFn<T> {
        Arc::clone(&self.eval)
    }

    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        (self.eval)(x)
    }

    /// Same function on a different box.
    pub fn with_domain(&self, domain: BoxDomain<T>) -> Self {
        Potential { domain, eval: Arc::clone(&self.eval), smoothness: self.smoothness }
    }

    /// Midpoint test `V((x+y)/2) <= (V(x)+V(y))/2 + tol` on random pairs in the box.
    pub fn audit_convexity(&self, pairs: usize, tol: f64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(AUDIT_SEED);
        let n = self.dim();
        let lo = self.domain.lo();
        let hi = self.domain.hi();
        let mut x = vec![T::zero(); n];
        let mut y = vec![T::zero(); n];
        let mut mid = vec![T::zero(); n];
        for pair in 0..pairs {
            for i in 0..n {
                let a: f64 = rng.gen();
                let b: f64 = rng.gen();
                x[i] = lo[i] + (hi[i] - lo[i]) * T::lit(a);
                y[i] = lo[i] + (hi[i] - lo[i]) * T::lit(b);
                mid[i] = (x[i] + y[i]) / T::lit(2.0);
            }
            let vx = self.eval(&x).f64();
            let vy = self.eval(&y).f64();
            let vm = self.eval(&mid).f64();
            if vx.is_nan() || vy.is_nan() || vm.is_nan() {
                return Err(Error::ConvexityAuditFailed { pair, excess: f64::NAN });
            }
            if vx == f64::INFINITY || vy == f64::INFINITY {
                continue;
            }
            let chord = 0.5 * (vx + vy);
            let slack = tol * (1.0 + vx.abs().max(vy.abs()));
            if vm > chord + slack {
                return Err(Error::ConvexityAuditFailed { pair, excess: vm - chord });
            }
        }
        Ok(())
    }
}
