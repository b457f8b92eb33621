use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::grid::GridDensity;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Weighted point cloud used by the Monte Carlo checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T> {
    dim: usize,
    points: Vec<Vec<T>>,
    weights: Vec<T>,
    seed: u64,
}

impl<T: Real> SampleSet<T> {
    /// Uniformly weighted samples.
    pub fn new(dim: usize, points: Vec<Vec<T>>, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidShape("sample set must be nonempty".into()));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimMismatch { expected: dim, got: p.len() });
        }
        let w = T::one() / T::from_usize_lossy(points.len());
        let weights = vec![w; points.len()];
        Ok(SampleSet { dim, points, weights, seed })
    }

    pub fn with_weights(dim: usize, points: Vec<Vec<T>>, weights: Vec<T>, seed: u64) -> Result<Self> {
        let mut s = Self::new(dim, points, seed)?;
        if weights.len() != s.points.len() || weights.iter().any(|w| !(*w >= T::zero())) {
            return Err(Error::InvalidShape("weights must be nonnegative, one per point".into()));
        }
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::MassUnderflow);
        }
        s.weights = weights.into_iter().map(|w| w / total).collect();
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn expect<F: Fn(&[T]) -> T>(&self, f: F) -> T {
        self.points.iter().zip(&self.weights).fold(T::zero(), |acc, (p, &w)| acc + w * f(p))
    }

    /// Like [`SampleSet::map`] for fallible maps.
    pub fn try_map<F>(&self, f: F) -> Result<SampleSet<T>>
    where
        F: Fn(&[T]) -> Result<Vec<T>> + Sync,
    {
        let pts: Vec<Vec<T>> = self.points.par_iter().map(|p| f(p)).collect::<Result<_>>()?;
        let dim = pts[0].len();
        SampleSet::with_weights(dim, pts, self.weights.clone(), self.seed)
    }

    /// Short content hash of the points, weights and seed.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        h.update(self.seed.to_le_bytes());
        for (p, &w) in self.points.iter().zip(&self.weights) {
            for &v in p {
                h.update(v.f64().to_le_bytes());
            }
            h.update(w.f64().to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn map<F: Fn(&[T]) -> Vec<T>>(&self, f: F) -> Result<SampleSet<T>> {
        let pts: Vec<Vec<T>> = self.points.iter().map(|p| f(p)).collect();
        let dim = pts[0].len();
        SampleSet::with_weights(dim, pts, self.weights.clone(), self.seed)
    }
}

/// Draws `count` points by sequential conditional inversion.
///
/// The uniform variates come from a ChaCha8 stream keyed by `seed` and each
/// point uses its own stream position, so the result is independent of the
/// thread count.
pub fn sample<T: Real>(density: &GridDensity<T>, count: usize, seed: u64) -> Result<SampleSet<T>> {
    if count == 0 {
        return Err(Error::InvalidShape("sample count must be at least 1".into()));
    }
    let n = density.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniforms: Vec<f64> = (0..count * n).map(|_| rng.gen::<f64>()).collect();
    let points = uniforms
        .par_chunks(n)
        .map(|u| {
            let mut x = Vec::with_capacity(n);
            for (axis, &ui) in u.iter().enumerate() {
                let xi = density.conditional_quantile(axis, &x, T::lit(ui))?;
                x.push(xi);
            }
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    SampleSet::new(n, points, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{BoxDomain, Potential, Smoothness};

    #[test]
    fn uniform_sample_mean() {
        let d = BoxDomain::new(vec![0.0f64], vec![1.0]).unwrap();
        let g = GridDensity::build(&Potential::new(d, Smoothness::C1, |_: &[f64]| 0.0), &[64]).unwrap();
        let s = sample(&g, 100_000, 11).unwrap();
        assert!((s.expect(|x| x[0]) - 0.5).abs() < 0.005);
        assert!(s.points().iter().all(|p| (0.0..=1.0).contains(&p[0])));
    }

    #[test]
    fn correlated_gaussian_sample_correlation() {
        let d = BoxDomain::cube(2, 8.0f64).unwrap();
        let rho = 0.5;
        let v = Potential::new(d, Smoothness::C1, move |x: &[f64]| {
            (x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1]) / (2.0 * (1.0 - rho * rho))
        });
        let g = GridDensity::build(&v, &[256, 256]).unwrap();
        let s = sample(&g, 100_000, 3).unwrap();
        let m0 = s.expect(|x| x[0]);
        let m1 = s.expect(|x| x[1]);
        let c = s.expect(|x| (x[0] - m0) * (x[1] - m1));
        let v0 = s.expect(|x| (x[0] - m0).powi(2));
        let v1 = s.expect(|x| (x[1] - m1).powi(2));
        let r = c / (v0 * v1).sqrt();
        assert!((r - 0.5).abs() < 0.02, "corr {r}");
        // first two moments within 5 standard errors
        let se = (1.0 / 100_000f64).sqrt();
        assert!(m0.abs() < 5.0 * se && m1.abs() < 5.0 * se);
    }

    #[test]
    fn same_seed_same_samples() {
        let d = BoxDomain::cube(2, 3.0f64).unwrap();
        let g = GridDensity::build(&Potential::new(d, Smoothness::C1, |x: &[f64]| x[0].abs() + x[1] * x[1]), &[40, 40])
            .unwrap();
        assert_eq!(sample(&g, 500, 9).unwrap(), sample(&g, 500, 9).unwrap());
        assert_ne!(sample(&g, 500, 9).unwrap(), sample(&g, 500, 10).unwrap());
    }
}
