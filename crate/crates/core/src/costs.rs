//! The cost `N`, the transport costs `c_mu` and `c~_mu`, relative entropy,
//! the Knothe coupling cost and W2 upper bounds.

use rayon::prelude::*;

use crate::density::{GridDensity, Measure, SampleSet};
use crate::error::{Error, Result};
use crate::knothe::KnotheMap;
use crate::recentering::RecenteringPair;
use crate::scalar::{pairwise_sum, Real};

/// `N(t) = |t| - log(1 + |t|)`.
pub fn n_cost<T: Real>(t: T) -> T {
    let a = t.abs();
    if a == T::infinity() {
        return a;
    }
    a - a.ln_1p()
}

/// Inverse of `N` on `[0, inf)`, by bisection refined with Newton steps.
pub fn n_inverse(y: f64) -> f64 {
    if !(y > 0.0) {
        return 0.0;
    }
    if y == f64::INFINITY {
        return y;
    }
    // N(v) >= v - log(1+v) >= v/2 - 1/2 for large v; bracket [0, 2y + 2 + sqrt(2y)*2]
    let (mut lo, mut hi) = (0.0f64, 2.0 * y + 2.0 + 2.0 * (2.0 * y).sqrt());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if n_cost(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `a * lam` with the conventions `0 x inf = 0`, `a x inf = sign(a) inf`.
pub fn ext_mul<T: Real>(a: T, lam: T) -> T {
    if a == T::zero() {
        T::zero()
    } else if lam == T::infinity() {
        a.signum() * T::infinity()
    } else {
        a * lam
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostVariant {
    /// `c_mu(x, y) = (1/16) sum_i N(lambda_i(S(x)) (x_i - y_i))`.
    Sum,
    /// `c~_mu(x, y) = (1/16) N(sqrt(sum_i lambda_i(S(x))^2 (x_i - y_i)^2))`.
    Norm,
}

/// Cost attached to a base measure through its recentering tables.
#[derive(Debug, Clone)]
pub struct CostSpec<T> {
    pub pair: RecenteringPair<T>,
    pub variant: CostVariant,
}

impl<T: Real> CostSpec<T> {
    pub fn new(mu: &GridDensity<T>, variant: CostVariant) -> Self {
        CostSpec { pair: crate::recentering::build_recentering(mu), variant }
    }

    pub fn with_pair(pair: RecenteringPair<T>, variant: CostVariant) -> Self {
        CostSpec { pair, variant }
    }

    /// Cost from squared weights `lambda_i^2` at the base point.
    pub fn with_weights(&self, lam_sq: &[T], x: &[T], y: &[T]) -> T {
        cost_from_weights(self.variant, lam_sq, x, y)
    }
}

/// Evaluates either cost from precomputed `lambda_i^2`.
pub fn cost_from_weights<T: Real>(variant: CostVariant, lam_sq: &[T], x: &[T], y: &[T]) -> T {
    let sixteenth = T::lit(1.0 / 16.0);
    match variant {
        CostVariant::Sum => {
            let mut acc = T::zero();
            for ((&l2, &a), &b) in lam_sq.iter().zip(x).zip(y) {
                acc = acc + n_cost(ext_mul(a - b, l2.sqrt()));
            }
            acc * sixteenth
        }
        CostVariant::Norm => {
            let mut q = T::zero();
            for ((&l2, &a), &b) in lam_sq.iter().zip(x).zip(y) {
                let d = a - b;
                q = q + ext_mul(d * d, l2);
            }
            n_cost(q.sqrt()) * sixteenth
        }
    }
}

/// `c_mu(x, y)` or `c~_mu(x, y)` with the weights read at `S(x)`.
pub fn cost_eval<T: Real>(spec: &CostSpec<T>, x: &[T], y: &[T]) -> Result<T> {
    if y.len() != x.len() {
        return Err(Error::DimMismatch { expected: x.len(), got: y.len() });
    }
    let w = spec.pair.weights_sq(x)?;
    Ok(cost_from_weights(spec.variant, &w, x, y))
}

/// `D(nu || mu) = int (dnu/dmu) log(dnu/dmu) dmu` on a common grid, with
/// `0 log 0 = 0` and `+inf` when `nu` charges a node where `mu` vanishes.
pub fn relative_entropy<T: Real>(nu: &GridDensity<T>, mu: &GridDensity<T>) -> Result<T> {
    if nu.shape() != mu.shape() || nu.domain() != mu.domain() {
        return Err(Error::InvalidShape("relative entropy needs a common grid".into()));
    }
    let q = nu.values();
    let lq = nu.log_values();
    let lp = mu.log_values();
    let p = mu.values();
    if q.iter().zip(p).any(|(&a, &b)| a > T::zero() && b == T::zero()) {
        return Ok(T::infinity());
    }
    let n = nu.dim();
    let terms: Vec<T> = (0..nu.len())
        .into_par_iter()
        .map(|f| {
            if q[f] > T::zero() {
                let mut idx = vec![0usize; n];
                nu.unravel(f, &mut idx);
                nu.node_weight(&idx) * q[f] * (lq[f] - lp[f])
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(pairwise_sum(&terms).max(T::zero()))
}

/// Ingredients of the coupling `(Xbar, Ybar)` with `Ybar_i = T_i(X) - E[T_i(X) | X_{<i}]`.
#[derive(Debug, Clone)]
pub struct CouplingNode<T> {
    pub mass: T,
    pub x: Vec<T>,
    pub xbar: Vec<T>,
    pub ybar: Vec<T>,
    pub lambda_sq: Vec<T>,
}

/// Nodes of the coupling of `mu_bar` and `nu_bar` built from the Knothe map
/// `T` from `mu` to `nu`. Since `S(Xbar) = X`, the weights `lambda_i(S(Xbar))`
/// are read at the source prefixes directly.
pub fn knothe_coupling<T: Real>(map: &KnotheMap<T>, pair: &RecenteringPair<T>) -> Result<Vec<CouplingNode<T>>> {
    let mu = map.source();
    let n = mu.dim();
    Ok(map
        .node_images()?
        .into_par_iter()
        .map(|im| {
            let mut idx = vec![0usize; n];
            mu.unravel(im.flat, &mut idx);
            let red = pair.reduced_at_node(&idx);
            let var = pair.var_at_node(&idx);
            CouplingNode {
                mass: im.mass,
                xbar: im.x.iter().zip(&red).map(|(&a, &b)| a - b).collect(),
                ybar: im.tx.iter().zip(&im.image_means).map(|(&a, &b)| a - b).collect(),
                lambda_sq: var
                    .iter()
                    .map(|&v| if v > T::zero() { T::one() / (T::lit(3.0) * v) } else { T::infinity() })
                    .collect(),
                x: im.x,
            }
        })
        .collect())
}

/// `E[c(Xbar, Ybar)]` along the Knothe coupling: an upper bound on
/// `T_mu(mu_bar, nu_bar)`.
pub fn knothe_coupling_cost<T: Real>(mu: &GridDensity<T>, nu: &GridDensity<T>, spec: &CostSpec<T>) -> Result<T> {
    let map = KnotheMap::new(mu, nu)?;
    let nodes = knothe_coupling(&map, &spec.pair)?;
    let terms: Vec<T> = nodes
        .iter()
        .map(|c| c.mass * cost_from_weights(spec.variant, &c.lambda_sq, &c.xbar, &c.ybar))
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Sorted-pairing or Knothe-coupling estimate of `W2^2`; the flag is true
/// when the value is exact (dimension 1).
pub fn w2_squared_upper_bound<T: Real>(a: &Measure<T>, b: &Measure<T>) -> Result<(T, bool)> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch { expected: a.dim(), got: b.dim() });
    }
    match (a, b) {
        (Measure::Grid(g), Measure::Grid(h)) => {
            let map = KnotheMap::new(g, h)?;
            let terms: Vec<T> = map
                .node_images()?
                .iter()
                .map(|im| im.mass * im.x.iter().zip(&im.tx).fold(T::zero(), |s, (&u, &v)| s + (u - v) * (u - v)))
                .collect();
            Ok((pairwise_sum(&terms), g.dim() == 1))
        }
        (Measure::Samples(s), Measure::Samples(t)) => Ok((empirical_knothe_w2(s, t)?, s.dim() == 1)),
        _ => Err(Error::InvalidShape("W2 needs two grids or two sample sets".into())),
    }
}

/// `sqrt` of [`w2_squared_upper_bound`].
pub fn w2_upper_bound<T: Real>(a: &Measure<T>, b: &Measure<T>) -> Result<(T, bool)> {
    let (v, exact) = w2_squared_upper_bound(a, b)?;
    Ok((v.sqrt(), exact))
}

/// Empirical Knothe pairing of two equal-size uniformly weighted clouds:
/// sort by the first coordinate, split into `ceil(N^(1/n))`-sized blocks,
/// and recurse on the remaining coordinates inside each block pair.
fn empirical_knothe_w2<T: Real>(s: &SampleSet<T>, t: &SampleSet<T>) -> Result<T> {
    if s.len() != t.len() {
        return Err(Error::InvalidShape("sample sets must have equal size".into()));
    }
    let n = s.dim();
    let mut a: Vec<usize> = (0..s.len()).collect();
    let mut b: Vec<usize> = (0..t.len()).collect();
    let block = ((s.len() as f64).powf(1.0 / n as f64).ceil() as usize).max(1);
    fn rec<T: Real>(
        sp: &[Vec<T>],
        tp: &[Vec<T>],
        a: &mut [usize],
        b: &mut [usize],
        axis: usize,
        n: usize,
        block: usize,
    ) {
        a.sort_by(|&i, &j| sp[i][axis].total_cmp_t(&sp[j][axis]).then(i.cmp(&j)));
        b.sort_by(|&i, &j| tp[i][axis].total_cmp_t(&tp[j][axis]).then(i.cmp(&j)));
        if axis + 1 == n {
            return;
        }
        let levels_left = n - axis - 1;
        let chunk = block.pow(levels_left as u32).max(1);
        for (ca, cb) in a.chunks_mut(chunk).zip(b.chunks_mut(chunk)) {
            rec(sp, tp, ca, cb, axis + 1, n, block);
        }
    }
    rec(s.points(), t.points(), &mut a, &mut b, 0, n, block);
    let w = T::one() / T::from_usize_lossy(s.len());
    let terms: Vec<T> = a
        .iter()
        .zip(&b)
        .map(|(&i, &j)| {
            w * s.points()[i]
                .iter()
                .zip(&t.points()[j])
                .fold(T::zero(), |acc, (&u, &v)| acc + (u - v) * (u - v))
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

trait TotalCmp {
    fn total_cmp_t(&self, other: &Self) -> std::cmp::Ordering;
}

impl<T: Real> TotalCmp for T {
    fn total_cmp_t(&self, other: &Self) -> std::cmp::Ordering {
        self.f64().total_cmp(&other.f64())
    }
}
