//! Generators for Gaussian and convex-body test laws, Steiner
//! symmetrization, the embed-and-sum construction, and the
//! martingale-increment check.

use nalgebra::DMatrix;

use crate::density::{sample, BoxDomain, GridDensity, Measure, Potential, SampleSet, Smoothness};
use crate::error::{Error, Result};
use crate::report::VerificationReport;
use crate::scalar::Real;

/// Smallest covariance eigenvalue accepted by [`make_gaussian`].
pub const MIN_EIGENVALUE: f64 = 1e-6;

/// `V(x) = x . Sigma^{-1} x / 2` on `[-r, r]^n`.
pub fn make_gaussian<T: Real>(n: usize, covariance: &[Vec<f64>], box_radius: f64) -> Result<Potential<T>> {
    if n == 0 || covariance.len() != n || covariance.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidShape(format!("covariance must be {n}x{n}")));
    }
    let c = DMatrix::from_fn(n, n, |i, j| covariance[i][j]);
    let scale = c.amax().max(f64::MIN_POSITIVE);
    if (&c - c.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidShape("covariance is not symmetric".into()));
    }
    let min_eig = c.clone().symmetric_eigenvalues().min();
    if !(min_eig >= MIN_EIGENVALUE) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min_eig });
    }
    let inv = c
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { min_eigenvalue: min_eig })?
        .inverse();
    let prec: Vec<T> = (0..n * n).map(|k| T::lit(inv[(k / n, k % n)])).collect();
    let domain = BoxDomain::cube(n, T::lit(box_radius))?;
    Ok(Potential::new(domain, Smoothness::C1, move |x: &[T]| {
        let mut q = T::zero();
        for i in 0..n {
            let row = &prec[i * n..(i + 1) * n];
            q = q + x[i] * row.iter().zip(x).fold(T::zero(), |s, (&p, &v)| s + p * v);
        }
        q / T::lit(2.0)
    }))
}

/// Convex polygon, counter-clockwise, without repeated or collinear vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexBody2d {
    vertices: Vec<[f64; 2]>,
    barycenter: [f64; 2],
    area: f64,
}

impl ConvexBody2d {
    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn barycenter(&self) -> [f64; 2] {
        self.barycenter
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// `(lo, hi)` corners of the bounding box.
    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for j in 0..2 {
                lo[j] = lo[j].min(v[j]);
                hi[j] = hi[j].max(v[j]);
            }
        }
        (lo, hi)
    }

    fn diameter(&self) -> f64 {
        let (lo, hi) = self.bbox();
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
    }

    /// Closed membership with a relative slack of `1e-12`.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let eps = 1e-12 * self.diameter() * self.diameter();
        let k = self.vertices.len();
        (0..k).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % k];
            (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]) >= -eps
        })
    }

    pub fn translated(&self, shift: [f64; 2]) -> ConvexBody2d {
        ConvexBody2d {
            vertices: self.vertices.iter().map(|v| [v[0] + shift[0], v[1] + shift[1]]).collect(),
            barycenter: [self.barycenter[0] + shift[0], self.barycenter[1] + shift[1]],
            area: self.area,
        }
    }

    /// Translate so that the barycenter sits at the origin.
    pub fn barycentered(&self) -> ConvexBody2d {
        let b = self.barycenter;
        let mut out = self.translated([-b[0], -b[1]]);
        out.barycenter = [0.0, 0.0];
        out
    }

    /// `y`-extent `[a, b]` of the vertical section at `x`, if nonempty.
    pub fn section(&self, x: f64) -> Option<(f64, f64)> {
        let k = self.vertices.len();
        let (mut a, mut b) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..k {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % k];
            let (x0, x1) = (p[0].min(q[0]), p[0].max(q[0]));
            if x < x0 || x > x1 {
                continue;
            }
            if x1 - x0 <= 1e-15 * (1.0 + x.abs()) {
                a = a.min(p[1].min(q[1]));
                b = b.max(p[1].max(q[1]));
            } else {
                let s = (x - p[0]) / (q[0] - p[0]);
                let y = p[1] + s * (q[1] - p[1]);
                a = a.min(y);
                b = b.max(y);
            }
        }
        (a <= b).then_some((a, b))
    }

    /// Uniform law: `V = 0` on the body, `+inf` off it, on `domain` or on
    /// the bounding box padded by 2% per side.
    pub fn potential<T: Real>(&self, domain: Option<BoxDomain<T>>) -> Result<Potential<T>> {
        let domain = match domain {
            Some(d) => d,
            None => {
                let (lo, hi) = self.bbox();
                let pad = |j: usize| 0.02 * (hi[j] - lo[j]);
                BoxDomain::new(
                    vec![T::lit(lo[0] - pad(0)), T::lit(lo[1] - pad(1))],
                    vec![T::lit(hi[0] + pad(0)), T::lit(hi[1] + pad(1))],
                )?
            }
        };
        if domain.dim() != 2 {
            return Err(Error::DimMismatch { expected: 2, got: domain.dim() });
        }
        let body = self.clone();
        Ok(Potential::new(domain, Smoothness::Nonsmooth, move |x: &[T]| {
            if body.contains(x[0].f64(), x[1].f64()) {
                T::zero()
            } else {
                T::infinity()
            }
        }))
    }
}

/// Convex hull of `vertices` (monotone chain) with its area and barycenter.
pub fn make_convex_body_2d(vertices: &[[f64; 2]]) -> Result<ConvexBody2d> {
    if vertices.len() < 3 || vertices.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(Error::DegenerateHull);
    }
    let mut pts = vertices.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    let (mut a2, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..hull.len() {
        let p = hull[i];
        let q = hull[(i + 1) % hull.len()];
        let c = p[0] * q[1] - q[0] * p[1];
        a2 += c;
        cx += (p[0] + q[0]) * c;
        cy += (p[1] + q[1]) * c;
    }
    let (lo, hi) = hull.iter().fold(([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]), |(mut lo, mut hi), v| {
        for j in 0..2 {
            lo[j] = lo[j].min(v[j]);
            hi[j] = hi[j].max(v[j]);
        }
        (lo, hi)
    });
    let diam2 = (hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2);
    if !(a2.abs() > 1e-12 * diam2) {
        return Err(Error::DegenerateHull);
    }
    Ok(ConvexBody2d { vertices: hull, barycenter: [cx / (3.0 * a2), cy / (3.0 * a2)], area: a2 / 2.0 })
}

/// Steiner symmetrization about the first axis: the section at `x1`
/// becomes `[-(b - a)/2, (b - a)/2]`. Sections are affine between vertex
/// abscissae, so the result is the hull of the symmetrized sections there.
pub fn steiner_symmetrize_2d(body: &ConvexBody2d) -> Result<ConvexBody2d> {
    let b = body.barycenter();
    if b[0].hypot(b[1]) > 1e-9 * body.diameter() {
        return Err(Error::NotBarycentered(b.to_vec()));
    }
    let mut xs: Vec<f64> = body.vertices().iter().map(|v| v[0]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut pts = Vec::with_capacity(2 * xs.len());
    for &x in &xs {
        let (a, b) = body.section(x).expect("vertex abscissa meets the body");
        let h = (b - a) / 2.0;
        if h <= 1e-12 * body.diameter() {
            pts.push([x, 0.0]);
        } else {
            pts.push([x, -h]);
            pts.push([x, h]);
        }
    }
    let mut out = make_convex_body_2d(&pts)?;
    // symmetric by construction; keep the reflection exact
    let bx = out.barycenter[0];
    out.barycenter = [bx, 0.0];
    Ok(out)
}

/// Number of test functions in the martingale-increment family.
pub const MARTINGALE_FAMILY_SIZE: usize = 20;
/// Version tag of the test-function family.
pub const MARTINGALE_FAMILY_VERSION: &str = "v1";

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Test function `g_k` of the standardized prefix `z` (nonempty).
///
/// 0: 1; 1-3: z_1, z_p, mean z; 4-7: z_1^2, z_p^2, z_1 z_p, |z|^2/p;
/// 8-13: clipped linears; 14-19: sigmoids and their products.
fn martingale_test_fn(k: usize, z: &[f64]) -> f64 {
    let p = z.len();
    let (a, b) = (z[0], z[p - 1]);
    let clip = |v: f64| v.clamp(-1.0, 1.0);
    match k {
        0 => 1.0,
        1 => a,
        2 => b,
        3 => z.iter().sum::<f64>() / p as f64,
        4 => a * a,
        5 => b * b,
        6 => a * b,
        7 => z.iter().map(|v| v * v).sum::<f64>() / p as f64,
        8 => clip(a),
        9 => clip(b),
        10 => clip(a + b),
        11 => clip(a - b),
        12 => clip(2.0 * a - 1.0),
        13 => clip(2.0 * b + 1.0),
        14 => sigmoid(a),
        15 => sigmoid(b),
        16 => sigmoid(a) * sigmoid(b),
        17 => sigmoid(-a) * sigmoid(b),
        18 => sigmoid(2.0 * a) * sigmoid(-2.0 * b),
        19 => sigmoid(a + b - 1.0),
        _ => unreachable!("family has {MARTINGALE_FAMILY_SIZE} members"),
    }
}

/// Default tolerance of [`martingale_increment_check`]: `1e-2` for grids,
/// `5 / sqrt(N)` for `N` samples.
pub fn default_martingale_tolerance<T: Real>(law: &Measure<T>) -> f64 {
    match law {
        Measure::Grid(_) => 1e-2,
        Measure::Samples(s) => 5.0 / (s.len() as f64).sqrt(),
    }
}

/// `max |E[X_i g(X_{<i})]| / sqrt(E[X_i^2] E[g^2])` over coordinates and the
/// fixed family of 20 test functions of the standardized prefix; for
/// `i = 1` only `g = 1` applies. Passes when the worst correlation is at most
/// `tol`.
pub fn martingale_increment_check<T: Real>(law: &Measure<T>, tol: Option<f64>) -> VerificationReport {
    let tol = tol.unwrap_or_else(|| default_martingale_tolerance(law));
    let atoms: Vec<(Vec<f64>, f64)> =
        law.atoms().into_iter().map(|(x, w)| (x.iter().map(|v| v.f64()).collect(), w.f64())).collect();
    let n = law.dim();
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let mean: Vec<f64> = (0..n).map(|j| atoms.iter().map(|(x, w)| w * x[j]).sum::<f64>() / total).collect();
    let sd: Vec<f64> = (0..n)
        .map(|j| {
            let v = atoms.iter().map(|(x, w)| w * (x[j] - mean[j]).powi(2)).sum::<f64>() / total;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut worst = (0.0f64, 0usize, 0usize);
    for i in 0..n {
        let second: f64 = atoms.iter().map(|(x, w)| w * x[i] * x[i]).sum::<f64>() / total;
        if !(second > 0.0) {
            continue;
        }
        let count = if i == 0 { 1 } else { MARTINGALE_FAMILY_SIZE };
        for k in 0..count {
            let (mut xg, mut gg) = (0.0, 0.0);
            for (x, w) in &atoms {
                let g = if i == 0 {
                    1.0
                } else {
                    let z: Vec<f64> = (0..i).map(|j| (x[j] - mean[j]) / sd[j]).collect();
                    martingale_test_fn(k, &z)
                };
                xg += w * x[i] * g;
                gg += w * g * g;
            }
            let c = if gg > 0.0 { (xg / total) / (second * gg / total).sqrt() } else { 0.0 };
            if c.abs() > worst.0 {
                worst = (c.abs(), i, k);
            }
        }
    }
    VerificationReport::inequality("martingale_increments", worst.0, tol, 1.0, 0.0)
        .with_best(worst.0)
        .with_digest(law.digest())
        .detail("worst_axis", (worst.1 + 1) as f64)
        .detail("worst_function", worst.2 as f64)
        .note(format!("test family {MARTINGALE_FAMILY_VERSION}, {MARTINGALE_FAMILY_SIZE} functions"))
}

/// How [`embed_sum_construction`] represents the law of `Y`.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbedMode {
    /// Sum of independent draws; grid components are sampled with seed
    /// `seed + i`, sample components are used as given (equal sizes).
    Samples { count: usize, seed: u64 },
    /// Direct convolution: components are rebinned to `component_nodes`
    /// per axis, partial sums to `output_nodes` per axis. Output dimension at most 3.
    Grid { component_nodes: usize, output_nodes: usize },
}

fn insert_zero<T: Real>(x: &[T], slot: usize) -> Vec<T> {
    let mut y = x.to_vec();
    y.insert(slot, T::zero());
    y
}

fn bounding_box<T: Real>(atoms: &[(Vec<T>, T)], dim: usize) -> (Vec<T>, Vec<T>) {
    let mut lo = vec![T::infinity(); dim];
    let mut hi = vec![T::neg_infinity(); dim];
    for (x, _) in atoms {
        for j in 0..dim {
            lo[j] = lo[j].min(x[j]);
            hi[j] = hi[j].max(x[j]);
        }
    }
    (lo, hi)
}

/// Law of `Y = X^1 + .. + X^{k+1}` where `X^i` is the `i`-th component (in
/// dimension `k`) with a zero inserted at slot `i`, components independent.
pub fn embed_sum_construction<T: Real>(
    components: &[Measure<T>],
    mode: &EmbedMode,
    check_components: bool,
) -> Result<Measure<T>> {
    let k = components.len().saturating_sub(1);
    if k == 0 {
        return Err(Error::InvalidShape("need at least two components".into()));
    }
    for (i, c) in components.iter().enumerate() {
        if c.dim() != k {
            return Err(Error::DimMismatch { expected: k, got: c.dim() });
        }
        if check_components && !martingale_increment_check(c, None).passed() {
            return Err(Error::ComponentNotMartingale(i));
        }
    }
    match *mode {
        EmbedMode::Samples { count, seed } => {
            let draws: Vec<SampleSet<T>> = components
                .iter()
                .enumerate()
                .map(|(i, c)| match c {
                    Measure::Grid(g) => sample(g, count, seed.wrapping_add(i as u64)),
                    Measure::Samples(s) => Ok(s.clone()),
                })
                .collect::<Result<_>>()?;
            let len = draws[0].len();
            if draws.iter().any(|d| d.len() != len) {
                return Err(Error::InvalidShape("sample components must have equal sizes".into()));
            }
            let points = (0..len)
                .map(|j| {
                    let mut y = vec![T::zero(); k + 1];
                    for (i, d) in draws.iter().enumerate() {
                        for (acc, v) in y.iter_mut().zip(insert_zero(&d.points()[j], i)) {
                            *acc = *acc + v;
                        }
                    }
                    y
                })
                .collect();
            Ok(SampleSet::new(k + 1, points, seed)?.into())
        }
        EmbedMode::Grid { component_nodes, output_nodes } => {
            if k + 1 > 3 {
                return Err(Error::InvalidShape("grid convolution supports dimension at most 3".into()));
            }
            let embedded: Vec<Vec<(Vec<T>, T)>> = components
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let atoms = c.atoms();
                    let (lo, hi) = bounding_box(&atoms, k);
                    let coarse = if lo.iter().zip(&hi).all(|(a, b)| b > a) {
                        Measure::Grid(GridDensity::rebin(BoxDomain::new(lo, hi)?, &vec![component_nodes; k], atoms)?)
                            .atoms()
                    } else {
                        atoms
                    };
                    Ok(coarse.into_iter().map(|(x, w)| (insert_zero(&x, i), w)).collect())
                })
                .collect::<Result<_>>()?;
            let mut acc = embedded[0].clone();
            let mut out = None;
            for next in &embedded[1..] {
                let (alo, ahi) = bounding_box(&acc, k + 1);
                let (blo, bhi) = bounding_box(next, k + 1);
                let lo: Vec<T> = alo.iter().zip(&blo).map(|(&a, &b)| a + b).collect();
                let hi: Vec<T> = ahi.iter().zip(&bhi).map(|(&a, &b)| a + b).collect();
                let sums = acc.iter().flat_map(|(x, p)| {
                    next.iter().map(move |(y, q)| (x.iter().zip(y).map(|(&u, &v)| u + v).collect(), *p * *q))
                });
                let g = GridDensity::rebin(BoxDomain::new(lo, hi)?, &vec![output_nodes; k + 1], sums)?;
                acc = Measure::Grid(g.clone()).atoms();
                out = Some(g);
            }
            Ok(out.expect("at least two components").into())
        }
    }
}
