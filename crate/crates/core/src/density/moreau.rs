//! Quadratic infimal convolution `V_s(x) = inf_y { V(y) + |x - y|^2 / s }`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::potential::{Potential, Smoothness};
use crate::error::{Error, Result};
use crate::scalar::Real;

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const PROBES: usize = 8;

/// Evaluator for the Moreau envelope of a potential by coordinate descent.
#[derive(Debug, Clone)]
pub struct MoreauEnvelope<T> {
    base: Potential<T>,
    s: T,
    budget: usize,
}

impl<T: Real> MoreauEnvelope<T> {
    pub fn new(base: Potential<T>, s: T, budget: usize) -> Result<Self> {
        if !(s > T::zero()) || !s.is_finite() {
            return Err(Error::InvalidShape(format!("smoothing parameter must be positive, got {s}")));
        }
        if budget == 0 {
            return Err(Error::InvalidShape("probe budget must be positive".into()));
        }
        Ok(MoreauEnvelope { base, s, budget })
    }

    fn objective(&self, x: &[T], y: &[T]) -> T {
        let v = self.base.eval(y);
        if v == T::infinity() {
            return v;
        }
        let d2 = x.iter().zip(y).fold(T::zero(), |a, (&p, &q)| a + (p - q) * (p - q));
        v + d2 / self.s
    }

    fn start(&self, x: &[T]) -> Option<Vec<T>> {
        let dom = self.base.domain();
        let clamped: Vec<T> = x
            .iter()
            .zip(dom.lo().iter().zip(dom.hi()))
            .map(|(&v, (&a, &b))| v.max(a).min(b))
            .collect();
        if self.base.eval(&clamped).is_finite() {
            return Some(clamped);
        }
        let c = dom.center();
        if self.base.eval(&c).is_finite() {
            return Some(c);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        (0..256).find_map(|_| {
            let p: Vec<T> = dom
                .lo()
                .iter()
                .zip(dom.hi())
                .map(|(&a, &b)| a + (b - a) * T::lit(rng.gen::<f64>()))
                .collect();
            self.base.eval(&p).is_finite().then_some(p)
        })
    }

    /// Minimizes along coordinate `j` from the current `y` (convex 1D problem).
    fn line_search(&self, x: &[T], y: &mut [T], j: usize) -> T {
        let mut probe = y.to_vec();
        let phi = |t: T, probe: &mut Vec<T>| {
            probe[j] = t;
            self.objective(x, probe)
        };
        let t0 = y[j];
        let f0 = phi(t0, &mut probe);
        let mut step = (x[j] - t0).abs().max(self.s.sqrt()).max(T::lit(1e-3));
        let fp = phi(t0 + step, &mut probe);
        let fm = phi(t0 - step, &mut probe);
        let dir = if fp < f0 {
            T::one()
        } else if fm < f0 {
            -T::one()
        } else {
            // minimum already bracketed by [t0 - step, t0 + step]
            return self.golden(x, y, j, (t0 - step, t0 + step), (t0, f0));
        };
        let (mut a, mut b) = (t0, t0 + dir * step);
        let mut fb = phi(b, &mut probe);
        loop {
            step = step * T::lit(2.0);
            let c = b + dir * step;
            let fc = phi(c, &mut probe);
            if !(fc < fb) {
                let (lo, hi) = if dir > T::zero() { (a, c) } else { (c, a) };
                return self.golden(x, y, j, (lo, hi), (b, fb));
            }
            a = b;
            b = c;
            fb = fc;
            if !b.is_finite() {
                y[j] = a;
                return self.objective(x, y);
            }
        }
    }

    fn golden(&self, x: &[T], y: &mut [T], j: usize, (mut a, mut b): (T, T), best: (T, T)) -> T {
        let r = T::lit(INV_PHI);
        let mut probe = y.to_vec();
        let mut phi = |t: T| {
            probe[j] = t;
            self.objective(x, &probe)
        };
        let mut c = b - (b - a) * r;
        let mut d = a + (b - a) * r;
        let mut fc = phi(c);
        let mut fd = phi(d);
        let tol = T::lit(1e-13);
        while (b - a).abs() > tol * (T::one() + a.abs().max(b.abs())) {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - (b - a) * r;
                fc = phi(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + (b - a) * r;
                fd = phi(d);
            }
        }
        let (t, ft) = if fc <= fd { (c, fc) } else { (d, fd) };
        if ft <= best.1 {
            y[j] = t;
            ft
        } else {
            y[j] = best.0;
            best.1
        }
    }

    fn descend(&self, x: &[T]) -> (T, Vec<T>, bool, T) {
        let mut y = match self.start(x) {
            Some(y) => y,
            None => return (T::infinity(), x.to_vec(), true, T::zero()),
        };
        let mut obj = self.objective(x, &y);
        let mut change = T::infinity();
        for _ in 0..self.budget {
            let before = obj;
            for j in 0..x.len() {
                obj = self.line_search(x, &mut y, j);
            }
            change = before - obj;
            if change <= T::lit(1e-13) * (T::one() + obj.abs()) {
                return (obj, y, true, change);
            }
        }
        (obj, y, false, change)
    }

    /// Envelope value and minimizer; errors if the sweep budget runs out.
    pub fn solve(&self, x: &[T]) -> Result<(T, Vec<T>)> {
        let (v, y, converged, change) = self.descend(x);
        if converged {
            Ok((v, y))
        } else {
            Err(Error::NonConvergence { budget: self.budget, change: change.f64() })
        }
    }

    /// Best value found within the budget, converged or not.
    pub fn value(&self, x: &[T]) -> T {
        self.descend(x).0
    }
}

/// Moreau smoothing of `potential` with parameter `s`.
///
/// The result is convex, finite on the box, pointwise below `V`, and increases
/// to `V` as `s -> 0`. Convergence of the inner minimization is checked at the
/// box center and a few fixed probes; a failure there is reported as
/// [`Error::NonConvergence`].
pub fn moreau_smooth<T: Real>(potential: &Potential<T>, s: T, probe_budget: usize) -> Result<Potential<T>> {
    let env = MoreauEnvelope::new(potential.clone(), s, probe_budget)?;
    let dom = potential.domain().clone();
    env.solve(&dom.center())?;
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..PROBES {
        let p: Vec<T> = dom
            .lo()
            .iter()
            .zip(dom.hi())
            .map(|(&a, &b)| a + (b - a) * T::lit(rng.gen::<f64>()))
            .collect();
        env.solve(&p)?;
    }
    Ok(Potential::new(dom, Smoothness::C1, move |x: &[T]| env.value(x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::BoxDomain;

    fn abs1() -> Potential<f64> {
        Potential::new(BoxDomain::cube(1, 4.0).unwrap(), Smoothness::Nonsmooth, |x: &[f64]| x[0].abs())
    }

    /// Brute-force minimization over a fine y-grid.
    fn brute(v: &dyn Fn(f64) -> f64, x: f64, s: f64) -> f64 {
        let mut best = f64::INFINITY;
        let m = 400_001;
        for k in 0..m {
            let y = -4.0 + 8.0 * k as f64 / (m - 1) as f64;
            best = best.min(v(y) + (x - y) * (x - y) / s);
        }
        best
    }

    #[test]
    fn abs_envelope_is_huber() {
        let vs = moreau_smooth(&abs1(), 1.0, 50).unwrap();
        assert!(vs.eval(&[0.0]).abs() < 1e-12);
        for &x in &[0.2f64, -0.4, 1.0, 2.5] {
            let want = if x.abs() <= 0.5 { x * x } else { x.abs() - 0.25 };
            assert!((vs.eval(&[x]) - want).abs() < 1e-9, "x={x}");
        }
    }

    #[test]
    fn quadratic_envelope_matches_brute_force() {
        let v = Potential::new(BoxDomain::cube(1, 4.0).unwrap(), Smoothness::C1, |x: &[f64]| x[0] * x[0] / 2.0);
        let vs = moreau_smooth(&v, 1.0, 50).unwrap();
        for &x in &[-1.5, -0.3, 0.0, 0.8, 2.0] {
            let oracle = brute(&|y| y * y / 2.0, x, 1.0);
            assert!((oracle - x * x / 3.0).abs() < 1e-9);
            assert!((vs.eval(&[x]) - x * x / 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn envelope_increases_as_s_shrinks() {
        let v = Potential::new(BoxDomain::cube(2, 3.0).unwrap(), Smoothness::Nonsmooth, |x: &[f64]| {
            x[0].abs() + (x[1] - 0.5).abs() + x[0] * x[0]
        });
        let x0 = [0.7, -0.2];
        let vals: Vec<f64> = [1.0, 0.1, 0.01]
            .iter()
            .map(|&s| moreau_smooth(&v, s, 100).unwrap().eval(&x0))
            .collect();
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        assert!(vals[2] <= v.eval(&x0));
    }

    #[test]
    fn indicator_envelope_is_scaled_distance() {
        let v = Potential::new(BoxDomain::cube(1, 3.0).unwrap(), Smoothness::Nonsmooth, |x: &[f64]| {
            if x[0].abs() <= 1.0 {
                0.0
            } else {
                f64::INFINITY
            }
        });
        let vs = moreau_smooth(&v, 0.5, 50).unwrap();
        assert!((vs.eval(&[2.0]) - 2.0).abs() < 1e-9);
        assert_eq!(vs.eval(&[0.3]), 0.0);
    }

    #[test]
    fn budget_exhaustion_reports_nonconvergence() {
        let v = Potential::new(BoxDomain::cube(2, 3.0).unwrap(), Smoothness::C1, |x: &[f64]| {
            50.0 * (x[0] - x[1]).powi(2) + 0.01 * (x[0] + x[1] - 2.0).powi(2)
        });
        let env = MoreauEnvelope::new(v, 10.0, 1).unwrap();
        assert!(matches!(env.solve(&[-2.0, 2.5]), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn rejects_nonpositive_s() {
        assert!(moreau_smooth(&abs1(), 0.0, 10).is_err());
    }
}
