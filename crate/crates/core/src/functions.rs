//! Test functions with analytic gradients, and finite-difference gradients.

use std::sync::Arc;

use crate::scalar::Real;

pub type ScalarFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;
pub type GradFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;

#[derive(Clone)]
pub struct TestFunction<T> {
    pub label: String,
    pub f: ScalarFn<T>,
    pub grad: Option<GradFn<T>>,
    /// Lipschitz constant on the whole space, when known.
    pub lipschitz: Option<f64>,
    /// `sup |f|`, when finite and known.
    pub sup_abs: Option<f64>,
}

impl<T> std::fmt::Debug for TestFunction<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction").field("label", &self.label).finish_non_exhaustive()
    }
}

impl<T: Real> TestFunction<T> {
    pub fn new<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[T]) -> T + Send + Sync + 'static,
    {
        TestFunction { label: label.into(), f: Arc::new(f), grad: None, lipschitz: None, sup_abs: None }
    }

    pub fn with_grad<G>(mut self, g: G) -> Self
    where
        G: Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(g));
        self
    }

    pub fn with_bounds(mut self, lipschitz: f64, sup_abs: f64) -> Self {
        self.lipschitz = Some(lipschitz);
        self.sup_abs = Some(sup_abs);
        self
    }

    pub fn eval(&self, x: &[T]) -> T {
        (self.f)(x)
    }

    /// Analytic gradient when provided, otherwise [`fd_gradient`].
    pub fn gradient(&self, x: &[T], step: &[T]) -> Vec<T> {
        match &self.grad {
            Some(g) => g(x),
            None => fd_gradient(&*self.f, x, step),
        }
    }
}

/// Fourth-order central differences `(-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h`.
pub fn fd_gradient<T: Real>(f: &(dyn Fn(&[T]) -> T + Send + Sync), x: &[T], step: &[T]) -> Vec<T> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = step[j];
            let mut at = |d: T| {
                y[j] = x[j] + d;
                let v = f(&y);
                y[j] = x[j];
                v
            };
            let (p2, p1, m1, m2) = (at(h + h), at(h), at(-h), at(-h - h));
            (m2 - p2 + T::lit(8.0) * (p1 - m1)) / (T::lit(12.0) * h)
        })
        .collect()
}

/// Named list of test functions.
#[derive(Debug, Clone, Default)]
pub struct TestFunctionFamily<T> {
    pub functions: Vec<TestFunction<T>>,
}

impl<T: Real> TestFunctionFamily<T> {
    pub fn labels(&self) -> Vec<&str> {
        self.functions.iter().map(|f| f.label.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn select(&self, labels: &[String]) -> Option<Self> {
        let functions = labels
            .iter()
            .map(|l| self.functions.iter().find(|f| &f.label == l).cloned())
            .collect::<Option<Vec<_>>>()?;
        Some(TestFunctionFamily { functions })
    }

    /// Thirteen functions in dimension `n`: coordinates, `|x|^2`, a product,
    /// Gaussian bumps, 1-Lipschitz ridges along unit directions, and the
    /// kinked `min(1, x1)` (no analytic gradient).
    pub fn standard(n: usize) -> Self {
        let last = n - 1;
        let lit = T::lit;
        let unit = lit(1.0 / (n as f64).sqrt());
        let alt: Vec<T> = (0..n).map(|j| if j % 2 == 0 { unit } else { -unit }).collect();
        let ones = vec![unit; n];
        let dot = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |s, (&u, &v)| s + u * v);
        let mut fs: Vec<TestFunction<T>> = Vec::new();

        fs.push(
            TestFunction::new("x1", |x: &[T]| x[0])
                .with_grad(move |x: &[T]| (0..x.len()).map(|j| if j == 0 { T::one() } else { T::zero() }).collect()),
        );
        fs.push(
            TestFunction::new("xn", move |x: &[T]| x[last])
                .with_grad(move |x: &[T]| (0..x.len()).map(|j| if j == last { T::one() } else { T::zero() }).collect()),
        );
        fs.push(
            TestFunction::new("norm_sq", |x: &[T]| x.iter().fold(T::zero(), |s, &v| s + v * v))
                .with_grad(|x: &[T]| x.iter().map(|&v| v + v).collect()),
        );
        fs.push(TestFunction::new("x1_xn", move |x: &[T]| x[0] * x[last]).with_grad(move |x: &[T]| {
            let mut g = vec![T::zero(); x.len()];
            g[0] = g[0] + x[last];
            g[last] = g[last] + x[0];
            g
        }));
        for (label, c) in [("bump_0", 0.0), ("bump_half", 0.5)] {
            let c = lit(c);
            fs.push(
                TestFunction::new(label, move |x: &[T]| {
                    (-x.iter().fold(T::zero(), |s, &v| s + (v - c) * (v - c)) / lit(2.0)).exp()
                })
                .with_grad(move |x: &[T]| {
                    let e = (-x.iter().fold(T::zero(), |s, &v| s + (v - c) * (v - c)) / lit(2.0)).exp();
                    x.iter().map(|&v| -(v - c) * e).collect()
                }),
            );
        }
        {
            let th = ones.clone();
            let th2 = ones.clone();
            fs.push(
                TestFunction::new("sin_ridge", move |x: &[T]| dot(&th, x).sin())
                    .with_grad(move |x: &[T]| {
                        let c = dot(&th2, x).cos();
                        th2.iter().map(|&t| t * c).collect()
                    })
                    .with_bounds(1.0, 1.0),
            );
        }
        {
            let th = alt.clone();
            let th2 = alt.clone();
            fs.push(
                TestFunction::new("logcosh_ridge", move |x: &[T]| dot(&th, x).cosh().ln())
                    .with_grad(move |x: &[T]| {
                        let t = dot(&th2, x).tanh();
                        th2.iter().map(|&a| a * t).collect()
                    }),
            );
        }
        fs.push(
            TestFunction::new("tanh_x1", |x: &[T]| x[0].tanh())
                .with_grad(|x: &[T]| {
                    let s = T::one() / x[0].cosh();
                    (0..x.len()).map(|j| if j == 0 { s * s } else { T::zero() }).collect()
                })
                .with_bounds(1.0, 1.0),
        );
        {
            let th = alt.clone();
            let th2 = alt;
            fs.push(
                TestFunction::new("atan_ridge", move |x: &[T]| dot(&th, x).atan())
                    .with_grad(move |x: &[T]| {
                        let u = dot(&th2, x);
                        let d = T::one() / (T::one() + u * u);
                        th2.iter().map(|&a| a * d).collect()
                    })
                    .with_bounds(1.0, std::f64::consts::FRAC_PI_2),
            );
        }
        fs.push(TestFunction::new("x1_plus_xn_sq", move |x: &[T]| x[0] + x[last] * x[last]).with_grad(move |x: &[T]| {
            let mut g = vec![T::zero(); x.len()];
            g[0] = T::one();
            g[last] = g[last] + x[last] + x[last];
            g
        }));
        {
            let th = ones.clone();
            let th2 = ones;
            fs.push(
                TestFunction::new("cos_ridge", move |x: &[T]| (lit(2.0) * dot(&th, x)).cos() / lit(2.0))
                    .with_grad(move |x: &[T]| {
                        let s = -(lit(2.0) * dot(&th2, x)).sin();
                        th2.iter().map(|&a| a * s).collect()
                    })
                    .with_bounds(1.0, 0.5),
            );
        }
        fs.push(TestFunction::new("min1_x1", |x: &[T]| x[0].min(T::one())));
        TestFunctionFamily { functions: fs }
    }
}
