use super::grid::GridDensity;
use super::sample::SampleSet;
use crate::scalar::Real;

/// A probability law given either on a grid or by samples.
#[derive(Debug, Clone)]
pub enum Measure<T> {
    Grid(GridDensity<T>),
    Samples(SampleSet<T>),
}

impl<T: Real> Measure<T> {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Grid(g) => g.dim(),
            Measure::Samples(s) => s.dim(),
        }
    }

    /// Quadrature or weighted sample mean of `f`.
    pub fn expect<F>(&self, f: F) -> T
    where
        F: Fn(&[T]) -> T + Sync,
    {
        match self {
            Measure::Grid(g) => g.expect(f),
            Measure::Samples(s) => s.expect(f),
        }
    }

    pub fn digest(&self) -> String {
        match self {
            Measure::Grid(g) => g.digest(),
            Measure::Samples(s) => s.digest(),
        }
    }

    pub fn as_grid(&self) -> Option<&GridDensity<T>> {
        match self {
            Measure::Grid(g) => Some(g),
            Measure::Samples(_) => None,
        }
    }

    pub fn as_samples(&self) -> Option<&SampleSet<T>> {
        match self {
            Measure::Samples(s) => Some(s),
            Measure::Grid(_) => None,
        }
    }

    /// Support points with their probabilities (grid nodes carry quadrature mass).
    pub fn atoms(&self) -> Vec<(Vec<T>, T)> {
        match self {
            Measure::Grid(g) => {
                let mut idx = vec![0usize; g.dim()];
                (0..g.len())
                    .filter(|&f| g.values()[f] > T::zero())
                    .map(|f| {
                        g.unravel(f, &mut idx);
                        (g.point(&idx), g.node_weight(&idx) * g.values()[f])
                    })
                    .collect()
            }
            Measure::Samples(s) => s.points().iter().cloned().zip(s.weights().iter().copied()).collect(),
        }
    }
}

impl<T> From<GridDensity<T>> for Measure<T> {
    fn from(g: GridDensity<T>) -> Self {
        Measure::Grid(g)
    }
}

impl<T> From<SampleSet<T>> for Measure<T> {
    fn from(s: SampleSet<T>) -> Self {
        Measure::Samples(s)
    }
}
