//! Builds the measures named in a suite.

use std::collections::HashMap;

use lclab::density::MIN_AXIS_NODES;
use lclab::families::{embed_sum_construction, make_convex_body_2d, make_gaussian, steiner_symmetrize_2d, EmbedMode};
use lclab::{BoxDomain, ConvexBody2d, GridDensity, Measure, Potential, Smoothness};

use crate::config::{MeasureSpec, SuiteConfig};
use crate::CliError;

/// A measure with the convex body it came from, if any.
#[derive(Debug, Clone)]
pub struct Built {
    pub measure: Measure<f64>,
    pub body: Option<ConvexBody2d>,
}

impl Built {
    pub fn grid(&self, name: &str) -> Result<&GridDensity<f64>, CliError> {
        self.measure
            .as_grid()
            .ok_or_else(|| CliError::ConfigInvalid(format!("measure `{name}` is a sample set; a grid is required")))
    }
}

/// Scales the interval count of each axis by `s`.
pub fn scale_shape(shape: &[usize], s: f64) -> Vec<usize> {
    shape
        .iter()
        .map(|&m| ((((m.max(1) - 1) as f64) * s).round() as usize + 1).max(MIN_AXIS_NODES))
        .collect()
}

pub struct MeasureStore<'a> {
    config: &'a SuiteConfig,
    grid_scale: f64,
    seed: u64,
    built: HashMap<String, Built>,
}

impl<'a> MeasureStore<'a> {
    pub fn new(config: &'a SuiteConfig, grid_scale: f64, seed: u64) -> Self {
        MeasureStore { config, grid_scale, seed, built: HashMap::new() }
    }

    /// Builds `name` and everything it depends on.
    pub fn build(&mut self, name: &str) -> Result<&Built, CliError> {
        if !self.built.contains_key(name) {
            let spec = self
                .config
                .measure(name)
                .ok_or_else(|| CliError::ConfigInvalid(format!("undefined measure `{name}`")))?
                .clone();
            let b = self.make(&spec)?;
            self.built.insert(name.to_string(), b);
        }
        Ok(&self.built[name])
    }

    pub fn get(&self, name: &str) -> Result<&Built, CliError> {
        self.built.get(name).ok_or_else(|| CliError::ConfigInvalid(format!("measure `{name}` was not built")))
    }

    fn make(&mut self, spec: &MeasureSpec) -> Result<Built, CliError> {
        let grid = |p: &Potential<f64>, shape: &[usize], s: f64| -> Result<Measure<f64>, CliError> {
            Ok(GridDensity::build(p, &scale_shape(shape, s))?.into())
        };
        let s = self.grid_scale;
        let check_dim = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(CliError::ConfigInvalid(format!("measure `{}`: {what} has length {got}, expected {want}", spec.name())))
            }
        };
        match spec {
            MeasureSpec::Gaussian { covariance, mean, radius, shape, .. } => {
                let n = covariance.len();
                check_dim("shape", shape.len(), n)?;
                let base = make_gaussian::<f64>(n, covariance, *radius)?;
                let p = match mean {
                    None => base,
                    Some(m) => {
                        check_dim("mean", m.len(), n)?;
                        let m = m.clone();
                        let f = base.function();
                        Potential::new(base.domain().clone(), Smoothness::C1, move |x: &[f64]| {
                            let y: Vec<f64> = x.iter().zip(&m).map(|(a, b)| a - b).collect();
                            f(&y)
                        })
                    }
                };
                Ok(Built { measure: grid(&p, shape, s)?, body: None })
            }
            MeasureSpec::Laplace { scales, radius, shape, .. } => {
                check_dim("shape", shape.len(), scales.len())?;
                let sc = scales.clone();
                let p = Potential::new(BoxDomain::cube(sc.len(), *radius)?, Smoothness::Nonsmooth, move |x: &[f64]| {
                    x.iter().zip(&sc).map(|(v, s)| v.abs() / s).sum()
                });
                Ok(Built { measure: grid(&p, shape, s)?, body: None })
            }
            MeasureSpec::UniformBox { lo, hi, shape, theta, .. } => {
                check_dim("shape", shape.len(), lo.len())?;
                let th = theta.clone().unwrap_or_else(|| vec![0.0; lo.len()]);
                check_dim("theta", th.len(), lo.len())?;
                let p = Potential::new(BoxDomain::new(lo.clone(), hi.clone())?, Smoothness::C1, move |x: &[f64]| {
                    -x.iter().zip(&th).map(|(a, b)| a * b).sum::<f64>()
                });
                Ok(Built { measure: grid(&p, shape, s)?, body: None })
            }
            MeasureSpec::Polygon { vertices, barycenter, steiner, shape, lo, hi, .. } => {
                check_dim("shape", shape.len(), 2)?;
                let mut body = make_convex_body_2d(vertices)?;
                if *barycenter {
                    body = body.barycentered();
                }
                if *steiner {
                    body = steiner_symmetrize_2d(&body)?;
                }
                let domain = match (lo, hi) {
                    (Some(l), Some(h)) => Some(BoxDomain::new(l.clone(), h.clone())?),
                    (None, None) => None,
                    _ => return Err(CliError::ConfigInvalid(format!("measure `{}`: give both lo and hi", spec.name()))),
                };
                let p = body.potential::<f64>(domain)?;
                Ok(Built { measure: grid(&p, shape, s)?, body: Some(body) })
            }
            MeasureSpec::Tilt { base, theta, .. } => {
                let g = self.build(base)?.grid(base)?.clone();
                check_dim("theta", theta.len(), g.dim())?;
                let th = theta.clone();
                let t = g.reweight(move |x: &[f64]| x.iter().zip(&th).map(|(a, b)| a * b).sum())?;
                Ok(Built { measure: t.into(), body: None })
            }
            MeasureSpec::EmbedSum { components, samples, component_nodes, output_nodes, .. } => {
                let comps = components
                    .iter()
                    .map(|c| Ok(self.build(c)?.measure.clone()))
                    .collect::<Result<Vec<_>, CliError>>()?;
                let mode = match samples {
                    Some(count) => EmbedMode::Samples { count: *count, seed: self.seed },
                    None => EmbedMode::Grid { component_nodes: *component_nodes, output_nodes: *output_nodes },
                };
                Ok(Built { measure: embed_sum_construction(&comps, &mode, true)?, body: None })
            }
        }
    }
}
