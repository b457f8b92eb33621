//! Suite configuration: TOML with unknown keys rejected.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Required by any check that samples.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, rename = "measure")]
    pub measures: Vec<MeasureSpec>,
    #[serde(default, rename = "pair")]
    pub pairs: Vec<PairSpec>,
    #[serde(default, rename = "functions")]
    pub function_sets: Vec<FunctionSet>,
    #[serde(default, rename = "check")]
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: None, formats: default_formats() }
    }
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    /// Centered (or shifted by `mean`) Gaussian on `[-radius, radius]^n`.
    Gaussian {
        name: String,
        covariance: Vec<Vec<f64>>,
        #[serde(default)]
        mean: Option<Vec<f64>>,
        radius: f64,
        shape: Vec<usize>,
    },
    /// Product Laplace `exp(-sum |x_i| / s_i)` on `[-radius, radius]^n`.
    Laplace { name: String, scales: Vec<f64>, radius: f64, shape: Vec<usize> },
    /// `exp(theta . x)` on a box.
    UniformBox {
        name: String,
        lo: Vec<f64>,
        hi: Vec<f64>,
        shape: Vec<usize>,
        #[serde(default)]
        theta: Option<Vec<f64>>,
    },
    /// Uniform law on a convex polygon.
    Polygon {
        name: String,
        vertices: Vec<[f64; 2]>,
        #[serde(default)]
        barycenter: bool,
        #[serde(default)]
        steiner: bool,
        shape: Vec<usize>,
        #[serde(default)]
        lo: Option<Vec<f64>>,
        #[serde(default)]
        hi: Option<Vec<f64>>,
    },
    /// `exp(theta . x)` times another grid measure.
    Tilt { name: String, base: String, theta: Vec<f64> },
    /// Law of the embed-and-sum construction of `components`.
    EmbedSum {
        name: String,
        components: Vec<String>,
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default = "default_component_nodes")]
        component_nodes: usize,
        #[serde(default = "default_component_nodes")]
        output_nodes: usize,
    },
}

fn default_component_nodes() -> usize {
    25
}

impl MeasureSpec {
    pub fn name(&self) -> &str {
        match self {
            MeasureSpec::Gaussian { name, .. }
            | MeasureSpec::Laplace { name, .. }
            | MeasureSpec::UniformBox { name, .. }
            | MeasureSpec::Polygon { name, .. }
            | MeasureSpec::Tilt { name, .. }
            | MeasureSpec::EmbedSum { name, .. } => name,
        }
    }

    fn references(&self) -> Vec<&str> {
        match self {
            MeasureSpec::Tilt { base, .. } => vec![base.as_str()],
            MeasureSpec::EmbedSum { components, .. } => components.iter().map(String::as_str).collect(),
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub name: String,
    pub mu: String,
    pub nu: String,
}

/// Named selection from the standard test-function family.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FunctionSet {
    pub name: String,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    /// Conditional mean and variance tables of a 2D Gaussian against the
    /// closed form, on the central 95% of the first marginal.
    GaussianRecentering {
        measures: Vec<String>,
        #[serde(default = "tol_1e4")]
        tolerance: f64,
    },
    /// Knothe map between 2D Gaussians against the Cholesky map.
    GaussianKnothe {
        pairs: Vec<String>,
        #[serde(default = "two")]
        cells: f64,
        #[serde(default = "tol_1e3")]
        moment_tolerance: f64,
    },
    EntropyBound { pairs: Vec<String> },
    TransportEntropy { pairs: Vec<String> },
    T2Cube { pairs: Vec<String>, radius: f64 },
    WeightedPoincare {
        measures: Vec<String>,
        #[serde(default)]
        functions: Option<String>,
        #[serde(default)]
        constant: Option<f64>,
    },
    HjBound {
        mu: String,
        nu: String,
        functions: String,
        #[serde(default)]
        t_sequence: Option<Vec<f64>>,
    },
    VarianceBounds {
        measures: Vec<String>,
        #[serde(default)]
        samples: Option<usize>,
    },
    VarianceIdentity {
        measures: Vec<String>,
        #[serde(default)]
        samples: Option<usize>,
    },
    Borell {
        measures: Vec<String>,
        #[serde(default)]
        expected: Option<f64>,
        #[serde(default = "tol_1e3")]
        tolerance: f64,
    },
    Martingale {
        measures: Vec<String>,
        #[serde(default)]
        tolerance: Option<f64>,
    },
    QuadraticVariation { measures: Vec<String> },
    ThinShell {
        measure: String,
        samples: usize,
        #[serde(default = "tol_2e2")]
        isotropy_tolerance: f64,
    },
    SteinerLaw {
        body: String,
        #[serde(default)]
        lo: Option<Vec<f64>>,
        #[serde(default)]
        hi: Option<Vec<f64>>,
        #[serde(default)]
        shape: Option<Vec<usize>>,
        #[serde(default = "tol_1e2")]
        tolerance: f64,
    },
    Cheeger { measures: Vec<String> },
}

fn tol_1e4() -> f64 {
    1e-4
}
fn tol_1e3() -> f64 {
    1e-3
}
fn tol_1e2() -> f64 {
    1e-2
}
fn tol_2e2() -> f64 {
    2e-2
}
fn two() -> f64 {
    2.0
}

impl CheckSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            CheckSpec::GaussianRecentering { .. } => "gaussian_recentering",
            CheckSpec::GaussianKnothe { .. } => "gaussian_knothe",
            CheckSpec::EntropyBound { .. } => "entropy_bound",
            CheckSpec::TransportEntropy { .. } => "transport_entropy",
            CheckSpec::T2Cube { .. } => "t2_cube",
            CheckSpec::WeightedPoincare { .. } => "weighted_poincare",
            CheckSpec::HjBound { .. } => "hj_bound",
            CheckSpec::VarianceBounds { .. } => "variance_bounds",
            CheckSpec::VarianceIdentity { .. } => "variance_identity",
            CheckSpec::Borell { .. } => "borell",
            CheckSpec::Martingale { .. } => "martingale",
            CheckSpec::QuadraticVariation { .. } => "quadratic_variation",
            CheckSpec::ThinShell { .. } => "thin_shell",
            CheckSpec::SteinerLaw { .. } => "steiner_law",
            CheckSpec::Cheeger { .. } => "cheeger",
        }
    }

    fn measure_refs(&self) -> Vec<&str> {
        match self {
            CheckSpec::GaussianRecentering { measures, .. }
            | CheckSpec::WeightedPoincare { measures, .. }
            | CheckSpec::VarianceBounds { measures, .. }
            | CheckSpec::VarianceIdentity { measures, .. }
            | CheckSpec::Borell { measures, .. }
            | CheckSpec::Martingale { measures, .. }
            | CheckSpec::QuadraticVariation { measures }
            | CheckSpec::Cheeger { measures } => measures.iter().map(String::as_str).collect(),
            CheckSpec::HjBound { mu, nu, .. } => vec![mu.as_str(), nu.as_str()],
            CheckSpec::ThinShell { measure, .. } => vec![measure.as_str()],
            CheckSpec::SteinerLaw { body, .. } => vec![body.as_str()],
            _ => vec![],
        }
    }

    fn pair_refs(&self) -> Vec<&str> {
        match self {
            CheckSpec::GaussianKnothe { pairs, .. }
            | CheckSpec::EntropyBound { pairs }
            | CheckSpec::TransportEntropy { pairs }
            | CheckSpec::T2Cube { pairs, .. } => pairs.iter().map(String::as_str).collect(),
            _ => vec![],
        }
    }

    fn function_refs(&self) -> Vec<&str> {
        match self {
            CheckSpec::WeightedPoincare { functions: Some(f), .. } | CheckSpec::HjBound { functions: f, .. } => {
                vec![f.as_str()]
            }
            _ => vec![],
        }
    }

    /// Whether the check draws random samples.
    pub fn samples(&self) -> bool {
        matches!(
            self,
            CheckSpec::VarianceBounds { samples: Some(_), .. }
                | CheckSpec::VarianceIdentity { samples: Some(_), .. }
                | CheckSpec::ThinShell { .. }
        )
    }
}

impl SuiteConfig {
    /// Parses and validates; errors carry the line and column of the offending key.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: SuiteConfig = toml::from_str(text).map_err(|e| {
            let place = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    let col = s.start - text[..s.start].rfind('\n').map_or(0, |p| p + 1) + 1;
                    format!("line {line}, column {col}: ")
                })
                .unwrap_or_default();
            CliError::ConfigInvalid(format!("{place}{}", e.message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::ConfigInvalid(m));
        let mut measures = HashSet::new();
        for m in &self.measures {
            if !measures.insert(m.name()) {
                return bad(format!("duplicate measure name `{}`", m.name()));
            }
        }
        for m in &self.measures {
            for r in m.references() {
                if !measures.contains(r) {
                    return bad(format!("measure `{}` references undefined measure `{r}`", m.name()));
                }
            }
        }
        self.check_acyclic()?;
        let mut pairs = HashSet::new();
        for p in &self.pairs {
            if !pairs.insert(p.name.as_str()) {
                return bad(format!("duplicate pair name `{}`", p.name));
            }
            for r in [&p.mu, &p.nu] {
                if !measures.contains(r.as_str()) {
                    return bad(format!("pair `{}` references undefined measure `{r}`", p.name));
                }
            }
        }
        let mut sets = HashSet::new();
        for f in &self.function_sets {
            if !sets.insert(f.name.as_str()) {
                return bad(format!("duplicate function set `{}`", f.name));
            }
        }
        for (i, c) in self.checks.iter().enumerate() {
            let at = format!("check {} ({})", i + 1, c.kind());
            for r in c.measure_refs() {
                if !measures.contains(r) {
                    return bad(format!("{at} references undefined measure `{r}`"));
                }
            }
            for r in c.pair_refs() {
                if !pairs.contains(r) {
                    return bad(format!("{at} references undefined pair `{r}`"));
                }
            }
            for r in c.function_refs() {
                if !sets.contains(r) {
                    return bad(format!("{at} references undefined function set `{r}`"));
                }
            }
            if c.samples() && self.seed.is_none() {
                return bad(format!("{at} samples but the suite has no seed"));
            }
        }
        for m in &self.measures {
            if matches!(m, MeasureSpec::EmbedSum { samples: Some(_), .. }) && self.seed.is_none() {
                return bad(format!("measure `{}` samples but the suite has no seed", m.name()));
            }
        }
        Ok(())
    }

    fn check_acyclic(&self) -> Result<(), CliError> {
        let deps: HashMap<&str, Vec<&str>> = self.measures.iter().map(|m| (m.name(), m.references())).collect();
        fn visit<'a>(
            n: &'a str,
            deps: &HashMap<&'a str, Vec<&'a str>>,
            state: &mut HashMap<&'a str, bool>,
        ) -> Result<(), CliError> {
            match state.get(n) {
                Some(true) => return Ok(()),
                Some(false) => return Err(CliError::ConfigInvalid(format!("measure `{n}` depends on itself"))),
                None => {}
            }
            state.insert(n, false);
            for &d in &deps[n] {
                visit(d, deps, state)?;
            }
            state.insert(n, true);
            Ok(())
        }
        let mut state = HashMap::new();
        for m in &self.measures {
            visit(m.name(), &deps, &mut state)?;
        }
        Ok(())
    }

    pub fn measure(&self, name: &str) -> Option<&MeasureSpec> {
        self.measures.iter().find(|m| m.name() == name)
    }

    pub fn pair(&self, name: &str) -> Option<&PairSpec> {
        self.pairs.iter().find(|p| p.name == name)
    }

    pub fn function_set(&self, name: &str) -> Option<&FunctionSet> {
        self.function_sets.iter().find(|f| f.name == name)
    }
}

/// The suite shipped with the binary.
pub const DEFAULT_SUITE: &str = include_str!("../suites/default.toml");
