//! Runs the checks of a suite and writes the reports.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use lclab::density::format::fmt17;
use lclab::density::sample;
use lclab::families::{martingale_increment_check, steiner_symmetrize_2d};
use lclab::functions::TestFunctionFamily;
use lclab::inequality::{
    poincare_constant, verify_hj_bound, verify_t2_cube, verify_transport_entropy,
    verify_weighted_poincare, DEFAULT_T_SEQUENCE,
};
use lclab::knothe::entropy_lower_bound;
use lclab::recentering::{conditional_moments, recentered_law, LawMode};
use lclab::report::combine_digests;
use lclab::transport_1d::{cheeger_estimate, verify_one_dim_functional, OneDimMode};
use lclab::variance::{
    borell_ratio, check_variance_bounds, quadratic_variation_check, thin_shell_tail, variance_identity, Decomposition,
    Evaluation, THIN_SHELL_T,
};
use lclab::{BoxDomain, GridDensity, KnotheMap, Measure, Status, VerificationReport};

use crate::config::{CheckSpec, Format, MeasureSpec, SuiteConfig};
use crate::emit::emit_report;
use crate::measures::{scale_shape, Built, MeasureStore};
use crate::CliError;

/// Command-line overrides.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid_scale: f64,
    pub jobs: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { out: None, seed: None, grid_scale: 1.0, jobs: None }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub reports: Vec<VerificationReport>,
    /// 0 when every gating report passes, 1 otherwise.
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
}

struct Ctx<'a> {
    config: &'a SuiteConfig,
    store: MeasureStore<'a>,
    seed: u64,
    grid_scale: f64,
}

impl Ctx<'_> {
    fn built(&self, name: &str) -> Result<&Built, CliError> {
        self.store.get(name)
    }

    fn grid(&self, name: &str) -> Result<&GridDensity<f64>, CliError> {
        self.built(name)?.grid(name)
    }

    fn pair(&self, name: &str) -> Result<(&GridDensity<f64>, &GridDensity<f64>), CliError> {
        let p = self.config.pair(name).ok_or_else(|| CliError::ConfigInvalid(format!("undefined pair `{name}`")))?;
        Ok((self.grid(&p.mu)?, self.grid(&p.nu)?))
    }
}

fn failure(id: String, err: impl std::fmt::Display) -> VerificationReport {
    let mut r = VerificationReport::inequality(id, f64::NAN, f64::NAN, f64::NAN, 0.0);
    r.status = Status::Fail;
    r.note(format!("error: {err}"))
}

fn prefixed(prefix: &str, reports: Vec<VerificationReport>) -> Vec<VerificationReport> {
    reports
        .into_iter()
        .map(|mut r| {
            r.inequality_id = format!("{prefix}/{}", r.inequality_id);
            r
        })
        .collect()
}

/// Runs each target of a check, turning errors into failed reports.
fn per_target<F>(kind: &str, targets: &[String], f: F) -> Vec<VerificationReport>
where
    F: Fn(&str) -> Result<Vec<VerificationReport>, CliError> + Sync,
{
    targets
        .par_iter()
        .map(|t| {
            let prefix = format!("{kind}/{t}");
            match f(t) {
                Ok(r) => prefixed(&prefix, r),
                Err(e) => vec![failure(prefix, e)],
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// `chi^2_n` quantile at 0.9 for `n <= 3`.
fn chi2_90(n: usize) -> Option<f64> {
    [2.705_543_454_095_404, 4.605_170_185_988_091, 6.251_388_631_170_325].get(n.wrapping_sub(1)).copied()
}

fn cholesky(c: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = c.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            l[i][j] = if i == j { (c[i][i] - s).sqrt() } else { (c[i][j] - s) / l[j][j] };
        }
    }
    l
}

fn gaussian_params(cfg: &SuiteConfig, name: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>), CliError> {
    match cfg.measure(name) {
        Some(MeasureSpec::Gaussian { covariance, mean, .. }) => {
            Ok((covariance.clone(), mean.clone().unwrap_or_else(|| vec![0.0; covariance.len()])))
        }
        _ => Err(CliError::ConfigInvalid(format!("measure `{name}` must be a gaussian"))),
    }
}

fn gaussian_recentering(ctx: &Ctx, name: &str, tol: f64) -> Result<Vec<VerificationReport>, CliError> {
    let (c, m) = gaussian_params(ctx.config, name)?;
    if c.len() != 2 {
        return Err(CliError::ConfigInvalid(format!("measure `{name}` must be two-dimensional")));
    }
    let g = ctx.grid(name)?;
    let slope = c[0][1] / c[0][0];
    let cvar = c[1][1] - c[0][1] * c[0][1] / c[0][0];
    let cm = conditional_moments(g);
    let first = g.first_marginal()?;
    let cdf = first.cdf_table();
    let nodes = g.axis(0).nodes();
    let (mut emean, mut evar) = (0.0f64, 0.0f64);
    for (k, &x) in nodes.iter().enumerate() {
        if cdf[k] < 0.025 || cdf[k] > 0.975 {
            continue;
        }
        emean = emean.max((cm.mean_table(1)[k] - (m[1] + slope * (x - m[0]))).abs());
        evar = evar.max((cm.var_table(1)[k] - cvar).abs());
    }
    Ok(vec![
        VerificationReport::identity("conditional_mean", emean, 0.0, tol).with_digest(g.digest()),
        VerificationReport::identity("conditional_variance", evar, 0.0, tol).with_digest(g.digest()),
    ])
}

fn gaussian_knothe(ctx: &Ctx, pair: &str, cells: f64, mtol: f64) -> Result<Vec<VerificationReport>, CliError> {
    let p = ctx.config.pair(pair).expect("validated");
    let (cm, mm) = gaussian_params(ctx.config, &p.mu)?;
    let (cn, mn) = gaussian_params(ctx.config, &p.nu)?;
    let (mu, nu) = ctx.pair(pair)?;
    let n = mu.dim();
    let q = chi2_90(n).ok_or_else(|| CliError::ConfigInvalid("gaussian_knothe supports dimension at most 3".into()))?;
    let (lm, ln) = (cholesky(&cm), cholesky(&cn));
    let map = KnotheMap::new(mu, nu)?;
    let images = map.node_images()?;
    let steps: Vec<f64> = nu.axes().iter().map(|a| a.step()).collect();
    let mut worst = 0.0f64;
    let mut mean = vec![0.0; n];
    let mut second = vec![vec![0.0; n]; n];
    for im in &images {
        for i in 0..n {
            mean[i] += im.mass * im.tx[i];
            for j in 0..n {
                second[i][j] += im.mass * im.tx[i] * im.tx[j];
            }
        }
        // z = L_mu^{-1} (x - m_mu)
        let mut z = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| lm[i][k] * z[k]).sum();
            z[i] = (im.x[i] - mm[i] - s) / lm[i][i];
        }
        if z.iter().map(|v| v * v).sum::<f64>() > q {
            continue;
        }
        for i in 0..n {
            let exact = mn[i] + (0..=i).map(|k| ln[i][k] * z[k]).sum::<f64>();
            worst = worst.max((im.tx[i] - exact).abs() / steps[i]);
        }
    }
    let want_mean = nu.mean_vector();
    let want_cov = nu.covariance();
    let mut merr = 0.0f64;
    for i in 0..n {
        merr = merr.max((mean[i] - want_mean[i]).abs());
        for j in 0..n {
            merr = merr.max((second[i][j] - mean[i] * mean[j] - want_cov[i][j]).abs());
        }
    }
    let digest = combine_digests(&[mu.digest(), nu.digest()]);
    Ok(vec![
        VerificationReport::inequality("map_error_cells", worst, cells, 1.0, 0.0).with_digest(digest.clone()),
        VerificationReport::inequality("pushforward_moments", merr, mtol, 1.0, 0.0).with_digest(digest),
    ])
}

fn family_for(ctx: &Ctx, set: Option<&str>, n: usize) -> Result<TestFunctionFamily<f64>, CliError> {
    let fam = TestFunctionFamily::standard(n);
    match set {
        None => Ok(fam),
        Some(s) => {
            let labels = &ctx.config.function_set(s).expect("validated").labels;
            fam.select(labels)
                .ok_or_else(|| CliError::ConfigInvalid(format!("function set `{s}` names an unknown function")))
        }
    }
}

fn decomposition(ctx: &Ctx, name: &str, samples: Option<usize>, salt: u64) -> Result<Decomposition, CliError> {
    let built = ctx.built(name)?;
    match (&built.measure, samples) {
        (Measure::Grid(g), None) => Ok(Decomposition::of_density(g, &Evaluation::Quadrature)?),
        (Measure::Grid(g), Some(count)) => {
            Ok(Decomposition::of_density(g, &Evaluation::MonteCarlo { count, seed: ctx.seed ^ salt })?)
        }
        (m @ Measure::Samples(_), _) => {
            let check = martingale_increment_check(m, None);
            if !check.passed() {
                return Err(CliError::Check(lclab::Error::NotMartingaleIncrements(check.lhs)));
            }
            Ok(Decomposition::of_martingale_law(m))
        }
    }
}

fn steiner_law(
    ctx: &Ctx,
    body: &str,
    lo: &Option<Vec<f64>>,
    hi: &Option<Vec<f64>>,
    shape: &Option<Vec<usize>>,
    tol: f64,
) -> Result<Vec<VerificationReport>, CliError> {
    let built = ctx.built(body)?;
    let b = built
        .body
        .as_ref()
        .ok_or_else(|| CliError::ConfigInvalid(format!("measure `{body}` is not a polygon")))?;
    let mu = built.grid(body)?;
    let sym = steiner_symmetrize_2d(b)?;
    let domain = match (lo, hi) {
        (Some(l), Some(h)) => BoxDomain::new(l.clone(), h.clone())?,
        _ => {
            let (l, h) = sym.bbox();
            let pad = |j: usize| 0.02 * (h[j] - l[j]);
            BoxDomain::new(vec![l[0] - pad(0), l[1] - pad(1)], vec![h[0] + pad(0), h[1] + pad(1)])?
        }
    };
    let shape = shape.as_ref().map(|s| scale_shape(s, ctx.grid_scale)).unwrap_or_else(|| mu.shape().to_vec());
    let target = GridDensity::build(&sym.potential(Some(domain.clone()))?, &shape)?;
    let law = recentered_law(mu, &LawMode::Grid { domain: Some(domain), shape: Some(shape) })?;
    let pushed = law.as_grid().expect("grid mode");
    let tv = pushed.total_variation(&target)?;
    Ok(vec![VerificationReport::inequality("total_variation", tv, tol, 1.0, 0.0)
        .with_digest(combine_digests(&[mu.digest(), target.digest()]))])
}

fn cheeger(g: &GridDensity<f64>) -> Result<Vec<VerificationReport>, CliError> {
    let (best, lo, hi) = cheeger_estimate(g)?;
    let sandwich = VerificationReport::inequality("sandwich_lower", lo, best, 1.0, 1e-9 * (1.0 + best))
        .with_best(best)
        .with_digest(g.digest())
        .detail("upper", hi)
        .require(best <= hi * (1.0 + 1e-9), format!("estimate {best} above the upper bound {hi}"));
    let mut out = vec![sandwich];
    out.push(verify_one_dim_functional(g, &|x: f64| x, OneDimMode::CheegerMedian)?);
    out.push(verify_one_dim_functional(g, &|x: f64| x.tanh(), OneDimMode::CheegerGammaN)?);
    Ok(out)
}

fn run_check(ctx: &Ctx, index: usize, check: &CheckSpec) -> Vec<VerificationReport> {
    let kind = check.kind();
    let salt = (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    match check {
        CheckSpec::GaussianRecentering { measures, tolerance } => {
            per_target(kind, measures, |m| gaussian_recentering(ctx, m, *tolerance))
        }
        CheckSpec::GaussianKnothe { pairs, cells, moment_tolerance } => {
            per_target(kind, pairs, |p| gaussian_knothe(ctx, p, *cells, *moment_tolerance))
        }
        CheckSpec::EntropyBound { pairs } => per_target(kind, pairs, |p| {
            let (mu, nu) = ctx.pair(p)?;
            let (bound, entropy, margin) = entropy_lower_bound(mu, nu)?;
            Ok(vec![VerificationReport::inequality("entropy", bound, entropy, 1.0, 1e-6)
                .with_digest(combine_digests(&[mu.digest(), nu.digest()]))
                .detail("margin", margin)
                .require(bound >= -1e-6, "Jacobian integrand is negative")])
        }),
        CheckSpec::TransportEntropy { pairs } => per_target(kind, pairs, |p| {
            let (mu, nu) = ctx.pair(p)?;
            Ok(vec![verify_transport_entropy(mu, nu)?])
        }),
        CheckSpec::T2Cube { pairs, radius } => per_target(kind, pairs, |p| {
            let (mu, nu) = ctx.pair(p)?;
            Ok(verify_t2_cube(mu, nu, *radius)?)
        }),
        CheckSpec::WeightedPoincare { measures, functions, constant } => {
            let a = constant.unwrap_or_else(poincare_constant);
            let mut reports = per_target(kind, measures, |m| {
                let g = ctx.grid(m)?;
                let fam = family_for(ctx, functions.as_deref(), g.dim())?;
                Ok(verify_weighted_poincare(g, &fam, a))
            });
            let best = reports.iter().map(|r| r.best_constant_estimate).filter(|v| v.is_finite()).fold(0.0, f64::max);
            reports.push(
                VerificationReport::inequality(format!("{kind}/suite_best_constant"), best, a, 1.0, 1e-6 * a)
                    .with_best(best),
            );
            reports
        }
        CheckSpec::HjBound { mu, nu, functions, t_sequence } => {
            let ts = t_sequence.clone().unwrap_or_else(|| DEFAULT_T_SEQUENCE.to_vec());
            let labels = ctx.config.function_set(functions).expect("validated").labels.clone();
            per_target(kind, &labels, |label| {
                let (g, h) = (ctx.grid(mu)?, ctx.grid(nu)?);
                let fam = family_for(ctx, Some(functions), h.dim())?;
                let f = fam.functions.iter().find(|f| f.label == label).expect("selected");
                let mut r = verify_hj_bound(g, h, f, &ts)?;
                r.inequality_id = "hj_bound".into();
                Ok(vec![r])
            })
        }
        CheckSpec::VarianceBounds { measures, samples } => per_target(kind, measures, |m| {
            let d = decomposition(ctx, m, *samples, salt)?;
            let grid = ctx.built(m)?.measure.as_grid();
            Ok(check_variance_bounds(&d, grid)?)
        }),
        CheckSpec::VarianceIdentity { measures, samples } => {
            per_target(kind, measures, |m| Ok(variance_identity(&decomposition(ctx, m, *samples, salt)?)))
        }
        CheckSpec::Borell { measures, expected, tolerance } => per_target(kind, measures, |m| {
            let g = ctx.grid(m)?;
            Ok((0..g.dim())
                .map(|i| {
                    let r = borell_ratio(g, i);
                    let rep = match expected {
                        Some(e) => VerificationReport::identity(format!("x{}", i + 1), r, *e, *tolerance),
                        None => VerificationReport::inequality(format!("x{}", i + 1), r, f64::NAN, f64::NAN, 0.0)
                            .informational(),
                    };
                    rep.with_best(r).with_digest(g.digest())
                })
                .collect())
        }),
        CheckSpec::Martingale { measures, tolerance } => per_target(kind, measures, |m| {
            Ok(vec![martingale_increment_check(&ctx.built(m)?.measure, *tolerance)])
        }),
        CheckSpec::QuadraticVariation { measures } => {
            per_target(kind, measures, |m| Ok(vec![quadratic_variation_check(&ctx.built(m)?.measure, None)?]))
        }
        CheckSpec::ThinShell { measure, samples, isotropy_tolerance } => {
            per_target(kind, std::slice::from_ref(measure), |m| {
                let s = match &ctx.built(m)?.measure {
                    Measure::Grid(g) => sample(g, *samples, ctx.seed ^ salt)?,
                    Measure::Samples(s) => s.clone(),
                };
                let rows = thin_shell_tail(&s, *isotropy_tolerance, &THIN_SHELL_T)?;
                let monotone = rows.windows(2).all(|w| w[1].probability <= w[0].probability);
                Ok(rows
                    .iter()
                    .map(|row| {
                        VerificationReport::inequality(format!("t={}", row.t), row.probability, f64::NAN, f64::NAN, 0.0)
                            .informational()
                            .with_digest(s.digest())
                            .detail("lower", row.lower)
                            .detail("upper", row.upper)
                            .detail("monotone", if monotone { 1.0 } else { 0.0 })
                    })
                    .collect())
            })
        }
        CheckSpec::SteinerLaw { body, lo, hi, shape, tolerance } => {
            per_target(kind, std::slice::from_ref(body), |b| steiner_law(ctx, b, lo, hi, shape, *tolerance))
        }
        CheckSpec::Cheeger { measures } => per_target(kind, measures, |m| cheeger(ctx.grid(m)?)),
    }
}

fn referenced_measures(cfg: &SuiteConfig) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    let mut push = |n: &str| {
        if !names.iter().any(|m| m == n) {
            names.push(n.to_string());
        }
    };
    for c in &cfg.checks {
        match c {
            CheckSpec::GaussianKnothe { pairs, .. }
            | CheckSpec::EntropyBound { pairs }
            | CheckSpec::TransportEntropy { pairs }
            | CheckSpec::T2Cube { pairs, .. } => {
                for p in pairs {
                    let p = cfg.pair(p).expect("validated");
                    push(&p.mu);
                    push(&p.nu);
                }
            }
            CheckSpec::GaussianRecentering { measures, .. }
            | CheckSpec::WeightedPoincare { measures, .. }
            | CheckSpec::VarianceBounds { measures, .. }
            | CheckSpec::VarianceIdentity { measures, .. }
            | CheckSpec::Borell { measures, .. }
            | CheckSpec::Martingale { measures, .. }
            | CheckSpec::QuadraticVariation { measures }
            | CheckSpec::Cheeger { measures } => measures.iter().for_each(|m| push(m)),
            CheckSpec::HjBound { mu, nu, .. } => {
                push(mu);
                push(nu);
            }
            CheckSpec::ThinShell { measure, .. } => push(measure),
            CheckSpec::SteinerLaw { body, .. } => push(body),
        }
    }
    names
}

/// Executes every check in config order and writes the requested report
/// files into the output directory (if any).
pub fn run_suite(config: &SuiteConfig, opts: &RunOptions) -> Result<SuiteOutcome, CliError> {
    config.validate()?;
    let seed = opts.seed.or(config.seed);
    let mut cfg = config.clone();
    cfg.seed = seed;
    cfg.validate()?;
    if !(opts.grid_scale > 0.0 && opts.grid_scale.is_finite()) {
        return Err(CliError::ConfigInvalid(format!("grid scale must be positive, got {}", opts.grid_scale)));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::ConfigInvalid(format!("thread pool: {e}")))?;
    let reports = pool.install(|| -> Result<Vec<VerificationReport>, CliError> {
        let mut store = MeasureStore::new(&cfg, opts.grid_scale, seed.unwrap_or(0));
        for name in referenced_measures(&cfg) {
            store.build(&name).map_err(|e| match e {
                CliError::Check(err) => CliError::ConfigInvalid(format!("measure `{name}`: {err}")),
                other => other,
            })?;
        }
        let ctx = Ctx { config: &cfg, store, seed: seed.unwrap_or(0), grid_scale: opts.grid_scale };
        let per_check: Vec<Vec<VerificationReport>> =
            cfg.checks.iter().enumerate().map(|(i, c)| run_check(&ctx, i, c)).collect();
        Ok(per_check.into_iter().flatten().collect())
    })?;
    let exit_code = if reports.iter().all(|r| r.passed()) { 0 } else { 1 };
    let mut files = Vec::new();
    if let Some(dir) = opts.out.clone().or_else(|| cfg.output.dir.clone()) {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        for f in &cfg.output.formats {
            let path = dir.join(match f {
                Format::Csv => "reports.csv",
                Format::Json => "reports.json",
            });
            emit_report(&reports, *f, &path)?;
            files.push(path);
        }
        let path = dir.join("summary.txt");
        write_summary(&cfg, &reports, &path)?;
        files.push(path);
    }
    Ok(SuiteOutcome { reports, exit_code, files })
}

fn write_summary(cfg: &SuiteConfig, reports: &[VerificationReport], path: &Path) -> Result<(), CliError> {
    let count = |s: Status| reports.iter().filter(|r| r.status == s).count();
    let mut text = format!(
        "suite {}\nseed {}\nreports {}\npass {}\nfail {}\ninfo {}\n",
        cfg.name.as_deref().unwrap_or("unnamed"),
        cfg.seed.map_or("none".to_string(), |s| s.to_string()),
        reports.len(),
        count(Status::Pass),
        count(Status::Fail),
        count(Status::Info)
    );
    for r in reports.iter().filter(|r| r.inequality_id.ends_with("suite_best_constant")) {
        text.push_str(&format!("{} {}\n", r.inequality_id, fmt17(r.lhs)));
    }
    for r in reports.iter().filter(|r| r.status == Status::Fail) {
        text.push_str(&format!("FAIL {}\n", r.inequality_id));
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
