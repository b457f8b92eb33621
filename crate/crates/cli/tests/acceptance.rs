//! Acceptance criteria, evaluated on the bundled suite. Prints one line per
//! criterion and fails if any criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use lclab::families::make_gaussian;
use lclab::inequality::fatou_constant;
use lclab::recentering::conditional_moments;
use lclab::{GridDensity, Status, VerificationReport};
use lclab_cli::config::MeasureSpec;
use lclab_cli::{run_suite, RunOptions, SuiteConfig, DEFAULT_SUITE};

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

struct Run {
    cfg: SuiteConfig,
    reports: Vec<VerificationReport>,
    elapsed: Duration,
    dir: tempfile::TempDir,
}

impl Run {
    fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a VerificationReport> + 'a {
        self.reports.iter().filter(move |r| r.inequality_id.starts_with(prefix))
    }

    fn get(&self, id: &str) -> Option<&VerificationReport> {
        self.reports.iter().find(|r| r.inequality_id == id)
    }

    fn dim(&self, measure: &str) -> usize {
        match self.cfg.measure(measure).unwrap() {
            MeasureSpec::Gaussian { covariance, .. } => covariance.len(),
            MeasureSpec::Laplace { scales, .. } => scales.len(),
            MeasureSpec::UniformBox { lo, .. } => lo.len(),
            MeasureSpec::Polygon { .. } => 2,
            MeasureSpec::Tilt { base, .. } => self.dim(base),
            MeasureSpec::EmbedSum { components, .. } => self.dim(&components[0]) + 1,
        }
    }
}

/// Target of a `{kind}/{target}/...` report id.
fn target(r: &VerificationReport) -> &str {
    r.inequality_id.split('/').nth(1).unwrap_or("")
}

fn all_pass<'a>(rs: impl Iterator<Item = &'a VerificationReport>) -> (usize, Vec<String>) {
    let mut n = 0;
    let mut bad = Vec::new();
    for r in rs {
        n += 1;
        if r.status == Status::Fail {
            bad.push(r.inequality_id.clone());
        }
    }
    (n, bad)
}

fn recentering_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, 0.0f64);
    for rho in [0.0, 0.3, 0.5, 0.8] {
        let p = make_gaussian::<f64>(2, &[vec![1.0, rho], vec![rho, 1.0]], 8.0).unwrap();
        let g = GridDensity::build(&p, &[512, 512]).unwrap();
        let cm = conditional_moments(&g);
        let cdf = g.first_marginal().unwrap().cdf_table().to_vec();
        for (k, x) in g.axis(0).nodes().into_iter().enumerate() {
            if cdf[k] < 0.025 || cdf[k] > 0.975 {
                continue;
            }
            worst.0 = worst.0.max((cm.mean_table(1)[k] - rho * x).abs());
            worst.1 = worst.1.max((cm.var_table(1)[k] - (1.0 - rho * rho)).abs());
        }
    }
    let t = start.elapsed();
    outcome(
        worst.0 <= 1e-4 && worst.1 <= 1e-4 && t < Duration::from_secs(30),
        format!("max mean error {:.2e}, max variance error {:.2e}, {:.1}s", worst.0, worst.1, t.as_secs_f64()),
    )
}

fn knothe_against_cholesky(run: &Run) -> Outcome {
    let maps: Vec<_> = run.with_prefix("gaussian_knothe/gk_").collect();
    let cells = maps.iter().filter(|r| r.inequality_id.ends_with("map_error_cells")).map(|r| r.lhs).fold(0.0, f64::max);
    let moments =
        maps.iter().filter(|r| r.inequality_id.ends_with("pushforward_moments")).map(|r| r.lhs).fold(0.0, f64::max);
    outcome(
        maps.len() >= 2 && cells <= 2.0 && moments <= 1e-3,
        format!("{} pairs, worst map error {cells:.3} cells, worst moment error {moments:.2e}", maps.len() / 2),
    )
}

fn entropy_lower_bound(run: &Run) -> Outcome {
    let (n, bad) = all_pass(run.with_prefix("entropy_bound/"));
    let worst = run.with_prefix("entropy_bound/").map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let vc = run.get("entropy_bound/g1_variance_change/entropy");
    let anchor = vc.is_some_and(|r| (r.lhs - 0.19315).abs() <= 1e-3 && (r.rhs - 0.31815).abs() <= 1e-3);
    let (b, e) = vc.map_or((f64::NAN, f64::NAN), |r| (r.lhs, r.rhs));
    outcome(
        n >= 12 && bad.is_empty() && worst >= -1e-6 && anchor,
        format!("{n} pairs, min margin {worst:.3e}, variance change bound {b:.5} entropy {e:.5} {bad:?}"),
    )
}

fn coupling_transport_entropy(run: &Run) -> Outcome {
    let (n, bad) = all_pass(run.with_prefix("transport_entropy/"));
    let dims: BTreeSet<usize> =
        run.with_prefix("transport_entropy/").map(|r| run.dim(&run.cfg.pair(target(r)).unwrap().mu)).collect();
    outcome(
        n >= 12 && bad.is_empty() && dims.contains(&2) && dims.contains(&3),
        format!("{n} pairs in dimensions {dims:?} {bad:?}"),
    )
}

fn weighted_poincare(run: &Run) -> Outcome {
    let mut per: HashMap<&str, usize> = HashMap::new();
    let reps: Vec<_> = run
        .with_prefix("weighted_poincare/")
        .filter(|r| !r.inequality_id.ends_with("suite_best_constant"))
        .collect();
    for r in &reps {
        *per.entry(target(r)).or_default() += 1;
    }
    let bad: Vec<_> = reps.iter().filter(|r| r.status == Status::Fail).map(|r| r.inequality_id.clone()).collect();
    let bodies = per
        .keys()
        .filter(|m| matches!(run.cfg.measure(m), Some(MeasureSpec::Polygon { steiner: false, .. })))
        .count();
    let best = run.get("weighted_poincare/suite_best_constant").map_or(f64::NAN, |r| r.lhs);
    let min_fns = per.values().copied().min().unwrap_or(0);
    outcome(
        per.len() >= 8 && min_fns >= 10 && bodies >= 1 && bad.is_empty() && best <= 63.43,
        format!("{} measures ({bodies} non-symmetric bodies) x {min_fns}+ functions, best constant {best:.4} {bad:?}", per.len()),
    )
}

fn variance_identity(run: &Run) -> Outcome {
    let ids: Vec<_> = run
        .with_prefix("variance_identity/")
        .filter(|r| r.inequality_id.ends_with("/variance_identity") || r.inequality_id.contains("/orthogonality/"))
        .collect();
    let (n, bad) = all_pass(ids.iter().copied());
    let measures: BTreeSet<&str> = ids.iter().map(|r| target(r)).collect();
    let worst = ids
        .iter()
        .filter(|r| r.inequality_id.ends_with("/variance_identity"))
        .map(|r| (r.lhs - r.rhs).abs() / r.detail_value("e_norm4").unwrap())
        .fold(0.0, f64::max);
    outcome(
        n > 0 && bad.is_empty() && ids.iter().all(|r| r.status == Status::Pass),
        format!("{} measures, worst relative residual {worst:.2e} {bad:?}", measures.len()),
    )
}

fn variance_anchors(run: &Run) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (m, n) in [("g1", 1.0), ("g2_r00", 2.0), ("g3", 3.0)] {
        let v = run.get(&format!("variance_bounds/{m}/variance_norm_sq")).map_or(f64::NAN, |r| r.lhs);
        ok &= (v - 2.0 * n).abs() <= 1e-3;
        notes.push(format!("n={n}: {v:.6}"));
    }
    let fourth: Vec<_> = run.with_prefix("variance_bounds/").filter(|r| r.inequality_id.contains("/fourth_moment/")).collect();
    let (nf, bad) = all_pass(fourth.iter().copied());
    let borell = run.get("borell/lap1_wide/x1");
    ok &= nf > 0 && bad.is_empty() && borell.is_some_and(|r| r.status == Status::Pass);
    outcome(
        ok,
        format!("Var|X|^2 {}, {nf} fourth-moment bounds, Laplace Borell {:.5} {bad:?}", notes.join(", "), borell.map_or(f64::NAN, |r| r.lhs)),
    )
}

fn steiner_law(run: &Run) -> Outcome {
    let r = run.with_prefix("steiner_law/").next();
    let shape_ok = r.is_some_and(|r| {
        matches!(run.cfg.measure(target(r)), Some(MeasureSpec::Polygon { shape, barycenter: true, .. }) if shape[0] >= 512 && shape[1] >= 512)
    });
    let tv = r.map_or(f64::NAN, |r| r.lhs);
    outcome(shape_ok && tv <= 1e-2 && r.is_some_and(|r| r.status == Status::Pass), format!("total variation {tv:.3e}"))
}

fn cube_weight_floor(run: &Run) -> Outcome {
    let floors: Vec<_> = run.with_prefix("t2_cube/").filter(|r| r.inequality_id.ends_with("weight_floor")).collect();
    let radii: BTreeSet<String> = floors.iter().map(|r| format!("{}", (1.0 / (6.0 * r.lhs)).sqrt())).collect();
    let ratios: Vec<f64> =
        run.with_prefix("t2_cube/").filter(|r| r.inequality_id.ends_with("/ratio")).map(|r| r.best_constant_estimate).collect();
    let (_, bad) = all_pass(floors.iter().copied());
    let want: BTreeSet<String> = ["0.5", "1", "2"].iter().map(|s| s.to_string()).collect();
    outcome(
        bad.is_empty() && radii == want && ratios.len() == 3 && ratios.iter().all(|c| c.is_finite()),
        format!("radii {radii:?}, ratios {ratios:.4?} {bad:?}"),
    )
}

fn sup_convolution_bound(run: &Run) -> Outcome {
    let reps: Vec<_> = run.with_prefix("hj_bound/").collect();
    let (n, bad) = all_pass(reps.iter().copied());
    let a = fatou_constant();
    let fatou_ok = reps.iter().all(|r| {
        r.detail_value("fatou_a").is_some_and(|v| (v - a).abs() < 1e-12)
            && r.detail_value("fatou_worst_ratio").is_some_and(|v| v <= 1.0)
    });
    let q: Vec<String> = reps.iter().map(|r| format!("{:.3}<={:.3}", r.lhs, r.rhs)).collect();
    outcome(n >= 3 && bad.is_empty() && fatou_ok, format!("{n} functions, quotients {q:?}, a = {a:.4} {bad:?}"))
}

fn determinism(first: &Run, second: &Run) -> Outcome {
    let same = ["reports.csv", "reports.json", "summary.txt"].iter().all(|f| {
        std::fs::read(first.dir.path().join(f)).ok() == std::fs::read(second.dir.path().join(f)).ok()
    });
    let t = first.elapsed.max(second.elapsed);
    outcome(same && t < Duration::from_secs(600), format!("identical files: {same}, slowest run {:.1}s", t.as_secs_f64()))
}

fn run_default(jobs: Option<usize>) -> Run {
    let cfg = SuiteConfig::parse(DEFAULT_SUITE).expect("bundled suite parses");
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = run_suite(&cfg, &RunOptions { out: Some(dir.path().into()), jobs, ..Default::default() }).expect("suite runs");
    Run { cfg, reports: out.reports, elapsed: start.elapsed(), dir }
}

fn main() {
    let first = run_default(None);
    let second = run_default(Some(2));
    let results = [
        ("recentering exactness", recentering_exactness()),
        ("Knothe map against Cholesky", knothe_against_cholesky(&first)),
        ("entropy lower bound", entropy_lower_bound(&first)),
        ("coupling transport-entropy", coupling_transport_entropy(&first)),
        ("weighted Poincare", weighted_poincare(&first)),
        ("variance identity", variance_identity(&first)),
        ("variance anchors", variance_anchors(&first)),
        ("Steiner law", steiner_law(&first)),
        ("cube weight floor", cube_weight_floor(&first)),
        ("sup-convolution bound", sup_convolution_bound(&first)),
        ("determinism and runtime", determinism(&first, &second)),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.ok { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.ok);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
