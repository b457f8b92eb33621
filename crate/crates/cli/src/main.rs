use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lclab::density::format::{fmt17, write_binary, write_text};
use lclab::recentering::{build_recentering, conditional_moments};
use lclab::KnotheMap;
use lclab_cli::measures::MeasureStore;
use lclab_cli::{run_suite, CliError, RunOptions, SuiteConfig, DEFAULT_SUITE};

#[derive(Parser)]
#[command(name = "lclab", version, about = "Transport maps and inequality checks for log-concave densities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Suite file; the bundled default suite when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the suite seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplier on the number of grid intervals of every measure.
    #[arg(long, default_value_t = 1.0)]
    grid_scale: f64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapKind {
    Knothe,
    Recentering,
}

#[derive(Clone, Copy, ValueEnum)]
enum DensityFormat {
    Text,
    Binary,
}

#[derive(Subcommand)]
enum Command {
    /// Run a suite and write reports.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Output directory (overrides the suite's).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump a Knothe or recentering map at the source nodes.
    Map {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "knothe")]
        kind: MapKind,
        /// Source measure.
        #[arg(long)]
        mu: String,
        /// Target measure (Knothe only).
        #[arg(long)]
        nu: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a measure of the suite as a grid density file.
    Example {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        measure: String,
        #[arg(long, value_enum, default_value = "text")]
        format: DensityFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the conditional mean and variance tables of a measure as CSV.
    Moments {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        measure: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<SuiteConfig, CliError> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        None => DEFAULT_SUITE.to_string(),
    };
    let mut cfg = SuiteConfig::parse(&text)?;
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    Ok(cfg)
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn grid_of(store: &mut MeasureStore, name: &str) -> Result<lclab::GridDensity<f64>, CliError> {
    Ok(store.build(name)?.grid(name)?.clone())
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(" ")
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Verify { common, out } => {
            let cfg = load(&common)?;
            let opts = RunOptions { out, seed: common.seed, grid_scale: common.grid_scale, jobs: common.jobs };
            let outcome = run_suite(&cfg, &opts)?;
            let failed: Vec<_> = outcome.reports.iter().filter(|r| !r.passed()).collect();
            for r in &failed {
                eprintln!("FAIL {}", r.inequality_id);
            }
            println!("{} reports, {} failed", outcome.reports.len(), failed.len());
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            Ok(outcome.exit_code)
        }
        Command::Map { common, kind, mu, nu, out } => {
            let cfg = load(&common)?;
            let mut store = MeasureStore::new(&cfg, common.grid_scale, cfg.seed.unwrap_or(0));
            let g = grid_of(&mut store, &mu)?;
            let mut w = sink(&out)?;
            match kind {
                MapKind::Knothe => {
                    let nu = nu.ok_or_else(|| CliError::ConfigInvalid("--nu is required for a Knothe map".into()))?;
                    let h = grid_of(&mut store, &nu)?;
                    let map = KnotheMap::new(&g, &h)?;
                    writeln!(w, "# knothe dim {} : x | T(x) | diag jacobian", g.dim())?;
                    for im in map.node_images()? {
                        writeln!(w, "{} | {} | {}", join(&im.x), join(&im.tx), join(&im.jacobian))?;
                    }
                }
                MapKind::Recentering => {
                    let pair = build_recentering(&g);
                    writeln!(w, "# recentering dim {} : x | R(x)", g.dim())?;
                    let mut idx = vec![0usize; g.dim()];
                    for flat in 0..g.len() {
                        if g.values()[flat] <= 0.0 {
                            continue;
                        }
                        g.unravel(flat, &mut idx);
                        let x = g.point(&idx);
                        writeln!(w, "{} | {}", join(&x), join(&pair.r(&x)?))?;
                    }
                }
            }
            w.flush()?;
            Ok(0)
        }
        Command::Example { common, measure, format, out } => {
            let cfg = load(&common)?;
            let mut store = MeasureStore::new(&cfg, common.grid_scale, cfg.seed.unwrap_or(0));
            let g = grid_of(&mut store, &measure)?;
            let mut w = sink(&out)?;
            match format {
                DensityFormat::Text => write_text(&g, &mut w)?,
                DensityFormat::Binary => write_binary(&g, &mut w)?,
            }
            w.flush()?;
            Ok(0)
        }
        Command::Moments { common, measure, out } => {
            let cfg = load(&common)?;
            let mut store = MeasureStore::new(&cfg, common.grid_scale, cfg.seed.unwrap_or(0));
            let g = grid_of(&mut store, &measure)?;
            let mut w = sink(&out)?;
            w.write_all(conditional_moments(&g).to_csv().as_bytes())?;
            w.flush()?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

