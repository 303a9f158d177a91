//! `semidirac`: spectra and bound-state bounds for perturbed semi-Dirac
//! Hamiltonians.
//!
//! Exit status is 0 on success, 1 for usage or validation errors and 2 when a
//! computation or file write fails.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use semidirac::eigensolve::{eigenfunction_magnitude, SampleGrid, SpectralResult, SolverDiagnostics};
use semidirac::model::{dispersion, validate_potential};
use semidirac::pipeline::output::{
    bounds_records, eigencurve_records, fmt_f64, write_field, write_records, BOUNDS_HEADER, EIGENCURVES_HEADER,
};
use semidirac::pipeline::sweep::sweep_prepared;
use semidirac::pipeline::{load_config, write_outputs, Format, Prepared, RunConfig, SweepRow};
use semidirac::testfn::{qform_convergence, Sign};
use semidirac::Vec2;

#[derive(Parser)]
#[command(name = "semidirac", version, about = "Bound states of perturbed semi-Dirac Hamiltonians")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Write results into this directory instead of stdout.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutFormat>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Plus,
    Minus,
}

#[derive(Subcommand)]
enum Command {
    /// Band energies E±(k) on a square k-grid.
    Dispersion {
        #[command(flatten)]
        common: Common,
        /// Gap half-width; taken from the config when omitted.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 3.0)]
        k_max: f64,
        /// Grid points per axis.
        #[arg(long, default_value_t = 31)]
        points: usize,
    },
    /// Analytic bounds for one coupling or the config's grid.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Quadratic-form convergence table for the cutoff test functions.
    Qform {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2.5)]
        epsilon: f64,
        #[arg(long, value_enum, default_value = "plus")]
        sign: SignArg,
    },
    /// Gap spectrum at a single coupling.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: f64,
    },
    /// Spectrum and bounds over the config's coupling grid.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Check the config and potential without computing anything.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome = Result<(), Failure>;

trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Validation(e.into()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn require_config(common: &Common) -> Result<RunConfig, Failure> {
    let path = common.config.as_deref().ok_or_else(|| Failure::Validation(anyhow!("--config is required")))?;
    load_config(path).invalid()
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Dispersion { common, delta, k_max, points } => {
            let delta = match (delta, &common.config) {
                (Some(d), _) => d,
                (None, Some(_)) => require_config(&common)?.delta,
                (None, None) => return Err(Failure::Validation(anyhow!("pass --delta or --config"))),
            };
            if !(delta.is_finite() && delta > 0.0) {
                return Err(Failure::Validation(anyhow!("delta must be positive, got {delta}")));
            }
            if points < 2 || !(k_max.is_finite() && k_max > 0.0) {
                return Err(Failure::Validation(anyhow!("need --points >= 2 and --k-max > 0")));
            }
            dispersion_cmd(&common, delta, k_max, points)
        }
        Command::Bounds { common, epsilon } => {
            let config = require_config(&common)?;
            let eps = match epsilon {
                Some(e) if e.is_finite() && e >= 0.0 => vec![e],
                Some(e) => return Err(Failure::Validation(anyhow!("epsilon must be non-negative, got {e}"))),
                None => config.epsilons(),
            };
            bounds_cmd(&common, &config, &eps)
        }
        Command::Qform { common, epsilon, sign } => {
            let config = require_config(&common)?;
            if !(epsilon.is_finite() && epsilon >= 0.0) {
                return Err(Failure::Validation(anyhow!("epsilon must be non-negative, got {epsilon}")));
            }
            let sign = match sign {
                SignArg::Plus => Sign::Plus,
                SignArg::Minus => Sign::Minus,
            };
            qform_cmd(&common, &config, epsilon, sign)
        }
        Command::Solve { common, epsilon } => {
            let config = require_config(&common)?;
            if !(epsilon.is_finite() && epsilon >= 0.0) {
                return Err(Failure::Validation(anyhow!("epsilon must be non-negative, got {epsilon}")));
            }
            solve_cmd(&common, &config, epsilon)
        }
        Command::Sweep { common } => {
            let mut config = require_config(&common)?;
            if let Some(dir) = &common.out {
                config.output.directory = dir.clone();
            }
            if let Some(f) = common.format {
                config.output.formats = vec![f.into()];
            }
            let prepared = Prepared::new(&config).runtime()?;
            let table = sweep_prepared(&config, &prepared);
            let files = write_outputs(&table, &config, &config.output.directory).runtime()?;
            for f in files {
                println!("{}", f.display());
            }
            if !table.failures.is_empty() {
                return Err(Failure::Runtime(anyhow!("{} couplings failed, see manifest.json", table.failures.len())));
            }
            Ok(())
        }
        Command::Validate { common } => {
            let config = require_config(&common)?;
            for check in validate_potential(&config.potential).checks {
                println!("{:<24} {}  {}", check.check, if check.passed { "ok" } else { "FAIL" }, check.detail);
            }
            println!("config ok: {} couplings, {} basis functions", config.epsilons().len(), config.basis.count);
            Ok(())
        }
    }
}

fn format_of(common: &Common) -> OutFormat {
    common.format.unwrap_or(OutFormat::Csv)
}

/// Runs `build` against `<out>/<name>.<ext>` or stdout.
fn emit(common: &Common, name: &str, build: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>) -> Outcome {
    let ext = match format_of(common) {
        OutFormat::Csv => "csv",
        OutFormat::Json => "json",
    };
    match &common.out {
        Some(dir) => {
            let path = dir.join(format!("{name}.{ext}"));
            let mut file = create(dir, &path).runtime()?;
            build(&mut file).with_context(|| path.display().to_string()).runtime()?;
            println!("{}", path.display());
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            build(&mut lock).runtime()?;
        }
    }
    Ok(())
}

fn create(dir: &Path, path: &Path) -> anyhow::Result<io::BufWriter<fs::File>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let file = fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(io::BufWriter::new(file))
}

fn json_to(w: &mut dyn Write, value: &impl Serialize) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

fn dispersion_cmd(common: &Common, delta: f64, k_max: f64, points: usize) -> Outcome {
    #[derive(Serialize)]
    struct Row {
        kx: f64,
        ky: f64,
        e_minus: f64,
        e_plus: f64,
    }
    let k = |i: usize| -k_max + 2.0 * k_max * i as f64 / (points - 1) as f64;
    let rows: Vec<Row> = (0..points)
        .flat_map(|iy| (0..points).map(move |ix| (ix, iy)))
        .map(|(ix, iy)| {
            let (kx, ky) = (k(ix), k(iy));
            let (e_minus, e_plus) = dispersion(Vec2::new(kx, ky), delta);
            Row { kx, ky, e_minus, e_plus }
        })
        .collect();
    emit(common, "dispersion", |w| match format_of(common) {
        OutFormat::Csv => Ok(write_records(
            w,
            &["kx", "ky", "e_minus", "e_plus"],
            rows.iter().map(|r| vec![fmt_f64(r.kx), fmt_f64(r.ky), fmt_f64(r.e_minus), fmt_f64(r.e_plus)]),
        )?),
        OutFormat::Json => json_to(w, &rows),
    })
}

fn bounds_cmd(common: &Common, config: &RunConfig, eps: &[f64]) -> Outcome {
    let moments = semidirac::bounds::potential_moments(&config.potential, &config.quadrature).runtime()?;
    let constants = semidirac::bounds::cutoff_constants(&config.profile(), config.delta);
    let reports: Vec<_> = eps.iter().map(|&e| semidirac::bounds::bounds_report(&moments, &constants, e)).collect();
    emit(common, "bounds", |w| match format_of(common) {
        OutFormat::Csv => Ok(write_records(w, &BOUNDS_HEADER, bounds_records(&reports))?),
        OutFormat::Json => json_to(w, &reports),
    })
}

fn qform_cmd(common: &Common, config: &RunConfig, eps: f64, sign: Sign) -> Outcome {
    let model = semidirac::model::Model::new(config.delta, eps, config.potential.clone()).invalid()?;
    let table =
        qform_convergence(&model, &config.profile(), sign, &config.bounds.n_grid, &config.quadrature).runtime()?;
    if !table.verdict {
        log::warn!("convergence check failed");
    }
    emit(common, "qform", |w| match format_of(common) {
        OutFormat::Csv => Ok(write_records(
            w,
            &["n", "Q", "I", "diff", "bound", "pass"],
            table.rows.iter().map(|r| {
                vec![fmt_f64(r.n), fmt_f64(r.q), fmt_f64(r.i), fmt_f64(r.diff), fmt_f64(r.bound), r.pass.to_string()]
            }),
        )?),
        OutFormat::Json => json_to(w, &table),
    })
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    epsilon: f64,
    delta: f64,
    rows: &'a [SweepRow],
    discarded: usize,
    diagnostics: SolverDiagnostics,
}

fn solve_cmd(common: &Common, config: &RunConfig, eps: f64) -> Outcome {
    let prepared = Prepared::new(config).runtime()?;
    let result: SpectralResult = prepared.solve(config, eps).runtime()?;
    let rows: Vec<SweepRow> = result
        .gap
        .iter()
        .enumerate()
        .map(|(index, p)| SweepRow { epsilon: eps, index, energy: p.energy, residual: p.residual })
        .collect();
    emit(common, "spectrum", |w| match format_of(common) {
        OutFormat::Csv => Ok(write_records(w, &EIGENCURVES_HEADER, eigencurve_records(&rows))?),
        OutFormat::Json => json_to(
            w,
            &SolveSummary {
                epsilon: eps,
                delta: config.delta,
                rows: &rows,
                discarded: result.discarded.len(),
                diagnostics: result.diagnostics,
            },
        ),
    })?;

    // Eigenfunction grids for the lowest non-negative modes.
    if let (Some(dir), Some(ef)) = (&common.out, config.output.eigenfunctions) {
        let grid = SampleGrid::new(config.basis.bbox, ef.nx, ef.ny);
        for (index, pair) in result.gap.iter().enumerate().filter(|(_, p)| p.energy >= 0.0).take(ef.modes) {
            let samples = eigenfunction_magnitude(&pair.coefficients, &prepared.basis, &grid);
            let path = dir.join(format!("psi_{index}.csv"));
            write_field(&path, &samples).runtime()?;
            println!("{}", path.display());
        }
    }
    Ok(())
}
