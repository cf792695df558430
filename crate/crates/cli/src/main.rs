use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lodschwarz::harness::validate::{property_suite, Check};
use lodschwarz::harness::{run_sweep, run_with_cache, Length, RunOutcome, SetupCache, SweepAxis};
use lodschwarz::io::{write_basis_stats, write_matrix_market, write_mesh, write_results_csv};
use lodschwarz::schwarz::CoarseKind;
use lodschwarz::{Error, ExperimentConfig, LocalKind, ResultRow, SolveReport};

/// Two-level hybrid Schwarz preconditioners with LOD coarse spaces for the
/// Helmholtz equation on the unit square.
#[derive(Debug, Parser)]
#[command(name = "lodschwarz", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one plane-wave problem and report the GMRES iteration count.
    Run {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solve a sequence of problems varying one parameter.
    Sweep {
        /// kappa, h, m, H_sub, delta, precond or coarse_kind.
        #[arg(long)]
        axis: String,
        /// Comma-separated values along the axis.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the property checks.
    Validate {
        /// Include the dense direct solve at kappa = 16 (about 1 GB).
        #[arg(long)]
        dense: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write the mesh, the Helmholtz matrix or basis statistics.
    Dump {
        #[arg(long, value_enum)]
        what: DumpKind,
        #[command(flatten)]
        problem: ProblemArgs,
        /// Output file; standard output if omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DumpKind {
    Mesh,
    Matrix,
    BasisStats,
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// Output file; standard output if omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// Overrides applied on top of the configuration file.
#[derive(Debug, Args)]
struct ProblemArgs {
    /// TOML experiment configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Fine mesh size: a number or `auto`.
    #[arg(long)]
    h: Option<Length>,
    /// Coarse mesh size: a number, `auto` or a multiple of h such as `4h`.
    #[arg(long)]
    coarse_h: Option<Length>,
    /// Oversampling layers.
    #[arg(long, short)]
    layers: Option<usize>,
    /// Subdomain size such as `2H`.
    #[arg(long, conflicts_with = "spacing")]
    subdomain_size: Option<Length>,
    /// Subdomain lattice step, instead of the size.
    #[arg(long)]
    spacing: Option<Length>,
    /// Subdomain overlap such as `H` or `4h`.
    #[arg(long)]
    overlap: Option<Length>,
    /// dirichlet, impedance or none.
    #[arg(long)]
    local: Option<LocalKind>,
    /// lod, p1 or none.
    #[arg(long)]
    coarse: Option<CoarseKind>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    restart: Option<usize>,
}

impl ProblemArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(k) = self.kappa {
            cfg.kappa = k;
        }
        if let Some(h) = self.h {
            cfg.h = h;
        }
        if let Some(h) = self.coarse_h {
            cfg.coarse_h = h;
        }
        if let Some(m) = self.layers {
            cfg.layers = Some(m);
        }
        if let Some(s) = self.subdomain_size {
            cfg.subdomain_size = Some(s);
            cfg.spacing = None;
        }
        if let Some(s) = self.spacing {
            cfg.spacing = Some(s);
            cfg.subdomain_size = None;
        }
        if let Some(d) = self.overlap {
            cfg.overlap = d;
        }
        if let Some(l) = self.local {
            cfg.local = l;
        }
        if let Some(c) = self.coarse {
            cfg.coarse = c;
        }
        if let Some(t) = self.rel_tol {
            cfg.gmres.rel_tol = t;
        }
        if let Some(m) = self.max_iters {
            cfg.gmres.max_iters = m;
        }
        if let Some(r) = self.restart {
            cfg.gmres.restart = Some(r);
        }
        Ok(cfg)
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

#[derive(Serialize)]
struct RunJson<'a> {
    row: &'a ResultRow,
    report: &'a SolveReport,
}

#[derive(Serialize)]
struct FailedJson {
    error: String,
}

fn write_runs(out: &OutputArgs, runs: &[Result<RunOutcome, Error>]) -> Result<(), Error> {
    let mut w = open_output(out.output.as_deref())?;
    match out.format {
        Format::Csv => {
            let rows: Vec<ResultRow> = runs.iter().flatten().map(|r| r.row.clone()).collect();
            write_results_csv(&mut w, &rows)?;
        }
        Format::Json => {
            let values: Vec<serde_json::Value> = runs
                .iter()
                .map(|r| match r {
                    Ok(o) => serde_json::to_value(RunJson {
                        row: &o.row,
                        report: &o.report,
                    }),
                    Err(e) => serde_json::to_value(FailedJson {
                        error: e.to_string(),
                    }),
                })
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Parse(e.to_string()))?;
            serde_json::to_writer_pretty(&mut w, &values)
                .map_err(|e| Error::Parse(e.to_string()))?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_checks(out: &OutputArgs, checks: &[Check]) -> Result<(), Error> {
    let mut w = open_output(out.output.as_deref())?;
    match out.format {
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(&mut w);
            for c in checks {
                csv.serialize(c)?;
            }
            csv.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, checks)
                .map_err(|e| Error::Parse(e.to_string()))?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Exit status for a batch of runs: 2 if any row stopped at `max_iters`,
/// 1 if any row failed.
fn status(runs: &[Result<RunOutcome, Error>]) -> ExitCode {
    for r in runs {
        if let Err(e) = r {
            eprintln!("error: {e}");
        }
    }
    if runs.iter().any(|r| r.is_err()) {
        ExitCode::from(1)
    } else if runs.iter().flatten().any(|r| !r.report.converged) {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { problem, output } => {
            let cfg = problem.config()?;
            let runs = vec![run_with_cache(&cfg, &mut SetupCache::new())];
            write_runs(&output, &runs)?;
            Ok(status(&runs))
        }
        Command::Sweep {
            axis,
            values,
            problem,
            output,
        } => {
            let axis: SweepAxis = axis.parse()?;
            let cfg = problem.config()?;
            let runs = run_sweep(&cfg, axis, &values);
            write_runs(&output, &runs)?;
            Ok(status(&runs))
        }
        Command::Validate { dense, output } => {
            let checks = property_suite(dense)?;
            write_checks(&output, &checks)?;
            let failed: Vec<&str> = checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name)
                .collect();
            if failed.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("failed checks: {}", failed.join(", "));
                Ok(ExitCode::from(1))
            }
        }
        Command::Dump {
            what,
            problem,
            output,
        } => {
            let cfg = problem.config()?.resolve()?;
            let mut cache = SetupCache::new();
            let mut w = open_output(output.as_deref())?;
            match what {
                DumpKind::Mesh => write_mesh(&mut w, &*cache.mesh((cfg.n_coarse, cfg.levels))?)?,
                DumpKind::Matrix => {
                    let mesh = cache.mesh((cfg.n_coarse, cfg.levels))?;
                    write_matrix_market(&mut w, &cache.global(&mesh, cfg.kappa).a)?
                }
                DumpKind::BasisStats => {
                    let basis_only = lodschwarz::harness::ResolvedConfig {
                        local: LocalKind::None,
                        coarse: if cfg.coarse == CoarseKind::None {
                            CoarseKind::Lod
                        } else {
                            cfg.coarse
                        },
                        ..cfg
                    };
                    let (mesh, pre) = cache.preconditioner(&basis_only)?;
                    let space = pre
                        .coarse()
                        .ok_or_else(|| Error::InvalidConfig("no coarse space".into()))?;
                    write_basis_stats(&mut w, space, &mesh)?
                }
            }
            w.flush()?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
