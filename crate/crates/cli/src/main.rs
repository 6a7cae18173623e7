use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nlpm::barriers::FormulaVariant;
use nlpm::operators::{ModelParams, Regime};
use nlpm::theorems::Suite;
use nlpm_cli::commands::{self, RunReport};
use nlpm_cli::{RunConfig, OUTPUT_ROOT_ENV};

#[derive(Parser)]
#[command(name = "nlpm", version, about = "Nonlocal porous-medium simulator and theorem checks")]
struct Cli {
    /// Sign of md in the fast-diffusion smoothing exponent; overrides the config.
    #[arg(long, global = true, value_parser = parse_variant)]
    formula_variant: Option<FormulaVariant>,
    /// Default output root for run and sweep.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV, default_value = "runs")]
    output_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and check it.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to <output root>/<config stem>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the configuration's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run several configurations in parallel, one directory each.
    Sweep {
        #[arg(long, required = true, num_args = 1..)]
        config: Vec<PathBuf>,
        /// Root of the per-run directories; defaults to the output root.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the randomized lemma suites.
    Check {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// min-principle, cv-max-principle or stroock-varopoulos; all by default.
        #[arg(long)]
        suite: Option<Suite>,
        /// Cases per suite; the suite's default otherwise.
        #[arg(long)]
        cases: Option<usize>,
        /// Write the suite reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the lower barrier of a model.
    Barrier {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        /// Rate constant; c_{d,s} c_{d,α} by default.
        #[arg(long)]
        c: Option<f64>,
        /// Initial value; epsilon by default.
        #[arg(long)]
        phi0: Option<f64>,
        /// Final time; ten barrier time scales by default.
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, default_value_t = 20)]
        points: usize,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the smoothing exponents.
    Exponents {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "p", num_args = 1.., default_value = "1")]
        p: Vec<f64>,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ModelArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    s: f64,
    #[arg(long)]
    m: f64,
    #[arg(long, default_value = "clogged", value_parser = parse_regime)]
    regime: Regime,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.d, self.s, self.m, self.regime, self.epsilon)?)
    }
}

fn parse_variant(s: &str) -> Result<FormulaVariant, String> {
    s.parse().map_err(|e: nlpm::Error| e.to_string())
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    match s {
        "clogged" => Ok(Regime::Clogged),
        "fast-diffusion" => Ok(Regime::FastDiffusion),
        other => Err(format!("expected clogged or fast-diffusion, got {other}")),
    }
}

fn load(path: &PathBuf, seed: Option<u64>, variant: Option<FormulaVariant>) -> Result<RunConfig> {
    let mut config = RunConfig::from_path(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(v) = variant {
        config.formula_variant = v;
    }
    Ok(config)
}

fn stem(path: &std::path::Path) -> String {
    path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned())
}

fn summarize(out: &mut impl Write, name: &str, report: &RunReport) -> io::Result<()> {
    writeln!(
        out,
        "{name}: t = {:.6e}, {} steps ({} rejected)",
        report.final_time, report.accepted_steps, report.rejected_steps
    )?;
    if let Some(err) = &report.run_error {
        writeln!(out, "{name}: run stopped early: {err}")?;
    }
    commands::print_verdicts(out, &report.verdicts)
}

fn execute(cli: Cli) -> Result<bool> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Run { config, out: dir, seed } => {
            let cfg = load(&config, seed, cli.formula_variant)?;
            let dir = dir.unwrap_or_else(|| cli.output_root.join(stem(&config)));
            let report = commands::cmd_run(&cfg, &dir)?;
            summarize(&mut out, &stem(&config), &report)?;
            writeln!(out, "outputs in {}", dir.display())?;
            Ok(report.succeeded())
        }
        Command::Sweep { config, out: dir, seed } => {
            let configs = config.iter().map(|p| load(p, seed, cli.formula_variant)).collect::<Result<Vec<_>>>()?;
            let named: Vec<(String, RunConfig)> = commands::sweep_names(&config).into_iter().zip(configs).collect();
            let root = dir.unwrap_or(cli.output_root);
            let mut ok = true;
            for (name, result) in commands::cmd_sweep(&named, &root) {
                match result {
                    Ok(report) => {
                        summarize(&mut out, &name, &report)?;
                        ok &= report.succeeded();
                    }
                    Err(err) => {
                        writeln!(out, "{name}: error: {err:#}")?;
                        ok = false;
                    }
                }
            }
            Ok(ok)
        }
        Command::Check { seed, suite, cases, out: path } => {
            let reports = commands::cmd_check(seed, suite, cases)?;
            commands::print_suites(&mut out, &reports)?;
            if let Some(path) = path {
                std::fs::write(&path, serde_json::to_string_pretty(&reports)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(reports.iter().all(|r| r.all_passed()))
        }
        Command::Barrier { model, mass, c, phi0, t_end, points, out: path } => {
            let bp = commands::barrier_params(&model.params()?, mass, c, phi0)?;
            let t_end = t_end.unwrap_or(10.0 * bp.time_scale());
            let rows = commands::cmd_barrier(&bp, t_end, points)?;
            commands::print_barrier(&mut out, &rows)?;
            if let Some(path) = path {
                commands::write_rows(&path, &rows)?;
            }
            Ok(true)
        }
        Command::Exponents { model, p, out: path } => {
            let variant = cli.formula_variant.unwrap_or_default();
            let sets = commands::cmd_exponents(&model.params()?, &p, variant)?;
            commands::print_exponents(&mut out, &sets)?;
            if let Some(path) = path {
                commands::write_rows(&path, &sets)?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
