//! `featdiv`: run comparison grids, single strategy runs, and the coverage
//! ceiling oracle. Log verbosity is read from `FEATDIV_LOG`.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use featdiv_core::experiment::{
    export_archive, export_parameters, export_sample_log, export_scatter, run_experiment_with,
    Execution, ExperimentConfig,
};
use featdiv_core::feature::max_achievable_cells;
use featdiv_core::strategy::DEFAULT_SIGMA;
use featdiv_core::{
    run_strategy, ExprGenerator, Method, ModelKind, PreferenceHypercube, ResourceLimits,
    StrategyConfig,
};

#[derive(Parser)]
#[command(
    name = "featdiv",
    version,
    about = "Feature-diverse test data generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method and repetition of an experiment config file.
    Run {
        config: PathBuf,
        /// Run jobs one after another instead of on the worker pool.
        #[arg(long)]
        sequential: bool,
    },
    /// Run one strategy and write its sample log, scatter, archive and parameters.
    Gen(GenArgs),
    /// Print how many cube cells the grammar can reach at all.
    Oracle {
        #[arg(long, default_value = "3:50,2:25")]
        cube: PreferenceHypercube,
        #[command(flatten)]
        limits: LimitArgs,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    method: Method,
    #[arg(long, default_value = "RecDepth5")]
    model: ModelKind,
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// LEN_LO:LEN_HI,DIG_LO:DIG_HI
    #[arg(long, default_value = "3:50,2:25")]
    cube: PreferenceHypercube,
    /// Hill-climb step size.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    #[command(flatten)]
    limits: LimitArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LimitArgs {
    #[arg(long, default_value_t = 20)]
    max_depth: u32,
    #[arg(long, default_value_t = 10_000)]
    max_length: usize,
}

impl LimitArgs {
    fn limits(&self) -> Result<ResourceLimits> {
        Ok(ResourceLimits::new(self.max_depth, self.max_length)?)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FEATDIV_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, sequential } => {
            let cfg = ExperimentConfig::load(&config)?;
            let execution = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let (report, _) = run_experiment_with(&cfg, execution)?;
            print!("{}", report.render_table());
            log::info!("results in {}", cfg.output_directory.display());
        }
        Command::Gen(args) => generate(args)?,
        Command::Oracle { cube, limits } => {
            println!(
                "{}",
                max_achievable_cells(&cube, &ExprGenerator, &limits.limits()?)
            );
        }
    }
    Ok(())
}

fn generate(args: GenArgs) -> Result<()> {
    let mut cfg = StrategyConfig::new(args.method, args.model, args.budget, args.seed);
    cfg.sigma = args.sigma;
    cfg.limits = args.limits.limits()?;
    let run = run_strategy(&cfg, &args.cube)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    export_sample_log(&run, &args.out.join("samples.csv"))?;
    export_scatter(&run, &args.out.join("scatter.csv"))?;
    export_archive(&run, &args.out.join("archive.csv"))?;
    export_parameters(&run, &args.out.join("parameters.csv"))?;
    println!(
        "{} {} seed {}: fshc {:.1}% ({} cells), {} attempts, {:.1}% preferred, {:.1}% infeasible, {:.3}s",
        run.method,
        run.model,
        run.seed,
        run.fshc,
        run.archive.covered(),
        run.attempts(),
        run.preferred_pct(),
        run.infeasible_pct(),
        run.wall_time_s
    );
    Ok(())
}
