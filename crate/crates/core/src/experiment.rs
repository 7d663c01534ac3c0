//! Experiment grids: method × model × repetition runs, summary tables and
//! plot-ready CSV exports.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::choice::ModelKind;
use crate::engine::ResourceLimits;
use crate::feature::PreferenceHypercube;
use crate::rng::derive_seed;
use crate::stats::{descriptive, RunStats, TableRow};
use crate::strategy::{
    run_strategy, Method, NmcsUpdate, RunResult, StrategyConfig, StrategyError, DEFAULT_BUDGET,
    DEFAULT_SIGMA,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot access {path}")]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid config file")]
    Parse(#[from] toml::de::Error),
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("nothing to export: no runs")]
    NoRuns,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}

/// One row of the method grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: Method,
    pub model: ModelKind,
    /// Overrides the experiment-wide sigma for this method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl MethodSpec {
    pub fn new(method: Method, model: ModelKind) -> Self {
        Self {
            method,
            model,
            sigma: None,
        }
    }

    pub fn label(&self) -> String {
        format!("{}_{}", self.method, self.model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub repetitions: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    pub output_directory: PathBuf,
    #[serde(default)]
    pub cube: PreferenceHypercube,
    #[serde(default)]
    pub limits: ResourceLimits,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Also write every run's full sample log.
    #[serde(default)]
    pub write_sample_logs: bool,
    pub methods: Vec<MethodSpec>,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

/// The ten method/model combinations of the standard comparison grid.
pub fn comparison_methods() -> Vec<MethodSpec> {
    use Method::*;
    use ModelKind::*;
    vec![
        MethodSpec::new(
            HillClimb {
                min_samples: 4,
                max_samples: 20,
            },
            RecDepth5,
        ),
        MethodSpec::new(
            RandMfreqLhs {
                period: 5,
                bins: 10,
            },
            RecDepth5,
        ),
        MethodSpec::new(
            RandMfreqLhs {
                period: 10,
                bins: 30,
            },
            RecDepth5,
        ),
        MethodSpec::new(RandFreq { period: 1 }, RecDepth5),
        MethodSpec::new(RandFreq { period: 1 }, Default),
        MethodSpec::new(
            Nmcs {
                sample_size: 4,
                update: NmcsUpdate::Direct,
            },
            Default,
        ),
        MethodSpec::new(
            Nmcs {
                sample_size: 2,
                update: NmcsUpdate::Direct,
            },
            Default,
        ),
        MethodSpec::new(
            Nmcs {
                sample_size: 2,
                update: NmcsUpdate::Batch,
            },
            Default,
        ),
        MethodSpec::new(
            Nmcs {
                sample_size: 4,
                update: NmcsUpdate::Batch,
            },
            Default,
        ),
        MethodSpec::new(RandOnce, Default),
    ]
}

impl ExperimentConfig {
    /// Full comparison grid over the default cube.
    pub fn comparison_grid(
        master_seed: u64,
        repetitions: usize,
        budget: usize,
        output_directory: impl Into<PathBuf>,
    ) -> Self {
        Self {
            master_seed,
            repetitions,
            budget,
            output_directory: output_directory.into(),
            cube: PreferenceHypercube::standard(),
            limits: ResourceLimits::default(),
            sigma: DEFAULT_SIGMA,
            write_sample_logs: false,
            methods: comparison_methods(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        for job in self.jobs() {
            job.strategy.validate()?;
        }
        Ok(())
    }

    /// SHA-256 over every field except the output directory.
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_directory");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::with_capacity(self.methods.len() * self.repetitions);
        for (method_index, entry) in self.methods.iter().enumerate() {
            for repetition in 0..self.repetitions {
                let seed = derive_seed(self.master_seed, &[method_index as u64, repetition as u64]);
                let mut strategy =
                    StrategyConfig::new(entry.method, entry.model, self.budget, seed);
                strategy.sigma = entry.sigma.unwrap_or(self.sigma);
                strategy.limits = self.limits;
                jobs.push(Job {
                    method_index,
                    repetition,
                    strategy,
                });
            }
        }
        jobs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub method_index: usize,
    pub repetition: usize,
    pub strategy: StrategyConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the rayon worker pool when the `parallel` feature is enabled,
    /// and falls back to sequential execution otherwise.
    Parallel,
}

/// Runs every job; results come back in job order regardless of scheduling.
pub fn execute_jobs(
    jobs: &[Job],
    cube: &PreferenceHypercube,
    execution: Execution,
) -> Result<Vec<RunResult>, StrategyError> {
    let run = |job: &Job| {
        log::debug!(
            "{} {} rep {}",
            job.strategy.method,
            job.strategy.model,
            job.repetition
        );
        run_strategy(&job.strategy, cube)
    };
    match execution {
        Execution::Sequential => jobs.iter().map(run).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            jobs.par_iter().map(run).collect()
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel => jobs.iter().map(run).collect(),
    }
}

/// Per-run record of the report; every summary value is derived from these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub model: ModelKind,
    pub repetition: usize,
    pub seed: u64,
    pub attempts: usize,
    pub covered: usize,
    pub fshc: f64,
    pub wall_time_s: f64,
    pub preferred: usize,
    pub outside: usize,
    pub infeasible: usize,
    pub preferred_pct: f64,
    pub infeasible_pct: f64,
}

impl RunRecord {
    pub fn from_run(run: &RunResult, repetition: usize) -> Self {
        Self {
            method: run.method,
            model: run.model,
            repetition,
            seed: run.seed,
            attempts: run.attempts(),
            covered: run.archive.covered(),
            fshc: run.fshc,
            wall_time_s: run.wall_time_s,
            preferred: run.counts.preferred,
            outside: run.counts.outside,
            infeasible: run.counts.infeasible,
            preferred_pct: run.preferred_pct(),
            infeasible_pct: run.infeasible_pct(),
        }
    }

    pub fn stats(&self) -> RunStats {
        RunStats {
            fshc: self.fshc,
            wall_time_s: self.wall_time_s,
            preferred_pct: self.preferred_pct,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub model: ModelKind,
    #[serde(flatten)]
    pub row: TableRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub config_hash: String,
    pub tool_version: String,
    pub budget: usize,
    pub repetitions: usize,
    pub cube: PreferenceHypercube,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub summary: Vec<SummaryRow>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    /// Builds the report; `runs` must be in [`ExperimentConfig::jobs`] order.
    pub fn from_runs(cfg: &ExperimentConfig, runs: &[RunResult]) -> Self {
        let records: Vec<RunRecord> = cfg
            .jobs()
            .iter()
            .zip(runs)
            .map(|(job, run)| RunRecord::from_run(run, job.repetition))
            .collect();
        let summary = summarize(&cfg.methods, &records);
        Self {
            provenance: Provenance {
                master_seed: cfg.master_seed,
                config_hash: cfg.config_hash(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                budget: cfg.budget,
                repetitions: cfg.repetitions,
                cube: cfg.cube,
            },
            summary,
            runs: records,
        }
    }

    /// `Method,ChoiceModel,Runs,Coverage,std,Time,Preferred`.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "method,model,runs,coverage,std,time_s,preferred_pct")?;
        for s in &self.summary {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.method,
                s.model,
                s.row.runs,
                s.row.mean_fshc,
                s.row.std_fshc,
                s.row.mean_time_s,
                s.row.mean_preferred_pct
            )?;
        }
        Ok(())
    }

    pub fn write_runs_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "method,model,repetition,seed,attempts,covered,fshc,wall_time_s,preferred,outside,infeasible,preferred_pct,infeasible_pct"
        )?;
        for r in &self.runs {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.model,
                r.repetition,
                r.seed,
                r.attempts,
                r.covered,
                r.fshc,
                r.wall_time_s,
                r.preferred,
                r.outside,
                r.infeasible,
                r.preferred_pct,
                r.infeasible_pct
            )?;
        }
        Ok(())
    }

    /// Summary table formatted for a terminal.
    pub fn render_table(&self) -> String {
        let mut s = format!(
            "{:<22} {:<10} {:>5} {:>9} {:>6} {:>9} {:>10}\n",
            "Method", "Model", "Runs", "Coverage", "std", "Time", "Preferred"
        );
        for r in &self.summary {
            s += &format!(
                "{:<22} {:<10} {:>5} {:>9.1} {:>6.1} {:>9.2} {:>10.1}\n",
                r.method.to_string(),
                r.model.to_string(),
                r.row.runs,
                r.row.mean_fshc,
                r.row.std_fshc,
                r.row.mean_time_s,
                r.row.mean_preferred_pct
            );
        }
        s
    }
}

/// One summary row per method entry, in grid order.
pub fn summarize(methods: &[MethodSpec], records: &[RunRecord]) -> Vec<SummaryRow> {
    methods
        .iter()
        .map(|entry| {
            let stats: Vec<RunStats> = records
                .iter()
                .filter(|r| r.method == entry.method && r.model == entry.model)
                .map(RunRecord::stats)
                .collect();
            SummaryRow {
                method: entry.method,
                model: entry.model,
                row: descriptive(&stats),
            }
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), ExperimentError> {
    let mut out = create(path)?;
    f(&mut out).and_then(|_| out.flush()).map_err(io_err(path))
}

/// Executes the grid and writes the report files into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    run_experiment_with(cfg, Execution::Parallel).map(|(report, _)| report)
}

pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    execution: Execution,
) -> Result<(ExperimentReport, Vec<RunResult>), ExperimentError> {
    cfg.validate()?;
    let dir = &cfg.output_directory;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let jobs = cfg.jobs();
    log::info!(
        "running {} jobs ({} methods x {} repetitions)",
        jobs.len(),
        cfg.methods.len(),
        cfg.repetitions
    );
    let runs = execute_jobs(&jobs, &cfg.cube, execution)?;
    let report = ExperimentReport::from_runs(cfg, &runs);

    write_file(&dir.join("summary.csv"), |w| report.write_summary_csv(w))?;
    write_file(&dir.join("runs.csv"), |w| report.write_runs_csv(w))?;
    write_file(&dir.join("report.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &report).map_err(io::Error::other)?;
        writeln!(w)
    })?;
    export_timeseries(&runs, &dir.join("timeseries.csv"))?;

    let scatter_dir = dir.join("scatter");
    fs::create_dir_all(&scatter_dir).map_err(io_err(&scatter_dir))?;
    let samples_dir = dir.join("samples");
    if cfg.write_sample_logs {
        fs::create_dir_all(&samples_dir).map_err(io_err(&samples_dir))?;
    }
    for (job, run) in jobs.iter().zip(&runs) {
        let label = cfg.methods[job.method_index].label();
        if job.repetition == 0 {
            export_scatter(run, &scatter_dir.join(format!("{label}.csv")))?;
        }
        if cfg.write_sample_logs {
            export_sample_log(
                run,
                &samples_dir.join(format!("{label}_rep{}.csv", job.repetition)),
            )?;
        }
    }
    Ok((report, runs))
}

/// `(length, num_digits)` of every feasible datum, preceded by a comment
/// line with the cube bounds.
pub fn export_scatter(run: &RunResult, path: &Path) -> Result<(), ExperimentError> {
    write_file(path, |w| write_scatter(run, w))
}

pub fn write_scatter<W: Write>(run: &RunResult, mut out: W) -> io::Result<()> {
    let c = run.cube;
    writeln!(
        out,
        "# cube length={}:{} digits={}:{}",
        c.length.lo(),
        c.length.hi(),
        c.digits.lo(),
        c.digits.hi()
    )?;
    writeln!(out, "length,num_digits")?;
    for fv in run.sample_log.iter().filter_map(|r| r.features) {
        writeln!(out, "{},{}", fv.length, fv.num_digits)?;
    }
    Ok(())
}

/// One row per run: `method,model,fshc,wall_time_s,infeasible_pct,preferred_pct`.
pub fn export_timeseries(runs: &[RunResult], path: &Path) -> Result<(), ExperimentError> {
    if runs.is_empty() {
        return Err(ExperimentError::NoRuns);
    }
    write_file(path, |w| write_timeseries(runs, w))
}

pub fn write_timeseries<W: Write>(runs: &[RunResult], mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "method,model,fshc,wall_time_s,infeasible_pct,preferred_pct"
    )?;
    for r in runs {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            r.model,
            r.fshc,
            r.wall_time_s,
            r.infeasible_pct(),
            r.preferred_pct()
        )?;
    }
    Ok(())
}

/// `attempt,method,status,length,num_digits,fshc_so_far,elapsed_s`; feature
/// columns are empty for infeasible attempts.
pub fn export_sample_log(run: &RunResult, path: &Path) -> Result<(), ExperimentError> {
    write_file(path, |w| write_sample_log(run, w))
}

pub fn write_sample_log<W: Write>(run: &RunResult, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "attempt,method,status,length,num_digits,fshc_so_far,elapsed_s"
    )?;
    let cells = run.cube.cell_count() as f64;
    for (r, t) in run.sample_log.iter().zip(&run.sample_times) {
        let (len, dig) = match r.features {
            Some(fv) => (fv.length.to_string(), fv.num_digits.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.attempt,
            run.method,
            r.status.as_str(),
            len,
            dig,
            100.0 * r.covered as f64 / cells,
            t
        )?;
    }
    Ok(())
}

/// `attempt,p0,p1,...`: one row per change of active parameters.
pub fn export_parameters(run: &RunResult, path: &Path) -> Result<(), ExperimentError> {
    write_file(path, |w| {
        let width = run.parameter_log.first().map_or(0, |e| e.values.len());
        let header: Vec<String> = (0..width).map(|i| format!("p{i}")).collect();
        writeln!(w, "attempt,{}", header.join(","))?;
        for e in &run.parameter_log {
            let vals: Vec<String> = e.values.iter().map(f64::to_string).collect();
            writeln!(w, "{},{}", e.attempt, vals.join(","))?;
        }
        Ok(())
    })
}

/// Writes the density archive as `cell_length,cell_digits,count`.
pub fn export_archive(run: &RunResult, path: &Path) -> Result<(), ExperimentError> {
    write_file(path, |w| run.archive.write_csv(w))
}
