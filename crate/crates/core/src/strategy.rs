//! Diversity-search strategies. Each run consumes a budget of generation
//! attempts and reports coverage of the preference hypercube.

use std::cmp::{Ordering, Reverse};
use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::choice::{
    lhs_batch, perturb_gaussian, sample_uniform, ChoiceModelParams, ModelKind, ParamError, Sampler,
};
use crate::engine::{
    generate, generate_with_policy, Decision, EngineError, GeneratedDatum, GeneratorProgram,
    Replay, ResourceLimits,
};
use crate::expr::ExprGenerator;
use crate::feature::{
    Classification, DensityArchive, FeatureError, FeatureVector, PreferenceHypercube,
};
use crate::rng::SeededRng;
use crate::stats::{mann_whitney, Alternative, RunStats, StatsError, UTestResult};

/// Hill-climb acceptance threshold on the one-sided p-value.
pub const ACCEPT_P_VALUE: f64 = 0.20;

/// Standard deviation of the hill-climb Gaussian step.
pub const DEFAULT_SIGMA: f64 = 0.15;

pub const DEFAULT_BUDGET: usize = 10_000;

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("invalid strategy configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NmcsUpdate {
    /// Every rollout is recorded as soon as it is generated.
    Direct,
    /// The archive is frozen while one datum is constructed.
    Batch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    RandOnce,
    RandFreq {
        period: usize,
    },
    RandMfreq {
        period: usize,
    },
    RandMfreqLhs {
        period: usize,
        bins: usize,
    },
    Nmcs {
        sample_size: usize,
        update: NmcsUpdate,
    },
    HillClimb {
        min_samples: usize,
        max_samples: usize,
    },
}

impl Method {
    fn validate(&self) -> Result<(), StrategyError> {
        let bad = |msg: &str| Err(StrategyError::InvalidConfig(format!("{self}: {msg}")));
        match *self {
            Method::RandFreq { period } | Method::RandMfreq { period } if period == 0 => {
                bad("resample period must be at least 1")
            }
            Method::RandMfreqLhs { period, bins } if period == 0 || bins == 0 => {
                bad("period and bins must be at least 1")
            }
            Method::Nmcs { sample_size: 0, .. } => bad("sample size must be at least 1"),
            Method::HillClimb {
                min_samples,
                max_samples,
            } if min_samples == 0 || min_samples > max_samples => bad("need 1 <= MIN <= MAX"),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Method::RandOnce => write!(f, "rand-once"),
            Method::RandFreq { period } => write!(f, "rand-freq{period}"),
            Method::RandMfreq { period } => write!(f, "rand-mfreq{period}"),
            Method::RandMfreqLhs { period, bins } => write!(f, "rand-mfreq{period}-LHS{bins}"),
            Method::Nmcs {
                sample_size,
                update,
            } => {
                let mode = match update {
                    NmcsUpdate::Direct => "direct",
                    NmcsUpdate::Batch => "batch",
                };
                write!(f, "nmcs-{sample_size}-{mode}")
            }
            Method::HillClimb {
                min_samples,
                max_samples,
            } => write!(f, "hillclimb-{min_samples}-{max_samples}"),
        }
    }
}

impl FromStr for Method {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || StrategyError::UnknownMethod(s.to_string());
        let num = |t: &str| t.parse::<usize>().map_err(|_| unknown());
        let method = if s == "rand-once" {
            Method::RandOnce
        } else if let Some(rest) = s.strip_prefix("rand-mfreq") {
            match rest.split_once("-LHS") {
                Some((period, bins)) => Method::RandMfreqLhs {
                    period: num(period)?,
                    bins: num(bins)?,
                },
                None => Method::RandMfreq { period: num(rest)? },
            }
        } else if let Some(rest) = s.strip_prefix("rand-freq") {
            Method::RandFreq { period: num(rest)? }
        } else if let Some(rest) = s.strip_prefix("nmcs-") {
            let (size, mode) = rest.split_once('-').ok_or_else(unknown)?;
            let update = match mode {
                "direct" => NmcsUpdate::Direct,
                "batch" => NmcsUpdate::Batch,
                _ => return Err(unknown()),
            };
            Method::Nmcs {
                sample_size: num(size)?,
                update,
            }
        } else if let Some(rest) = s.strip_prefix("hillclimb-") {
            let (lo, hi) = rest.split_once('-').ok_or_else(unknown)?;
            Method::HillClimb {
                min_samples: num(lo)?,
                max_samples: num(hi)?,
            }
        } else {
            return Err(unknown());
        };
        method.validate()?;
        Ok(method)
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyConfig {
    pub method: Method,
    pub model: ModelKind,
    pub sigma: f64,
    pub budget: usize,
    pub seed: u64,
    pub limits: ResourceLimits,
}

impl StrategyConfig {
    pub fn new(method: Method, model: ModelKind, budget: usize, seed: u64) -> Self {
        Self {
            method,
            model,
            sigma: DEFAULT_SIGMA,
            budget,
            seed,
            limits: ResourceLimits::default(),
        }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        self.method.validate()?;
        self.limits.validate()?;
        if self.budget == 0 {
            return Err(StrategyError::InvalidConfig(
                "budget must be at least 1".into(),
            ));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(ParamError::InvalidSigma(self.sigma).into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Preferred,
    Outside,
    Infeasible,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Preferred => "PREFERRED",
            Status::Outside => "OUTSIDE",
            Status::Infeasible => "INFEASIBLE",
        }
    }
}

/// What an attempt was generated for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleRole {
    Sample,
    /// NMCS simulation of one candidate decision.
    Rollout,
    /// NMCS emitted datum.
    Final,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub attempt: usize,
    pub status: Status,
    pub features: Option<FeatureVector>,
    pub role: SampleRole,
    /// Covered cells after this attempt was processed.
    pub covered: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptCounts {
    pub preferred: usize,
    pub outside: usize,
    pub infeasible: usize,
}

impl AttemptCounts {
    pub fn total(&self) -> usize {
        self.preferred + self.outside + self.infeasible
    }
}

/// A change of the active choice-model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterEvent {
    /// Index of the first attempt generated with these parameters.
    pub attempt: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub method: Method,
    pub model: ModelKind,
    pub seed: u64,
    pub cube: PreferenceHypercube,
    pub archive: DensityArchive,
    pub fshc: f64,
    pub wall_time_s: f64,
    pub counts: AttemptCounts,
    pub sample_log: Vec<SampleRecord>,
    /// Seconds since the run started, parallel to `sample_log`.
    pub sample_times: Vec<f64>,
    pub parameter_log: Vec<ParameterEvent>,
}

impl RunResult {
    pub fn attempts(&self) -> usize {
        self.counts.total()
    }

    pub fn covered_cells(&self) -> Vec<FeatureVector> {
        self.archive.covered_cells().collect()
    }

    fn pct(&self, n: usize) -> f64 {
        if self.attempts() == 0 {
            0.0
        } else {
            100.0 * n as f64 / self.attempts() as f64
        }
    }

    pub fn preferred_pct(&self) -> f64 {
        self.pct(self.counts.preferred)
    }

    pub fn infeasible_pct(&self) -> f64 {
        self.pct(self.counts.infeasible)
    }

    pub fn stats(&self) -> RunStats {
        RunStats {
            fshc: self.fshc,
            wall_time_s: self.wall_time_s,
            preferred_pct: self.preferred_pct(),
        }
    }
}

/// Shared bookkeeping: budget, log, archive and counts.
struct Recorder {
    archive: DensityArchive,
    budget: usize,
    counts: AttemptCounts,
    log: Vec<SampleRecord>,
    times: Vec<f64>,
    params: Vec<ParameterEvent>,
    start: Instant,
}

impl Recorder {
    fn new(cube: PreferenceHypercube, budget: usize) -> Self {
        Self {
            archive: DensityArchive::new(cube),
            budget,
            counts: AttemptCounts::default(),
            log: Vec::with_capacity(budget),
            times: Vec::with_capacity(budget),
            params: Vec::new(),
            start: Instant::now(),
        }
    }

    fn used(&self) -> usize {
        self.log.len()
    }

    fn exhausted(&self) -> bool {
        self.used() >= self.budget
    }

    fn status(&self, datum: &GeneratedDatum) -> Status {
        match datum.features {
            None => Status::Infeasible,
            Some(fv) => {
                assert!(
                    fv.num_digits <= fv.length,
                    "feature invariant violated: {fv:?}"
                );
                match self.archive.cube().classify(fv) {
                    Classification::Preferred => Status::Preferred,
                    Classification::Outside => Status::Outside,
                }
            }
        }
    }

    /// Logs one attempt. Preferred data enter the archive when `record` is set.
    fn log(
        &mut self,
        datum: &GeneratedDatum,
        role: SampleRole,
        record: bool,
    ) -> Result<Status, StrategyError> {
        debug_assert!(!self.exhausted());
        let status = self.status(datum);
        match status {
            Status::Preferred => {
                self.counts.preferred += 1;
                if record {
                    self.archive
                        .record(datum.features.expect("preferred datum has features"))?;
                }
            }
            Status::Outside => self.counts.outside += 1,
            Status::Infeasible => self.counts.infeasible += 1,
        }
        self.log.push(SampleRecord {
            attempt: self.used(),
            status,
            features: datum.features,
            role,
            covered: self.archive.covered(),
        });
        self.times.push(self.start.elapsed().as_secs_f64());
        Ok(status)
    }

    fn parameters(&mut self, params: &ChoiceModelParams) {
        self.params.push(ParameterEvent {
            attempt: self.used(),
            values: params.values().to_vec(),
        });
    }

    fn finish(self, cfg: &StrategyConfig) -> RunResult {
        let wall_time_s = self.start.elapsed().as_secs_f64();
        debug_assert_eq!(self.archive.total_recorded(), self.counts.preferred);
        RunResult {
            method: cfg.method,
            model: cfg.model,
            seed: cfg.seed,
            cube: *self.archive.cube(),
            fshc: self.archive.fshc(),
            archive: self.archive,
            wall_time_s,
            counts: self.counts,
            sample_log: self.log,
            sample_times: self.times,
            parameter_log: self.params,
        }
    }
}

/// Runs the strategy selected by `cfg.method`.
pub fn run_strategy(
    cfg: &StrategyConfig,
    cube: &PreferenceHypercube,
) -> Result<RunResult, StrategyError> {
    cfg.validate()?;
    match cfg.method {
        Method::RandOnce => run_rand_once(cfg, cube),
        Method::RandFreq { .. } => run_rand_freq(cfg, cube),
        Method::RandMfreq { .. } => run_rand_mfreq(cfg, cube),
        Method::RandMfreqLhs { .. } => run_rand_mfreq_lhs(cfg, cube),
        Method::Nmcs { .. } => run_nmcs(cfg, cube),
        Method::HillClimb { .. } => run_hillclimb(cfg, cube),
    }
}

/// Supplies parameter vectors to the resampling strategies.
pub trait ParamSource {
    fn next_params(&mut self, rng: &mut SeededRng) -> Result<ChoiceModelParams, StrategyError>;
}

#[derive(Clone, Copy, Debug)]
pub struct UniformSource(pub ModelKind);

impl ParamSource for UniformSource {
    fn next_params(&mut self, rng: &mut SeededRng) -> Result<ChoiceModelParams, StrategyError> {
        Ok(sample_uniform(self.0, rng))
    }
}

/// Consumes latin hypercube batches in order, drawing a new batch when empty.
#[derive(Clone, Debug)]
pub struct LhsSource {
    kind: ModelKind,
    bins: usize,
    queue: VecDeque<ChoiceModelParams>,
}

impl LhsSource {
    pub fn new(kind: ModelKind, bins: usize) -> Self {
        Self {
            kind,
            bins,
            queue: VecDeque::new(),
        }
    }
}

impl ParamSource for LhsSource {
    fn next_params(&mut self, rng: &mut SeededRng) -> Result<ChoiceModelParams, StrategyError> {
        if self.queue.is_empty() {
            self.queue.extend(lhs_batch(self.kind, self.bins, rng)?);
        }
        Ok(self.queue.pop_front().expect("non-empty batch"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resampling {
    /// Attempts between scheduled resampling events.
    pub period: usize,
    /// Resample right after any infeasible attempt.
    pub on_infeasible: bool,
}

/// Generic random resampling loop behind the `rand-*` methods.
pub fn run_resampling_with_source(
    cfg: &StrategyConfig,
    cube: &PreferenceHypercube,
    source: &mut dyn ParamSource,
    schedule: Resampling,
) -> Result<RunResult, StrategyError> {
    cfg.validate()?;
    let gen = ExprGenerator;
    let mut rng = SeededRng::from_seed(cfg.seed);
    let mut rec = Recorder::new(*cube, cfg.budget);
    let mut sampler: Option<Sampler> = None;
    let mut since_draw = 0;
    while !rec.exhausted() {
        if sampler.is_none() || since_draw >= schedule.period {
            let params = source.next_params(&mut rng)?;
            rec.parameters(&params);
            sampler = Some(Sampler::new(&gen, params)?);
            since_draw = 0;
        }
        let model = sampler.as_ref().expect("sampler drawn");
        let datum = generate(&gen, model, cfg.limits, &mut rng)?;
        let status = rec.log(&datum, SampleRole::Sample, true)?;
        since_draw += 1;
        if schedule.on_infeasible && status == Status::Infeasible {
            since_draw = schedule.period;
        }
    }
    Ok(rec.finish(cfg))
}

/// One uniform parameter draw, used for the whole budget.
pub fn run_rand_once(
    cfg: &StrategyConfig,
    cube: &PreferenceHypercube,
) -> Result<RunResult, StrategyError> {
    let schedule = Resampling {
        period: usize::MAX,
        on_infeasible: false,
    };
    run_resampling_with_source(cfg, cube, &mut UniformSource(cfg.model), schedule)
}

/// Uniform resampling every `period` attempts.
pub fn run_rand_freq(
    cfg: &StrategyConfig,
    cube: &PreferenceHypercube,
) -> Result<RunResult, StrategyError> {
    let Method::RandFreq { period } = cfg.method else {
        return Err(wrong_method(cfg, "rand-freqN"));
    };
    let schedule = Resampling {
        period,
        on_infeasible: false,
    };
    run_resampling_with_source(cfg, cube, &mut UniformSource(cfg.model), schedule)
}

/// Uniform resampling after at most `period` attempts, or right after an
/// infeasible one.
pub fn run_rand_mfreq(
    cfg: &StrategyConfig,
    cube: &PreferenceHypercube,
) -> Result<RunResult, StrategyError> {
    let Method::RandMfreq { period } = cfg.method else {
        return Err(wrong_method(cfg, "rand-mfreqN"));
    };
    let schedule = Resampling {
        period,
        on_infeasible: true,
    };
    run_resampling_with_source(cfg, cube, &mut UniformSource(cfg.model), schedule)
}

/// As [`run_rand_mfreq`], drawing parameters from latin hypercube batches.
pub fn run_rand_mfreq_lhs(
    cfg: &StrategyConfig,
    cube: &PreferenceHypercube,
) -> Result<RunResult, StrategyError> {
    let Method::RandMfreqLhs { period, bins } = cfg.method else {
        return Err(wrong_method(cfg, "rand-mfreqN-LHSB"));
    };
    let schedule = Resampling {
        period,
        on_infeasible: true,
    };
    run_resampling_with_source(cfg, cube, &mut LhsSource::new(cfg.model, bins), schedule)
}

fn wrong_method(cfg: &StrategyConfig, expected: &str) -> StrategyError {
    StrategyError::InvalidConfig(format!("expected a {expected} method, got {}", cfg.method))
}

/// Rollout score; larger is better. Preferred data rank by how rarely their
/// cell has been seen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Fitness {
    Infeasible,
    Outside,
    Preferred(Reverse<u32>),
}

impl Fitness {
    pub fn of(datum: &GeneratedDatum, archive: &DensityArchive) -> Self {
        match datum.features {
            None => Fitness::Infeasible,
            Some(fv) => match archive.count(fv) {
                None => Fitness::Outside,
                Some(c) => Fitness::Preferred(Reverse(c)),
            },
        }
    }
}

/// Level-1 nested Monte-Carlo search over the generator's decisions, using
/// the model's mid-point parameters for rollouts.
pub fn run_nmcs(
    cfg: &StrategyConfig,
    cube: &PreferenceHypercube,
) -> Result<RunResult, StrategyError> {
    let Method::Nmcs {
        sample_size,
        update,
    } = cfg.method
    else {
        return Err(wrong_method(cfg, "nmcs-S-mode"));
    };
    cfg.validate()?;
    let gen = ExprGenerator;
    let params = ChoiceModelParams::midpoint(cfg.model);
    let base = Sampler::new(&gen, params.clone())?;
    let mut rng = SeededRng::from_seed(cfg.seed);
    let mut rec = Recorder::new(*cube, cfg.budget);
    rec.parameters(&params);
    let direct = update == NmcsUpdate::Direct;
    // decisions at parameter-free sites cannot change the features
    let searchable = |d: &Decision| gen.site(d.point.id).is_some_and(|s| s.parameterized);

    let mut pending: Vec<FeatureVector> = Vec::new();
    'construction: while !rec.exhausted() {
        let mut prefix: Vec<Decision> = Vec::new();
        loop {
            let mut best: Option<(Fitness, GeneratedDatum)> = None;
            let mut ties = 0u32;
            for _ in 0..sample_size {
                if rec.exhausted() {
                    break 'construction;
                }
                let datum = generate_with_policy(
                    &gen,
                    &base,
                    &mut Replay::new(&prefix),
                    cfg.limits,
                    &mut rng,
                )?;
                let fitness = Fitness::of(&datum, &rec.archive);
                if rec.log(&datum, SampleRole::Rollout, direct)? == Status::Preferred && !direct {
                    pending.extend(datum.features);
                }
                if datum.trace.len() <= prefix.len() {
                    continue;
                }
                let replace = match &best {
                    None => {
                        ties = 1;
                        true
                    }
                    Some((f, _)) => match fitness.cmp(f) {
                        Ordering::Greater => {
                            ties = 1;
                            true
                        }
                        Ordering::Equal => {
                            ties += 1;
                            rng.random_range(0..ties) == 0
                        }
                        Ordering::Less => false,
                    },
                };
                if replace {
                    best = Some((fitness, datum));
                }
            }
            let Some((_, chosen)) = best else {
                break;
            };
            let decisions = &chosen.trace.decisions;
            let mut end = prefix.len() + 1;
            while end < decisions.len() && !searchable(&decisions[end]) {
                end += 1;
            }
            prefix.clear();
            prefix.extend_from_slice(&decisions[..end]);
            if end == decisions.len() {
                break;
            }
        }
        if rec.exhausted() {
            break;
        }
        let emitted =
            generate_with_policy(&gen, &base, &mut Replay::new(&prefix), cfg.limits, &mut rng)?;
        if rec.log(&emitted, SampleRole::Final, direct)? == Status::Preferred && !direct {
            pending.extend(emitted.features);
        }
        for fv in pending.drain(..) {
            rec.archive.record(fv)?;
        }
    }
    for fv in pending.drain(..) {
        rec.archive.record(fv)?;
    }
    Ok(rec.finish(cfg))
}

/// Density comparison used by the hill climber: accepts the candidate when
/// its preferred data sit in significantly less dense cells than the
/// reference batch (one-sided Mann-Whitney, p below [`ACCEPT_P_VALUE`]).
pub fn hill_climb_accepts(
    archive: &DensityArchive,
    candidate: &[FeatureVector],
    reference: &[FeatureVector],
) -> Result<(bool, Option<UTestResult>), StrategyError> {
    if candidate.is_empty() || reference.is_empty() {
        return Ok((false, None));
    }
    let counts = |batch: &[FeatureVector]| -> Result<Vec<f64>, FeatureError> {
        batch
            .iter()
            .map(|&fv| {
                archive
                    .count(fv)
                    .map(f64::from)
                    .ok_or(FeatureError::OutsideCube(fv))
            })
            .collect()
    };
    let test = mann_whitney(&counts(candidate)?, &counts(reference)?, Alternative::Less)?;
    Ok((test.p_value < ACCEPT_P_VALUE, Some(test)))
}

/// Outcome of sampling one parameter point.
struct Batch {
    preferred: Vec<FeatureVector>,
    rejected: bool,
    complete: bool,
}

fn sample_batch(
    rec: &mut Recorder,
    sampler: &Sampler,
    cfg: &StrategyConfig,
    rng: &mut SeededRng,
    min_samples: usize,
    max_samples: usize,
) -> Result<Batch, StrategyError> {
    let gen = ExprGenerator;
    let mut batch = Batch {
        preferred: Vec::new(),
        rejected: false,
        complete: false,
    };
    let (mut n, mut infeasible, mut outside) = (0, 0, 0);
    while n < max_samples {
        if rec.exhausted() {
            return Ok(batch);
        }
        let datum = generate(&gen, sampler, cfg.limits, rng)?;
        match rec.log(&datum, SampleRole::Sample, true)? {
            Status::Preferred => batch.preferred.extend(datum.features),
            Status::Outside => outside += 1,
            Status::Infeasible => infeasible += 1,
        }
        n += 1;
        let feasible = n - infeasible;
        if n >= min_samples && (3 * infeasible > n || 2 * outside > feasible) {
            batch.rejected = true;
            break;
        }
    }
    batch.complete = true;
    Ok(batch)
}

/// Hill climbing over choice-model parameters with Gaussian steps and a
/// statistical density comparison.
pub fn run_hillclimb(
    cfg: &StrategyConfig,
    cube: &PreferenceHypercube,
) -> Result<RunResult, StrategyError> {
    let Method::HillClimb {
        min_samples,
        max_samples,
    } = cfg.method
    else {
        return Err(wrong_method(cfg, "hillclimb-MIN-MAX"));
    };
    cfg.validate()?;
    let gen = ExprGenerator;
    let mut rng = SeededRng::from_seed(cfg.seed);
    let mut rec = Recorder::new(*cube, cfg.budget);

    // start from a uniform draw whose first batch reaches the cube and
    // passes the same screen as a candidate
    let (mut current, mut reference) = loop {
        if rec.exhausted() {
            return Ok(rec.finish(cfg));
        }
        let params = sample_uniform(cfg.model, &mut rng);
        rec.parameters(&params);
        let sampler = Sampler::new(&gen, params.clone())?;
        let batch = sample_batch(&mut rec, &sampler, cfg, &mut rng, min_samples, max_samples)?;
        if batch.complete && !batch.rejected && !batch.preferred.is_empty() {
            break (params, batch.preferred);
        }
    };

    while !rec.exhausted() {
        let candidate = perturb_gaussian(&current, cfg.sigma, &mut rng)?;
        let sampler = Sampler::new(&gen, candidate.clone())?;
        let batch = sample_batch(&mut rec, &sampler, cfg, &mut rng, min_samples, max_samples)?;
        if !batch.complete || batch.rejected {
            continue;
        }
        // refresh the reference with a new batch from the current point so a
        // lucky accepted batch does not freeze the search
        let current_sampler = Sampler::new(&gen, current.clone())?;
        let fresh = sample_batch(
            &mut rec,
            &current_sampler,
            cfg,
            &mut rng,
            max_samples,
            max_samples,
        )?;
        if !fresh.complete {
            break;
        }
        if !fresh.preferred.is_empty() {
            reference = fresh.preferred;
        }
        let (accept, _) = hill_climb_accepts(&rec.archive, &batch.preferred, &reference)?;
        if accept {
            rec.params.push(ParameterEvent {
                attempt: rec.used(),
                values: candidate.values().to_vec(),
            });
            current = candidate;
            reference = batch.preferred;
        }
    }
    Ok(rec.finish(cfg))
}
