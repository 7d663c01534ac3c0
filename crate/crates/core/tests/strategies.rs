use featdiv_core::choice::{sample_uniform, ChoiceModelParams, ModelKind, Sampler};
use featdiv_core::engine::{generate, ResourceLimits};
use featdiv_core::expr::ExprGenerator;
use featdiv_core::feature::{extract_features, DensityArchive, FeatureVector, PreferenceHypercube};
use featdiv_core::rng::SeededRng;
use featdiv_core::stats::UMethod;
use featdiv_core::strategy::{
    hill_climb_accepts, run_resampling_with_source, run_strategy, Method, ParamSource, Resampling,
    RunResult, SampleRole, Status, StrategyConfig, StrategyError, ACCEPT_P_VALUE,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const ALL_METHODS: [&str; 10] = [
    "rand-once",
    "rand-freq1",
    "rand-freq7",
    "rand-mfreq10",
    "rand-mfreq5-LHS10",
    "rand-mfreq10-LHS30",
    "nmcs-2-direct",
    "nmcs-4-batch",
    "hillclimb-4-20",
    "nmcs-1-direct",
];

fn cube() -> PreferenceHypercube {
    PreferenceHypercube::standard()
}

fn run(method: &str, model: ModelKind, budget: usize, seed: u64) -> RunResult {
    let cfg = StrategyConfig::new(method.parse().unwrap(), model, budget, seed);
    run_strategy(&cfg, &cube()).unwrap()
}

fn same_log(a: &RunResult, b: &RunResult) -> bool {
    a.sample_log == b.sample_log && a.parameter_log == b.parameter_log && a.counts == b.counts
}

#[test]
fn method_names_round_trip() {
    for name in ALL_METHODS {
        let m: Method = name.parse().unwrap();
        assert_eq!(m.to_string(), name);
    }
    for bad in [
        "rand-twice",
        "rand-freq",
        "rand-freq0",
        "nmcs-4-lazy",
        "hillclimb-20-4",
        "nmcs-x-direct",
        "",
    ] {
        assert!(bad.parse::<Method>().is_err(), "{bad}");
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = StrategyConfig::new(Method::RandOnce, ModelKind::Default, 0, 1);
    assert!(matches!(
        run_strategy(&cfg, &cube()),
        Err(StrategyError::InvalidConfig(_))
    ));
    cfg.budget = 10;
    cfg.sigma = f64::NAN;
    assert!(run_strategy(&cfg, &cube()).is_err());
}

#[test]
fn every_method_honours_the_run_invariants() {
    for name in ALL_METHODS {
        for model in ModelKind::ALL {
            for seed in 0..3 {
                let r = run(name, model, 700, seed);
                let nmcs = name.starts_with("nmcs");
                if nmcs {
                    assert!(r.attempts() <= 700);
                } else {
                    assert_eq!(r.attempts(), 700, "{name}");
                }
                assert_eq!(r.sample_log.len(), r.attempts());
                assert_eq!(r.sample_times.len(), r.attempts());
                assert_eq!(r.archive.total_recorded(), r.counts.preferred, "{name}");
                assert_eq!(r.archive.covered(), r.covered_cells().len());
                assert!((r.fshc - r.archive.fshc()).abs() < 1e-12);
                let mut prev = 0;
                for (i, s) in r.sample_log.iter().enumerate() {
                    assert_eq!(s.attempt, i);
                    assert!(s.covered >= prev, "{name}: coverage dropped");
                    prev = s.covered;
                    assert_eq!(s.features.is_none(), s.status == Status::Infeasible);
                    if let Some(f) = s.features {
                        assert!(f.num_digits >= 2 && f.num_digits < f.length);
                    }
                }
                assert!(prev <= r.archive.covered());
                assert!(r.covered_cells().len() <= 651);
                for p in &r.parameter_log {
                    assert!(p.values.iter().all(|v| (0.0..=1.0).contains(v)));
                    assert_eq!(p.values.len(), model.param_count());
                }
            }
        }
    }
}

#[test]
fn runs_are_reproducible() {
    for name in ALL_METHODS {
        let a = run(name, ModelKind::RecDepth5, 1500, 42);
        let b = run(name, ModelKind::RecDepth5, 1500, 42);
        assert!(same_log(&a, &b), "{name}");
        let c = run(name, ModelKind::RecDepth5, 1500, 43);
        assert!(!same_log(&a, &c), "{name}: seed had no effect");
    }
}

#[test]
fn rand_freq_with_period_equal_to_budget_is_rand_once() {
    for seed in 0..5 {
        let once = run("rand-once", ModelKind::Default, 800, seed);
        let freq = run("rand-freq800", ModelKind::Default, 800, seed);
        assert!(same_log(&once, &freq));
        assert_eq!(once.parameter_log.len(), 1);
    }
}

// Parameters that always force a subexpression: every attempt is infeasible.
struct AlwaysRecurse;

impl ParamSource for AlwaysRecurse {
    fn next_params(&mut self, _: &mut SeededRng) -> Result<ChoiceModelParams, StrategyError> {
        Ok(ChoiceModelParams::new(
            ModelKind::Default,
            vec![0.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
        )?)
    }
}

// Uniform parameters that never pick a subexpression: nothing is infeasible.
struct NeverRecurse;

impl ParamSource for NeverRecurse {
    fn next_params(&mut self, rng: &mut SeededRng) -> Result<ChoiceModelParams, StrategyError> {
        let mut values = sample_uniform(ModelKind::Default, rng).values().to_vec();
        values[0] = 1.0;
        values[1] = 0.0;
        // keep numbers short enough that no limit can be hit
        values[7] = values[7].min(0.9);
        Ok(ChoiceModelParams::new(ModelKind::Default, values)?)
    }
}

#[test]
fn mfreq_resamples_after_every_infeasible_attempt() {
    let cfg = StrategyConfig::new("rand-mfreq10".parse().unwrap(), ModelKind::Default, 300, 5);
    let schedule = Resampling {
        period: 10,
        on_infeasible: true,
    };
    let r = run_resampling_with_source(&cfg, &cube(), &mut AlwaysRecurse, schedule).unwrap();
    assert_eq!(r.counts.infeasible, 300);
    assert_eq!(r.parameter_log.len(), 300);
}

#[test]
fn mfreq_equals_freq_without_infeasible_attempts() {
    for seed in 0..5 {
        let cfg = StrategyConfig::new(
            Method::RandFreq { period: 10 },
            ModelKind::Default,
            2000,
            seed,
        );
        let freq = run_resampling_with_source(
            &cfg,
            &cube(),
            &mut NeverRecurse,
            Resampling {
                period: 10,
                on_infeasible: false,
            },
        )
        .unwrap();
        let mfreq = run_resampling_with_source(
            &cfg,
            &cube(),
            &mut NeverRecurse,
            Resampling {
                period: 10,
                on_infeasible: true,
            },
        )
        .unwrap();
        assert_eq!(freq.counts.infeasible, 0);
        assert!(same_log(&freq, &mfreq));
        assert_eq!(freq.parameter_log.len(), 200);
    }
}

#[test]
fn single_bin_lhs_equals_mfreq() {
    for model in ModelKind::ALL {
        for seed in 0..5 {
            let lhs = run("rand-mfreq7-LHS1", model, 1500, seed);
            let mfreq = run("rand-mfreq7", model, 1500, seed);
            assert!(same_log(&lhs, &mfreq));
        }
    }
}

#[test]
fn lhs_runs_draw_whole_batches_in_order() {
    let r = run("rand-mfreq10-LHS30", ModelKind::RecDepth5, 3000, 9);
    let draws = &r.parameter_log;
    assert_eq!(draws[0].attempt, 0);
    // within each complete batch of 30 draws every dimension hits every stratum
    for batch in draws.chunks_exact(30) {
        for dim in 0..ModelKind::RecDepth5.param_count() {
            let mut strata: Vec<usize> = batch
                .iter()
                .map(|p| ((p.values[dim] * 30.0) as usize).min(29))
                .collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..30).collect::<Vec<_>>());
        }
    }
}

// Two-sample chi-square homogeneity test on binned features.
fn homogeneity_p(a: &[usize], b: &[usize]) -> f64 {
    let (na, nb) = (
        a.iter().sum::<usize>() as f64,
        b.iter().sum::<usize>() as f64,
    );
    let mut stat = 0.0;
    let mut bins = 0;
    for (&x, &y) in a.iter().zip(b) {
        let total = (x + y) as f64;
        if total == 0.0 {
            continue;
        }
        let ea = total * na / (na + nb);
        let eb = total * nb / (na + nb);
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
        bins += 1;
    }
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

// Histogram over infeasible, length 3..=24 and longer.
fn histogram(features: impl Iterator<Item = Option<FeatureVector>>) -> Vec<usize> {
    let mut h = vec![0; 24];
    for f in features {
        let bin = match f {
            None => 0,
            Some(f) if f.length <= 24 => f.length - 2,
            Some(_) => 23,
        };
        h[bin] += 1;
    }
    h
}

#[test]
fn nmcs_with_one_sample_follows_the_base_model() {
    let r = run("nmcs-1-direct", ModelKind::Default, 1_000_000, 3);
    let emitted: Vec<Option<FeatureVector>> = r
        .sample_log
        .iter()
        .filter(|s| s.role == SampleRole::Final)
        .map(|s| s.features)
        .take(10_000)
        .collect();
    assert_eq!(emitted.len(), 10_000);

    let gen = ExprGenerator;
    let base = Sampler::new(&gen, ChoiceModelParams::midpoint(ModelKind::Default)).unwrap();
    let mut rng = SeededRng::from_seed(77);
    let plain = (0..10_000).map(|_| {
        let d = generate(&gen, &base, ResourceLimits::default(), &mut rng).unwrap();
        d.output.map(|s| extract_features(&s))
    });
    let p = homogeneity_p(&histogram(emitted.into_iter()), &histogram(plain));
    assert!(p > 0.01, "chi-square p = {p}");
}

#[test]
fn nmcs_batch_mode_freezes_the_archive_during_a_construction() {
    let r = run("nmcs-4-batch", ModelKind::Default, 3000, 8);
    // records from one construction end with its emitted datum
    for construction in r
        .sample_log
        .split_inclusive(|s| s.role == SampleRole::Final)
    {
        let covered = construction[0].covered;
        assert!(
            construction.iter().all(|s| s.covered == covered),
            "archive changed mid-construction"
        );
    }
    let direct = run("nmcs-4-direct", ModelKind::Default, 3000, 8);
    assert!(direct
        .sample_log
        .windows(2)
        .any(|w| w[0].role == SampleRole::Rollout && w[1].covered > w[0].covered));
}

#[test]
fn nmcs_emits_mostly_feasible_data() {
    let r = run("nmcs-4-direct", ModelKind::Default, 100_000, 2);
    let finals: Vec<_> = r
        .sample_log
        .iter()
        .filter(|s| s.role == SampleRole::Final)
        .collect();
    assert!(!finals.is_empty());
    let infeasible = finals
        .iter()
        .filter(|s| s.status == Status::Infeasible)
        .count();
    assert!(
        infeasible * 50 < finals.len(),
        "{infeasible} of {}",
        finals.len()
    );
}

fn archive_with(counts: &[(FeatureVector, u32)]) -> DensityArchive {
    let mut archive = DensityArchive::new(cube());
    for &(fv, n) in counts {
        for _ in 0..n {
            archive.record(fv).unwrap();
        }
    }
    archive
}

#[test]
fn hill_climb_accepts_candidates_in_fresh_cells() {
    let fresh: Vec<FeatureVector> = (0..4).map(|i| FeatureVector::new(20 + i, 5)).collect();
    let dense: Vec<FeatureVector> = (0..4).map(|i| FeatureVector::new(10 + i, 4)).collect();
    let mut counts: Vec<(FeatureVector, u32)> = fresh.iter().map(|&f| (f, 1)).collect();
    counts.extend(dense.iter().enumerate().map(|(i, &f)| (f, 5 + i as u32)));
    let archive = archive_with(&counts);
    let (accept, test) = hill_climb_accepts(&archive, &fresh, &dense).unwrap();
    let test = test.unwrap();
    assert!(accept);
    assert_eq!(test.method, UMethod::Exact);
    assert_eq!(test.u_statistic, 0.0);
    assert!((test.p_value - 1.0 / 70.0).abs() < 1e-12);
}

#[test]
fn hill_climb_rejects_equal_batches() {
    let batch: Vec<FeatureVector> = (0..4).map(|i| FeatureVector::new(12 + i, 3)).collect();
    let archive = archive_with(
        &batch
            .iter()
            .enumerate()
            .map(|(i, &f)| (f, 1 + i as u32))
            .collect::<Vec<_>>(),
    );
    let (accept, test) = hill_climb_accepts(&archive, &batch, &batch).unwrap();
    let test = test.unwrap();
    assert!(!accept);
    assert_eq!(test.u_statistic, 8.0);
    assert!(test.p_value >= ACCEPT_P_VALUE);
}

#[test]
fn hill_climb_rejects_empty_candidates() {
    let batch = vec![FeatureVector::new(12, 3)];
    let archive = archive_with(&[(batch[0], 1)]);
    assert_eq!(
        hill_climb_accepts(&archive, &[], &batch).unwrap(),
        (false, None)
    );
}

#[test]
fn hill_climb_with_zero_sigma_never_moves() {
    let mut cfg = StrategyConfig::new(
        "hillclimb-4-20".parse().unwrap(),
        ModelKind::RecDepth5,
        3000,
        4,
    );
    cfg.sigma = 0.0;
    let r = run_strategy(&cfg, &cube()).unwrap();
    let start = &r.parameter_log.last().unwrap().values;
    // accepted candidates equal the current point, so every logged vector is the start
    let first_accept = r
        .parameter_log
        .iter()
        .position(|p| &p.values == start)
        .unwrap();
    assert!(r.parameter_log[first_accept..]
        .iter()
        .all(|p| &p.values == start));
}
