//! Generation of arithmetic-expression test inputs whose features diversely
//! cover a preference hypercube.
//!
//! The [`engine`] runs a generator program and delegates each decision to a
//! [`choice`] model; [`strategy`] holds the search methods that steer those
//! models toward sparsely covered [`feature`] cells, and [`experiment`]
//! executes method grids and writes plot-ready CSV.

pub mod choice;
pub mod engine;
pub mod experiment;
pub mod expr;
pub mod feature;
pub mod rng;
pub mod stats;
pub mod strategy;

pub use choice::{ChoiceModelParams, ModelKind, Sampler};
pub use engine::{generate, generate_with_policy, GeneratedDatum, ResourceLimits};
pub use expr::{build_generator, validate_expression, ExprGenerator};
pub use feature::{extract_features, DensityArchive, FeatureVector, PreferenceHypercube};
pub use rng::SeededRng;
pub use strategy::{run_strategy, Method, RunResult, StrategyConfig};
