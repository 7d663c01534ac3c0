//! Stochastic choice models and parameter-space samplers.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    ChoiceKind, ChoiceModel, ChoicePointId, ChoiceSite, EngineError, GeneratorProgram,
};
use crate::expr::ExprGenerator;
use crate::rng::SeededRng;

/// Number of depth buckets used by [`ModelKind::RecDepth5`]: depths 0..=3
/// exactly, and one bucket for every depth of 4 or more.
pub const DEPTH_BUCKETS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// One parameter group per choice site.
    Default,
    /// Like `Default`, but depth-contextual sites get one group per depth bucket.
    RecDepth5,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Default, ModelKind::RecDepth5];

    /// Parameter count for the arithmetic-expression generator.
    pub fn param_count(self) -> usize {
        ModelLayout::new(ExprGenerator.schema(), self).len
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Default => "Default",
            ModelKind::RecDepth5 => "RecDepth5",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Default" | "default" => Ok(ModelKind::Default),
            "RecDepth5" | "recdepth5" => Ok(ModelKind::RecDepth5),
            other => Err(ParamError::UnknownModel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("parameter {index} = {value} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("gaussian sigma must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
    #[error("latin hypercube needs at least one bin")]
    ZeroBins,
    #[error("unknown choice model `{0}`")]
    UnknownModel(String),
}

/// Flat probability vector parameterizing a choice model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceModelParams {
    kind: ModelKind,
    values: Vec<f64>,
}

impl ChoiceModelParams {
    /// Every component must lie in `[0, 1]`. The length is checked against a
    /// generator schema when the parameters are used.
    pub fn new(kind: ModelKind, values: Vec<f64>) -> Result<Self, ParamError> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ParamError::OutOfRange { index, value });
        }
        Ok(Self { kind, values })
    }

    /// All components at 0.5.
    pub fn midpoint(kind: ModelKind) -> Self {
        Self {
            kind,
            values: vec![0.5; kind.param_count()],
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SiteSlot {
    offset: usize,
    /// Parameters per depth bucket.
    width: usize,
    buckets: usize,
}

/// Maps each parameterized site of a schema to its slice of the vector.
#[derive(Clone, Debug, PartialEq, Eq)]
struct ModelLayout {
    slots: Vec<Option<SiteSlot>>,
    len: usize,
}

impl ModelLayout {
    fn new(schema: &[ChoiceSite], kind: ModelKind) -> Self {
        let max_id = schema.iter().map(|s| s.id as usize).max().unwrap_or(0);
        let mut slots = vec![None; max_id + 1];
        let mut offset = 0;
        for site in schema.iter().filter(|s| s.parameterized) {
            let width = match site.kind {
                ChoiceKind::RuleSelection => site.alternatives,
                ChoiceKind::Boolean | ChoiceKind::RepetitionContinue => 1,
            };
            let buckets = match kind {
                ModelKind::RecDepth5 if site.depth_contextual => DEPTH_BUCKETS,
                _ => 1,
            };
            slots[site.id as usize] = Some(SiteSlot {
                offset,
                width,
                buckets,
            });
            offset += width * buckets;
        }
        Self { slots, len: offset }
    }
}

/// A choice model bound to one generator's schema.
#[derive(Clone, Debug)]
pub struct Sampler {
    params: ChoiceModelParams,
    layout: ModelLayout,
    alternatives: Vec<usize>,
}

impl Sampler {
    pub fn new<G: GeneratorProgram + ?Sized>(
        generator: &G,
        params: ChoiceModelParams,
    ) -> Result<Self, EngineError> {
        let schema = generator.schema();
        let layout = ModelLayout::new(schema, params.kind);
        if layout.len != params.len() {
            return Err(EngineError::SchemaMismatch {
                expected: layout.len,
                found: params.len(),
            });
        }
        let mut alternatives = vec![0; layout.slots.len()];
        for site in schema {
            alternatives[site.id as usize] = site.alternatives;
        }
        Ok(Self {
            params,
            layout,
            alternatives,
        })
    }

    pub fn params(&self) -> &ChoiceModelParams {
        &self.params
    }
}

impl ChoiceModel for Sampler {
    fn check_schema(&self, schema: &[ChoiceSite]) -> Result<(), EngineError> {
        let expected = ModelLayout::new(schema, self.params.kind);
        if expected != self.layout {
            return Err(EngineError::SchemaMismatch {
                expected: expected.len,
                found: self.params.len(),
            });
        }
        Ok(())
    }

    fn decide(&self, point: &ChoicePointId, rng: &mut SeededRng) -> Result<usize, EngineError> {
        let id = point.id as usize;
        let alternatives = *self
            .alternatives
            .get(id)
            .filter(|&&a| a > 0)
            .ok_or(EngineError::UnknownChoicePoint(point.id))?;
        let Some(slot) = self.layout.slots[id] else {
            return Ok(rng.random_range(0..alternatives));
        };
        let bucket = (point.depth as usize).min(slot.buckets - 1);
        let start = slot.offset + bucket * slot.width;
        let p = &self.params.values[start..start + slot.width];
        Ok(match point.kind {
            ChoiceKind::RuleSelection => categorical(p, rng),
            ChoiceKind::Boolean | ChoiceKind::RepetitionContinue => {
                usize::from(rng.random::<f64>() < p[0])
            }
        })
    }
}

/// Samples an index proportional to `weights`; uniform when all are zero.
fn categorical(weights: &[f64], rng: &mut SeededRng) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.random_range(0..weights.len());
    }
    let mut target = rng.random::<f64>() * total;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if target < w {
                return i;
            }
            target -= w;
            last_positive = i;
        }
    }
    last_positive
}

/// Independent uniform draw for every component.
pub fn sample_uniform(kind: ModelKind, rng: &mut SeededRng) -> ChoiceModelParams {
    let values = (0..kind.param_count())
        .map(|_| rng.random::<f64>())
        .collect();
    ChoiceModelParams { kind, values }
}

/// Adds independent `N(0, sigma)` noise to every component, then clamps to `[0, 1]`.
pub fn perturb_gaussian(
    params: &ChoiceModelParams,
    sigma: f64,
    rng: &mut SeededRng,
) -> Result<ChoiceModelParams, ParamError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(ParamError::InvalidSigma(sigma));
    }
    let noise = Normal::new(0.0, sigma).map_err(|_| ParamError::InvalidSigma(sigma))?;
    let values = params
        .values
        .iter()
        .map(|v| (v + noise.sample(rng)).clamp(0.0, 1.0))
        .collect();
    Ok(ChoiceModelParams {
        kind: params.kind,
        values,
    })
}

/// Latin hypercube batch of `bins` vectors: along every dimension, each of
/// the `bins` equal-width subintervals of `[0, 1]` is hit exactly once.
pub fn lhs_batch(
    kind: ModelKind,
    bins: usize,
    rng: &mut SeededRng,
) -> Result<Vec<ChoiceModelParams>, ParamError> {
    if bins == 0 {
        return Err(ParamError::ZeroBins);
    }
    let dims = kind.param_count();
    let mut batch = vec![vec![0.0; dims]; bins];
    let mut strata: Vec<usize> = (0..bins).collect();
    for dim in 0..dims {
        strata.shuffle(rng);
        for (row, &stratum) in batch.iter_mut().zip(&strata) {
            // `u < 1` keeps the value inside its stratum
            let u: f64 = rng.random();
            row[dim] = ((stratum as f64 + u) / bins as f64).min(1.0);
        }
    }
    Ok(batch
        .into_iter()
        .map(|values| ChoiceModelParams { kind, values })
        .collect())
}
