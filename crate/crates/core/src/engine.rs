//! Derivation engine: runs a grammar-as-program generator and routes every
//! stochastic decision through a choice model or decision policy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature::{extract_features, FeatureVector};
use crate::rng::SeededRng;

/// Kind of a static decision site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChoiceKind {
    RuleSelection,
    /// Alternative 0 is `false`, 1 is `true`.
    Boolean,
    /// Alternative 0 stops the repetition, 1 continues it.
    RepetitionContinue,
}

/// A decision site declared by a generator. Sites are listed in source order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChoiceSite {
    pub id: u16,
    pub name: &'static str,
    pub kind: ChoiceKind,
    pub alternatives: usize,
    /// Whether depth-conditioned models may use the nesting depth here.
    pub depth_contextual: bool,
    /// Sites without parameters are decided uniformly by every model.
    pub parameterized: bool,
}

/// A site as encountered at runtime, with its nesting-depth context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChoicePointId {
    pub id: u16,
    pub kind: ChoiceKind,
    pub depth: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Decision {
    pub point: ChoicePointId,
    pub choice: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub decisions: Vec<Decision>,
    /// False when the derivation was aborted for exceeding a limit.
    pub complete: bool,
}

impl DecisionTrace {
    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceLimits {
    pub max_nesting_depth: u32,
    pub max_output_length: usize,
}

impl ResourceLimits {
    pub fn new(max_nesting_depth: u32, max_output_length: usize) -> Result<Self, EngineError> {
        let limits = Self {
            max_nesting_depth,
            max_output_length,
        };
        limits.validate()?;
        Ok(limits)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.max_nesting_depth == 0 || self.max_output_length == 0 {
            return Err(EngineError::InvalidLimits);
        }
        Ok(())
    }
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            max_nesting_depth: 20,
            max_output_length: 10_000,
        }
    }
}

/// Outcome of one generation attempt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratedDatum {
    /// `None` marks an infeasible attempt.
    pub output: Option<String>,
    pub trace: DecisionTrace,
    pub features: Option<FeatureVector>,
}

impl GeneratedDatum {
    pub fn is_feasible(&self) -> bool {
        self.output.is_some()
    }
}

/// Configuration errors. Infeasibility is not an error; it is reported in the
/// returned [`GeneratedDatum`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("choice model has {found} parameters, generator schema requires {expected}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("unknown choice point {0}")]
    UnknownChoicePoint(u16),
    #[error(
        "alternative {choice} out of range for choice point {id} ({alternatives} alternatives)"
    )]
    ChoiceOutOfRange {
        id: u16,
        choice: usize,
        alternatives: usize,
    },
    #[error("resource limits must be strictly positive")]
    InvalidLimits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LimitExceeded {
    NestingDepth,
    OutputLength,
}

/// Why a derivation stopped before completing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Abort {
    Limit(LimitExceeded),
    Config(EngineError),
}

impl From<EngineError> for Abort {
    fn from(e: EngineError) -> Self {
        Abort::Config(e)
    }
}

/// A generator expressed in the host language.
pub trait GeneratorProgram: Send + Sync {
    fn schema(&self) -> &[ChoiceSite];

    fn derive(&self, d: &mut Derivation<'_>) -> Result<(), Abort>;

    fn site(&self, id: u16) -> Option<&ChoiceSite> {
        self.schema().iter().find(|s| s.id == id)
    }
}

/// Stochastic choice model.
pub trait ChoiceModel {
    fn check_schema(&self, schema: &[ChoiceSite]) -> Result<(), EngineError>;

    fn decide(&self, point: &ChoicePointId, rng: &mut SeededRng) -> Result<usize, EngineError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyChoice {
    Force(usize),
    Delegate,
}

/// Per-decision override of a base choice model. `step` is the index of the
/// decision within the derivation.
pub trait DecisionPolicy {
    fn choose(&mut self, step: usize, point: &ChoicePointId) -> PolicyChoice;
}

impl<F> DecisionPolicy for F
where
    F: FnMut(usize, &ChoicePointId) -> PolicyChoice,
{
    fn choose(&mut self, step: usize, point: &ChoicePointId) -> PolicyChoice {
        self(step, point)
    }
}

/// Forces a recorded decision prefix, then delegates.
#[derive(Clone, Copy, Debug)]
pub struct Replay<'t> {
    prefix: &'t [Decision],
}

impl<'t> Replay<'t> {
    pub fn new(prefix: &'t [Decision]) -> Self {
        Self { prefix }
    }
}

impl DecisionPolicy for Replay<'_> {
    fn choose(&mut self, step: usize, point: &ChoicePointId) -> PolicyChoice {
        match self.prefix.get(step) {
            Some(d) => {
                debug_assert_eq!(d.point.id, point.id, "replayed trace diverged");
                PolicyChoice::Force(d.choice)
            }
            None => PolicyChoice::Delegate,
        }
    }
}

/// Delegates every decision to the base model.
#[derive(Clone, Copy, Debug, Default)]
pub struct Delegate;

impl DecisionPolicy for Delegate {
    fn choose(&mut self, _: usize, _: &ChoicePointId) -> PolicyChoice {
        PolicyChoice::Delegate
    }
}

/// Mutable state of one derivation, handed to [`GeneratorProgram::derive`].
pub struct Derivation<'a> {
    schema: &'a [ChoiceSite],
    limits: ResourceLimits,
    model: &'a dyn ChoiceModel,
    policy: &'a mut dyn DecisionPolicy,
    rng: &'a mut SeededRng,
    output: String,
    decisions: Vec<Decision>,
    depth: u32,
}

impl Derivation<'_> {
    /// Resolves a decision at `site`, recording it in the trace.
    pub fn choose(&mut self, site: u16) -> Result<usize, Abort> {
        let entry = self
            .schema
            .iter()
            .find(|s| s.id == site)
            .ok_or(EngineError::UnknownChoicePoint(site))?;
        let point = ChoicePointId {
            id: site,
            kind: entry.kind,
            depth: self.depth,
        };
        let choice = match self.policy.choose(self.decisions.len(), &point) {
            PolicyChoice::Force(c) => c,
            PolicyChoice::Delegate => self.model.decide(&point, self.rng)?,
        };
        if choice >= entry.alternatives {
            return Err(EngineError::ChoiceOutOfRange {
                id: site,
                choice,
                alternatives: entry.alternatives,
            }
            .into());
        }
        self.decisions.push(Decision { point, choice });
        Ok(choice)
    }

    pub fn emit(&mut self, s: &str) -> Result<(), Abort> {
        self.output.push_str(s);
        self.check_length()
    }

    pub fn emit_char(&mut self, c: char) -> Result<(), Abort> {
        self.output.push(c);
        self.check_length()
    }

    fn check_length(&self) -> Result<(), Abort> {
        if self.output.len() > self.limits.max_output_length {
            Err(Abort::Limit(LimitExceeded::OutputLength))
        } else {
            Ok(())
        }
    }

    /// Enters one nesting level.
    pub fn enter(&mut self) -> Result<(), Abort> {
        self.depth += 1;
        if self.depth > self.limits.max_nesting_depth {
            Err(Abort::Limit(LimitExceeded::NestingDepth))
        } else {
            Ok(())
        }
    }

    pub fn leave(&mut self) {
        self.depth -= 1;
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn output(&self) -> &str {
        &self.output
    }
}

/// Runs `generator` with every decision delegated to `model`.
pub fn generate<G, M>(
    generator: &G,
    model: &M,
    limits: ResourceLimits,
    rng: &mut SeededRng,
) -> Result<GeneratedDatum, EngineError>
where
    G: GeneratorProgram + ?Sized,
    M: ChoiceModel + ?Sized,
{
    generate_with_policy(generator, model, &mut Delegate, limits, rng)
}

/// Runs `generator`, letting `policy` force or delegate each decision.
pub fn generate_with_policy<G, M, P>(
    generator: &G,
    model: &M,
    policy: &mut P,
    limits: ResourceLimits,
    rng: &mut SeededRng,
) -> Result<GeneratedDatum, EngineError>
where
    G: GeneratorProgram + ?Sized,
    M: ChoiceModel + ?Sized,
    P: DecisionPolicy,
{
    limits.validate()?;
    let schema = generator.schema();
    model.check_schema(schema)?;
    let mut d = Derivation {
        schema,
        limits,
        model: &AsDyn(model),
        policy,
        rng,
        output: String::new(),
        decisions: Vec::new(),
        depth: 0,
    };
    match generator.derive(&mut d) {
        Ok(()) => {
            let features = extract_features(&d.output);
            Ok(GeneratedDatum {
                output: Some(d.output),
                trace: DecisionTrace {
                    decisions: d.decisions,
                    complete: true,
                },
                features: Some(features),
            })
        }
        Err(Abort::Limit(_)) => Ok(GeneratedDatum {
            output: None,
            trace: DecisionTrace {
                decisions: d.decisions,
                complete: false,
            },
            features: None,
        }),
        Err(Abort::Config(e)) => Err(e),
    }
}

// Lets unsized models be stored behind `&dyn ChoiceModel`.
struct AsDyn<'m, M: ?Sized>(&'m M);

impl<M: ChoiceModel + ?Sized> ChoiceModel for AsDyn<'_, M> {
    fn check_schema(&self, schema: &[ChoiceSite]) -> Result<(), EngineError> {
        self.0.check_schema(schema)
    }

    fn decide(&self, point: &ChoicePointId, rng: &mut SeededRng) -> Result<usize, EngineError> {
        self.0.decide(point, rng)
    }
}
