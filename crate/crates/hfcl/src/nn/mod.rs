//! Minimal neural-network engine: flat-parameter forward pass, losses,
//! manual backpropagation, and plain SGD.
//!
//! Every operation is a pure function of its arguments; RNG state is
//! always passed in explicitly. Values are `f64` throughout so that
//! equal-seed runs reproduce parameter trajectories bit for bit.

mod ops;
mod spec;

pub use ops::{backward, forward, loss_mse, loss_xent, minibatch_gradient, minibatch_gradient_ordered, sgd_step};
pub use spec::{LayerSpec, ModelParams, ModelSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("model spec is accounting-only and cannot be trained")]
    NotTrainable,
    #[error("parameter vector length {got} does not match spec ({expected})")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite parameter at flat index {index}")]
    NonFiniteParameter { index: usize },
    #[error("non-finite value produced by layer {layer} during {stage}")]
    NonFinite { layer: usize, stage: &'static str },
    #[error("input length {got} does not match model input dim {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("prediction/label shape mismatch: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("batch must be nonempty")]
    EmptyBatch,
    #[error("gradient length {got} does not match parameter count {expected}")]
    GradientLength { expected: usize, got: usize },
    #[error("mini-batch count must be at least 1")]
    ZeroMinibatches,
    #[error("shard of {samples} samples cannot form {minibatches} mini-batches")]
    TooFewSamples { samples: usize, minibatches: usize },
}

/// How a gradient vector has been transformed in transit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Computed locally, untouched.
    Clean,
    /// Passed through the quantizer.
    Quantized,
    /// Quantized, then corrupted by channel noise.
    QuantizedNoised,
}

/// A flat gradient with its transit history and source client.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    values: Vec<f64>,
    provenance: Provenance,
    client: Option<usize>,
}

impl GradientVector {
    /// A freshly computed (clean) gradient.
    pub fn clean(values: Vec<f64>) -> Self {
        Self {
            values,
            provenance: Provenance::Clean,
            client: None,
        }
    }

    /// Used by the channel model to tag transformed gradients.
    pub fn with_provenance(values: Vec<f64>, provenance: Provenance, client: Option<usize>) -> Self {
        Self { values, provenance, client }
    }

    /// Tags the source client, consuming self.
    pub fn from_client(mut self, client: usize) -> Self {
        self.client = Some(client);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn client(&self) -> Option<usize> {
        self.client
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Squared Euclidean norm.
    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Training objective selector. The squared-error loss matches the
/// model's regression formulation; the per-class cross-entropy is the
/// classification default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Mse,
    CrossEntropy,
}

impl Loss {
    pub fn evaluate(self, pred: &[Vec<f64>], labels: &[Vec<f64>]) -> Result<f64, NnError> {
        match self {
            Loss::Mse => loss_mse(pred, labels),
            Loss::CrossEntropy => loss_xent(pred, labels),
        }
    }
}

impl std::str::FromStr for Loss {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mse" => Ok(Loss::Mse),
            "xent" | "cross-entropy" => Ok(Loss::CrossEntropy),
            other => Err(format!("unknown loss '{other}' (expected mse or xent)")),
        }
    }
}

/// How the parameter server combines the passive and active gradient
/// groups into one update direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Sum of the two group means (the printed update rule). With both
    /// groups populated the effective step is up to twice a plain
    /// gradient step.
    #[default]
    GroupMeanSum,
    /// Sample-count-weighted mean over all participating gradients,
    /// provided for comparison against the printed rule.
    SampleWeighted,
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// Constant learning rate.
    pub eta: f64,
    /// Mini-batches per local step; `None` derives the count from
    /// `batch_size` and the shard length.
    pub minibatches: Option<usize>,
    /// Target mini-batch size used when `minibatches` is not set.
    pub batch_size: usize,
    /// Total communication rounds.
    pub rounds: usize,
    /// Master seed for every stream in the run.
    pub seed: u64,
    /// Training objective.
    pub loss: Loss,
    /// Gradient combination rule at the server.
    pub aggregation: Aggregation,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.eta > 0.0) {
            return Err(NnError::InvalidSpec("learning rate must be positive".into()));
        }
        if self.minibatches == Some(0) {
            return Err(NnError::ZeroMinibatches);
        }
        if self.batch_size == 0 {
            return Err(NnError::InvalidSpec("batch size must be at least 1".into()));
        }
        if self.rounds == 0 {
            return Err(NnError::InvalidSpec("round count must be at least 1".into()));
        }
        Ok(())
    }

    /// Mini-batch count for a shard of `samples` samples: the explicit
    /// count when set, otherwise `ceil(samples / batch_size)`, clamped so
    /// every mini-batch holds at least one sample.
    pub fn minibatches_for(&self, samples: usize) -> usize {
        let wanted = self
            .minibatches
            .unwrap_or_else(|| samples.div_ceil(self.batch_size).max(1));
        wanted.clamp(1, samples.max(1))
    }
}
