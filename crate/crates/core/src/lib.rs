//! Sparse, mutual-information-guided synthesis of tabular data.
//!
//! Features are discretized into binary pseudo-features, a pairwise
//! mutual-information graph is estimated over them, and that graph steers an
//! autoregressive value generator one feature at a time, either by pruning the
//! context ([`guidance::select_context`]) or by rescaling the candidate logits
//! ([`guidance::correct_logits`]). The [`evaluation`] module scores synthetic
//! tables for utility, realism, privacy and rule violations.

pub mod artifact;
pub mod backend;
pub mod dataset;
pub mod engine;
pub mod evaluation;
pub mod guidance;
pub mod migraph;
pub mod pipeline;
pub mod pseudofeatures;
pub mod sampler;
pub mod sweep;

use thiserror::Error;

pub use backend::{Backend, BuiltinBackend, CandidateDistribution, ContextPair, HttpBackend};
pub use dataset::{FeatureKind, FeatureSchema, FeatureSpec, Record, Table, Task, Value};
pub use engine::{Engine, EngineConfig};
pub use guidance::{GuidanceConfig, GuidanceMode};
pub use migraph::{MiConfig, MiGraph};
pub use pseudofeatures::{BinLayout, BinningMode, PseudoId};
pub use sampler::{PrefixMode, SamplerConfig, SynthRecord};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Bin(#[from] pseudofeatures::BinError),
    #[error(transparent)]
    Backend(#[from] backend::BackendError),
    #[error(transparent)]
    Guidance(#[from] guidance::GuidanceError),
    #[error(transparent)]
    Sample(#[from] sampler::SampleError),
    #[error(transparent)]
    Eval(#[from] evaluation::EvalError),
    #[error(transparent)]
    Artifact(#[from] artifact::ArtifactError),
    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),
}

impl Error {
    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        use backend::BackendError as B;
        use dataset::DatasetError as D;
        use evaluation::EvalError as E;
        use pseudofeatures::BinError as P;
        match self {
            Error::Dataset(e) => match e {
                D::Io { .. } => "Io",
                D::Csv(_) => "Csv",
                D::InvalidSchema(_) => "InvalidSchema",
                D::MissingColumn(_) => "MissingColumn",
                D::UnexpectedColumn(_) => "UnexpectedColumn",
                D::TypeMismatch { .. } => "TypeMismatch",
                D::MissingValue { .. } => "MissingValue",
                D::EmptyTable => "EmptyTable",
                D::RowArity { .. } => "RowArity",
                D::InvalidFraction(_) => "InvalidFraction",
            },
            Error::Bin(e) => match e {
                P::OutOfRange { .. } => "OutOfRange",
                P::UnseenCategory { .. } => "UnseenCategory",
                P::UnknownFeature(_) => "UnknownFeature",
                _ => "Binning",
            },
            Error::Backend(e) => match e {
                B::Unavailable(_) => "BackendUnavailable",
                B::UnknownFeature(_) => "UnknownFeature",
                _ => "Backend",
            },
            Error::Guidance(_) => "InvalidGuidance",
            Error::Sample(_) => "Sampling",
            Error::Eval(e) => match e {
                E::DegenerateTarget(_) => "DegenerateTarget",
                E::MalformedPolygon(_) => "MalformedPolygon",
                _ => "Evaluation",
            },
            Error::Artifact(e) => match e {
                artifact::ArtifactError::Integrity(_) => "IntegrityError",
                artifact::ArtifactError::Version { .. } => "VersionMismatch",
                _ => "Artifact",
            },
            Error::InvalidPlan(_) => "InvalidPlan",
        }
    }
}
