//! Coupled phase/tool hidden Markov model for stabilizing noisy per-frame
//! predictions of surgical video classifiers.
//!
//! A phase chain selects the transition dynamics of K binary tool-presence
//! chains; classifier outputs are emissions through confusion matrices. The
//! crate fits the model with semi-supervised EM (observed labels are clamped),
//! decodes stabilized label sequences and computes recognition metrics.
//!
//! All numeric code is generic over [`Scalar`]; the `*64` aliases below are
//! what the file formats and CLI use.

pub mod decode;
pub mod em;
pub mod error;
pub mod evaluate;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod synth;

pub use decode::{
    stabilize, threshold_binarize, viterbi_decode, DecodedSequence, StabilizeMode, Stabilized,
};
pub use em::{
    em_fit, empirical_shortcut_fit, m_step, EmConfig, EmTrace, ShortcutFit, StopReason,
    ZeroRowPolicy,
};
pub use error::{Error, Result};
pub use evaluate::{evaluate, Evaluation};
pub use inference::{
    accumulate_counts, forward_backward, joint_emission, log_likelihood, posterior_marginals,
    ExpectedCounts, ForwardBackwardTables, JointState, PosteriorMarginals,
};
pub use model::{
    random_init, uniform_init, validate_params, FrameRecord, LabelSpace, ModelKind, ModelParams,
    VideoProfile, Violation,
};
pub use scalar::Scalar;

pub type ModelParams64 = ModelParams<f64>;
pub type ModelParams32 = ModelParams<f32>;
pub type VideoProfile64 = VideoProfile<f64>;
pub type VideoProfile32 = VideoProfile<f32>;
pub type FrameRecord64 = FrameRecord<f64>;
pub type ExpectedCounts64 = ExpectedCounts<f64>;
pub type PosteriorMarginals64 = PosteriorMarginals<f64>;
pub type DecodedSequence64 = DecodedSequence<f64>;
