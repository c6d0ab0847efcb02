//! Discriminative low-dimensional linear embeddings learned from triplet
//! similarity constraints, with a squared-distance baseline and the usual
//! biometric verification and identification metrics.
//!
//! The learned map `W ∈ R^(d_out × d_in)` is trained by online SGD on single
//! triplets `(anchor, positive, negative)` of unit-norm feature rows:
//!
//! ```text
//! loss = max(0, α + (W a)·(W n) − (W a)·(W p))
//! ```
//!
//! starting from the top principal components, with the negative mined as the
//! hardest of a random pool. See [`tse`] and [`tde`] for the two objectives,
//! [`eval`] for ROC / EER / TAR@FAR / rank-k, and [`pipeline`] for the full
//! synthetic experiment.
//!
//! With the default `parallel` feature the inner loops (pool mining, cache
//! updates, covariance, pair scoring) run on rayon; results are bitwise
//! identical to the sequential build.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod linalg;
pub mod pca;
pub mod pipeline;
pub mod synth;
pub mod tde;
pub mod triplet;
pub mod tse;

pub use dataset::{
    flatten_template, normalize_unit, FeatureFormat, FeatureVector, LabeledDataset, Pair,
    PairProtocol, Template, TemplateSet,
};
pub use error::{Error, Result};
pub use eval::{
    eer, identify, roc, score_pair, score_protocol, tar_at_far, RocCurve, ScoreMode, ScoreSet,
};
pub use exec::Execution;
pub use pca::{pca_init, project, EmbeddingMatrix};
pub use synth::{generate_clusters, SynthConfig};
pub use tde::{tde_loss, tde_update, train_tde};
pub use triplet::{EtaSchedule, TrainConfig, TrainReport, Trainer, Triplet, TripletSampler};
pub use tse::{mine_hard_negative, train_tse, tse_loss, tse_update};
