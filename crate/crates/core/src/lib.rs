//! Linear binary classification for imbalanced high-dimension,
//! low-sample-size data.
//!
//! The main entry point is [`classifier::fit_psc`], which trains the
//! population structure-learned classifier: a max-margin dual QP whose Gram
//! matrix is reweighted by `[I − λ(βS_B + S_W)]⁻¹`, evaluated through the
//! Woodbury identity so cost grows linearly in the feature dimension, with an
//! intercept that splits the class gap according to the class sizes.

pub mod classifier;
pub mod cv;
pub mod dataset;
pub mod error;
pub mod fmt;
pub mod intercept;
pub mod metrics;
pub mod qp;
pub mod rng;
pub mod scatter;
pub mod smw;

pub use classifier::{
    bayes_oracle, fit_cssvm, fit_psc, fit_rmdd, train_cssvm, train_psc, Hyperparams, LinearModel, Method,
};
pub use dataset::{class_stats, load_csv, simulate_fig1, simulate_hdlss, stratified_kfold, ClassStats, FoldPlan, LabeledMatrix};
pub use error::{Error, Result};
pub use metrics::{bccr, evaluate, mwe, ConfusionMatrix, EvalReport};
