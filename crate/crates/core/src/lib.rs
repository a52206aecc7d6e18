//! Multimodal (accelerometry + GNSS) animal behavior classification.
//!
//! The pipeline extracts per-datapoint features from each sensing mode, trains
//! single-hidden-layer MLP classifiers with L-BFGS, and combines the modes
//! either by concatenating features (FC) or by fusing per-mode posteriors
//! under class-conditional independence (PF). Evaluation is
//! leave-one-animal-out cross-validation scored with the Matthews correlation
//! coefficient.

pub mod accel_features;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod gnss_features;
pub mod ingest;
pub mod mlp;
pub mod optim;
pub mod synth;

pub use accel_features::{AccelFeatureConfig, FeatureVector};
pub use error::{Error, Result};
pub use eval::{
    ablate_gnss, complexity_table, count_ops, count_ops_profile, loao_cv, mcc_overall, mcc_per_class, ConfusionMatrix, CvConfig,
    CvResult, DatasetProfile, MccReport, OpCountReport,
};
pub use fusion::{
    concat_features, fuse_posteriors, fused_argmax, predict_with_fallback, train_pipeline, FeatureRow,
    FusionModel, Pipeline, PipelineConfig, Prediction,
};
pub use gnss_features::{GnssFeature, GnssFeatureConfig, GnssFeatureSet};
pub use mlp::{Classifier, HiddenSizePolicy, TrainConfig};
pub use synth::{gen_behavior_like, gen_discrete, BehaviorSpec, DiscreteModel, DiscreteSpec};
pub use optim::{lbfgs_minimize, train_mlp, OptimConfig, OptimResult, Status};
pub use ingest::{
    AccelSegment, BehaviorClass, Datapoint, DatasetFormat, GnssFix, Priors, ValidationReport,
    WaterPoint, NUM_CLASSES,
};
