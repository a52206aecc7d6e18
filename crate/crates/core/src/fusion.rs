//! Feature concatenation (FC) and posterior-probability fusion (PF).
//!
//! PF trains one classifier per sensing mode and combines their posteriors
//! under the assumption that the modes are conditionally independent given
//! the class:
//!
//! `q_c ∝ p(c | accel) · p(c | gnss) / p(c)`
//!
//! Because softmax posteriors are `exp(z_c) / Z`, the fused decision only
//! needs `argmax_c (za_c + zg_c − ln p(c))`, with no exponentials.
//! When one mode is missing PF falls back to the classifier of the other.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::accel_features::{accel_feature_vector, AccelFeatureConfig, FeatureVector};
use crate::error::{Error, Result};
use crate::eval::{mcc_overall, mix_seed, ConfusionMatrix};
use crate::gnss_features::{gnss_feature_vector, GnssFeatureConfig};
use crate::ingest::{Datapoint, Priors, NUM_CLASSES};
use crate::mlp::{argmax, softmax, Classifier, TrainConfig, TrainingSet};
use crate::optim::{train_mlp, OptimConfig};

/// Default ℓ2 grid for nested selection.
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Gnss,
    Acc,
    Fc,
    Pf,
}

impl Pipeline {
    pub const ALL: [Pipeline; 4] = [Pipeline::Gnss, Pipeline::Acc, Pipeline::Fc, Pipeline::Pf];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Gnss => "gnss",
            Pipeline::Acc => "acc",
            Pipeline::Fc => "fc",
            Pipeline::Pf => "pf",
        }
    }

    /// Column heading used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Pipeline::Gnss => "GNSS",
            Pipeline::Acc => "Acc",
            Pipeline::Fc => "FC",
            Pipeline::Pf => "PF",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown pipeline `{s}` (expected gnss, acc, fc or pf)")))
    }
}

/// The classifier a training run is for. The discriminant feeds seed mixing,
/// so the accelerometry model inside PF is the same one the accel-only
/// pipeline trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Acc = 1,
    Gnss = 2,
    Fc = 3,
}

/// Extracted features of one datapoint. A mode is `None` when it is missing
/// or its features cannot be computed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub animal: String,
    pub label: Option<usize>,
    pub accel: Option<Vec<f64>>,
    pub gnss: Option<Vec<f64>>,
}

impl FeatureRow {
    pub fn extract(dp: &Datapoint, accel: &AccelFeatureConfig, gnss: &GnssFeatureConfig) -> Self {
        Self {
            animal: dp.animal_id.clone(),
            label: dp.label.map(|l| l.code()),
            accel: accel_feature_vector(&dp.accel, accel).ok().map(|f| f.values),
            gnss: gnss_feature_vector(dp, gnss).ok().map(|f| f.values),
        }
    }
}

pub fn extract_rows(data: &[Datapoint], accel: &AccelFeatureConfig, gnss: &GnssFeatureConfig) -> Vec<FeatureRow> {
    data.par_iter().map(|dp| FeatureRow::extract(dp, accel, gnss)).collect()
}

/// `[fa ‖ fg]`. An empty GNSS vector leaves `fa` unchanged.
pub fn concat_features(fa: &FeatureVector, fg: &FeatureVector) -> Result<FeatureVector> {
    if !fa.schema_id.starts_with("acc[") {
        return Err(Error::SchemaMismatch(format!(
            "expected accelerometry features first, got `{}`",
            fa.schema_id
        )));
    }
    if !fg.schema_id.starts_with("gnss[") {
        return Err(Error::SchemaMismatch(format!(
            "expected GNSS features second, got `{}`",
            fg.schema_id
        )));
    }
    if fg.is_empty() {
        return Ok(fa.clone());
    }
    Ok(FeatureVector {
        values: fa.values.iter().chain(&fg.values).copied().collect(),
        schema_id: format!("{}+{}", fa.schema_id, fg.schema_id),
    })
}

/// `q_c = pa_c · pg_c / p_c`, normalized.
pub fn fuse_posteriors(pa: &[f64], pg: &[f64], priors: &Priors) -> Result<Vec<f64>> {
    let c = priors.len();
    for v in [pa, pg] {
        if v.len() != c {
            return Err(Error::DimensionMismatch {
                expected: c,
                actual: v.len(),
            });
        }
    }
    let q: Vec<f64> = pa
        .iter()
        .zip(pg)
        .zip(priors.as_slice())
        .map(|((a, g), p)| a * g / p)
        .collect();
    let total: f64 = q.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Format("posteriors have no common support".into()));
    }
    Ok(q.into_iter().map(|v| v / total).collect())
}

/// Log-domain fused scores `za + zg − ln p`.
pub fn fused_scores(za: &[f64], zg: &[f64], ln_priors: &[f64]) -> Vec<f64> {
    za.iter()
        .zip(zg)
        .zip(ln_priors)
        .map(|((a, g), lp)| a + g - lp)
        .collect()
}

/// Class maximizing `za + zg − ln p`; ties go to the lowest index.
pub fn fused_argmax(za: &[f64], zg: &[f64], ln_priors: &[f64]) -> usize {
    argmax(&fused_scores(za, zg, ln_priors))
}

/// Version tag carried by serialized fusion models.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FusionFormat;

impl FusionFormat {
    pub const TAG: &'static str = "agfusion-fusion/1";
}

impl Serialize for FusionFormat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(Self::TAG)
    }
}

impl<'de> Deserialize<'de> for FusionFormat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tag = String::deserialize(d)?;
        if tag == Self::TAG {
            Ok(FusionFormat)
        } else {
            Err(serde::de::Error::custom(format!(
                "unsupported fusion model format `{tag}`, expected `{}`",
                Self::TAG
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pipeline", rename_all = "lowercase")]
pub enum ModelKind {
    Gnss {
        gnss_model: Classifier,
    },
    Acc {
        acc_model: Classifier,
    },
    Fc {
        fc_model: Classifier,
    },
    /// `gnss_model` is absent when no GNSS feature is enabled, which reduces
    /// PF to the accelerometry classifier.
    Pf {
        acc_model: Classifier,
        gnss_model: Option<Classifier>,
        ln_priors: Vec<f64>,
    },
}

/// Trained classifiers for one pipeline plus the feature recipes they expect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub format: FusionFormat,
    pub accel: AccelFeatureConfig,
    pub gnss: GnssFeatureConfig,
    pub model: ModelKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityStatus {
    pub gnss_absent: bool,
    pub accel_absent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub posterior: Vec<f64>,
    pub status: ModalityStatus,
}

fn single(model: &Classifier, features: &[f64], status: ModalityStatus) -> Result<Prediction> {
    let z = model.logits(features)?;
    Ok(Prediction {
        class: argmax(&z.0),
        posterior: softmax(&z.0),
        status,
    })
}

impl FusionModel {
    pub fn pipeline(&self) -> Pipeline {
        match self.model {
            ModelKind::Gnss { .. } => Pipeline::Gnss,
            ModelKind::Acc { .. } => Pipeline::Acc,
            ModelKind::Fc { .. } => Pipeline::Fc,
            ModelKind::Pf { .. } => Pipeline::Pf,
        }
    }

    /// Every classifier in the model, in a fixed order.
    pub fn classifiers(&self) -> Vec<&Classifier> {
        match &self.model {
            ModelKind::Gnss { gnss_model } => vec![gnss_model],
            ModelKind::Acc { acc_model } => vec![acc_model],
            ModelKind::Fc { fc_model } => vec![fc_model],
            ModelKind::Pf {
                acc_model, gnss_model, ..
            } => std::iter::once(acc_model).chain(gnss_model.as_ref()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.accel.validate()?;
        self.gnss.validate()?;
        let models = self.classifiers();
        for m in &models {
            m.validate()?;
        }
        let classes = models[0].dims().classes;
        if models.iter().any(|m| m.dims().classes != classes) {
            return Err(Error::Format("classifiers disagree on the number of classes".into()));
        }
        let expect = |m: &Classifier, f: usize| {
            if m.dims().features == f {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    expected: f,
                    actual: m.dims().features,
                })
            }
        };
        let (fa, fg) = (self.accel.feature_count(), self.gnss.enabled.len());
        match &self.model {
            ModelKind::Gnss { gnss_model } => expect(gnss_model, fg),
            ModelKind::Acc { acc_model } => expect(acc_model, fa),
            ModelKind::Fc { fc_model } => expect(fc_model, fa + fg),
            ModelKind::Pf {
                acc_model,
                gnss_model,
                ln_priors,
            } => {
                expect(acc_model, fa)?;
                if let Some(g) = gnss_model {
                    expect(g, fg)?;
                }
                if ln_priors.len() != classes || ln_priors.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidPriors(format!(
                        "need {classes} finite log priors, got {ln_priors:?}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn extract(&self, dp: &Datapoint) -> FeatureRow {
        FeatureRow::extract(dp, &self.accel, &self.gnss)
    }

    /// Classifies one feature row, falling back to the surviving mode under PF.
    pub fn predict_row(&self, row: &FeatureRow) -> Result<Prediction> {
        let acc = row.accel.as_deref();
        let gnss = row.gnss.as_deref();
        if acc.is_none() && gnss.is_none() {
            return Err(Error::NoValidSensorData);
        }
        let ok = ModalityStatus::default();
        match &self.model {
            ModelKind::Acc { acc_model } => single(acc_model, acc.ok_or(Error::MissingAccel)?, ok),
            ModelKind::Gnss { gnss_model } => single(gnss_model, gnss.ok_or(Error::MissingGnss)?, ok),
            ModelKind::Fc { fc_model } => {
                let (Some(a), Some(g)) = (acc, gnss) else {
                    return Err(Error::FcRequiresAllFeatures);
                };
                let f: Vec<f64> = a.iter().chain(g).copied().collect();
                single(fc_model, &f, ok)
            }
            ModelKind::Pf {
                acc_model,
                gnss_model,
                ln_priors,
            } => match (acc, gnss_model.as_ref().zip(gnss)) {
                (Some(a), Some((gm, g))) => {
                    let za = acc_model.logits(a)?;
                    let zg = gm.logits(g)?;
                    let scores = fused_scores(&za.0, &zg.0, ln_priors);
                    Ok(Prediction {
                        class: argmax(&scores),
                        posterior: softmax(&scores),
                        status: ok,
                    })
                }
                (Some(a), None) => single(
                    acc_model,
                    a,
                    ModalityStatus {
                        gnss_absent: gnss_model.is_some(),
                        accel_absent: false,
                    },
                ),
                (None, Some((gm, g))) => single(
                    gm,
                    g,
                    ModalityStatus {
                        gnss_absent: false,
                        accel_absent: true,
                    },
                ),
                (None, None) => Err(Error::NoValidSensorData),
            },
        }
    }
}

/// Extracts features from `dp` and classifies it, falling back to the
/// surviving mode under PF.
pub fn predict_with_fallback(model: &FusionModel, dp: &Datapoint) -> Result<Prediction> {
    model.predict_row(&model.extract(dp))
}

/// Everything needed to train one pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub accel: AccelFeatureConfig,
    pub gnss: GnssFeatureConfig,
    pub acc_model: TrainConfig,
    pub gnss_model: TrainConfig,
    pub fc_model: TrainConfig,
    pub optim: OptimConfig,
    /// Additive smoothing of the class counts behind PF priors.
    pub prior_smoothing: f64,
    /// When set, ℓ2 is chosen per classifier by an inner leave-one-animal-out
    /// loop over the training animals.
    pub lambda_grid: Option<Vec<f64>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            accel: AccelFeatureConfig::default(),
            gnss: GnssFeatureConfig::default(),
            acc_model: TrainConfig::default(),
            gnss_model: TrainConfig::default(),
            fc_model: TrainConfig::default(),
            optim: OptimConfig::default(),
            prior_smoothing: 1.0,
            lambda_grid: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.accel.validate()?;
        self.gnss.validate()?;
        self.optim.validate()?;
        for t in [&self.acc_model, &self.gnss_model, &self.fc_model] {
            t.validate()?;
        }
        if !(self.prior_smoothing >= 0.0 && self.prior_smoothing.is_finite()) {
            return Err(Error::Config("prior_smoothing must be >= 0".into()));
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() || grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return Err(Error::Config("lambda_grid needs non-negative finite values".into()));
            }
        }
        Ok(())
    }

    fn train_config(&self, role: Role) -> &TrainConfig {
        match role {
            Role::Acc => &self.acc_model,
            Role::Gnss => &self.gnss_model,
            Role::Fc => &self.fc_model,
        }
    }

    fn schema_id(&self, role: Role) -> String {
        match role {
            Role::Acc => self.accel.schema_id(),
            Role::Gnss => self.gnss.schema_id(),
            Role::Fc if self.gnss.enabled.is_empty() => self.accel.schema_id(),
            Role::Fc => format!("{}+{}", self.accel.schema_id(), self.gnss.schema_id()),
        }
    }
}

fn role_features(row: &FeatureRow, role: Role) -> Option<Vec<f64>> {
    match role {
        Role::Acc => row.accel.clone(),
        Role::Gnss => row.gnss.clone(),
        Role::Fc => {
            let (a, g) = (row.accel.as_ref()?, row.gnss.as_ref()?);
            Some(a.iter().chain(g).copied().collect())
        }
    }
}

fn training_set<'a>(rows: impl IntoIterator<Item = &'a FeatureRow>, role: Role, n_features: usize) -> Result<TrainingSet> {
    let mut set = TrainingSet::new(n_features);
    for row in rows {
        if let (Some(label), Some(f)) = (row.label, role_features(row, role)) {
            set.push(&f, label)?;
        }
    }
    if set.is_empty() {
        return Err(Error::Empty("training rows with the required modality"));
    }
    Ok(set)
}

fn feature_count(cfg: &PipelineConfig, role: Role) -> usize {
    let (fa, fg) = (cfg.accel.feature_count(), cfg.gnss.enabled.len());
    match role {
        Role::Acc => fa,
        Role::Gnss => fg,
        Role::Fc => fa + fg,
    }
}

/// Picks the grid value with the best pooled inner leave-one-animal-out MCC;
/// ties keep the earlier value.
fn select_lambda(rows: &[&FeatureRow], role: Role, grid: &[f64], tc: &TrainConfig, cfg: &PipelineConfig) -> Result<f64> {
    let animals: BTreeSet<&str> = rows.iter().map(|r| r.animal.as_str()).collect();
    if animals.len() < 2 || grid.len() == 1 {
        return Ok(grid[0]);
    }
    let nf = feature_count(cfg, role);
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &lambda in grid {
        let inner = TrainConfig {
            l2_lambda: lambda,
            ..tc.clone()
        };
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for held in &animals {
            let set = training_set(rows.iter().copied().filter(|r| r.animal != *held), role, nf)?;
            let clf = train_mlp(&set, NUM_CLASSES, "inner", &inner, &cfg.optim)?;
            for r in rows.iter().filter(|r| r.animal == *held) {
                if let (Some(y), Some(f)) = (r.label, role_features(r, role)) {
                    truth.push(y);
                    pred.push(clf.predict(&f)?);
                }
            }
        }
        if truth.is_empty() {
            continue;
        }
        let score = mcc_overall(&ConfusionMatrix::from_labels(&truth, &pred, NUM_CLASSES)?);
        if score > best.0 {
            best = (score, lambda);
        }
    }
    Ok(best.1)
}

fn fit_role(rows: &[&FeatureRow], role: Role, cfg: &PipelineConfig, seed: u64) -> Result<Classifier> {
    let nf = feature_count(cfg, role);
    if nf == 0 {
        return Err(Error::Config("a classifier needs at least one feature".into()));
    }
    let mut tc = cfg.train_config(role).clone();
    tc.seed = mix_seed(&[seed, role as u64]);
    if let Some(grid) = &cfg.lambda_grid {
        tc.l2_lambda = select_lambda(rows, role, grid, &tc, cfg)?;
    }
    let set = training_set(rows.iter().copied(), role, nf)?;
    train_mlp(&set, NUM_CLASSES, &cfg.schema_id(role), &tc, &cfg.optim)
}

/// Trains `pipeline` on the labeled rows. Rows lacking a mode a classifier
/// needs are left out of that classifier's training set. Each classifier's
/// initialization seed is derived from `seed` and its role only.
pub fn train_pipeline(rows: &[FeatureRow], pipeline: Pipeline, cfg: &PipelineConfig, seed: u64) -> Result<FusionModel> {
    cfg.validate()?;
    let labeled: Vec<&FeatureRow> = rows.iter().filter(|r| r.label.is_some()).collect();
    if labeled.is_empty() {
        return Err(Error::NoLabeledData);
    }
    let model = match pipeline {
        Pipeline::Acc => ModelKind::Acc {
            acc_model: fit_role(&labeled, Role::Acc, cfg, seed)?,
        },
        Pipeline::Gnss => ModelKind::Gnss {
            gnss_model: fit_role(&labeled, Role::Gnss, cfg, seed)?,
        },
        Pipeline::Fc => ModelKind::Fc {
            fc_model: fit_role(&labeled, Role::Fc, cfg, seed)?,
        },
        Pipeline::Pf => {
            let (acc, gnss) = rayon::join(
                || fit_role(&labeled, Role::Acc, cfg, seed),
                || {
                    (!cfg.gnss.enabled.is_empty())
                        .then(|| fit_role(&labeled, Role::Gnss, cfg, seed))
                        .transpose()
                },
            );
            let labels: Vec<usize> = labeled.iter().filter_map(|r| r.label).collect();
            let priors = Priors::from_labels(&labels, NUM_CLASSES, cfg.prior_smoothing)?;
            ModelKind::Pf {
                acc_model: acc?,
                gnss_model: gnss?,
                ln_priors: priors.ln(),
            }
        }
    };
    Ok(FusionModel {
        format: FusionFormat,
        accel: cfg.accel.clone(),
        gnss: cfg.gnss.clone(),
        model,
    })
}
