//! Leave-one-animal-out cross-validation, MCC scoring, GNSS-feature ablation
//! and operation counting.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{extract_rows, train_pipeline, FeatureRow, FusionModel, ModelKind, Pipeline, PipelineConfig};
use crate::gnss_features::{gnss_feature_vector, GnssFeatureSet};
use crate::ingest::{BehaviorClass, Datapoint, NUM_CLASSES};
use crate::mlp::MlpDims;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_labels(truth: &[usize], pred: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::LengthMismatch(truth.len(), pred.len()));
        }
        if truth.is_empty() {
            return Err(Error::Empty("label sequence"));
        }
        let mut cm = Self::new(classes);
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= classes || p >= classes {
                return Err(Error::Config(format!("label out of range for C = {classes}")));
            }
            cm.add(t, p);
        }
        Ok(cm)
    }

    /// Builds a matrix from explicit rows of counts.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let classes = rows.len();
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Format("confusion matrix must be square".into()));
        }
        Ok(Self {
            classes,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.classes + pred] += 1;
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        debug_assert_eq!(self.classes, other.classes);
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.classes.max(1)).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.classes)
            .map(|p| (0..self.classes).map(|t| self.get(t, p)).sum())
            .collect()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(|r| r.to_vec()).collect()
    }
}

pub fn confusion_matrix(truth: &[usize], pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    ConfusionMatrix::from_labels(truth, pred, classes)
}

/// Multiclass MCC; a zero denominator yields 0.
pub fn mcc_overall(cm: &ConfusionMatrix) -> f64 {
    let s = cm.total() as f64;
    let c = cm.trace() as f64;
    let t = cm.row_sums();
    let p = cm.col_sums();
    let pt: f64 = p.iter().zip(&t).map(|(a, b)| *a as f64 * *b as f64).sum();
    let pp: f64 = p.iter().map(|a| (*a as f64).powi(2)).sum();
    let tt: f64 = t.iter().map(|a| (*a as f64).powi(2)).sum();
    let denom = ((s * s - pp) * (s * s - tt)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (c * s - pt) / denom
    }
}

/// Binary MCC, `None` when the denominator vanishes.
pub fn binary_mcc(tp: u64, tn: u64, fp: u64, fn_: u64) -> Option<f64> {
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    (denom > 0.0).then(|| (tp * tn - fp * fn_) / denom)
}

/// One-vs-rest MCC for `class`, `None` when undefined.
pub fn mcc_per_class(cm: &ConfusionMatrix, class: usize) -> Option<f64> {
    let tp = cm.get(class, class);
    let fn_ = cm.row_sums()[class] - tp;
    let fp = cm.col_sums()[class] - tp;
    let tn = cm.total() - tp - fn_ - fp;
    binary_mcc(tp, tn, fp, fn_)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of the parts, used to derive independent seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x243F_6A88_85A3_08D3, |h, &p| splitmix64(h ^ splitmix64(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }

    /// `mean±std` to four decimals.
    pub fn render(&self) -> String {
        format!("{:.4}±{:.4}", self.mean, self.std)
    }
}

/// Per-repeat MCC values and their summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MccReport {
    pub repeats: usize,
    pub overall: Vec<f64>,
    /// `per_class[r][c]`; `None` marks an undefined value.
    pub per_class: Vec<Vec<Option<f64>>>,
}

impl MccReport {
    pub fn from_matrices(matrices: &[ConfusionMatrix]) -> Self {
        Self {
            repeats: matrices.len(),
            overall: matrices.iter().map(mcc_overall).collect(),
            per_class: matrices
                .iter()
                .map(|cm| (0..cm.classes()).map(|c| mcc_per_class(cm, c)).collect())
                .collect(),
        }
    }

    pub fn overall_summary(&self) -> Option<Summary> {
        Summary::of(&self.overall)
    }

    /// Summary over the repeats where the class MCC is defined.
    pub fn class_summary(&self, class: usize) -> Option<Summary> {
        let values: Vec<f64> = self.per_class.iter().filter_map(|r| r[class]).collect();
        Summary::of(&values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub pipeline: Pipeline,
    #[serde(flatten)]
    pub model: PipelineConfig,
    pub repeats: usize,
    pub base_seed: u64,
    /// Worker threads; `None` uses every processor.
    pub jobs: Option<usize>,
    /// Evaluate only datapoints where every mode yields all features, so all
    /// pipelines and feature subsets score the same datapoints.
    pub complete_only: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            pipeline: Pipeline::Pf,
            model: PipelineConfig::default(),
            repeats: 1,
            base_seed: 0,
            jobs: None,
            complete_only: true,
        }
    }
}

/// What one (repeat, fold) unit trained on and produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldArtifact {
    pub repeat: usize,
    pub fold: usize,
    pub held_out: String,
    pub train_animals: Vec<String>,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub seed: u64,
    /// Optimizer status of each classifier in the fold's model.
    pub training_status: Vec<String>,
    pub single_class_fold: bool,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub pipeline: Pipeline,
    pub gnss_features: GnssFeatureSet,
    pub report: MccReport,
    /// One pooled matrix per repeat.
    pub confusion: Vec<ConfusionMatrix>,
    pub folds: Vec<FoldArtifact>,
    pub evaluated: usize,
    pub skipped: usize,
}

struct FoldOutcome {
    truth: Vec<usize>,
    pred: Vec<usize>,
    artifact: FoldArtifact,
}

fn run_fold(
    rows: &[&FeatureRow],
    animals: &[&str],
    repeat: usize,
    fold: usize,
    cfg: &CvConfig,
) -> Result<FoldOutcome> {
    let held = animals[fold];
    let seed = mix_seed(&[cfg.base_seed, repeat as u64, fold as u64]);
    let train: Vec<FeatureRow> = rows.iter().filter(|r| r.animal != held).map(|r| (*r).clone()).collect();
    let model: FusionModel = train_pipeline(&train, cfg.pipeline, &cfg.model, seed)?;

    let mut truth = Vec::new();
    let mut pred = Vec::new();
    let mut fallbacks = 0;
    for row in rows.iter().filter(|r| r.animal == held) {
        let p = model.predict_row(row)?;
        fallbacks += usize::from(p.status.gnss_absent || p.status.accel_absent);
        truth.push(row.label.expect("rows are labeled"));
        pred.push(p.class);
    }
    let metas: Vec<_> = model.classifiers().into_iter().filter_map(|c| c.training.clone()).collect();
    let train_animals: BTreeSet<String> = train.iter().map(|r| r.animal.clone()).collect();
    Ok(FoldOutcome {
        artifact: FoldArtifact {
            repeat,
            fold,
            held_out: held.to_string(),
            train_animals: train_animals.into_iter().collect(),
            train_rows: train.len(),
            validation_rows: truth.len(),
            seed,
            training_status: metas.iter().map(|m| m.status.clone()).collect(),
            single_class_fold: metas.iter().any(|m| m.single_class_fold),
            fallbacks,
        },
        truth,
        pred,
    })
}

fn worker_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Repeated leave-one-animal-out cross-validation. Folds follow the sorted
/// animal ids; each repeat pools its folds into one confusion matrix.
/// Results do not depend on the number of workers.
pub fn loao_cv(data: &[Datapoint], cfg: &CvConfig) -> Result<CvResult> {
    cfg.model.validate()?;
    if cfg.repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    let all_rows = extract_rows(data, &cfg.model.accel, &cfg.model.gnss);
    let full_gnss = cfg.model.gnss.with_enabled(GnssFeatureSet::ALL);
    let keep: Vec<bool> = data
        .par_iter()
        .zip(&all_rows)
        .map(|(dp, row)| {
            row.label.is_some()
                && (!cfg.complete_only || (row.accel.is_some() && gnss_feature_vector(dp, &full_gnss).is_ok()))
        })
        .collect();
    let rows: Vec<&FeatureRow> = all_rows.iter().zip(&keep).filter(|(_, k)| **k).map(|(r, _)| r).collect();
    let animals: Vec<&str> = rows
        .iter()
        .map(|r| r.animal.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if animals.len() < 2 {
        return Err(Error::TooFewAnimals(animals.len()));
    }

    let units: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|r| (0..animals.len()).map(move |f| (r, f)))
        .collect();
    let outcomes: Vec<FoldOutcome> = worker_pool(cfg.jobs)?.install(|| {
        units
            .par_iter()
            .map(|&(r, f)| run_fold(&rows, &animals, r, f, cfg))
            .collect::<Result<_>>()
    })?;

    let mut confusion = vec![ConfusionMatrix::new(NUM_CLASSES); cfg.repeats];
    let mut folds = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let cm = &mut confusion[o.artifact.repeat];
        o.truth.iter().zip(&o.pred).for_each(|(&t, &p)| cm.add(t, p));
        folds.push(o.artifact);
    }
    Ok(CvResult {
        pipeline: cfg.pipeline,
        gnss_features: cfg.model.gnss.enabled,
        report: MccReport::from_matrices(&confusion),
        confusion,
        folds,
        evaluated: rows.len(),
        skipped: data.len() - rows.len(),
    })
}

/// One cross-validation run per GNSS feature subset. Under PF the subset
/// restricts the GNSS classifier's inputs (none leaves the accelerometry
/// classifier alone); under FC it shortens the concatenation.
pub fn ablate_gnss(data: &[Datapoint], cfg: &CvConfig, subsets: &[GnssFeatureSet]) -> Result<Vec<CvResult>> {
    subsets
        .iter()
        .map(|&subset| {
            let mut c = cfg.clone();
            c.model.gnss = cfg.model.gnss.with_enabled(subset);
            loao_cv(data, &c)
        })
        .collect()
}

/// Parameter and arithmetic-operation counts for on-device inference.
///
/// Each MLP layer costs one multiplication and one addition per weight: the
/// bias add takes the place of the first accumulate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCountReport {
    /// Weights plus stored log priors.
    pub parameters: usize,
    pub parameters_with_biases: usize,
    pub multiplications: usize,
    pub additions_subtractions: usize,
    pub relu_operations: usize,
    pub sum_of_operations: usize,
}

impl OpCountReport {
    fn add(self, o: OpCountReport) -> Self {
        Self {
            parameters: self.parameters + o.parameters,
            parameters_with_biases: self.parameters_with_biases + o.parameters_with_biases,
            multiplications: self.multiplications + o.multiplications,
            additions_subtractions: self.additions_subtractions + o.additions_subtractions,
            relu_operations: self.relu_operations + o.relu_operations,
            sum_of_operations: self.sum_of_operations + o.sum_of_operations,
        }
    }

    /// The extra cost of log-domain fusion: C stored log priors, C logit
    /// additions and C prior subtractions.
    fn fusion(classes: usize) -> Self {
        Self {
            parameters: classes,
            parameters_with_biases: classes,
            additions_subtractions: 2 * classes,
            sum_of_operations: 2 * classes,
            ..Default::default()
        }
    }
}

pub fn mlp_ops(dims: MlpDims) -> OpCountReport {
    let weights = dims.weight_count();
    OpCountReport {
        parameters: weights,
        parameters_with_biases: dims.param_count(),
        multiplications: weights,
        additions_subtractions: weights,
        relu_operations: dims.hidden,
        sum_of_operations: 2 * weights + dims.hidden,
    }
}

fn combine(dims: &[MlpDims], fused: bool) -> OpCountReport {
    let base = dims.iter().map(|d| mlp_ops(*d)).fold(OpCountReport::default(), OpCountReport::add);
    if fused {
        base.add(OpCountReport::fusion(dims[0].classes))
    } else {
        base
    }
}

pub fn count_ops(model: &FusionModel) -> OpCountReport {
    let dims: Vec<MlpDims> = model.classifiers().iter().map(|c| c.dims()).collect();
    let fused = matches!(model.model, ModelKind::Pf { gnss_model: Some(_), .. });
    combine(&dims, fused)
}

/// Feature layouts of the two reference deployments, with hidden sizes
/// pinned to the deployed networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetProfile {
    /// Collar-mounted sensor: 6 accelerometry features.
    Arm20c,
    /// Ear-tag sensor: 9 accelerometry features.
    Arm20e,
}

impl std::str::FromStr for DatasetProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "arm20c" => Ok(Self::Arm20c),
            "arm20e" => Ok(Self::Arm20e),
            _ => Err(Error::Config(format!("unknown dataset profile `{s}` (expected arm20c or arm20e)"))),
        }
    }
}

impl DatasetProfile {
    pub fn accel_features(self) -> usize {
        match self {
            Self::Arm20c => 6,
            Self::Arm20e => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Arm20c => "arm20c",
            Self::Arm20e => "arm20e",
        }
    }

    /// Hidden sizes of the deployed networks, keyed by input width.
    pub fn pinned_hidden(features: usize) -> Option<usize> {
        match features {
            3 => Some(4),
            6 => Some(5),
            9 => Some(7),
            12 => Some(9),
            _ => None,
        }
    }

    pub fn dims(self, pipeline: Pipeline) -> Vec<MlpDims> {
        let net = |f: usize| MlpDims::new(f, Self::pinned_hidden(f).expect("pinned width"), NUM_CLASSES);
        let (fa, fg) = (self.accel_features(), 3);
        match pipeline {
            Pipeline::Gnss => vec![net(fg)],
            Pipeline::Acc => vec![net(fa)],
            Pipeline::Fc => vec![net(fa + fg)],
            Pipeline::Pf => vec![net(fa), net(fg)],
        }
    }
}

pub fn count_ops_profile(pipeline: Pipeline, profile: DatasetProfile) -> OpCountReport {
    combine(&profile.dims(pipeline), pipeline == Pipeline::Pf)
}

/// Every column of the deployed-complexity table: the GNSS classifier, then
/// Acc, FC and PF for each profile.
pub fn complexity_table() -> Vec<(String, OpCountReport)> {
    let mut cols = vec![("GNSS".to_string(), count_ops_profile(Pipeline::Gnss, DatasetProfile::Arm20c))];
    for profile in [DatasetProfile::Arm20c, DatasetProfile::Arm20e] {
        for p in [Pipeline::Acc, Pipeline::Fc, Pipeline::Pf] {
            cols.push((format!("{}/{}", profile.name(), p.label()), count_ops_profile(p, profile)));
        }
    }
    cols
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

const UNDEFINED: &str = "−";

fn cell(s: Option<Summary>) -> String {
    s.map_or_else(|| UNDEFINED.to_string(), |s| s.render())
}

/// Behaviors plus `overall` as rows, one column per named report.
pub fn mcc_table_csv(columns: &[(String, &MccReport)]) -> Result<String> {
    let mut rows = vec![std::iter::once("behavior".to_string())
        .chain(columns.iter().map(|(n, _)| n.clone()))
        .collect()];
    for class in BehaviorClass::ALL {
        let mut r = vec![class.name().to_string()];
        r.extend(columns.iter().map(|(_, rep)| cell(rep.class_summary(class.code()))));
        rows.push(r);
    }
    let mut r = vec!["overall".to_string()];
    r.extend(columns.iter().map(|(_, rep)| cell(rep.overall_summary())));
    rows.push(r);
    csv_string(rows)
}

/// Metrics as rows, one column per named model.
pub fn ops_table_csv(columns: &[(String, OpCountReport)]) -> Result<String> {
    let metric_rows: [(&str, fn(&OpCountReport) -> usize); 5] = [
        ("parameters", |o| o.parameters),
        ("multiplications", |o| o.multiplications),
        ("additions_subtractions", |o| o.additions_subtractions),
        ("relu_operations", |o| o.relu_operations),
        ("sum_of_operations", |o| o.sum_of_operations),
    ];
    let mut rows = vec![std::iter::once("metric".to_string())
        .chain(columns.iter().map(|(n, _)| n.clone()))
        .collect()];
    for (name, get) in metric_rows {
        let mut r = vec![name.to_string()];
        r.extend(columns.iter().map(|(_, o)| get(o).to_string()));
        rows.push(r);
    }
    csv_string(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confusion_examples() {
        let cm = confusion_matrix(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 1], vec![0, 1]]);
        assert!(confusion_matrix(&[], &[], 2).is_err());
        assert!(matches!(confusion_matrix(&[0], &[0, 1], 2), Err(Error::LengthMismatch(1, 2))));
        let perfect = confusion_matrix(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(perfect.trace(), perfect.total());
    }

    #[test]
    fn mcc_examples() {
        let perfect = confusion_matrix(&[0, 1, 2, 3, 4, 0], &[0, 1, 2, 3, 4, 0], 5).unwrap();
        assert_eq!(mcc_overall(&perfect), 1.0);
        for c in 0..5 {
            assert_eq!(mcc_per_class(&perfect, c), Some(1.0));
        }
        let one_class = confusion_matrix(&[0, 1, 2, 1], &[1, 1, 1, 1], 5).unwrap();
        assert_eq!(mcc_overall(&one_class), 0.0);
        assert_eq!(mcc_per_class(&one_class, 3), None);

        let b = ConfusionMatrix::from_rows(&[vec![2, 1], vec![1, 2]]).unwrap();
        assert!((mcc_overall(&b) - 1.0 / 3.0).abs() < 1e-15);
        assert!((mcc_per_class(&b, 0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn summary_uses_population_std() {
        let s = Summary::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.n), (2.0, 1.0, 2));
        assert_eq!(s.render(), "2.0000±1.0000");
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn undefined_class_values_are_excluded() {
        let report = MccReport {
            repeats: 3,
            overall: vec![0.5, 0.7, 0.6],
            per_class: vec![vec![Some(0.2)], vec![None], vec![Some(0.4)]],
        };
        let s = report.class_summary(0).unwrap();
        assert_eq!(s.n, 2);
        assert!((s.mean - 0.3).abs() < 1e-15);
    }

    #[test]
    fn seeds_depend_on_every_part() {
        let base = mix_seed(&[1, 2, 3]);
        assert_eq!(base, mix_seed(&[1, 2, 3]));
        assert_ne!(base, mix_seed(&[1, 3, 2]));
        assert_ne!(base, mix_seed(&[2, 2, 3]));
        assert_ne!(mix_seed(&[0, 0]), mix_seed(&[0]));
    }

    #[test]
    fn op_counts_match_deployed_networks() {
        let gnss = count_ops_profile(Pipeline::Gnss, DatasetProfile::Arm20c);
        assert_eq!(
            (gnss.parameters, gnss.multiplications, gnss.additions_subtractions, gnss.relu_operations, gnss.sum_of_operations),
            (32, 32, 32, 4, 68)
        );
        let pf = count_ops_profile(Pipeline::Pf, DatasetProfile::Arm20c);
        assert_eq!(
            (pf.parameters, pf.multiplications, pf.additions_subtractions, pf.relu_operations, pf.sum_of_operations),
            (92, 87, 97, 9, 193)
        );
        let fc = count_ops_profile(Pipeline::Fc, DatasetProfile::Arm20e);
        assert_eq!((fc.parameters, fc.sum_of_operations), (153, 315));
        assert_eq!(gnss.parameters_with_biases, 32 + 4 + 5);
    }

    #[test]
    fn tables_render() {
        let report = MccReport::from_matrices(&[confusion_matrix(&[0, 1, 2], &[0, 1, 1], 5).unwrap()]);
        let csv = mcc_table_csv(&[("PF".into(), &report)]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "behavior,PF");
        assert_eq!(lines[1], "grazing,1.0000±0.0000");
        assert_eq!(lines[4], "drinking,−");
        assert!(lines[6].starts_with("overall,"));

        let ops = ops_table_csv(&[("GNSS".into(), count_ops_profile(Pipeline::Gnss, DatasetProfile::Arm20c))]).unwrap();
        assert_eq!(ops.lines().nth(1), Some("parameters,32"));
    }

    fn binary_oracle(tp: f64, tn: f64, fp: f64, fn_: f64) -> f64 {
        let d = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        if d == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fn_) / d
        }
    }

    proptest! {
        #[test]
        fn two_class_overall_is_binary_mcc(tp in 0u64..500, tn in 0u64..500, fp in 0u64..500, fn_ in 0u64..500) {
            prop_assume!(tp + tn + fp + fn_ > 0);
            let cm = ConfusionMatrix::from_rows(&[vec![tp, fn_], vec![fp, tn]]).unwrap();
            let want = binary_oracle(tp as f64, tn as f64, fp as f64, fn_ as f64);
            prop_assert!((mcc_overall(&cm) - want).abs() < 1e-12);
        }

        #[test]
        fn relabeling_preserves_mcc(
            pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200),
            perm in Just([0usize, 1, 2, 3, 4]).prop_shuffle(),
        ) {
            let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let a = mcc_overall(&confusion_matrix(&truth, &pred, 5).unwrap());
            let pt: Vec<usize> = truth.iter().map(|&t| perm[t]).collect();
            let pp: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
            let b = mcc_overall(&confusion_matrix(&pt, &pp, 5).unwrap());
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
        }
    }
}
