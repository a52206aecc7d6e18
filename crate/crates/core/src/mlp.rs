//! Single-hidden-layer ReLU perceptron: `z = W2·max(0, W1·f + b1) + b2`.
//!
//! Parameters are stored row-major and flatten to one vector in the order
//! `[W1, b1, W2, b2]`, which is what the optimizer sees.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// `(F, L, C)`: input features, hidden units, classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpDims {
    pub features: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl MlpDims {
    pub fn new(features: usize, hidden: usize, classes: usize) -> Self {
        Self {
            features,
            hidden,
            classes,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.hidden * self.features + self.classes * self.hidden
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.hidden + self.classes
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.features;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        [w1, b1, w2, b2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HiddenSizePolicy {
    /// `⌈(F + C) / 2⌉`
    #[default]
    CeilAverage,
    /// `⌊(F + C) / 2⌋`
    FloorAverage,
    Explicit(usize),
}

impl fmt::Display for HiddenSizePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HiddenSizePolicy::CeilAverage => f.write_str("ceil-average"),
            HiddenSizePolicy::FloorAverage => f.write_str("floor-average"),
            HiddenSizePolicy::Explicit(l) => write!(f, "{l}"),
        }
    }
}

impl std::str::FromStr for HiddenSizePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ceil-average" => Ok(Self::CeilAverage),
            "floor-average" => Ok(Self::FloorAverage),
            other => other
                .parse::<usize>()
                .map(Self::Explicit)
                .map_err(|_| Error::Config(format!("unknown hidden size policy `{other}`"))),
        }
    }
}

// Serialized as `"ceil-average"`, `"floor-average"` or a bare integer.
impl Serialize for HiddenSizePolicy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            HiddenSizePolicy::Explicit(l) => s.serialize_u64(*l as u64),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for HiddenSizePolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Size(u64),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Size(l) => Ok(Self::Explicit(l as usize)),
            Repr::Name(n) => n.parse().map_err(serde::de::Error::custom),
        }
    }
}

pub fn hidden_size(features: usize, classes: usize, policy: HiddenSizePolicy) -> Result<usize> {
    if features < 1 || classes < 2 {
        return Err(Error::Config(format!(
            "need F >= 1 and C >= 2, got F = {features}, C = {classes}"
        )));
    }
    match policy {
        HiddenSizePolicy::CeilAverage => Ok((features + classes).div_ceil(2)),
        HiddenSizePolicy::FloorAverage => Ok((features + classes) / 2),
        HiddenSizePolicy::Explicit(0) => Err(Error::Config("hidden size must be >= 1".into())),
        HiddenSizePolicy::Explicit(l) => Ok(l),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub dims: MlpDims,
    /// `L × F`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `C × L`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(dims: MlpDims) -> Self {
        Self {
            dims,
            w1: vec![0.0; dims.hidden * dims.features],
            b1: vec![0.0; dims.hidden],
            w2: vec![0.0; dims.classes * dims.hidden],
            b2: vec![0.0; dims.classes],
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dims.param_count());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn from_flat(dims: MlpDims, theta: &[f64]) -> Result<Self> {
        if theta.len() != dims.param_count() {
            return Err(Error::DimensionMismatch {
                expected: dims.param_count(),
                actual: theta.len(),
            });
        }
        let [_, b1, w2, b2] = dims.offsets();
        Ok(Self {
            dims,
            w1: theta[..b1].to_vec(),
            b1: theta[b1..w2].to_vec(),
            w2: theta[w2..b2].to_vec(),
            b2: theta[b2..].to_vec(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        let shapes = [
            (self.w1.len(), d.hidden * d.features, "W1"),
            (self.b1.len(), d.hidden, "b1"),
            (self.w2.len(), d.classes * d.hidden, "W2"),
            (self.b2.len(), d.classes, "b2"),
        ];
        for (actual, expected, name) in shapes {
            if actual != expected {
                return Err(Error::Format(format!(
                    "{name} has {actual} entries, dims imply {expected}"
                )));
            }
        }
        let finite = [&self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::Format("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Uniform Glorot initialization of the weights, zero biases.
pub fn init_params(dims: MlpDims, seed: u64) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = MlpParams::zeros(dims);
    let a1 = (6.0 / (dims.features + dims.hidden) as f64).sqrt();
    for w in &mut p.w1 {
        *w = rng.random_range(-a1..=a1);
    }
    let a2 = (6.0 / (dims.hidden + dims.classes) as f64).sqrt();
    for w in &mut p.w2 {
        *w = rng.random_range(-a2..=a2);
    }
    p
}

/// Raw MLP outputs, one per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(pub Vec<f64>);

impl Logits {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn forward_into(p: &MlpParams, f: &[f64], hidden: &mut [f64], z: &mut [f64]) {
    let MlpDims {
        features: nf,
        hidden: nh,
        ..
    } = p.dims;
    for (j, h) in hidden.iter_mut().enumerate() {
        let row = &p.w1[j * nf..(j + 1) * nf];
        let a = p.b1[j] + row.iter().zip(f).map(|(w, x)| w * x).sum::<f64>();
        *h = a.max(0.0);
    }
    for (c, zc) in z.iter_mut().enumerate() {
        let row = &p.w2[c * nh..(c + 1) * nh];
        *zc = p.b2[c] + row.iter().zip(hidden.iter()).map(|(w, h)| w * h).sum::<f64>();
    }
}

pub fn forward_logits(p: &MlpParams, f: &[f64]) -> Result<Logits> {
    if f.len() != p.dims.features {
        return Err(Error::DimensionMismatch {
            expected: p.dims.features,
            actual: f.len(),
        });
    }
    let mut hidden = vec![0.0; p.dims.hidden];
    let mut z = vec![0.0; p.dims.classes];
    forward_into(p, f, &mut hidden, &mut z);
    Ok(Logits(z))
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Class decision straight from the logits.
pub fn predict(p: &MlpParams, f: &[f64]) -> Result<usize> {
    forward_logits(p, f).map(|z| argmax(&z.0))
}

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    n_features: usize,
    x: Vec<f64>,
    y: Vec<usize>,
}

impl TrainingSet {
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn from_rows<'a>(rows: impl IntoIterator<Item = (&'a [f64], usize)>, n_features: usize) -> Result<Self> {
        let mut set = Self::new(n_features);
        for (row, y) in rows {
            set.push(row, y)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, row: &[f64], label: usize) -> Result<()> {
        if row.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: row.len(),
            });
        }
        self.x.extend_from_slice(row);
        self.y.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn labels(&self) -> &[usize] {
        &self.y
    }

    pub(crate) fn map_rows(&self, mut f: impl FnMut(&mut [f64])) -> Self {
        let mut out = self.clone();
        if self.n_features > 0 {
            out.x.chunks_mut(self.n_features).for_each(&mut f);
        }
        out
    }
}

/// Regularized mean cross-entropy and its gradient with respect to the flat
/// parameter vector. Returns the loss; `grad` is overwritten.
///
/// `loss = mean(-ln softmax(z)[y]) + λ / (2n) · (‖W1‖² + ‖W2‖²)`
pub fn loss_grad_flat(dims: MlpDims, theta: &[f64], set: &TrainingSet, l2_lambda: f64, grad: &mut [f64]) -> f64 {
    let MlpDims {
        features: nf,
        hidden: nh,
        classes: nc,
    } = dims;
    let [o_w1, o_b1, o_w2, o_b2] = dims.offsets();
    let w1 = &theta[o_w1..o_b1];
    let b1 = &theta[o_b1..o_w2];
    let w2 = &theta[o_w2..o_b2];
    let b2 = &theta[o_b2..];
    grad.iter_mut().for_each(|g| *g = 0.0);

    let n = set.len();
    let inv_n = 1.0 / n as f64;
    let mut pre = vec![0.0; nh];
    let mut hid = vec![0.0; nh];
    let mut z = vec![0.0; nc];
    let mut dh = vec![0.0; nh];
    let mut loss = 0.0;

    for i in 0..n {
        let x = set.row(i);
        let y = set.y[i];
        for j in 0..nh {
            let row = &w1[j * nf..(j + 1) * nf];
            let a = b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            pre[j] = a;
            hid[j] = a.max(0.0);
        }
        let mut zmax = f64::NEG_INFINITY;
        for c in 0..nc {
            let row = &w2[c * nh..(c + 1) * nh];
            z[c] = b2[c] + row.iter().zip(&hid).map(|(w, h)| w * h).sum::<f64>();
            zmax = zmax.max(z[c]);
        }
        let mut sum = 0.0;
        for zc in z.iter_mut() {
            *zc = (*zc - zmax).exp();
            sum += *zc;
        }
        // z now holds unnormalized probabilities; recover the log-loss from them.
        loss += sum.ln() - (z[y].ln());

        dh.iter_mut().for_each(|v| *v = 0.0);
        let (gw1, rest) = grad.split_at_mut(o_b1);
        let (gb1, rest) = rest.split_at_mut(o_w2 - o_b1);
        let (gw2, gb2) = rest.split_at_mut(o_b2 - o_w2);
        for c in 0..nc {
            let mut dz = z[c] / sum;
            if c == y {
                dz -= 1.0;
            }
            dz *= inv_n;
            gb2[c] += dz;
            let wrow = &w2[c * nh..(c + 1) * nh];
            let grow = &mut gw2[c * nh..(c + 1) * nh];
            for j in 0..nh {
                grow[j] += dz * hid[j];
                dh[j] += dz * wrow[j];
            }
        }
        for j in 0..nh {
            if pre[j] > 0.0 {
                let da = dh[j];
                gb1[j] += da;
                let grow = &mut gw1[j * nf..(j + 1) * nf];
                for (g, v) in grow.iter_mut().zip(x) {
                    *g += da * v;
                }
            }
        }
    }
    loss *= inv_n;

    if l2_lambda > 0.0 {
        let scale = l2_lambda * inv_n;
        let mut sq = 0.0;
        for k in (o_w1..o_b1).chain(o_w2..o_b2) {
            sq += theta[k] * theta[k];
            grad[k] += scale * theta[k];
        }
        loss += 0.5 * scale * sq;
    }
    loss
}

/// Structured form of [`loss_grad_flat`].
pub fn loss_and_grad(p: &MlpParams, set: &TrainingSet, l2_lambda: f64) -> Result<(f64, MlpParams)> {
    if set.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    if set.n_features() != p.dims.features {
        return Err(Error::DimensionMismatch {
            expected: p.dims.features,
            actual: set.n_features(),
        });
    }
    if let Some(&y) = set.labels().iter().find(|&&y| y >= p.dims.classes) {
        return Err(Error::Config(format!("label {y} out of range for C = {}", p.dims.classes)));
    }
    let theta = p.to_flat();
    let mut grad = vec![0.0; theta.len()];
    let loss = loss_grad_flat(p.dims, &theta, set, l2_lambda, &mut grad);
    Ok((loss, MlpParams::from_flat(p.dims, &grad)?))
}

/// Per-feature z-score transform fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(set: &TrainingSet) -> Self {
        let nf = set.n_features();
        let n = set.len().max(1) as f64;
        let mut mean = vec![0.0; nf];
        for i in 0..set.len() {
            for (m, v) in mean.iter_mut().zip(set.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; nf];
        for i in 0..set.len() {
            for ((s, v), m) in var.iter_mut().zip(set.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }
}

/// Version tag carried by serialized classifiers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MlpFormat;

impl MlpFormat {
    pub const TAG: &'static str = "agfusion-mlp/1";
}

impl Serialize for MlpFormat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(Self::TAG)
    }
}

impl<'de> Deserialize<'de> for MlpFormat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tag = String::deserialize(d)?;
        if tag == Self::TAG {
            Ok(MlpFormat)
        } else {
            Err(serde::de::Error::custom(format!(
                "unsupported model format `{tag}`, expected `{}`",
                Self::TAG
            )))
        }
    }
}

/// Summary of the optimization run that produced a classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub status: String,
    pub iterations: usize,
    pub final_loss: f64,
    pub samples: usize,
    #[serde(default)]
    pub single_class_fold: bool,
}

/// A trained MLP together with its input recipe and optional input scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub format: MlpFormat,
    pub schema_id: String,
    pub policy: HiddenSizePolicy,
    pub scaler: Option<Standardizer>,
    #[serde(flatten)]
    pub params: MlpParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
}

impl Classifier {
    pub fn dims(&self) -> MlpDims {
        self.params.dims
    }

    pub fn logits(&self, features: &[f64]) -> Result<Logits> {
        match &self.scaler {
            None => forward_logits(&self.params, features),
            Some(s) => {
                if features.len() != self.params.dims.features {
                    return Err(Error::DimensionMismatch {
                        expected: self.params.dims.features,
                        actual: features.len(),
                    });
                }
                let mut row = features.to_vec();
                s.apply(&mut row);
                forward_logits(&self.params, &row)
            }
        }
    }

    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        self.logits(features).map(|z| argmax(&z.0))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if let Some(s) = &self.scaler {
            if s.mean.len() != self.params.dims.features || s.scale.len() != self.params.dims.features {
                return Err(Error::Format("scaler length does not match F".into()));
            }
        }
        Ok(())
    }
}

/// Training hyperparameters for one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default)]
    pub l2_lambda: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, rename = "hidden")]
    pub hidden_size_policy: HiddenSizePolicy,
    #[serde(default)]
    pub standardize: bool,
}

fn default_max_iter() -> usize {
    10_000
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 1e-4,
            max_iter: default_max_iter(),
            seed: 0,
            hidden_size_policy: HiddenSizePolicy::CeilAverage,
            standardize: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        if !(self.l2_lambda.is_finite() && self.l2_lambda >= 0.0) {
            return Err(Error::Config(format!("l2_lambda must be >= 0, got {}", self.l2_lambda)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Central differences of the loss along every coordinate.
    fn numeric_grad(dims: MlpDims, theta: &[f64], set: &TrainingSet, l2: f64, h: f64) -> Vec<f64> {
        let mut scratch = vec![0.0; theta.len()];
        let mut t = theta.to_vec();
        (0..theta.len())
            .map(|k| {
                let orig = t[k];
                t[k] = orig + h;
                let up = loss_grad_flat(dims, &t, set, l2, &mut scratch);
                t[k] = orig - h;
                let down = loss_grad_flat(dims, &t, set, l2, &mut scratch);
                t[k] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn random_set(rng: &mut ChaCha8Rng, nf: usize, nc: usize, n: usize) -> TrainingSet {
        let mut set = TrainingSet::new(nf);
        for _ in 0..n {
            let row: Vec<f64> = (0..nf).map(|_| rng.random_range(-2.0..2.0)).collect();
            set.push(&row, rng.random_range(0..nc)).unwrap();
        }
        set
    }

    #[test]
    fn hidden_size_examples() {
        assert_eq!(hidden_size(3, 5, HiddenSizePolicy::CeilAverage).unwrap(), 4);
        assert_eq!(hidden_size(9, 5, HiddenSizePolicy::CeilAverage).unwrap(), 7);
        assert_eq!(hidden_size(6, 5, HiddenSizePolicy::FloorAverage).unwrap(), 5);
        assert_eq!(hidden_size(6, 5, HiddenSizePolicy::CeilAverage).unwrap(), 6);
        assert_eq!(hidden_size(6, 5, HiddenSizePolicy::Explicit(11)).unwrap(), 11);
        assert!(hidden_size(6, 5, HiddenSizePolicy::Explicit(0)).is_err());
        assert!(hidden_size(0, 5, HiddenSizePolicy::CeilAverage).is_err());
    }

    #[test]
    fn policy_serde() {
        for (p, s) in [
            (HiddenSizePolicy::CeilAverage, "\"ceil-average\""),
            (HiddenSizePolicy::FloorAverage, "\"floor-average\""),
            (HiddenSizePolicy::Explicit(5), "5"),
        ] {
            assert_eq!(serde_json::to_string(&p).unwrap(), s);
            assert_eq!(serde_json::from_str::<HiddenSizePolicy>(s).unwrap(), p);
        }
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let dims = MlpDims::new(3, 4, 5);
        let a = init_params(dims, 7);
        assert_eq!(a, init_params(dims, 7));
        assert_ne!(a, init_params(dims, 8));
        assert_eq!((a.w1.len(), a.w2.len(), a.b1.len(), a.b2.len()), (12, 20, 4, 5));
        assert!(a.b1.iter().chain(&a.b2).all(|&b| b == 0.0));
        let bound = (6.0f64 / 7.0).sqrt();
        assert!(a.w1.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn forward_examples() {
        let zero = MlpParams::zeros(MlpDims::new(4, 3, 5));
        assert_eq!(forward_logits(&zero, &[1.0, -2.0, 3.0, 4.0]).unwrap().0, vec![0.0; 5]);

        let p = MlpParams {
            dims: MlpDims::new(2, 2, 1),
            w1: vec![1.0, 0.0, 0.0, 1.0],
            b1: vec![0.0, 0.0],
            w2: vec![1.0, 1.0],
            b2: vec![0.0],
        };
        assert_eq!(forward_logits(&p, &[2.0, 3.0]).unwrap().0, vec![5.0]);
        // pre-activation (-1, 2) -> hidden (0, 2)
        assert_eq!(forward_logits(&p, &[-1.0, 2.0]).unwrap().0, vec![2.0]);

        let err = forward_logits(&p, &[1.0]).unwrap_err();
        assert_eq!(err.to_string(), "feature dimension mismatch: expected F = 2, got 1");
    }

    #[test]
    fn softmax_examples() {
        assert!(softmax(&[0.0; 5]).iter().all(|&p| (p - 0.2).abs() < 1e-15));
        let p = softmax(&[3f64.ln(), 0.0]);
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        let z = [0.3, -1.2, 4.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 1234.5).collect();
        let (a, b) = (softmax(&z), softmax(&shifted));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        // no overflow for huge logits
        assert_eq!(softmax(&[1000.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.9, 0.1, 0.1, 0.1]), 1);
        assert_eq!(argmax(&[0.4; 5]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn predict_matches_softmax_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dims = MlpDims::new(4, 3, 5);
        for k in 0..10_000 {
            let p = init_params(dims, k);
            let p = MlpParams {
                b2: (0..5).map(|_| rng.random_range(-1.0..1.0)).collect(),
                ..p
            };
            let f: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let z = forward_logits(&p, &f).unwrap();
            assert_eq!(predict(&p, &f).unwrap(), argmax(&softmax(&z.0)));
        }
    }

    #[test]
    fn loss_of_zero_params_is_ln_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = random_set(&mut rng, 3, 5, 10);
        let (loss, _) = loss_and_grad(&MlpParams::zeros(MlpDims::new(3, 2, 5)), &set, 0.7).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn confident_correct_logits_give_zero_loss() {
        let mut p = MlpParams::zeros(MlpDims::new(1, 1, 3));
        p.b2 = vec![0.0, 800.0, 0.0];
        let set = TrainingSet::from_rows([(&[1.0][..], 1)], 1).unwrap();
        let (loss, _) = loss_and_grad(&p, &set, 0.0).unwrap();
        assert!(loss < 1e-300);
    }

    #[test]
    fn small_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = MlpDims::new(3, 2, 3);
        let set = random_set(&mut rng, 3, 3, 4);
        let mut p = init_params(dims, 1);
        p.b1 = vec![0.1, -0.05];
        let theta = p.to_flat();
        let (_, g) = loss_and_grad(&p, &set, 0.3).unwrap();
        let numeric = numeric_grad(dims, &theta, &set, 0.3, 1e-6);
        let analytic = g.to_flat();
        let num: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
            + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(num / den < 1e-5, "relative error {}", num / den);
    }

    #[test]
    fn loss_rejects_bad_batches() {
        let p = MlpParams::zeros(MlpDims::new(2, 2, 3));
        assert!(loss_and_grad(&p, &TrainingSet::new(2), 0.0).is_err());
        let set = TrainingSet::from_rows([(&[1.0, 2.0][..], 3)], 2).unwrap();
        assert!(loss_and_grad(&p, &set, 0.0).is_err());
    }

    #[test]
    fn flat_round_trip_and_document() {
        let p = init_params(MlpDims::new(6, 5, 5), 2);
        assert_eq!(MlpParams::from_flat(p.dims, &p.to_flat()).unwrap(), p);
        let c = Classifier {
            format: MlpFormat,
            schema_id: "acc[m,s0.75]".into(),
            policy: HiddenSizePolicy::Explicit(5),
            scaler: None,
            params: p,
            training: None,
        };
        let doc = serde_json::to_string(&c).unwrap();
        assert!(doc.contains("\"format\":\"agfusion-mlp/1\""));
        assert_eq!(serde_json::from_str::<Classifier>(&doc).unwrap(), c);
        let bad = doc.replace("agfusion-mlp/1", "agfusion-mlp/0");
        assert!(serde_json::from_str::<Classifier>(&bad).is_err());
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(z in prop::collection::vec(-50.0f64..50.0, 2..8)) {
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| v > 0.0));
        }

        #[test]
        fn predict_is_shift_invariant(seed in any::<u64>(), k in -100.0f64..100.0) {
            let mut p = init_params(MlpDims::new(3, 4, 5), seed);
            let f = [0.5, -1.0, 2.0];
            let before = predict(&p, &f).unwrap();
            p.b2.iter_mut().for_each(|b| *b += k);
            prop_assert_eq!(predict(&p, &f).unwrap(), before);
        }

        #[test]
        fn penalty_increases_loss(seed in any::<u64>(), lambda in 1e-3f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = random_set(&mut rng, 3, 5, 6);
            let p = init_params(MlpDims::new(3, 4, 5), seed);
            let (plain, _) = loss_and_grad(&p, &set, 0.0).unwrap();
            let (reg, _) = loss_and_grad(&p, &set, lambda).unwrap();
            prop_assert!(reg > plain);
        }
    }
}
