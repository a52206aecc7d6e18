//! Accelerometry features: per-axis means (head/neck pose) and per-axis mean
//! absolute high-pass-filtered values (movement intensity).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AccelSegment;

const AXES: [&str; 3] = ["x", "y", "z"];

/// Which accelerometry features to extract.
///
/// Produces `[m_x, m_y, m_z]` when `include_mean` is set, followed by one
/// `[s_x, s_y, s_z]` triple per filter parameter, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelFeatureConfig {
    pub gammas: Vec<f64>,
    #[serde(default = "default_true")]
    pub include_mean: bool,
}

fn default_true() -> bool {
    true
}

impl Default for AccelFeatureConfig {
    fn default() -> Self {
        Self::collar()
    }
}

impl AccelFeatureConfig {
    /// Six features: means plus one intensity triple at γ = 0.75.
    pub fn collar() -> Self {
        Self {
            gammas: vec![0.75],
            include_mean: true,
        }
    }

    /// Nine features: means plus intensity triples at γ = 0.75 and γ = 0.5.
    pub fn ear() -> Self {
        Self {
            gammas: vec![0.75, 0.5],
            include_mean: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return Err(Error::Config(format!("filter parameter {g} not in (0, 1)")));
        }
        if self.feature_count() == 0 {
            return Err(Error::Config("accelerometry config selects no features".into()));
        }
        Ok(())
    }

    pub fn feature_count(&self) -> usize {
        3 * usize::from(self.include_mean) + 3 * self.gammas.len()
    }

    /// e.g. `acc[m,s0.75,s0.5]`.
    pub fn schema_id(&self) -> String {
        let mut parts = Vec::new();
        if self.include_mean {
            parts.push("m".to_string());
        }
        parts.extend(self.gammas.iter().map(|g| format!("s{g}")));
        format!("acc[{}]", parts.join(","))
    }

    /// Column names matching the feature order.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.feature_count());
        if self.include_mean {
            names.extend(AXES.iter().map(|a| format!("m_{a}")));
        }
        for g in &self.gammas {
            names.extend(AXES.iter().map(|a| format!("s{g}_{a}")));
        }
        names
    }
}

/// Ordered feature values tagged with the recipe that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema_id: String,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// First-order high-pass filter `y[n] = γ·y[n-1] + x[n] - x[n-1]` with zero
/// pre-history, so `y[0] = x[0]`.
pub fn highpass_filter(x: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(x.len());
    let (mut prev_x, mut prev_y) = (0.0, 0.0);
    for (n, &v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteSample(n));
        }
        let y = gamma * prev_y + v - prev_x;
        out.push(y);
        prev_x = v;
        prev_y = y;
    }
    Ok(out)
}

/// Mean absolute value of the filtered signal, without materializing it.
fn mean_abs_filtered(x: &[f64], gamma: f64) -> Result<f64> {
    let (mut prev_x, mut prev_y, mut acc) = (0.0, 0.0, 0.0);
    for (n, &v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteSample(n));
        }
        let y = gamma * prev_y + v - prev_x;
        acc += y.abs();
        prev_x = v;
        prev_y = y;
    }
    Ok(acc / x.len() as f64)
}

pub fn mean_features(seg: &AccelSegment) -> [f64; 3] {
    seg.axes()
        .map(|axis| axis.iter().sum::<f64>() / axis.len() as f64)
}

pub fn mas_features(seg: &AccelSegment, gamma: f64) -> Result<[f64; 3]> {
    let [x, y, z] = seg.axes();
    Ok([
        mean_abs_filtered(x, gamma)?,
        mean_abs_filtered(y, gamma)?,
        mean_abs_filtered(z, gamma)?,
    ])
}

pub fn accel_feature_vector(seg: &AccelSegment, cfg: &AccelFeatureConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    if seg.is_empty() {
        return Err(Error::MissingAccel);
    }
    seg.check(1).map_err(Error::Format)?;
    let mut values = Vec::with_capacity(cfg.feature_count());
    if cfg.include_mean {
        values.extend(mean_features(seg));
    }
    for &g in &cfg.gammas {
        values.extend(mas_features(seg, g)?);
    }
    Ok(FeatureVector {
        values,
        schema_id: cfg.schema_id(),
    })
}
