//! Labeled multimodal datapoints: parsing, validation, partitioning and class priors.
//!
//! A datapoint is one fixed-length triaxial accelerometer segment joined with the
//! GNSS fixes reported inside its time window, the water-point location of that
//! day, and an optional behavior label.

mod csv_pair;
mod jsonl;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_pair::{convert_csv_pair, CsvPairLayout};
pub use jsonl::{parse_jsonl_str, read_jsonl, save_jsonl, write_jsonl};

/// Number of behavior classes.
pub const NUM_CLASSES: usize = 5;

/// Default accelerometer segment length.
pub const DEFAULT_SEGMENT_LEN: usize = 256;

/// Tolerance on GNSS timestamps around the accelerometer window, in seconds.
pub const WINDOW_SLACK_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorClass {
    Grazing,
    Walking,
    Resting,
    Drinking,
    Alia,
}

impl BehaviorClass {
    pub const ALL: [BehaviorClass; NUM_CLASSES] = [
        BehaviorClass::Grazing,
        BehaviorClass::Walking,
        BehaviorClass::Resting,
        BehaviorClass::Drinking,
        BehaviorClass::Alia,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BehaviorClass::Grazing => "grazing",
            BehaviorClass::Walking => "walking",
            BehaviorClass::Resting => "resting",
            BehaviorClass::Drinking => "drinking",
            BehaviorClass::Alia => "alia",
        }
    }
}

impl fmt::Display for BehaviorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BehaviorClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Format(format!("unknown behavior class `{s}`")))
    }
}

/// One GNSS receiver report. Speed and EHPE may be absent on individual fixes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnssFix {
    pub lat_deg: f64,
    pub lon_deg: f64,
    #[serde(default)]
    pub speed_mps: Option<f64>,
    #[serde(default)]
    pub ehpe_m: Option<f64>,
    pub t_unix: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelSegment {
    pub sample_rate_hz: f64,
    /// Timestamp of the first sample. When present, GNSS fixes are checked
    /// against the segment window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_start_unix: Option<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl AccelSegment {
    /// Number of samples per axis (the x-axis length).
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn axes(&self) -> [&[f64]; 3] {
        [&self.x, &self.y, &self.z]
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    /// Checks the segment invariants: equal axis lengths, at least `min_len`
    /// samples, finite values and a positive sample rate.
    pub fn check(&self, min_len: usize) -> std::result::Result<(), String> {
        let n = self.x.len();
        if self.y.len() != n || self.z.len() != n {
            return Err(format!(
                "axis length mismatch (x={}, y={}, z={})",
                n,
                self.y.len(),
                self.z.len()
            ));
        }
        if n < min_len {
            return Err(format!("segment has {n} samples, need at least {min_len}"));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(format!("sample_rate_hz must be > 0, got {}", self.sample_rate_hz));
        }
        for (axis, values) in ["x", "y", "z"].iter().zip(self.axes()) {
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(format!("non-finite {axis} sample at index {i}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Datapoint {
    pub animal_id: String,
    pub day: NaiveDate,
    pub label: Option<BehaviorClass>,
    pub accel: AccelSegment,
    #[serde(default)]
    pub gnss: Vec<GnssFix>,
    pub water_point: WaterPoint,
}

impl Datapoint {
    pub fn has_accel(&self) -> bool {
        !self.accel.is_empty() && self.accel.check(1).is_ok()
    }

    pub fn has_gnss(&self) -> bool {
        !self.gnss.is_empty()
    }

    /// Full record validation as applied by the parsers.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.animal_id.is_empty() {
            return Err("empty animal_id".into());
        }
        self.accel.check(2)?;
        check_coords(self.water_point.lat_deg, self.water_point.lon_deg)
            .map_err(|e| format!("water_point: {e}"))?;
        for (i, fix) in self.gnss.iter().enumerate() {
            check_fix(fix).map_err(|e| format!("gnss[{i}]: {e}"))?;
        }
        if let Some(t0) = self.accel.t_start_unix {
            let t1 = t0 + self.accel.duration_s();
            for (i, fix) in self.gnss.iter().enumerate() {
                if fix.t_unix < t0 - WINDOW_SLACK_S || fix.t_unix > t1 + WINDOW_SLACK_S {
                    return Err(format!(
                        "gnss[{i}]: timestamp {} outside segment window [{t0}, {t1}]",
                        fix.t_unix
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_coords(lat: f64, lon: f64) -> std::result::Result<(), String> {
    if !(-90.0..=90.0).contains(&lat) {
        return Err(format!("latitude {lat} outside [-90, 90]"));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(format!("longitude {lon} outside [-180, 180]"));
    }
    Ok(())
}

fn check_fix(fix: &GnssFix) -> std::result::Result<(), String> {
    check_coords(fix.lat_deg, fix.lon_deg)?;
    if !fix.t_unix.is_finite() {
        return Err("non-finite timestamp".into());
    }
    if let Some(v) = fix.speed_mps {
        if !(v.is_finite() && v >= 0.0) {
            return Err(format!("speed_mps must be >= 0, got {v}"));
        }
    }
    if let Some(e) = fix.ehpe_m {
        if !(e.is_finite() && e >= 0.0) {
            return Err(format!("ehpe_m must be >= 0, got {e}"));
        }
    }
    Ok(())
}

/// On-disk dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    /// One canonical JSON record per line.
    CanonicalJsonl,
    /// A directory holding `accel.csv`, `gnss.csv` and `water.csv` streams.
    CsvPair,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical-jsonl" | "jsonl" => Ok(Self::CanonicalJsonl),
            "csv-pair" => Ok(Self::CsvPair),
            other => Err(Error::Format(format!("unknown dataset format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub line: usize,
    pub message: String,
}

/// Records rejected during parsing, with 1-based line numbers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn len(&self) -> usize {
        self.issues.len()
    }

    pub(crate) fn push(&mut self, line: usize, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            line,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "line {}: {}", issue.line, issue.message)?;
        }
        Ok(())
    }
}

/// Reads a dataset. Malformed records land in the report; only I/O failures
/// are returned as errors.
pub fn parse_dataset(
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<(Vec<Datapoint>, ValidationReport)> {
    match format {
        DatasetFormat::CanonicalJsonl => read_jsonl(path),
        DatasetFormat::CsvPair => convert_csv_pair(path, &CsvPairLayout::default()),
    }
}

/// Keeps datapoints that carry both an accelerometer segment and at least one GNSS fix.
pub fn filter_complete(data: &[Datapoint]) -> Vec<Datapoint> {
    data.iter()
        .filter(|dp| dp.has_accel() && dp.has_gnss())
        .cloned()
        .collect()
}

/// Partitions datapoints by animal. Groups are keyed in sorted order and keep
/// the input order within each group.
pub fn split_by_animal(data: &[Datapoint]) -> BTreeMap<String, Vec<Datapoint>> {
    let mut groups: BTreeMap<String, Vec<Datapoint>> = BTreeMap::new();
    for dp in data {
        groups.entry(dp.animal_id.clone()).or_default().push(dp.clone());
    }
    groups
}

/// Index form of [`split_by_animal`].
pub fn animal_groups(data: &[Datapoint]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, dp) in data.iter().enumerate() {
        groups.entry(dp.animal_id.as_str()).or_default().push(i);
    }
    groups
}

/// Class prior probabilities. Every entry is strictly positive and the
/// entries sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Priors(Vec<f64>);

impl Priors {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::InvalidPriors(format!("need >= 2 classes, got {}", p.len())));
        }
        if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidPriors(format!("entry {v} is not strictly positive")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPriors(format!("entries sum to {sum}")));
        }
        Ok(Self(p))
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0 / num_classes as f64; num_classes])
    }

    /// `p_c = (count_c + smoothing) / (total + C * smoothing)`.
    pub fn from_counts(counts: &[u64], smoothing: f64) -> Result<Self> {
        if !(smoothing.is_finite() && smoothing >= 0.0) {
            return Err(Error::Config(format!("smoothing must be >= 0, got {smoothing}")));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::NoLabeledData);
        }
        let denom = total as f64 + counts.len() as f64 * smoothing;
        let p: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64 + smoothing) / denom)
            .collect();
        if let Some(c) = p.iter().position(|&v| v <= 0.0) {
            return Err(Error::InvalidPriors(format!(
                "class {c} has no samples; use smoothing > 0"
            )));
        }
        Ok(Self(p))
    }

    pub fn from_labels(labels: &[usize], num_classes: usize, smoothing: f64) -> Result<Self> {
        let mut counts = vec![0u64; num_classes];
        for &y in labels {
            counts[y] += 1;
        }
        Self::from_counts(&counts, smoothing)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ln(&self) -> Vec<f64> {
        self.0.iter().map(|p| p.ln()).collect()
    }
}

impl TryFrom<Vec<f64>> for Priors {
    type Error = Error;

    fn try_from(p: Vec<f64>) -> Result<Self> {
        Priors::new(p)
    }
}

impl From<Priors> for Vec<f64> {
    fn from(p: Priors) -> Self {
        p.0
    }
}

/// Empirical class priors of the labeled datapoints; unlabeled ones are ignored.
pub fn class_priors(data: &[Datapoint], smoothing: f64) -> Result<Priors> {
    let mut counts = [0u64; NUM_CLASSES];
    for label in data.iter().filter_map(|dp| dp.label) {
        counts[label.code()] += 1;
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::NoLabeledData);
    }
    Priors::from_counts(&counts, smoothing)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn datapoint(animal: &str, label: Option<BehaviorClass>, fixes: usize) -> Datapoint {
        Datapoint {
            animal_id: animal.into(),
            day: NaiveDate::from_ymd_opt(2020, 3, 23).unwrap(),
            label,
            accel: AccelSegment {
                sample_rate_hz: 50.0,
                t_start_unix: None,
                x: vec![0.1; 8],
                y: vec![-0.5; 8],
                z: vec![0.8; 8],
            },
            gnss: (0..fixes)
                .map(|i| GnssFix {
                    lat_deg: -30.607,
                    lon_deg: 151.544,
                    speed_mps: Some(0.1 * i as f64),
                    ehpe_m: Some(7.0),
                    t_unix: i as f64,
                })
                .collect(),
            water_point: WaterPoint {
                lat_deg: -30.6075,
                lon_deg: 151.5445,
            },
        }
    }

    #[test]
    fn class_codes_are_a_bijection() {
        for (i, c) in BehaviorClass::ALL.iter().enumerate() {
            assert_eq!(c.code(), i);
            assert_eq!(BehaviorClass::from_code(i), Some(*c));
            assert_eq!(c.name().parse::<BehaviorClass>().unwrap(), *c);
        }
        assert_eq!(BehaviorClass::from_code(5), None);
    }

    #[test]
    fn filter_complete_needs_one_fix() {
        assert!(filter_complete(&[]).is_empty());
        let data = vec![
            datapoint("a", Some(BehaviorClass::Grazing), 0),
            datapoint("a", Some(BehaviorClass::Grazing), 1),
        ];
        let kept = filter_complete(&data);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].gnss.len(), 1);
    }

    #[test]
    fn split_sizes() {
        let mut data = Vec::new();
        for (animal, n) in [("c", 30), ("a", 10), ("b", 20)] {
            data.extend((0..n).map(|_| datapoint(animal, None, 1)));
        }
        let groups = split_by_animal(&data);
        let sizes: Vec<_> = groups.iter().map(|(k, v)| (k.as_str(), v.len())).collect();
        assert_eq!(sizes, vec![("a", 10), ("b", 20), ("c", 30)]);

        let one = split_by_animal(&data[..10]);
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn priors_from_table_counts() {
        let p = Priors::from_counts(&[6156, 910, 4080, 594, 222], 0.0).unwrap();
        assert_eq!(p.as_slice()[0], 6156.0 / 11962.0);

        let uniform = Priors::from_counts(&[1, 1, 1, 1, 1], 0.0).unwrap();
        assert!(uniform.as_slice().iter().all(|&v| v == 0.2));

        let smoothed = Priors::from_counts(&[4, 0, 0, 0, 0], 1.0).unwrap();
        let want = [5.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0];
        for (a, b) in smoothed.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }

        assert!(matches!(
            Priors::from_counts(&[4, 0, 0, 0, 0], 0.0),
            Err(Error::InvalidPriors(_))
        ));
    }

    #[test]
    fn priors_need_labels() {
        let unlabeled = vec![datapoint("a", None, 1)];
        assert!(matches!(class_priors(&unlabeled, 1.0), Err(Error::NoLabeledData)));
        assert!(matches!(class_priors(&[], 1.0), Err(Error::NoLabeledData)));
    }

    #[test]
    fn window_check() {
        let mut dp = datapoint("a", None, 3);
        dp.accel.sample_rate_hz = 4.0; // 8 samples span 2 s
        dp.accel.t_start_unix = Some(0.5);
        assert!(dp.validate().is_ok());
        dp.gnss[2].t_unix = 100.0;
        assert!(dp.validate().unwrap_err().contains("outside segment window"));
    }
}
