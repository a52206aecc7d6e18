//! GNSS features: distance to the water point (DtWP), median speed and median
//! estimated horizontal position error.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::accel_features::FeatureVector;
use crate::error::{Error, Result};
use crate::ingest::{Datapoint, GnssFix, WaterPoint};

/// Mean earth radius used by the equirectangular distance, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_230.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnssFeature {
    Dtwp,
    Speed,
    Error,
}

impl GnssFeature {
    /// Emission order.
    pub const ALL: [GnssFeature; 3] = [GnssFeature::Dtwp, GnssFeature::Speed, GnssFeature::Error];

    pub fn name(self) -> &'static str {
        match self {
            GnssFeature::Dtwp => "dtwp",
            GnssFeature::Speed => "speed",
            GnssFeature::Error => "error",
        }
    }
}

/// Subset of GNSS features, always iterated in `dtwp, speed, error` order.
///
/// Parses from `all`, `none`, or names joined by `+` (e.g. `dtwp+error`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GnssFeatureSet {
    bits: u8,
}

impl GnssFeatureSet {
    pub const ALL: GnssFeatureSet = GnssFeatureSet { bits: 0b111 };
    pub const NONE: GnssFeatureSet = GnssFeatureSet { bits: 0 };

    pub fn of(features: &[GnssFeature]) -> Self {
        let bits = features.iter().fold(0, |acc, f| acc | (1 << *f as u8));
        Self { bits }
    }

    pub fn contains(self, f: GnssFeature) -> bool {
        self.bits & (1 << f as u8) != 0
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn len(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = GnssFeature> {
        GnssFeature::ALL.into_iter().filter(move |f| self.contains(*f))
    }

    /// Positions of the enabled features within the full `[dtwp, speed, error]` vector.
    pub fn column_indices(self) -> Vec<usize> {
        GnssFeature::ALL
            .iter()
            .enumerate()
            .filter(|(_, f)| self.contains(**f))
            .map(|(i, _)| i)
            .collect()
    }

    /// The seven non-empty subsets plus `none`, in the column order of the
    /// ablation tables.
    pub fn ablation_order() -> Vec<GnssFeatureSet> {
        use GnssFeature::*;
        vec![
            Self::ALL,
            Self::of(&[Dtwp, Error]),
            Self::of(&[Dtwp, Speed]),
            Self::of(&[Speed, Error]),
            Self::of(&[Dtwp]),
            Self::of(&[Speed]),
            Self::of(&[Error]),
            Self::NONE,
        ]
    }
}

impl Default for GnssFeatureSet {
    fn default() -> Self {
        Self::ALL
    }
}

impl fmt::Display for GnssFeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::ALL {
            return f.write_str("all");
        }
        if self.is_empty() {
            return f.write_str("none");
        }
        let names: Vec<_> = self.iter().map(GnssFeature::name).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for GnssFeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => return Ok(Self::ALL),
            "none" | "" => return Ok(Self::NONE),
            _ => {}
        }
        let mut set = Self::NONE;
        for part in s.split('+') {
            let f = GnssFeature::ALL
                .into_iter()
                .find(|f| f.name().eq_ignore_ascii_case(part.trim()))
                .ok_or_else(|| Error::Config(format!("unknown GNSS feature `{part}`")))?;
            set.bits |= 1 << f as u8;
        }
        Ok(set)
    }
}

impl TryFrom<String> for GnssFeatureSet {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GnssFeatureSet> for String {
    fn from(s: GnssFeatureSet) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnssFeatureConfig {
    #[serde(default = "default_radius")]
    pub earth_radius_m: f64,
    #[serde(default)]
    pub enabled: GnssFeatureSet,
    /// Fixes reporting an EHPE above this ceiling are treated as invalid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_ehpe_m: Option<f64>,
}

fn default_radius() -> f64 {
    EARTH_RADIUS_M
}

impl Default for GnssFeatureConfig {
    fn default() -> Self {
        Self {
            earth_radius_m: EARTH_RADIUS_M,
            enabled: GnssFeatureSet::ALL,
            max_ehpe_m: None,
        }
    }
}

impl GnssFeatureConfig {
    pub fn with_enabled(&self, enabled: GnssFeatureSet) -> Self {
        Self {
            enabled,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.earth_radius_m.is_finite() && self.earth_radius_m > 0.0) {
            return Err(Error::Config(format!(
                "earth_radius_m must be > 0, got {}",
                self.earth_radius_m
            )));
        }
        Ok(())
    }

    /// e.g. `gnss[dtwp+speed]`.
    pub fn schema_id(&self) -> String {
        format!("gnss[{}]", self.enabled)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.enabled.iter().map(|f| f.name().to_string()).collect()
    }

    fn fix_is_valid(&self, fix: &GnssFix) -> bool {
        match (self.max_ehpe_m, fix.ehpe_m) {
            (Some(limit), Some(e)) => e <= limit,
            _ => true,
        }
    }
}

/// Median with the even-count rule (mean of the two central order statistics).
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::NoGnssValues);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// Equirectangular-projection distance in meters between a position and the
/// water point. Inputs are in degrees.
pub fn dtwp(lat_deg: f64, lon_deg: f64, wp: &WaterPoint, radius_m: f64) -> f64 {
    let phi = lat_deg.to_radians();
    let lambda = lon_deg.to_radians();
    let phi_w = wp.lat_deg.to_radians();
    let lambda_w = wp.lon_deg.to_radians();
    let c = (0.5 * (phi + phi_w)).cos();
    let d_lambda = lambda - lambda_w;
    let d_phi = phi - phi_w;
    radius_m * (c * c * d_lambda * d_lambda + d_phi * d_phi).sqrt()
}

/// Computes the enabled subset of `[dtwp, speed, error]` for one datapoint.
///
/// Fixes lacking a speed or EHPE value are dropped per field; a field with no
/// valid values at all yields [`Error::NoGnssValues`].
pub fn gnss_feature_vector(dp: &Datapoint, cfg: &GnssFeatureConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    let fixes: Vec<&GnssFix> = dp.gnss.iter().filter(|f| cfg.fix_is_valid(f)).collect();
    if fixes.is_empty() {
        return Err(Error::MissingGnss);
    }
    let mut values = Vec::with_capacity(cfg.enabled.len());
    for feature in cfg.enabled.iter() {
        let v = match feature {
            GnssFeature::Dtwp => {
                let lats: Vec<f64> = fixes.iter().map(|f| f.lat_deg).collect();
                let lons: Vec<f64> = fixes.iter().map(|f| f.lon_deg).collect();
                dtwp(median(&lats)?, median(&lons)?, &dp.water_point, cfg.earth_radius_m)
            }
            GnssFeature::Speed => {
                let v: Vec<f64> = fixes.iter().filter_map(|f| f.speed_mps).collect();
                median(&v)?
            }
            GnssFeature::Error => {
                let v: Vec<f64> = fixes.iter().filter_map(|f| f.ehpe_m).collect();
                median(&v)?
            }
        };
        values.push(v);
    }
    Ok(FeatureVector {
        values,
        schema_id: cfg.schema_id(),
    })
}
