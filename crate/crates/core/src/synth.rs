//! Synthetic data.
//!
//! [`gen_discrete`] builds a small two-mode discrete model whose exact
//! posteriors can be enumerated. It checks fusion algebra, with a coupling knob
//! that breaks conditional independence on demand.
//!
//! [`gen_behavior_like`] emits full datapoints that stand in for the field
//! data. Drinking happens at the daily water point, walking is fast and far
//! from it, and the remaining behaviors mill about a 25 m paddock.
//! Accelerometry is drawn independently of GNSS given the class. The generator
//! is shaped for separability, not for physical fidelity.

use chrono::{Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::mix_seed;
use crate::gnss_features::EARTH_RADIUS_M;
use crate::ingest::{AccelSegment, BehaviorClass, Datapoint, GnssFix, WaterPoint, DEFAULT_SEGMENT_LEN, NUM_CLASSES};

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Config(format!("{what} must be non-negative and finite")));
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{what} must sum to 1")));
    }
    Ok(())
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let t: f64 = v.iter().sum();
    v.into_iter().map(|x| x / t).collect()
}

/// Class priors plus one symbol table per mode, `table[c][s] = p(s | c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSpec {
    pub priors: Vec<f64>,
    pub accel: Vec<Vec<f64>>,
    pub gnss: Vec<Vec<f64>>,
    /// Mixing weight of a copy channel: with this probability the GNSS symbol
    /// repeats the accelerometry symbol. Zero keeps the modes conditionally
    /// independent.
    pub coupling: f64,
    pub samples: usize,
    pub seed: u64,
}

impl DiscreteSpec {
    /// Random tables drawn from `seed`, every entry strictly positive.
    pub fn random(classes: usize, accel_symbols: usize, gnss_symbols: usize, coupling: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut row = |n: usize| normalized((0..n).map(|_| rng.random_range(0.05..1.0)).collect());
        let priors = row(classes);
        let accel = (0..classes).map(|_| row(accel_symbols)).collect();
        let gnss = (0..classes).map(|_| row(gnss_symbols)).collect();
        Self {
            priors,
            accel,
            gnss,
            coupling,
            samples: 10_000,
            seed,
        }
    }

    pub fn uniform(classes: usize, symbols: usize) -> Self {
        let table = vec![vec![1.0 / symbols as f64; symbols]; classes];
        Self {
            priors: vec![1.0 / classes as f64; classes],
            accel: table.clone(),
            gnss: table,
            coupling: 0.0,
            samples: 1_000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.priors.len();
        check_distribution(&self.priors, "priors")?;
        for (name, table) in [("accel table", &self.accel), ("gnss table", &self.gnss)] {
            if table.len() != c {
                return Err(Error::Config(format!("{name} needs one row per class")));
            }
            let width = table[0].len();
            if !(1..=10).contains(&width) || table.iter().any(|r| r.len() != width) {
                return Err(Error::Config(format!("{name} rows need 1 to 10 symbols, all equal")));
            }
            for r in table {
                check_distribution(r, name)?;
            }
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::Config("coupling must lie in [0, 1]".into()));
        }
        if self.coupling > 0.0 && self.accel[0].len() != self.gnss[0].len() {
            return Err(Error::Config("coupling needs equal symbol counts in both modes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteSample {
    pub class: usize,
    pub accel: usize,
    pub gnss: usize,
}

/// The full joint table `p(c, a, g)` of a [`DiscreteSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    classes: usize,
    accel_symbols: usize,
    gnss_symbols: usize,
    joint: Vec<f64>,
}

impl DiscreteModel {
    pub fn new(spec: &DiscreteSpec) -> Result<Self> {
        spec.validate()?;
        let (c, sa, sg) = (spec.priors.len(), spec.accel[0].len(), spec.gnss[0].len());
        let k = spec.coupling;
        let mut joint = Vec::with_capacity(c * sa * sg);
        for y in 0..c {
            for a in 0..sa {
                for g in 0..sg {
                    let copy = if a == g { spec.accel[y][a] } else { 0.0 };
                    let cond = (1.0 - k) * spec.accel[y][a] * spec.gnss[y][g] + k * copy;
                    joint.push(spec.priors[y] * cond);
                }
            }
        }
        Ok(Self {
            classes: c,
            accel_symbols: sa,
            gnss_symbols: sg,
            joint,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn accel_symbols(&self) -> usize {
        self.accel_symbols
    }

    pub fn gnss_symbols(&self) -> usize {
        self.gnss_symbols
    }

    pub fn joint(&self, class: usize, a: usize, g: usize) -> f64 {
        self.joint[(class * self.accel_symbols + a) * self.gnss_symbols + g]
    }

    fn posterior_where(&self, keep: impl Fn(usize, usize) -> bool) -> Vec<f64> {
        let mass: Vec<f64> = (0..self.classes)
            .map(|c| {
                let mut m = 0.0;
                for a in 0..self.accel_symbols {
                    for g in 0..self.gnss_symbols {
                        if keep(a, g) {
                            m += self.joint(c, a, g);
                        }
                    }
                }
                m
            })
            .collect();
        normalized(mass)
    }

    /// Exact `p(c | a, g)` by enumeration.
    pub fn posterior_joint(&self, a: usize, g: usize) -> Vec<f64> {
        self.posterior_where(|x, y| x == a && y == g)
    }

    /// Exact `p(c | a)`, marginalizing the GNSS symbol.
    pub fn posterior_accel(&self, a: usize) -> Vec<f64> {
        self.posterior_where(|x, _| x == a)
    }

    /// Exact `p(c | g)`, marginalizing the accelerometry symbol.
    pub fn posterior_gnss(&self, g: usize) -> Vec<f64> {
        self.posterior_where(|_, y| y == g)
    }

    /// Exact class marginal.
    pub fn priors(&self) -> Vec<f64> {
        self.posterior_where(|_, _| true)
    }
}

/// Draws `spec.samples` labeled symbol pairs and returns them with the exact model.
pub fn gen_discrete(spec: &DiscreteSpec) -> Result<(Vec<DiscreteSample>, DiscreteModel)> {
    let model = DiscreteModel::new(spec)?;
    let w = |v: &[f64]| WeightedIndex::new(v).map_err(|e| Error::Config(e.to_string()));
    let classes = w(&spec.priors)?;
    let accel: Vec<_> = spec.accel.iter().map(|r| w(r)).collect::<Result<_>>()?;
    let gnss: Vec<_> = spec.gnss.iter().map(|r| w(r)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samples = (0..spec.samples)
        .map(|_| {
            let class = classes.sample(&mut rng);
            let a = accel[class].sample(&mut rng);
            let copy = rng.random::<f64>() < spec.coupling;
            let g = if copy { a } else { gnss[class].sample(&mut rng) };
            DiscreteSample { class, accel: a, gnss: g }
        })
        .collect();
    Ok((samples, model))
}

/// Parameters of the behavior-like generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorSpec {
    pub animals: usize,
    pub points_per_animal: usize,
    /// Grazing, walking, resting, drinking, alia.
    pub priors: [f64; NUM_CLASSES],
    pub days: usize,
    pub sample_rate_hz: f64,
    pub segment_len: usize,
    pub fixes_per_point: usize,
    pub seed: u64,
}

/// Class counts of the collar reference dataset, used as generator priors.
const REFERENCE_COUNTS: [f64; NUM_CLASSES] = [6156.0, 910.0, 4080.0, 594.0, 222.0];

impl Default for BehaviorSpec {
    fn default() -> Self {
        let total: f64 = REFERENCE_COUNTS.iter().sum();
        Self {
            animals: 8,
            points_per_animal: 1500,
            priors: REFERENCE_COUNTS.map(|c| c / total),
            days: 6,
            sample_rate_hz: 25.0,
            segment_len: DEFAULT_SEGMENT_LEN,
            fixes_per_point: 5,
            seed: 2020,
        }
    }
}

impl BehaviorSpec {
    /// Named presets: `coupling0` (8 animals × 1500 points, modes
    /// conditionally independent given the class) and `small` (4 × 150).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "coupling0" => Ok(Self::default()),
            "small" => Ok(Self {
                animals: 4,
                points_per_animal: 150,
                days: 2,
                ..Self::default()
            }),
            _ => Err(Error::Config(format!("unknown synth preset `{name}` (expected coupling0 or small)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_distribution(&self.priors, "priors")?;
        if self.animals == 0 || self.points_per_animal == 0 || self.days == 0 || self.fixes_per_point == 0 {
            return Err(Error::Config("animals, points, days and fixes must be positive".into()));
        }
        if self.segment_len < 2 || !(self.sample_rate_hz > 0.0) {
            return Err(Error::Config("segment_len must be >= 2 and the sample rate positive".into()));
        }
        Ok(())
    }
}

struct ClassShape {
    /// Mean gravity direction seen by the sensor.
    pose: [f64; 3],
    pose_jitter: f64,
    /// Typical per-sample motion amplitude in g.
    intensity: f64,
    speed: (f64, f64),
    ehpe_m: f64,
}

fn shape(class: BehaviorClass) -> ClassShape {
    match class {
        BehaviorClass::Grazing => ClassShape {
            pose: [0.10, -0.45, 0.85],
            pose_jitter: 0.07,
            intensity: 0.22,
            speed: (0.06, 0.10),
            ehpe_m: 7.0,
        },
        BehaviorClass::Walking => ClassShape {
            pose: [0.05, -0.30, 0.92],
            pose_jitter: 0.08,
            intensity: 0.30,
            speed: (0.9, 0.5),
            ehpe_m: 6.0,
        },
        BehaviorClass::Resting => ClassShape {
            pose: [0.30, 0.05, 0.93],
            pose_jitter: 0.07,
            intensity: 0.05,
            speed: (0.03, 0.08),
            ehpe_m: 8.0,
        },
        BehaviorClass::Drinking => ClassShape {
            pose: [0.12, -0.58, 0.78],
            pose_jitter: 0.07,
            intensity: 0.15,
            speed: (0.04, 0.08),
            ehpe_m: 7.0,
        },
        BehaviorClass::Alia => ClassShape {
            pose: [0.15, -0.20, 0.93],
            pose_jitter: 0.12,
            intensity: 0.14,
            speed: (0.06, 0.12),
            ehpe_m: 7.0,
        },
    }
}

const BASE_LAT: f64 = -30.607;
const BASE_LON: f64 = 151.544;
const PADDOCK_M: f64 = 25.0;
const DRINK_RADIUS_M: f64 = 4.0;

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn round7(v: f64) -> f64 {
    (v * 1e7).round() / 1e7
}

/// Moves `(lat, lon)` by `(east, north)` meters.
fn offset(lat: f64, lon: f64, east: f64, north: f64) -> (f64, f64) {
    let dlat = (north / EARTH_RADIUS_M).to_degrees();
    let dlon = (east / (EARTH_RADIUS_M * lat.to_radians().cos())).to_degrees();
    (lat + dlat, lon + dlon)
}

struct Day {
    date: NaiveDate,
    water: WaterPoint,
    /// South-west corner of the day's paddock, as east/north meters from the water point.
    paddock_origin: (f64, f64),
}

fn make_days(spec: &BehaviorSpec) -> Vec<Day> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[spec.seed, 0xDA75]));
    let start = NaiveDate::from_ymd_opt(2020, 3, 2).expect("valid date");
    (0..spec.days)
        .map(|d| {
            let (lat, lon) = offset(
                BASE_LAT,
                BASE_LON,
                rng.random_range(-300.0..300.0),
                rng.random_range(-300.0..300.0),
            );
            Day {
                date: start + Duration::days(d as i64),
                water: WaterPoint {
                    lat_deg: round7(lat),
                    lon_deg: round7(lon),
                },
                paddock_origin: (-rng.random_range(0.0..PADDOCK_M), -rng.random_range(0.0..PADDOCK_M)),
            }
        })
        .collect()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn gen_animal(spec: &BehaviorSpec, days: &[Day], animal: usize) -> Vec<Datapoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[spec.seed, 1 + animal as u64]));
    let classes = WeightedIndex::new(spec.priors).expect("validated priors");
    let animal_pose: [f64; 3] = std::array::from_fn(|_| 0.04 * gauss(&mut rng));
    let animal_gain = (0.1 * gauss(&mut rng)).exp();
    let n = spec.segment_len;
    let duration = n as f64 / spec.sample_rate_hz;
    let per_day = spec.points_per_animal.div_ceil(spec.days);

    (0..spec.points_per_animal)
        .map(|i| {
            let class = BehaviorClass::ALL[classes.sample(&mut rng)];
            let s = shape(class);
            let day = &days[(i / per_day).min(days.len() - 1)];
            let t0 = day.date.and_hms_opt(8, 0, 0).expect("valid time").and_utc().timestamp() as f64
                + (i % per_day) as f64 * (duration + 2.0);

            let pose: [f64; 3] = std::array::from_fn(|k| s.pose[k] + animal_pose[k] + s.pose_jitter * gauss(&mut rng));
            let sigma = s.intensity * animal_gain * (0.3 * gauss(&mut rng)).exp();
            let mut axes: [Vec<f64>; 3] = Default::default();
            for (k, axis) in axes.iter_mut().enumerate() {
                // AR(1) motion so intensity shows up after high-pass filtering
                // without being pure white noise.
                let mut m = 0.0;
                *axis = (0..n)
                    .map(|_| {
                        m = 0.3 * m + sigma * gauss(&mut rng);
                        round4(pose[k] + m)
                    })
                    .collect();
            }
            let [x, y, z] = axes;

            let (east, north) = match class {
                BehaviorClass::Drinking => {
                    let r = DRINK_RADIUS_M * rng.random::<f64>().sqrt();
                    let a = rng.random_range(0.0..std::f64::consts::TAU);
                    (r * a.cos(), r * a.sin())
                }
                BehaviorClass::Walking => {
                    let r = rng.random_range(40.0..300.0);
                    let a = rng.random_range(0.0..std::f64::consts::TAU);
                    (r * a.cos(), r * a.sin())
                }
                _ => (
                    day.paddock_origin.0 + rng.random_range(0.0..PADDOCK_M),
                    day.paddock_origin.1 + rng.random_range(0.0..PADDOCK_M),
                ),
            };
            let (lat, lon) = offset(day.water.lat_deg, day.water.lon_deg, east, north);
            let bias = (2.0 * gauss(&mut rng), 2.0 * gauss(&mut rng));
            let gnss = (0..spec.fixes_per_point)
                .map(|f| {
                    let ehpe = s.ehpe_m * (0.3 * gauss(&mut rng)).exp();
                    let sd = ehpe / 1.5;
                    let (flat, flon) = offset(lat, lon, bias.0 + sd * gauss(&mut rng), bias.1 + sd * gauss(&mut rng));
                    let speed = (s.speed.0 + s.speed.1 * gauss(&mut rng)).abs();
                    GnssFix {
                        lat_deg: round7(flat),
                        lon_deg: round7(flon),
                        speed_mps: Some(round4(speed)),
                        ehpe_m: Some(round4(ehpe)),
                        t_unix: t0 + (f as f64 + 0.5) * duration / spec.fixes_per_point as f64,
                    }
                })
                .collect();

            Datapoint {
                animal_id: format!("synth-{:02}", animal + 1),
                day: day.date,
                label: Some(class),
                accel: AccelSegment {
                    sample_rate_hz: spec.sample_rate_hz,
                    t_start_unix: Some(t0),
                    x,
                    y,
                    z,
                },
                gnss,
                water_point: day.water.clone(),
            }
        })
        .collect()
}

/// Emits `animals × points_per_animal` labeled datapoints, grouped by animal.
/// The output depends only on the spec.
pub fn gen_behavior_like(spec: &BehaviorSpec) -> Result<Vec<Datapoint>> {
    spec.validate()?;
    let days = make_days(spec);
    let per_animal: Vec<Vec<Datapoint>> = (0..spec.animals)
        .into_par_iter()
        .map(|a| gen_animal(spec, &days, a))
        .collect();
    Ok(per_animal.concat())
}
