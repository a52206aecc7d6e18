//! Adapter from raw logger streams to canonical datapoints.
//!
//! The input directory holds three CSV files:
//!
//! * `accel.csv`: `animal_id,t_unix,x,y,z,label` (one row per sample, empty label = unannotated)
//! * `gnss.csv`: `animal_id,t_unix,lat_deg,lon_deg,speed_mps,ehpe_m` (speed/EHPE may be empty)
//! * `water.csv`: `day,lat_deg,lon_deg` (one row per calendar day, UTC)
//!
//! Each animal's labeled samples are cut into non-overlapping runs of
//! `segment_len` consecutive readings sharing one label and free of time gaps.
//! GNSS fixes falling inside a run's time window are attached to it.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{DateTime, NaiveDate};
use serde::Deserialize;

use super::{AccelSegment, BehaviorClass, Datapoint, GnssFix, ValidationReport, WaterPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CsvPairLayout {
    pub accel_file: String,
    pub gnss_file: String,
    pub water_file: String,
    pub segment_len: usize,
    /// A sample interval longer than this multiple of the stream's median
    /// interval breaks the current segment.
    pub max_gap_factor: f64,
}

impl Default for CsvPairLayout {
    fn default() -> Self {
        Self {
            accel_file: "accel.csv".into(),
            gnss_file: "gnss.csv".into(),
            water_file: "water.csv".into(),
            segment_len: super::DEFAULT_SEGMENT_LEN,
            max_gap_factor: 1.5,
        }
    }
}

#[derive(Debug, Deserialize)]
struct AccelRow {
    animal_id: String,
    t_unix: f64,
    x: f64,
    y: f64,
    z: f64,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Debug, Deserialize)]
struct GnssRow {
    animal_id: String,
    t_unix: f64,
    lat_deg: f64,
    lon_deg: f64,
    #[serde(default)]
    speed_mps: Option<f64>,
    #[serde(default)]
    ehpe_m: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct WaterRow {
    day: NaiveDate,
    lat_deg: f64,
    lon_deg: f64,
}

struct Sample {
    line: usize,
    t: f64,
    xyz: [f64; 3],
    label: BehaviorClass,
}

fn read_rows<T: serde::de::DeserializeOwned>(
    path: &Path,
    report: &mut ValidationReport,
    prefix: &str,
) -> Result<Vec<(usize, T)>> {
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(csv_err(e)),
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                report.push(line, format!("{prefix}: {e}"));
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line() as usize);
        match record.deserialize::<T>(Some(&headers)) {
            Ok(row) => rows.push((line, row)),
            Err(e) => report.push(line, format!("{prefix}: {e}")),
        }
    }
    Ok(rows)
}

fn day_of(t_unix: f64) -> Option<NaiveDate> {
    let secs = t_unix.floor();
    let nanos = ((t_unix - secs) * 1e9) as u32;
    DateTime::from_timestamp(secs as i64, nanos.min(999_999_999)).map(|dt| dt.date_naive())
}

fn median_interval(samples: &[Sample]) -> Option<f64> {
    let mut dts: Vec<f64> = samples
        .windows(2)
        .map(|w| w[1].t - w[0].t)
        .filter(|dt| *dt > 0.0)
        .collect();
    if dts.is_empty() {
        return None;
    }
    dts.sort_by(f64::total_cmp);
    Some(dts[dts.len() / 2])
}

/// Builds canonical datapoints from a `csv-pair` directory.
pub fn convert_csv_pair(
    dir: impl AsRef<Path>,
    layout: &CsvPairLayout,
) -> Result<(Vec<Datapoint>, ValidationReport)> {
    let dir = dir.as_ref();
    if layout.segment_len < 2 {
        return Err(Error::Config("segment_len must be >= 2".into()));
    }
    let mut report = ValidationReport::default();

    let water: HashMap<NaiveDate, WaterPoint> =
        read_rows::<WaterRow>(&dir.join(&layout.water_file), &mut report, "water")?
            .into_iter()
            .map(|(_, r)| {
                (
                    r.day,
                    WaterPoint {
                        lat_deg: r.lat_deg,
                        lon_deg: r.lon_deg,
                    },
                )
            })
            .collect();

    let mut fixes: BTreeMap<String, Vec<GnssFix>> = BTreeMap::new();
    for (line, r) in read_rows::<GnssRow>(&dir.join(&layout.gnss_file), &mut report, "gnss")? {
        let fix = GnssFix {
            lat_deg: r.lat_deg,
            lon_deg: r.lon_deg,
            speed_mps: r.speed_mps,
            ehpe_m: r.ehpe_m,
            t_unix: r.t_unix,
        };
        match super::check_fix(&fix) {
            Ok(()) => fixes.entry(r.animal_id).or_default().push(fix),
            Err(msg) => report.push(line, format!("gnss: {msg}")),
        }
    }
    for list in fixes.values_mut() {
        list.sort_by(|a, b| a.t_unix.total_cmp(&b.t_unix));
    }

    let mut streams: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
    for (line, r) in read_rows::<AccelRow>(&dir.join(&layout.accel_file), &mut report, "accel")? {
        if !(r.t_unix.is_finite() && r.x.is_finite() && r.y.is_finite() && r.z.is_finite()) {
            report.push(line, "accel: non-finite value");
            continue;
        }
        let label = match r.label.as_deref().map(str::trim) {
            None | Some("") => continue,
            Some(name) => match name.parse::<BehaviorClass>() {
                Ok(c) => c,
                Err(e) => {
                    report.push(line, format!("accel: {e}"));
                    continue;
                }
            },
        };
        streams.entry(r.animal_id).or_default().push(Sample {
            line,
            t: r.t_unix,
            xyz: [r.x, r.y, r.z],
            label,
        });
    }

    let mut data = Vec::new();
    let empty = Vec::new();
    for (animal, mut samples) in streams {
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        let Some(dt_med) = median_interval(&samples) else {
            continue;
        };
        let animal_fixes = fixes.get(&animal).unwrap_or(&empty);
        let mut start = 0;
        while start + layout.segment_len <= samples.len() {
            let end = start + layout.segment_len;
            let run = &samples[start..end];
            let broken = run.windows(2).position(|w| {
                let dt = w[1].t - w[0].t;
                w[1].label != w[0].label || dt <= 0.0 || dt > layout.max_gap_factor * dt_med
            });
            if let Some(k) = broken {
                start += k + 1;
                continue;
            }
            let first = &run[0];
            let span = run[run.len() - 1].t - first.t;
            let sample_rate_hz = (run.len() - 1) as f64 / span;
            let t0 = first.t;
            let t1 = t0 + run.len() as f64 / sample_rate_hz;
            let Some(day) = day_of(t0) else {
                report.push(first.line, "accel: timestamp out of range");
                start = end;
                continue;
            };
            let Some(wp) = water.get(&day) else {
                report.push(first.line, format!("no water point recorded for {day}"));
                start = end;
                continue;
            };
            let lo = animal_fixes.partition_point(|f| f.t_unix < t0);
            let hi = animal_fixes.partition_point(|f| f.t_unix < t1);
            let dp = Datapoint {
                animal_id: animal.clone(),
                day,
                label: Some(first.label),
                accel: AccelSegment {
                    sample_rate_hz,
                    t_start_unix: Some(t0),
                    x: run.iter().map(|s| s.xyz[0]).collect(),
                    y: run.iter().map(|s| s.xyz[1]).collect(),
                    z: run.iter().map(|s| s.xyz[2]).collect(),
                },
                gnss: animal_fixes[lo..hi].to_vec(),
                water_point: wp.clone(),
            };
            match dp.validate() {
                Ok(()) => data.push(dp),
                Err(msg) => report.push(first.line, msg),
            }
            start = end;
        }
    }
    Ok((data, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    // 2020-03-23T00:00:00Z
    const T0: f64 = 1_584_921_600.0;

    fn write_dir(accel: &str, gnss: &str, water: &str) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("accel.csv"), accel).unwrap();
        std::fs::write(dir.path().join("gnss.csv"), gnss).unwrap();
        std::fs::write(dir.path().join("water.csv"), water).unwrap();
        dir
    }

    fn accel_stream(animal: &str, n: usize, label_at: impl Fn(usize) -> &'static str) -> String {
        let mut s = String::new();
        for i in 0..n {
            let t = T0 + i as f64 * 0.02;
            writeln!(s, "{animal},{t},{},0.5,-1.0,{}", i as f64 * 0.001, label_at(i)).unwrap();
        }
        s
    }

    #[test]
    fn segments_and_joins_fixes() {
        let accel = format!(
            "animal_id,t_unix,x,y,z,label\n{}",
            accel_stream("h1", 600, |i| if i < 520 { "grazing" } else { "" })
        );
        let mut gnss = String::from("animal_id,t_unix,lat_deg,lon_deg,speed_mps,ehpe_m\n");
        for k in 0..13 {
            writeln!(gnss, "h1,{},-30.6078,151.5442,0.2,6.5", T0 + k as f64).unwrap();
        }
        writeln!(gnss, "h1,{},-30.6078,151.5442,,", T0 + 2.5).unwrap();
        let water = "day,lat_deg,lon_deg\n2020-03-23,-30.6080,151.5440\n";
        let dir = write_dir(&accel, &gnss, water);

        let (data, report) = convert_csv_pair(dir.path(), &CsvPairLayout::default()).unwrap();
        assert!(report.is_empty(), "{report}");
        // 520 labeled samples -> two full 256-sample segments.
        assert_eq!(data.len(), 2);
        let first = &data[0];
        assert_eq!(first.accel.len(), 256);
        assert!((first.accel.sample_rate_hz - 50.0).abs() < 1e-6);
        assert_eq!(first.label, Some(BehaviorClass::Grazing));
        // window [T0, T0 + 5.12): fixes at 0..=5 s plus the one at 2.5 s
        assert_eq!(first.gnss.len(), 7);
        assert!(first.gnss.iter().any(|f| f.speed_mps.is_none()));
        assert_eq!(first.water_point.lat_deg, -30.6080);
    }

    #[test]
    fn label_change_breaks_segment() {
        let accel = format!(
            "animal_id,t_unix,x,y,z,label\n{}",
            accel_stream("h1", 512, |i| if i == 100 { "walking" } else { "resting" })
        );
        let dir = write_dir(
            &accel,
            "animal_id,t_unix,lat_deg,lon_deg,speed_mps,ehpe_m\n",
            "day,lat_deg,lon_deg\n2020-03-23,-30.6,151.5\n",
        );
        let (data, _) = convert_csv_pair(dir.path(), &CsvPairLayout::default()).unwrap();
        // samples 101..357 form the only full run
        assert_eq!(data.len(), 1);
        assert!(data[0].gnss.is_empty());
    }

    #[test]
    fn bad_rows_are_reported() {
        let accel = format!(
            "animal_id,t_unix,x,y,z,label\nh1,{T0},abc,0,0,grazing\nh1,{T0},0,0,0,sleeping\n"
        );
        let dir = write_dir(
            &accel,
            "animal_id,t_unix,lat_deg,lon_deg,speed_mps,ehpe_m\nh1,1,95,0,0,1\n",
            "day,lat_deg,lon_deg\n",
        );
        let (data, report) = convert_csv_pair(dir.path(), &CsvPairLayout::default()).unwrap();
        assert!(data.is_empty());
        let lines: Vec<_> = report.issues.iter().map(|i| i.line).collect();
        assert!(lines.contains(&2) && lines.contains(&3), "{report}");
        assert!(report.to_string().contains("latitude 95"));
    }

    #[test]
    fn missing_water_point_day() {
        let accel = format!(
            "animal_id,t_unix,x,y,z,label\n{}",
            accel_stream("h1", 256, |_| "drinking")
        );
        let dir = write_dir(
            &accel,
            "animal_id,t_unix,lat_deg,lon_deg,speed_mps,ehpe_m\n",
            "day,lat_deg,lon_deg\n2020-03-24,-30.6,151.5\n",
        );
        let (data, report) = convert_csv_pair(dir.path(), &CsvPairLayout::default()).unwrap();
        assert!(data.is_empty());
        assert!(report.issues[0].message.contains("no water point"));
    }
}
