use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Datapoint, ValidationReport};
use crate::error::{Error, Result};

/// Parses canonical records, one JSON object per line. Blank lines are skipped.
pub fn parse_jsonl_str(text: &str) -> (Vec<Datapoint>, ValidationReport) {
    let mut data = Vec::new();
    let mut report = ValidationReport::default();
    for (i, line) in text.lines().enumerate() {
        accept_line(i + 1, line, &mut data, &mut report);
    }
    (data, report)
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<(Vec<Datapoint>, ValidationReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    let mut report = ValidationReport::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        accept_line(i + 1, &line, &mut data, &mut report);
    }
    Ok((data, report))
}

fn accept_line(
    line_no: usize,
    line: &str,
    data: &mut Vec<Datapoint>,
    report: &mut ValidationReport,
) {
    if line.trim().is_empty() {
        return;
    }
    match serde_json::from_str::<Datapoint>(line) {
        Ok(dp) => match dp.validate() {
            Ok(()) => data.push(dp),
            Err(msg) => report.push(line_no, msg),
        },
        Err(e) => report.push(line_no, format!("malformed record: {e}")),
    }
}

pub fn write_jsonl<W: Write>(mut out: W, data: &[Datapoint]) -> Result<()> {
    for dp in data {
        let line = serde_json::to_string(dp).map_err(|e| Error::Format(e.to_string()))?;
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

pub fn save_jsonl(path: impl AsRef<Path>, data: &[Datapoint]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_jsonl(&mut out, data)?;
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::tests::datapoint;
    use crate::ingest::BehaviorClass;

    fn to_text(data: &[Datapoint]) -> String {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, data).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn three_records() {
        let data: Vec<_> = (0..3)
            .map(|i| datapoint(&format!("cow{i}"), Some(BehaviorClass::Resting), 2))
            .collect();
        let (parsed, report) = parse_jsonl_str(&to_text(&data));
        assert!(report.is_empty(), "{report}");
        assert_eq!(parsed, data);
    }

    #[test]
    fn short_axis_is_reported_not_fatal() {
        let mut good = datapoint("a", None, 1);
        good.accel.x = vec![0.0; 256];
        good.accel.y = vec![0.0; 256];
        good.accel.z = vec![0.0; 256];
        let mut bad = good.clone();
        bad.accel.x.pop();
        let text = to_text(&[good.clone(), bad, good]);
        let (parsed, report) = parse_jsonl_str(&text);
        assert_eq!(parsed.len(), 2);
        assert_eq!(report.len(), 1);
        assert_eq!(report.issues[0].line, 2);
        assert!(report.issues[0].message.contains("axis length mismatch"));
    }

    #[test]
    fn garbage_and_bad_labels() {
        let text = "{not json}\n\n{\"animal_id\":\"a\",\"day\":\"2020-03-23\",\"label\":\"sleeping\",\
                    \"accel\":{\"sample_rate_hz\":50,\"x\":[0,0],\"y\":[0,0],\"z\":[0,0]},\
                    \"gnss\":[],\"water_point\":{\"lat_deg\":0,\"lon_deg\":0}}\n";
        let (parsed, report) = parse_jsonl_str(text);
        assert!(parsed.is_empty());
        assert_eq!(report.issues.iter().map(|i| i.line).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn null_label_and_missing_fix_fields() {
        let text = "{\"animal_id\":\"a\",\"day\":\"2020-03-23\",\"label\":null,\
                    \"accel\":{\"sample_rate_hz\":62.5,\"x\":[1,2],\"y\":[3,4],\"z\":[5,6]},\
                    \"gnss\":[{\"lat_deg\":-30.6,\"lon_deg\":151.5,\"t_unix\":1}],\
                    \"water_point\":{\"lat_deg\":-30.6,\"lon_deg\":151.5}}";
        let (parsed, report) = parse_jsonl_str(text);
        assert!(report.is_empty(), "{report}");
        assert_eq!(parsed[0].label, None);
        assert_eq!(parsed[0].gnss[0].speed_mps, None);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = read_jsonl("/nonexistent/dir/data.jsonl").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
