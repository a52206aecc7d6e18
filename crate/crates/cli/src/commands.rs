use std::path::{Path, PathBuf};

use agfusion_core::eval::{complexity_table, mcc_table_csv, ops_table_csv};
use agfusion_core::fusion::extract_rows;
use agfusion_core::ingest::{parse_dataset, save_jsonl};
use agfusion_core::{
    ablate_gnss, count_ops_profile, gen_behavior_like, loao_cv, predict_with_fallback, train_pipeline,
    BehaviorClass, BehaviorSpec, CvResult, DatasetFormat, DatasetProfile, Datapoint, FusionModel, GnssFeatureSet,
    MccReport, Pipeline,
};
use anyhow::{bail, Context, Result};

use crate::config::RunConfig;
use crate::output::{emit, read_json, sidecar, write_json, write_meta, write_text};
use crate::DatasetArgs;

/// Loads the dataset. Rejected records are written to `report_path`; unless
/// `--skip-invalid` is set they abort the command.
fn load(cfg: &RunConfig, args: &DatasetArgs, report_path: &Path) -> Result<Vec<Datapoint>> {
    let path = args
        .dataset
        .clone()
        .or_else(|| cfg.dataset.clone())
        .context("no dataset given (use --dataset or `dataset` in the config file)")?;
    let format = args.format.unwrap_or(if path.is_dir() {
        DatasetFormat::CsvPair
    } else {
        DatasetFormat::CanonicalJsonl
    });
    let (data, report) = parse_dataset(&path, format)?;
    if !report.is_empty() {
        write_text(report_path, &report.to_string())?;
        if !args.skip_invalid {
            bail!(
                "{} invalid record(s) in {}; report written to {}",
                report.len(),
                path.display(),
                report_path.display()
            );
        }
        eprintln!(
            "warning: skipped {} invalid record(s); report written to {}",
            report.len(),
            report_path.display()
        );
    }
    eprintln!("loaded {} datapoints from {}", data.len(), path.display());
    Ok(data)
}

pub fn convert(cfg: &RunConfig, data: &DatasetArgs, out: &Path) -> Result<()> {
    let dps = load(cfg, data, &sidecar(out, "validation.txt"))?;
    save_jsonl(out, &dps)?;
    write_meta(out, false, "convert", cfg.cv.jobs)
}

/// Shortest round-trip form, with exponent notation for very small values.
fn num(v: f64) -> String {
    serde_json::Number::from_f64(v).map(|n| n.to_string()).unwrap_or_else(|| v.to_string())
}

fn fmt_opt(v: Option<&f64>) -> String {
    v.map(|x| num(*x)).unwrap_or_default()
}

pub fn features(cfg: &RunConfig, data: &DatasetArgs, out: &Path) -> Result<()> {
    let dps = load(cfg, data, &sidecar(out, "validation.txt"))?;
    let model = &cfg.cv.model;
    let rows = extract_rows(&dps, &model.accel, &model.gnss);
    let accel_names = model.accel.feature_names();
    let gnss_names = model.gnss.feature_names();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["animal_id".to_string(), "day".into(), "label".into()];
    header.extend(accel_names.iter().cloned());
    header.extend(gnss_names.iter().cloned());
    w.write_record(&header)?;
    for (dp, row) in dps.iter().zip(&rows) {
        let mut rec = vec![
            dp.animal_id.clone(),
            dp.day.to_string(),
            dp.label.map(|l| l.name().to_string()).unwrap_or_default(),
        ];
        for (i, _) in accel_names.iter().enumerate() {
            rec.push(fmt_opt(row.accel.as_ref().map(|v| &v[i])));
        }
        for (i, _) in gnss_names.iter().enumerate() {
            rec.push(fmt_opt(row.gnss.as_ref().map(|v| &v[i])));
        }
        w.write_record(&rec)?;
    }
    write_text(out, &String::from_utf8(w.into_inner()?)?)?;
    eprintln!(
        "wrote {} feature rows ({} + {} columns) to {}",
        rows.len(),
        accel_names.len(),
        gnss_names.len(),
        out.display()
    );
    write_meta(out, false, "features", cfg.cv.jobs)
}

pub fn train(cfg: &RunConfig, data: &DatasetArgs, out: &Path) -> Result<()> {
    let dps = load(cfg, data, &sidecar(out, "validation.txt"))?;
    let rows = extract_rows(&dps, &cfg.cv.model.accel, &cfg.cv.model.gnss);
    let model = train_pipeline(&rows, cfg.cv.pipeline, &cfg.cv.model, cfg.cv.base_seed)?;
    for c in model.classifiers() {
        if let Some(t) = &c.training {
            eprintln!(
                "{}: {} after {} iterations, loss {:.6} on {} samples",
                c.schema_id, t.status, t.iterations, t.final_loss, t.samples
            );
        }
    }
    write_json(out, &model)?;
    write_meta(out, false, "train", cfg.cv.jobs)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .out
        .clone()
        .context("no output directory given (use --out or `out` in the config file)")?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

/// The effective configuration, minus settings that cannot change results.
fn save_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let mut c = cfg.clone();
    c.cv.jobs = None;
    c.out = None;
    write_json(&dir.join("config.json"), &c)
}

fn column_label(r: &CvResult) -> String {
    let label = r.pipeline.label();
    if r.gnss_features == GnssFeatureSet::ALL || r.pipeline == Pipeline::Acc {
        label.to_string()
    } else {
        format!("{label}[{}]", r.gnss_features)
    }
}

fn summarize(r: &CvResult) {
    let overall = r.report.overall_summary().map(|s| s.render()).unwrap_or_default();
    let fallbacks: usize = r.folds.iter().map(|f| f.fallbacks).sum();
    eprintln!(
        "{} [{}]: overall MCC {} over {} repeat(s); {} datapoints evaluated, {} skipped, {} fallbacks",
        r.pipeline, r.gnss_features, overall, r.report.repeats, r.evaluated, r.skipped, fallbacks
    );
}

pub fn cv(cfg: &RunConfig, data: &DatasetArgs) -> Result<()> {
    let dir = out_dir(cfg)?;
    let dps = load(cfg, data, &dir.join("validation_report.txt"))?;
    let result = loao_cv(&dps, &cfg.cv)?;
    summarize(&result);
    write_json(&dir.join("result.json"), &result)?;
    write_text(&dir.join("mcc.csv"), &mcc_table_csv(&[(column_label(&result), &result.report)])?)?;
    save_config(&dir, cfg)?;
    write_meta(&dir, true, "cv", cfg.cv.jobs)
}

pub fn ablate(cfg: &RunConfig, data: &DatasetArgs, subsets: &[GnssFeatureSet]) -> Result<()> {
    let dir = out_dir(cfg)?;
    let dps = load(cfg, data, &dir.join("validation_report.txt"))?;
    let subsets = if subsets.is_empty() {
        GnssFeatureSet::ablation_order()
    } else {
        subsets.to_vec()
    };
    let results = ablate_gnss(&dps, &cfg.cv, &subsets)?;
    results.iter().for_each(summarize);
    write_json(&dir.join("ablation.json"), &results)?;
    write_text(&dir.join("ablation.csv"), &ablation_csv(&results)?)?;
    save_config(&dir, cfg)?;
    write_meta(&dir, true, "ablate", cfg.cv.jobs)
}

fn ablation_csv(results: &[CvResult]) -> Result<String> {
    let cols: Vec<(String, &MccReport)> = results
        .iter()
        .map(|r| (r.gnss_features.to_string(), &r.report))
        .collect();
    Ok(mcc_table_csv(&cols)?)
}

pub fn infer(cfg: &RunConfig, model_path: &Path, data: &DatasetArgs, out: &Path) -> Result<()> {
    let model: FusionModel = read_json(model_path)?;
    model.validate()?;
    let dps = load(cfg, data, &sidecar(out, "validation.txt"))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "index",
        "animal_id",
        "day",
        "label",
        "predicted",
        "gnss_absent",
        "accel_absent",
        "error",
    ]
    .map(String::from)
    .to_vec();
    header.extend(BehaviorClass::ALL.iter().map(|c| format!("p_{}", c.name())));
    w.write_record(&header)?;

    let (mut failed, mut fallbacks) = (0, 0);
    for (i, dp) in dps.iter().enumerate() {
        let mut rec = vec![
            i.to_string(),
            dp.animal_id.clone(),
            dp.day.to_string(),
            dp.label.map(|l| l.name().to_string()).unwrap_or_default(),
        ];
        match predict_with_fallback(&model, dp) {
            Ok(p) => {
                fallbacks += usize::from(p.status.gnss_absent || p.status.accel_absent);
                let name = BehaviorClass::from_code(p.class).map_or("", |c| c.name());
                rec.extend([
                    name.to_string(),
                    p.status.gnss_absent.to_string(),
                    p.status.accel_absent.to_string(),
                    String::new(),
                ]);
                rec.extend(p.posterior.iter().map(|v| num(*v)));
            }
            Err(e) => {
                failed += 1;
                rec.extend([String::new(), String::new(), String::new(), e.to_string()]);
                rec.extend(std::iter::repeat_n(String::new(), BehaviorClass::ALL.len()));
            }
        }
        w.write_record(&rec)?;
    }
    write_text(out, &String::from_utf8(w.into_inner()?)?)?;
    write_meta(out, false, "infer", cfg.cv.jobs)?;
    eprintln!(
        "classified {} of {} datapoints ({} via single-mode fallback)",
        dps.len() - failed,
        dps.len(),
        fallbacks
    );
    if failed > 0 {
        bail!("{failed} datapoint(s) could not be classified; see the error column of {}", out.display());
    }
    Ok(())
}

pub fn count_ops(
    pipeline: Option<Pipeline>,
    profile: Option<DatasetProfile>,
    model: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let cols = if let Some(path) = model {
        let m: FusionModel = read_json(path)?;
        m.validate()?;
        vec![(m.pipeline().label().to_string(), agfusion_core::count_ops(&m))]
    } else {
        match (pipeline, profile) {
            (None, None) => complexity_table(),
            (Some(Pipeline::Gnss), _) => vec![("GNSS".into(), count_ops_profile(Pipeline::Gnss, DatasetProfile::Arm20c))],
            (Some(p), Some(d)) => vec![(format!("{}/{}", d.name(), p.label()), count_ops_profile(p, d))],
            (Some(p), None) => [DatasetProfile::Arm20c, DatasetProfile::Arm20e]
                .into_iter()
                .map(|d| (format!("{}/{}", d.name(), p.label()), count_ops_profile(p, d)))
                .collect(),
            (None, Some(d)) => std::iter::once(("GNSS".to_string(), count_ops_profile(Pipeline::Gnss, d)))
                .chain(
                    [Pipeline::Acc, Pipeline::Fc, Pipeline::Pf]
                        .into_iter()
                        .map(|p| (format!("{}/{}", d.name(), p.label()), count_ops_profile(p, d))),
                )
                .collect(),
        }
    };
    emit(out, &ops_table_csv(&cols)?)
}


pub fn synth(preset: &str, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut spec = BehaviorSpec::preset(preset)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let data = gen_behavior_like(&spec)?;
    save_jsonl(out, &data)?;
    eprintln!(
        "wrote {} synthetic datapoints ({} animals) to {}",
        data.len(),
        spec.animals,
        out.display()
    );
    write_meta(out, false, "synth", None)
}

pub fn report(runs: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut results: Vec<(String, CvResult)> = Vec::new();
    for dir in runs {
        let single = dir.join("result.json");
        let ablation = dir.join("ablation.json");
        if single.exists() {
            let r: CvResult = read_json(&single)?;
            results.push((column_label(&r), r));
        } else if ablation.exists() {
            let rs: Vec<CvResult> = read_json(&ablation)?;
            results.extend(rs.into_iter().map(|r| (r.gnss_features.to_string(), r)));
        } else {
            bail!("{} holds neither result.json nor ablation.json", dir.display());
        }
    }
    let cols: Vec<(String, &MccReport)> = results.iter().map(|(n, r)| (n.clone(), &r.report)).collect();
    emit(out, &mcc_table_csv(&cols)?)
}
