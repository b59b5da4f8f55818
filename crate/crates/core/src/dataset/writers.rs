use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::training::{CurveRecord, CvSummary, SimilaritySnapshot};

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: csv::Writer<fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Shortest representation that reads back to the same `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v}")
}

/// `epoch,split,metric_name,value`.
pub fn write_curves(records: &[CurveRecord], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let io = |e: csv::Error| Error::io(path, e);
    w.write_record(["epoch", "split", "metric_name", "value"]).map_err(io)?;
    for r in records {
        w.write_record([
            r.epoch.to_string(),
            r.split.clone(),
            r.metric_name.clone(),
            format_value(r.value),
        ])
        .map_err(io)?;
    }
    finish(path, w)
}

/// Path of the metadata file that accompanies a snapshot.
pub fn snapshot_meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(".meta.csv");
    path.with_file_name(name)
}

/// Square numeric CSV without a header, plus `<stem>.meta.csv` holding
/// `sample_id,layer,epoch`.
pub fn write_snapshot(snapshot: &SimilaritySnapshot, path: &Path) -> Result<()> {
    let m = &snapshot.matrix;
    if m.rows() != m.cols() {
        return Err(Error::structural(format!("snapshot matrix is {:?}, not square", m.shape())));
    }
    let io = |e: csv::Error| Error::io(path, e);
    let mut w = writer(path)?;
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|&v| format_value(v))).map_err(io)?;
    }
    finish(path, w)?;

    let meta = snapshot_meta_path(path);
    let io = |e: csv::Error| Error::io(&meta, e);
    let mut w = writer(&meta)?;
    w.write_record(["sample_id", "layer", "epoch"]).map_err(io)?;
    w.write_record([
        snapshot.sample_id.clone(),
        snapshot.layer.to_string(),
        snapshot.epoch.to_string(),
    ])
    .map_err(io)?;
    finish(&meta, w)
}

/// `dataset,method,task,metric,mean,std`: one row per task plus a `mean`
/// row for the task average.
pub fn write_results(rows: &[(String, String, CvSummary)], task_names: &[String], path: &Path) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, e);
    let mut w = writer(path)?;
    w.write_record(["dataset", "method", "task", "metric", "mean", "std"]).map_err(io)?;
    for (dataset, method, summary) in rows {
        let mut emit = |task: &str, ms: Option<crate::training::MeanStd>| {
            let (mean, std) = ms.map_or((String::new(), String::new()), |m| (format_value(m.mean), format_value(m.std)));
            w.write_record([
                dataset.as_str(),
                method.as_str(),
                task,
                summary.metric_name.as_str(),
                &mean,
                &std,
            ])
        };
        for (t, ms) in summary.per_task.iter().enumerate() {
            let name = task_names.get(t).cloned().unwrap_or_else(|| format!("task{t}"));
            emit(&name, *ms).map_err(io)?;
        }
        emit("mean", summary.overall).map_err(io)?;
    }
    finish(path, w)
}

/// `seed,evolving_validation,frozen_validation,evolving_wins,epochs_to_match,match_fraction`.
pub fn write_ablation(rows: &[crate::training::AblationRow], path: &Path) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, e);
    let mut w = writer(path)?;
    w.write_record([
        "seed",
        "evolving_validation",
        "frozen_validation",
        "evolving_wins",
        "epochs_to_match",
        "match_fraction",
    ])
    .map_err(io)?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            format_value(r.evolving.final_validation),
            format_value(r.frozen.final_validation),
            r.evolving_wins().to_string(),
            r.epochs_to_match().map(|e| e.to_string()).unwrap_or_default(),
            r.match_fraction().map(format_value).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    finish(path, w)
}
