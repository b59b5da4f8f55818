use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use egcn_core::dataset::{
    load_dataset, synthesize_hidden_metric_dataset, validate_dataset, write_ablation, write_curves, write_dataset,
    write_results, write_snapshot, Dataset,
};
use egcn_core::training::{
    ablate, cross_validate, cross_validate_with, split_validation, train, train_observed, MeanPredictor,
    SnapshotRecorder, TrainConfig,
};

use crate::config::effective_config;
use crate::{CliError, RunArgs};

pub struct Run<'a> {
    pub verb: &'static str,
    pub args: &'a RunArgs,
    pub data: &'a Path,
}

struct Prepared {
    config: TrainConfig,
    dataset: Dataset,
    out_dir: PathBuf,
}

fn prepare(run: &Run) -> Result<Prepared, CliError> {
    let config = effective_config(run.args.config.as_deref(), &run.args.overrides)?;
    let dataset = load_dataset(run.data)?;
    config.build_model(dataset.manifest.feature_dim, dataset.manifest.task_names.len())?;
    if config.task_type != dataset.manifest.task_type {
        return Err(CliError::Usage(format!(
            "config task_type {:?} does not match dataset `{}` ({:?})",
            config.task_type, dataset.manifest.name, dataset.manifest.task_type
        )));
    }
    let out_dir = run.args.out_dir.clone();
    fs::create_dir_all(&out_dir).map_err(|e| io_error(&out_dir, e))?;
    Ok(Prepared {
        config,
        dataset,
        out_dir,
    })
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(egcn_core::Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

/// Records everything needed to repeat the run.
fn write_run_manifest(out_dir: &Path, verb: &str, extra: Value, outputs: &[PathBuf]) -> Result<(), CliError> {
    let outputs: Vec<String> = outputs
        .iter()
        .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned()))
        .collect();
    let mut manifest = json!({
        "tool": "egcn",
        "version": env!("CARGO_PKG_VERSION"),
        "command": verb,
        "parallel_build": egcn_core::parallel::is_parallel(),
        "outputs": outputs,
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut manifest, extra) {
        m.extend(e);
    }
    write_json(&out_dir.join("run_manifest.json"), &manifest)
}

fn data_fields(run: &Run, p: &Prepared) -> Value {
    json!({
        "data": run.data.display().to_string(),
        "dataset": p.dataset.manifest.name,
        "effective_config": p.config,
    })
}

pub fn train_cmd(run: &Run) -> Result<(), CliError> {
    let p = prepare(run)?;
    let (tr, va) = split_validation(&p.dataset.graphs, p.config.validation_fraction, p.config.seed);
    let report = train(&tr, &va, &p.config)?;
    let curves = p.out_dir.join("curves.csv");
    write_curves(&report.curves, &curves)?;
    let chunk = p.config.batch_size;
    let train_eval = report.trained.evaluate(&tr, chunk)?;
    let val_eval = if va.is_empty() {
        None
    } else {
        Some(report.trained.evaluate(&va, chunk)?)
    };
    let metrics = p.out_dir.join("metrics.json");
    write_json(
        &metrics,
        &json!({
            "metric": p.config.task_type.metric_name(),
            "train_size": tr.len(),
            "validation_size": va.len(),
            "iterations": report.iterations,
            "train": train_eval,
            "validation": val_eval,
        }),
    )?;
    let model = p.out_dir.join("model.json");
    write_json(&model, &serde_json::to_value(&report.trained).expect("model serializes"))?;
    write_run_manifest(&p.out_dir, run.verb, data_fields(run, &p), &[curves, metrics, model])?;

    let metric = p.config.task_type.metric_name();
    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"));
    println!(
        "trained {} epochs ({} iterations) on {} graphs",
        p.config.max_epochs,
        report.iterations,
        tr.len()
    );
    println!("train loss {} {metric} {}", show(train_eval.loss), show(train_eval.metric.mean));
    if let Some(v) = &val_eval {
        println!("validation loss {} {metric} {}", show(v.loss), show(v.metric.mean));
    }
    println!("wrote {}", p.out_dir.display());
    Ok(())
}

pub fn cv_cmd(run: &Run) -> Result<(), CliError> {
    let p = prepare(run)?;
    let graphs = &p.dataset.graphs;
    let egcn = cross_validate(graphs, &p.config)?;
    let baseline = cross_validate_with(graphs, &p.config, |tr, _| MeanPredictor::fit(tr))?;
    let name = p.dataset.manifest.name.clone();
    let results = p.out_dir.join("results.csv");
    let rows = vec![
        (name.clone(), "egcn".to_string(), egcn.clone()),
        (name, "mean_baseline".to_string(), baseline.clone()),
    ];
    write_results(&rows, &p.dataset.manifest.task_names, &results)?;
    let mut extra = data_fields(run, &p);
    extra["folds"] = json!(egcn.folds);
    write_run_manifest(&p.out_dir, run.verb, extra, &[results])?;
    for (method, s) in [("egcn", &egcn), ("mean_baseline", &baseline)] {
        match &s.overall {
            Some(m) => println!("{method}: {} {:.6} ± {:.3e} over {} folds", s.metric_name, m.mean, m.std, s.folds.len()),
            None => println!("{method}: {} unavailable", s.metric_name),
        }
    }
    Ok(())
}

pub fn ablate_cmd(run: &Run, seeds: u64) -> Result<(), CliError> {
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let p = prepare(run)?;
    let (tr, va) = split_validation(&p.dataset.graphs, p.config.validation_fraction, p.config.seed);
    if va.is_empty() {
        return Err(CliError::Usage("ablation needs a validation split; raise validation_fraction".into()));
    }
    let seed_list: Vec<u64> = (0..seeds).map(|i| p.config.seed + i).collect();
    let rows = ablate(&tr, &va, &p.config, &seed_list)?;
    let table = p.out_dir.join("ablation.csv");
    write_ablation(&rows, &table)?;
    let mut extra = data_fields(run, &p);
    extra["seeds"] = json!(seed_list);
    write_run_manifest(&p.out_dir, run.verb, extra, &[table])?;
    let wins = rows.iter().filter(|r| r.evolving_wins()).count();
    println!("evolving beats frozen in {wins}/{} seeds", rows.len());
    for r in &rows {
        println!(
            "seed {}: evolving {:.6} frozen {:.6} epochs_to_match {}",
            r.seed,
            r.evolving.final_validation,
            r.frozen.final_validation,
            r.epochs_to_match().map_or_else(|| "-".to_string(), |e| e.to_string())
        );
    }
    Ok(())
}

pub fn inspect_cmd(run: &Run, sample: Option<&str>, layer: usize, epochs: &[usize]) -> Result<(), CliError> {
    let p = prepare(run)?;
    let graph = match sample {
        Some(id) => p.dataset.graphs.iter().find(|g| g.id() == id).ok_or_else(|| {
            CliError::Usage(format!("dataset `{}` has no sample `{id}`", p.dataset.manifest.name))
        })?,
        None => p
            .dataset
            .graphs
            .first()
            .ok_or_else(|| CliError::Usage("dataset is empty".into()))?,
    };
    let sgc_layers = p
        .config
        .architecture
        .iter()
        .filter(|s| matches!(s, egcn_core::nn::LayerSpec::SgcLl { .. }))
        .count();
    if layer >= sgc_layers {
        return Err(CliError::Usage(format!(
            "--layer {layer} out of range: the architecture has {sgc_layers} sgc_ll layers"
        )));
    }
    if let Some(&e) = epochs.iter().find(|&&e| e > p.config.max_epochs) {
        return Err(CliError::Usage(format!(
            "--epochs {e} exceeds max_epochs {}",
            p.config.max_epochs
        )));
    }
    let (tr, va) = split_validation(&p.dataset.graphs, p.config.validation_fraction, p.config.seed);
    let mut recorder = SnapshotRecorder::new(graph.clone(), layer, epochs.iter().copied());
    let report = train_observed(&tr, &va, &p.config, &mut recorder)?;
    let mut outputs = Vec::new();
    for s in &recorder.snapshots {
        let path = p.out_dir.join(format!("snapshot_layer{}_epoch{}.csv", s.layer, s.epoch));
        write_snapshot(s, &path)?;
        outputs.push(egcn_core::dataset::snapshot_meta_path(&path));
        outputs.push(path);
    }
    let curves = p.out_dir.join("curves.csv");
    write_curves(&report.curves, &curves)?;
    outputs.push(curves);
    let mut extra = data_fields(run, &p);
    extra["sample"] = json!(graph.id());
    extra["layer"] = json!(layer);
    extra["epochs"] = json!(epochs);
    write_run_manifest(&p.out_dir, run.verb, extra, &outputs)?;
    println!(
        "wrote {} similarity snapshots of sample `{}` to {}",
        recorder.snapshots.len(),
        graph.id(),
        p.out_dir.display()
    );
    Ok(())
}

/// Prints the lint report; returns whether the data is clean.
pub fn validate_cmd(data: &Path) -> Result<bool, CliError> {
    let (manifest, _, report) = validate_dataset(data)?;
    for e in &report.errors {
        println!("error: {e}");
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    println!(
        "{}: {} samples, {} errors, {} warnings",
        manifest.name,
        report.samples,
        report.errors.len(),
        report.warnings.len()
    );
    Ok(report.is_ok())
}

pub struct SynthArgs {
    pub samples: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub dim: usize,
    pub seed: u64,
}

pub fn synth_cmd(out_dir: &Path, a: &SynthArgs) -> Result<(), CliError> {
    let ds = synthesize_hidden_metric_dataset(a.samples, (a.min_nodes, a.max_nodes), a.dim, a.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let manifest = write_dataset(out_dir, &ds)?;
    write_run_manifest(
        out_dir,
        "synth-data",
        json!({
            "synth": {
                "samples": a.samples,
                "min_nodes": a.min_nodes,
                "max_nodes": a.max_nodes,
                "dim": a.dim,
                "seed": a.seed,
            }
        }),
        &[manifest.clone(), out_dir.join(&ds.manifest.samples_file)],
    )?;
    println!("wrote {} samples to {}", ds.graphs.len(), manifest.display());
    Ok(())
}
