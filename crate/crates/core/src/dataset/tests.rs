use std::fs;
use std::path::{Path, PathBuf};

use super::*;
use crate::error::Error;
use crate::tensor::Tensor;
use crate::training::{CurveRecord, SimilaritySnapshot, TaskType};

const MANIFEST: &str = r#"{"name": "t", "task_type": "regression", "task_names": ["y"], "feature_dim": 2, "num_samples": NUM}"#;

fn write_files(dir: &Path, samples: &[&str]) -> PathBuf {
    let m = dir.join("manifest.json");
    fs::write(&m, MANIFEST.replace("NUM", &samples.len().to_string())).unwrap();
    fs::write(dir.join("samples.jsonl"), samples.join("\n")).unwrap();
    m
}

fn load(samples: &[&str]) -> crate::error::Result<Dataset> {
    let dir = tempfile::tempdir().unwrap();
    load_dataset(&write_files(dir.path(), samples))
}

fn data_location(e: Error) -> String {
    match e {
        Error::Data {
            location: Some(l), ..
        } => l,
        other => panic!("expected located data error, got {other:?}"),
    }
}

#[test]
fn minimal_file_loads_a_single_node() {
    let ds = load(&[r#"{"id": "a", "n": 1, "node_features": [0.5, 1.5], "edges": [], "labels": [2.0]}"#]).unwrap();
    assert_eq!(ds.graphs.len(), 1);
    assert_eq!(ds.graphs[0].num_nodes(), 1);
    assert_eq!(ds.graphs[0].laplacian(), Tensor::scalar(1.0));
}

#[test]
fn edges_are_mirrored() {
    let ds = load(&[r#"{"id": "a", "n": 2, "node_features": [0, 0, 1, 1], "edges": [[0, 1, 1.0]], "labels": [0]}"#]).unwrap();
    let a = ds.graphs[0].adjacency();
    assert_eq!((a[(0, 1)], a[(1, 0)]), (1.0, 1.0));
}

#[test]
fn duplicate_edges_are_summed_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_files(
        dir.path(),
        &[r#"{"id": "a", "n": 2, "node_features": [0, 0, 1, 1], "edges": [[0, 1, 1.0], [1, 0, 0.5]], "labels": [0]}"#],
    );
    let (_, graphs, report) = validate_dataset(&m).unwrap();
    assert!(report.is_ok());
    assert_eq!(report.warnings.len(), 1);
    assert!(report.warnings[0].contains("duplicate edge"));
    assert_eq!(graphs[0].adjacency()[(1, 0)], 1.5);
}

#[test]
fn errors_carry_line_numbers_and_ids() {
    let good = r#"{"id": "a", "n": 1, "node_features": [0, 0], "edges": [], "labels": [1]}"#;
    let e = load(&[good, r#"{"id": "b", "n": 2, "node_features": [0, 0, 1, 1], "edges": [[1, 1, 1.0]], "labels": [0]}"#]).unwrap_err();
    let loc = data_location(e.clone());
    assert!(loc.ends_with(":2 (sample `b`)"), "{loc}");
    assert!(e.to_string().contains("self-loop"));

    let e = load(&[good, "", "{not json"]).unwrap_err();
    assert!(data_location(e).ends_with(":3"));

    let e = load(&[r#"{"id": "c", "n": 1, "node_features": [0, 0], "edges": [], "labels": [1, 2]}"#]).unwrap_err();
    assert!(e.to_string().contains("sample `c`"));
}

#[test]
fn every_invariant_violation_is_rejected() {
    let cases = [
        r#"{"id": "a", "n": 0, "node_features": [], "edges": [], "labels": [1]}"#,
        r#"{"id": "a", "n": 2, "node_features": [0, 0, 1], "edges": [], "labels": [1]}"#,
        r#"{"id": "a", "n": 2, "node_features": [0, 0, 1, 1], "edges": [[0, 2, 1]], "labels": [1]}"#,
        r#"{"id": "a", "n": 2, "node_features": [0, 0, 1, 1], "edges": [[0, 1, -1]], "labels": [1]}"#,
        r#"{"id": "a", "n": 1, "node_features": [0, 0], "edges": [], "labels": [null], "label_mask": [true]}"#,
        r#"{"id": "a", "n": 1, "node_features": [0, 0], "edges": [], "labels": [1], "label_mask": [true, false]}"#,
        r#"{"id": "a", "n": 1, "node_features": [0, 0], "edges": [], "labels": [1], "extra": 3}"#,
        r#"{"id": "a", "n": 2, "node_features": [0, 0, 1, 1], "edges": [[0, 1, 1]], "edge_features": [], "labels": [1]}"#,
    ];
    for c in cases {
        assert!(matches!(load(&[c]), Err(Error::Data { .. })), "{c}");
    }
    let dup = r#"{"id": "a", "n": 1, "node_features": [0, 0], "edges": [], "labels": [1]}"#;
    assert!(load(&[dup, dup]).is_err());
}

#[test]
fn sample_count_must_match_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_files(dir.path(), &[r#"{"id": "a", "n": 1, "node_features": [0, 0], "edges": [], "labels": [1]}"#]);
    fs::write(&m, MANIFEST.replace("NUM", "3")).unwrap();
    assert!(load_dataset(&m).unwrap_err().to_string().contains("declares 3 samples"));
}

#[test]
fn null_labels_are_masked() {
    let ds = load(&[r#"{"id": "a", "n": 1, "node_features": [0, 0], "edges": [], "labels": [null]}"#]).unwrap();
    assert_eq!(ds.graphs[0].label_mask(), &[false]);
}

#[test]
fn classification_labels_must_be_binary() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.json");
    fs::write(
        &m,
        r#"{"name": "c", "task_type": "classification", "task_names": ["a"], "feature_dim": 1, "num_samples": 1}"#,
    )
    .unwrap();
    fs::write(dir.path().join("samples.jsonl"), r#"{"id": "x", "n": 1, "node_features": [1], "edges": [], "labels": [0.5]}"#).unwrap();
    assert!(load_dataset(&m).is_err());
}

#[test]
fn edge_features_are_accepted_and_ignored() {
    let ds = load(&[
        r#"{"id": "a", "n": 2, "node_features": [0, 0, 1, 1], "edges": [[0, 1, 0.5]], "edge_features": [[1, 0, 0, 0, 0, 1]], "labels": [1]}"#,
    ])
    .unwrap();
    assert_eq!(ds.graphs[0].adjacency()[(0, 1)], 0.5);
}

#[test]
fn write_then_load_round_trips() {
    let ds = synthesize_hidden_metric_dataset(12, (1, 6), 3, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = write_dataset(dir.path(), &ds).unwrap();
    let back = load_dataset(&m).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn synthetic_data_is_seeded_and_informative() {
    let a = synthesize_hidden_metric_dataset(40, (3, 8), 4, 9).unwrap();
    let b = synthesize_hidden_metric_dataset(40, (3, 8), 4, 9).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    write_dataset(dirs[0].path(), &a).unwrap();
    write_dataset(dirs[1].path(), &b).unwrap();
    for f in ["manifest.json", "samples.jsonl"] {
        assert_eq!(fs::read(dirs[0].path().join(f)).unwrap(), fs::read(dirs[1].path().join(f)).unwrap());
    }
    let y: Vec<f64> = a.graphs.iter().map(|g| g.labels().unwrap()[0]).collect();
    assert!(y.iter().all(|v| v.is_finite()));
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    assert!(mean.abs() < 1e-12);
    assert!(y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() > 0.0);
    assert!(a.graphs.iter().all(|g| (3..=8).contains(&g.num_nodes())));
    assert!(synthesize_hidden_metric_dataset(5, (4, 2), 3, 1).is_err());
}

#[test]
fn intrinsic_graph_is_the_euclidean_kernel() {
    let ds = synthesize_hidden_metric_dataset(3, (4, 4), 2, 1).unwrap();
    for g in &ds.graphs {
        let expected = kernel_adjacency(g.node_features(), &Tensor::identity(2)).unwrap();
        assert_eq!(g.adjacency(), &expected);
    }
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn curve_writer_examples() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("curves.csv");
    write_curves(&[], &p).unwrap();
    assert_eq!(read(&p), "epoch,split,metric_name,value\n");
    let rec = CurveRecord {
        epoch: 3,
        split: "validation".into(),
        metric_name: "rmse".into(),
        value: 0.1,
    };
    write_curves(std::slice::from_ref(&rec), &p).unwrap();
    assert_eq!(read(&p), "epoch,split,metric_name,value\n3,validation,rmse,0.1\n");
    let first = fs::read(&p).unwrap();
    write_curves(&[rec], &p).unwrap();
    assert_eq!(fs::read(&p).unwrap(), first);
}

#[test]
fn snapshot_writer_examples() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    let snap = SimilaritySnapshot {
        sample_id: "g,1".into(),
        layer: 0,
        epoch: 5,
        matrix: Tensor::identity(3),
    };
    write_snapshot(&snap, &p).unwrap();
    assert_eq!(read(&p), "1,0,0\n0,1,0\n0,0,1\n");
    let meta = snapshot_meta_path(&p);
    assert_eq!(meta.file_name().unwrap(), "s.meta.csv");
    assert_eq!(read(&meta), "sample_id,layer,epoch\n\"g,1\",0,5\n");
}

#[test]
fn results_writer_lists_tasks_then_mean() {
    use crate::training::{CvSummary, MeanStd};
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.csv");
    let s = CvSummary {
        metric_name: "rmse".into(),
        folds: vec![],
        per_task: vec![Some(MeanStd { mean: 0.5, std: 0.25 }), None],
        overall: Some(MeanStd { mean: 0.5, std: 0.25 }),
    };
    write_results(&[("d".into(), "egcn".into(), s)], &["a".into(), "b".into()], &p).unwrap();
    assert_eq!(
        read(&p),
        "dataset,method,task,metric,mean,std\nd,egcn,a,rmse,0.5,0.25\nd,egcn,b,rmse,,\nd,egcn,mean,rmse,0.5,0.25\n"
    );
}

#[test]
fn manifest_requires_tasks_and_features() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.json");
    fs::write(&m, r#"{"name": "t", "task_type": "regression", "task_names": [], "feature_dim": 2, "num_samples": 0}"#).unwrap();
    assert!(matches!(read_manifest(&m), Err(Error::Data { .. })));
    fs::write(&m, r#"{"name": "t", "task_type": "regression", "task_names": ["y"], "feature_dim": 0, "num_samples": 0}"#).unwrap();
    assert!(matches!(read_manifest(&m), Err(Error::Data { .. })));
    assert!(matches!(read_manifest(&dir.path().join("none.json")), Err(Error::Io { .. })));
    let _ = TaskType::Regression;
}
