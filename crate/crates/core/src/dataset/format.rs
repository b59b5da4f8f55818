use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::parallel;
use crate::tensor::Tensor;
use crate::training::TaskType;

/// Describes a dataset; the samples live in a JSON Lines file next to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub task_type: TaskType,
    pub task_names: Vec<String>,
    pub feature_dim: usize,
    pub num_samples: usize,
    /// Advisory bound on node degree; exceeding it only warns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_degree: Option<usize>,
    /// Samples file, relative to the manifest.
    #[serde(default = "default_samples_file")]
    pub samples_file: String,
}

fn default_samples_file() -> String {
    "samples.jsonl".into()
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::data(Some("manifest".into()), "feature_dim must be at least 1"));
        }
        if self.task_names.is_empty() {
            return Err(Error::data(Some("manifest".into()), "task_names must not be empty"));
        }
        Ok(())
    }
}

/// One line of the samples file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub n: usize,
    /// `n × feature_dim`, row-major.
    pub node_features: Vec<f64>,
    /// `[i, j, weight]`; each undirected edge once.
    pub edges: Vec<(usize, usize, f64)>,
    /// Accepted for compatibility, not used by the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_features: Option<Vec<Vec<f64>>>,
    /// `null` marks a missing label.
    pub labels: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_mask: Option<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub graphs: Vec<Graph>,
}

/// Outcome of checking a dataset without stopping at the first problem.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<Error>,
    pub warnings: Vec<String>,
    pub samples: usize,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

fn samples_path(manifest_path: &Path, manifest: &DatasetManifest) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.samples_file)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| {
        Error::data(
            Some(format!("{}:{}:{}", path.display(), e.line(), e.column())),
            e.to_string(),
        )
    })?;
    manifest.validate().map_err(|e| match e {
        Error::Data { message, .. } => Error::data(Some(path.display().to_string()), message),
        other => other,
    })?;
    Ok(manifest)
}

/// Builds a graph from one parsed line. Returns the graph and any warnings.
pub fn sample_to_graph(rec: &SampleRecord, manifest: &DatasetManifest) -> std::result::Result<(Graph, Vec<String>), String> {
    let d = manifest.feature_dim;
    let n = rec.n;
    let mut warnings = Vec::new();
    if n == 0 {
        return Err("graph needs at least one node (n = 0)".into());
    }
    if rec.node_features.len() != n * d {
        return Err(format!(
            "node_features has {} values, expected n·d = {n}·{d} = {}",
            rec.node_features.len(),
            n * d
        ));
    }
    if let Some(k) = rec.node_features.iter().position(|v| !v.is_finite()) {
        return Err(format!("node feature {k} is not finite"));
    }
    let mut a = Tensor::zeros(n, n);
    for (k, &(i, j, w)) in rec.edges.iter().enumerate() {
        if i >= n || j >= n {
            return Err(format!("edge {k} [{i}, {j}] references a node outside 0..{n}"));
        }
        if i == j {
            return Err(format!("edge {k} is a self-loop on node {i}"));
        }
        if !w.is_finite() || w < 0.0 {
            return Err(format!("edge {k} [{i}, {j}] has invalid weight {w}"));
        }
        if a[(i, j)] != 0.0 {
            warnings.push(format!("duplicate edge [{i}, {j}]: weights summed"));
        }
        a[(i, j)] += w;
        a[(j, i)] = a[(i, j)];
    }
    if let Some(ef) = &rec.edge_features {
        if ef.len() != rec.edges.len() {
            return Err(format!(
                "edge_features has {} rows for {} edges",
                ef.len(),
                rec.edges.len()
            ));
        }
    }
    let t = manifest.task_names.len();
    if rec.labels.len() != t {
        return Err(format!("sample `{}` has {} labels, manifest declares {t} tasks", rec.id, rec.labels.len()));
    }
    let mask = match &rec.label_mask {
        Some(m) if m.len() != t => {
            return Err(format!("sample `{}` has {} label_mask entries for {t} tasks", rec.id, m.len()));
        }
        Some(m) => m.clone(),
        None => rec.labels.iter().map(Option::is_some).collect(),
    };
    let mut labels = Vec::with_capacity(t);
    for (k, (l, &m)) in rec.labels.iter().zip(&mask).enumerate() {
        match (l, m) {
            (None, true) => return Err(format!("sample `{}` task {k} is unmasked but its label is null", rec.id)),
            (Some(v), true) if manifest.task_type == TaskType::Classification && *v != 0.0 && *v != 1.0 => {
                return Err(format!("sample `{}` task {k} has classification label {v}", rec.id));
            }
            _ => labels.push(if m { l.unwrap_or(0.0) } else { 0.0 }),
        }
    }
    let x = Tensor::from_vec(n, d, rec.node_features.clone()).map_err(|e| e.to_string())?;
    let g = Graph::new(rec.id.clone(), x, a, Some(labels), Some(mask)).map_err(|e| e.to_string())?;
    if let Some(limit) = manifest.max_degree {
        if g.max_degree() > limit {
            warnings.push(format!("max degree {} exceeds manifest hint {limit}", g.max_degree()));
        }
    }
    Ok((g, warnings))
}

fn locate(file: &Path, line: usize, id: Option<&str>) -> String {
    match id {
        Some(id) => format!("{}:{line} (sample `{id}`)", file.display()),
        None => format!("{}:{line}", file.display()),
    }
}

/// Parses and checks every line, collecting all problems.
pub fn validate_dataset(manifest_path: &Path) -> Result<(DatasetManifest, Vec<Graph>, ValidationReport)> {
    let manifest = read_manifest(manifest_path)?;
    let path = samples_path(manifest_path, &manifest);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect();

    let parsed = parallel::map_slice(&lines, |&(line, content)| {
        let rec: SampleRecord = serde_json::from_str(content)
            .map_err(|e| Error::data(Some(locate(&path, line, None)), format!("malformed sample: {e}")))?;
        sample_to_graph(&rec, &manifest)
            .map(|(g, w)| (line, g, w))
            .map_err(|m| Error::data(Some(locate(&path, line, Some(&rec.id))), m))
    });

    let mut report = ValidationReport::default();
    let mut graphs = Vec::with_capacity(parsed.len());
    let mut seen = HashSet::new();
    for item in parsed {
        match item {
            Ok((line, g, warnings)) => {
                for w in warnings {
                    report.warnings.push(format!("{}: {w}", locate(&path, line, Some(g.id()))));
                }
                if !seen.insert(g.id().to_string()) {
                    report.errors.push(Error::data(
                        Some(locate(&path, line, Some(g.id()))),
                        "duplicate sample id",
                    ));
                    continue;
                }
                graphs.push(g);
            }
            Err(e) => report.errors.push(e),
        }
    }
    let total = lines.len();
    if total != manifest.num_samples {
        report.errors.push(Error::data(
            Some(manifest_path.display().to_string()),
            format!("manifest declares {} samples, file has {total}", manifest.num_samples),
        ));
    }
    report.samples = total;
    Ok((manifest, graphs, report))
}

/// Loads a dataset, failing on the first error in file order. Warnings go to
/// the log.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let (manifest, graphs, report) = validate_dataset(manifest_path)?;
    if let Some(e) = report.errors.into_iter().next() {
        return Err(e);
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(Dataset { manifest, graphs })
}

pub fn graph_to_sample(g: &Graph) -> SampleRecord {
    let n = g.num_nodes();
    let a = g.adjacency();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if a[(i, j)] != 0.0 {
                edges.push((i, j, a[(i, j)]));
            }
        }
    }
    let mask = g.label_mask().to_vec();
    let labels = match g.labels() {
        Some(l) => l.iter().zip(&mask).map(|(&v, &m)| m.then_some(v)).collect(),
        None => Vec::new(),
    };
    SampleRecord {
        id: g.id().to_string(),
        n,
        node_features: g.node_features().data().to_vec(),
        edges,
        edge_features: None,
        labels,
        label_mask: Some(mask),
    }
}

/// Writes `manifest.json` and the samples file into `dir`. Returns the
/// manifest path.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join("manifest.json");
    let mut manifest = dataset.manifest.clone();
    manifest.num_samples = dataset.graphs.len();
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::io(&manifest_path, e))?;
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    let samples = dir.join(&manifest.samples_file);
    let file = fs::File::create(&samples).map_err(|e| Error::io(&samples, e))?;
    let mut out = BufWriter::new(file);
    for g in &dataset.graphs {
        let line = serde_json::to_string(&graph_to_sample(g)).map_err(|e| Error::io(&samples, e))?;
        writeln!(out, "{line}").map_err(|e| Error::io(&samples, e))?;
    }
    out.flush().map_err(|e| Error::io(&samples, e))?;
    Ok(manifest_path)
}
