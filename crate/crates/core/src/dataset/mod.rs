//! Dataset files, their validation, result writers and the synthetic
//! hidden-metric generator.
//!
//! A dataset is a JSON manifest plus a JSON Lines samples file, one graph
//! per line:
//!
//! ```text
//! {"id": "g0", "n": 2, "node_features": [0.1, 0.2, 0.3, 0.4],
//!  "edges": [[0, 1, 1.0]], "labels": [0.5, null], "label_mask": [true, false]}
//! ```
//!
//! Edges are undirected and listed once; the loader mirrors them.

mod format;
mod synth;
mod writers;

pub use format::{
    graph_to_sample, load_dataset, read_manifest, sample_to_graph, validate_dataset, write_dataset, Dataset,
    DatasetManifest, SampleRecord, ValidationReport,
};
pub use synth::{kernel_adjacency, synthesize_hidden_metric_dataset, HiddenMetricTeacher, MAJOR_SCALE, MINOR_SCALE};
pub use writers::{
    format_value, snapshot_meta_path, write_ablation, write_curves, write_results, write_snapshot,
};

#[cfg(test)]
mod tests;
