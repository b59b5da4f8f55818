//! Evolving graph convolutional networks: spectral graph convolution with a
//! per-sample learned Laplacian, trained end to end on batches of graphs of
//! different sizes.

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod metric;
pub mod nn;
pub mod parallel;
pub mod random;
pub mod spectral;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use graph::{batch_graphs, Graph, GraphBatch};
pub use tensor::Tensor;
