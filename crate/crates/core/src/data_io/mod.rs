//! Embedding and label files, the paired dataset container, synthetic data,
//! bootstrap resampling and exact cosine neighbor search.

mod bootstrap;
mod dataset;
pub mod format;
mod neighbors;
mod synthetic;

pub use bootstrap::{bootstrap, BootstrapSample};
pub use dataset::Dataset;
pub use format::{
    read_embeddings, read_embeddings_csv, read_labels, write_embeddings, write_file, write_labels,
};
pub use neighbors::{build_neighbor_index, Modality, NeighborIndex};
pub use synthetic::{generate_synthetic, SyntheticSpec};
