//! Clustering metrics, the bootstrap bias/variance harness and the ablation
//! table.

mod bias_variance;
mod metrics;
mod report;

pub use bias_variance::{
    ablation_matrix, bias_variance, decompose, soft_variance, AblationRow, BVConfigurationId, BVEntry, BVOptions,
    BVReport, ModalityInputs, TextSource,
};
pub use metrics::{accuracy, align_to_truth, ari, hungarian, nmi, score, ClusteringScores, ContingencyTable};
pub use report::{write_ablation_csv, write_bv_csv, write_jsonl};
