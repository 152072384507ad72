//! Cross-data label completion for multi-target learning.
//!
//! Several ARFF files that share a feature space but annotate different
//! targets are merged into one sparse label grid. A multi-task network with
//! a shared trunk is trained on the known labels, then fills the most
//! confident missing cells, and the loop repeats until the grid is complete.

pub mod arff;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod model;
pub mod synth;
pub mod trainer;
pub mod writeback;

pub use arff::{parse_arff, read_arff_file, write_arff, ArffRelation, ArffValue, AttributeDecl, AttributeKind};
pub use dataset::{assemble, split, LabelCell, MultiTargetDataset, TaskKind, TaskSchema};
pub use eval::{evaluate, pearson_cc, uar, MetricReport};
pub use model::{init_network, MtShlNetwork, NetworkConfig};
pub use trainer::{run_cdlc, select_top_k, CdlcConfig, CdlcOutcome, CdlcStatus, PseudoLabelAssignment};
