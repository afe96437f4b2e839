//! Policy trees for multi-treatment assignment.
//!
//! Given per-individual policy scores (one estimated potential outcome per
//! treatment), this crate searches exhaustively for the depth-limited decision
//! tree that maximizes total welfare, i.e. the sum of the scores of the
//! assigned treatments. On top of the core search it provides:
//!
//! * CSV ingestion with a JSON schema sidecar and a train/policy/predict split
//!   ([`ingest`], [`data`]);
//! * tree application, JSON serialization, rule text and DOT export ([`tree`],
//!   [`render`]);
//! * maximum treatment-share constraints enforced by calibrating
//!   treatment-specific costs that are subtracted from the scores
//!   ([`constraints`]);
//! * sequentially-optimal trees: an optimal first tree whose leaves are each
//!   refined by further optimal trees on the leaf's stratum ([`sequential`]);
//! * baseline allocators (best-score, random, observed) and welfare/share
//!   reports ([`eval`]);
//! * a synthetic-population generator with a planted oracle policy ([`synth`]).

pub mod candidates;
pub mod constraints;
pub mod data;
pub mod eval;
pub mod ingest;
pub mod render;
pub mod search;
pub mod sequential;
pub mod synth;
pub mod tree;

pub use data::{DataError, DataSplit, FeatureKind, FeatureSpec, PolicyData};
pub use ingest::{load_csv, write_csv, CsvLoad, Schema};
pub use search::{best_single_treatment, search, SearchConfig, SearchError, SearchResult};
pub use sequential::search_sequential;
pub use tree::{Assignment, Node, PolicyTree, SplitRule, TrainStats, TreeError};
