//! Near-miss analysis (NMA) of image classifiers.
//!
//! Reads per-image probability logs, accumulates the near-miss statistics into an
//! undirected connection graph over labels, turns the graph into a shortest-path
//! metric, clusters labels agglomeratively, names the clusters with the lowest
//! common hypernym of a taxonomy and renders/scores verbal explanations.
//!
//! The stages are pure functions over plain data; [`pipeline`] chains them with
//! on-disk artifacts in between.

pub mod api;
pub mod clustering;
pub mod error;
pub mod explain;
pub mod graph;
pub mod ingest;
pub mod metric;
pub mod naming;
pub mod nma;
pub mod pipeline;
pub mod synth;

mod fsutil;

pub use clustering::{agglomerate, Dendrogram, LinkageKind, Merge, NodeId};
pub use error::{Error, Result};
pub use explain::{Explanation, ReferenceAnnotation, ScoreReport};
pub use graph::{ConfusionAccumulator, ConnectionGraph};
pub use ingest::{ClassificationRecord, IngestReport, LabelId, LabelSet};
pub use metric::{shortest_path_metric, DistanceMatrix};
pub use naming::{NameOverrides, Taxonomy};
pub use nma::{NearMissSet, NmaConfig};
