//! Request and response bodies of the HTTP service, shared with the client.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clustering::{round_sig, Dendrogram, Merge, NodeId};
use crate::error::Result;
use crate::ingest::LabelSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: NodeId,
    pub name: Option<String>,
    pub height: f64,
    pub size: usize,
    pub members: Vec<String>,
}

impl NodeView {
    pub fn new(dg: &Dendrogram, id: NodeId, members: &[usize]) -> Self {
        NodeView {
            id,
            name: dg.name(id).map(str::to_string),
            height: round_sig(dg.height(id)),
            size: dg.size(id),
            members: members.iter().map(|&m| dg.labels().name(m).to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendrogramView {
    /// Structure hash; overrides are bound to it.
    pub hash: String,
    pub leaves: Vec<String>,
    pub merges: Vec<(NodeId, NodeId, f64, usize)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub names: BTreeMap<NodeId, String>,
    pub nodes: Vec<NodeView>,
    /// Optional hover image per label.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub images: BTreeMap<String, String>,
}

impl DendrogramView {
    pub fn new(dg: &Dendrogram, members: &[Vec<usize>], images: &BTreeMap<String, String>) -> Self {
        DendrogramView {
            hash: dg.content_hash(),
            leaves: dg.labels().names().to_vec(),
            merges: dg
                .merges()
                .iter()
                .map(|m| (m.left, m.right, round_sig(m.height), m.size))
                .collect(),
            names: dg
                .names()
                .iter()
                .enumerate()
                .filter_map(|(id, n)| n.clone().map(|n| (id, n)))
                .collect(),
            nodes: (0..dg.node_count())
                .map(|id| NodeView::new(dg, id, &members[id]))
                .collect(),
            images: images.clone(),
        }
    }

    /// Rebuilds the served dendrogram, names included.
    pub fn to_dendrogram(&self) -> Result<Dendrogram> {
        let labels = LabelSet::from_names(self.leaves.iter().cloned())?;
        let merges = self
            .merges
            .iter()
            .map(|&(left, right, height, size)| Merge { left, right, height, size })
            .collect();
        let mut dg = Dendrogram::from_merges(labels, merges)?;
        for (&id, name) in &self.names {
            if dg.contains(id) {
                dg.set_name(id, Some(name.clone()));
            }
        }
        Ok(dg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersView {
    pub cut: f64,
    pub clusters: Vec<NodeView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenameRequest {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
