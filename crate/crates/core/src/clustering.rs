//! Agglomerative clustering of labels into a dendrogram.
//!
//! Node ids `0..n` are the leaves (label ids); internal node `n + s` is created by
//! the `s`-th merge. At every step the pair of clusters with the smallest linkage
//! distance merges; equal distances are resolved by the smallest
//! `(min node id, max node id)` pair. Cluster distances are updated with the
//! Lance-Williams recurrences.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{LabelId, LabelSet};
use crate::metric::DistanceMatrix;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkageKind {
    #[default]
    Average,
    Complete,
    Single,
}

impl LinkageKind {
    pub const ALL: [LinkageKind; 3] = [LinkageKind::Average, LinkageKind::Complete, LinkageKind::Single];

    /// Distance from the union of clusters `a` and `b` to a third cluster.
    fn update(self, d_a: f64, d_b: f64, size_a: usize, size_b: usize) -> f64 {
        match self {
            LinkageKind::Single => d_a.min(d_b),
            LinkageKind::Complete => d_a.max(d_b),
            LinkageKind::Average => {
                (size_a as f64 * d_a + size_b as f64 * d_b) / (size_a + size_b) as f64
            }
        }
    }
}

impl fmt::Display for LinkageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkageKind::Average => "average",
            LinkageKind::Complete => "complete",
            LinkageKind::Single => "single",
        })
    }
}

impl FromStr for LinkageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(LinkageKind::Average),
            "complete" => Ok(LinkageKind::Complete),
            "single" => Ok(LinkageKind::Single),
            other => Err(Error::Config(format!(
                "unknown linkage '{other}' (expected average, complete or single)"
            ))),
        }
    }
}

/// One merge row. `left < right`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: NodeId,
    pub right: NodeId,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    labels: LabelSet,
    merges: Vec<Merge>,
    names: Vec<Option<String>>,
    parent: Vec<Option<NodeId>>,
}

/// Candidate pair ordered by distance, then by node-id pair.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist: f64,
    lo: NodeId,
    hi: NodeId,
    slot: usize,
}

impl Candidate {
    fn new(dist: f64, a: NodeId, b: NodeId, slot: usize) -> Self {
        Candidate {
            dist,
            lo: a.min(b),
            hi: a.max(b),
            slot,
        }
    }

    fn cmp_key(&self, other: &Candidate) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.lo.cmp(&other.lo))
            .then(self.hi.cmp(&other.hi))
    }
}

struct Workspace {
    n: usize,
    dist: Vec<f64>,
    node: Vec<NodeId>,
    size: Vec<usize>,
    active: Vec<bool>,
    nearest: Vec<Option<Candidate>>,
}

impl Workspace {
    fn nearest_of(&self, i: usize) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        for j in (0..self.n).filter(|&j| j != i && self.active[j]) {
            let c = Candidate::new(self.dist[i * self.n + j], self.node[i], self.node[j], j);
            if best.is_none_or(|b| c.cmp_key(&b).is_lt()) {
                best = Some(c);
            }
        }
        best
    }
}

/// Agglomerative clustering of the labels of `d`.
pub fn agglomerate(d: &DistanceMatrix, labels: &LabelSet, linkage: LinkageKind) -> Result<Dendrogram> {
    let n = d.len();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if labels.len() != n {
        return Err(Error::Config(format!(
            "{} labels for a {n}x{n} distance matrix",
            labels.len()
        )));
    }
    let mut ws = Workspace {
        n,
        dist: d.as_slice().to_vec(),
        node: (0..n).collect(),
        size: vec![1; n],
        active: vec![true; n],
        nearest: vec![None; n],
    };
    for i in 0..n {
        ws.nearest[i] = ws.nearest_of(i);
    }

    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut last_height = f64::NEG_INFINITY;
    for step in 0..n.saturating_sub(1) {
        let (a, best) = (0..n)
            .filter(|&i| ws.active[i])
            .filter_map(|i| ws.nearest[i].map(|c| (i, c)))
            .min_by(|x, y| x.1.cmp_key(&y.1))
            .expect("at least two active clusters");
        let b = best.slot;
        let (size_a, size_b) = (ws.size[a], ws.size[b]);
        let new_node = n + step;
        // Average/complete/single never invert; the clamp only absorbs rounding.
        let height = best.dist.max(last_height);
        last_height = height;
        merges.push(Merge {
            left: best.lo,
            right: best.hi,
            height,
            size: size_a + size_b,
        });

        // Merged cluster lives in slot a; slot b retires.
        for k in (0..n).filter(|&k| ws.active[k] && k != a && k != b) {
            let v = linkage.update(ws.dist[a * n + k], ws.dist[b * n + k], size_a, size_b);
            ws.dist[a * n + k] = v;
            ws.dist[k * n + a] = v;
        }
        ws.active[b] = false;
        ws.node[a] = new_node;
        ws.size[a] = size_a + size_b;
        ws.nearest[b] = None;

        for i in (0..n).filter(|&i| ws.active[i] && i != a) {
            match ws.nearest[i] {
                Some(c) if c.slot == a || c.slot == b => ws.nearest[i] = ws.nearest_of(i),
                Some(c) => {
                    let cand = Candidate::new(ws.dist[i * n + a], ws.node[i], new_node, a);
                    if cand.cmp_key(&c).is_lt() {
                        ws.nearest[i] = Some(cand);
                    }
                }
                None => ws.nearest[i] = ws.nearest_of(i),
            }
        }
        ws.nearest[a] = ws.nearest_of(a);
    }

    Dendrogram::from_merges(labels.clone(), merges)
}

impl Dendrogram {
    /// Validates a merge table: children precede parents, every non-root node is
    /// used exactly once, sizes add up and heights never decrease.
    pub fn from_merges(labels: LabelSet, merges: Vec<Merge>) -> Result<Self> {
        let n = labels.len();
        let bad = |d: String| Error::format("dendrogram", d);
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if merges.len() != n - 1 {
            return Err(bad(format!("{} leaves need {} merges, found {}", n, n - 1, merges.len())));
        }
        let count = 2 * n - 1;
        let mut parent = vec![None; count];
        let mut size = vec![1usize; count];
        let mut prev = f64::NEG_INFINITY;
        for (s, m) in merges.iter().enumerate() {
            let id = n + s;
            for child in [m.left, m.right] {
                if child >= id {
                    return Err(bad(format!("merge {s} references node {child} before it exists")));
                }
                if parent[child].replace(id).is_some() {
                    return Err(bad(format!("node {child} merged twice")));
                }
            }
            if m.left == m.right {
                return Err(bad(format!("merge {s} joins node {} with itself", m.left)));
            }
            size[id] = size[m.left] + size[m.right];
            if m.size != size[id] {
                return Err(bad(format!("merge {s} has size {} but children sum to {}", m.size, size[id])));
            }
            if !m.height.is_finite() || m.height < 0.0 {
                return Err(bad(format!("merge {s} has invalid height {}", m.height)));
            }
            if m.height < prev {
                return Err(bad(format!("merge {s} height {} decreases", m.height)));
            }
            prev = m.height;
        }
        let merges = merges
            .into_iter()
            .map(|m| Merge {
                left: m.left.min(m.right),
                right: m.left.max(m.right),
                ..m
            })
            .collect();
        Ok(Dendrogram {
            labels,
            merges,
            names: vec![None; count],
            parent,
        })
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn leaf_count(&self) -> usize {
        self.labels.len()
    }

    pub fn node_count(&self) -> usize {
        2 * self.leaf_count() - 1
    }

    pub fn root(&self) -> NodeId {
        self.node_count() - 1
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        node < self.leaf_count()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node < self.node_count()
    }

    fn merge_of(&self, node: NodeId) -> Option<&Merge> {
        node.checked_sub(self.leaf_count()).map(|s| &self.merges[s])
    }

    pub fn height(&self, node: NodeId) -> f64 {
        self.merge_of(node).map_or(0.0, |m| m.height)
    }

    pub fn size(&self, node: NodeId) -> usize {
        self.merge_of(node).map_or(1, |m| m.size)
    }

    pub fn children(&self, node: NodeId) -> Option<(NodeId, NodeId)> {
        self.merge_of(node).map(|m| (m.left, m.right))
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.parent[node]
    }

    pub fn leaf_of(&self, label: &str) -> Option<NodeId> {
        self.labels.id(label)
    }

    /// Leaf label ids under `node`, ascending.
    pub fn members(&self, node: NodeId) -> Vec<LabelId> {
        let mut out = Vec::with_capacity(self.size(node));
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            match self.children(x) {
                Some((l, r)) => stack.extend([l, r]),
                None => out.push(x),
            }
        }
        out.sort_unstable();
        out
    }

    /// Members of every node, indexed by node id.
    pub fn all_members(&self) -> Vec<Vec<LabelId>> {
        let n = self.leaf_count();
        let mut all: Vec<Vec<LabelId>> = (0..n).map(|i| vec![i]).collect();
        for m in &self.merges {
            let mut v = Vec::with_capacity(m.size);
            v.extend_from_slice(&all[m.left]);
            v.extend_from_slice(&all[m.right]);
            v.sort_unstable();
            all.push(v);
        }
        all
    }

    pub fn name(&self, node: NodeId) -> Option<&str> {
        self.names[node].as_deref()
    }

    pub fn names(&self) -> &[Option<String>] {
        &self.names
    }

    pub fn set_name(&mut self, node: NodeId, name: Option<String>) {
        self.names[node] = name;
    }

    pub fn with_names(mut self, names: Vec<Option<String>>) -> Self {
        assert_eq!(names.len(), self.node_count(), "one name slot per node");
        self.names = names;
        self
    }

    /// Clusters left after removing every merge above `height`, as node ids ordered
    /// by smallest member.
    pub fn cut_nodes(&self, height: f64) -> Result<Vec<NodeId>> {
        if height.is_nan() || height < 0.0 {
            return Err(Error::Config(format!("cut height must be >= 0, got {height}")));
        }
        let mut nodes: Vec<(LabelId, NodeId)> = Vec::new();
        let mut stack = vec![self.root()];
        while let Some(x) = stack.pop() {
            match self.children(x) {
                Some((l, r)) if self.height(x) > height => stack.extend([l, r]),
                _ => nodes.push((self.first_member(x), x)),
            }
        }
        nodes.sort_unstable();
        Ok(nodes.into_iter().map(|(_, x)| x).collect())
    }

    pub fn cut(&self, height: f64) -> Result<Vec<Vec<LabelId>>> {
        Ok(self.cut_nodes(height)?.into_iter().map(|x| self.members(x)).collect())
    }

    fn first_member(&self, node: NodeId) -> LabelId {
        let mut best = LabelId::MAX;
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            match self.children(x) {
                Some((l, r)) => stack.extend([l, r]),
                None => best = best.min(x),
            }
        }
        best
    }

    /// The leaf followed by every enclosing node up to the root.
    pub fn path_to_root(&self, label: LabelId) -> Result<Vec<NodeId>> {
        if label >= self.leaf_count() {
            return Err(Error::UnknownLabel(label.to_string()));
        }
        let mut path = vec![label];
        let mut x = label;
        while let Some(p) = self.parent[x] {
            path.push(p);
            x = p;
        }
        Ok(path)
    }

    /// Hex SHA-256 over the exported structure (leaves and merges, not names).
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_vec(&DendrogramFile::structure(self)).expect("dendrogram serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&DendrogramFile::full(self)).expect("dendrogram serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DendrogramFile =
            serde_json::from_str(text).map_err(|e| Error::format("dendrogram file", e.to_string()))?;
        file.into_dendrogram()
    }

    /// Newick with branch length `parent height - child height`; internal nodes carry
    /// their names when set.
    pub fn to_newick(&self) -> String {
        let mut out = String::new();
        self.write_newick(self.root(), &mut out);
        out.push_str(";\n");
        out
    }

    fn write_newick(&self, node: NodeId, out: &mut String) {
        match self.children(node) {
            None => out.push_str(&newick_label(self.labels.name(node))),
            Some((l, r)) => {
                out.push('(');
                for (i, child) in [l, r].into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    self.write_newick(child, out);
                    let len = round_sig(self.height(node) - self.height(child));
                    out.push(':');
                    out.push_str(&len.to_string());
                }
                out.push(')');
                if let Some(name) = self.name(node) {
                    out.push_str(&newick_label(name));
                }
            }
        }
    }
}

/// Rounds to 12 significant digits, the precision of every exported height.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

fn newick_label(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect();
    if s.chars().any(|c| "()[]':;,".contains(c)) {
        format!("'{}'", s.replace('\'', "''"))
    } else {
        s
    }
}

/// On-disk dendrogram: `leaves`, `merges` as `[left, right, height, size]`, optional names.
#[derive(Debug, Serialize, Deserialize)]
struct DendrogramFile {
    leaves: Vec<String>,
    merges: Vec<(NodeId, NodeId, f64, usize)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    names: BTreeMap<NodeId, String>,
}

impl DendrogramFile {
    fn structure(dg: &Dendrogram) -> Self {
        DendrogramFile {
            leaves: dg.labels.names().to_vec(),
            merges: dg
                .merges
                .iter()
                .map(|m| (m.left, m.right, round_sig(m.height), m.size))
                .collect(),
            names: BTreeMap::new(),
        }
    }

    fn full(dg: &Dendrogram) -> Self {
        let mut f = Self::structure(dg);
        f.names = dg
            .names
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.clone().map(|n| (i, n)))
            .collect();
        f
    }

    fn into_dendrogram(self) -> Result<Dendrogram> {
        let labels = LabelSet::from_names(self.leaves)?;
        let merges = self
            .merges
            .into_iter()
            .map(|(left, right, height, size)| Merge {
                left,
                right,
                height,
                size,
            })
            .collect();
        let mut dg = Dendrogram::from_merges(labels, merges)?;
        for (node, name) in self.names {
            if !dg.contains(node) {
                return Err(Error::UnknownNode {
                    node,
                    count: dg.node_count(),
                });
            }
            dg.names[node] = Some(name);
        }
        Ok(dg)
    }
}
