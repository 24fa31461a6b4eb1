//! The connection graph: labels as nodes, accumulated near-miss dissimilarity on edges.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ClassificationRecord, LabelId, LabelSet};
use crate::nma::{self, NearMissSet, NmaConfig};

/// Running sums of near-miss probabilities, row = true label, column = near miss.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionAccumulator {
    n: usize,
    sum: Vec<f64>,
    count: Vec<u64>,
}

impl ConfusionAccumulator {
    pub fn new(n: usize) -> Self {
        ConfusionAccumulator {
            n,
            sum: vec![0.0; n * n],
            count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn sum(&self, i: LabelId, j: LabelId) -> f64 {
        self.sum[i * self.n + j]
    }

    pub fn count(&self, i: LabelId) -> u64 {
        self.count[i]
    }

    pub fn accumulate(&mut self, misses: &NearMissSet) {
        let row = misses.source_label * self.n;
        self.count[misses.source_label] += 1;
        for &(j, p) in &misses.misses {
            debug_assert_ne!(j, misses.source_label);
            self.sum[row + j] += p;
        }
    }

    /// Elementwise addition; merging worker accumulators in a fixed order is deterministic.
    pub fn merge(&mut self, other: &ConfusionAccumulator) {
        assert_eq!(self.n, other.n, "accumulators over different label sets");
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.count.iter_mut().zip(&other.count) {
            *a += b;
        }
    }

    /// Directional mean `p[i][j] = sum[i][j] / count[i]`, zero for labels without images.
    pub fn directional_mean(&self, i: LabelId, j: LabelId) -> f64 {
        match self.count[i] {
            0 => 0.0,
            c => self.sum(i, j) / c as f64,
        }
    }

    pub fn finalize(&self, t: f64) -> ConnectionGraph {
        let n = self.n;
        let mut weight = vec![f64::INFINITY; n * n];
        for i in 0..n {
            weight[i * n + i] = 0.0;
            for j in (i + 1)..n {
                let p_sym = (self.directional_mean(i, j) + self.directional_mean(j, i)) / 2.0;
                if p_sym >= t && p_sym > 0.0 {
                    weight[i * n + j] = 1.0 - p_sym;
                    weight[j * n + i] = 1.0 - p_sym;
                }
            }
        }
        ConnectionGraph { n, weight }
    }

    /// Mean probability with which images of other labels were near-missed as `i`.
    pub fn inbound_confusion(&self, i: LabelId) -> f64 {
        let (mut s, mut c) = (0.0, 0u64);
        for j in (0..self.n).filter(|&j| j != i) {
            s += self.sum(j, i);
            c += self.count[j];
        }
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    }
}

/// Accumulates every contributing record, in record order.
pub fn accumulate_records(
    records: &[ClassificationRecord],
    n: usize,
    cfg: &NmaConfig,
) -> ConfusionAccumulator {
    let mut acc = ConfusionAccumulator::new(n);
    for r in nma::contributing(records, cfg) {
        acc.accumulate(&nma::extract_near_misses(r, cfg));
    }
    acc
}

/// Undirected weighted graph over labels; `weight[i][j] = 1 - p_sym(i, j)` or infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionGraph {
    n: usize,
    weight: Vec<f64>,
}

impl ConnectionGraph {
    /// A graph with no edges.
    pub fn disconnected(n: usize) -> Self {
        let mut weight = vec![f64::INFINITY; n * n];
        for i in 0..n {
            weight[i * n + i] = 0.0;
        }
        ConnectionGraph { n, weight }
    }

    /// Sets an undirected edge.
    pub fn set_edge(&mut self, i: LabelId, j: LabelId, w: f64) {
        assert_ne!(i, j, "self loops are not edges");
        self.weight[i * self.n + j] = w;
        self.weight[j * self.n + i] = w;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn weight(&self, i: LabelId, j: LabelId) -> f64 {
        self.weight[i * self.n + j]
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weight
    }

    /// Finite edges with `i < j`, in (i, j) order.
    pub fn edges(&self) -> impl Iterator<Item = (LabelId, LabelId, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            ((i + 1)..self.n).filter_map(move |j| {
                let w = self.weight(i, j);
                w.is_finite().then_some((i, j, w))
            })
        })
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    /// Labels without any finite edge.
    pub fn isolated(&self) -> Vec<LabelId> {
        (0..self.n)
            .filter(|&i| (0..self.n).all(|j| j == i || !self.weight(i, j).is_finite()))
            .collect()
    }
}

/// Provenance line at the top of a graph dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphHeader {
    pub n: usize,
    pub t: f64,
    pub k: usize,
    pub records: usize,
    pub accepted: usize,
    pub contributing: usize,
}

const DUMP_MAGIC: &str = "#nma-graph";

/// `label_i<TAB>label_j<TAB>weight` for finite edges, after a header line.
pub fn write_dump(graph: &ConnectionGraph, labels: &LabelSet, header: &GraphHeader) -> String {
    let mut out = format!(
        "{DUMP_MAGIC}\tn={}\tt={}\tk={}\trecords={}\taccepted={}\tcontributing={}\n",
        header.n, header.t, header.k, header.records, header.accepted, header.contributing
    );
    for (i, j, w) in graph.edges() {
        let _ = writeln!(out, "{}\t{}\t{}", labels.name(i), labels.name(j), w);
    }
    out
}

pub fn parse_dump(text: &str, labels: &LabelSet) -> Result<(ConnectionGraph, GraphHeader)> {
    let mut lines = text.lines();
    let header = parse_header(lines.next().unwrap_or_default())?;
    if header.n != labels.len() {
        return Err(Error::format(
            "graph dump",
            format!("header says n={} but the labels file has {}", header.n, labels.len()),
        ));
    }
    let mut graph = ConnectionGraph::disconnected(header.n);
    for (no, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |d: String| Error::format("graph dump", format!("line {}: {d}", no + 2));
        let fields: Vec<&str> = line.split('\t').collect();
        let [a, b, w] = fields[..] else {
            return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
        };
        let i = labels.id(a).ok_or_else(|| bad(format!("unknown label '{a}'")))?;
        let j = labels.id(b).ok_or_else(|| bad(format!("unknown label '{b}'")))?;
        let w: f64 = w.parse().map_err(|_| bad(format!("bad weight '{w}'")))?;
        if i == j || !w.is_finite() || w < 0.0 {
            return Err(bad("edge must join two distinct labels with a finite weight >= 0".into()));
        }
        graph.set_edge(i, j, w);
    }
    Ok((graph, header))
}

fn parse_header(line: &str) -> Result<GraphHeader> {
    let bad = |d: &str| Error::format("graph dump header", d.to_string());
    let mut parts = line.split('\t');
    if parts.next() != Some(DUMP_MAGIC) {
        return Err(bad("missing #nma-graph header line"));
    }
    let mut h = GraphHeader {
        n: 0,
        t: 0.0,
        k: 0,
        records: 0,
        accepted: 0,
        contributing: 0,
    };
    let mut seen_n = false;
    for part in parts {
        let (key, value) = part.split_once('=').ok_or_else(|| bad(part))?;
        let int = || value.parse::<usize>().map_err(|_| bad(part));
        match key {
            "n" => {
                h.n = int()?;
                seen_n = true;
            }
            "t" => h.t = value.parse().map_err(|_| bad(part))?,
            "k" => h.k = int()?,
            "records" => h.records = int()?,
            "accepted" => h.accepted = int()?,
            "contributing" => h.contributing = int()?,
            _ => {}
        }
    }
    if !seen_n {
        return Err(bad("n missing"));
    }
    Ok(h)
}
