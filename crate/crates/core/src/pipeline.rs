//! Staged pipeline with on-disk artifacts between stages:
//! build → cluster → name → explain / score.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{agglomerate, Dendrogram, LinkageKind, NodeId};
use crate::error::{Error, Result};
use crate::explain::{self, Explanation, ReferenceAnnotation, ScoreReport};
use crate::fsutil;
use crate::graph::{self, ConfusionAccumulator, GraphHeader};
use crate::ingest::{self, IngestReport, LabelSet, LogLine};
use crate::metric::shortest_path_metric;
use crate::naming::{self, NameOverrides, Taxonomy};
use crate::nma::{self, NmaConfig};
use crate::synth::{self, SynthConfig, SynthPaths};

pub const GRAPH_FILE: &str = "graph.tsv";
pub const BUILD_SUMMARY_FILE: &str = "build_summary.json";
pub const DISTANCES_FILE: &str = "distances.tsv";
pub const DENDROGRAM_FILE: &str = "dendrogram.json";
pub const NEWICK_FILE: &str = "dendrogram.nwk";
pub const NAMED_DENDROGRAM_FILE: &str = "named_dendrogram.json";
pub const SCORE_FILE: &str = "score.json";
pub const SCORE_TABLE_FILE: &str = "score.txt";
pub const OVERRIDES_FILE: &str = "overrides.json";

// Records per accumulation chunk; fixed so results do not depend on the thread count.
const ACCUMULATE_CHUNK: usize = 4096;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub labels: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub overrides: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub nma: NmaConfig,
    pub linkage: LinkageKind,
    /// Row label in the score table.
    pub model: String,
    pub dump_distances: bool,
}

impl PipelineConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            labels: None,
            log: None,
            taxonomy: None,
            reference: None,
            overrides: None,
            out_dir: out_dir.into(),
            nma: NmaConfig::default(),
            linkage: LinkageKind::default(),
            model: "model".to_string(),
            dump_distances: false,
        }
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// `--overrides`, else `overrides.json` next to the other artifacts.
    pub fn overrides_path(&self) -> PathBuf {
        self.overrides.clone().unwrap_or_else(|| self.artifact(OVERRIDES_FILE))
    }

    fn required<'a>(&self, path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::Config(format!("--{flag} is required for this command")))
    }

    fn ensure_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))
    }

    fn load_labels(&self) -> Result<LabelSet> {
        LabelSet::load(self.required(&self.labels, "labels")?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub labels: usize,
    pub ingest: IngestReport,
    pub accept_rate: f64,
    /// Records that passed the correctness filter and fed the graph.
    pub contributing: usize,
    pub edge_count: usize,
    pub isolated_labels: Vec<String>,
    /// Mean probability with which images of other labels near-missed as this label.
    pub inbound_confusion: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

pub fn cmd_build(cfg: &PipelineConfig) -> Result<BuildSummary> {
    cfg.nma.validate()?;
    let labels = cfg.load_labels()?;
    let (records, report) = ingest::parse_log(cfg.required(&cfg.log, "log")?, &labels)?;
    let mut warnings = Vec::new();
    if report.rejected > 0 {
        warnings.push(format!("{} of {} log lines rejected", report.rejected, report.total_records));
    }
    if report.has_short_records(cfg.nma.k) {
        warnings.push(format!(
            "some records carry fewer than k={} entries (shortest has {})",
            cfg.nma.k,
            report.min_entries.unwrap_or(0)
        ));
    }

    let contributing: Vec<_> = nma::contributing(&records, &cfg.nma).cloned().collect();
    let n = labels.len();
    let acc = contributing
        .par_chunks(ACCUMULATE_CHUNK)
        .map(|chunk| {
            let mut acc = ConfusionAccumulator::new(n);
            for r in chunk {
                acc.accumulate(&nma::extract_near_misses(r, &cfg.nma));
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(ConfusionAccumulator::new(n), |mut total, part| {
            total.merge(&part);
            total
        });
    let graph = acc.finalize(cfg.nma.t);

    let edge_count = graph.edge_count();
    if edge_count == 0 {
        warnings.push("the connection graph has no finite edges".to_string());
    }
    for w in &warnings {
        tracing::warn!("{w}");
    }

    let header = GraphHeader {
        n,
        t: cfg.nma.t,
        k: cfg.nma.k,
        records: report.total_records,
        accepted: report.accepted,
        contributing: contributing.len(),
    };
    cfg.ensure_out_dir()?;
    fsutil::write_atomic(
        &cfg.artifact(GRAPH_FILE),
        graph::write_dump(&graph, &labels, &header).as_bytes(),
    )?;

    let summary = BuildSummary {
        labels: n,
        accept_rate: if report.total_records == 0 {
            0.0
        } else {
            report.accepted as f64 / report.total_records as f64
        },
        ingest: report,
        contributing: contributing.len(),
        edge_count,
        isolated_labels: graph.isolated().into_iter().map(|i| labels.name(i).to_string()).collect(),
        inbound_confusion: labels
            .iter()
            .map(|(i, l)| (l.to_string(), acc.inbound_confusion(i)))
            .collect(),
        warnings,
    };
    write_json(&cfg.artifact(BUILD_SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub leaves: usize,
    pub components: usize,
    pub cap_value: f64,
    pub root_height: f64,
    pub hash: String,
}

pub fn cmd_cluster(cfg: &PipelineConfig) -> Result<ClusterSummary> {
    let labels = cfg.load_labels()?;
    let text = fsutil::read_artifact(&cfg.artifact(GRAPH_FILE))?;
    let (graph, _) = graph::parse_dump(&text, &labels)?;
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let metric = shortest_path_metric(&graph);
    if cfg.dump_distances {
        fsutil::write_atomic(&cfg.artifact(DISTANCES_FILE), metric.to_dump().as_bytes())?;
    }
    let dg = agglomerate(&metric, &labels, cfg.linkage)?;
    fsutil::write_atomic(&cfg.artifact(DENDROGRAM_FILE), dg.to_json().as_bytes())?;
    fsutil::write_atomic(&cfg.artifact(NEWICK_FILE), dg.to_newick().as_bytes())?;
    Ok(ClusterSummary {
        leaves: dg.leaf_count(),
        components: metric.components().len(),
        cap_value: metric.cap_value(),
        root_height: dg.height(dg.root()),
        hash: dg.content_hash(),
    })
}

pub fn load_dendrogram(path: &Path) -> Result<Dendrogram> {
    Dendrogram::from_json(&fsutil::read_artifact(path)?)
}

pub fn cmd_name(cfg: &PipelineConfig) -> Result<Dendrogram> {
    let dg = load_dendrogram(&cfg.artifact(DENDROGRAM_FILE))?;
    let tax = Taxonomy::load(cfg.required(&cfg.taxonomy, "taxonomy")?, dg.labels())?;
    let overrides = NameOverrides::load_or_default(&cfg.overrides_path(), &dg.content_hash())?;
    let named = naming::name_dendrogram(&dg, &tax, &overrides)?;
    fsutil::write_atomic(&cfg.artifact(NAMED_DENDROGRAM_FILE), named.to_json().as_bytes())?;
    Ok(named)
}

/// Offline rename: records the override and refreshes the named dendrogram.
pub fn cmd_rename(cfg: &PipelineConfig, node: NodeId, name: &str) -> Result<Dendrogram> {
    let named = load_dendrogram(&cfg.artifact(NAMED_DENDROGRAM_FILE))?;
    let hash = named.content_hash();
    let path = cfg.overrides_path();
    let mut overrides = NameOverrides::load_or_default(&path, &hash)?;
    overrides.set_override(&named, node, name)?;
    overrides.save(&path, &hash)?;
    let renamed = naming::apply_overrides(&named, &overrides);
    fsutil::write_atomic(&cfg.artifact(NAMED_DENDROGRAM_FILE), renamed.to_json().as_bytes())?;
    Ok(renamed)
}

/// What to explain: a label directly, or the decided label of a log record.
#[derive(Debug, Clone)]
pub enum Query {
    Label(String),
    Record(LogLine),
}

pub fn cmd_explain(cfg: &PipelineConfig, query: &Query) -> Result<Explanation> {
    let dg = load_dendrogram(&cfg.artifact(NAMED_DENDROGRAM_FILE))?;
    explain_query(&dg, query)
}

pub fn explain_query(dg: &Dendrogram, query: &Query) -> Result<Explanation> {
    match query {
        Query::Label(l) => explain::explain_label(dg, l),
        Query::Record(line) => {
            let record = line.validate(dg.labels()).map_err(|r| match r {
                ingest::Rejection::UnknownLabel(l) => Error::UnknownLabel(l),
                other => Error::format("record", other.to_string()),
            })?;
            explain::explain_record(dg, &record, dg.labels())
        }
    }
}

pub fn cmd_score(cfg: &PipelineConfig) -> Result<ScoreReport> {
    let dg = load_dendrogram(&cfg.artifact(NAMED_DENDROGRAM_FILE))?;
    let reference = ReferenceAnnotation::load(cfg.required(&cfg.reference, "reference")?)?;
    let report = explain::score_model(&dg, &reference)?;
    fsutil::write_atomic(&cfg.artifact(SCORE_FILE), report.to_json().as_bytes())?;
    fsutil::write_atomic(&cfg.artifact(SCORE_TABLE_FILE), report.to_table(&cfg.model).as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub build: BuildSummary,
    pub cluster: ClusterSummary,
    pub named: bool,
    pub score: Option<ScoreReport>,
}

/// build → cluster → name (with a taxonomy) → score (with a reference).
pub fn run_all(cfg: &PipelineConfig) -> Result<RunSummary> {
    let build = cmd_build(cfg)?;
    let cluster = cmd_cluster(cfg)?;
    let named = cfg.taxonomy.is_some();
    if named {
        cmd_name(cfg)?;
    }
    let score = match (&cfg.reference, named) {
        (Some(_), true) => Some(cmd_score(cfg)?),
        (Some(_), false) => {
            return Err(Error::Config("scoring needs --taxonomy to name the dendrogram".into()))
        }
        _ => None,
    };
    Ok(RunSummary {
        build,
        cluster,
        named,
        score,
    })
}

/// Writes a synthetic labels file, log, taxonomy and reference into `dir`.
pub fn cmd_synth(cfg: &SynthConfig, dir: &Path) -> Result<SynthPaths> {
    synth::write(&synth::generate(cfg)?, dir)
}

impl PipelineConfig {
    /// Config reading the inputs written by [`cmd_synth`].
    pub fn from_synth(paths: &SynthPaths, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            labels: Some(paths.labels.clone()),
            log: Some(paths.log.clone()),
            taxonomy: Some(paths.taxonomy.clone()),
            reference: Some(paths.reference.clone()),
            ..PipelineConfig::new(out_dir)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    s.push('\n');
    fsutil::write_atomic(path, s.as_bytes())
}
