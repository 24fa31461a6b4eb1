use std::path::Path;

use nma_core::pipeline::{self, PipelineConfig, Query};
use nma_core::synth::{SynthConfig, SynthPaths};
use nma_core::{Error, LinkageKind};

fn synth(dir: &Path, cfg: &SynthConfig) -> PipelineConfig {
    let paths = pipeline::cmd_synth(cfg, &dir.join("in")).unwrap();
    PipelineConfig::from_synth(&paths, dir.join("out"))
}

#[test]
fn missing_upstream_artifacts_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), &SynthConfig::default());
    let missing = |r: nma_core::Result<()>, file: &str| match r {
        Err(Error::MissingArtifact(p)) => assert!(p.ends_with(file), "{p:?}"),
        other => panic!("expected missing {file}, got {other:?}"),
    };
    missing(pipeline::cmd_cluster(&cfg).map(drop), pipeline::GRAPH_FILE);
    missing(pipeline::cmd_name(&cfg).map(drop), pipeline::DENDROGRAM_FILE);
    missing(pipeline::cmd_score(&cfg).map(drop), pipeline::NAMED_DENDROGRAM_FILE);
    missing(
        pipeline::cmd_explain(&cfg, &Query::Label("g0.s0.l0".into())).map(drop),
        pipeline::NAMED_DENDROGRAM_FILE,
    );
}

#[test]
fn missing_reference_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synth(dir.path(), &SynthConfig::default());
    cfg.reference = Some(dir.path().join("nope.json"));
    assert!(pipeline::run_all(&cfg).is_err());
}

#[test]
fn zero_epsilon_isolates_every_label() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(
        dir.path(),
        &SynthConfig {
            eps_subgroup: 0.0,
            eps_group: 0.0,
            ..SynthConfig::default()
        },
    );
    let run = pipeline::run_all(&cfg).unwrap();
    assert_eq!(run.build.edge_count, 0);
    assert_eq!(run.build.isolated_labels.len(), 12);
    assert!(run.build.warnings.iter().any(|w| w.contains("no finite edges")));
    assert_eq!(run.cluster.components, 12);
    let dg = pipeline::load_dendrogram(&cfg.artifact(pipeline::DENDROGRAM_FILE)).unwrap();
    assert!(dg.merges().iter().all(|m| m.height == run.cluster.cap_value));
    // Tied merges follow label ids, so some planted concepts survive by accident only.
    assert!(run.score.unwrap().total < 1.0);
}

#[test]
fn build_summary_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), &SynthConfig::default());
    let s = pipeline::cmd_build(&cfg).unwrap();
    assert_eq!(s.labels, 12);
    assert_eq!(s.ingest.total_records, 240);
    assert_eq!(s.ingest.accepted, 240);
    assert_eq!(s.accept_rate, 1.0);
    assert_eq!(s.contributing, 240);
    assert!(s.edge_count > 0);
    assert!(s.warnings.is_empty(), "{:?}", s.warnings);
    assert_eq!(s.inbound_confusion.len(), 12);
    let on_disk: pipeline::BuildSummary = serde_json::from_str(
        &std::fs::read_to_string(cfg.artifact(pipeline::BUILD_SUMMARY_FILE)).unwrap(),
    )
    .unwrap();
    assert_eq!(on_disk, s);
}

#[test]
fn every_linkage_recovers_the_planted_hierarchy() {
    for linkage in LinkageKind::ALL {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synth(dir.path(), &SynthConfig::default());
        cfg.linkage = linkage;
        let run = pipeline::run_all(&cfg).unwrap();
        assert_eq!(run.score.unwrap().total, 1.0, "{linkage}");
    }
}

#[test]
fn scoring_needs_names() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synth(dir.path(), &SynthConfig::default());
    cfg.taxonomy = None;
    assert!(matches!(pipeline::run_all(&cfg), Err(Error::Config(_))));
    cfg.reference = None;
    let run = pipeline::run_all(&cfg).unwrap();
    assert!(!run.named && run.score.is_none());
}

#[test]
fn synth_files_reload() {
    let dir = tempfile::tempdir().unwrap();
    let paths = pipeline::cmd_synth(&SynthConfig::default(), dir.path()).unwrap();
    let again = SynthPaths::in_dir(dir.path());
    assert_eq!(paths.log, again.log);
    let labels = nma_core::LabelSet::load(&paths.labels).unwrap();
    let (records, report) = nma_core::ingest::parse_log(&paths.log, &labels).unwrap();
    assert_eq!(records.len(), 240);
    assert_eq!(report.rejected, 0);
    nma_core::Taxonomy::load(&paths.taxonomy, &labels).unwrap();
}

#[test]
fn record_query_uses_the_decided_label() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth(dir.path(), &SynthConfig::default());
    pipeline::run_all(&cfg).unwrap();
    let line = nma_core::ingest::LogLine {
        image_id: "q".into(),
        true_label: "g0.s0.l0".into(),
        entries: vec![("g1.s1.l2".into(), 0.8), ("g0.s0.l0".into(), 0.2)],
    };
    let e = pipeline::cmd_explain(&cfg, &Query::Record(line)).unwrap();
    assert_eq!(e.label, "g1.s1.l2");
    assert_eq!(e.concepts, ["g1.s1", "g1"]);
}
