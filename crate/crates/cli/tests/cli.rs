use std::path::Path;
use std::process::{Command, Output};

fn nma(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nma"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

const INPUTS: [&str; 8] = [
    "--labels", "synth/labels.txt",
    "--log", "synth/log.jsonl",
    "--taxonomy", "synth/taxonomy.json",
    "--reference", "synth/reference.json",
];

#[test]
fn staged_pipeline_and_queries() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&nma(&["synth"], d));

    let build = ok(&nma(&[&["build"][..], &INPUTS].concat(), d));
    assert!(build.contains("240 records"), "{build}");
    let cluster = ok(&nma(&[&["cluster", "--dump-distances"][..], &INPUTS].concat(), d));
    assert!(cluster.starts_with("root height "), "{cluster}");
    for f in ["graph.tsv", "build_summary.json", "dendrogram.json", "dendrogram.nwk", "distances.tsv"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    ok(&nma(&[&["name"][..], &INPUTS].concat(), d));
    let score = ok(&nma(&[&["score", "--model", "planted"][..], &INPUTS].concat(), d));
    assert_eq!(score.lines().nth(2).unwrap().split('|').nth(2).unwrap().trim(), "1");

    let explain = ok(&nma(&["explain", "--label", "g1.s1.l0"], d));
    assert!(explain.contains("is part of the concept g1.s1"), "{explain}");
    assert!(explain.trim_end().ends_with("which is a part of the concept entity"), "{explain}");

    let record = r#"{"image_id":"x","true_label":"g0.s0.l0","entries":[["g0.s0.l1",0.9],["g0.s0.l0",0.1]]}"#;
    let explain = ok(&nma(&["explain", "--record", record], d));
    assert!(explain.lines().last().unwrap().starts_with("g0.s0.l1 is part of"), "{explain}");

    let clusters = ok(&nma(&["clusters", "--cut", "0"], d));
    assert_eq!(clusters.lines().count(), 12);
}

#[test]
fn offline_rename_reaches_explanations() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&nma(&["synth"], d));
    ok(&nma(&[&["run-all"][..], &INPUTS].concat(), d));
    let root = "22"; // 12 leaves, 11 merges
    ok(&nma(&["rename", "--node", root, "--name", "everything"], d));
    let explain = ok(&nma(&["explain", "--label", "g0.s0.l0"], d));
    assert!(explain.trim_end().ends_with("concept everything"), "{explain}");
    // Re-running the naming stage keeps the override.
    ok(&nma(&[&["name"][..], &INPUTS].concat(), d));
    let explain = ok(&nma(&["explain", "--label", "g0.s0.l0"], d));
    assert!(explain.trim_end().ends_with("concept everything"), "{explain}");

    let bad = nma(&["rename", "--node", "99", "--name", "x"], d);
    assert!(!bad.status.success());
    let bad = nma(&["rename", "--node", root, "--name", " "], d);
    assert!(!bad.status.success());
}

#[test]
fn hard_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&nma(&["synth"], d));

    let out = nma(&[&["cluster"][..], &INPUTS].concat(), d);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("graph.tsv"), "{err}");

    let out = nma(&["build", "--log", "synth/log.jsonl"], d);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--labels"));
    assert!(!out.status.success());

    let out = nma(&[&["build", "--k", "0"][..], &INPUTS].concat(), d);
    assert!(!out.status.success());
    let out = nma(&[&["build", "--threshold", "1.5"][..], &INPUTS].concat(), d);
    assert!(!out.status.success());
}

#[test]
fn misclassified_only_log_warns_but_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("labels.txt"), "cat\ndog\nfox\n").unwrap();
    std::fs::write(
        d.join("log.jsonl"),
        concat!(
            r#"{"image_id":"1","true_label":"cat","entries":[["dog",0.6],["cat",0.4]]}"#,
            "\n",
            r#"{"image_id":"2","true_label":"fox","entries":[["cat",0.7],["fox",0.3]]}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = nma(&["build", "--labels", "labels.txt", "--log", "log.jsonl"], d);
    let stdout = ok(&out);
    assert!(stdout.contains("0 edges"), "{stdout}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("no finite edges"));

    let stdout = ok(&nma(
        &["build", "--labels", "labels.txt", "--log", "log.jsonl", "--include-misclassified"],
        d,
    ));
    assert!(stdout.contains("2 edges"), "{stdout}");
}
