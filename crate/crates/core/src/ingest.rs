//! Label sets and probability logs.
//!
//! A probability log is line-delimited JSON, one classified image per line:
//!
//! ```text
//! {"image_id":"img1","true_label":"black swan","entries":[["black swan",0.93],["goose",0.02]]}
//! ```
//!
//! `entries` may be a truncated top-M slice of the full probability vector.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

pub type LabelId = usize;

/// The label universe of a classifier; ids follow first appearance in the labels file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, LabelId>,
}

impl LabelSet {
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_numbered(names.into_iter().enumerate().map(|(i, s)| (i + 1, s.into())))
    }

    /// One label per line. Surrounding whitespace is trimmed and blank lines skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fsutil::read_to_string(path)?;
        let set = Self::from_numbered(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty())
                .map(|(i, l)| (i, l.to_string())),
        )?;
        if set.is_empty() {
            return Err(Error::EmptyLabels(path.to_path_buf()));
        }
        Ok(set)
    }

    // Line numbers are 1-based and only used for error messages.
    fn from_numbered(names: impl Iterator<Item = (usize, String)>) -> Result<Self> {
        let mut set = LabelSet::default();
        let mut lines = Vec::new();
        for (line, name) in names {
            if let Some(&prev) = set.index.get(&name) {
                return Err(Error::DuplicateLabel {
                    label: name,
                    first: lines[prev],
                    second: line,
                });
            }
            set.index.insert(name.clone(), set.labels.len());
            set.labels.push(name);
            lines.push(line);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<LabelId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.labels[id]
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (LabelId, &str)> {
        self.labels.iter().enumerate().map(|(i, s)| (i, s.as_str()))
    }

    /// Serializes back into the labels-file format.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for l in &self.labels {
            out.push_str(l);
            out.push('\n');
        }
        out
    }
}

/// One probability-log line as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub image_id: String,
    pub true_label: String,
    pub entries: Vec<(String, f64)>,
}

/// One test image's classification, validated against a [`LabelSet`].
///
/// `entries` is sorted by probability descending, ties broken by ascending label id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationRecord {
    pub image_id: String,
    pub true_label: LabelId,
    pub entries: Vec<(LabelId, f64)>,
}

impl ClassificationRecord {
    /// Builds a record and applies the canonical entry order.
    pub fn new(image_id: impl Into<String>, true_label: LabelId, mut entries: Vec<(LabelId, f64)>) -> Self {
        sort_entries(&mut entries);
        ClassificationRecord {
            image_id: image_id.into(),
            true_label,
            entries,
        }
    }

    /// The decided label: first entry after the deterministic tie-break.
    pub fn argmax(&self) -> LabelId {
        self.entries[0].0
    }

    pub fn to_log_line(&self, labels: &LabelSet) -> LogLine {
        LogLine {
            image_id: self.image_id.clone(),
            true_label: labels.name(self.true_label).to_string(),
            entries: self
                .entries
                .iter()
                .map(|&(l, p)| (labels.name(l).to_string(), p))
                .collect(),
        }
    }
}

pub(crate) fn sort_entries(entries: &mut [(LabelId, f64)]) {
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Why a log line was not accepted.
#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    UnknownLabel(String),
    Malformed(String),
    EmptyEntries,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::UnknownLabel(l) => write!(f, "unknown label '{l}'"),
            Rejection::Malformed(d) => write!(f, "malformed line: {d}"),
            Rejection::EmptyEntries => write!(f, "empty entries"),
        }
    }
}

impl LogLine {
    pub fn validate(&self, labels: &LabelSet) -> std::result::Result<ClassificationRecord, Rejection> {
        let true_label = labels
            .id(&self.true_label)
            .ok_or_else(|| Rejection::UnknownLabel(self.true_label.clone()))?;
        if self.entries.is_empty() {
            return Err(Rejection::EmptyEntries);
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        let mut entries = Vec::with_capacity(self.entries.len());
        for (name, p) in &self.entries {
            let id = labels
                .id(name)
                .ok_or_else(|| Rejection::UnknownLabel(name.clone()))?;
            if !(0.0..=1.0).contains(p) {
                return Err(Rejection::Malformed(format!(
                    "probability {p} for '{name}' outside [0, 1]"
                )));
            }
            if !seen.insert(id) {
                return Err(Rejection::Malformed(format!("label '{name}' repeated in entries")));
            }
            entries.push((id, *p));
        }
        Ok(ClassificationRecord::new(self.image_id.clone(), true_label, entries))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub total_records: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub unknown_label: usize,
    pub malformed_line: usize,
    pub empty_entries: usize,
    /// Shortest entry list among accepted records.
    pub min_entries: Option<usize>,
}

impl IngestReport {
    fn tally(&mut self, outcome: &std::result::Result<ClassificationRecord, Rejection>) {
        self.total_records += 1;
        match outcome {
            Ok(r) => {
                self.accepted += 1;
                let len = r.entries.len();
                self.min_entries = Some(self.min_entries.map_or(len, |m| m.min(len)));
            }
            Err(reason) => {
                self.rejected += 1;
                match reason {
                    Rejection::UnknownLabel(_) => self.unknown_label += 1,
                    Rejection::Malformed(_) => self.malformed_line += 1,
                    Rejection::EmptyEntries => self.empty_entries += 1,
                }
            }
        }
    }

    /// True when some accepted record carries fewer than `k` entries.
    pub fn has_short_records(&self, k: usize) -> bool {
        self.min_entries.is_some_and(|m| m < k)
    }
}

/// Parses log text. Blank lines are not records; every other line is tallied.
pub fn parse_log_str(text: &str, labels: &LabelSet) -> (Vec<ClassificationRecord>, IngestReport) {
    let mut records = Vec::new();
    let mut report = IngestReport::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<LogLine>(line)
            .map_err(|e| Rejection::Malformed(e.to_string()))
            .and_then(|l| l.validate(labels));
        report.tally(&outcome);
        match outcome {
            Ok(r) => records.push(r),
            Err(reason) => {
                if report.rejected <= 10 {
                    tracing::warn!(line = i + 1, "rejected log line: {reason}");
                }
            }
        }
    }
    (records, report)
}

pub fn parse_log(path: &Path, labels: &LabelSet) -> Result<(Vec<ClassificationRecord>, IngestReport)> {
    let text = fsutil::read_to_string(path)?;
    Ok(parse_log_str(&text, labels))
}

/// Serializes records in log format, one line each.
pub fn write_log_string(records: &[ClassificationRecord], labels: &LabelSet) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r.to_log_line(labels)).expect("log line serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn birds() -> LabelSet {
        LabelSet::from_names(["black swan", "American coot", "goose"]).unwrap()
    }

    const SWAN: &str = r#"{"image_id":"img1","true_label":"black swan","entries":[["black swan",0.93],["American coot",0.04],["goose",0.02]]}"#;

    #[test]
    fn label_ids_follow_file_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        std::fs::write(&path, "black swan\nAmerican coot\ngoose\n").unwrap();
        let set = LabelSet::load(&path).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.id("black swan"), Some(0));
        assert_eq!(set.id("American coot"), Some(1));
        assert_eq!(set.id("goose"), Some(2));
    }

    #[test]
    fn duplicate_label_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        std::fs::write(&path, "a\nb\na\n").unwrap();
        let err = LabelSet::load(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate label 'a'"), "{err}");
        assert!(err.to_string().contains("lines 1 and 3"), "{err}");
    }

    #[test]
    fn empty_labels_file_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(LabelSet::load(&path), Err(Error::EmptyLabels(_))));
    }

    #[test]
    fn thousand_line_label_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        let text: String = (0..1000).map(|i| format!("class {i}\n")).collect();
        std::fs::write(&path, text).unwrap();
        assert_eq!(LabelSet::load(&path).unwrap().len(), 1000);
    }

    #[test]
    fn black_swan_line_is_accepted() {
        let (records, report) = parse_log_str(SWAN, &birds());
        assert_eq!(report.accepted, 1);
        assert_eq!(report.rejected, 0);
        assert_eq!(records[0].entries, vec![(0, 0.93), (1, 0.04), (2, 0.02)]);
    }

    #[test]
    fn rejection_tallies() {
        let text = [
            SWAN,
            r#"{"image_id":"u","true_label":"goose","entries":[["unicorn",0.9]]}"#,
            r#"{"image_id":"e","true_label":"goose","entries":[]}"#,
            r#"{"image_id":"p","true_label":"goose","entries":[["goose",1.2]]}"#,
            r#"{"image_id":"n","true_label":"goose","entries":[["goose",-0.1]]}"#,
            r#"{"image_id":"d","true_label":"goose","entries":[["goose",0.5],["goose",0.4]]}"#,
            "not json",
            "",
        ]
        .join("\n");
        let (records, report) = parse_log_str(&text, &birds());
        assert_eq!(records.len(), 1);
        assert_eq!(report.total_records, 7);
        assert_eq!(report.unknown_label, 1);
        assert_eq!(report.empty_entries, 1);
        assert_eq!(report.malformed_line, 4);
        assert_eq!(report.accepted + report.rejected, report.total_records);
    }

    #[test]
    fn empty_log() {
        let (records, report) = parse_log_str("", &birds());
        assert!(records.is_empty());
        assert_eq!(report.total_records, 0);
        assert_eq!(report.min_entries, None);
    }

    #[test]
    fn unsorted_entries_are_resorted_with_id_tiebreak() {
        let line = r#"{"image_id":"x","true_label":"goose","entries":[["goose",0.25],["American coot",0.5],["black swan",0.25]],"extra":1}"#;
        let (records, _) = parse_log_str(line, &birds());
        assert_eq!(records[0].entries, vec![(1, 0.5), (0, 0.25), (2, 0.25)]);
    }

    #[test]
    fn unreadable_file_is_fatal() {
        let err = parse_log(Path::new("/nonexistent/log.jsonl"), &birds()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn short_record_detection() {
        let (_, report) = parse_log_str(SWAN, &birds());
        assert!(!report.has_short_records(3));
        assert!(report.has_short_records(4));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn record_strategy() -> impl Strategy<Value = ClassificationRecord> {
            (0usize..6, proptest::sample::subsequence((0..6).collect::<Vec<_>>(), 1..=6))
                .prop_flat_map(|(t, ids)| {
                    let n = ids.len();
                    (Just(t), Just(ids), proptest::collection::vec(0.0f64..=1.0, n))
                })
                .prop_map(|(t, ids, ps)| {
                    ClassificationRecord::new("img", t, ids.into_iter().zip(ps).collect())
                })
        }

        proptest! {
            #[test]
            fn reparse_is_identity(records in proptest::collection::vec(record_strategy(), 0..8)) {
                let labels = LabelSet::from_names(["a", "b", "c", "d", "e", "f"]).unwrap();
                let text = write_log_string(&records, &labels);
                let (parsed, report) = parse_log_str(&text, &labels);
                prop_assert_eq!(report.rejected, 0);
                prop_assert_eq!(&parsed, &records);
                let (again, _) = parse_log_str(&write_log_string(&parsed, &labels), &labels);
                prop_assert_eq!(again, parsed);
            }

            #[test]
            fn accepted_entries_are_a_probability_prefix(r in record_strategy()) {
                for w in r.entries.windows(2) {
                    prop_assert!(w[0].1 >= w[1].1);
                }
                prop_assert!(r.entries.iter().all(|e| (0.0..=1.0).contains(&e.1)));
            }
        }
    }
}
