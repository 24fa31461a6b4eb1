//! Verbal explanations along the leaf-to-root path, and their agreement with
//! human reference annotations.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{Dendrogram, NodeId};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::ingest::{ClassificationRecord, LabelSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub node: NodeId,
    pub child: String,
    pub concept: String,
    pub members: Vec<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub label: String,
    /// Retained concept names from most specific to most general, root included.
    pub display_concepts: Vec<String>,
    /// The scored view: `display_concepts` without the root's name and the label.
    pub concepts: Vec<String>,
    pub sentences: Vec<Sentence>,
}

impl Explanation {
    /// Single-line chained form: `chair is part of the concept furniture which is a part of the concept entity`.
    pub fn summary(&self) -> String {
        let mut out = self.label.clone();
        for (i, c) in self.display_concepts.iter().enumerate() {
            let joint = if i == 0 { " is part of the concept " } else { " which is a part of the concept " };
            out.push_str(joint);
            out.push_str(c);
        }
        out
    }

    /// One line per sentence followed by the concept's members.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            let _ = writeln!(out, "{}: {}", s.text, s.members.join(", "));
        }
        out
    }
}

/// Walks from `label` to the root, skipping unnamed nodes and repeated names.
pub fn explain_label(dg: &Dendrogram, label: &str) -> Result<Explanation> {
    let leaf = dg
        .leaf_of(label)
        .ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    let path = dg.path_to_root(leaf)?;
    let labels = dg.labels();
    let mut sentences = Vec::new();
    let mut display = Vec::new();
    let mut prev = label.to_string();
    for &node in &path[1..] {
        let Some(name) = dg.name(node) else { continue };
        if name == prev {
            continue;
        }
        sentences.push(Sentence {
            node,
            child: prev.clone(),
            concept: name.to_string(),
            members: dg.members(node).into_iter().map(|m| labels.name(m).to_string()).collect(),
            text: format!("A {prev} is part of the concept {name}"),
        });
        display.push(name.to_string());
        prev = name.to_string();
    }
    let root_name = dg.name(dg.root());
    let concepts = display
        .iter()
        .filter(|c| Some(c.as_str()) != root_name && c.as_str() != label)
        .cloned()
        .collect();
    Ok(Explanation {
        label: label.to_string(),
        display_concepts: display,
        concepts,
        sentences,
    })
}

/// Explains the decided (argmax) label of `record`, whose ids refer to `labels`.
pub fn explain_record(dg: &Dendrogram, record: &ClassificationRecord, labels: &LabelSet) -> Result<Explanation> {
    explain_label(dg, labels.name(record.argmax()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    /// Human concept chain, leaf and root excluded.
    pub concepts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

/// Human annotation per label: `{label: {concepts: [...], group: "..."}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReferenceAnnotation {
    pub entries: BTreeMap<String, ReferenceEntry>,
}

impl ReferenceAnnotation {
    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| Error::format("reference file", e.to_string()))?;
        for (label, e) in &r.entries {
            if e.concepts.iter().any(|c| c.trim().is_empty()) {
                return Err(Error::format("reference file", format!("empty concept for '{label}'")));
            }
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fsutil::read_artifact(path)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reference serializes");
        s.push('\n');
        s
    }

    pub fn get(&self, label: &str) -> Option<&ReferenceEntry> {
        self.entries.get(label)
    }
}

/// `|S ∩ U| / |S|` with S the reference concepts and U the machine concepts, as sets.
pub fn score_label(machine: &Explanation, reference: &ReferenceAnnotation, label: &str) -> Result<f64> {
    let entry = reference
        .get(label)
        .ok_or_else(|| Error::MissingReference(label.to_string()))?;
    let s: HashSet<&str> = entry.concepts.iter().map(String::as_str).collect();
    if s.is_empty() {
        return Err(Error::EmptyReference(label.to_string()));
    }
    let u: HashSet<&str> = machine.concepts.iter().map(String::as_str).collect();
    Ok(s.intersection(&u).count() as f64 / s.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub total: f64,
    pub per_group: BTreeMap<String, f64>,
    pub per_label: BTreeMap<String, f64>,
}

impl ScoreReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("score report serializes");
        s.push('\n');
        s
    }

    /// `- | Total | <group>...` header and one row for `model`.
    pub fn to_table(&self, model: &str) -> String {
        let mut header = vec!["-".to_string(), "Total".to_string()];
        let mut row = vec![model.to_string(), fmt_score(self.total)];
        for (g, v) in &self.per_group {
            header.push(g.clone());
            row.push(fmt_score(*v));
        }
        let widths: Vec<usize> = header.iter().zip(&row).map(|(h, r)| h.len().max(r.len())).collect();
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            format!("| {} |\n", padded.join(" | "))
        };
        let rule: String = format!(
            "|{}|\n",
            widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|")
        );
        format!("{}{}{}", line(&header), rule, line(&row))
    }
}

fn fmt_score(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// Mean label score over every leaf, plus group means for tagged labels.
pub fn score_model(dg: &Dendrogram, reference: &ReferenceAnnotation) -> Result<ScoreReport> {
    let mut per_label = BTreeMap::new();
    let mut groups: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut total = 0.0;
    for (_, label) in dg.labels().iter() {
        let explanation = explain_label(dg, label)?;
        let score = score_label(&explanation, reference, label)?;
        total += score;
        per_label.insert(label.to_string(), score);
        if let Some(g) = reference.get(label).and_then(|e| e.group.clone()) {
            let acc = groups.entry(g).or_default();
            acc.0 += score;
            acc.1 += 1;
        }
    }
    Ok(ScoreReport {
        total: total / dg.leaf_count() as f64,
        per_group: groups.into_iter().map(|(g, (s, c))| (g, s / c as f64)).collect(),
        per_label,
    })
}
