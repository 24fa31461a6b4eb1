//! Near-miss extraction.
//!
//! The near misses of a record are `top-k ∩ {p >= t}` of its sorted entries,
//! minus the true label.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ClassificationRecord, LabelId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmaConfig {
    pub k: usize,
    pub t: f64,
    /// Only correctly classified records contribute to the graph.
    pub correct_only: bool,
}

impl Default for NmaConfig {
    fn default() -> Self {
        NmaConfig {
            k: 3,
            t: 1e-6,
            correct_only: true,
        }
    }
}

impl NmaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.t) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.t)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NearMissSet {
    pub source_label: LabelId,
    pub misses: Vec<(LabelId, f64)>,
}

pub fn is_correct(record: &ClassificationRecord) -> bool {
    record.argmax() == record.true_label
}

pub fn extract_near_misses(record: &ClassificationRecord, cfg: &NmaConfig) -> NearMissSet {
    let misses = record
        .entries
        .iter()
        .take(cfg.k)
        .filter(|&&(label, p)| p >= cfg.t && label != record.true_label)
        .copied()
        .collect();
    NearMissSet {
        source_label: record.true_label,
        misses,
    }
}

/// Records that take part in graph construction under `cfg`.
pub fn contributing<'a>(
    records: &'a [ClassificationRecord],
    cfg: &'a NmaConfig,
) -> impl Iterator<Item = &'a ClassificationRecord> + 'a {
    records.iter().filter(move |r| !cfg.correct_only || is_correct(r))
}
