//! Synthetic probability logs with a planted two-level concept hierarchy.
//!
//! Labels are arranged as `groups × subgroups × labels`. Every image gives its true
//! label mass `1 - ε_s - ε_g`, spreads `ε_s` randomly over the labels of its own
//! subgroup and `ε_g` over the rest of its group; other groups get nothing. The
//! matching taxonomy is `label → subgroup → group → entity`, and the reference
//! annotation is `[subgroup, group]` per label.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{ReferenceAnnotation, ReferenceEntry};
use crate::fsutil;
use crate::ingest::{self, ClassificationRecord, LabelId, LabelSet};

pub const ROOT_CONCEPT: &str = "entity";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub groups: usize,
    pub subgroups: usize,
    pub labels_per_subgroup: usize,
    pub eps_subgroup: f64,
    pub eps_group: f64,
    pub images_per_label: usize,
    /// Entries kept per record.
    pub top_m: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            groups: 2,
            subgroups: 2,
            labels_per_subgroup: 3,
            eps_subgroup: 0.05,
            eps_group: 0.01,
            images_per_label: 20,
            top_m: 10,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.groups == 0 || self.subgroups == 0 || self.labels_per_subgroup == 0 {
            return bad("groups, subgroups and labels per subgroup must all be at least 1");
        }
        if self.images_per_label == 0 || self.top_m == 0 {
            return bad("images per label and top-m must be at least 1");
        }
        let (s, g) = (self.eps_subgroup, self.eps_group);
        if !(s.is_finite() && g.is_finite()) || s < 0.0 || g < 0.0 {
            return bad("epsilons must be finite and non-negative");
        }
        if g > s {
            return bad("the group epsilon may not exceed the subgroup epsilon");
        }
        if s + g >= 0.5 {
            return bad("epsilons must sum below 0.5 so the true label stays on top");
        }
        Ok(())
    }

    pub fn label_count(&self) -> usize {
        self.groups * self.subgroups * self.labels_per_subgroup
    }

    fn coords(&self, id: LabelId) -> (usize, usize, usize) {
        let per_group = self.subgroups * self.labels_per_subgroup;
        (
            id / per_group,
            (id % per_group) / self.labels_per_subgroup,
            id % self.labels_per_subgroup,
        )
    }
}

pub fn label_name(g: usize, s: usize, l: usize) -> String {
    format!("g{g}.s{s}.l{l}")
}

pub fn subgroup_concept(g: usize, s: usize) -> String {
    format!("g{g}.s{s}")
}

pub fn group_concept(g: usize) -> String {
    format!("g{g}")
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub labels: LabelSet,
    pub records: Vec<ClassificationRecord>,
    /// `label → [chain]` in taxonomy-file layout.
    pub taxonomy: BTreeMap<String, Vec<Vec<String>>>,
    pub reference: ReferenceAnnotation,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let n = cfg.label_count();
    let labels = LabelSet::from_names((0..n).map(|id| {
        let (g, s, l) = cfg.coords(id);
        label_name(g, s, l)
    }))?;

    let mut taxonomy = BTreeMap::new();
    let mut reference = ReferenceAnnotation::default();
    for (id, name) in labels.iter() {
        let (g, s, _) = cfg.coords(id);
        let chain = vec![
            name.to_string(),
            subgroup_concept(g, s),
            group_concept(g),
            ROOT_CONCEPT.to_string(),
        ];
        taxonomy.insert(name.to_string(), vec![chain]);
        reference.entries.insert(
            name.to_string(),
            ReferenceEntry {
                concepts: vec![subgroup_concept(g, s), group_concept(g)],
                group: Some(group_concept(g)),
            },
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(n * cfg.images_per_label);
    for id in 0..n {
        let (g, s, _) = cfg.coords(id);
        let siblings: Vec<LabelId> = (0..n)
            .filter(|&o| o != id && cfg.coords(o).0 == g && cfg.coords(o).1 == s)
            .collect();
        let mates: Vec<LabelId> = (0..n)
            .filter(|&o| cfg.coords(o).0 == g && cfg.coords(o).1 != s)
            .collect();
        let eps_s = if siblings.is_empty() { 0.0 } else { cfg.eps_subgroup };
        let eps_g = if mates.is_empty() { 0.0 } else { cfg.eps_group };
        for img in 0..cfg.images_per_label {
            let mut entries = vec![(id, 1.0 - eps_s - eps_g)];
            spread(&mut rng, eps_s, &siblings, &mut entries);
            spread(&mut rng, eps_g, &mates, &mut entries);
            entries.retain(|&(_, p)| p > 0.0);
            ingest::sort_entries(&mut entries);
            entries.truncate(cfg.top_m);
            records.push(ClassificationRecord {
                image_id: format!("{}#{img}", labels.name(id)),
                true_label: id,
                entries,
            });
        }
    }

    Ok(SynthData {
        labels,
        records,
        taxonomy,
        reference,
    })
}

// Random split of `mass` over `targets` (normalized exponential draws).
fn spread(rng: &mut ChaCha8Rng, mass: f64, targets: &[LabelId], out: &mut Vec<(LabelId, f64)>) {
    if targets.is_empty() {
        return;
    }
    let draws: Vec<f64> = targets
        .iter()
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = draws.iter().sum();
    for (&t, w) in targets.iter().zip(draws) {
        let p = if total > 0.0 { mass * w / total } else { mass / targets.len() as f64 };
        out.push((t, p));
    }
}

/// Paths written by [`write`].
#[derive(Debug, Clone)]
pub struct SynthPaths {
    pub labels: PathBuf,
    pub log: PathBuf,
    pub taxonomy: PathBuf,
    pub reference: PathBuf,
}

impl SynthPaths {
    pub fn in_dir(dir: &Path) -> Self {
        SynthPaths {
            labels: dir.join("labels.txt"),
            log: dir.join("log.jsonl"),
            taxonomy: dir.join("taxonomy.json"),
            reference: dir.join("reference.json"),
        }
    }
}

pub fn write(data: &SynthData, dir: &Path) -> Result<SynthPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = SynthPaths::in_dir(dir);
    fsutil::write_atomic(&paths.labels, data.labels.to_file_string().as_bytes())?;
    fsutil::write_atomic(&paths.log, ingest::write_log_string(&data.records, &data.labels).as_bytes())?;
    let mut tax = serde_json::to_string_pretty(&data.taxonomy).expect("taxonomy serializes");
    tax.push('\n');
    fsutil::write_atomic(&paths.taxonomy, tax.as_bytes())?;
    fsutil::write_atomic(&paths.reference, data.reference.to_json().as_bytes())?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nma;

    #[test]
    fn shape_and_mass() {
        let data = generate(&SynthConfig::default()).unwrap();
        assert_eq!(data.labels.len(), 12);
        assert_eq!(data.records.len(), 12 * 20);
        assert_eq!(data.labels.name(7), "g1.s0.l1");
        for r in &data.records {
            assert!(nma::is_correct(r));
            let total: f64 = r.entries.iter().map(|e| e.1).sum();
            assert!((total - 1.0).abs() < 1e-12);
            // No cross-group mass.
            let g = r.true_label / 6;
            assert!(r.entries.iter().all(|&(l, _)| l / 6 == g));
        }
        assert_eq!(data.taxonomy["g1.s0.l1"][0], ["g1.s0.l1", "g1.s0", "g1", "entity"]);
        assert_eq!(data.reference.get("g1.s0.l1").unwrap().concepts, ["g1.s0", "g1"]);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&SynthConfig::default()).unwrap();
        let b = generate(&SynthConfig::default()).unwrap();
        assert_eq!(
            ingest::write_log_string(&a.records, &a.labels),
            ingest::write_log_string(&b.records, &b.labels)
        );
        let c = generate(&SynthConfig { seed: 43, ..Default::default() }).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn zero_epsilon_gives_single_entries() {
        let cfg = SynthConfig {
            eps_subgroup: 0.0,
            eps_group: 0.0,
            ..Default::default()
        };
        let data = generate(&cfg).unwrap();
        assert!(data.records.iter().all(|r| r.entries.len() == 1 && r.entries[0].1 == 1.0));
    }

    #[test]
    fn top_m_truncates() {
        let cfg = SynthConfig { top_m: 2, ..Default::default() };
        assert!(generate(&cfg).unwrap().records.iter().all(|r| r.entries.len() == 2));
    }

    #[test]
    fn invalid_shapes() {
        let base = SynthConfig::default();
        for bad in [
            SynthConfig { groups: 0, ..base.clone() },
            SynthConfig { images_per_label: 0, ..base.clone() },
            SynthConfig { eps_group: 0.06, ..base.clone() },
            SynthConfig { eps_subgroup: 0.45, eps_group: 0.1, ..base.clone() },
            SynthConfig { eps_subgroup: -0.1, ..base.clone() },
            SynthConfig { top_m: 0, ..base.clone() },
        ] {
            assert!(generate(&bad).is_err(), "{bad:?}");
        }
    }
}
