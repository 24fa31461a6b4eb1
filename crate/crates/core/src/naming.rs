//! Concept names for dendrogram nodes.
//!
//! Every internal node is named after the lowest common hypernym of its members
//! unless a user override exists for it. Overrides are stored next to the hash of
//! the dendrogram they were made for so they cannot leak onto a re-clustered tree.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{Dendrogram, NodeId};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::ingest::LabelSet;

/// Hypernym chain per label, leaf first, shared root last.
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    root: String,
    chains: HashMap<String, Vec<String>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ChainSpec {
    Many(Vec<Vec<String>>),
    One(Vec<String>),
}

impl Taxonomy {
    /// Keeps the first chain listed per label. Labels outside `labels` are ignored.
    pub fn from_json(text: &str, labels: &LabelSet) -> Result<Self> {
        let raw: BTreeMap<String, ChainSpec> =
            serde_json::from_str(text).map_err(|e| Error::format("taxonomy file", e.to_string()))?;
        let mut chains = HashMap::with_capacity(labels.len());
        let mut missing = Vec::new();
        for (_, label) in labels.iter() {
            let first = match raw.get(label) {
                None => {
                    missing.push(label.to_string());
                    continue;
                }
                Some(ChainSpec::One(c)) => c.clone(),
                Some(ChainSpec::Many(cs)) => cs.first().cloned().unwrap_or_default(),
            };
            chains.insert(label.to_string(), first);
        }
        if !missing.is_empty() {
            return Err(Error::MissingTaxonomyLabels(missing));
        }
        Self::from_chains(labels.names().iter().map(|l| (l.clone(), chains.remove(l).unwrap())))
    }

    pub fn load(path: &Path, labels: &LabelSet) -> Result<Self> {
        Self::from_json(&fsutil::read_to_string(path)?, labels)
    }

    /// Chains that do not start with their label get the label prepended.
    pub fn from_chains<I, S>(chains: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<S>)>,
        S: Into<String>,
    {
        let mut root: Option<String> = None;
        let mut out = HashMap::new();
        for (label, chain) in chains {
            let label = label.into();
            let mut chain: Vec<String> = chain.into_iter().map(Into::into).collect();
            if chain.is_empty() {
                return Err(Error::format("taxonomy file", format!("empty chain for '{label}'")));
            }
            if chain[0] != label {
                chain.insert(0, label.clone());
            }
            let last = chain.last().unwrap();
            match &root {
                None => root = Some(last.clone()),
                Some(r) if r != last => {
                    return Err(Error::RootMismatch {
                        label,
                        found: last.clone(),
                        expected: r.clone(),
                    })
                }
                Some(_) => {}
            }
            out.insert(label, chain);
        }
        Ok(Taxonomy {
            root: root.unwrap_or_default(),
            chains: out,
        })
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn chain(&self, label: &str) -> Option<&[String]> {
        self.chains.get(label).map(Vec::as_slice)
    }

    /// The common hypernym of `members` farthest from the root, with its depth.
    ///
    /// A candidate's depth is its minimum distance from the root over the members'
    /// chains; the deepest candidate wins, ties go to the lexicographically smallest name.
    pub fn lowest_common_hypernym_with_depth<S: AsRef<str>>(&self, members: &[S]) -> Result<(String, usize)> {
        let chains: Vec<&[String]> = members
            .iter()
            .map(|m| self.chain(m.as_ref()).ok_or_else(|| Error::UnknownLabel(m.as_ref().to_string())))
            .collect::<Result<_>>()?;
        let Some((first, rest)) = chains.split_first() else {
            return Err(Error::Config("lowest common hypernym of an empty set".into()));
        };
        let depth_maps: Vec<HashMap<&str, usize>> = rest.iter().map(|c| depth_map(c)).collect();
        let mut best: Option<(&str, usize)> = None;
        for (candidate, depth0) in depth_map(first) {
            let mut depth = depth0;
            let mut common = true;
            for m in &depth_maps {
                match m.get(candidate) {
                    Some(&d) => depth = depth.min(d),
                    None => {
                        common = false;
                        break;
                    }
                }
            }
            if !common {
                continue;
            }
            let better = match best {
                None => true,
                Some((name, d)) => depth > d || (depth == d && candidate < name),
            };
            if better {
                best = Some((candidate, depth));
            }
        }
        let (name, depth) = best.expect("chains share the root");
        Ok((name.to_string(), depth))
    }

    pub fn lowest_common_hypernym<S: AsRef<str>>(&self, members: &[S]) -> Result<String> {
        self.lowest_common_hypernym_with_depth(members).map(|(n, _)| n)
    }
}

// Distance from the root; a name repeated within one chain keeps its deepest position.
fn depth_map(chain: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::with_capacity(chain.len());
    for (i, name) in chain.iter().enumerate().rev() {
        m.insert(name.as_str(), chain.len() - 1 - i);
    }
    m
}

/// Names every node: leaves by label, internal nodes by override or lowest common hypernym.
pub fn name_dendrogram(dg: &Dendrogram, tax: &Taxonomy, overrides: &NameOverrides) -> Result<Dendrogram> {
    let labels = dg.labels();
    let mut names = Vec::with_capacity(dg.node_count());
    for (node, members) in dg.all_members().into_iter().enumerate() {
        let name = if let Some(o) = overrides.get(node) {
            o.to_string()
        } else if dg.is_leaf(node) {
            labels.name(node).to_string()
        } else {
            let member_names: Vec<&str> = members.iter().map(|&m| labels.name(m)).collect();
            tax.lowest_common_hypernym(&member_names)?
        };
        names.push(Some(name));
    }
    Ok(dg.clone().with_names(names))
}

/// Applies overrides on top of whatever names `dg` already carries.
pub fn apply_overrides(dg: &Dendrogram, overrides: &NameOverrides) -> Dendrogram {
    let mut out = dg.clone();
    for (&node, name) in &overrides.map {
        if dg.contains(node) {
            out.set_name(node, Some(name.clone()));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub node: NodeId,
    pub old: Option<String>,
    pub new: String,
    pub timestamp: String,
}

/// User-supplied concept names keyed by node id, with an append-only audit trail.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameOverrides {
    map: BTreeMap<NodeId, String>,
    audit: Vec<AuditEntry>,
}

#[derive(Serialize, Deserialize)]
struct OverridesFile {
    dendrogram_hash: String,
    overrides: BTreeMap<NodeId, String>,
    #[serde(default)]
    audit: Vec<AuditEntry>,
}

impl NameOverrides {
    pub fn get(&self, node: NodeId) -> Option<&str> {
        self.map.get(&node).map(String::as_str)
    }

    pub fn map(&self) -> &BTreeMap<NodeId, String> {
        &self.map
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Last write wins. The name is trimmed; the previous effective name is audited.
    pub fn set_override(&mut self, dg: &Dendrogram, node: NodeId, name: &str) -> Result<()> {
        if !dg.contains(node) {
            return Err(Error::UnknownNode {
                node,
                count: dg.node_count(),
            });
        }
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::EmptyName);
        }
        let old = self
            .map
            .get(&node)
            .cloned()
            .or_else(|| dg.name(node).map(str::to_string));
        self.map.insert(node, name.to_string());
        self.audit.push(AuditEntry {
            node,
            old,
            new: name.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        });
        Ok(())
    }

    pub fn to_json(&self, dendrogram_hash: &str) -> String {
        let file = OverridesFile {
            dendrogram_hash: dendrogram_hash.to_string(),
            overrides: self.map.clone(),
            audit: self.audit.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("overrides serialize");
        s.push('\n');
        s
    }

    /// Parses an overrides file, rejecting one saved for a different dendrogram.
    pub fn from_json(text: &str, dendrogram_hash: &str) -> Result<Self> {
        let file: OverridesFile =
            serde_json::from_str(text).map_err(|e| Error::format("overrides file", e.to_string()))?;
        if file.dendrogram_hash != dendrogram_hash {
            return Err(Error::HashMismatch {
                expected: dendrogram_hash.to_string(),
                found: file.dendrogram_hash,
            });
        }
        if let Some((node, _)) = file.overrides.iter().find(|(_, n)| n.trim().is_empty()) {
            return Err(Error::format("overrides file", format!("empty name for node {node}")));
        }
        Ok(NameOverrides {
            map: file.overrides,
            audit: file.audit,
        })
    }

    /// A missing file means no overrides yet.
    pub fn load_or_default(path: &Path, dendrogram_hash: &str) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        Self::from_json(&fsutil::read_to_string(path)?, dendrogram_hash)
    }

    /// Atomic save (temp file + rename).
    pub fn save(&self, path: &Path, dendrogram_hash: &str) -> Result<()> {
        fsutil::write_atomic(path, self.to_json(dendrogram_hash).as_bytes())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::clustering::{agglomerate, LinkageKind};
    use crate::metric::DistanceMatrix;

    pub(crate) fn furniture_taxonomy() -> (LabelSet, Taxonomy) {
        let labels = LabelSet::from_names(["bed", "chair", "armchair", "monkey"]).unwrap();
        let tax = Taxonomy::from_json(
            r#"{
                "chair": ["chair", "furniture", "entity"],
                "bed": [["bed", "furniture", "entity"], ["bed", "bed_sense2", "entity"]],
                "armchair": ["armchair", "furniture", "entity"],
                "monkey": ["monkey", "primate", "mammal", "entity"]
            }"#,
            &labels,
        )
        .unwrap();
        (labels, tax)
    }

    /// bed+chair at 0.1, +armchair at 0.2, +monkey at 0.9.
    pub(crate) fn furniture_dendrogram() -> Dendrogram {
        let (labels, _) = furniture_taxonomy();
        #[rustfmt::skip]
        let d = vec![
            0.0, 0.1, 0.2, 0.9,
            0.1, 0.0, 0.2, 0.9,
            0.2, 0.2, 0.0, 0.9,
            0.9, 0.9, 0.9, 0.0,
        ];
        agglomerate(&DistanceMatrix::from_distances(4, d), &labels, LinkageKind::Average).unwrap()
    }

    #[test]
    fn lch_examples() {
        let (_, tax) = furniture_taxonomy();
        assert_eq!(tax.root(), "entity");
        assert_eq!(tax.lowest_common_hypernym(&["bed", "chair"]).unwrap(), "furniture");
        assert_eq!(
            tax.lowest_common_hypernym(&["chair", "bed", "armchair", "monkey"]).unwrap(),
            "entity"
        );
        assert_eq!(tax.lowest_common_hypernym(&["chair"]).unwrap(), "chair");
        assert!(tax.lowest_common_hypernym(&["unicorn"]).is_err());
        assert!(tax.lowest_common_hypernym::<&str>(&[]).is_err());
    }

    #[test]
    fn first_chain_is_kept() {
        let (_, tax) = furniture_taxonomy();
        assert_eq!(tax.chain("bed").unwrap(), ["bed", "furniture", "entity"]);
    }

    #[test]
    fn root_mismatch() {
        let labels = LabelSet::from_names(["chair", "bed"]).unwrap();
        let err = Taxonomy::from_json(
            r#"{"chair": ["chair","furniture","entity"], "bed": ["bed","furniture"]}"#,
            &labels,
        )
        .unwrap_err();
        assert!(matches!(err, Error::RootMismatch { ref label, .. } if label == "bed"), "{err}");
    }

    #[test]
    fn missing_labels_are_listed() {
        let labels = LabelSet::from_names(["chair", "bed", "lamp"]).unwrap();
        let err = Taxonomy::from_json(r#"{"chair": ["chair","entity"]}"#, &labels).unwrap_err();
        assert_eq!(err.to_string(), "taxonomy is missing labels: bed, lamp");
    }

    #[test]
    fn chain_without_leaf_gets_label_prepended() {
        let labels = LabelSet::from_names(["Granny Smith"]).unwrap();
        let tax = Taxonomy::from_json(r#"{"Granny Smith": ["apple", "fruit", "entity"]}"#, &labels).unwrap();
        assert_eq!(tax.chain("Granny Smith").unwrap()[0], "Granny Smith");
    }

    #[test]
    fn depth_ties_break_lexicographically() {
        let tax = Taxonomy::from_chains([
            ("a", vec!["a", "zeta", "alpha", "root"]),
            ("b", vec!["b", "alpha", "zeta", "root"]),
        ])
        .unwrap();
        // zeta: depths 2 and 1 -> 1; alpha: 1 and 2 -> 1; tie -> "alpha".
        assert_eq!(tax.lowest_common_hypernym(&["a", "b"]).unwrap(), "alpha");
    }

    #[test]
    fn furniture_naming() {
        let (_, tax) = furniture_taxonomy();
        let dg = furniture_dendrogram();
        let named = name_dendrogram(&dg, &tax, &NameOverrides::default()).unwrap();
        assert_eq!(named.name(4), Some("furniture")); // {bed, chair}
        assert_eq!(named.name(5), Some("furniture")); // + armchair
        assert_eq!(named.name(6), Some("entity"));
        assert_eq!(named.name(1), Some("chair"));
    }

    #[test]
    fn override_precedence() {
        let (_, tax) = furniture_taxonomy();
        let dg = furniture_dendrogram();
        let mut o = NameOverrides::default();
        o.set_override(&dg, 6, "things").unwrap();
        let named = name_dendrogram(&dg, &tax, &o).unwrap();
        assert_eq!(named.name(6), Some("things"));
        assert_eq!(named.name(5), Some("furniture"));
    }

    #[test]
    fn set_override_rules() {
        let dg = furniture_dendrogram();
        let mut o = NameOverrides::default();
        o.set_override(&dg, 5, "water birds").unwrap();
        o.set_override(&dg, 5, "  waterfowl ").unwrap();
        assert_eq!(o.get(5), Some("waterfowl"));
        assert_eq!(o.audit().len(), 2);
        assert_eq!(o.audit()[1].old.as_deref(), Some("water birds"));
        assert!(matches!(o.set_override(&dg, 5, "  "), Err(Error::EmptyName)));
        assert!(matches!(o.set_override(&dg, 9999, "x"), Err(Error::UnknownNode { .. })));
        assert_eq!(o.audit().len(), 2);
    }

    #[test]
    fn overrides_persist_against_hash() {
        let dg = furniture_dendrogram();
        let hash = dg.content_hash();
        let mut o = NameOverrides::default();
        o.set_override(&dg, 6, "food").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("overrides.json");
        o.save(&path, &hash).unwrap();
        assert_eq!(NameOverrides::load_or_default(&path, &hash).unwrap(), o);
        assert!(matches!(
            NameOverrides::load_or_default(&path, "other"),
            Err(Error::HashMismatch { .. })
        ));
        let absent = dir.path().join("none.json");
        assert!(NameOverrides::load_or_default(&absent, &hash).unwrap().is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_taxonomy() -> impl Strategy<Value = Taxonomy> {
            // Chains drawn from a small vocabulary so members share intermediate concepts.
            proptest::collection::vec(proptest::collection::vec(0u8..6, 0..4), 1..7).prop_map(|chains| {
                Taxonomy::from_chains(chains.into_iter().enumerate().map(|(i, mids)| {
                    let mut c = vec![format!("l{i}")];
                    c.extend(mids.into_iter().map(|m| format!("c{m}")));
                    c.push("root".to_string());
                    (format!("l{i}"), c)
                }))
                .unwrap()
            })
        }

        proptest! {
            #[test]
            fn lch_is_permutation_invariant_and_monotone(
                tax in arb_taxonomy(),
                picks in proptest::collection::vec(0usize..7, 1..6),
                extra in 0usize..7,
            ) {
                let n = tax.chains.len();
                let members: Vec<String> = picks.iter().map(|p| format!("l{}", p % n)).collect();
                let (name, depth) = tax.lowest_common_hypernym_with_depth(&members).unwrap();
                let mut rev = members.clone();
                rev.reverse();
                prop_assert_eq!(tax.lowest_common_hypernym(&rev).unwrap(), name);
                let mut more = members.clone();
                more.push(format!("l{}", extra % n));
                let (_, d2) = tax.lowest_common_hypernym_with_depth(&more).unwrap();
                prop_assert!(d2 <= depth);
            }
        }
    }
}
