//! All-pairs shortest-path metric over the connection graph.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::graph::ConnectionGraph;
use crate::ingest::LabelId;

/// Multiplier applied to the largest finite distance to obtain the cap for
/// pairs in different connected components.
pub const CAP_FACTOR: f64 = 1.5;

// Below this size the sweep runs on the calling thread.
const PARALLEL_MIN_N: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
    cap_value: f64,
    /// Connected components before capping, ordered by smallest member.
    components: Vec<Vec<LabelId>>,
    component_of: Vec<usize>,
}

impl DistanceMatrix {
    /// Builds a matrix from raw distances, e.g. for clustering arbitrary metrics.
    /// Infinite entries are capped exactly as in [`shortest_path_metric`].
    pub fn from_distances(n: usize, d: Vec<f64>) -> Self {
        assert_eq!(d.len(), n * n, "distance matrix must be n x n");
        let (component_of, components) = components_of(n, &d);
        let max_finite = max_finite_off_diagonal(n, &d);
        let cap_value = match max_finite {
            Some(m) if m > 0.0 => CAP_FACTOR * m,
            _ => 1.0,
        };
        let mut d = d;
        for i in 0..n {
            for j in 0..n {
                if component_of[i] != component_of[j] {
                    d[i * n + j] = cap_value;
                }
            }
        }
        DistanceMatrix {
            n,
            d,
            cap_value,
            components,
            component_of,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: LabelId, j: LabelId) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }

    pub fn cap_value(&self) -> f64 {
        self.cap_value
    }

    pub fn components(&self) -> &[Vec<LabelId>] {
        &self.components
    }

    /// Whether the entry was substituted by the cap (endpoints in different components).
    pub fn is_capped(&self, i: LabelId, j: LabelId) -> bool {
        self.component_of[i] != self.component_of[j]
    }

    /// Header `n=<n>\tcap=<cap>`, then n rows of tab-separated values with 12 decimals.
    pub fn to_dump(&self) -> String {
        let mut out = format!("n={}\tcap={:.12}\n", self.n, self.cap_value);
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push('\t');
                }
                let _ = write!(out, "{:.12}", self.get(i, j));
            }
            out.push('\n');
        }
        out
    }
}

/// Floyd-Warshall over the graph weights; unreachable pairs stay infinite.
pub fn all_pairs_shortest_paths(g: &ConnectionGraph) -> Vec<f64> {
    let n = g.len();
    let mut d = g.weights().to_vec();
    let mut via = vec![0.0; n];
    for k in 0..n {
        via.copy_from_slice(&d[k * n..(k + 1) * n]);
        let relax = |row: &mut [f64]| {
            let dik = row[k];
            if dik.is_infinite() {
                return;
            }
            for (dij, &dkj) in row.iter_mut().zip(&via) {
                let cand = dik + dkj;
                if cand < *dij {
                    *dij = cand;
                }
            }
        };
        if n >= PARALLEL_MIN_N {
            d.par_chunks_mut(n).for_each(relax);
        } else {
            d.chunks_mut(n).for_each(relax);
        }
    }
    d
}

/// Shortest-path metric with cross-component pairs set to
/// `cap = 1.5 * max finite distance` (1.0 when there is no positive finite distance).
pub fn shortest_path_metric(g: &ConnectionGraph) -> DistanceMatrix {
    DistanceMatrix::from_distances(g.len(), all_pairs_shortest_paths(g))
}

fn max_finite_off_diagonal(n: usize, d: &[f64]) -> Option<f64> {
    let mut max = None;
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let v = d[i * n + j];
            if v.is_finite() && max.is_none_or(|m| v > m) {
                max = Some(v);
            }
        }
    }
    max
}

fn components_of(n: usize, d: &[f64]) -> (Vec<usize>, Vec<Vec<LabelId>>) {
    const UNSET: usize = usize::MAX;
    let mut component_of = vec![UNSET; n];
    let mut components = Vec::new();
    for i in 0..n {
        if component_of[i] != UNSET {
            continue;
        }
        let id = components.len();
        let members: Vec<LabelId> = (0..n)
            .filter(|&j| j == i || (component_of[j] == UNSET && d[i * n + j].is_finite()))
            .collect();
        for &m in &members {
            component_of[m] = id;
        }
        components.push(members);
    }
    (component_of, components)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> ConnectionGraph {
        let mut g = ConnectionGraph::disconnected(n);
        for &(i, j, w) in edges {
            g.set_edge(i, j, w);
        }
        g
    }

    #[test]
    fn path_through_middle() {
        let d = shortest_path_metric(&graph(3, &[(0, 1, 0.9), (1, 2, 0.9)]));
        assert_eq!(d.get(0, 2), 1.8);
        assert_eq!(d.get(2, 0), 1.8);
        assert_eq!(d.components().len(), 1);
        assert_eq!(d.cap_value(), 1.5 * 1.8);
    }

    #[test]
    fn no_finite_edge_caps_at_one() {
        let d = shortest_path_metric(&graph(2, &[]));
        assert_eq!(d.cap_value(), 1.0);
        assert_eq!(d.get(0, 1), 1.0);
        assert_eq!(d.get(0, 0), 0.0);
        assert!(d.is_capped(0, 1));
    }

    #[test]
    fn path_graph_sums_edges() {
        let d = shortest_path_metric(&graph(4, &[(0, 1, 0.91), (1, 2, 0.97), (2, 3, 0.93)]));
        assert!((d.get(0, 3) - (0.91 + 0.97 + 0.93)).abs() < 1e-12);
    }

    #[test]
    fn shortcut_beats_direct_edge() {
        let d = shortest_path_metric(&graph(3, &[(0, 1, 0.2), (1, 2, 0.2), (0, 2, 0.9)]));
        assert!((d.get(0, 2) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn components_and_cap() {
        let g = graph(5, &[(0, 2, 0.5), (1, 3, 0.8), (3, 4, 0.9)]);
        let d = shortest_path_metric(&g);
        assert_eq!(d.components(), &[vec![0, 2], vec![1, 3, 4]]);
        let max = 0.8 + 0.9;
        assert_eq!(d.cap_value(), 1.5 * max);
        assert_eq!(d.get(0, 1), d.cap_value());
        assert_eq!(d.get(2, 4), d.cap_value());
        assert!(!d.is_capped(1, 4));
    }

    #[test]
    fn zero_weight_edges_still_get_a_positive_cap() {
        let d = shortest_path_metric(&graph(3, &[(0, 1, 0.0)]));
        assert_eq!(d.cap_value(), 1.0);
        assert_eq!(d.get(0, 2), 1.0);
    }

    #[test]
    fn parallel_sweep_matches_serial() {
        use rand::{Rng, SeedableRng};
        let n = PARALLEL_MIN_N + 7;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut g = ConnectionGraph::disconnected(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(0.05) {
                    g.set_edge(i, j, rng.random::<f64>());
                }
            }
        }
        let par = all_pairs_shortest_paths(&g);
        // Serial reference: the textbook triple loop.
        let mut d = g.weights().to_vec();
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let c = d[i * n + k] + d[k * n + j];
                    if c < d[i * n + j] {
                        d[i * n + j] = c;
                    }
                }
            }
        }
        assert_eq!(par, d);
    }

    #[test]
    fn dump_format() {
        let d = shortest_path_metric(&graph(2, &[(0, 1, 0.25)]));
        assert_eq!(
            d.to_dump(),
            "n=2\tcap=0.375000000000\n0.000000000000\t0.250000000000\n0.250000000000\t0.000000000000\n"
        );
    }
}
