//! Directed communication topologies, the in-degree normalized adjacency
//! matrix and its spectrum.
//!
//! Agents are 1-indexed in every text format and error message; internally
//! they are stored 0-indexed.

use std::collections::VecDeque;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{EigenError, RealMatrix};

/// Eigenvalues with `|Im| < REAL_TOL` are tagged real.
pub const REAL_TOL: f64 = 1e-9;
/// Eigenvalues closer than this are treated as one cluster.
pub const CLUSTER_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid JSON topology: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing agent count (expected a line `n <count>`)")]
    MissingCount,
    #[error("a topology needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("agent {agent} has no informers")]
    NoInformers { agent: usize },
    #[error("self-loop on agent {agent}")]
    SelfLoop { agent: usize },
    #[error("agent index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("duplicate edge {from} -> {to}")]
    DuplicateEdge { from: usize, to: usize },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Who listens to whom. `informers[j]` is the sorted set of agents agent `j`
/// receives delayed position and velocity from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DirectedTopology {
    n: usize,
    informers: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct JsonTopology {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl DirectedTopology {
    /// Builds a topology from 1-indexed edges `(k, j)` meaning `k` informs `j`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        if n < 2 {
            return Err(TopologyError::TooFewAgents(n));
        }
        let mut informers = vec![Vec::new(); n];
        for &(from, to) in edges {
            for index in [from, to] {
                if index == 0 || index > n {
                    return Err(TopologyError::IndexOutOfRange { index, n });
                }
            }
            if from == to {
                return Err(TopologyError::SelfLoop { agent: from });
            }
            let set: &mut Vec<usize> = &mut informers[to - 1];
            if set.contains(&(from - 1)) {
                return Err(TopologyError::DuplicateEdge { from, to });
            }
            set.push(from - 1);
        }
        for (j, set) in informers.iter_mut().enumerate() {
            if set.is_empty() {
                return Err(TopologyError::NoInformers { agent: j + 1 });
            }
            set.sort_unstable();
        }
        Ok(Self { n, informers })
    }

    /// Parses either the edge-list text format or the JSON form
    /// `{"n": 5, "edges": [[2, 1], ...]}`.
    pub fn parse(document: &str) -> Result<Self, TopologyError> {
        if document.trim_start().starts_with('{') {
            let parsed: JsonTopology = serde_json::from_str(document)?;
            let edges: Vec<_> = parsed.edges.iter().map(|e| (e[0], e[1])).collect();
            return Self::from_edges(parsed.n, &edges);
        }
        let mut n = None;
        let mut edges = Vec::new();
        for (idx, raw) in document.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_index = |s: &str| {
                s.trim().parse::<usize>().map_err(|_| TopologyError::Parse {
                    line: line_no,
                    message: format!("`{}` is not an agent index", s.trim()),
                })
            };
            match n {
                None => {
                    let mut parts = line.split_whitespace();
                    match (parts.next(), parts.next(), parts.next()) {
                        (Some("n"), Some(count), None) => n = Some(parse_index(count)?),
                        _ => {
                            return Err(TopologyError::Parse {
                                line: line_no,
                                message: format!("expected `n <count>`, found `{line}`"),
                            })
                        }
                    }
                }
                Some(_) => {
                    let Some((from, to)) = line.split_once("->") else {
                        return Err(TopologyError::Parse {
                            line: line_no,
                            message: format!("expected `k -> j`, found `{line}`"),
                        });
                    };
                    edges.push((parse_index(from)?, parse_index(to)?));
                }
            }
        }
        Self::from_edges(n.ok_or(TopologyError::MissingCount)?, &edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TopologyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn agent_count(&self) -> usize {
        self.n
    }

    /// 0-indexed informers of 0-indexed agent `j`.
    pub fn informers(&self, j: usize) -> &[usize] {
        &self.informers[j]
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        self.informers.iter().map(Vec::len).collect()
    }

    /// 1-indexed edge list `(k, j)`, `k` informs `j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (j, set) in self.informers.iter().enumerate() {
            for &k in set {
                out.push((k + 1, j + 1));
            }
        }
        out
    }

    /// Agents reachable from `root` following information flow (k -> j).
    pub fn reachable_from(&self, root: usize) -> Vec<bool> {
        let mut followers = vec![Vec::new(); self.n];
        for (j, set) in self.informers.iter().enumerate() {
            for &k in set {
                followers[k].push(j);
            }
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(k) = queue.pop_front() {
            for &j in &followers[k] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    /// True iff some agent reaches every other agent along information flow.
    pub fn has_spanning_tree(&self) -> bool {
        (0..self.n).any(|r| self.reachable_from(r).iter().all(|&b| b))
    }

    /// `C = diag(δ)^-1 A`: `C[j][k] = 1/δ_j` when `k` informs `j`.
    pub fn adjacency_matrix(&self) -> RealMatrix {
        let mut c = RealMatrix::zeros(self.n);
        for (j, set) in self.informers.iter().enumerate() {
            let w = 1.0 / set.len() as f64;
            for &k in set {
                c[(j, k)] = w;
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenKind {
    Real,
    /// Member of a conjugate pair with positive imaginary part (the representative).
    PairUpper,
    PairLower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub value: Complex64,
    pub kind: EigenKind,
}

/// All `n` eigenvalues, sorted by descending real part (upper pair member first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<Eigenvalue>,
}

impl Spectrum {
    /// One entry per factor: every real eigenvalue and the upper member of each pair.
    pub fn representatives(&self) -> impl Iterator<Item = &Eigenvalue> {
        self.eigenvalues.iter().filter(|e| e.kind != EigenKind::PairLower)
    }

    /// How many eigenvalues sit within [`CLUSTER_TOL`] of 1.
    pub fn unit_multiplicity(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|e| (e.value - Complex64::new(1.0, 0.0)).norm() < CLUSTER_TOL)
            .count()
    }

    /// Groups eigenvalues lying within [`CLUSTER_TOL`] of each other.
    pub fn clusters(&self) -> Vec<Vec<Complex64>> {
        let mut clusters: Vec<Vec<Complex64>> = Vec::new();
        for e in &self.eigenvalues {
            match clusters
                .iter_mut()
                .find(|c| c.iter().any(|v| (v - e.value).norm() < CLUSTER_TOL))
            {
                Some(c) => c.push(e.value),
                None => clusters.push(vec![e.value]),
            }
        }
        clusters
    }
}

/// Eigenvalues of `c`, classified and sorted.
pub fn spectrum(c: &RealMatrix) -> Result<Spectrum, EigenError> {
    let raw = c.eigenvalues()?;
    let mut eigenvalues = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        let v = raw[i];
        // the solver emits pairs adjacently as (upper, conj(upper))
        let paired = v.im != 0.0 && i + 1 < raw.len() && raw[i + 1] == v.conj();
        if paired {
            // a pair from a 2x2 block stays a pair even below REAL_TOL (conjugate symmetry)
            let upper = Complex64::new(v.re, v.im.abs());
            eigenvalues.push(Eigenvalue { value: upper, kind: EigenKind::PairUpper });
            eigenvalues.push(Eigenvalue { value: upper.conj(), kind: EigenKind::PairLower });
            i += 2;
        } else {
            eigenvalues.push(Eigenvalue { value: Complex64::new(v.re, 0.0), kind: EigenKind::Real });
            i += 1;
        }
    }
    eigenvalues.sort_by(|a, b| {
        b.value
            .re
            .total_cmp(&a.value.re)
            .then(b.value.im.total_cmp(&a.value.im))
    });
    Ok(Spectrum { eigenvalues })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightedAdjacency {
    pub matrix: RealMatrix,
    pub spectrum: Spectrum,
    pub spanning_tree: bool,
}

impl WeightedAdjacency {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

pub fn weighted_adjacency(topology: &DirectedTopology) -> Result<WeightedAdjacency, EigenError> {
    let matrix = topology.adjacency_matrix();
    let spectrum = spectrum(&matrix)?;
    Ok(WeightedAdjacency {
        matrix,
        spectrum,
        spanning_tree: topology.has_spanning_tree(),
    })
}

/// The five-agent directed topology used by the examples and regression tests.
pub fn five_agent_example() -> DirectedTopology {
    DirectedTopology::from_edges(
        5,
        &[(2, 1), (1, 2), (4, 2), (2, 3), (4, 3), (3, 4), (5, 4), (2, 5), (3, 5)],
    )
    .expect("static topology is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_five_agent_topology() {
        let text = include_str!("../data/five_agent.edges");
        let t = DirectedTopology::parse(text).unwrap();
        assert_eq!(t.in_degrees(), vec![1, 2, 2, 2, 2]);
        assert_eq!(t, five_agent_example());
        assert_eq!(t.informers(1), &[0, 3]);
    }

    #[test]
    fn loads_mutual_pair_and_json() {
        let t = DirectedTopology::parse("n 2\n1 -> 2\n2 -> 1\n").unwrap();
        assert_eq!(t.in_degrees(), vec![1, 1]);
        let j = DirectedTopology::parse(r#"{"n": 2, "edges": [[1, 2], [2, 1]]}"#).unwrap();
        assert_eq!(t, j);
    }

    #[test]
    fn load_errors_are_distinct() {
        let e = DirectedTopology::parse("n 3\n1 -> 2\n2 -> 1\n").unwrap_err();
        assert_eq!(e.to_string(), "agent 3 has no informers");
        assert!(matches!(
            DirectedTopology::parse("n 2\n1 -> 1\n2 -> 1\n"),
            Err(TopologyError::SelfLoop { agent: 1 })
        ));
        assert!(matches!(
            DirectedTopology::parse("n 2\n1 -> 3\n2 -> 1\n"),
            Err(TopologyError::IndexOutOfRange { index: 3, n: 2 })
        ));
        assert!(matches!(
            DirectedTopology::parse("n 2\n1 -> 2\n1 -> 2\n2 -> 1\n"),
            Err(TopologyError::DuplicateEdge { from: 1, to: 2 })
        ));
        assert!(matches!(DirectedTopology::parse("# nothing\n"), Err(TopologyError::MissingCount)));
        assert!(matches!(
            DirectedTopology::parse("n 2\n1 2\n"),
            Err(TopologyError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn adjacency_of_five_agent_topology() {
        let c = five_agent_example().adjacency_matrix();
        let expect = [
            [0.0, 1.0, 0.0, 0.0, 0.0],
            [0.5, 0.0, 0.0, 0.5, 0.0],
            [0.0, 0.5, 0.0, 0.5, 0.0],
            [0.0, 0.0, 0.5, 0.0, 0.5],
            [0.0, 0.5, 0.5, 0.0, 0.0],
        ];
        for (i, row) in expect.iter().enumerate() {
            assert_eq!(c.row(i), row);
            assert_eq!(c.row(i).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn spectrum_of_five_agent_topology() {
        let w = weighted_adjacency(&five_agent_example()).unwrap();
        let ev: Vec<_> = w.spectrum.eigenvalues.iter().map(|e| e.value).collect();
        let expect = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.38, 0.0),
            Complex64::new(-0.44, 0.37),
            Complex64::new(-0.44, -0.37),
            Complex64::new(-0.5, 0.0),
        ];
        for (e, x) in ev.iter().zip(expect) {
            assert!((e.re - x.re).abs() < 0.01 && (e.im - x.im).abs() < 0.01, "{e} vs {x}");
        }
        assert_eq!(w.spectrum.representatives().count(), 4);
        assert_eq!(w.spectrum.unit_multiplicity(), 1);
        assert!(w.spanning_tree);
    }

    #[test]
    fn spectrum_of_mutual_pair_and_ring() {
        let pair = DirectedTopology::parse("n 2\n1 -> 2\n2 -> 1").unwrap();
        let s = spectrum(&pair.adjacency_matrix()).unwrap();
        assert!((s.eigenvalues[0].value.re - 1.0).abs() < 1e-14);
        assert!((s.eigenvalues[1].value.re + 1.0).abs() < 1e-14);

        let ring = DirectedTopology::from_edges(3, &[(1, 2), (2, 3), (3, 1)]).unwrap();
        let s = spectrum(&ring.adjacency_matrix()).unwrap();
        let h = 3f64.sqrt() / 2.0;
        let expect = [
            Complex64::new(1.0, 0.0),
            Complex64::new(-0.5, h),
            Complex64::new(-0.5, -h),
        ];
        for (e, x) in s.eigenvalues.iter().zip(expect) {
            assert!((e.value - x).norm() < 1e-12, "{} vs {x}", e.value);
        }
        assert_eq!(s.eigenvalues[1].kind, EigenKind::PairUpper);
    }

    #[test]
    fn spanning_tree_cases() {
        assert!(five_agent_example().has_spanning_tree());
        let pairs = DirectedTopology::parse(include_str!("../data/two_pairs.edges")).unwrap();
        assert!(!pairs.has_spanning_tree());
        // agent 1 informs everyone and hears agent 2
        let star = DirectedTopology::from_edges(4, &[(1, 2), (1, 3), (1, 4), (2, 1)]).unwrap();
        assert!(star.has_spanning_tree());
    }

    #[test]
    fn five_agent_spanning_tree_by_brute_force() {
        // every agent reaches every other one through some path of length < n
        let t = five_agent_example();
        let n = t.agent_count();
        let c = t.adjacency_matrix();
        // boolean powers of the adjacency, independent of the BFS
        let mut reach = vec![vec![false; n]; n];
        for j in 0..n {
            for k in 0..n {
                reach[k][j] = c[(j, k)] > 0.0 || k == j;
            }
        }
        for _ in 0..n {
            let prev = reach.clone();
            for a in 0..n {
                for b in 0..n {
                    for m in 0..n {
                        reach[a][b] |= prev[a][m] && prev[m][b];
                    }
                }
            }
        }
        let roots: Vec<_> = (0..n).filter(|&r| reach[r].iter().all(|&x| x)).collect();
        assert!(!roots.is_empty());
        for r in roots {
            assert!(t.reachable_from(r).iter().all(|&x| x));
        }
    }
}
