//! Directed topologies, spanning-tree root sets, and the common-root check.
//!
//! An edge `(j, i)` means node `i` receives from node `j`. Self-loops are never
//! stored; self-weights live on the diagonals of the weight matrices.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    edges: Vec<(NodeId, NodeId)>,
}

impl Digraph {
    /// Builds a graph, rejecting self-loops, duplicates, and out-of-range endpoints.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (from, to) in edges {
            if from >= n || to >= n {
                return Err(Error::InvalidSize(format!(
                    "edge {from}->{to} has an endpoint outside 0..{n}"
                )));
            }
            if from == to {
                return Err(Error::InvalidSize(format!("self-loop on node {from}")));
            }
            if !seen.insert((from, to)) {
                return Err(Error::InvalidSize(format!("duplicate edge {from}->{to}")));
            }
            out.push((from, to));
        }
        Ok(Self { n, edges: out })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.edges.contains(&(from, to))
    }

    /// In-neighbors of `i` in ascending order.
    pub fn in_neighbors(&self, i: NodeId) -> Vec<NodeId> {
        let mut v: Vec<_> = self
            .edges
            .iter()
            .filter(|&&(_, to)| to == i)
            .map(|&(from, _)| from)
            .collect();
        v.sort_unstable();
        v
    }

    /// Out-neighbors of `i` in ascending order.
    pub fn out_neighbors(&self, i: NodeId) -> Vec<NodeId> {
        let mut v: Vec<_> = self
            .edges
            .iter()
            .filter(|&&(from, _)| from == i)
            .map(|&(_, to)| to)
            .collect();
        v.sort_unstable();
        v
    }

    pub fn transpose(&self) -> Digraph {
        Digraph {
            n: self.n,
            edges: self.edges.iter().map(|&(a, b)| (b, a)).collect(),
        }
    }

    fn adjacency(&self) -> Vec<Vec<NodeId>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(from, to) in &self.edges {
            adj[from].push(to);
        }
        adj
    }

    /// Nodes reachable from `start` by directed paths, including `start`.
    pub fn reachable_from(&self, start: NodeId) -> BTreeSet<NodeId> {
        bfs(&self.adjacency(), start)
    }

    /// Parses `"0>1,1>2"` (whitespace or commas between edges).
    pub fn parse_edges(n: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for tok in text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            let (a, b) = tok
                .split_once('>')
                .ok_or_else(|| Error::Config(format!("edge `{tok}` is not of the form a>b")))?;
            let a = a
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad node id in edge `{tok}`")))?;
            let b = b
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad node id in edge `{tok}`")))?;
            edges.push((a, b));
        }
        Digraph::new(n, edges)
    }

    pub fn format_edges(&self) -> String {
        self.edges
            .iter()
            .map(|(a, b)| format!("{a}>{b}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn bfs(adj: &[Vec<NodeId>], start: NodeId) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start);
    queue.push_back(start);
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    seen
}

/// Vertices from which every vertex is reachable, i.e. the roots of all
/// spanning trees of `g`. One forward BFS per vertex.
pub fn roots(g: &Digraph) -> BTreeSet<NodeId> {
    let adj = g.adjacency();
    (0..g.n).filter(|&v| bfs(&adj, v).len() == g.n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    BinaryTree,
    Line,
    DirectedRing,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::BinaryTree, Preset::Line, Preset::DirectedRing];

    pub fn name(self) -> &'static str {
        match self {
            Preset::BinaryTree => "binary_tree",
            Preset::Line => "line",
            Preset::DirectedRing => "directed_ring",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary_tree" | "tree" => Ok(Preset::BinaryTree),
            "line" => Ok(Preset::Line),
            "directed_ring" | "ring" => Ok(Preset::DirectedRing),
            other => Err(Error::Config(format!("unknown topology preset `{other}`"))),
        }
    }
}

/// The pull graph G(W), the push graph G(A), and their root sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyPair {
    pub gw: Digraph,
    pub ga: Digraph,
    pub roots_w: BTreeSet<NodeId>,
    pub roots_at: BTreeSet<NodeId>,
    pub common_roots: BTreeSet<NodeId>,
}

impl TopologyPair {
    /// Computes root sets and fails unless G(W) and G(Aᵀ) share a root.
    pub fn new(gw: Digraph, ga: Digraph) -> Result<Self> {
        let tp = Self::unchecked(gw, ga)?;
        tp.validate()?;
        Ok(tp)
    }

    /// Computes root sets without requiring a common root.
    pub fn unchecked(gw: Digraph, ga: Digraph) -> Result<Self> {
        if gw.n() != ga.n() {
            return Err(Error::InvalidSize(format!(
                "G(W) has {} nodes but G(A) has {}",
                gw.n(),
                ga.n()
            )));
        }
        let roots_w = roots(&gw);
        let roots_at = roots(&ga.transpose());
        let common_roots = roots_w.intersection(&roots_at).copied().collect();
        Ok(Self {
            gw,
            ga,
            roots_w,
            roots_at,
            common_roots,
        })
    }

    pub fn n(&self) -> usize {
        self.gw.n()
    }

    pub fn r(&self) -> usize {
        self.common_roots.len()
    }

    pub fn validate(&self) -> Result<Assumption2Report> {
        validate_assumption2(self)
    }
}

/// Builds one of the standard topologies. Trees use the array-heap layout
/// (children of `i` are `2i+1`, `2i+2`) rooted at node 0; tree and line use the
/// parent→child tree as G(W) and its reversal as G(A).
pub fn make_topology(preset: Preset, n: usize) -> Result<TopologyPair> {
    if n == 0 {
        return Err(Error::InvalidSize(
            "topology needs at least one node".into(),
        ));
    }
    let (gw, ga) = match preset {
        Preset::BinaryTree => {
            let gw = Digraph::new(n, (1..n).map(|c| ((c - 1) / 2, c)))?;
            let ga = gw.transpose();
            (gw, ga)
        }
        Preset::Line => {
            let gw = Digraph::new(n, (1..n).map(|c| (c - 1, c)))?;
            let ga = gw.transpose();
            (gw, ga)
        }
        Preset::DirectedRing => {
            let edges: Vec<_> = if n == 1 {
                vec![]
            } else {
                (0..n).map(|i| (i, (i + 1) % n)).collect()
            };
            let g = Digraph::new(n, edges)?;
            (g.clone(), g)
        }
    };
    TopologyPair::new(gw, ga)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assumption2Report {
    pub roots_w: BTreeSet<NodeId>,
    pub roots_at: BTreeSet<NodeId>,
    pub common_roots: BTreeSet<NodeId>,
}

impl fmt::Display for Assumption2Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "R_W = {}", fmt_set(&self.roots_w))?;
        writeln!(f, "R_AT = {}", fmt_set(&self.roots_at))?;
        write!(
            f,
            "R = {} (r = {})",
            fmt_set(&self.common_roots),
            self.common_roots.len()
        )
    }
}

pub fn fmt_set(s: &BTreeSet<NodeId>) -> String {
    let items: Vec<String> = s.iter().map(|v| v.to_string()).collect();
    format!("{{{}}}", items.join(","))
}

/// Recomputes both root sets from scratch and requires a nonempty intersection.
pub fn validate_assumption2(tp: &TopologyPair) -> Result<Assumption2Report> {
    let roots_w = roots(&tp.gw);
    let roots_at = roots(&tp.ga.transpose());
    let common_roots: BTreeSet<_> = roots_w.intersection(&roots_at).copied().collect();
    if common_roots.is_empty() {
        return Err(Error::AssumptionViolated(format!(
            "G(W) and G(A^T) share no spanning-tree root: R_W = {}, R_AT = {}",
            fmt_set(&roots_w),
            fmt_set(&roots_at)
        )));
    }
    Ok(Assumption2Report {
        roots_w,
        roots_at,
        common_roots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn roots_of_small_graphs() {
        let ring = Digraph::new(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(roots(&ring), set(&[0, 1, 2]));
        let path = Digraph::new(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(roots(&path), set(&[0]));
        let apart = Digraph::new(2, []).unwrap();
        assert!(roots(&apart).is_empty());
        let single = Digraph::new(1, []).unwrap();
        assert_eq!(roots(&single), set(&[0]));
    }

    #[test]
    fn rejects_malformed_graphs() {
        assert!(Digraph::new(2, [(0, 0)]).is_err());
        assert!(Digraph::new(2, [(0, 1), (0, 1)]).is_err());
        assert!(Digraph::new(2, [(0, 2)]).is_err());
    }

    #[test]
    fn presets() {
        let line = make_topology(Preset::Line, 3).unwrap();
        assert_eq!(line.gw.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(line.ga.edges(), &[(1, 0), (2, 1)]);
        assert_eq!(line.common_roots, set(&[0]));

        let ring = make_topology(Preset::DirectedRing, 3).unwrap();
        assert_eq!(ring.common_roots, set(&[0, 1, 2]));
        assert_eq!(ring.r(), 3);

        let tree = make_topology(Preset::BinaryTree, 7).unwrap();
        assert_eq!(tree.common_roots, set(&[0]));
        assert_eq!(tree.r(), 1);
        assert_eq!(tree.gw.out_neighbors(2), vec![5, 6]);

        assert!(matches!(
            make_topology(Preset::Line, 0),
            Err(Error::InvalidSize(_))
        ));
    }

    #[test]
    fn assumption2_violation_names_both_sets() {
        let gw = Digraph::new(3, [(0, 1), (1, 2)]).unwrap();
        let ga = gw.clone();
        let tp = TopologyPair::unchecked(gw.clone(), ga.clone()).unwrap();
        let err = validate_assumption2(&tp).unwrap_err().to_string();
        assert!(err.contains("R_W = {0}"), "{err}");
        assert!(err.contains("R_AT = {2}"), "{err}");
        assert!(TopologyPair::new(gw, ga).is_err());

        let ring4 = make_topology(Preset::DirectedRing, 4).unwrap();
        assert_eq!(ring4.validate().unwrap().common_roots.len(), 4);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Digraph::parse_edges(3, "0>1, 1>2").unwrap();
        assert_eq!(g.format_edges(), "0>1,1>2");
        assert!(Digraph::parse_edges(3, "0-1").is_err());
    }

    /// Independent reachability oracle: Floyd–Warshall transitive closure.
    fn closure_roots(n: usize, edges: &[(usize, usize)]) -> BTreeSet<usize> {
        let mut reach = vec![vec![false; n]; n];
        for (i, row) in reach.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(a, b) in edges {
            reach[a][b] = true;
        }
        for m in 0..n {
            for a in 0..n {
                if reach[a][m] {
                    for b in 0..n {
                        if reach[m][b] {
                            reach[a][b] = true;
                        }
                    }
                }
            }
        }
        (0..n).filter(|&v| reach[v].iter().all(|&r| r)).collect()
    }

    fn arb_graph() -> impl Strategy<Value = Digraph> {
        (1usize..=8).prop_flat_map(|n| {
            proptest::collection::vec(any::<bool>(), n * n).prop_map(move |bits| {
                let edges = (0..n)
                    .flat_map(|a| (0..n).map(move |b| (a, b)))
                    .filter(|&(a, b)| a != b && bits[a * n + b]);
                Digraph::new(n, edges).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn roots_match_closure_oracle(g in arb_graph()) {
            prop_assert_eq!(roots(&g), closure_roots(g.n(), g.edges()));
        }

        #[test]
        fn transpose_swaps_reach_all_and_reached_by_all(g in arb_graph()) {
            let n = g.n();
            let t = g.transpose();
            let reached_by_all: BTreeSet<usize> = (0..n)
                .filter(|&v| (0..n).all(|u| g.reachable_from(u).contains(&v)))
                .collect();
            prop_assert_eq!(roots(&t), reached_by_all);
        }

        #[test]
        fn preset_common_roots_are_the_intersection(n in 1usize..40, which in 0usize..3) {
            let tp = make_topology(Preset::ALL[which], n).unwrap();
            let expected: BTreeSet<_> = roots(&tp.gw)
                .intersection(&roots(&tp.ga.transpose()))
                .copied()
                .collect();
            prop_assert_eq!(&tp.common_roots, &expected);
            prop_assert!(!expected.is_empty());
        }
    }
}
