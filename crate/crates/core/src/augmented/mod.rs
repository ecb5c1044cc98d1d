//! Global-view linear recursions over augmented state.
//!
//! Consensus: `h = [x; v^k; v^{k−1}; …; v^{k−D}]` evolves as
//! `h' = Ŵ (h − γ e_i zᵀ)`. Tracking: real nodes plus `D + 1` virtual slots per
//! edge of G(A) evolve as `ẑ' = Â ẑ + P e_i εᵀ` with `Â = P S`.

pub mod diagnostics;
pub mod mirror;
pub mod sparse;

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::weights::WeightPair;

pub use diagnostics::{contraction_diagnostics, DecayReport, DiagnosticsInput};
pub use mirror::{mirror_from_trace, Mirror, MirrorReport};
pub use sparse::SparseMat;

/// Active node and the realized delays of what it consumed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepInfo {
    pub node: NodeId,
    pub v_delays: Vec<(NodeId, usize)>,
    pub rho_delays: Vec<(NodeId, usize)>,
}

impl StepInfo {
    pub fn from_record(r: &crate::sim::StepRecord) -> Self {
        Self {
            node: r.node,
            v_delays: r.v_in.iter().map(|c| (c.from, c.d)).collect(),
            rho_delays: r.rho_in.iter().map(|c| (c.from, c.d)).collect(),
        }
    }
}

fn check_delay(d: usize, cap: usize, what: &str) -> Result<()> {
    if d > cap {
        return Err(Error::Domain(format!("{what} delay {d} exceeds D = {cap}")));
    }
    Ok(())
}

/// Consensus state has `(D + 2) n` rows.
pub fn consensus_dim(n: usize, d_cap: usize) -> usize {
    (d_cap + 2) * n
}

pub fn build_w_hat(info: &StepInfo, wp: &WeightPair, d_cap: usize) -> Result<SparseMat> {
    let n = wp.n();
    let i = info.node;
    if i >= n {
        return Err(Error::Domain(format!("active node {i} out of range")));
    }
    let dim = consensus_dim(n, d_cap);
    let mut m = SparseMat::zeros(dim);
    let mut row = vec![(i, wp.w[i][i])];
    for &(j, d) in &info.v_delays {
        check_delay(d, d_cap, "v")?;
        if j == i || wp.w[i][j] <= 0.0 {
            return Err(Error::Domain(format!("{j} is not a W-in-neighbor of {i}")));
        }
        row.push((j + (d + 1) * n, wp.w[i][j]));
    }
    m.rows[i] = row;
    for r in 0..2 * n {
        if r != i && r != i + n {
            m.rows[r] = vec![(r, 1.0)];
        }
    }
    m.rows[i + n] = vec![(i, 1.0)];
    for r in 2 * n..dim {
        m.rows[r] = vec![(r - n, 1.0)];
    }
    Ok(m)
}

/// `h' = Ŵ (h − γ e_i zᵀ)`.
pub fn step_consensus(
    h: &[Vec<f64>],
    w_hat: &SparseMat,
    gamma: f64,
    i: NodeId,
    z_i: &[f64],
) -> Vec<Vec<f64>> {
    let mut u = h.to_vec();
    for (a, b) in u[i].iter_mut().zip(z_i) {
        *a -= gamma * b;
    }
    w_hat.apply(&u)
}

/// Slot numbering for the tracking state: real nodes first, then one block of
/// `|E(A)|` edge slots per delay level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackingLayout {
    pub n: usize,
    pub d_cap: usize,
    /// `(from, to)` for every off-diagonal edge of G(A), sorted.
    pub edges: Vec<(NodeId, NodeId)>,
}

impl TrackingLayout {
    pub fn new(wp: &WeightPair, d_cap: usize) -> Self {
        let n = wp.n();
        let mut edges = Vec::new();
        for from in 0..n {
            for to in 0..n {
                if from != to && wp.a[to][from] > 0.0 {
                    edges.push((from, to));
                }
            }
        }
        Self { n, d_cap, edges }
    }

    pub fn dim(&self) -> usize {
        self.n + (self.d_cap + 1) * self.edges.len()
    }

    pub fn edge_index(&self, from: NodeId, to: NodeId) -> Option<usize> {
        self.edges.binary_search(&(from, to)).ok()
    }

    pub fn slot(&self, edge: usize, d: usize) -> usize {
        self.n + d * self.edges.len() + edge
    }
}

/// Sum-step matrix `S` and push-step matrix `P`.
pub fn build_s_p(
    info: &StepInfo,
    wp: &WeightPair,
    layout: &TrackingLayout,
) -> Result<(SparseMat, SparseMat)> {
    let n = layout.n;
    let i = info.node;
    let d_cap = layout.d_cap;
    if i >= n {
        return Err(Error::Domain(format!("active node {i} out of range")));
    }
    let dim = layout.dim();

    let mut s = SparseMat::identity(dim);
    let mut gather = vec![(i, 1.0)];
    for &(j, d) in &info.rho_delays {
        check_delay(d, d_cap, "rho")?;
        let e = layout
            .edge_index(j, i)
            .ok_or_else(|| Error::Domain(format!("{j} is not an A-in-neighbor of {i}")))?;
        for dd in d..=d_cap {
            let slot = layout.slot(e, dd);
            gather.push((slot, 1.0));
            s.rows[slot].clear();
        }
    }
    s.rows[i] = gather;

    let mut p = SparseMat::zeros(dim);
    for r in 0..n {
        p.rows[r] = vec![(r, if r == i { wp.a[i][i] } else { 1.0 })];
    }
    let ne = layout.edges.len();
    for (e, &(from, to)) in layout.edges.iter().enumerate() {
        let fresh = (from == i).then(|| (i, wp.a[to][i]));
        if d_cap == 0 {
            let slot = layout.slot(e, 0);
            p.rows[slot] = fresh.into_iter().chain([(slot, 1.0)]).collect();
            continue;
        }
        p.rows[layout.slot(e, 0)] = fresh.into_iter().collect();
        for d in 1..d_cap {
            p.rows[layout.slot(e, d)] = vec![(layout.slot(e, d - 1), 1.0)];
        }
        let top = layout.slot(e, d_cap);
        p.rows[top] = vec![(top, 1.0), (layout.slot(e, d_cap - 1), 1.0)];
    }
    debug_assert_eq!(p.dim(), n + (d_cap + 1) * ne);
    Ok((s, p))
}

/// `ẑ' = P (S ẑ + e_i εᵀ)`, which equals `Â ẑ + P e_i εᵀ`.
pub fn step_tracking(
    zhat: &[Vec<f64>],
    s: &SparseMat,
    p: &SparseMat,
    i: NodeId,
    eps: &[f64],
) -> Vec<Vec<f64>> {
    let mut half = s.apply(zhat);
    for (a, b) in half[i].iter_mut().zip(eps) {
        *a += b;
    }
    p.apply(&half)
}

/// Column sums of the stacked state, i.e. `1ᵀ ẑ`.
pub fn total_mass(z: &[Vec<f64>]) -> Vec<f64> {
    let p = z.first().map_or(0, Vec::len);
    crate::vecops::sum_rows(z, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_topology, Preset};
    use crate::weights::build_uniform;
    use proptest::prelude::*;

    fn uniform(preset: Preset, n: usize) -> WeightPair {
        build_uniform(&make_topology(preset, n).unwrap())
    }

    fn info_v(node: usize, v: Vec<(usize, usize)>) -> StepInfo {
        StepInfo {
            node,
            v_delays: v,
            rho_delays: Vec::new(),
        }
    }

    #[test]
    fn single_node_w_hat() {
        let wp = uniform(Preset::DirectedRing, 1);
        let w = build_w_hat(&info_v(0, vec![]), &wp, 0).unwrap();
        assert_eq!(w.to_dense(), vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        let h = step_consensus(&[vec![2.0], vec![0.0]], &w, 0.5, 0, &[1.0]);
        assert_eq!(h, vec![vec![1.5], vec![1.5]]);
    }

    #[test]
    fn ring2_delayed_entry() {
        let wp = uniform(Preset::DirectedRing, 2);
        let w = build_w_hat(&info_v(0, vec![(1, 1)]), &wp, 1).unwrap();
        assert_eq!(w.dim(), 6);
        assert_eq!(w.get(0, 1 + 2 * 2), wp.w[0][1]);
        assert_eq!(w.row_sums()[0], 1.0);
        for r in 1..6 {
            assert_eq!(w.rows[r].len(), 1);
        }
    }

    #[test]
    fn delay_out_of_range() {
        let wp = uniform(Preset::DirectedRing, 2);
        assert!(matches!(
            build_w_hat(&info_v(0, vec![(1, 2)]), &wp, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pure_mixing_keeps_consensus() {
        let wp = uniform(Preset::BinaryTree, 5);
        let mut h = vec![vec![3.0, -1.0]; consensus_dim(5, 2)];
        for k in 0..20 {
            let i = k % 5;
            let v: Vec<_> = crate::node::NodeLinks::from_weights(i, &wp)
                .w_in
                .iter()
                .map(|&(j, _)| (j, k % 3))
                .collect();
            let w = build_w_hat(&info_v(i, v), &wp, 2).unwrap();
            h = step_consensus(&h, &w, 0.0, i, &[9.0, 9.0]);
        }
        assert!(h.iter().all(|r| r == &vec![3.0, -1.0]));
    }

    #[test]
    fn single_node_tracking_is_trivial() {
        let wp = uniform(Preset::DirectedRing, 1);
        let layout = TrackingLayout::new(&wp, 0);
        let (s, p) = build_s_p(
            &StepInfo {
                node: 0,
                v_delays: vec![],
                rho_delays: vec![],
            },
            &wp,
            &layout,
        )
        .unwrap();
        assert_eq!(s, SparseMat::identity(1));
        assert_eq!(p, SparseMat::identity(1));
    }

    #[test]
    fn push_column_sums_to_one() {
        let wp = uniform(Preset::BinaryTree, 7);
        let layout = TrackingLayout::new(&wp, 2);
        for i in 0..7 {
            let rho: Vec<_> = crate::node::NodeLinks::from_weights(i, &wp)
                .a_in
                .iter()
                .map(|&j| (j, 1))
                .collect();
            let (_, p) = build_s_p(
                &StepInfo {
                    node: i,
                    v_delays: vec![],
                    rho_delays: rho,
                },
                &wp,
                &layout,
            )
            .unwrap();
            let col: f64 = p.column(i).iter().map(|&(_, v)| v).sum();
            assert!((col - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn zero_increment_conserves_mass() {
        let wp = uniform(Preset::DirectedRing, 3);
        let layout = TrackingLayout::new(&wp, 1);
        let mut z: Vec<Vec<f64>> = (0..layout.dim()).map(|s| vec![s as f64]).collect();
        let before = total_mass(&z);
        for k in 0..30 {
            let i = k % 3;
            let j = (i + 2) % 3;
            let info = StepInfo {
                node: i,
                v_delays: vec![],
                rho_delays: vec![(j, k % 2)],
            };
            let (s, p) = build_s_p(&info, &wp, &layout).unwrap();
            z = step_tracking(&z, &s, &p, i, &[0.0]);
        }
        assert!((total_mass(&z)[0] - before[0]).abs() < 1e-12);
    }

    fn random_info(wp: &WeightPair, node: usize, d_cap: usize, seed: u64) -> StepInfo {
        let links = crate::node::NodeLinks::from_weights(node, wp);
        let mut x = seed;
        let mut next = || {
            x = crate::problems::oracle::mix64(x);
            (x % (d_cap as u64 + 1)) as usize
        };
        StepInfo {
            node,
            v_delays: links.w_in.iter().map(|&(j, _)| (j, next())).collect(),
            rho_delays: links.a_in.iter().map(|&j| (j, next())).collect(),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]
        #[test]
        fn built_matrices_are_stochastic(
            which in 0usize..3, n in 1usize..9, d_cap in 0usize..6, node_seed in any::<u64>(), seed in any::<u64>()
        ) {
            let wp = uniform(Preset::ALL[which], n);
            let info = random_info(&wp, (node_seed % n as u64) as usize, d_cap, seed);
            let w = build_w_hat(&info, &wp, d_cap).unwrap();
            for (r, s) in w.row_sums().iter().enumerate() {
                prop_assert!((s - 1.0).abs() <= 1e-12, "row {} sums to {}", r, s);
            }
            let layout = TrackingLayout::new(&wp, d_cap);
            let (s, p) = build_s_p(&info, &wp, &layout).unwrap();
            let a = p.matmul(&s);
            for m in [&s, &p, &a] {
                for c in m.col_sums() {
                    prop_assert!((c - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}
