//! Row-stochastic pull matrix W and column-stochastic push matrix A.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::TopologyPair;

/// Absolute tolerance on row sums of W and column sums of A.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightPair {
    /// `w[i][j] > 0` iff `i` pulls from `j` (or `i == j`).
    pub w: Vec<Vec<f64>>,
    /// `a[j][i] > 0` iff `i` pushes to `j` (or `i == j`).
    pub a: Vec<Vec<f64>>,
    pub m_bar: f64,
}

impl WeightPair {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    /// Wraps explicit matrices; `m_bar` is computed.
    pub fn from_matrices(w: Vec<Vec<f64>>, a: Vec<Vec<f64>>) -> Result<Self> {
        let n = w.len();
        if a.len() != n || w.iter().chain(a.iter()).any(|r| r.len() != n) {
            return Err(Error::InvalidSize("W and A must both be n x n".into()));
        }
        let m_bar = min_positive(&w).min(min_positive(&a));
        Ok(Self { w, a, m_bar })
    }

    /// Writes `w.csv` and `a.csv` (row-major, shortest round-trip decimals).
    pub fn dump_csv(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("w.csv"), matrix_csv(&self.w))?;
        std::fs::write(dir.join("a.csv"), matrix_csv(&self.a))?;
        Ok(())
    }
}

fn min_positive(m: &[Vec<f64>]) -> f64 {
    m.iter()
        .flatten()
        .copied()
        .filter(|&x| x > 0.0)
        .fold(f64::INFINITY, f64::min)
}

pub fn matrix_csv(m: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in m {
        let cells: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// Uniform weights by neighbor count: each node splits its pull weight evenly
/// over itself and its W-in-neighbors, and its pushed mass evenly over itself
/// and its A-out-neighbors.
pub fn build_uniform(tp: &TopologyPair) -> WeightPair {
    let n = tp.n();
    let mut w = vec![vec![0.0; n]; n];
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        let ins = tp.gw.in_neighbors(i);
        let share = 1.0 / (ins.len() + 1) as f64;
        w[i][i] = share;
        for j in ins {
            w[i][j] = share;
        }
        let outs = tp.ga.out_neighbors(i);
        let share = 1.0 / (outs.len() + 1) as f64;
        a[i][i] = share;
        for j in outs {
            a[j][i] = share;
        }
    }
    let m_bar = min_positive(&w).min(min_positive(&a));
    WeightPair { w, a, m_bar }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assumption1Report {
    pub m_bar: f64,
    pub max_row_residual_w: f64,
    pub max_col_residual_a: f64,
}

/// Checks positive diagonals, stochasticity, nonnegativity, and that the
/// off-diagonal supports match G(W) and G(A) exactly.
pub fn validate_assumption1(wp: &WeightPair, tp: &TopologyPair) -> Result<Assumption1Report> {
    let n = tp.n();
    if wp.n() != n || wp.a.len() != n {
        return Err(Error::InvalidSize(format!(
            "weights are {}x{} but topology has {n} nodes",
            wp.n(),
            wp.n()
        )));
    }
    let violated = |msg: String| Err(Error::AssumptionViolated(msg));
    for i in 0..n {
        if !(wp.w[i][i] > 0.0) {
            return violated(format!(
                "diagonal must be positive: w[{i}][{i}] = {}",
                wp.w[i][i]
            ));
        }
        if !(wp.a[i][i] > 0.0) {
            return violated(format!(
                "diagonal must be positive: a[{i}][{i}] = {}",
                wp.a[i][i]
            ));
        }
    }
    for i in 0..n {
        for j in 0..n {
            for (name, m) in [("w", &wp.w), ("a", &wp.a)] {
                let x = m[i][j];
                if !x.is_finite() || x < 0.0 {
                    return violated(format!("entry {name}[{i}][{j}] = {x} must be nonnegative"));
                }
            }
            if i == j {
                continue;
            }
            // w[i][j] is the weight i puts on j's value: edge j -> i in G(W).
            if (wp.w[i][j] > 0.0) != tp.gw.has_edge(j, i) {
                return violated(format!(
                    "support of W does not match G(W) at w[{i}][{j}] = {}",
                    wp.w[i][j]
                ));
            }
            // a[i][j] is the share j pushes to i: edge j -> i in G(A).
            if (wp.a[i][j] > 0.0) != tp.ga.has_edge(j, i) {
                return violated(format!(
                    "support of A does not match G(A) at a[{i}][{j}] = {}",
                    wp.a[i][j]
                ));
            }
        }
    }
    let mut max_row = 0.0f64;
    for (i, row) in wp.w.iter().enumerate() {
        let res = (row.iter().sum::<f64>() - 1.0).abs();
        if res > STOCHASTIC_TOL {
            return violated(format!(
                "row {i} of W is not stochastic: residual {res:.3e}"
            ));
        }
        max_row = max_row.max(res);
    }
    let mut max_col = 0.0f64;
    for j in 0..n {
        let res = ((0..n).map(|i| wp.a[i][j]).sum::<f64>() - 1.0).abs();
        if res > STOCHASTIC_TOL {
            return violated(format!(
                "column {j} of A is not stochastic: residual {res:.3e}"
            ));
        }
        max_col = max_col.max(res);
    }
    let m_bar = min_positive(&wp.w).min(min_positive(&wp.a));
    Ok(Assumption1Report {
        m_bar,
        max_row_residual_w: max_row,
        max_col_residual_a: max_col,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_topology, Preset};
    use proptest::prelude::*;

    #[test]
    fn single_node() {
        let tp = make_topology(Preset::DirectedRing, 1).unwrap();
        let wp = build_uniform(&tp);
        assert_eq!(wp.w, vec![vec![1.0]]);
        assert_eq!(wp.a, vec![vec![1.0]]);
        assert_eq!(wp.m_bar, 1.0);
    }

    #[test]
    fn ring3_halves() {
        let tp = make_topology(Preset::DirectedRing, 3).unwrap();
        let wp = build_uniform(&tp);
        for i in 0..3 {
            assert_eq!(wp.w[i].iter().filter(|&&x| x == 0.5).count(), 2);
            assert_eq!((0..3).filter(|&r| wp.a[r][i] == 0.5).count(), 2);
        }
        assert_eq!(wp.m_bar, 0.5);
        validate_assumption1(&wp, &tp).unwrap();
    }

    #[test]
    fn tree7_root_rows() {
        let tp = make_topology(Preset::BinaryTree, 7).unwrap();
        let wp = build_uniform(&tp);
        assert_eq!(wp.w[0], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let a_col0: Vec<f64> = (0..7).map(|r| wp.a[r][0]).collect();
        assert_eq!(a_col0, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        // node 1 pushes to its parent 0 and keeps half
        assert_eq!(wp.a[1][1], 0.5);
        assert_eq!(wp.a[0][1], 0.5);
        assert_eq!(wp.m_bar, 0.5);
    }

    #[test]
    fn rejects_zero_diagonal() {
        let tp = make_topology(Preset::DirectedRing, 3).unwrap();
        let mut wp = build_uniform(&tp);
        wp.w[1][1] = 0.0;
        wp.w[1][0] = 1.0;
        let err = validate_assumption1(&wp, &tp).unwrap_err().to_string();
        assert!(err.contains("diagonal must be positive"), "{err}");
    }

    #[test]
    fn reports_column_residual() {
        let tp = make_topology(Preset::DirectedRing, 3).unwrap();
        let mut wp = build_uniform(&tp);
        // column 0 now sums to 0.9
        wp.a[0][0] = 0.4;
        let err = validate_assumption1(&wp, &tp).unwrap_err().to_string();
        assert!(err.contains("column 0 of A"), "{err}");
        assert!(err.contains("residual 1.000e-1"), "{err}");
    }

    #[test]
    fn rejects_support_mismatch() {
        let tp = make_topology(Preset::Line, 3).unwrap();
        let mut wp = build_uniform(&tp);
        wp.w[0][2] = 0.5;
        wp.w[0][0] = 0.5;
        assert!(validate_assumption1(&wp, &tp).is_err());
    }

    #[test]
    fn ring5_passes() {
        let tp = make_topology(Preset::DirectedRing, 5).unwrap();
        validate_assumption1(&build_uniform(&tp), &tp).unwrap();
    }

    #[test]
    fn ring_w_fixed_points_are_consensual() {
        // Power iteration on W from a non-consensual start converges to a
        // consensual vector that W then leaves unchanged.
        let tp = make_topology(Preset::DirectedRing, 6).unwrap();
        let wp = build_uniform(&tp);
        let mut x: Vec<f64> = (0..6).map(|i| (i * i) as f64).collect();
        for _ in 0..400 {
            x = (0..6)
                .map(|i| (0..6).map(|j| wp.w[i][j] * x[j]).sum())
                .collect();
        }
        let spread =
            x.iter().cloned().fold(f64::MIN, f64::max) - x.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-10, "spread {spread}");
        let wx: Vec<f64> = (0..6)
            .map(|i| (0..6).map(|j| wp.w[i][j] * x[j]).sum())
            .collect();
        for (a, b) in wx.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
        // And a non-consensual vector is never fixed.
        let y: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let wy: Vec<f64> = (0..6)
            .map(|i| (0..6).map(|j| wp.w[i][j] * y[j]).sum())
            .collect();
        assert!(wy.iter().zip(&y).any(|(a, b)| (a - b).abs() > 1e-3));
    }

    proptest! {
        #[test]
        fn uniform_always_valid(n in 1usize..=64, which in 0usize..3) {
            let tp = make_topology(Preset::ALL[which], n).unwrap();
            let wp = build_uniform(&tp);
            let rep = validate_assumption1(&wp, &tp).unwrap();
            prop_assert!(rep.m_bar > 0.0);
        }
    }
}
