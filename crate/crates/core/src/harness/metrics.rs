//! Error processes and the merit function evaluated on full data.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::problems::{global_grad, global_value, LocalObjective};
use crate::vecops::{dist2_sq, mean_rows, norm2_sq};

pub const METRICS_HEADER: &str = "k,epoch,loss,gap,consensus,gradnorm,merit,tracking";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub k: usize,
    pub epoch: f64,
    /// `F(x̄)`.
    pub loss: f64,
    /// `Σ_i ‖x_i − x*‖²`, when the optimum is known.
    pub gap: Option<f64>,
    /// `Σ_i ‖x_i − x̄‖²`.
    pub consensus: f64,
    /// `‖∇F(x̄)‖²`.
    pub gradnorm: f64,
    /// `gradnorm + consensus`.
    pub merit: f64,
    pub tracking: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricRow {
    /// One CSV line without the trailing newline; missing values are empty.
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.k,
            self.epoch,
            self.loss,
            opt(self.gap),
            self.consensus,
            self.gradnorm,
            self.merit,
            opt(self.tracking)
        )
    }

    /// The value-only columns (`loss` through `tracking`).
    pub fn csv_values(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.loss,
            opt(self.gap),
            self.consensus,
            self.gradnorm,
            self.merit,
            opt(self.tracking)
        )
    }
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv());
    }
    s
}

/// Evaluates every metric at the node iterates `xs`. `epoch` and `tracking` are
/// left for the caller to fill in.
pub fn snapshot(
    k: usize,
    xs: &[Vec<f64>],
    objs: &[LocalObjective],
    x_star: Option<&[f64]>,
) -> Result<MetricRow> {
    let p = xs
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidSize("no node states".into()))?;
    let xbar = mean_rows(xs, p);
    let loss = global_value(objs, &xbar)?;
    let gradnorm = norm2_sq(&global_grad(objs, &xbar)?);
    let consensus: f64 = xs.iter().map(|x| dist2_sq(x, &xbar)).sum();
    let gap = x_star.map(|s| xs.iter().map(|x| dist2_sq(x, s)).sum());
    Ok(MetricRow {
        k,
        epoch: 0.0,
        loss,
        gap,
        consensus,
        gradnorm,
        merit: gradnorm + consensus,
        tracking: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_hand_example() {
        let objs = vec![
            LocalObjective::quadratic(vec![0.0]),
            LocalObjective::quadratic(vec![2.0]),
        ];
        let xs = vec![vec![0.0], vec![2.0]];
        let r = snapshot(0, &xs, &objs, Some(&[1.0])).unwrap();
        assert_eq!(r.consensus, 2.0);
        assert_eq!(r.gradnorm, 0.0);
        assert_eq!(r.merit, 2.0);
        assert_eq!(r.gap, Some(2.0));
        assert_eq!(r.loss, 1.0);
    }

    #[test]
    fn all_at_optimum() {
        let objs = vec![
            LocalObjective::quadratic(vec![1.0, -1.0]),
            LocalObjective::quadratic(vec![-1.0, 1.0]),
        ];
        let xs = vec![vec![0.0, 0.0]; 2];
        let r = snapshot(3, &xs, &objs, Some(&[0.0, 0.0])).unwrap();
        assert_eq!((r.gap, r.consensus, r.merit), (Some(0.0), 0.0, 0.0));
    }

    #[test]
    fn pure_and_csv_shaped() {
        let objs = vec![LocalObjective::quadratic(vec![0.5, 0.25])];
        let xs = vec![vec![0.1, 0.2]];
        let a = snapshot(0, &xs, &objs, None).unwrap();
        let b = snapshot(0, &xs, &objs, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.merit, a.gradnorm + a.consensus);
        assert_eq!(
            a.csv().split(',').count(),
            METRICS_HEADER.split(',').count()
        );
        assert!(a.csv().contains(",,"));
    }
}
