//! Global-view execution record.

use crate::error::{Error, Result};
use crate::graph::NodeId;

/// One consumed neighbor value: who sent it, its stamp, and its global-view
/// delay `d = k − g(j, stamp − 1) − 1` (with `g(j, −1) = −1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Consumed {
    pub from: NodeId,
    pub stamp: u64,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub node: NodeId,
    /// Local iteration executed at this step (the counter before it advanced).
    pub t: u64,
    pub v_in: Vec<Consumed>,
    pub rho_in: Vec<Consumed>,
    pub loss_events: usize,
    /// Largest global-view delay observed up to and including this step.
    pub d_max_seen: usize,
    /// `x` and `z` of the active node after the step, when recording states.
    pub after: Option<(Vec<f64>, Vec<f64>)>,
}

impl StepRecord {
    pub fn max_d(&self) -> usize {
        self.v_in
            .iter()
            .chain(&self.rho_in)
            .map(|c| c.d)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub n: usize,
    pub records: Vec<StepRecord>,
    /// `g[i][t]` is the global step at which node `i` ran local iteration `t`.
    pub g: Vec<Vec<usize>>,
    /// Largest sampled transport delay, in activations. Drops are not counted.
    pub transport_max: usize,
    pub loss_total: usize,
}

impl RunTrace {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            g: vec![Vec::new(); n],
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `l(k) = (i^k, t)`.
    pub fn l(&self, k: usize) -> Option<(NodeId, u64)> {
        self.records.get(k).map(|r| (r.node, r.t))
    }

    pub fn g(&self, i: NodeId, t: u64) -> Option<usize> {
        self.g.get(i)?.get(t as usize).copied()
    }

    pub fn d_max(&self) -> usize {
        self.records.last().map_or(0, |r| r.d_max_seen)
    }

    pub fn activations(&self) -> Vec<NodeId> {
        self.records.iter().map(|r| r.node).collect()
    }
}

/// Realized asynchrony bounds of a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Asynchrony {
    /// Largest over `k` of the shortest window starting at `k` that activates
    /// every node (windows running past the end of the trace are skipped).
    pub t_real: usize,
    /// Largest global-view delay.
    pub d_real: usize,
    /// Largest transport delay.
    pub transport_max: usize,
}

pub fn realized_asynchrony(trace: &RunTrace) -> Result<Asynchrony> {
    if trace.is_empty() {
        return Err(Error::InsufficientData("empty trace".into()));
    }
    let n = trace.n;
    let picks = trace.activations();
    let mut next = vec![usize::MAX; n];
    let mut t_real = 0;
    for k in (0..picks.len()).rev() {
        next[picks[k]] = k;
        let far = *next.iter().max().expect("n > 0");
        if far != usize::MAX {
            t_real = t_real.max(far - k + 1);
        }
    }
    Ok(Asynchrony {
        t_real,
        d_real: trace
            .records
            .iter()
            .map(StepRecord::max_d)
            .max()
            .unwrap_or(0),
        transport_max: trace.transport_max,
    })
}
