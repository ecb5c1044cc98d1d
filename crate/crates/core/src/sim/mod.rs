//! Deterministic event-driven simulation of asynchronous execution.
//!
//! Time is the global activation counter `k`. A message sent at step `k` with
//! transport delay `δ` becomes visible to its receiver from step `k + 1 + δ` on,
//! and is handed over at the start of the receiver's next activation.

pub mod live;
pub mod schedule;
pub mod trace;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Channel, Error, Result};
use crate::graph::NodeId;
use crate::node::{Message, NodeLinks, NodeState};
use crate::problems::oracle::mix64;
use crate::problems::{GradOracle, LocalObjective};
use crate::weights::WeightPair;

pub use schedule::{ScheduleKind, Scheduler};
pub use trace::{realized_asynchrony, Asynchrony, Consumed, RunTrace, StepRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Gradient tracking with running sums.
    RFast,
    /// Pull averaging of local stochastic gradient steps, no tracking.
    Gossip,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::RFast => "rfast",
            Algorithm::Gossip => "gossip",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rfast" => Ok(Algorithm::RFast),
            "gossip" => Ok(Algorithm::Gossip),
            _ => Err(Error::Config(format!("unknown algorithm `{s}`"))),
        }
    }
}

/// Every packet on the directed pair `from → to` is dropped for `start <= k < end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blackout {
    pub from: NodeId,
    pub to: NodeId,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub schedule: ScheduleKind,
    pub d_max: usize,
    /// Hold every message until the start of the next round of `n` steps.
    pub barrier: bool,
    pub p_drop: f64,
    /// After this many consecutive drops on a channel the next send goes through.
    pub max_consecutive: usize,
    pub blackout: Option<Blackout>,
    pub gamma: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Store the active node's `x` and `z` in every step record.
    pub record_states: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleKind::RoundRobin,
            d_max: 0,
            barrier: false,
            p_drop: 0.0,
            max_consecutive: 20,
            blackout: None,
            gamma: 0.01,
            seed: 0,
            algorithm: Algorithm::RFast,
            record_states: false,
        }
    }
}

impl SimConfig {
    fn lossy(&self) -> bool {
        self.p_drop > 0.0 || self.blackout.is_some()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.schedule.validate(n)?;
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!(
                "step size {} must be positive",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.p_drop) {
            return Err(Error::Config(format!(
                "p_drop {} outside [0, 1]",
                self.p_drop
            )));
        }
        if self.p_drop > 0.0 && self.max_consecutive == 0 {
            return Err(Error::Config(
                "loss.max_consecutive must be positive".into(),
            ));
        }
        if let Some(b) = self.blackout {
            if b.from >= n || b.to >= n {
                return Err(Error::Config("blackout edge out of range".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Pending {
    visible_at: usize,
    msg: Message,
}

#[derive(Debug, Clone, Copy, Default)]
struct ChannelState {
    /// The last packet put in flight arrives (and is confirmed) at this step.
    busy_until: usize,
    drops: usize,
}

pub struct Simulator {
    cfg: SimConfig,
    objs: Vec<LocalObjective>,
    oracle: GradOracle,
    nodes: Vec<NodeState>,
    sched: Scheduler,
    delay_rng: ChaCha8Rng,
    loss_rng: ChaCha8Rng,
    /// Per receiver, in send order.
    pending: Vec<Vec<Pending>>,
    channels: HashMap<(NodeId, NodeId, Channel), ChannelState>,
    trace: RunTrace,
    k: usize,
}

impl Simulator {
    pub fn new(
        cfg: SimConfig,
        wp: &WeightPair,
        objs: Vec<LocalObjective>,
        oracle: GradOracle,
        x0: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = wp.n();
        if objs.len() != n || x0.len() != n {
            return Err(Error::InvalidSize(format!(
                "{n} nodes but {} objectives and {} initial points",
                objs.len(),
                x0.len()
            )));
        }
        cfg.validate(n)?;
        let nodes = NodeLinks::all(wp)
            .into_iter()
            .zip(x0)
            .zip(&objs)
            .map(|((links, x), obj)| {
                oracle.check_compatible(obj)?;
                NodeState::init(links, x, obj, &oracle)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sched: Scheduler::new(cfg.schedule, n, mix64(cfg.seed ^ 0x5C4E_D01E))?,
            delay_rng: ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ 0xDE1A_7000)),
            loss_rng: ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ 0x1055_0000)),
            pending: vec![Vec::new(); n],
            channels: HashMap::new(),
            trace: RunTrace::new(n),
            k: 0,
            cfg,
            objs,
            oracle,
            nodes,
        })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [NodeState] {
        &mut self.nodes
    }

    pub fn objectives(&self) -> &[LocalObjective] {
        &self.objs
    }

    pub fn oracle(&self) -> &GradOracle {
        &self.oracle
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn into_trace(self) -> RunTrace {
        self.trace
    }

    fn delay_of(&self, k: usize, from: NodeId, stamp: u64) -> usize {
        if stamp == 0 {
            k
        } else {
            k - self.trace.g[from][stamp as usize - 1] - 1
        }
    }

    fn transmit(&mut self, k: usize, msg: Message) -> bool {
        if self.cfg.lossy() {
            let ch = self
                .channels
                .entry((msg.from, msg.to, msg.kind))
                .or_default();
            if k < ch.busy_until {
                return false;
            }
            let blacked = self.cfg.blackout.is_some_and(|b| {
                b.from == msg.from && b.to == msg.to && (b.start..b.end).contains(&k)
            });
            let dropped = blacked
                || (ch.drops < self.cfg.max_consecutive
                    && self.cfg.p_drop > 0.0
                    && self.loss_rng.random::<f64>() < self.cfg.p_drop);
            if dropped {
                ch.drops += 1;
                self.trace.loss_total += 1;
                return true;
            }
            ch.drops = 0;
        }
        let delta = if self.cfg.d_max > 0 {
            self.delay_rng.random_range(0..=self.cfg.d_max)
        } else {
            0
        };
        let mut visible_at = k + 1 + delta;
        if self.cfg.barrier {
            let n = self.n();
            visible_at = visible_at.max((k / n + 1) * n);
        }
        self.trace.transport_max = self.trace.transport_max.max(visible_at - k - 1);
        if self.cfg.lossy() {
            if let Some(ch) = self.channels.get_mut(&(msg.from, msg.to, msg.kind)) {
                ch.busy_until = visible_at;
            }
        }
        self.pending[msg.to].push(Pending { visible_at, msg });
        false
    }

    /// Runs global step `k`.
    pub fn step(&mut self) -> Result<&StepRecord> {
        let k = self.k;
        let i = self.sched.next_node();

        let queue = std::mem::take(&mut self.pending[i]);
        let (due, later): (Vec<_>, Vec<_>) = queue.into_iter().partition(|p| p.visible_at <= k);
        self.pending[i] = later;
        for p in &due {
            self.nodes[i].ingest(&p.msg)?;
        }

        let t = self.nodes[i].t;
        let out = match self.cfg.algorithm {
            Algorithm::RFast => {
                self.nodes[i].local_step(&self.objs[i], &self.oracle, self.cfg.gamma)
            }
            Algorithm::Gossip => {
                self.nodes[i].gossip_step(&self.objs[i], &self.oracle, self.cfg.gamma)
            }
        }
        .map_err(|e| e.at_global(k))?;
        self.trace.g[i].push(k);

        let node = &self.nodes[i];
        let v_in: Vec<Consumed> = node
            .links
            .w_in
            .iter()
            .zip(&node.tau_v)
            .map(|(&(j, _), &stamp)| Consumed {
                from: j,
                stamp,
                d: self.delay_of(k, j, stamp),
            })
            .collect();
        let rho_in: Vec<Consumed> = match self.cfg.algorithm {
            Algorithm::RFast => node
                .links
                .a_in
                .iter()
                .zip(&node.tau_rho)
                .map(|(&j, &stamp)| Consumed {
                    from: j,
                    stamp,
                    d: self.delay_of(k, j, stamp),
                })
                .collect(),
            Algorithm::Gossip => Vec::new(),
        };
        let after = self
            .cfg
            .record_states
            .then(|| (node.x.clone(), node.z.clone()));

        let mut loss_events = 0;
        for m in out {
            loss_events += usize::from(self.transmit(k, m));
        }
        let mut rec = StepRecord {
            k,
            node: i,
            t,
            v_in,
            rho_in,
            loss_events,
            d_max_seen: self.trace.d_max(),
            after,
        };
        rec.d_max_seen = rec.d_max_seen.max(rec.max_d());
        self.trace.records.push(rec);
        self.k += 1;
        Ok(self.trace.records.last().expect("just pushed"))
    }

    pub fn run(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Residual of the node-level mass balance
    /// `Σ z + Σ_edges (ρ_sender − ρ̃_receiver) = Σ ∇f(x; ζ)`, relative to the
    /// total magnitude of the summed terms.
    pub fn conservation_residual(&self) -> f64 {
        conservation_residual(&self.nodes)
    }
}

pub fn conservation_residual(nodes: &[NodeState]) -> f64 {
    let p = nodes.first().map_or(0, NodeState::dim);
    let mut lhs = vec![0.0; p];
    let mut rhs = vec![0.0; p];
    let mut scale = 0.0f64;
    for s in nodes {
        for c in 0..p {
            lhs[c] += s.z[c];
            rhs[c] += s.grad[c];
        }
        scale += crate::vecops::norm2_sq(&s.grad).sqrt() + crate::vecops::norm2_sq(&s.z).sqrt();
        for (&(j, _), rho) in s.links.a_out.iter().zip(&s.rho_out) {
            let r = &nodes[j];
            let pos = r
                .links
                .a_in
                .iter()
                .position(|&q| q == s.id())
                .expect("A links are symmetric views of one matrix");
            for c in 0..p {
                lhs[c] += rho[c] - r.rho_tilde[pos][c];
            }
            scale += crate::vecops::norm2_sq(rho).sqrt()
                + crate::vecops::norm2_sq(&r.rho_tilde[pos]).sqrt();
        }
    }
    let diff = crate::vecops::dist2_sq(&lhs, &rhs).sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_topology, Preset};
    use crate::problems::{global_optimum, OracleMode};
    use crate::vecops::dist2_sq;
    use crate::weights::build_uniform;

    fn quad_setup(preset: Preset, n: usize) -> (WeightPair, Vec<LocalObjective>) {
        let wp = build_uniform(&make_topology(preset, n).unwrap());
        let objs = (0..n)
            .map(|i| LocalObjective::quadratic(vec![i as f64, (i * i % 5) as f64 - 1.0]))
            .collect();
        (wp, objs)
    }

    fn sim(cfg: SimConfig, preset: Preset, n: usize, sigma: f64) -> Simulator {
        let (wp, objs) = quad_setup(preset, n);
        let oracle = GradOracle::new(OracleMode::Gaussian { sigma }, cfg.seed);
        Simulator::new(cfg, &wp, objs, oracle, vec![vec![0.0, 0.0]; n]).unwrap()
    }

    #[test]
    fn single_node_matches_gd_closed_form() {
        let cfg = SimConfig {
            gamma: 0.1,
            ..SimConfig::default()
        };
        let (wp, _) = quad_setup(Preset::DirectedRing, 1);
        let objs = vec![LocalObjective::quadratic(vec![3.0])];
        let mut s = Simulator::new(cfg, &wp, objs, GradOracle::full(), vec![vec![0.0]]).unwrap();
        s.run(100).unwrap();
        let gap = (s.nodes()[0].x[0] - 3.0).powi(2);
        let expect = 0.9f64.powi(200) * 9.0;
        assert!(
            (gap - expect).abs() <= 1e-9 * expect,
            "gap {gap} expected {expect}"
        );
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let cfg = SimConfig {
            schedule: ScheduleKind::RandomFair { window: 10 },
            d_max: 3,
            p_drop: 0.3,
            seed: 42,
            gamma: 0.05,
            record_states: true,
            ..SimConfig::default()
        };
        let mut a = sim(cfg.clone(), Preset::DirectedRing, 5, 0.5);
        let mut b = sim(cfg, Preset::DirectedRing, 5, 0.5);
        a.run(500).unwrap();
        b.run(500).unwrap();
        assert_eq!(a.trace(), b.trace());
    }

    #[test]
    fn l_and_g_are_inverse() {
        let cfg = SimConfig {
            schedule: ScheduleKind::RandomFair { window: 6 },
            d_max: 2,
            seed: 3,
            ..SimConfig::default()
        };
        let mut s = sim(cfg, Preset::BinaryTree, 5, 0.0);
        s.run(300).unwrap();
        let tr = s.trace();
        for k in 0..tr.len() {
            let (i, t) = tr.l(k).unwrap();
            assert_eq!(tr.g(i, t), Some(k));
        }
        for i in 0..5 {
            for t in 0..tr.g[i].len() as u64 {
                assert_eq!(tr.l(tr.g(i, t).unwrap()), Some((i, t)));
            }
        }
    }

    #[test]
    fn transport_delay_bounded_without_loss() {
        let cfg = SimConfig {
            schedule: ScheduleKind::RandomFair { window: 8 },
            d_max: 4,
            seed: 9,
            ..SimConfig::default()
        };
        let mut s = sim(cfg, Preset::DirectedRing, 4, 0.0);
        s.run(2000).unwrap();
        assert!(s.trace().transport_max <= 4);
        assert_eq!(s.trace().transport_max, 4);
    }

    #[test]
    fn zero_drop_probability_matches_lossless_mode() {
        let base = SimConfig {
            schedule: ScheduleKind::RandomFair { window: 8 },
            d_max: 2,
            seed: 5,
            record_states: true,
            ..SimConfig::default()
        };
        let mut a = sim(base.clone(), Preset::DirectedRing, 4, 0.2);
        let mut b = sim(
            SimConfig {
                p_drop: 0.0,
                max_consecutive: 3,
                ..base
            },
            Preset::DirectedRing,
            4,
            0.2,
        );
        a.run(400).unwrap();
        b.run(400).unwrap();
        assert_eq!(a.trace(), b.trace());
    }

    #[test]
    fn round_robin_delays_below_remark_bound() {
        for n in 2..=10 {
            for preset in Preset::ALL {
                let mut s = sim(SimConfig::default(), preset, n, 0.0);
                s.run(20 * n).unwrap();
                let a = realized_asynchrony(s.trace()).unwrap();
                assert!(
                    a.d_real < 2 * n - 2 || (n == 2 && a.d_real == 0),
                    "n={n} d={}",
                    a.d_real
                );
                assert_eq!(a.t_real, n);
            }
        }
    }

    #[test]
    fn barrier_round_robin_matches_closed_form() {
        for n in 2..=6 {
            let cfg = SimConfig {
                barrier: true,
                ..SimConfig::default()
            };
            let mut s = sim(cfg, Preset::DirectedRing, n, 0.0);
            s.run(10 * n).unwrap();
            for r in s.trace().records.iter().filter(|r| r.k >= n) {
                for c in r.v_in.iter().chain(&r.rho_in) {
                    let expect = r.k - (r.k / n - 1) * n - c.from - 1;
                    assert_eq!(c.d, expect, "n={n} k={} from {}", r.k, c.from);
                    assert!(c.d <= 2 * n - 2);
                }
            }
        }
    }

    #[test]
    fn realized_window_random_fair() {
        for seed in 0..5 {
            let cfg = SimConfig {
                schedule: ScheduleKind::RandomFair { window: 10 },
                seed,
                ..SimConfig::default()
            };
            let mut s = sim(cfg, Preset::DirectedRing, 4, 0.0);
            s.run(3000).unwrap();
            assert!(realized_asynchrony(s.trace()).unwrap().t_real <= 10);
        }
    }

    #[test]
    fn empty_trace_is_insufficient() {
        assert!(realized_asynchrony(&RunTrace::new(3)).is_err());
    }

    #[test]
    fn conservation_holds_under_loss_and_delay() {
        let cfg = SimConfig {
            schedule: ScheduleKind::RandomFair { window: 12 },
            d_max: 3,
            p_drop: 0.3,
            max_consecutive: 5,
            seed: 17,
            gamma: 0.05,
            ..SimConfig::default()
        };
        let mut s = sim(cfg, Preset::BinaryTree, 6, 0.5);
        for _ in 0..2000 {
            s.step().unwrap();
            assert!(s.conservation_residual() < 1e-12);
        }
        assert!(s.trace().loss_total > 0);
    }

    #[test]
    fn blackout_then_recovery() {
        let blackout = Blackout {
            from: 0,
            to: 1,
            start: 0,
            end: 50,
        };
        let cfg = SimConfig {
            blackout: Some(blackout),
            gamma: 0.1,
            ..SimConfig::default()
        };
        let (wp, objs) = quad_setup(Preset::DirectedRing, 4);
        let (xs, _) = global_optimum(&objs).unwrap();
        let mut s =
            Simulator::new(cfg, &wp, objs, GradOracle::full(), vec![vec![0.0; 2]; 4]).unwrap();
        s.run(50).unwrap();
        assert!(s.nodes()[1].inbox_rho[0].stamp == 0);
        s.run(4000).unwrap();
        assert!(s.conservation_residual() < 1e-12);
        let last_from_0 = s.nodes()[0].rho_out[0].clone();
        assert_eq!(s.nodes()[1].rho_tilde[0], last_from_0);
        for node in s.nodes() {
            assert!(dist2_sq(&node.x, &xs) < 1e-12);
        }
    }

    #[test]
    fn lossy_ring_run_completes() {
        let cfg = SimConfig {
            p_drop: 0.3,
            max_consecutive: 8,
            seed: 1,
            gamma: 0.05,
            ..SimConfig::default()
        };
        let mut s = sim(cfg, Preset::DirectedRing, 4, 0.0);
        s.run(5000).unwrap();
        let a = realized_asynchrony(s.trace()).unwrap();
        assert!(a.d_real < 5000);
        assert!(s.trace().loss_total > 0);
    }

    #[test]
    fn divergence_carries_global_step() {
        let cfg = SimConfig {
            gamma: 1e300,
            ..SimConfig::default()
        };
        let mut s = sim(cfg, Preset::DirectedRing, 3, 0.0);
        let err = s.run(200).unwrap_err();
        assert!(matches!(err, Error::Divergence { k: Some(_), .. }), "{err}");
    }
}
