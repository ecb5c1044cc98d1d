//! Per-agent protocol state and one local iteration.

use crate::error::{Channel, Error, Result};
use crate::graph::NodeId;
use crate::problems::{GradOracle, LocalObjective};
use crate::vecops::{add_assign, all_finite, axpy, sub_assign};
use crate::weights::WeightPair;

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub kind: Channel,
    pub from: NodeId,
    pub to: NodeId,
    /// Sender's local counter after the step that produced this message.
    pub stamp: u64,
    pub payload: Vec<f64>,
}

/// A node's view of the weights. Neighbor lists are sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLinks {
    pub id: NodeId,
    pub w_self: f64,
    /// `(j, w_ij)` for each W-in-neighbor.
    pub w_in: Vec<(NodeId, f64)>,
    pub w_out: Vec<NodeId>,
    pub a_self: f64,
    /// `(j, a_ji)` for each A-out-neighbor.
    pub a_out: Vec<(NodeId, f64)>,
    pub a_in: Vec<NodeId>,
}

impl NodeLinks {
    pub fn from_weights(id: NodeId, wp: &WeightPair) -> Self {
        let n = wp.n();
        let others = || (0..n).filter(move |&j| j != id);
        Self {
            id,
            w_self: wp.w[id][id],
            w_in: others()
                .filter(|&j| wp.w[id][j] > 0.0)
                .map(|j| (j, wp.w[id][j]))
                .collect(),
            w_out: others().filter(|&j| wp.w[j][id] > 0.0).collect(),
            a_self: wp.a[id][id],
            a_out: others()
                .filter(|&j| wp.a[j][id] > 0.0)
                .map(|j| (j, wp.a[j][id]))
                .collect(),
            a_in: others().filter(|&j| wp.a[id][j] > 0.0).collect(),
        }
    }

    pub fn all(wp: &WeightPair) -> Vec<NodeLinks> {
        (0..wp.n()).map(|i| Self::from_weights(i, wp)).collect()
    }
}

/// Latest message kept from one neighbor. Stamp 0 means nothing received yet.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub stamp: u64,
    pub payload: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub links: NodeLinks,
    pub t: u64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    /// Running sums, aligned with `links.a_out`.
    pub rho_out: Vec<Vec<f64>>,
    /// Last consumed running sums, aligned with `links.a_in`.
    pub rho_tilde: Vec<Vec<f64>>,
    pub inbox_v: Vec<Slot>,
    pub inbox_rho: Vec<Slot>,
    pub tau_v: Vec<u64>,
    pub tau_rho: Vec<u64>,
    /// The sample `∇f(x^t; ζ^t)` drawn at the current iterate.
    pub grad: Vec<f64>,
    shadow: Option<Vec<Vec<Vec<f64>>>>,
}

impl NodeState {
    /// Draws `z⁰ = ∇f(x⁰; ζ⁰)`; every other buffer starts at zero.
    pub fn init(
        links: NodeLinks,
        x0: Vec<f64>,
        obj: &LocalObjective,
        oracle: &GradOracle,
    ) -> Result<Self> {
        let p = x0.len();
        let grad = oracle.sample(obj, &x0, links.id, 0)?;
        let zeros = |m: usize| vec![vec![0.0; p]; m];
        let empty = |m: usize| {
            vec![
                Slot {
                    stamp: 0,
                    payload: vec![0.0; p],
                };
                m
            ]
        };
        Ok(Self {
            t: 0,
            v: vec![0.0; p],
            z: grad.clone(),
            rho_out: zeros(links.a_out.len()),
            rho_tilde: zeros(links.a_in.len()),
            inbox_v: empty(links.w_in.len()),
            inbox_rho: empty(links.a_in.len()),
            tau_v: vec![0; links.w_in.len()],
            tau_rho: vec![0; links.a_in.len()],
            grad,
            x: x0,
            links,
            shadow: None,
        })
    }

    pub fn id(&self) -> NodeId {
        self.links.id
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Start recording every increment added to `rho_out`.
    pub fn enable_shadow(&mut self) {
        self.shadow = Some(vec![Vec::new(); self.links.a_out.len()]);
    }

    /// `rho_out[idx]` rebuilt from the shadow log, if recording.
    pub fn shadow_sum(&self, idx: usize) -> Option<Vec<f64>> {
        let log = self.shadow.as_ref()?;
        let mut acc = vec![0.0; self.dim()];
        for inc in &log[idx] {
            add_assign(&mut acc, inc);
        }
        Some(acc)
    }

    fn protocol(&self, msg: &Message, what: &str) -> Error {
        Error::Protocol {
            kind: msg.kind,
            from: msg.from,
            to: msg.to,
            msg: what.into(),
        }
    }

    /// Keeps the message iff its stamp beats the one already held. Returns
    /// whether the inbox changed.
    pub fn ingest(&mut self, msg: &Message) -> Result<bool> {
        if msg.to != self.id() {
            return Err(self.protocol(msg, &format!("delivered to node {}", self.id())));
        }
        if msg.stamp == 0 {
            return Err(self.protocol(msg, "stamps start at 1"));
        }
        if msg.payload.len() != self.dim() {
            return Err(self.protocol(msg, "payload has the wrong dimension"));
        }
        let pos = match msg.kind {
            Channel::V => self.links.w_in.iter().position(|&(j, _)| j == msg.from),
            Channel::Rho => self.links.a_in.iter().position(|&j| j == msg.from),
        };
        let graph = match msg.kind {
            Channel::V => "G(W)",
            Channel::Rho => "G(A)",
        };
        let Some(pos) = pos else {
            return Err(self.protocol(msg, &format!("not an edge of {graph}")));
        };
        let slot = match msg.kind {
            Channel::V => &mut self.inbox_v[pos],
            Channel::Rho => &mut self.inbox_rho[pos],
        };
        if msg.stamp > slot.stamp {
            slot.stamp = msg.stamp;
            slot.payload.clone_from(&msg.payload);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// `v ← x − γz` followed by the pull average over kept neighbor values.
    fn descend_and_mix(&mut self, gamma: f64) {
        for ((vi, xi), zi) in self.v.iter_mut().zip(&self.x).zip(&self.z) {
            *vi = xi - gamma * zi;
        }
        let w = self.links.w_self;
        for (xi, vi) in self.x.iter_mut().zip(&self.v) {
            *xi = w * vi;
        }
        for (slot, &(_, wij)) in self.inbox_v.iter().zip(&self.links.w_in) {
            axpy(&mut self.x, wij, &slot.payload);
        }
        for (tau, slot) in self.tau_v.iter_mut().zip(&self.inbox_v) {
            *tau = slot.stamp;
        }
    }

    fn v_messages(&self) -> impl Iterator<Item = Message> + '_ {
        self.links.w_out.iter().map(|&j| Message {
            kind: Channel::V,
            from: self.id(),
            to: j,
            stamp: self.t,
            payload: self.v.clone(),
        })
    }

    fn diverged(&self) -> Error {
        Error::Divergence {
            node: self.id(),
            t: self.t,
            k: None,
        }
    }

    /// One wake-up of the tracking protocol. Returns the outgoing messages.
    pub fn local_step(
        &mut self,
        obj: &LocalObjective,
        oracle: &GradOracle,
        gamma: f64,
    ) -> Result<Vec<Message>> {
        self.descend_and_mix(gamma);
        if !all_finite(&self.x) {
            return Err(self.diverged());
        }
        let g_new = oracle
            .sample(obj, &self.x, self.id(), self.t + 1)
            .map_err(|_| self.diverged())?;

        let mut half = self.z.clone();
        for (slot, tilde) in self.inbox_rho.iter().zip(&self.rho_tilde) {
            for ((h, r), rt) in half.iter_mut().zip(&slot.payload).zip(tilde) {
                *h += r - rt;
            }
        }
        add_assign(&mut half, &g_new);
        sub_assign(&mut half, &self.grad);

        let a = self.links.a_self;
        for (zi, hi) in self.z.iter_mut().zip(&half) {
            *zi = a * hi;
        }
        for (idx, (rho, &(_, aji))) in self.rho_out.iter_mut().zip(&self.links.a_out).enumerate() {
            axpy(rho, aji, &half);
            if let Some(log) = self.shadow.as_mut() {
                log[idx].push(half.iter().map(|h| aji * h).collect());
            }
        }
        for ((tilde, tau), slot) in self
            .rho_tilde
            .iter_mut()
            .zip(self.tau_rho.iter_mut())
            .zip(&self.inbox_rho)
        {
            tilde.clone_from(&slot.payload);
            *tau = slot.stamp;
        }
        self.grad = g_new;
        self.t += 1;
        if !all_finite(&self.z) || self.rho_out.iter().any(|r| !all_finite(r)) {
            return Err(self.diverged());
        }

        let mut out: Vec<Message> = self.v_messages().collect();
        out.extend(
            self.links
                .a_out
                .iter()
                .zip(&self.rho_out)
                .map(|(&(j, _), rho)| Message {
                    kind: Channel::Rho,
                    from: self.id(),
                    to: j,
                    stamp: self.t,
                    payload: rho.clone(),
                }),
        );
        Ok(out)
    }

    /// One wake-up of the no-tracking baseline: the same pull step, but `z`
    /// is just the fresh local sample and only V messages are sent.
    pub fn gossip_step(
        &mut self,
        obj: &LocalObjective,
        oracle: &GradOracle,
        gamma: f64,
    ) -> Result<Vec<Message>> {
        self.descend_and_mix(gamma);
        if !all_finite(&self.x) {
            return Err(self.diverged());
        }
        let g_new = oracle
            .sample(obj, &self.x, self.id(), self.t + 1)
            .map_err(|_| self.diverged())?;
        self.z.clone_from(&g_new);
        self.grad = g_new;
        self.t += 1;
        Ok(self.v_messages().collect())
    }
}

/// Synchronous push-pull with exact gradients, every node updating at once.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncPushPull {
    pub x: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    grad: Vec<Vec<f64>>,
}

impl SyncPushPull {
    pub fn new(objs: &[LocalObjective], x0: Vec<Vec<f64>>) -> Result<Self> {
        let grad = objs
            .iter()
            .zip(&x0)
            .map(|(o, x)| o.grad(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            x: x0,
            z: grad.clone(),
            grad,
        })
    }

    /// `x ← W(x − γz)`, `z ← Az + ∇f(x_new) − ∇f(x_old)`.
    pub fn step(&mut self, wp: &WeightPair, objs: &[LocalObjective], gamma: f64) -> Result<()> {
        let n = self.x.len();
        let p = self.x.first().map_or(0, Vec::len);
        let v: Vec<Vec<f64>> = self
            .x
            .iter()
            .zip(&self.z)
            .map(|(x, z)| x.iter().zip(z).map(|(a, b)| a - gamma * b).collect())
            .collect();
        let mix = |m: &[Vec<f64>], src: &[Vec<f64>]| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| {
                    let mut acc = vec![0.0; p];
                    for j in 0..n {
                        if m[i][j] != 0.0 {
                            axpy(&mut acc, m[i][j], &src[j]);
                        }
                    }
                    acc
                })
                .collect()
        };
        self.x = mix(&wp.w, &v);
        let mut z = mix(&wp.a, &self.z);
        for (i, zi) in z.iter_mut().enumerate() {
            let g = objs[i].grad(&self.x[i]).map_err(|_| Error::Divergence {
                node: i,
                t: 0,
                k: None,
            })?;
            add_assign(zi, &g);
            sub_assign(zi, &self.grad[i]);
            self.grad[i] = g;
        }
        self.z = z;
        Ok(())
    }
}
