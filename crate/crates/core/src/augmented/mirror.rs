//! Replays a simulator trace through the augmented recursions.

use crate::error::{Error, Result};
use crate::problems::{GradOracle, LocalObjective};
use crate::sim::{RunTrace, StepRecord};
use crate::vecops::{max_abs_diff, norm2_sq, sub_assign, sum_rows};
use crate::weights::WeightPair;

use super::{
    build_s_p, build_w_hat, consensus_dim, step_consensus, step_tracking, total_mass, SparseMat,
    StepInfo, TrackingLayout,
};

/// Augmented consensus and tracking state driven by recorded steps.
#[derive(Debug, Clone)]
pub struct Mirror {
    wp: WeightPair,
    objs: Vec<LocalObjective>,
    oracle: GradOracle,
    gamma: f64,
    pub d_cap: usize,
    pub layout: TrackingLayout,
    pub h: Vec<Vec<f64>>,
    pub zhat: Vec<Vec<f64>>,
    /// Twin of `zhat` driven by exact local gradients.
    pub zbar: Vec<Vec<f64>>,
    /// `∇f_i(x_i; ζ_i)` at each node's current iterate.
    pub sample: Vec<Vec<f64>>,
    /// `∇f_i(x_i)` at each node's current iterate.
    pub exact: Vec<Vec<f64>>,
    /// Column of `Â^{k−1:0}` for the reference node `root`.
    pub xi: Vec<f64>,
    pub root: usize,
    /// All built matrices, when `keep_matrices` was requested.
    pub history: Option<(Vec<SparseMat>, Vec<SparseMat>)>,
    pub k: usize,
}

impl Mirror {
    pub fn new(
        wp: &WeightPair,
        objs: &[LocalObjective],
        oracle: &GradOracle,
        x0: &[Vec<f64>],
        gamma: f64,
        d_cap: usize,
        root: usize,
    ) -> Result<Self> {
        let n = wp.n();
        let p = x0.first().map_or(0, Vec::len);
        let layout = TrackingLayout::new(wp, d_cap);
        let mut h = vec![vec![0.0; p]; consensus_dim(n, d_cap)];
        h[..n].clone_from_slice(x0);
        let sample = (0..n)
            .map(|i| oracle.sample(&objs[i], &x0[i], i, 0))
            .collect::<Result<Vec<_>>>()?;
        let exact = (0..n)
            .map(|i| objs[i].grad(&x0[i]))
            .collect::<Result<Vec<_>>>()?;
        let s = layout.dim();
        let mut zhat = vec![vec![0.0; p]; s];
        let mut zbar = vec![vec![0.0; p]; s];
        zhat[..n].clone_from_slice(&sample);
        zbar[..n].clone_from_slice(&exact);
        let mut xi = vec![0.0; s];
        xi[root] = 1.0;
        Ok(Self {
            wp: wp.clone(),
            objs: objs.to_vec(),
            oracle: *oracle,
            gamma,
            d_cap,
            layout,
            h,
            zhat,
            zbar,
            sample,
            exact,
            xi,
            root,
            history: None,
            k: 0,
        })
    }

    pub fn keep_matrices(&mut self) {
        self.history = Some((Vec::new(), Vec::new()));
    }

    pub fn n(&self) -> usize {
        self.wp.n()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.h[i]
    }

    /// Applies one recorded step.
    pub fn step(&mut self, rec: &StepRecord) -> Result<()> {
        let info = StepInfo::from_record(rec);
        let i = info.node;
        let w_hat = build_w_hat(&info, &self.wp, self.d_cap)?;
        self.h = step_consensus(&self.h, &w_hat, self.gamma, i, &self.zhat[i]);

        let x_new = &self.h[i];
        let g_new = self
            .oracle
            .sample(&self.objs[i], x_new, i, rec.t + 1)
            .map_err(|_| divergence(i, rec))?;
        let full_new = self.objs[i].grad(x_new).map_err(|_| divergence(i, rec))?;
        let mut eps = g_new.clone();
        sub_assign(&mut eps, &self.sample[i]);
        let mut eps_bar = full_new.clone();
        sub_assign(&mut eps_bar, &self.exact[i]);

        let (s, p) = build_s_p(&info, &self.wp, &self.layout)?;
        self.zhat = step_tracking(&self.zhat, &s, &p, i, &eps);
        self.zbar = step_tracking(&self.zbar, &s, &p, i, &eps_bar);
        self.sample[i] = g_new;
        self.exact[i] = full_new;

        let a_hat = p.matmul(&s);
        let col = a_hat.apply(&self.xi.iter().map(|&v| vec![v]).collect::<Vec<_>>());
        self.xi = col.into_iter().map(|v| v[0]).collect();
        if let Some((ws, as_)) = self.history.as_mut() {
            ws.push(w_hat);
            as_.push(a_hat);
        }
        self.k += 1;
        Ok(())
    }

    /// `‖1ᵀẑ − Σ_i ∇f_i(x_i; ζ_i)‖` relative to the larger of the summed magnitudes.
    pub fn conservation_error(&self) -> f64 {
        rel_mass_gap(&self.zhat, &self.sample)
    }

    /// The same balance for the full-gradient twin.
    pub fn zbar_conservation_error(&self) -> f64 {
        rel_mass_gap(&self.zbar, &self.exact)
    }

    /// `Σ_i ‖z̄_i − ξ_i · 1ᵀz̄‖²` over real nodes.
    pub fn tracking_error(&self) -> f64 {
        let total = total_mass(&self.zbar);
        (0..self.n())
            .map(|i| {
                self.zbar[i]
                    .iter()
                    .zip(&total)
                    .map(|(z, t)| (z - self.xi[i] * t).powi(2))
                    .sum::<f64>()
            })
            .sum()
    }
}

fn divergence(i: usize, rec: &StepRecord) -> Error {
    Error::Divergence {
        node: i,
        t: rec.t,
        k: Some(rec.k),
    }
}

fn rel_mass_gap(stack: &[Vec<f64>], grads: &[Vec<f64>]) -> f64 {
    let p = grads.first().map_or(0, Vec::len);
    let lhs = total_mass(stack);
    let rhs = sum_rows(grads, p);
    let gap: f64 = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = grads
        .iter()
        .map(|g| norm2_sq(g).sqrt())
        .sum::<f64>()
        .max(stack.iter().map(|z| norm2_sq(z).sqrt()).sum::<f64>());
    if scale == 0.0 {
        gap
    } else {
        gap / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MirrorReport {
    pub steps: usize,
    pub d_cap: usize,
    pub max_x_diff: f64,
    pub max_z_diff: f64,
    pub max_conservation: f64,
    pub max_zbar_conservation: f64,
}

/// Replays `trace` and compares against the node states recorded in it.
/// Fails with an equivalence error at the first step where either `x` or `z`
/// of the active node differs by more than `tol`, or where the mass balance
/// is off by more than `conservation_tol`.
#[allow(clippy::too_many_arguments)]
pub fn mirror_from_trace(
    trace: &RunTrace,
    wp: &WeightPair,
    objs: &[LocalObjective],
    oracle: &GradOracle,
    x0: &[Vec<f64>],
    gamma: f64,
    tol: f64,
    conservation_tol: f64,
) -> Result<MirrorReport> {
    let d_cap = trace.d_max();
    let mut m = Mirror::new(wp, objs, oracle, x0, gamma, d_cap, 0)?;
    let mut rep = MirrorReport {
        d_cap,
        ..MirrorReport::default()
    };
    for rec in &trace.records {
        m.step(rec)?;
        rep.steps += 1;
        if let Some((x, z)) = &rec.after {
            let dx = max_abs_diff(m.x(rec.node), x);
            let dz = max_abs_diff(&m.zhat[rec.node], z);
            rep.max_x_diff = rep.max_x_diff.max(dx);
            rep.max_z_diff = rep.max_z_diff.max(dz);
            if !(dx <= tol) {
                return Err(Error::Equivalence {
                    k: rec.k,
                    what: format!("x of node {}", rec.node),
                    diff: dx,
                });
            }
            if !(dz <= tol) {
                return Err(Error::Equivalence {
                    k: rec.k,
                    what: format!("z of node {}", rec.node),
                    diff: dz,
                });
            }
        }
        let c = m.conservation_error();
        let cb = m.zbar_conservation_error();
        rep.max_conservation = rep.max_conservation.max(c);
        rep.max_zbar_conservation = rep.max_zbar_conservation.max(cb);
        if !(c <= conservation_tol) {
            return Err(Error::Equivalence {
                k: rec.k,
                what: "total tracking mass".into(),
                diff: c,
            });
        }
    }
    Ok(rep)
}
