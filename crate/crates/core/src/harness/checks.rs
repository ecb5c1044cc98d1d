//! Drivers for the oracle-equivalence and contraction-diagnostics subcommands.

use std::fmt::Write as _;

use crate::augmented::mirror::Mirror;
use crate::augmented::{
    contraction_diagnostics, mirror_from_trace, DecayReport, DiagnosticsInput, MirrorReport,
};
use crate::error::Result;
use crate::sim::{RunTrace, Simulator};

use super::config::ExperimentConfig;
use super::runner::{build_problem, resolve_gamma, sim_config, Problem};

fn traced_run(cfg: &ExperimentConfig, steps: usize) -> Result<(Problem, f64, RunTrace)> {
    let problem = build_problem(cfg)?;
    let (gamma, _) = resolve_gamma(cfg, &problem)?;
    let mut sc = sim_config(cfg, gamma)?;
    sc.record_states = true;
    let mut sim = Simulator::new(
        sc,
        &problem.wp,
        problem.objs.clone(),
        problem.oracle,
        problem.x0.clone(),
    )?;
    sim.run(steps)?;
    Ok((problem, gamma, sim.into_trace()))
}

/// Runs `steps` activations and replays them through the augmented mirror.
pub fn oracle_check(
    cfg: &ExperimentConfig,
    steps: usize,
    tol: f64,
    conservation_tol: f64,
) -> Result<MirrorReport> {
    let (problem, gamma, trace) = traced_run(cfg, steps)?;
    mirror_from_trace(
        &trace,
        &problem.wp,
        &problem.objs,
        &problem.oracle,
        &problem.x0,
        gamma,
        tol,
        conservation_tol,
    )
}

#[derive(Debug, Clone)]
pub struct Diagnosis {
    pub report: DecayReport,
    pub d_cap: usize,
    pub n: usize,
}

impl Diagnosis {
    pub fn summary(&self) -> String {
        let r = &self.report;
        let mut s = String::new();
        let fit = |f: &Option<crate::stats::LineFit>| {
            f.map_or_else(
                || "none".into(),
                |f| format!("slope {:e} r2 {}", f.slope, f.r2),
            )
        };
        let at = |k: Option<usize>| k.map_or_else(|| "never".into(), |k| k.to_string());
        let _ = writeln!(s, "d_cap = {}", self.d_cap);
        let _ = writeln!(s, "w_fit = {}", fit(&r.w_fit));
        let _ = writeln!(s, "a_fit = {}", fit(&r.a_fit));
        let _ = writeln!(s, "w_converged_at = {}", at(r.w_converged_at));
        let _ = writeln!(s, "a_converged_at = {}", at(r.a_converged_at));
        let _ = writeln!(s, "w_row_residual = {:e}", r.w_row_residual);
        let _ = writeln!(s, "a_col_residual = {:e}", r.a_col_residual);
        let _ = writeln!(s, "psi_residual = {:e}", r.psi_residual);
        let _ = writeln!(
            s,
            "eta_hat = {}",
            r.eta_hat.map_or_else(|| "none".into(), |e| e.to_string())
        );
        let _ = writeln!(s, "eta_theory = {:e}", r.eta_theory);
        if let Some(psi) = &r.psi0 {
            let v: Vec<String> = psi.iter().take(self.n).map(|x| format!("{x:.6}")).collect();
            let _ = writeln!(s, "psi0_real = {}", v.join(","));
        }
        s
    }

    /// Both products collapsed to rank one with log-linear decay.
    pub fn passes(&self, min_r2: f64) -> bool {
        let r = &self.report;
        let good =
            |f: &Option<crate::stats::LineFit>| f.is_some_and(|f| f.slope < 0.0 && f.r2 >= min_r2);
        r.w_converged_at.is_some() && r.a_converged_at.is_some() && good(&r.w_fit) && good(&r.a_fit)
    }
}

/// Records `steps` augmented matrices and analyses their products.
pub fn diagnose(cfg: &ExperimentConfig, steps: usize, spread_tol: f64) -> Result<Diagnosis> {
    let (problem, gamma, trace) = traced_run(cfg, steps)?;
    let d_cap = trace.d_max();
    let root = *problem
        .tp
        .common_roots
        .iter()
        .next()
        .expect("validated topology");
    let mut m = Mirror::new(
        &problem.wp,
        &problem.objs,
        &problem.oracle,
        &problem.x0,
        gamma,
        d_cap,
        root,
    )?;
    m.keep_matrices();
    for rec in &trace.records {
        m.step(rec)?;
    }
    let (w_hats, a_hats) = m.history.take().expect("matrices kept");
    let roots: Vec<usize> = problem.tp.common_roots.iter().copied().collect();
    let report = contraction_diagnostics(&DiagnosticsInput {
        w_hats: &w_hats,
        a_hats: &a_hats,
        n: problem.wp.n(),
        common_roots: &roots,
        m_bar: problem.wp.m_bar,
        t_window: cfg.window(),
        d_cap,
        window: steps,
        spread_tol,
    })?;
    Ok(Diagnosis {
        report,
        d_cap,
        n: problem.wp.n(),
    })
}
