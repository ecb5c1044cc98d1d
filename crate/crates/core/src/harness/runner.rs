//! Building problems from configurations, running them, and writing outputs.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::augmented::mirror::Mirror;
use crate::error::{Error, Result};
use crate::graph::{make_topology, Digraph, TopologyPair};
use crate::problems::oracle::mix64;
use crate::problems::{
    global_optimum, load_or_synthesize, max_smoothness, partition, DataSource, GradOracle,
    LocalObjective, ObjectiveKind, OracleMode, SyntheticSpec,
};
use crate::sim::{realized_asynchrony, Asynchrony, RunTrace, SimConfig, Simulator};
use crate::weights::{build_uniform, validate_assumption1, WeightPair};

use super::config::{ExperimentConfig, Gamma};
use super::metrics::{metrics_csv, snapshot, MetricRow};

/// Halvings tried by the step-size sweep before giving up.
const MAX_HALVINGS: u32 = 30;
/// A trial must end below this fraction of its initial progress measure...
const STABLE_FRACTION: f64 = 0.5;
/// ...and never exceed this multiple of it.
const STABLE_EXCURSION: f64 = 10.0;
/// Snapshots per trial run.
const TRIAL_SNAPSHOTS: usize = 20;

#[derive(Debug, Clone)]
pub struct Problem {
    pub tp: TopologyPair,
    pub wp: WeightPair,
    pub objs: Vec<LocalObjective>,
    pub oracle: GradOracle,
    pub x0: Vec<Vec<f64>>,
    /// `(x*, F(x*))` for strongly convex problems.
    pub optimum: Option<(Vec<f64>, f64)>,
    pub notes: Vec<String>,
}

pub fn build_topology(cfg: &ExperimentConfig) -> Result<TopologyPair> {
    match (&cfg.gw_edges, &cfg.ga_edges) {
        (Some(gw), Some(ga)) => TopologyPair::new(
            Digraph::parse_edges(cfg.n, gw)?,
            Digraph::parse_edges(cfg.n, ga)?,
        ),
        _ => make_topology(cfg.topology, cfg.n),
    }
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    cfg.validate()?;
    let tp = build_topology(cfg)?;
    let wp = build_uniform(&tp);
    validate_assumption1(&wp, &tp)?;
    let n = cfg.n;
    let mut notes = Vec::new();

    let objs: Vec<LocalObjective> = match cfg.kind {
        ObjectiveKind::Quadratic => {
            if cfg.quad_dim == 0 {
                return Err(Error::Config("problem.dim must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ 0xCE47_E500));
            (0..n)
                .map(|_| {
                    let c = (0..cfg.quad_dim)
                        .map(|_| cfg.center_scale * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    LocalObjective::quadratic(c)
                })
                .collect()
        }
        kind => {
            let source = match &cfg.data_path {
                Some(dir) => DataSource::Idx {
                    images: dir.join("train-images-idx3-ubyte"),
                    labels: dir.join("train-labels-idx1-ubyte"),
                    classes: cfg.classes,
                    limit: cfg.data_limit,
                },
                None => DataSource::Synthetic(SyntheticSpec {
                    samples: cfg.samples,
                    dim: cfg.data_dim,
                    separation: cfg.separation,
                    seed: mix64(cfg.seed ^ 0xDA7A_0000),
                }),
            };
            let data = load_or_synthesize(&source)?;
            partition(&data, n, cfg.skew, mix64(cfg.seed ^ 0x5EA2_D000))?
                .into_iter()
                .map(|shard| LocalObjective::logistic(kind, shard, cfg.lambda, cfg.normalize))
                .collect::<Result<_>>()?
        }
    };

    let oracle = GradOracle::new(cfg.oracle_mode()?, cfg.seed);
    for o in &objs {
        oracle.check_compatible(o)?;
    }
    let optimum = if cfg.kind.is_strongly_convex() {
        match global_optimum(&objs) {
            Ok(opt) => Some(opt),
            Err(e) => {
                notes.push(format!("optimality gap omitted: {e}"));
                None
            }
        }
    } else {
        notes.push("optimality gap omitted: nonconvex objective".into());
        None
    };
    let p = objs[0].dim();
    Ok(Problem {
        tp,
        wp,
        objs,
        oracle,
        x0: vec![vec![0.0; p]; n],
        optimum,
        notes,
    })
}

pub fn sim_config(cfg: &ExperimentConfig, gamma: f64) -> Result<SimConfig> {
    Ok(SimConfig {
        schedule: cfg.schedule()?,
        d_max: cfg.d_max,
        barrier: cfg.barrier,
        p_drop: cfg.p_drop,
        max_consecutive: cfg.max_consecutive,
        blackout: cfg.blackout,
        gamma,
        seed: cfg.seed,
        algorithm: cfg.algorithm,
        record_states: false,
    })
}

/// Samples per local step of node `obj`, and its shard size (both 1 for
/// data-free objectives).
fn sample_counts(obj: &LocalObjective, mode: OracleMode) -> (f64, f64) {
    let m = obj.num_samples().max(1) as f64;
    match mode {
        OracleMode::Minibatch { batch } => (batch as f64, m),
        _ => (m, m),
    }
}

fn epoch(sim: &Simulator) -> f64 {
    let mode = sim.oracle().mode;
    let (done, total) =
        sim.nodes()
            .iter()
            .zip(sim.objectives())
            .fold((0.0, 0.0), |(d, t), (s, o)| {
                let (b, m) = sample_counts(o, mode);
                (d + s.t as f64 * b, t + m)
            });
    done / total
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Hits {
    pub gap: Option<usize>,
    pub merit: Option<usize>,
    pub loss: Option<usize>,
}

impl Hits {
    fn update(&mut self, cfg: &ExperimentConfig, row: &MetricRow) {
        let n = cfg.n as f64;
        if let (Some(th), Some(g), None) = (cfg.stop_gap, row.gap, self.gap) {
            if g <= th {
                self.gap = Some(row.k);
            }
        }
        if let (Some(th), None) = (cfg.stop_merit, self.merit) {
            if row.merit <= th {
                self.merit = Some(row.k);
            }
        }
        if let (Some(th), None) = (cfg.stop_loss, self.loss) {
            if row.loss / n <= th {
                self.loss = Some(row.k);
            }
        }
    }

    /// Every configured threshold has been reached. Gap thresholds on problems
    /// without a known optimum are ignored.
    fn all_reached(&self, cfg: &ExperimentConfig, has_gap: bool) -> bool {
        let any = (cfg.stop_gap.is_some() && has_gap)
            || cfg.stop_merit.is_some()
            || cfg.stop_loss.is_some();
        any && (cfg.stop_gap.is_none() || !has_gap || self.gap.is_some())
            && (cfg.stop_merit.is_none() || self.merit.is_some())
            && (cfg.stop_loss.is_none() || self.loss.is_some())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub rows: Vec<MetricRow>,
    pub trace: RunTrace,
    pub final_x: Vec<Vec<f64>>,
    pub hits: Hits,
    pub stopped_early: bool,
    pub conservation: f64,
}

fn check_row(row: &MetricRow, sim: &Simulator) -> Result<()> {
    let vals = [
        row.loss,
        row.consensus,
        row.gradnorm,
        row.gap.unwrap_or(0.0),
    ];
    if vals.iter().all(|v| v.is_finite()) {
        return Ok(());
    }
    // metrics can overflow before any iterate does
    let (node, t) = sim
        .nodes()
        .iter()
        .enumerate()
        .find(|(_, s)| s.x.iter().any(|v| !v.is_finite()))
        .map_or((0, sim.nodes()[0].t), |(i, s)| (i, s.t));
    Err(Error::Divergence {
        node,
        t,
        k: Some(row.k),
    })
}

/// Runs up to `steps` activations with snapshots every `cfg.every` steps and a
/// final snapshot at the last step.
pub fn simulate(
    cfg: &ExperimentConfig,
    problem: &Problem,
    gamma: f64,
    steps: usize,
    stop_early: bool,
) -> Result<Trajectory> {
    let mut sim = Simulator::new(
        sim_config(cfg, gamma)?,
        &problem.wp,
        problem.objs.clone(),
        problem.oracle,
        problem.x0.clone(),
    )?;
    let x_star = problem.optimum.as_ref().map(|(x, _)| x.as_slice());
    let take = |sim: &Simulator| -> Result<MetricRow> {
        let xs: Vec<Vec<f64>> = sim.nodes().iter().map(|s| s.x.clone()).collect();
        let mut row = snapshot(sim.k(), &xs, sim.objectives(), x_star)?;
        row.epoch = epoch(sim);
        check_row(&row, sim)?;
        Ok(row)
    };
    let mut hits = Hits::default();
    let mut rows = vec![take(&sim)?];
    hits.update(cfg, &rows[0]);
    let mut stopped_early = stop_early && hits.all_reached(cfg, x_star.is_some());
    while !stopped_early && sim.k() < steps {
        sim.step()?;
        if sim.k() % cfg.every == 0 || sim.k() == steps {
            let row = take(&sim)?;
            hits.update(cfg, &row);
            rows.push(row);
            stopped_early = stop_early && hits.all_reached(cfg, x_star.is_some());
        }
    }
    if rows.last().map(|r| r.k) != Some(sim.k()) {
        let row = take(&sim)?;
        hits.update(cfg, &row);
        rows.push(row);
    }
    let conservation = sim.conservation_residual();
    let final_x = sim.nodes().iter().map(|s| s.x.clone()).collect();
    Ok(Trajectory {
        rows,
        trace: sim.into_trace(),
        final_x,
        hits,
        stopped_early,
        conservation,
    })
}

/// The gap for convex problems, the merit otherwise.
fn progress(row: &MetricRow) -> f64 {
    row.gap.unwrap_or(row.merit)
}

/// Tries `γ = 2^{−m} / (2 C_L)` for `m = 0, 1, …` and keeps the first value
/// whose trial run of `cfg.auto_steps` steps stays finite, never exceeds
/// [`STABLE_EXCURSION`] times the initial progress measure, and ends below
/// [`STABLE_FRACTION`] of it.
pub fn stability_sweep(
    cfg: &ExperimentConfig,
    problem: &Problem,
) -> Result<(f64, Vec<(f64, bool)>)> {
    let c_l = max_smoothness(&problem.objs);
    if !(c_l > 0.0) {
        return Err(Error::Config("smoothness constant must be positive".into()));
    }
    let g0 = 1.0 / (2.0 * c_l);
    let mut trials = Vec::new();
    let mut trial_cfg = cfg.clone();
    trial_cfg.every = (cfg.auto_steps / TRIAL_SNAPSHOTS).max(1);
    trial_cfg.stop_gap = None;
    trial_cfg.stop_merit = None;
    trial_cfg.stop_loss = None;
    for m in 0..=MAX_HALVINGS {
        let gamma = g0 * 0.5f64.powi(m as i32);
        let ok = match simulate(&trial_cfg, problem, gamma, cfg.auto_steps, false) {
            Ok(tr) => {
                let first = progress(&tr.rows[0]);
                let last = progress(tr.rows.last().expect("final row"));
                let peak = tr.rows.iter().map(progress).fold(0.0, f64::max);
                peak <= STABLE_EXCURSION * first && last <= STABLE_FRACTION * first
            }
            Err(Error::Divergence { .. }) | Err(Error::NumericDomain(_)) => false,
            Err(e) => return Err(e),
        };
        trials.push((gamma, ok));
        if ok {
            return Ok((gamma, trials));
        }
    }
    Err(Error::NumericDomain(format!(
        "no step size down to {:e} converged within {} steps",
        g0 * 0.5f64.powi(MAX_HALVINGS as i32),
        cfg.auto_steps
    )))
}

/// Replays the trace through the augmented mirror and fills the tracking
/// column of every row.
pub fn fill_tracking(problem: &Problem, gamma: f64, traj: &mut Trajectory) -> Result<()> {
    let mut m = Mirror::new(
        &problem.wp,
        &problem.objs,
        &problem.oracle,
        &problem.x0,
        gamma,
        traj.trace.d_max(),
        *problem
            .tp
            .common_roots
            .iter()
            .next()
            .expect("validated topology"),
    )?;
    let mut rows = traj.rows.iter_mut().peekable();
    for k in 0..=traj.trace.len() {
        while let Some(r) = rows.peek_mut() {
            if r.k != k {
                break;
            }
            r.tracking = Some(m.tracking_error());
            rows.next();
        }
        if k < traj.trace.len() {
            m.step(&traj.trace.records[k])?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub gamma: f64,
    pub gamma_trials: Vec<(f64, bool)>,
    pub steps: usize,
    pub stopped_early: bool,
    pub hits: Hits,
    pub final_row: MetricRow,
    pub min_merit: f64,
    pub asynchrony: Option<Asynchrony>,
    pub loss_total: usize,
    pub activations: Vec<u64>,
    pub conservation: f64,
    pub optimum_value: Option<f64>,
    pub notes: Vec<String>,
}

fn opt_k(v: Option<usize>) -> String {
    v.map_or_else(|| "none".into(), |k| k.to_string())
}

impl Summary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "gamma = {}", self.gamma);
        for (g, ok) in &self.gamma_trials {
            let _ = writeln!(
                s,
                "gamma_trial = {g} {}",
                if *ok { "stable" } else { "rejected" }
            );
        }
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "stopped_early = {}", self.stopped_early);
        let _ = writeln!(s, "first_gap_hit = {}", opt_k(self.hits.gap));
        let _ = writeln!(s, "first_merit_hit = {}", opt_k(self.hits.merit));
        let _ = writeln!(s, "first_loss_hit = {}", opt_k(self.hits.loss));
        let r = &self.final_row;
        let _ = writeln!(s, "final_epoch = {}", r.epoch);
        let _ = writeln!(s, "final_loss = {}", r.loss);
        let _ = writeln!(
            s,
            "final_gap = {}",
            r.gap.map_or_else(|| "none".into(), |g| g.to_string())
        );
        let _ = writeln!(s, "final_consensus = {}", r.consensus);
        let _ = writeln!(s, "final_gradnorm = {}", r.gradnorm);
        let _ = writeln!(s, "final_merit = {}", r.merit);
        let _ = writeln!(s, "min_merit = {}", self.min_merit);
        if let Some(f) = self.optimum_value {
            let _ = writeln!(s, "optimal_loss = {f}");
        }
        if let Some(a) = self.asynchrony {
            let _ = writeln!(s, "t_real = {}", a.t_real);
            let _ = writeln!(s, "d_real = {}", a.d_real);
            let _ = writeln!(s, "transport_max = {}", a.transport_max);
        }
        let _ = writeln!(s, "packets_dropped = {}", self.loss_total);
        let acts: Vec<String> = self.activations.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "activations = {}", acts.join(","));
        let _ = writeln!(s, "conservation_residual = {:e}", self.conservation);
        for n in &self.notes {
            let _ = writeln!(s, "note = {n}");
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// The input configuration with the step size resolved.
    pub config: ExperimentConfig,
    pub problem: Problem,
    pub traj: Trajectory,
    pub summary: Summary,
}

pub fn resolve_gamma(cfg: &ExperimentConfig, problem: &Problem) -> Result<(f64, Vec<(f64, bool)>)> {
    match cfg.gamma {
        Gamma::Fixed(g) => Ok((g, Vec::new())),
        Gamma::Auto => stability_sweep(cfg, problem),
    }
}

pub fn run_problem(cfg: &ExperimentConfig, problem: Problem) -> Result<RunOutput> {
    let (gamma, gamma_trials) = resolve_gamma(cfg, &problem)?;
    let mut config = cfg.clone();
    config.gamma = Gamma::Fixed(gamma);
    let mut traj = simulate(&config, &problem, gamma, config.k_max, true)?;
    if config.tracking {
        fill_tracking(&problem, gamma, &mut traj)?;
    }
    let final_row = traj.rows.last().expect("final row").clone();
    let summary = Summary {
        gamma,
        gamma_trials,
        steps: traj.trace.len(),
        stopped_early: traj.stopped_early,
        hits: traj.hits,
        min_merit: traj
            .rows
            .iter()
            .map(|r| r.merit)
            .fold(f64::INFINITY, f64::min),
        final_row,
        asynchrony: realized_asynchrony(&traj.trace).ok(),
        loss_total: traj.trace.loss_total,
        activations: traj.trace.g.iter().map(|g| g.len() as u64).collect(),
        conservation: traj.conservation,
        optimum_value: problem.optimum.as_ref().map(|(_, f)| *f),
        notes: problem.notes.clone(),
    };
    Ok(RunOutput {
        config,
        problem,
        traj,
        summary,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let problem = build_problem(cfg)?;
    run_problem(cfg, problem)
}

/// One trace row per step; metric columns hold the state after the step
/// and are empty between snapshots.
pub fn trace_csv(traj: &Trajectory) -> String {
    let mut s =
        String::from("k,i,t,loss_events,d_max_seen,loss,gap,consensus,gradnorm,merit,tracking\n");
    let mut rows = traj.rows.iter().peekable();
    for rec in &traj.trace.records {
        while rows.peek().is_some_and(|r| r.k < rec.k + 1) {
            rows.next();
        }
        let metrics = match rows.peek() {
            Some(r) if r.k == rec.k + 1 => r.csv_values(),
            _ => ",,,,,".into(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            rec.k, rec.node, rec.t, rec.loss_events, rec.d_max_seen, metrics
        );
    }
    s
}

/// Writes `metrics.csv`, `trace.csv`, `config.echo`, `summary.txt`, `w.csv` and `a.csv`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.csv"), metrics_csv(&out.traj.rows))?;
    std::fs::write(dir.join("trace.csv"), trace_csv(&out.traj))?;
    std::fs::write(dir.join("config.echo"), out.config.to_text())?;
    std::fs::write(dir.join("summary.txt"), out.summary.to_text())?;
    out.problem.wp.dump_csv(dir)?;
    Ok(())
}

/// Runs `cfg` once per value of `key`.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    key: &str,
    values: &[String],
) -> Result<Vec<(String, RunOutput)>> {
    let key = ExperimentConfig::resolve_key(key)?;
    values
        .iter()
        .map(|v| {
            let mut c = cfg.clone();
            c.set(key, v)?;
            c.sweep_param = None;
            c.sweep_values.clear();
            run_experiment(&c).map(|o| (v.clone(), o))
        })
        .collect()
}

/// The thresholds configured under `run.stop_*` were all reached.
pub fn assert_thresholds(out: &RunOutput) -> std::result::Result<(), String> {
    let cfg = &out.config;
    let h = &out.summary.hits;
    let mut failures = Vec::new();
    if let Some(th) = cfg.stop_gap {
        if out.problem.optimum.is_some() && h.gap.is_none() {
            failures.push(format!(
                "gap {} above {th}",
                out.summary.final_row.gap.unwrap_or(f64::NAN)
            ));
        }
    }
    if let (Some(th), None) = (cfg.stop_merit, h.merit) {
        failures.push(format!("merit {} above {th}", out.summary.min_merit));
    }
    if let (Some(th), None) = (cfg.stop_loss, h.loss) {
        failures.push(format!(
            "average loss {} above {th}",
            out.summary.final_row.loss / cfg.n as f64
        ));
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(failures.join("; "))
    }
}
