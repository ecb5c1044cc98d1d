use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rfast::graph::{make_topology, Digraph, Preset, TopologyPair};
use rfast::harness::checks::{diagnose, oracle_check};
use rfast::harness::runner::{assert_thresholds, run_sweep};
use rfast::harness::{
    error_class, preset, run_experiment, write_outputs, ExperimentConfig, RunOutput,
};
use rfast::weights::{build_uniform, validate_assumption1};
use rfast::Error;

#[derive(Parser)]
#[command(
    name = "rfast",
    version,
    about = "Asynchronous push-pull gradient tracking experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Topology utilities.
    Topology {
        #[command(subcommand)]
        cmd: TopologyCmd,
    },
    /// Run an experiment and write its outputs.
    Run {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Exit with status 3 unless every configured stopping threshold was reached.
        #[arg(long)]
        assert: bool,
    },
    /// Replay a run through the augmented recursions and report the largest deviation.
    Oracle {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 1e-9)]
        conservation_tol: f64,
    },
    /// Decay of products of the augmented matrices.
    Diagnose {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 1e-8)]
        spread_tol: f64,
        /// Writes `diagnostics.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 3 unless both products converge with R² at least this.
        #[arg(long)]
        assert: Option<f64>,
    },
    /// Run once per value of a configuration key.
    Sweep {
        #[command(flatten)]
        src: Source,
        /// Full key (`run.gamma`) or unique final component (`gamma`).
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        assert: bool,
    },
}

#[derive(Subcommand)]
enum TopologyCmd {
    /// Validate a topology and print its root sets.
    Check {
        #[arg(long, default_value = "directed_ring")]
        preset: String,
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// Explicit pull edges `a>b,...`; requires `--ga`.
        #[arg(long, requires = "ga")]
        gw: Option<String>,
        #[arg(long, requires = "gw")]
        ga: Option<String>,
    },
}

#[derive(Args)]
struct Source {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Override a key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => ExperimentConfig::default(),
        };
        for s in &self.sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set `{s}` is not key=value")))?;
            cfg.set(ExperimentConfig::resolve_key(k.trim())?, v)?;
        }
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

enum Outcome {
    Ok,
    AssertFailed(String),
}

fn report_run(out: &RunOutput, dir: &Path) -> Result<(), Error> {
    write_outputs(dir, out)?;
    println!("{}", dir.display());
    print!("{}", out.summary.to_text());
    Ok(())
}

fn runs(
    cfg: &ExperimentConfig,
    dir: &Path,
    key: Option<&str>,
    values: &[String],
) -> Result<Vec<RunOutput>, Error> {
    match key {
        None => {
            let out = run_experiment(cfg)?;
            report_run(&out, dir)?;
            Ok(vec![out])
        }
        Some(key) => {
            let mut outs = Vec::new();
            for (v, out) in run_sweep(cfg, key, values)? {
                let sub = dir.join(format!("{}={v}", key.rsplit('.').next().unwrap_or(key)));
                report_run(&out, &sub)?;
                outs.push(out);
            }
            Ok(outs)
        }
    }
}

fn check_all(outs: &[RunOutput], assert: bool) -> Outcome {
    if !assert {
        return Outcome::Ok;
    }
    let failures: Vec<String> = outs
        .iter()
        .filter_map(|o| assert_thresholds(o).err())
        .collect();
    if failures.is_empty() {
        Outcome::Ok
    } else {
        Outcome::AssertFailed(failures.join("; "))
    }
}

fn topology_check(
    preset_name: &str,
    n: usize,
    gw: Option<&str>,
    ga: Option<&str>,
) -> Result<Outcome, Error> {
    let tp = match (gw, ga) {
        (Some(gw), Some(ga)) => {
            TopologyPair::unchecked(Digraph::parse_edges(n, gw)?, Digraph::parse_edges(n, ga)?)?
        }
        _ => {
            let p: Preset = preset_name.parse()?;
            make_topology(p, n)?
        }
    };
    let rep = tp.validate()?;
    println!("{rep}");
    let wp = build_uniform(&tp);
    let a1 = validate_assumption1(&wp, &tp)?;
    println!("m_bar = {}", a1.m_bar);
    Ok(Outcome::Ok)
}

fn dispatch(cli: Cli) -> Result<Outcome, Error> {
    match cli.cmd {
        Cmd::Topology {
            cmd: TopologyCmd::Check { preset, n, gw, ga },
        } => topology_check(&preset, n, gw.as_deref(), ga.as_deref()),
        Cmd::Run { src, out, assert } => {
            let cfg = src.load()?;
            let outs = runs(&cfg, &out, cfg.sweep_param.as_deref(), &cfg.sweep_values)?;
            Ok(check_all(&outs, assert))
        }
        Cmd::Sweep {
            src,
            param,
            values,
            out,
            assert,
        } => {
            let cfg = src.load()?;
            let outs = runs(&cfg, &out, Some(&param), &values)?;
            Ok(check_all(&outs, assert))
        }
        Cmd::Oracle {
            src,
            steps,
            tol,
            conservation_tol,
        } => {
            let cfg = src.load()?;
            let rep = oracle_check(&cfg, steps, tol, conservation_tol)?;
            println!("steps = {}", rep.steps);
            println!("d_cap = {}", rep.d_cap);
            println!("max_x_diff = {:e}", rep.max_x_diff);
            println!("max_z_diff = {:e}", rep.max_z_diff);
            println!("max_conservation = {:e}", rep.max_conservation);
            println!("max_zbar_conservation = {:e}", rep.max_zbar_conservation);
            Ok(Outcome::Ok)
        }
        Cmd::Diagnose {
            src,
            steps,
            spread_tol,
            out,
            assert,
        } => {
            let cfg = src.load()?;
            let d = diagnose(&cfg, steps, spread_tol)?;
            print!("{}", d.summary());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("diagnostics.csv"), d.report.to_csv())?;
            }
            match assert {
                Some(r2) if !d.passes(r2) => Ok(Outcome::AssertFailed(format!(
                    "products did not contract log-linearly with R² ≥ {r2}"
                ))),
                _ => Ok(Outcome::Ok),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            eprintln!("ERR:usage: {}", e.to_string().trim_end());
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::AssertFailed(msg)) => {
            eprintln!("ERR:assert: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            let (tag, code) = error_class(&e);
            let msg = e.to_string();
            let msg = msg.strip_prefix(&format!("{tag}: ")).unwrap_or(&msg);
            eprintln!("ERR:{tag}: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
