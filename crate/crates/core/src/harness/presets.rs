//! Named experiment configurations.

use crate::error::{Error, Result};

use super::config::ExperimentConfig;

pub const PRESET_NAMES: &[&str] = &[
    "sec6a_topologies",
    "sec6a_scaling",
    "strongly_convex_exact",
    "noise_plateau",
    "nonconvex_decay",
    "heterogeneity_contrast",
    "straggler",
    "losses",
];

const LOGISTIC_DATA: &str = "
[problem]
kind = ridge_logistic
lambda = 0.001
[data]
samples = 2100
dim = 20
separation = 2
[noise]
mode = minibatch
batch = 32
[schedule]
kind = random_fair
[delay]
d_max = 2
[run]
gamma = 0.001
[metrics]
every = 100
";

fn body(name: &str) -> Option<&'static str> {
    Some(match name {
        "sec6a_topologies" => {
            "
[topology]
n = 7
[experiment]
sweep_param = topology.preset
sweep_values = binary_tree,line,directed_ring
[run]
k_max = 20000
"
        }
        "sec6a_scaling" => {
            "
[topology]
preset = binary_tree
n = 7
[experiment]
sweep_param = topology.n
sweep_values = 3,7,15,31
[run]
k_max = 40000
stop_loss = 0.6
"
        }
        "strongly_convex_exact" => {
            "
[topology]
preset = directed_ring
n = 5
[problem]
kind = quadratic
dim = 5
[noise]
mode = gaussian
sigma = 0
[schedule]
kind = round_robin
[delay]
d_max = 2
[run]
gamma = auto
k_max = 20000
stop_gap = 1e-12
[metrics]
every = 10
"
        }
        "noise_plateau" => {
            "
[topology]
preset = directed_ring
n = 5
[problem]
kind = quadratic
dim = 5
[noise]
mode = gaussian
sigma = 0.5
[schedule]
kind = random_fair
[delay]
d_max = 2
[experiment]
sweep_param = run.gamma
sweep_values = 0.2,0.1,0.05
[run]
gamma = 0.2
k_max = 40000
[metrics]
every = 20
"
        }
        "nonconvex_decay" => {
            "
[topology]
preset = directed_ring
n = 8
[problem]
kind = nonconvex_logistic
lambda = 0.1
[data]
samples = 800
dim = 10
separation = 2
[noise]
mode = gaussian
sigma = 0
[schedule]
kind = random_fair
[delay]
d_max = 2
[run]
gamma = auto
k_max = 50000
stop_merit = 1e-6
[metrics]
every = 50
"
        }
        "heterogeneity_contrast" => {
            "
[topology]
preset = directed_ring
n = 8
[problem]
kind = ridge_logistic
lambda = 0.2
[data]
samples = 800
dim = 5
separation = 2
[partition]
skew = label_skew:1.0
[noise]
mode = gaussian
sigma = 0
[schedule]
kind = random_fair
[delay]
d_max = 2
[experiment]
sweep_param = experiment.algorithm
sweep_values = rfast,gossip
[run]
gamma = 0.1
k_max = 20000
stop_gap = none
[metrics]
every = 50
"
        }
        "straggler" => {
            "
[topology]
preset = directed_ring
n = 8
[problem]
kind = quadratic
dim = 5
[noise]
mode = gaussian
sigma = 0
[schedule]
kind = straggler
slow = 0
factor = 5
t_window = 32
[delay]
d_max = 1
[run]
gamma = 0.05
k_max = 40000
stop_gap = 1e-6
[metrics]
every = 1
"
        }
        "losses" => {
            "
[topology]
preset = directed_ring
n = 4
[problem]
kind = quadratic
dim = 5
[noise]
mode = gaussian
sigma = 0
[schedule]
kind = random_fair
[delay]
d_max = 1
[loss]
p_drop = 0.3
max_consecutive = 4
[run]
gamma = 0.2
k_max = 40000
stop_gap = 1e-10
[metrics]
every = 1
"
        }
        _ => return None,
    })
}

/// Returns the fully specified configuration for `name`.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let text = body(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown preset `{name}`; known: {}",
            PRESET_NAMES.join(", ")
        ))
    })?;
    let mut cfg = ExperimentConfig::default();
    if name.starts_with("sec6a") {
        cfg.apply_text(LOGISTIC_DATA)?;
    }
    cfg.apply_text(text)?;
    cfg.preset = name.to_string();
    cfg.validate()?;
    Ok(cfg)
}
