//! Activation schedules.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    RoundRobin,
    /// Uniform random picks, but every node appears in every `window`
    /// consecutive picks.
    RandomFair {
        window: usize,
    },
    /// Like `RandomFair`, but node `slow` is picked `factor` times less often.
    Straggler {
        slow: NodeId,
        factor: f64,
        window: usize,
    },
}

impl ScheduleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::RoundRobin => "round_robin",
            ScheduleKind::RandomFair { .. } => "random_fair",
            ScheduleKind::Straggler { .. } => "straggler",
        }
    }

    pub fn window(&self, n: usize) -> usize {
        match *self {
            ScheduleKind::RoundRobin => n,
            ScheduleKind::RandomFair { window } | ScheduleKind::Straggler { window, .. } => window,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            ScheduleKind::RoundRobin => Ok(()),
            ScheduleKind::RandomFair { window } | ScheduleKind::Straggler { window, .. }
                if window < n =>
            {
                Err(Error::Config(format!(
                    "fairness window {window} is shorter than the node count {n}"
                )))
            }
            ScheduleKind::Straggler { slow, factor, .. } => {
                if slow >= n {
                    return Err(Error::Config(format!("straggler node {slow} out of range")));
                }
                if !(factor >= 1.0) || !factor.is_finite() {
                    return Err(Error::Config(format!(
                        "straggler factor {factor} must be >= 1"
                    )));
                }
                Ok(())
            }
            ScheduleKind::RandomFair { .. } => Ok(()),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::RoundRobin => f.write_str("round_robin"),
            ScheduleKind::RandomFair { window } => write!(f, "random_fair:{window}"),
            ScheduleKind::Straggler {
                slow,
                factor,
                window,
            } => write!(f, "straggler:{slow}:{factor}:{window}"),
        }
    }
}

/// Accepts `round_robin`, `random_fair:T` and `straggler:slow:factor:T`.
impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config(format!("bad schedule `{s}`"));
        match parts.as_slice() {
            ["round_robin"] => Ok(ScheduleKind::RoundRobin),
            ["random_fair", w] => Ok(ScheduleKind::RandomFair {
                window: w.parse().map_err(|_| bad())?,
            }),
            ["straggler", slow, factor, w] => Ok(ScheduleKind::Straggler {
                slow: slow.parse().map_err(|_| bad())?,
                factor: factor.parse().map_err(|_| bad())?,
                window: w.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    kind: ScheduleKind,
    n: usize,
    k: usize,
    /// Latest global step by which each node must be picked again.
    deadline: Vec<usize>,
    rng: ChaCha8Rng,
}

impl Scheduler {
    pub fn new(kind: ScheduleKind, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("schedule over zero nodes".into()));
        }
        kind.validate(n)?;
        let window = kind.window(n);
        Ok(Self {
            kind,
            n,
            k: 0,
            deadline: vec![window - 1; n],
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// A node whose deadline cannot be postponed without making some later
    /// deadline infeasible, if any.
    fn forced(&self) -> Option<NodeId> {
        let mut slack: Vec<(usize, NodeId)> = self
            .deadline
            .iter()
            .enumerate()
            .map(|(i, &d)| (d - self.k, i))
            .collect();
        slack.sort_unstable();
        // the m most urgent nodes need m slots out of the next slack+1
        slack
            .iter()
            .enumerate()
            .any(|(m, &(s, _))| s + 1 <= m + 1)
            .then(|| slack[0].1)
    }

    fn weighted_pick(&mut self) -> NodeId {
        match self.kind {
            ScheduleKind::RoundRobin => unreachable!(),
            ScheduleKind::RandomFair { .. } => self.rng.random_range(0..self.n),
            ScheduleKind::Straggler { slow, factor, .. } => {
                let total = (self.n - 1) as f64 + 1.0 / factor;
                let u: f64 = self.rng.random::<f64>() * total;
                if u < 1.0 / factor {
                    slow
                } else {
                    let fast = ((u - 1.0 / factor) as usize).min(self.n - 2);
                    if fast >= slow {
                        fast + 1
                    } else {
                        fast
                    }
                }
            }
        }
    }

    pub fn next_node(&mut self) -> NodeId {
        let i = match self.kind {
            ScheduleKind::RoundRobin => self.k % self.n,
            _ if self.n == 1 => 0,
            _ => match self.forced() {
                Some(i) => i,
                None => self.weighted_pick(),
            },
        };
        self.deadline[i] = self.k + self.kind.window(self.n);
        self.k += 1;
        i
    }
}

impl Iterator for Scheduler {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        Some(self.next_node())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Largest gap between consecutive appearances, counting from a virtual
    /// appearance at −1 and ignoring the unfinished tail.
    fn worst_window(picks: &[usize], n: usize) -> usize {
        let mut last = vec![-1i64; n];
        let mut worst = 0;
        for (k, &i) in picks.iter().enumerate() {
            worst = worst.max((k as i64 - last[i]) as usize);
            last[i] = k as i64;
        }
        worst
    }

    #[test]
    fn round_robin_cycles() {
        let s = Scheduler::new(ScheduleKind::RoundRobin, 4, 0).unwrap();
        let picks: Vec<_> = s.take(9).collect();
        assert_eq!(picks, vec![0, 1, 2, 3, 0, 1, 2, 3, 0]);
    }

    #[test]
    fn straggler_is_rarer() {
        let kind = ScheduleKind::Straggler {
            slow: 3,
            factor: 5.0,
            window: 40,
        };
        let picks: Vec<_> = Scheduler::new(kind, 8, 2).unwrap().take(40_000).collect();
        let slow = picks.iter().filter(|&&i| i == 3).count() as f64;
        let fast = picks.iter().filter(|&&i| i == 0).count() as f64;
        assert!(slow * 3.0 < fast, "slow {slow} fast {fast}");
        assert!(worst_window(&picks, 8) <= 40);
    }

    #[test]
    fn short_window_rejected() {
        assert!(Scheduler::new(ScheduleKind::RandomFair { window: 3 }, 4, 0).is_err());
    }

    #[test]
    fn parsing_round_trips() {
        for k in [
            ScheduleKind::RoundRobin,
            ScheduleKind::RandomFair { window: 10 },
            ScheduleKind::Straggler {
                slow: 2,
                factor: 5.0,
                window: 24,
            },
        ] {
            assert_eq!(k.to_string().parse::<ScheduleKind>().unwrap(), k);
        }
    }

    proptest! {
        #[test]
        fn random_fair_respects_window(n in 1usize..12, extra in 0usize..10, seed in any::<u64>()) {
            let window = n + extra;
            let picks: Vec<_> = Scheduler::new(ScheduleKind::RandomFair { window }, n, seed)
                .unwrap()
                .take(2000)
                .collect();
            prop_assert!(worst_window(&picks, n) <= window);
        }
    }
}
