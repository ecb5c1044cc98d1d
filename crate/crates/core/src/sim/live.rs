//! Threaded driver: one OS thread per node, message passing over channels.
//!
//! Nothing here is deterministic. The only checks made are at quiescence,
//! after every thread has stopped and all channels have been drained.

use std::sync::mpsc;
use std::thread;

use crate::error::{Error, Result};
use crate::node::{Message, NodeLinks, NodeState};
use crate::problems::{GradOracle, LocalObjective};
use crate::weights::WeightPair;

#[derive(Debug)]
pub struct LiveOutcome {
    pub nodes: Vec<NodeState>,
    /// Node-level mass-balance residual at quiescence.
    pub conservation: f64,
}

/// Runs `steps` local iterations on every node concurrently.
pub fn run_live(
    wp: &WeightPair,
    objs: &[LocalObjective],
    oracle: &GradOracle,
    x0: Vec<Vec<f64>>,
    gamma: f64,
    steps: u64,
) -> Result<LiveOutcome> {
    let n = wp.n();
    if objs.len() != n || x0.len() != n {
        return Err(Error::InvalidSize(
            "one objective and one start point per node".into(),
        ));
    }
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..n).map(|_| mpsc::channel::<Message>()).unzip();
    let states = NodeLinks::all(wp)
        .into_iter()
        .zip(x0)
        .zip(objs)
        .map(|((l, x), o)| NodeState::init(l, x, o, oracle))
        .collect::<Result<Vec<_>>>()?;

    let finished: Vec<Result<(NodeState, mpsc::Receiver<Message>)>> = thread::scope(|scope| {
        let handles: Vec<_> = states
            .into_iter()
            .zip(receivers)
            .zip(objs)
            .map(|((mut state, rx), obj)| {
                let tx = senders.clone();
                scope.spawn(move || -> Result<(NodeState, mpsc::Receiver<Message>)> {
                    for _ in 0..steps {
                        while let Ok(m) = rx.try_recv() {
                            state.ingest(&m)?;
                        }
                        for m in state.local_step(obj, oracle, gamma)? {
                            // the receiver outlives every sender, so this cannot fail
                            let _ = tx[m.to].send(m);
                        }
                        thread::yield_now();
                    }
                    Ok((state, rx))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("node thread panicked"))
            .collect()
    });
    drop(senders);

    let mut nodes = Vec::with_capacity(n);
    for r in finished {
        let (mut state, rx) = r?;
        while let Ok(m) = rx.try_recv() {
            state.ingest(&m)?;
        }
        nodes.push(state);
    }
    let conservation = super::conservation_residual(&nodes);
    Ok(LiveOutcome {
        nodes,
        conservation,
    })
}
