//! Seeded Monte-Carlo runs of a POMDP and the bad-event metric.
//!
//! Runs use `ChaCha8Rng::seed_from_u64`; run `i` of a batch is seeded with
//! `seed.wrapping_add(i)`. Sampling order: the initial state, then per step
//! the action (only for random play) and the joint `(signal, next)` outcome,
//! each by cumulative mass in stored order.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::{ActionId, SignalId, StateId};
use crate::pipeline::{ControlError, Controller};
use crate::Pomdp;

/// Chooses actions during a run.
pub trait ActionSource {
    fn reset(&mut self);
    fn choose(&mut self, rng: &mut ChaCha8Rng) -> Result<ActionId, ControlError>;
    fn observe(&mut self, action: ActionId, signal: SignalId) -> Result<(), ControlError>;
}

impl ActionSource for Controller<'_> {
    fn reset(&mut self) {
        Controller::reset(self)
    }

    fn choose(&mut self, _rng: &mut ChaCha8Rng) -> Result<ActionId, ControlError> {
        self.act()
    }

    fn observe(&mut self, action: ActionId, signal: SignalId) -> Result<(), ControlError> {
        Controller::observe(self, action, signal)
    }
}

/// Uniformly random play, the baseline.
#[derive(Debug, Clone, Copy)]
pub struct UniformRandom {
    pub num_actions: usize,
}

impl ActionSource for UniformRandom {
    fn reset(&mut self) {}

    fn choose(&mut self, rng: &mut ChaCha8Rng) -> Result<ActionId, ControlError> {
        Ok(rng.gen_range(0..self.num_actions))
    }

    fn observe(&mut self, _: ActionId, _: SignalId) -> Result<(), ControlError> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub action: ActionId,
    pub signal: SignalId,
    /// State reached by the step.
    pub state: StateId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTrace {
    pub seed: u64,
    pub initial: StateId,
    pub steps: Vec<Step>,
}

impl SimTrace {
    pub fn final_state(&self) -> StateId {
        self.steps.last().map_or(self.initial, |s| s.state)
    }

    /// Priorities of the states reached, one per step.
    pub fn priorities_seen(&self, pomdp: &Pomdp) -> Vec<u32> {
        self.steps.iter().map(|s| pomdp.priority(s.state)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("step {step}: {source}")]
pub struct SimError {
    pub step: usize,
    pub source: ControlError,
}

fn sample_index(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub fn simulate(pomdp: &Pomdp, source: &mut dyn ActionSource, horizon: usize, seed: u64) -> Result<SimTrace, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    source.reset();
    let initial = sample_index(&mut rng, pomdp.initial_distribution().iter().copied());
    let mut state = initial;
    let mut steps = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let action = source.choose(&mut rng).map_err(|source| SimError { step, source })?;
        let row = pomdp.row(state, action);
        let t = row[sample_index(&mut rng, row.iter().map(|t| t.prob))];
        source
            .observe(action, t.signal)
            .map_err(|source| SimError { step, source })?;
        state = t.next;
        steps.push(Step {
            action,
            signal: t.signal,
            state,
        });
    }
    Ok(SimTrace { seed, initial, steps })
}

/// Pending bad events: odd priority -> step of its oldest untrumped
/// occurrence.
#[derive(Debug, Clone, Default)]
pub struct BadEventTracker {
    pending: BTreeMap<u32, usize>,
    clock: usize,
}

impl BadEventTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the priority visited at the current step and returns the
    /// metric for it.
    pub fn push(&mut self, priority: u32) -> usize {
        let t = self.clock;
        if priority % 2 == 1 {
            self.pending.entry(priority).or_insert(t);
        } else {
            self.pending.retain(|&p, _| p >= priority);
        }
        self.clock += 1;
        self.pending.values().min().map_or(0, |&oldest| t - oldest)
    }

    pub fn pending(&self) -> &BTreeMap<u32, usize> {
        &self.pending
    }
}

/// Age of the oldest untrumped odd priority, per step.
pub fn bad_metric(priorities: &[u32]) -> Vec<usize> {
    let mut tracker = BadEventTracker::new();
    priorities.iter().map(|&p| tracker.push(p)).collect()
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub traces: Vec<SimTrace>,
    pub metrics: Vec<Vec<usize>>,
    pub mean_metric: Vec<f64>,
    pub max_metric: Vec<usize>,
    /// Final-state name -> number of runs ending there.
    pub reached: BTreeMap<String, usize>,
    pub mean_final_metric: f64,
}

/// Independent runs, possibly in parallel; results are in run order and do
/// not depend on scheduling.
pub fn batch_simulate<S, F>(
    pomdp: &Pomdp,
    make_source: F,
    runs: usize,
    horizon: usize,
    seed: u64,
) -> Result<BatchResult, SimError>
where
    S: ActionSource,
    F: Fn() -> S + Sync,
{
    let traces: Vec<SimTrace> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut source = make_source();
            simulate(pomdp, &mut source, horizon, seed.wrapping_add(i as u64))
        })
        .collect::<Result<_, _>>()?;
    let metrics: Vec<Vec<usize>> = traces.iter().map(|t| bad_metric(&t.priorities_seen(pomdp))).collect();
    let mut mean_metric = vec![0.0; horizon];
    let mut max_metric = vec![0; horizon];
    for m in &metrics {
        for (t, &v) in m.iter().enumerate() {
            mean_metric[t] += v as f64;
            max_metric[t] = max_metric[t].max(v);
        }
    }
    if runs > 0 {
        mean_metric.iter_mut().for_each(|x| *x /= runs as f64);
    }
    let mut counts: HashMap<StateId, usize> = HashMap::new();
    for t in &traces {
        *counts.entry(t.final_state()).or_default() += 1;
    }
    let reached = counts
        .into_iter()
        .map(|(q, c)| (pomdp.state_name(q).to_string(), c))
        .collect();
    let finals: Vec<usize> = metrics.iter().map(|m| m.last().copied().unwrap_or(0)).collect();
    let mean_final_metric = if runs == 0 {
        0.0
    } else {
        finals.iter().sum::<usize>() as f64 / runs as f64
    };
    Ok(BatchResult {
        traces,
        metrics,
        mean_metric,
        max_metric,
        reached,
        mean_final_metric,
    })
}
