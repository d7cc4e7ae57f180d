//! Random instances for testing. Probabilities are small-integer weights
//! normalized per row, so rows sum to 1 up to round-off.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::Mdp;
use crate::{Pomdp, PomdpBuilder, StateId};

#[derive(Debug, Clone, Copy)]
pub struct RandomParams {
    pub states: usize,
    pub actions: usize,
    pub signals: usize,
    pub max_priority: u32,
    /// Maximum number of outcomes per row.
    pub max_branching: usize,
}

impl Default for RandomParams {
    fn default() -> Self {
        RandomParams {
            states: 4,
            actions: 2,
            signals: 2,
            max_priority: 3,
            max_branching: 3,
        }
    }
}

fn weights<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let w: Vec<u32> = (0..k).map(|_| rng.gen_range(1..=4)).collect();
    let total: u32 = w.iter().sum();
    w.into_iter().map(|x| x as f64 / total as f64).collect()
}

pub fn random_pomdp<R: Rng>(rng: &mut R, p: &RandomParams) -> Pomdp {
    let names = |prefix: &str, k: usize| (0..k).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>();
    let mut b = PomdpBuilder::new(names("q", p.states), names("a", p.actions), names("s", p.signals));
    let mut outcomes: Vec<(usize, StateId)> = (0..p.signals)
        .flat_map(|s| (0..p.states).map(move |q| (s, q)))
        .collect();
    for q in 0..p.states {
        for a in 0..p.actions {
            let k = rng.gen_range(1..=p.max_branching.min(outcomes.len()));
            outcomes.shuffle(rng);
            let mut chosen = outcomes[..k].to_vec();
            chosen.sort_by_key(|&(s, q2)| (q2, s));
            for ((s, q2), w) in chosen.into_iter().zip(weights(rng, k)) {
                b.transition(q, a, s, q2, w);
            }
        }
    }
    if p.states > 1 && rng.gen_bool(0.25) {
        let k = rng.gen_range(2..=p.states);
        let mut init = vec![0.0; p.states];
        for (q, w) in (0..p.states)
            .collect::<Vec<_>>()
            .choose_multiple(rng, k)
            .zip(weights(rng, k))
        {
            init[*q] = w;
        }
        b.initial_distribution(init);
    }
    b.priorities((0..p.states).map(|_| rng.gen_range(0..=p.max_priority)).collect());
    b.build()
}

/// A random MDP where every action is enabled everywhere.
pub fn random_mdp<R: Rng>(rng: &mut R, states: usize, actions: usize, max_priority: u32) -> Mdp {
    let mut rows = Vec::with_capacity(states * actions);
    let all: Vec<StateId> = (0..states).collect();
    for _ in 0..states * actions {
        let k = rng.gen_range(1..=states.min(3));
        let mut succ: Vec<StateId> = all.choose_multiple(rng, k).copied().collect();
        succ.sort_unstable();
        rows.push(succ.into_iter().zip(weights(rng, k)).collect());
    }
    Mdp {
        state_names: (0..states).map(|i| format!("q{i}")).collect(),
        action_names: (0..actions).map(|i| format!("a{i}")).collect(),
        rows,
        priorities: Some((0..states).map(|_| rng.gen_range(0..=max_priority)).collect()),
        initial_state: 0,
    }
}
