//! Deciding whether a POMDP is strongly revealing (polynomial, per
//! transition) or weakly revealing (via positive safety over belief supports,
//! decided on a two-player pair game).

use std::collections::{HashMap, HashSet, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::belief::{self, BuildOptions};
use crate::model::{ActionId, SignalId, StateId};
use crate::{Error, Pomdp, Support, DEFAULT_NODE_CAP};

/// For every signal, the unique state it always leads to, if any. Signals
/// that never occur map to `None`.
pub fn revealing_table(pomdp: &Pomdp) -> Vec<Option<StateId>> {
    // None: unused; Some(Some(q)): always enters q; Some(None): ambiguous
    let mut target: Vec<Option<Option<StateId>>> = vec![None; pomdp.num_signals()];
    for q in 0..pomdp.num_states() {
        for a in 0..pomdp.num_actions() {
            for t in pomdp.row(q, a) {
                let slot = &mut target[t.signal];
                *slot = match *slot {
                    None => Some(Some(t.next)),
                    Some(Some(r)) if r == t.next => Some(Some(r)),
                    _ => Some(None),
                };
            }
        }
    }
    target.into_iter().map(Option::flatten).collect()
}

/// Signals that occur somewhere and only ever lead into `state`, under every
/// action.
pub fn revealing_signals(pomdp: &Pomdp, state: StateId) -> Vec<SignalId> {
    revealing_table(pomdp)
        .into_iter()
        .enumerate()
        .filter(|(_, t)| *t == Some(state))
        .map(|(s, _)| s)
        .collect()
}

/// A transition `(state, action, next)` that cannot occur with a revealing
/// signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StrongCounterexample {
    pub state: StateId,
    pub action: ActionId,
    pub next: StateId,
}

/// Every positive-probability `(q, a, q')` must also be possible with a
/// signal revealing `q'`. Returns the first failing triple in index order.
pub fn is_strongly_revealing(pomdp: &Pomdp) -> (bool, Option<StrongCounterexample>) {
    let table = revealing_table(pomdp);
    for q in 0..pomdp.num_states() {
        for a in 0..pomdp.num_actions() {
            let row = pomdp.row(q, a);
            let mut nexts: Vec<StateId> = row.iter().map(|t| t.next).collect();
            nexts.sort_unstable();
            nexts.dedup();
            for next in nexts {
                let revealed = row.iter().any(|t| t.next == next && table[t.signal] == Some(next));
                if !revealed {
                    return (
                        false,
                        Some(StrongCounterexample {
                            state: q,
                            action: a,
                            next,
                        }),
                    );
                }
            }
        }
    }
    (true, None)
}

pub type PositionId = usize;

/// Where a Player 2 move leads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameTarget {
    Position(PositionId),
    Sink,
}

/// The reachable part of the pair game over belief supports.
///
/// A Player 1 position is a pair `(b1, b2)` with `b2 ⊆ b1` and `b1` outside
/// the avoid set. Player 1 picks an action; Player 2 then picks a signal that
/// `b2` can emit under it, and both supports are updated. The play moves to
/// the losing sink when the updated `b1` is in the avoid set.
#[derive(Debug, Clone)]
pub struct SafetyGame {
    num_actions: usize,
    positions: Vec<(Support, Support)>,
    index: HashMap<(Support, Support), PositionId>,
    /// Player 2 moves of position `p` under action `a`, at `p * num_actions + a`.
    moves: Vec<Vec<(SignalId, GameTarget)>>,
}

impl SafetyGame {
    pub fn num_positions(&self) -> usize {
        self.positions.len()
    }

    pub fn position(&self, p: PositionId) -> &(Support, Support) {
        &self.positions[p]
    }

    pub fn position_of(&self, b1: &Support, b2: &Support) -> Option<PositionId> {
        self.index.get(&(b1.clone(), b2.clone())).copied()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Player 2 choices after Player 1 plays `action` at `p`.
    pub fn moves(&self, p: PositionId, action: ActionId) -> &[(SignalId, GameTarget)] {
        &self.moves[p * self.num_actions + action]
    }

    pub fn sink_reachable(&self) -> bool {
        self.moves.iter().flatten().any(|(_, t)| *t == GameTarget::Sink)
    }
}

/// Builds the game fragment reachable from `seeds`.
pub fn build_safety_game(
    pomdp: &Pomdp,
    avoid: &HashSet<Support>,
    seeds: &[(Support, Support)],
    node_cap: usize,
) -> Result<SafetyGame, Error> {
    let m = pomdp.num_actions();
    let mut game = SafetyGame {
        num_actions: m,
        positions: Vec::new(),
        index: HashMap::new(),
        moves: Vec::new(),
    };
    let intern = |game: &mut SafetyGame, pair: (Support, Support)| -> Result<PositionId, Error> {
        if let Some(&id) = game.index.get(&pair) {
            return Ok(id);
        }
        if game.positions.len() >= node_cap {
            return Err(Error::NodeCap { cap: node_cap });
        }
        let id = game.positions.len();
        game.index.insert(pair.clone(), id);
        game.positions.push(pair);
        Ok(id)
    };
    for (b1, b2) in seeds {
        if b2.is_empty() || !b2.is_subset(b1) || avoid.contains(b1) {
            return Err(Error::InvalidInput(
                "seed positions need a non-empty b2 within b1 and b1 outside the avoid set".into(),
            ));
        }
        intern(&mut game, (b1.clone(), b2.clone()))?;
    }
    let mut next = 0;
    while next < game.positions.len() {
        let (b1, b2) = game.positions[next].clone();
        for a in 0..m {
            let big: HashMap<SignalId, Support> = belief::posts(pomdp, &b1, a).into_iter().collect();
            let mut row = Vec::new();
            for (s, b2_next) in belief::posts(pomdp, &b2, a) {
                let b1_next = big[&s].clone();
                let target = if avoid.contains(&b1_next) {
                    GameTarget::Sink
                } else {
                    GameTarget::Position(intern(&mut game, (b1_next, b2_next))?)
                };
                row.push((s, target));
            }
            game.moves.push(row);
        }
        next += 1;
    }
    Ok(game)
}

/// Player 1 positions from which Player 1 keeps the play out of the sink
/// forever: the complement of Player 2's attractor to the sink.
pub fn solve_safety_game(game: &SafetyGame) -> Vec<bool> {
    let (n, m) = (game.num_positions(), game.num_actions());
    // Player 2 node id = p * m + a
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut attracted2 = vec![false; n * m];
    let mut queue = VecDeque::new();
    for (node, row) in game.moves.iter().enumerate() {
        for (_, t) in row {
            match t {
                GameTarget::Sink => {
                    if !attracted2[node] {
                        attracted2[node] = true;
                        queue.push_back(node);
                    }
                }
                GameTarget::Position(p) => preds[*p].push(node),
            }
        }
    }
    let mut remaining = vec![m; n];
    let mut attracted1 = vec![false; n];
    while let Some(node) = queue.pop_front() {
        let p = node / m;
        remaining[p] -= 1;
        if remaining[p] == 0 && !attracted1[p] {
            attracted1[p] = true;
            for &pred in &preds[p] {
                if !attracted2[pred] {
                    attracted2[pred] = true;
                    queue.push_back(pred);
                }
            }
        }
    }
    attracted1.into_iter().map(|lost| !lost).collect()
}

/// Supports reachable from `from` in the belief-support graph without
/// entering `avoid` (including `from` itself).
fn safely_reachable(
    pomdp: &Pomdp,
    avoid: &HashSet<Support>,
    from: &Support,
    node_cap: usize,
) -> Result<Vec<Support>, Error> {
    let mut seen: HashSet<Support> = HashSet::from([from.clone()]);
    let mut order = vec![from.clone()];
    let mut next = 0;
    while next < order.len() {
        let b = order[next].clone();
        for a in 0..pomdp.num_actions() {
            for (_, b2) in belief::posts(pomdp, &b, a) {
                if !avoid.contains(&b2) && !seen.contains(&b2) {
                    if order.len() >= node_cap {
                        return Err(Error::NodeCap { cap: node_cap });
                    }
                    seen.insert(b2.clone());
                    order.push(b2);
                }
            }
        }
        next += 1;
    }
    Ok(order)
}

/// Witness of positive safety: a safely reachable support and a state in it
/// from which Player 1 wins the pair game.
fn positive_safety_witness(
    pomdp: &Pomdp,
    avoid: &HashSet<Support>,
    from: &Support,
    node_cap: usize,
) -> Result<Option<(Support, StateId)>, Error> {
    if from.is_empty() || avoid.contains(from) {
        return Err(Error::InvalidInput(
            "start support must be non-empty and outside the avoid set".into(),
        ));
    }
    let seeds: Vec<(Support, Support)> = safely_reachable(pomdp, avoid, from, node_cap)?
        .into_iter()
        .flat_map(|b| {
            let members = b.to_vec();
            members
                .into_iter()
                .map(move |q| (b.clone(), Support::singleton(pomdp.num_states(), q)))
        })
        .collect();
    let game = build_safety_game(pomdp, avoid, &seeds, node_cap)?;
    let win = solve_safety_game(&game);
    Ok(seeds.into_iter().find_map(|(b, single)| {
        let p = game.position_of(&b, &single).expect("seeds are positions");
        win[p].then(|| (b, single.as_singleton().unwrap()))
    }))
}

/// Whether some strategy avoids every support in `avoid` forever with
/// positive probability, starting from support `from` (time 0 included).
pub fn positive_safety(
    pomdp: &Pomdp,
    avoid: &HashSet<Support>,
    from: &Support,
    node_cap: usize,
) -> Result<bool, Error> {
    Ok(positive_safety_witness(pomdp, avoid, from, node_cap)?.is_some())
}

pub fn singleton_supports(pomdp: &Pomdp) -> HashSet<Support> {
    (0..pomdp.num_states())
        .map(|q| Support::singleton(pomdp.num_states(), q))
        .collect()
}

/// A reachable support from which revelations can stop with positive
/// probability, and the first support of the escaping continuation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakWitness {
    pub from: Support,
    pub escape: Support,
}

/// A POMDP is weakly revealing unless, from some reachable singleton
/// support (or from a non-singleton initial support), a strategy can avoid
/// all further singleton supports with positive probability.
///
/// From a singleton `{q}` the first step is unrolled: the check asks for an
/// action and a signal leading to a non-singleton `b'` with positive safety
/// from `b'`, so `{q}` itself does not count as a revelation.
pub fn is_weakly_revealing(pomdp: &Pomdp, node_cap: usize) -> Result<(bool, Option<WeakWitness>), Error> {
    let singletons = singleton_supports(pomdp);
    let initial = pomdp.initial_support();
    if !initial.is_singleton() && positive_safety(pomdp, &singletons, initial, node_cap)? {
        return Ok((
            false,
            Some(WeakWitness {
                from: initial.clone(),
                escape: initial.clone(),
            }),
        ));
    }
    let bm = belief::build_belief_mdp(pomdp, &BuildOptions { node_cap })?;
    let mut starts: Vec<StateId> = belief::reachable_singletons(&bm)
        .into_iter()
        .filter_map(|id| bm.support(id).as_singleton())
        .collect();
    starts.sort_unstable();
    let found: Vec<Option<WeakWitness>> = starts
        .par_iter()
        .map(|&q| escape_from(pomdp, &singletons, q, node_cap))
        .collect::<Result<_, Error>>()?;
    match found.into_iter().flatten().next() {
        Some(w) => Ok((false, Some(w))),
        None => Ok((true, None)),
    }
}

fn escape_from(
    pomdp: &Pomdp,
    singletons: &HashSet<Support>,
    q: StateId,
    node_cap: usize,
) -> Result<Option<WeakWitness>, Error> {
    let from = Support::singleton(pomdp.num_states(), q);
    for a in 0..pomdp.num_actions() {
        for (_, b) in belief::posts(pomdp, &from, a) {
            if !b.is_singleton() && positive_safety(pomdp, singletons, &b, node_cap)? {
                return Ok(Some(WeakWitness { from, escape: b }));
            }
        }
    }
    Ok(None)
}

/// Both revelation properties of a POMDP, computed independently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevealingVerdict {
    pub strongly: bool,
    pub weakly: bool,
    pub strong_counterexample: Option<StrongCounterexample>,
    pub weak_witness: Option<WeakWitness>,
}

pub fn classify(pomdp: &Pomdp, node_cap: usize) -> Result<RevealingVerdict, Error> {
    let (strongly, strong_counterexample) = is_strongly_revealing(pomdp);
    let (weakly, weak_witness) = is_weakly_revealing(pomdp, node_cap)?;
    if strongly && !weakly {
        return Err(Error::InvalidInput(
            "inconsistent classification: strongly but not weakly revealing".into(),
        ));
    }
    Ok(RevealingVerdict {
        strongly,
        weakly,
        strong_counterexample,
        weak_witness,
    })
}

/// Default-capped convenience wrapper around [`classify`].
pub fn classify_default(pomdp: &Pomdp) -> Result<RevealingVerdict, Error> {
    classify(pomdp, DEFAULT_NODE_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::PomdpBuilder;

    fn leaky_loop() -> Pomdp {
        let mut b = PomdpBuilder::new(["q0", "q1"], ["a"], ["s"]);
        b.transition(0, 0, 0, 0, 0.5)
            .transition(0, 0, 0, 1, 0.5)
            .transition(1, 0, 0, 1, 1.0)
            .priorities(vec![2, 1]);
        b.build()
    }

    #[test]
    fn leaky_loop_game_never_reaches_sink() {
        let p = leaky_loop();
        let b = p.support_of([0, 1]);
        let game = build_safety_game(&p, &singleton_supports(&p), &[(b.clone(), p.support_of([0]))], 100).unwrap();
        assert_eq!(game.num_positions(), 2);
        assert!(!game.sink_reachable());
        assert_eq!(solve_safety_game(&game), vec![true, true]);
        assert!(positive_safety(&p, &singleton_supports(&p), &b, 100).unwrap());
    }

    #[test]
    fn empty_avoid_set_is_always_safe() {
        let p = leaky_loop();
        assert!(positive_safety(&p, &HashSet::new(), &p.support_of([0]), 100).unwrap());
    }

    #[test]
    fn leaky_loop_not_weakly_revealing() {
        let p = leaky_loop();
        let (weak, w) = is_weakly_revealing(&p, 100).unwrap();
        assert!(!weak);
        let w = w.unwrap();
        assert_eq!(w.from, p.support_of([0]));
        assert_eq!(w.escape, p.support_of([0, 1]));
        assert!(!is_strongly_revealing(&p).0);
    }

    #[test]
    fn bad_seed_rejected() {
        let p = leaky_loop();
        let res = build_safety_game(
            &p,
            &singleton_supports(&p),
            &[(p.support_of([0]), p.support_of([0]))],
            10,
        );
        assert!(res.is_err());
    }

    #[test]
    fn attractor_on_hand_game() {
        // single state that always reveals itself: every seed loses
        let mut b = PomdpBuilder::new(["x", "y"], ["a"], ["s"]);
        b.transition(0, 0, 0, 0, 1.0).transition(1, 0, 0, 0, 1.0);
        let p = b.build();
        let game = build_safety_game(
            &p,
            &singleton_supports(&p),
            &[(p.support_of([0, 1]), p.support_of([1]))],
            10,
        )
        .unwrap();
        assert_eq!(solve_safety_game(&game), vec![false]);
    }
}
