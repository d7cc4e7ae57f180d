//! Qualitative MDP solving: maximal end components, almost-sure reachability
//! and almost-sure parity, with pure memoryless witness strategies.
//!
//! All algorithms only look at successor sets, never at probabilities.

use std::collections::VecDeque;
use std::ops::Range;

use crate::model::{ActionId, Mdp, StateId};
use crate::Error;

/// Successor sets of an MDP in compressed row form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdpGraph {
    num_states: usize,
    num_actions: usize,
    offsets: Vec<usize>,
    targets: Vec<StateId>,
}

impl MdpGraph {
    pub fn from_mdp(mdp: &Mdp) -> Self {
        let mut b = MdpGraphBuilder::new(mdp.action_count());
        for q in 0..mdp.state_count() {
            for a in 0..mdp.action_count() {
                let mut succ: Vec<StateId> = mdp
                    .row(q, a)
                    .iter()
                    .filter(|(_, p)| *p > 0.0)
                    .map(|(t, _)| *t)
                    .collect();
                succ.sort_unstable();
                succ.dedup();
                b.push_row(succ);
            }
        }
        b.finish()
    }

    /// Builds a graph from explicit successor lists indexed `[state][action]`.
    pub fn from_lists(num_actions: usize, lists: &[Vec<Vec<StateId>>]) -> Self {
        let mut b = MdpGraphBuilder::new(num_actions);
        for rows in lists {
            assert_eq!(rows.len(), num_actions, "one successor list per action");
            for succ in rows {
                b.push_row(succ.iter().copied());
            }
        }
        b.finish()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn successors(&self, state: StateId, action: ActionId) -> &[StateId] {
        &self.targets[self.edge_range(state, action)]
    }

    /// Actions with no successors are treated as unavailable.
    pub fn enabled(&self, state: StateId, action: ActionId) -> bool {
        !self.edge_range(state, action).is_empty()
    }

    pub(crate) fn edge_range(&self, state: StateId, action: ActionId) -> Range<usize> {
        let row = state * self.num_actions + action;
        self.offsets[row]..self.offsets[row + 1]
    }

    pub(crate) fn targets(&self) -> &[StateId] {
        &self.targets
    }

    /// `pred[t]` lists every `(state, action)` with `t` among its successors.
    fn predecessors(&self) -> Vec<Vec<(StateId, ActionId)>> {
        let mut pred = vec![Vec::new(); self.num_states];
        for q in 0..self.num_states {
            for a in 0..self.num_actions {
                for &t in self.successors(q, a) {
                    pred[t].push((q, a));
                }
            }
        }
        pred
    }
}

/// Row-by-row construction of an [`MdpGraph`], states in order and actions
/// in order within each state.
#[derive(Debug)]
pub struct MdpGraphBuilder {
    num_actions: usize,
    offsets: Vec<usize>,
    targets: Vec<StateId>,
}

impl MdpGraphBuilder {
    pub fn new(num_actions: usize) -> Self {
        MdpGraphBuilder {
            num_actions,
            offsets: vec![0],
            targets: Vec::new(),
        }
    }

    pub fn push_row(&mut self, successors: impl IntoIterator<Item = StateId>) {
        self.targets.extend(successors);
        self.offsets.push(self.targets.len());
    }

    pub fn finish(self) -> MdpGraph {
        let rows = self.offsets.len() - 1;
        assert!(
            self.num_actions == 0 || rows.is_multiple_of(self.num_actions),
            "incomplete state row"
        );
        MdpGraph {
            num_states: rows.checked_div(self.num_actions).unwrap_or(0),
            num_actions: self.num_actions,
            offsets: self.offsets,
            targets: self.targets,
        }
    }
}

/// A closed, strongly connected sub-MDP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndComponent {
    /// Sorted state indices.
    pub states: Vec<StateId>,
    /// Sorted non-empty action sets, parallel to `states`.
    pub actions: Vec<Vec<ActionId>>,
}

impl EndComponent {
    pub fn actions_of(&self, state: StateId) -> Option<&[ActionId]> {
        self.states
            .binary_search(&state)
            .ok()
            .map(|i| self.actions[i].as_slice())
    }
}

/// Pure memoryless strategy defined on a winning region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyTable {
    choice: Vec<Option<ActionId>>,
}

impl StrategyTable {
    pub fn new(choice: Vec<Option<ActionId>>) -> Self {
        StrategyTable { choice }
    }

    pub fn get(&self, state: StateId) -> Option<ActionId> {
        self.choice.get(state).copied().flatten()
    }

    /// States where the strategy is defined, increasing.
    pub fn domain(&self) -> impl Iterator<Item = StateId> + '_ {
        self.choice.iter().enumerate().filter_map(|(q, c)| c.map(|_| q))
    }

    pub fn choices(&self) -> &[Option<ActionId>] {
        &self.choice
    }
}

/// Winning region with a witness strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub winning: Vec<bool>,
    pub strategy: StrategyTable,
}

impl Solution {
    pub fn winning_states(&self) -> Vec<StateId> {
        (0..self.winning.len()).filter(|&q| self.winning[q]).collect()
    }
}

/// Tarjan's algorithm, iterative. Returns the component index of each node;
/// components are numbered in reverse topological order.
fn scc(adj: &[Vec<usize>]) -> Vec<usize> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack = Vec::new();
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut counter = 0;
    let mut ncomp = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if let Some(&w) = adj[v].get(*i) {
                *i += 1;
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp[w] = ncomp;
                        if w == v {
                            break;
                        }
                    }
                    ncomp += 1;
                }
            }
        }
    }
    comp
}

/// MECs of the sub-MDP induced by `allowed` states: an action is usable only
/// if all its successors stay in `allowed`.
fn mecs_within(graph: &MdpGraph, allowed: &[bool]) -> Vec<EndComponent> {
    let (n, m) = (graph.num_states(), graph.num_actions());
    let mut alive: Vec<bool> = (0..n * m)
        .map(|row| {
            let (q, a) = (row / m.max(1), row % m.max(1));
            allowed[q] && graph.enabled(q, a) && graph.successors(q, a).iter().all(|&t| allowed[t])
        })
        .collect();
    loop {
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|q| {
                let mut out: Vec<usize> = (0..m)
                    .filter(|&a| alive[q * m + a])
                    .flat_map(|a| graph.successors(q, a).iter().copied())
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect();
        let comp = scc(&adj);
        let mut changed = false;
        for q in 0..n {
            for a in 0..m {
                if alive[q * m + a] && graph.successors(q, a).iter().any(|&t| comp[t] != comp[q]) {
                    alive[q * m + a] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            let mut by_comp: Vec<Vec<StateId>> = vec![Vec::new(); n];
            for q in 0..n {
                if (0..m).any(|a| alive[q * m + a]) {
                    by_comp[comp[q]].push(q);
                }
            }
            let mut out: Vec<EndComponent> = by_comp
                .into_iter()
                .filter(|states| !states.is_empty())
                .map(|states| {
                    let actions = states
                        .iter()
                        .map(|&q| (0..m).filter(|&a| alive[q * m + a]).collect())
                        .collect();
                    EndComponent { states, actions }
                })
                .collect();
            out.sort_by_key(|ec| ec.states[0]);
            return out;
        }
    }
}

/// Maximal end components, ordered by their smallest state.
pub fn mec_decomposition(graph: &MdpGraph) -> Vec<EndComponent> {
    mecs_within(graph, &vec![true; graph.num_states()])
}

/// States from which `target` is reached with probability 1 under some
/// strategy, with a witness that follows shortest paths inside the winning
/// region (ties broken by smallest action index).
///
/// On target states the strategy picks the smallest action that stays in the
/// winning region, if one exists, and otherwise the smallest enabled action.
pub fn almost_sure_reach(graph: &MdpGraph, target: &[bool]) -> Solution {
    let (n, m) = (graph.num_states(), graph.num_actions());
    let pred = graph.predecessors();
    let mut win = vec![true; n];
    let stays =
        |q: StateId, a: ActionId, win: &[bool]| graph.enabled(q, a) && graph.successors(q, a).iter().all(|&t| win[t]);
    let mut dist;
    loop {
        dist = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        for q in 0..n {
            if win[q] && target[q] {
                dist[q] = 0;
                queue.push_back(q);
            }
        }
        while let Some(t) = queue.pop_front() {
            for &(q, a) in &pred[t] {
                if win[q] && dist[q] == usize::MAX && stays(q, a, &win) {
                    dist[q] = dist[t] + 1;
                    queue.push_back(q);
                }
            }
        }
        let next: Vec<bool> = dist.iter().map(|&d| d != usize::MAX).collect();
        if next == win {
            break;
        }
        win = next;
    }
    let choice = (0..n)
        .map(|q| {
            if !win[q] {
                return None;
            }
            if dist[q] == 0 {
                return (0..m)
                    .find(|&a| stays(q, a, &win))
                    .or_else(|| (0..m).find(|&a| graph.enabled(q, a)));
            }
            (0..m).find(|&a| stays(q, a, &win) && graph.successors(q, a).iter().any(|&t| dist[t] == dist[q] - 1))
        })
        .collect();
    Solution {
        winning: win,
        strategy: StrategyTable::new(choice),
    }
}

/// End components whose largest priority is even and which are maximal among
/// those with that largest priority. Pairwise disjoint.
pub fn good_end_components(graph: &MdpGraph, priorities: &[u32]) -> Vec<(EndComponent, u32)> {
    let n = graph.num_states();
    let mut evens: Vec<u32> = priorities.iter().copied().filter(|p| p % 2 == 0).collect();
    evens.sort_unstable_by(|a, b| b.cmp(a));
    evens.dedup();
    let mut taken = vec![false; n];
    let mut out = Vec::new();
    for e in evens {
        let allowed: Vec<bool> = priorities.iter().map(|&p| p <= e).collect();
        for ec in mecs_within(graph, &allowed) {
            // an EC of a larger even level either contains this one or is disjoint
            if ec.states.iter().any(|&q| priorities[q] == e) && !ec.states.iter().any(|&q| taken[q]) {
                ec.states.iter().for_each(|&q| taken[q] = true);
                out.push((ec, e));
            }
        }
    }
    out.sort_by_key(|(ec, _)| ec.states[0]);
    out
}

/// States with an almost-sure strategy for the parity objective (the largest
/// priority seen infinitely often is even).
///
/// The winning region is the almost-sure attractor of the good end
/// components. Inside a good component the strategy walks shortest paths (in
/// the component) toward a fixed state of maximal priority, so that state is
/// visited infinitely often with probability 1.
pub fn almost_sure_parity(graph: &MdpGraph, priorities: &[u32]) -> Solution {
    let n = graph.num_states();
    assert_eq!(priorities.len(), n, "one priority per state");
    let good = good_end_components(graph, priorities);
    let mut in_good = vec![false; n];
    let mut choice: Vec<Option<ActionId>> = vec![None; n];
    for (ec, e) in &good {
        for &q in &ec.states {
            in_good[q] = true;
        }
        let anchor = *ec
            .states
            .iter()
            .find(|&&q| priorities[q] == *e)
            .expect("good EC has its priority");
        for (q, a) in ec_walk_to(graph, ec, anchor) {
            choice[q] = Some(a);
        }
    }
    let reach = almost_sure_reach(graph, &in_good);
    for q in 0..n {
        if reach.winning[q] && !in_good[q] {
            choice[q] = reach.strategy.get(q);
        }
    }
    Solution {
        winning: reach.winning,
        strategy: StrategyTable::new(choice),
    }
}

/// Per-state action inside `ec` on a shortest path to `anchor`; at the anchor
/// itself the smallest component action.
fn ec_walk_to(graph: &MdpGraph, ec: &EndComponent, anchor: StateId) -> Vec<(StateId, ActionId)> {
    let pos = |q: StateId| ec.states.binary_search(&q).ok();
    let k = ec.states.len();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &q) in ec.states.iter().enumerate() {
        for &a in &ec.actions[i] {
            for &t in graph.successors(q, a) {
                rev[pos(t).expect("end component is closed")].push(i);
            }
        }
    }
    let mut dist = vec![usize::MAX; k];
    let root = pos(anchor).expect("anchor in component");
    dist[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &u in &rev[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
        }
    }
    ec.states
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let a = if i == root {
                ec.actions[i][0]
            } else {
                *ec.actions[i]
                    .iter()
                    .find(|&&a| {
                        graph
                            .successors(q, a)
                            .iter()
                            .any(|&t| dist[pos(t).unwrap()] + 1 == dist[i])
                    })
                    .expect("strongly connected component")
            };
            (q, a)
        })
        .collect()
}

pub const ORACLE_MAX_STATES: usize = 12;
pub const ORACLE_MAX_ACTIONS: usize = 4;

/// Exhaustive reference solver for small MDPs: a state wins iff some pure
/// memoryless strategy makes every bottom SCC reachable from it have an even
/// largest priority. Independent of the end-component machinery above.
pub fn brute_force_parity_oracle(graph: &MdpGraph, priorities: &[u32]) -> Result<Vec<bool>, Error> {
    let (n, m) = (graph.num_states(), graph.num_actions());
    if n > ORACLE_MAX_STATES || m > ORACLE_MAX_ACTIONS {
        return Err(Error::InvalidInput(format!(
            "oracle limited to {ORACLE_MAX_STATES} states and {ORACLE_MAX_ACTIONS} actions, got {n} and {m}"
        )));
    }
    let options: Vec<Vec<ActionId>> = (0..n)
        .map(|q| (0..m).filter(|&a| graph.enabled(q, a)).collect())
        .collect();
    if options.iter().any(Vec::is_empty) {
        return Err(Error::InvalidInput("every state needs an enabled action".into()));
    }
    let mut wins = vec![false; n];
    let mut pick = vec![0usize; n];
    loop {
        // successor bitmask per state under the current strategy
        let step: Vec<u32> = (0..n)
            .map(|q| {
                graph
                    .successors(q, options[q][pick[q]])
                    .iter()
                    .fold(0u32, |acc, &t| acc | (1 << t))
            })
            .collect();
        let reach: Vec<u32> = (0..n)
            .map(|q| {
                let mut seen = 1u32 << q;
                loop {
                    let mut next = seen;
                    for (t, &out) in step.iter().enumerate() {
                        if seen & (1 << t) != 0 {
                            next |= out;
                        }
                    }
                    if next == seen {
                        return seen;
                    }
                    seen = next;
                }
            })
            .collect();
        let bottom_ok: Vec<Option<bool>> = (0..n)
            .map(|q| {
                let in_bottom = (0..n).all(|t| reach[q] & (1 << t) == 0 || reach[t] & (1 << q) != 0);
                in_bottom.then(|| {
                    let top = (0..n)
                        .filter(|&t| reach[q] & (1 << t) != 0)
                        .map(|t| priorities[t])
                        .max()
                        .unwrap();
                    top % 2 == 0
                })
            })
            .collect();
        for q in 0..n {
            if !wins[q] && (0..n).all(|t| reach[q] & (1 << t) == 0 || bottom_ok[t] != Some(false)) {
                wins[q] = true;
            }
        }
        // next strategy in mixed radix
        let mut i = 0;
        loop {
            if i == n {
                return Ok(wins);
            }
            pick[i] += 1;
            if pick[i] < options[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(lists: &[&[&[usize]]]) -> MdpGraph {
        let m = lists[0].len();
        let owned: Vec<Vec<Vec<usize>>> = lists
            .iter()
            .map(|rows| rows.iter().map(|r| r.to_vec()).collect())
            .collect();
        MdpGraph::from_lists(m, &owned)
    }

    #[test]
    fn single_absorbing_state() {
        let g = graph(&[&[&[0]]]);
        let mecs = mec_decomposition(&g);
        assert_eq!(
            mecs,
            vec![EndComponent {
                states: vec![0],
                actions: vec![vec![0]]
            }]
        );
        assert_eq!(brute_force_parity_oracle(&g, &[0]).unwrap(), vec![true]);
        assert_eq!(brute_force_parity_oracle(&g, &[1]).unwrap(), vec![false]);
        assert_eq!(almost_sure_parity(&g, &[1]).winning, vec![false]);
    }

    #[test]
    fn reach_by_repeated_trials() {
        // state 0: action a loops, action b reaches 1 or loops
        let g = graph(&[&[&[0], &[0, 1]], &[&[1], &[1]]]);
        let sol = almost_sure_reach(&g, &[false, true]);
        assert_eq!(sol.winning, vec![true, true]);
        assert_eq!(sol.strategy.get(0), Some(1));
        let all = almost_sure_reach(&g, &[true, true]);
        assert_eq!(all.winning, vec![true, true]);
    }

    #[test]
    fn odd_mec_with_even_sub_component() {
        // 0 <-> 1 via action 0; 1 -> 2 -> 0 via action 1. Priorities 2, 0, 3.
        let g = graph(&[&[&[1], &[1]], &[&[0], &[2]], &[&[0], &[0]]]);
        let pr = [2, 0, 3];
        assert_eq!(mec_decomposition(&g).len(), 1);
        let sol = almost_sure_parity(&g, &pr);
        assert_eq!(sol.winning, vec![true, true, true]);
        assert_eq!(sol.winning, brute_force_parity_oracle(&g, &pr).unwrap());
        assert_eq!(sol.strategy.get(1), Some(0));
    }

    #[test]
    fn scc_components() {
        let adj = vec![vec![1], vec![0, 2], vec![2], vec![]];
        let c = scc(&adj);
        assert_eq!(c[0], c[1]);
        assert_ne!(c[1], c[2]);
        assert_ne!(c[2], c[3]);
    }

    #[test]
    fn oracle_size_guard() {
        let lists: Vec<Vec<Vec<usize>>> = (0..13).map(|q| vec![vec![q]]).collect();
        let g = MdpGraph::from_lists(1, &lists);
        assert!(brute_force_parity_oracle(&g, &[0; 13]).is_err());
    }
}
