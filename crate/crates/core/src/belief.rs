//! Belief-support updates and the reachable belief-support MDP.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write;

use crate::mdp_solve::{MdpGraph, MdpGraphBuilder};
use crate::model::{ActionId, PomdpBuilder, PriorityFunction, SignalId, StateId};
pub use crate::support::Support;
use crate::{Error, Pomdp, DEFAULT_NODE_CAP};

pub type NodeId = usize;

/// Successor support of `support` after playing `action` and observing
/// `signal`; `None` when no member can emit that signal.
pub fn update(pomdp: &Pomdp, support: &Support, action: ActionId, signal: SignalId) -> Option<Support> {
    let mut out = pomdp.empty_support();
    for q in support.iter() {
        for t in pomdp.row(q, action) {
            if t.signal == signal {
                out.insert(t.next);
            }
        }
    }
    (!out.is_empty()).then_some(out)
}

/// Left fold of [`update`] over an observable history.
pub fn update_star(pomdp: &Pomdp, support: &Support, history: &[(ActionId, SignalId)]) -> Option<Support> {
    history
        .iter()
        .try_fold(support.clone(), |b, &(a, s)| update(pomdp, &b, a, s))
}

/// All non-empty successors of `support` under `action`, keyed by signal in
/// increasing signal order.
pub fn posts(pomdp: &Pomdp, support: &Support, action: ActionId) -> Vec<(SignalId, Support)> {
    let mut acc: Vec<Option<Support>> = vec![None; pomdp.num_signals()];
    for q in support.iter() {
        for t in pomdp.row(q, action) {
            acc[t.signal]
                .get_or_insert_with(|| pomdp.empty_support())
                .insert(t.next);
        }
    }
    acc.into_iter()
        .enumerate()
        .filter_map(|(s, b)| b.map(|b| (s, b)))
        .collect()
}

/// The fragment of the belief-support MDP reachable from the initial support.
#[derive(Debug, Clone)]
pub struct BeliefMdp {
    nodes: Vec<Support>,
    index: HashMap<Support, NodeId>,
    graph: MdpGraph,
    /// Parallel to the targets of `graph`: signals leading to each successor.
    edge_signals: Vec<Vec<SignalId>>,
    priorities: PriorityFunction,
}

impl BeliefMdp {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Support] {
        &self.nodes
    }

    pub fn support(&self, node: NodeId) -> &Support {
        &self.nodes[node]
    }

    pub fn node_of(&self, support: &Support) -> Option<NodeId> {
        self.index.get(support).copied()
    }

    pub fn graph(&self) -> &MdpGraph {
        &self.graph
    }

    pub fn successors(&self, node: NodeId, action: ActionId) -> &[NodeId] {
        self.graph.successors(node, action)
    }

    /// Successors of `(node, action)` paired with the signals producing them.
    pub fn labelled_successors(
        &self,
        node: NodeId,
        action: ActionId,
    ) -> impl Iterator<Item = (NodeId, &[SignalId])> + '_ {
        let range = self.graph.edge_range(node, action);
        self.graph.targets()[range.clone()]
            .iter()
            .copied()
            .zip(self.edge_signals[range].iter().map(Vec::as_slice))
    }

    /// Max-priority labels of the nodes.
    pub fn priorities(&self) -> &PriorityFunction {
        &self.priorities
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub node_cap: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

/// Breadth-first construction from the initial support. Nodes are numbered in
/// discovery order (actions, then signals, in index order).
pub fn build_belief_mdp(pomdp: &Pomdp, options: &BuildOptions) -> Result<BeliefMdp, Error> {
    build_belief_mdp_from(pomdp, pomdp.initial_support().clone(), options)
}

/// Same as [`build_belief_mdp`], rooted at an arbitrary non-empty support.
pub fn build_belief_mdp_from(pomdp: &Pomdp, root: Support, options: &BuildOptions) -> Result<BeliefMdp, Error> {
    if root.is_empty() {
        return Err(Error::InvalidInput("empty initial support".into()));
    }
    let m = pomdp.num_actions();
    let mut nodes = vec![root.clone()];
    let mut index = HashMap::from([(root, 0)]);
    let mut builder = MdpGraphBuilder::new(m);
    let mut edge_signals = Vec::new();
    let mut next = 0;
    while next < nodes.len() {
        for a in 0..m {
            let mut row: Vec<(NodeId, Vec<SignalId>)> = Vec::new();
            for (s, b) in posts(pomdp, &nodes[next], a) {
                let id = match index.get(&b) {
                    Some(&id) => id,
                    None => {
                        if nodes.len() >= options.node_cap {
                            return Err(Error::NodeCap { cap: options.node_cap });
                        }
                        let id = nodes.len();
                        index.insert(b.clone(), id);
                        nodes.push(b);
                        id
                    }
                };
                match row.iter_mut().find(|(n, _)| *n == id) {
                    Some((_, sigs)) => sigs.push(s),
                    None => row.push((id, vec![s])),
                }
            }
            builder.push_row(row.iter().map(|(n, _)| *n));
            edge_signals.extend(row.into_iter().map(|(_, sigs)| sigs));
        }
        next += 1;
    }
    let priorities = PriorityFunction::new(
        nodes
            .iter()
            .map(|b| b.iter().map(|q| pomdp.priority(q)).max().unwrap_or(0))
            .collect(),
    );
    Ok(BeliefMdp {
        graph: builder.finish(),
        nodes,
        index,
        edge_signals,
        priorities,
    })
}

/// Max-priority semantics: a support gets the largest priority among its
/// members.
pub fn lift_priorities(pomdp: &Pomdp, belief: &BeliefMdp) -> PriorityFunction {
    PriorityFunction::new(
        belief
            .nodes()
            .iter()
            .map(|b| b.iter().map(|q| pomdp.priority(q)).max().unwrap_or(0))
            .collect(),
    )
}

pub fn reachable_singletons(belief: &BeliefMdp) -> Vec<NodeId> {
    (0..belief.num_nodes())
        .filter(|&n| belief.support(n).is_singleton())
        .collect()
}

/// Length of a shortest path from `from` to a singleton node. With
/// `count_initial == false` the path must have at least one edge, so a
/// singleton `from` only counts if it is revisited.
pub fn revelation_distance(belief: &BeliefMdp, from: NodeId, count_initial: bool) -> Option<usize> {
    if count_initial && belief.support(from).is_singleton() {
        return Some(0);
    }
    let n = belief.num_nodes();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    let push_succ = |v: NodeId, d: usize, dist: &mut Vec<usize>, queue: &mut VecDeque<NodeId>| {
        for a in 0..belief.graph().num_actions() {
            for &w in belief.successors(v, a) {
                if dist[w] == usize::MAX {
                    dist[w] = d;
                    queue.push_back(w);
                }
            }
        }
    };
    push_succ(from, 1, &mut dist, &mut queue);
    while let Some(v) = queue.pop_front() {
        if belief.support(v).is_singleton() {
            return Some(dist[v]);
        }
        push_succ(v, dist[v] + 1, &mut dist, &mut queue);
    }
    None
}

/// The partially observable Markov chain with `n + 2` states whose first
/// revelation from the all-states support takes `2^n - 1` steps.
///
/// States are `q_init, q0, ..., qn`, one action `a`, signals `s1, ..., sn`.
/// From `qi` (i >= 1) under `sj`: mass stays in `qi` if `j < i`, spreads over
/// `q0..q(i-1)` if `j == i`, and over `q0..qn` if `j > i`. `q0` is absorbing
/// and `q_init` spreads over `q0..qn` under every signal. Probabilities are
/// uniform over the positive entries of each row; all priorities are 0.
pub fn gen_exp_family(n: usize) -> Result<Pomdp, Error> {
    if n == 0 {
        return Err(Error::InvalidInput("exp family needs n >= 1".into()));
    }
    let mut states = vec!["q_init".to_string()];
    states.extend((0..=n).map(|i| format!("q{i}")));
    let signals: Vec<String> = (1..=n).map(|j| format!("s{j}")).collect();
    let mut b = PomdpBuilder::new(states, vec!["a".to_string()], signals);
    // state index of qi is i + 1; signal index of sj is j - 1
    let positive = |i: usize, j: usize, k: usize| -> bool {
        (i == 0 && k == 0) || (i >= 1 && ((i > j && i == k) || (i == j && i > k) || i < j))
    };
    let mut row = |src: StateId, entries: Vec<(SignalId, StateId)>| {
        let p = 1.0 / entries.len() as f64;
        for (s, q) in entries {
            b.transition(src, 0, s, q, p);
        }
    };
    row(0, (1..=n).flat_map(|j| (0..=n).map(move |k| (j - 1, k + 1))).collect());
    for i in 0..=n {
        row(
            i + 1,
            (1..=n)
                .flat_map(|j| (0..=n).filter(move |&k| positive(i, j, k)).map(move |k| (j - 1, k + 1)))
                .collect(),
        );
    }
    b.initial_state(0);
    Ok(b.build())
}

/// Graphviz rendering: nodes labelled `{names}:priority`, edges labelled
/// `action/signals`.
pub fn to_dot(pomdp: &Pomdp, belief: &BeliefMdp) -> String {
    let mut out = String::from("digraph belief_mdp {\n  rankdir=LR;\n");
    for (id, b) in belief.nodes().iter().enumerate() {
        let label = format!(
            "{{{}}}:{}",
            pomdp.support_names(b).join(","),
            belief.priorities().get(id)
        );
        let shape = if id == 0 { "doublecircle" } else { "ellipse" };
        let _ = writeln!(out, "  n{id} [label=\"{}\", shape={shape}];", escape(&label));
    }
    for id in 0..belief.num_nodes() {
        for a in 0..pomdp.num_actions() {
            for (to, sigs) in belief.labelled_successors(id, a) {
                let names: Vec<&str> = sigs.iter().map(|&s| pomdp.signal_name(s)).collect();
                let label = format!("{}/{}", pomdp.action_name(a), names.join(","));
                let _ = writeln!(out, "  n{id} -> n{to} [label=\"{}\"];", escape(&label));
            }
        }
    }
    out.push_str("}\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
