//! POMDPs with signal-emitting transitions, their underlying MDPs, and
//! structural validation.

use std::collections::HashSet;
use std::fmt;

use crate::support::Support;
use crate::Error;

pub type StateId = usize;
pub type ActionId = usize;
pub type SignalId = usize;

/// Tolerance on row sums of probability distributions.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// One positive-probability outcome of playing an action: the emitted signal
/// and the next state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub signal: SignalId,
    pub next: StateId,
    pub prob: f64,
}

/// A finite POMDP where every transition emits a signal.
///
/// Immutable once built; use [`PomdpBuilder`] to construct one.
#[derive(Debug, Clone, PartialEq)]
pub struct Pomdp {
    state_names: Vec<String>,
    action_names: Vec<String>,
    signal_names: Vec<String>,
    /// Row of `(state, action)` lives at `state * num_actions + action`.
    rows: Vec<Vec<Transition>>,
    initial_distribution: Vec<f64>,
    initial_support: Support,
    priorities: Vec<u32>,
}

impl Pomdp {
    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn num_signals(&self) -> usize {
        self.signal_names.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn signal_names(&self) -> &[String] {
        &self.signal_names
    }

    pub fn state_name(&self, q: StateId) -> &str {
        &self.state_names[q]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.action_names[a]
    }

    pub fn signal_name(&self, s: SignalId) -> &str {
        &self.signal_names[s]
    }

    pub fn state_index(&self, name: &str) -> Option<StateId> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn action_index(&self, name: &str) -> Option<ActionId> {
        self.action_names.iter().position(|n| n == name)
    }

    pub fn signal_index(&self, name: &str) -> Option<SignalId> {
        self.signal_names.iter().position(|n| n == name)
    }

    /// Outcomes of playing `action` in `state`, in stored order.
    pub fn row(&self, state: StateId, action: ActionId) -> &[Transition] {
        &self.rows[state * self.num_actions() + action]
    }

    /// Probability of emitting `signal` and moving to `next`.
    pub fn prob(&self, state: StateId, action: ActionId, signal: SignalId, next: StateId) -> f64 {
        self.row(state, action)
            .iter()
            .filter(|t| t.signal == signal && t.next == next)
            .map(|t| t.prob)
            .sum()
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial_distribution
    }

    pub fn initial_support(&self) -> &Support {
        &self.initial_support
    }

    pub fn priorities(&self) -> &[u32] {
        &self.priorities
    }

    pub fn priority(&self, q: StateId) -> u32 {
        self.priorities[q]
    }

    pub fn priority_function(&self) -> PriorityFunction {
        PriorityFunction::new(self.priorities.clone())
    }

    /// Largest priority used, derived from the data.
    pub fn max_priority(&self) -> u32 {
        self.priorities.iter().copied().max().unwrap_or(0)
    }

    pub fn empty_support(&self) -> Support {
        Support::empty(self.num_states())
    }

    pub fn support_of(&self, states: impl IntoIterator<Item = StateId>) -> Support {
        Support::from_states(self.num_states(), states)
    }

    /// Resolves state names into a support.
    pub fn support_from_names<S: AsRef<str>>(&self, names: &[S]) -> Result<Support, Error> {
        let mut b = self.empty_support();
        for n in names {
            let q = self.state_index(n.as_ref()).ok_or_else(|| Error::UnknownName {
                kind: "state",
                name: n.as_ref().to_string(),
            })?;
            b.insert(q);
        }
        Ok(b)
    }

    pub fn support_names(&self, b: &Support) -> Vec<String> {
        b.iter().map(|q| self.state_names[q].clone()).collect()
    }

    fn check_state(&self, q: StateId) -> Result<(), Error> {
        if q < self.num_states() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                kind: "state",
                index: q,
            })
        }
    }

    fn check_action(&self, a: ActionId) -> Result<(), Error> {
        if a < self.num_actions() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                kind: "action",
                index: a,
            })
        }
    }

    /// States reachable with positive probability by playing `action` in `state`.
    pub fn succ(&self, state: StateId, action: ActionId) -> Result<Support, Error> {
        self.check_state(state)?;
        self.check_action(action)?;
        Ok(self.support_of(self.row(state, action).iter().map(|t| t.next)))
    }

    /// Like [`Pomdp::succ`], restricted to outcomes emitting `signal`.
    pub fn succ_with_signal(&self, state: StateId, action: ActionId, signal: SignalId) -> Result<Support, Error> {
        self.check_state(state)?;
        self.check_action(action)?;
        if signal >= self.num_signals() {
            return Err(Error::IndexOutOfRange {
                kind: "signal",
                index: signal,
            });
        }
        Ok(self.support_of(
            self.row(state, action)
                .iter()
                .filter(|t| t.signal == signal)
                .map(|t| t.next),
        ))
    }
}

/// Incremental construction of a [`Pomdp`]. No validation happens here; call
/// [`validate`] on the result.
#[derive(Debug, Clone)]
pub struct PomdpBuilder {
    state_names: Vec<String>,
    action_names: Vec<String>,
    signal_names: Vec<String>,
    rows: Vec<Vec<Transition>>,
    initial_distribution: Vec<f64>,
    priorities: Vec<u32>,
}

impl PomdpBuilder {
    pub fn new<S: Into<String>>(
        states: impl IntoIterator<Item = S>,
        actions: impl IntoIterator<Item = S>,
        signals: impl IntoIterator<Item = S>,
    ) -> Self {
        let state_names: Vec<String> = states.into_iter().map(Into::into).collect();
        let action_names: Vec<String> = actions.into_iter().map(Into::into).collect();
        let signal_names: Vec<String> = signals.into_iter().map(Into::into).collect();
        let n = state_names.len();
        let mut initial_distribution = vec![0.0; n];
        if let Some(first) = initial_distribution.first_mut() {
            *first = 1.0;
        }
        PomdpBuilder {
            rows: vec![Vec::new(); n * action_names.len()],
            priorities: vec![0; n],
            initial_distribution,
            state_names,
            action_names,
            signal_names,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    /// Appends an outcome to the `(state, action)` row.
    pub fn transition(
        &mut self,
        state: StateId,
        action: ActionId,
        signal: SignalId,
        next: StateId,
        prob: f64,
    ) -> &mut Self {
        let m = self.action_names.len();
        self.rows[state * m + action].push(Transition { signal, next, prob });
        self
    }

    /// Adds `prob` to an existing `(signal, next)` entry of the row, or
    /// appends a new one.
    pub fn add_mass(
        &mut self,
        state: StateId,
        action: ActionId,
        signal: SignalId,
        next: StateId,
        prob: f64,
    ) -> &mut Self {
        let m = self.action_names.len();
        let row = &mut self.rows[state * m + action];
        match row.iter_mut().find(|t| t.signal == signal && t.next == next) {
            Some(t) => t.prob += prob,
            None => row.push(Transition { signal, next, prob }),
        }
        self
    }

    /// Same outcome row for every action.
    pub fn transition_all_actions(&mut self, state: StateId, signal: SignalId, next: StateId, prob: f64) -> &mut Self {
        for a in 0..self.action_names.len() {
            self.transition(state, a, signal, next, prob);
        }
        self
    }

    pub fn initial_state(&mut self, q: StateId) -> &mut Self {
        self.initial_distribution.iter_mut().for_each(|p| *p = 0.0);
        self.initial_distribution[q] = 1.0;
        self
    }

    pub fn initial_distribution(&mut self, dist: Vec<f64>) -> &mut Self {
        self.initial_distribution = dist;
        self
    }

    pub fn priorities(&mut self, priorities: Vec<u32>) -> &mut Self {
        self.priorities = priorities;
        self
    }

    pub fn build(&self) -> Pomdp {
        let n = self.state_names.len();
        let initial_support = Support::from_states(
            n,
            self.initial_distribution
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(q, _)| q),
        );
        Pomdp {
            state_names: self.state_names.clone(),
            action_names: self.action_names.clone(),
            signal_names: self.signal_names.clone(),
            rows: self.rows.clone(),
            initial_distribution: self.initial_distribution.clone(),
            initial_support,
            priorities: self.priorities.clone(),
        }
    }
}

/// A priority per state; the maximum `d` is derived, never declared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityFunction {
    values: Vec<u32>,
}

impl PriorityFunction {
    pub fn new(values: Vec<u32>) -> Self {
        PriorityFunction { values }
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn get(&self, q: usize) -> u32 {
        self.values[q]
    }

    pub fn max(&self) -> u32 {
        self.values.iter().copied().max().unwrap_or(0)
    }
}

/// One failed structural invariant, located by names.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoStates,
    NoActions,
    NoSignals,
    MissingRow {
        state: String,
        action: String,
    },
    RowSum {
        state: String,
        action: String,
        sum: f64,
    },
    NonPositive {
        state: String,
        action: String,
        signal: String,
        next: String,
        prob: f64,
    },
    DuplicateEntry {
        state: String,
        action: String,
        signal: String,
        next: String,
    },
    IndexOutOfRange {
        state: String,
        action: String,
    },
    DuplicateName {
        kind: &'static str,
        name: String,
    },
    InitialDistribution {
        sum: f64,
    },
    InitialSupportMismatch,
    PriorityCount {
        expected: usize,
        found: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStates => write!(f, "no states"),
            Violation::NoActions => write!(f, "no actions"),
            Violation::NoSignals => write!(f, "no signals"),
            Violation::MissingRow { state, action } => {
                write!(f, "row ({state}, {action}): missing (no outcomes)")
            }
            Violation::RowSum { state, action, sum } => {
                write!(f, "row ({state}, {action}): row sum {sum} != 1")
            }
            Violation::NonPositive {
                state,
                action,
                signal,
                next,
                prob,
            } => write!(
                f,
                "row ({state}, {action}): entry ({signal}, {next}) has non-positive probability {prob}"
            ),
            Violation::DuplicateEntry {
                state,
                action,
                signal,
                next,
            } => {
                write!(f, "row ({state}, {action}): duplicate entry ({signal}, {next})")
            }
            Violation::IndexOutOfRange { state, action } => {
                write!(f, "row ({state}, {action}): signal or state index out of range")
            }
            Violation::DuplicateName { kind, name } => write!(f, "duplicate {kind} name `{name}`"),
            Violation::InitialDistribution { sum } => {
                write!(f, "initial distribution sums to {sum} != 1")
            }
            Violation::InitialSupportMismatch => {
                write!(f, "initial support differs from the positive-mass states")
            }
            Violation::PriorityCount { expected, found } => {
                write!(f, "expected {expected} priorities, found {found}")
            }
        }
    }
}

/// Collects every structural invariant violation; an empty result means the
/// POMDP is valid.
pub fn validate(pomdp: &Pomdp) -> Vec<Violation> {
    let mut out = Vec::new();
    let (n, m, k) = (pomdp.num_states(), pomdp.num_actions(), pomdp.num_signals());
    if n == 0 {
        out.push(Violation::NoStates);
    }
    if m == 0 {
        out.push(Violation::NoActions);
    }
    if k == 0 {
        out.push(Violation::NoSignals);
    }
    for (kind, names) in [
        ("state", pomdp.state_names()),
        ("action", pomdp.action_names()),
        ("signal", pomdp.signal_names()),
    ] {
        let mut seen = HashSet::new();
        for name in names {
            if !seen.insert(name) {
                out.push(Violation::DuplicateName {
                    kind,
                    name: name.clone(),
                });
            }
        }
    }
    for q in 0..n {
        for a in 0..m {
            let (state, action) = (pomdp.state_name(q).to_string(), pomdp.action_name(a).to_string());
            let row = pomdp.row(q, a);
            if row.is_empty() {
                out.push(Violation::MissingRow { state, action });
                continue;
            }
            if row.iter().any(|t| t.signal >= k || t.next >= n) {
                out.push(Violation::IndexOutOfRange { state, action });
                continue;
            }
            let mut keys = HashSet::new();
            for t in row {
                if t.prob.is_nan() || t.prob <= 0.0 {
                    out.push(Violation::NonPositive {
                        state: state.clone(),
                        action: action.clone(),
                        signal: pomdp.signal_name(t.signal).to_string(),
                        next: pomdp.state_name(t.next).to_string(),
                        prob: t.prob,
                    });
                }
                if !keys.insert((t.signal, t.next)) {
                    out.push(Violation::DuplicateEntry {
                        state: state.clone(),
                        action: action.clone(),
                        signal: pomdp.signal_name(t.signal).to_string(),
                        next: pomdp.state_name(t.next).to_string(),
                    });
                }
            }
            let sum: f64 = row.iter().map(|t| t.prob).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                out.push(Violation::RowSum { state, action, sum });
            }
        }
    }
    if n > 0 {
        let dist = pomdp.initial_distribution();
        let sum: f64 = dist.iter().sum();
        if dist.len() != n || dist.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            out.push(Violation::InitialDistribution { sum });
        } else {
            let positive = pomdp.support_of((0..n).filter(|&q| dist[q] > 0.0));
            if &positive != pomdp.initial_support() {
                out.push(Violation::InitialSupportMismatch);
            }
        }
    }
    if pomdp.priorities().len() != n {
        out.push(Violation::PriorityCount {
            expected: n,
            found: pomdp.priorities().len(),
        });
    }
    out
}

/// A finite MDP. Rows absent from the mapping are stored empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    pub state_names: Vec<String>,
    pub action_names: Vec<String>,
    /// Row of `(state, action)` lives at `state * action_count + action`.
    pub rows: Vec<Vec<(StateId, f64)>>,
    pub priorities: Option<Vec<u32>>,
    pub initial_state: StateId,
}

impl Mdp {
    pub fn state_count(&self) -> usize {
        self.state_names.len()
    }

    pub fn action_count(&self) -> usize {
        self.action_names.len()
    }

    pub fn row(&self, state: StateId, action: ActionId) -> &[(StateId, f64)] {
        &self.rows[state * self.action_count() + action]
    }

    pub fn prob(&self, state: StateId, action: ActionId, next: StateId) -> f64 {
        self.row(state, action)
            .iter()
            .filter(|(q, _)| *q == next)
            .map(|(_, p)| p)
            .sum()
    }
}

pub(crate) fn fresh_name(taken: &[String], base: &str) -> String {
    let mut name = base.to_string();
    let mut i = 1;
    while taken.contains(&name) {
        name = format!("{base}-{i}");
        i += 1;
    }
    name
}

/// Marginalizes signals out. A non-Dirac start distribution becomes a fresh
/// pre-initial state whose single action (index 0) branches per the
/// distribution.
pub fn underlying_mdp(pomdp: &Pomdp) -> Mdp {
    let (n, m) = (pomdp.num_states(), pomdp.num_actions());
    let mut rows = Vec::with_capacity(n * m);
    for q in 0..n {
        for a in 0..m {
            let mut row: Vec<(StateId, f64)> = Vec::new();
            for t in pomdp.row(q, a) {
                match row.iter_mut().find(|(next, _)| *next == t.next) {
                    Some((_, p)) => *p += t.prob,
                    None => row.push((t.next, t.prob)),
                }
            }
            row.sort_by_key(|&(next, _)| next);
            rows.push(row);
        }
    }
    let mut state_names = pomdp.state_names().to_vec();
    let mut priorities = pomdp.priorities().to_vec();
    let initial_state = match pomdp.initial_support().as_singleton() {
        Some(q) => q,
        None => {
            state_names.push(fresh_name(&state_names, "pre-init"));
            priorities.push(0);
            for a in 0..m {
                rows.push(if a == 0 {
                    pomdp
                        .initial_distribution()
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p > 0.0)
                        .map(|(q, &p)| (q, p))
                        .collect()
                } else {
                    Vec::new()
                });
            }
            n
        }
    };
    Mdp {
        state_names,
        action_names: pomdp.action_names().to_vec(),
        rows,
        priorities: Some(priorities),
        initial_state,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> PomdpBuilder {
        let mut b = PomdpBuilder::new(["x", "y"], ["a"], ["s", "t"]);
        b.transition(0, 0, 0, 0, 0.5)
            .transition(0, 0, 1, 1, 0.5)
            .transition(1, 0, 0, 1, 1.0);
        b
    }

    #[test]
    fn valid_model_has_no_violations() {
        let p = two_state().build();
        assert!(validate(&p).is_empty());
        assert_eq!(validate(&p), validate(&p));
    }

    #[test]
    fn short_row_reports_row_sum() {
        let mut b = PomdpBuilder::new(["x", "y"], ["a"], ["s"]);
        b.transition(0, 0, 0, 0, 0.5)
            .transition(0, 0, 0, 1, 0.4)
            .transition(1, 0, 0, 1, 1.0);
        let v = validate(&b.build());
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::RowSum { sum, .. } => assert!((sum - 0.9).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_state_set() {
        let p = PomdpBuilder::new(Vec::<String>::new(), vec!["a".into()], vec!["s".into()]).build();
        assert!(validate(&p).contains(&Violation::NoStates));
    }

    #[test]
    fn missing_row_and_duplicates() {
        let mut b = PomdpBuilder::new(["x"], ["a", "b"], ["s"]);
        b.transition(0, 0, 0, 0, 0.5).transition(0, 0, 0, 0, 0.5);
        let v = validate(&b.build());
        assert!(v.iter().any(|x| matches!(x, Violation::DuplicateEntry { .. })));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::MissingRow { action, .. } if action == "b")));
    }

    #[test]
    fn succ_sets() {
        let p = two_state().build();
        assert_eq!(p.succ(0, 0).unwrap().to_vec(), vec![0, 1]);
        assert_eq!(p.succ_with_signal(0, 0, 1).unwrap().to_vec(), vec![1]);
        assert!(p.succ_with_signal(1, 0, 1).unwrap().is_empty());
        assert!(p.succ(2, 0).is_err());
        assert!(p.succ_with_signal(0, 0, 7).is_err());
    }

    #[test]
    fn underlying_mdp_dirac_and_pre_initial() {
        let p = two_state().build();
        let mdp = underlying_mdp(&p);
        assert_eq!(mdp.initial_state, 0);
        assert_eq!(mdp.row(0, 0), &[(0, 0.5), (1, 0.5)]);

        let mut b = two_state();
        b.initial_distribution(vec![0.25, 0.75]);
        let mdp = underlying_mdp(&b.build());
        assert_eq!(mdp.state_count(), 3);
        assert_eq!(mdp.initial_state, 2);
        assert_eq!(mdp.row(2, 0), &[(0, 0.25), (1, 0.75)]);
    }
}
