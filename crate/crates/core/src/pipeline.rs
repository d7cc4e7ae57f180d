//! End-to-end decision: classify the POMDP, solve the belief-support MDP and
//! report how far the abstraction's verdict can be trusted.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::belief::{self, BeliefMdp, BuildOptions};
use crate::mdp_solve::{self, Solution};
use crate::model::{fresh_name, ActionId, SignalId};
use crate::revelation::{self, RevealingVerdict};
use crate::{Error, Pomdp, PomdpBuilder, Support, DEFAULT_NODE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Answer {
    /// An almost-sure strategy exists, and the tool's method is complete here.
    ExactYes,
    /// No almost-sure strategy exists.
    ExactNo,
    /// An almost-sure strategy exists; a NO would not have been trustworthy.
    SoundYes,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "STRONG")]
    Strong,
    #[serde(rename = "WEAK_012")]
    Weak012,
    #[serde(rename = "WEAK_HIGH")]
    WeakHigh,
    #[serde(rename = "GENERAL_COBUCHI")]
    GeneralCobuchi,
    #[serde(rename = "GENERAL")]
    General,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::Strong,
        Regime::Weak012,
        Regime::WeakHigh,
        Regime::GeneralCobuchi,
        Regime::General,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Strong => "STRONG",
            Regime::Weak012 => "WEAK_012",
            Regime::WeakHigh => "WEAK_HIGH",
            Regime::GeneralCobuchi => "GENERAL_COBUCHI",
            Regime::General => "GENERAL",
        }
    }
}

impl Answer {
    pub fn as_str(self) -> &'static str {
        match self {
            Answer::ExactYes => "EXACT_YES",
            Answer::ExactNo => "EXACT_NO",
            Answer::SoundYes => "SOUND_YES",
            Answer::Unknown => "UNKNOWN",
        }
    }

    pub fn is_yes(self) -> bool {
        matches!(self, Answer::ExactYes | Answer::SoundYes)
    }
}

pub fn regime_of(revealing: &RevealingVerdict, max_priority: u32) -> Regime {
    match (revealing.strongly, revealing.weakly) {
        (true, _) => Regime::Strong,
        (false, true) if max_priority <= 2 => Regime::Weak012,
        (false, true) => Regime::WeakHigh,
        (false, false) if max_priority <= 1 => Regime::GeneralCobuchi,
        (false, false) => Regime::General,
    }
}

/// What the belief-MDP verdict means in a given regime.
pub fn decide(regime: Regime, belief_mdp_winning: bool) -> Answer {
    match (regime, belief_mdp_winning) {
        (Regime::Strong | Regime::Weak012 | Regime::WeakHigh, true) => Answer::ExactYes,
        (Regime::Strong | Regime::Weak012, false) => Answer::ExactNo,
        (Regime::WeakHigh, false) => Answer::Unknown,
        (Regime::GeneralCobuchi, true) => Answer::SoundYes,
        (Regime::GeneralCobuchi, false) => Answer::Unknown,
        (Regime::General, _) => Answer::Unknown,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    pub node_cap: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

/// A memoryless strategy over belief supports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportStrategy {
    initial: Support,
    choices: Vec<(Support, ActionId)>,
    index: HashMap<Support, usize>,
}

#[derive(Serialize, Deserialize)]
struct StrategyFile {
    initial: Vec<String>,
    choices: Vec<ChoiceEntry>,
}

#[derive(Serialize, Deserialize)]
struct ChoiceEntry {
    support: Vec<String>,
    action: String,
}

impl SupportStrategy {
    pub fn new(initial: Support, choices: Vec<(Support, ActionId)>) -> Self {
        let index = choices.iter().enumerate().map(|(i, (b, _))| (b.clone(), i)).collect();
        SupportStrategy {
            initial,
            choices,
            index,
        }
    }

    /// The solver's choices on the winning nodes, in node order.
    pub fn from_solution(belief: &BeliefMdp, solution: &Solution) -> Self {
        let choices = (0..belief.num_nodes())
            .filter(|&v| solution.winning[v])
            .filter_map(|v| solution.strategy.get(v).map(|a| (belief.support(v).clone(), a)))
            .collect();
        SupportStrategy::new(belief.support(0).clone(), choices)
    }

    pub fn initial(&self) -> &Support {
        &self.initial
    }

    pub fn choices(&self) -> &[(Support, ActionId)] {
        &self.choices
    }

    pub fn get(&self, support: &Support) -> Option<ActionId> {
        self.index.get(support).map(|&i| self.choices[i].1)
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    /// JSON document naming states and actions.
    pub fn to_json(&self, pomdp: &Pomdp) -> String {
        let file = StrategyFile {
            initial: pomdp.support_names(&self.initial),
            choices: self
                .choices
                .iter()
                .map(|(b, a)| ChoiceEntry {
                    support: pomdp.support_names(b),
                    action: pomdp.action_name(*a).to_string(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("strategy serializes") + "\n"
    }

    pub fn from_json(pomdp: &Pomdp, text: &str) -> Result<Self, Error> {
        let file: StrategyFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("strategy file: {e}")))?;
        let initial = pomdp.support_from_names(&file.initial)?;
        let mut choices = Vec::with_capacity(file.choices.len());
        for c in file.choices {
            let b = pomdp.support_from_names(&c.support)?;
            let a = pomdp.action_index(&c.action).ok_or(Error::UnknownName {
                kind: "action",
                name: c.action,
            })?;
            choices.push((b, a));
        }
        Ok(SupportStrategy::new(initial, choices))
    }

    /// Whether following the strategy from the initial support only visits
    /// supports where it is defined.
    pub fn is_closed(&self, pomdp: &Pomdp) -> bool {
        let mut seen = std::collections::HashSet::from([self.initial.clone()]);
        let mut stack = vec![self.initial.clone()];
        while let Some(b) = stack.pop() {
            let Some(a) = self.get(&b) else { return false };
            for (_, next) in belief::posts(pomdp, &b, a) {
                if seen.insert(next.clone()) {
                    stack.push(next);
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub answer: Answer,
    pub regime: Regime,
    /// Raw verdict of the belief-support MDP at its initial node.
    pub belief_mdp_winning: bool,
    pub belief_mdp_nodes: usize,
    pub revealing: RevealingVerdict,
    /// Present iff the answer is a YES.
    pub strategy: Option<SupportStrategy>,
    /// The belief-MDP strategy whenever the abstraction wins, trusted or not.
    pub abstraction_strategy: Option<SupportStrategy>,
}

pub fn classify(pomdp: &Pomdp, options: &SolveOptions) -> Result<RevealingVerdict, Error> {
    revelation::classify(pomdp, options.node_cap)
}

pub fn solve(pomdp: &Pomdp, options: &SolveOptions) -> Result<Verdict, Error> {
    let bm = belief::build_belief_mdp(
        pomdp,
        &BuildOptions {
            node_cap: options.node_cap,
        },
    )?;
    let revealing = classify(pomdp, options)?;
    let solution = mdp_solve::almost_sure_parity(bm.graph(), bm.priorities().values());
    let belief_mdp_winning = solution.winning[0];
    let regime = regime_of(&revealing, pomdp.max_priority());
    let answer = decide(regime, belief_mdp_winning);
    let abstraction_strategy = belief_mdp_winning.then(|| SupportStrategy::from_solution(&bm, &solution));
    let strategy = if answer.is_yes() {
        abstraction_strategy.clone()
    } else {
        None
    };
    Ok(Verdict {
        answer,
        regime,
        belief_mdp_winning,
        belief_mdp_nodes: bm.num_nodes(),
        revealing,
        strategy,
        abstraction_strategy,
    })
}

pub const DEFAULT_EPSILON: f64 = 0.1;

/// Adds one fresh signal per state that reveals it: every outcome keeps
/// `1 - epsilon` of its mass and moves `epsilon` to the revealing signal of
/// its target state.
pub fn transform_sr(pomdp: &Pomdp, epsilon: f64) -> Result<Pomdp, Error> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let (n, m) = (pomdp.num_states(), pomdp.num_actions());
    let mut signals = pomdp.signal_names().to_vec();
    let reveal: Vec<SignalId> = (0..n)
        .map(|q| {
            let name = fresh_name(&signals, &format!("reveal-{}", pomdp.state_name(q)));
            signals.push(name);
            signals.len() - 1
        })
        .collect();
    let mut b = PomdpBuilder::new(pomdp.state_names().to_vec(), pomdp.action_names().to_vec(), signals);
    for q in 0..n {
        for a in 0..m {
            for t in pomdp.row(q, a) {
                b.add_mass(q, a, t.signal, t.next, t.prob * (1.0 - epsilon));
                b.add_mass(q, a, reveal[t.next], t.next, t.prob * epsilon);
            }
        }
    }
    b.initial_distribution(pomdp.initial_distribution().to_vec());
    b.priorities(pomdp.priorities().to_vec());
    Ok(b.build())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ControlError {
    #[error("no choice for support {support:?}")]
    OutsideDomain { support: Vec<String> },
    #[error("signal `{signal}` is impossible after action `{action}` from the current support")]
    Inconsistent { action: String, signal: String },
}

/// Executes a support strategy by tracking the support of the history.
#[derive(Debug, Clone)]
pub struct Controller<'a> {
    pomdp: &'a Pomdp,
    strategy: &'a SupportStrategy,
    current: Support,
}

pub fn lift_strategy<'a>(pomdp: &'a Pomdp, strategy: &'a SupportStrategy) -> Controller<'a> {
    Controller {
        pomdp,
        strategy,
        current: pomdp.initial_support().clone(),
    }
}

impl<'a> Controller<'a> {
    pub fn reset(&mut self) {
        self.current = self.pomdp.initial_support().clone();
    }

    pub fn current(&self) -> &Support {
        &self.current
    }

    pub fn act(&self) -> Result<ActionId, ControlError> {
        self.strategy
            .get(&self.current)
            .ok_or_else(|| ControlError::OutsideDomain {
                support: self.pomdp.support_names(&self.current),
            })
    }

    pub fn observe(&mut self, action: ActionId, signal: SignalId) -> Result<(), ControlError> {
        match belief::update(self.pomdp, &self.current, action, signal) {
            Some(next) => {
                self.current = next;
                Ok(())
            }
            None => Err(ControlError::Inconsistent {
                action: self.pomdp.action_name(action).to_string(),
                signal: self.pomdp.signal_name(signal).to_string(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_is_total() {
        for regime in Regime::ALL {
            for win in [false, true] {
                let answer = decide(regime, win);
                if answer.is_yes() {
                    assert!(win);
                }
                if answer == Answer::ExactNo {
                    assert!(!win);
                }
            }
        }
        assert_eq!(decide(Regime::General, true), Answer::Unknown);
    }

    #[test]
    fn epsilon_bounds() {
        let p = PomdpBuilder::new(["x"], ["a"], ["s"])
            .transition(0, 0, 0, 0, 1.0)
            .build();
        assert!(transform_sr(&p, 0.0).is_err());
        assert!(transform_sr(&p, 1.0).is_err());
        let sr = transform_sr(&p, 0.25).unwrap();
        assert_eq!(sr.signal_names(), &["s", "reveal-x"]);
        assert_eq!(sr.prob(0, 0, 1, 0), 0.25);
    }

    #[test]
    fn single_node_controller() {
        let p = PomdpBuilder::new(["x"], ["a", "b"], ["s"])
            .transition(0, 0, 0, 0, 1.0)
            .transition(0, 1, 0, 0, 1.0)
            .build();
        let v = solve(&p, &SolveOptions::default()).unwrap();
        assert_eq!(v.answer, Answer::ExactYes);
        let strategy = v.strategy.unwrap();
        let mut c = lift_strategy(&p, &strategy);
        for _ in 0..3 {
            let a = c.act().unwrap();
            assert_eq!(a, 0);
            c.observe(a, 0).unwrap();
        }
    }

    #[test]
    fn inconsistent_observation_errors() {
        let p = PomdpBuilder::new(["x"], ["a"], ["s", "t"])
            .transition(0, 0, 0, 0, 1.0)
            .build();
        let strategy = SupportStrategy::new(p.support_of([0]), vec![(p.support_of([0]), 0)]);
        let mut c = lift_strategy(&p, &strategy);
        assert!(matches!(c.observe(0, 1), Err(ControlError::Inconsistent { .. })));
    }
}
