//! Dense bitsets over state indices.

use std::fmt;

use crate::model::StateId;

const WORD_BITS: usize = 64;

/// A set of states of a fixed universe, stored as a bitset.
///
/// Belief supports are non-empty by definition; the empty value only appears
/// as an intermediate result (an impossible observation) and is never stored
/// as a node of a belief-support graph.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Support {
    words: Box<[u64]>,
}

impl Support {
    pub fn empty(universe: usize) -> Self {
        Support {
            words: vec![0; universe.div_ceil(WORD_BITS).max(1)].into_boxed_slice(),
        }
    }

    pub fn singleton(universe: usize, state: StateId) -> Self {
        let mut s = Self::empty(universe);
        s.insert(state);
        s
    }

    pub fn full(universe: usize) -> Self {
        Self::from_states(universe, 0..universe)
    }

    pub fn from_states(universe: usize, states: impl IntoIterator<Item = StateId>) -> Self {
        let mut s = Self::empty(universe);
        for q in states {
            s.insert(q);
        }
        s
    }

    pub fn insert(&mut self, state: StateId) {
        self.words[state / WORD_BITS] |= 1 << (state % WORD_BITS);
    }

    pub fn remove(&mut self, state: StateId) {
        self.words[state / WORD_BITS] &= !(1 << (state % WORD_BITS));
    }

    pub fn contains(&self, state: StateId) -> bool {
        self.words
            .get(state / WORD_BITS)
            .is_some_and(|w| w & (1 << (state % WORD_BITS)) != 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_singleton(&self) -> bool {
        self.len() == 1
    }

    /// The only member of a singleton support.
    pub fn as_singleton(&self) -> Option<StateId> {
        if self.is_singleton() {
            self.iter().next()
        } else {
            None
        }
    }

    pub fn is_subset(&self, other: &Support) -> bool {
        self.words
            .iter()
            .zip(other.words.iter().chain(std::iter::repeat(&0)))
            .all(|(a, b)| a & !b == 0)
    }

    pub fn union_with(&mut self, other: &Support) {
        for (a, b) in self.words.iter_mut().zip(other.words.iter()) {
            *a |= b;
        }
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
    }

    /// Members in increasing index order.
    pub fn iter(&self) -> impl Iterator<Item = StateId> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut word = w;
            std::iter::from_fn(move || {
                if word == 0 {
                    return None;
                }
                let bit = word.trailing_zeros() as usize;
                word &= word - 1;
                Some(i * WORD_BITS + bit)
            })
        })
    }

    pub fn to_vec(&self) -> Vec<StateId> {
        self.iter().collect()
    }
}

impl fmt::Debug for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
