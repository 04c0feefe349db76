//! Multi-pattern occurrence automaton.
//!
//! A trie over the target words completed into a total DFA through failure
//! links. After reading a symbol the automaton sits in the node for the
//! longest suffix of the text that is a prefix of some word. Since all words
//! share the length `n`, that node has depth `n` exactly when the last `n`
//! symbols form a target word.

use std::collections::VecDeque;

use crate::process::Symbol;
use crate::targets::TargetSet;

#[derive(Debug, Clone)]
pub struct OccurrenceAutomaton {
    q: usize,
    n: usize,
    /// `next[state * q + symbol]`.
    next: Vec<u32>,
    depth: Vec<u32>,
    /// Last symbol read on entry to the state; `None` for the root.
    last: Vec<Option<Symbol>>,
}

pub const ROOT: usize = 0;

impl OccurrenceAutomaton {
    pub fn build(set: &TargetSet, q: usize) -> Self {
        const NONE: u32 = u32::MAX;
        let mut next = vec![NONE; q];
        let mut depth = vec![0u32];
        let mut last = vec![None];
        for word in set.words() {
            let mut state = ROOT;
            for &s in word {
                let slot = state * q + s as usize;
                if next[slot] == NONE {
                    let id = depth.len() as u32;
                    next[slot] = id;
                    next.extend(std::iter::repeat(NONE).take(q));
                    depth.push(depth[state] + 1);
                    last.push(Some(s));
                }
                state = next[slot] as usize;
            }
        }

        let states = depth.len();
        let mut fail = vec![0u32; states];
        let mut queue = VecDeque::new();
        for s in 0..q {
            match next[s] {
                NONE => next[s] = ROOT as u32,
                child => {
                    fail[child as usize] = ROOT as u32;
                    queue.push_back(child as usize);
                }
            }
        }
        while let Some(state) = queue.pop_front() {
            for s in 0..q {
                let slot = state * q + s;
                let via_fail = next[fail[state] as usize * q + s];
                match next[slot] {
                    NONE => next[slot] = via_fail,
                    child => {
                        fail[child as usize] = via_fail;
                        queue.push_back(child as usize);
                    }
                }
            }
        }
        Self { q, n: set.rank(), next, depth, last }
    }

    pub fn num_states(&self) -> usize {
        self.depth.len()
    }

    pub fn alphabet_size(&self) -> usize {
        self.q
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn step(&self, state: usize, symbol: Symbol) -> usize {
        self.next[state * self.q + symbol as usize] as usize
    }

    #[inline]
    pub fn is_accepting(&self, state: usize) -> bool {
        self.depth[state] as usize == self.n
    }

    pub fn depth(&self, state: usize) -> usize {
        self.depth[state] as usize
    }

    pub fn last_symbol(&self, state: usize) -> Option<Symbol> {
        self.last[state]
    }

    /// End positions `t` (0-based) at which the window `text[t+1-n..=t]` is a target word.
    pub fn match_ends(&self, text: &[Symbol]) -> Vec<usize> {
        let mut state = ROOT;
        let mut ends = Vec::new();
        for (t, &s) in text.iter().enumerate() {
            state = self.step(state, s);
            if self.is_accepting(state) {
                ends.push(t);
            }
        }
        ends
    }
}
