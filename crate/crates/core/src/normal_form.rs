//! Finite automaton accepting exactly the canonical normal forms of the
//! algebraic models.
//!
//! Canonical normal forms are the ShortLex-least geodesic words, so the
//! automaton doubles as a sphere-size counter, a ShortLex ranking (the dense
//! canonical element id) and a uniform sampler on spheres.

use std::sync::RwLock;

use rand::Rng;

use crate::error::{Error, Result};
use crate::group::Letter;

const START: usize = 0;

#[derive(Debug)]
pub(crate) struct NormalFormAutomaton {
    n_letters: usize,
    /// `transitions[state][letter]`
    transitions: Vec<Vec<Option<u32>>>,
    /// `counts[n][state]` = number of accepted continuations of length `n`,
    /// saturating at `u128::MAX`.
    counts: RwLock<Vec<Vec<u128>>>,
}

impl NormalFormAutomaton {
    /// Reduced words over letters with the involution `inverse_of`.
    pub(crate) fn free(inverse_of: &[Letter]) -> Self {
        let n = inverse_of.len();
        let mut transitions = vec![vec![None; n]; n + 1];
        for x in 0..n {
            transitions[START][x] = Some(1 + x as u32);
        }
        for last in 0..n {
            for x in 0..n {
                if x != inverse_of[last] as usize {
                    transitions[1 + last][x] = Some(1 + x as u32);
                }
            }
        }
        Self::from_transitions(n, transitions)
    }

    /// Alternating syllable forms of a free product of finite cyclic groups.
    ///
    /// `factor_of[x]` is the factor of letter `x`, `order[f]` its order, and
    /// `run_ok(x, m)` decides whether `x^m` is the canonical spelling of its
    /// syllable.
    pub(crate) fn free_product(factor_of: &[usize], run_ok: impl Fn(usize, usize) -> bool) -> Self {
        let n = factor_of.len();
        // state ids: START, then (letter, run) pairs
        let mut ids: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut next_id = 1u32;
        for (x, slot) in ids.iter_mut().enumerate() {
            let mut m = 1;
            while run_ok(x, m) {
                slot.push(next_id);
                next_id += 1;
                m += 1;
            }
        }
        let mut transitions = vec![vec![None; n]; next_id as usize];
        for x in 0..n {
            transitions[START][x] = ids[x].first().copied();
        }
        for x in 0..n {
            for (run_idx, &state) in ids[x].iter().enumerate() {
                for y in 0..n {
                    let target = if y == x {
                        ids[x].get(run_idx + 1).copied()
                    } else if factor_of[y] == factor_of[x] {
                        None
                    } else {
                        ids[y].first().copied()
                    };
                    transitions[state as usize][y] = target;
                }
            }
        }
        Self::from_transitions(n, transitions)
    }

    fn from_transitions(n_letters: usize, transitions: Vec<Vec<Option<u32>>>) -> Self {
        let n_states = transitions.len();
        Self {
            n_letters,
            transitions,
            counts: RwLock::new(vec![vec![1u128; n_states]]),
        }
    }

    fn step(&self, state: usize, letter: Letter) -> Option<usize> {
        self.transitions[state]
            .get(letter as usize)
            .copied()
            .flatten()
            .map(|s| s as usize)
    }

    fn ensure_counts(&self, n: usize) {
        if self.counts.read().expect("count table poisoned").len() > n {
            return;
        }
        let mut counts = self.counts.write().expect("count table poisoned");
        while counts.len() <= n {
            let prev = counts.last().expect("non-empty").clone();
            let row = self
                .transitions
                .iter()
                .map(|row| {
                    row.iter()
                        .flatten()
                        .fold(0u128, |acc, &t| acc.saturating_add(prev[t as usize]))
                })
                .collect();
            counts.push(row);
        }
    }

    fn count(&self, n: usize, state: usize) -> u128 {
        self.ensure_counts(n);
        self.counts.read().expect("count table poisoned")[n][state]
    }

    /// Number of normal forms of length exactly `n` (saturating).
    pub(crate) fn sphere_size(&self, n: usize) -> u128 {
        self.count(n, START)
    }

    pub(crate) fn ball_size(&self, n: usize) -> u128 {
        (0..=n).fold(0u128, |acc, k| acc.saturating_add(self.sphere_size(k)))
    }

    pub(crate) fn accepts(&self, word: &[Letter]) -> bool {
        let mut state = START;
        for &x in word {
            if x as usize >= self.n_letters {
                return false;
            }
            match self.step(state, x) {
                Some(s) => state = s,
                None => return false,
            }
        }
        true
    }

    /// ShortLex rank of a normal form; the identity has rank 0.
    pub(crate) fn rank(&self, word: &[Letter]) -> Result<u128> {
        let n = word.len();
        let overflow = || Error::Domain(format!("element id of a word of length {n} exceeds 128 bits"));
        let mut rank = 0u128;
        for len in 0..n {
            rank = rank.checked_add(self.sphere_size(len)).ok_or_else(overflow)?;
        }
        let mut state = START;
        for (i, &x) in word.iter().enumerate() {
            let remaining = n - i - 1;
            for smaller in 0..x {
                if let Some(t) = self.step(state, smaller) {
                    rank = rank.checked_add(self.count(remaining, t)).ok_or_else(overflow)?;
                }
            }
            state = self
                .step(state, x)
                .ok_or_else(|| Error::Domain("word is not in normal form".into()))?;
        }
        if self.sphere_size(n) == u128::MAX {
            return Err(overflow());
        }
        Ok(rank)
    }

    /// Inverse of [`rank`](Self::rank).
    pub(crate) fn unrank(&self, mut id: u128) -> Result<Vec<Letter>> {
        let mut n = 0usize;
        loop {
            let size = self.sphere_size(n);
            if size == u128::MAX {
                return Err(Error::Domain("element id out of range".into()));
            }
            if id < size {
                break;
            }
            if size == 0 {
                return Err(Error::Domain("element id exceeds the group order".into()));
            }
            id -= size;
            n += 1;
        }
        self.unrank_in_sphere(n, id)
    }

    fn unrank_in_sphere(&self, n: usize, mut id: u128) -> Result<Vec<Letter>> {
        let mut word = Vec::with_capacity(n);
        let mut state = START;
        for i in 0..n {
            let remaining = n - i - 1;
            let mut chosen = None;
            for x in 0..self.n_letters as Letter {
                if let Some(t) = self.step(state, x) {
                    let c = self.count(remaining, t);
                    if id < c {
                        chosen = Some((x, t));
                        break;
                    }
                    id -= c;
                }
            }
            let (x, t) = chosen.ok_or_else(|| Error::Domain("rank outside sphere".into()))?;
            word.push(x);
            state = t;
        }
        Ok(word)
    }

    /// Uniformly random normal form of length `n`, or `None` if the sphere is empty.
    pub(crate) fn random_of_length<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Option<Vec<Letter>> {
        let size = self.sphere_size(n);
        if size == 0 {
            return None;
        }
        // saturated spheres are sampled by a uniform-per-step walk instead
        if size == u128::MAX {
            let mut word = Vec::with_capacity(n);
            let mut state = START;
            for _ in 0..n {
                let options: Vec<(Letter, usize)> = (0..self.n_letters as Letter)
                    .filter_map(|x| self.step(state, x).map(|t| (x, t)))
                    .collect();
                let (x, t) = options[rng.gen_range(0..options.len())];
                word.push(x);
                state = t;
            }
            return Some(word);
        }
        let id = rng.gen_range(0..size);
        self.unrank_in_sphere(n, id).ok()
    }
}
