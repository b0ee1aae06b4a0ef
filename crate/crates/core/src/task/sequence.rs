//! Choosing what to show next.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::{Symbol, ALPHABET_SIZE};

use super::Posterior;

/// Symbols shown in one sequence and their onset times in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StimuliSequence {
    pub symbols: Vec<Symbol>,
    pub onsets: Vec<f64>,
}

impl StimuliSequence {
    /// Onsets every `isi` seconds from `first_onset`.
    pub fn timed(symbols: Vec<Symbol>, first_onset: f64, isi: f64) -> Self {
        let onsets = (0..symbols.len()).map(|i| first_onset + i as f64 * isi).collect();
        StimuliSequence { symbols, onsets }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn position(&self, s: Symbol) -> Option<usize> {
        self.symbols.iter().position(|&x| x == s)
    }
}

/// The `stim_count` most probable symbols (ties in alphabet order), in a
/// shuffled order. `stim_count` is capped at the alphabet size.
pub fn next_sequence<R: Rng + ?Sized>(posterior: &Posterior, stim_count: usize, rng: &mut R) -> Vec<Symbol> {
    let mut order: Vec<usize> = (0..ALPHABET_SIZE).collect();
    // Stable sort keeps alphabet order among equal probabilities.
    order.sort_by(|&a, &b| posterior.0[b].total_cmp(&posterior.0[a]));
    let mut chosen: Vec<Symbol> = order
        .into_iter()
        .take(stim_count.min(ALPHABET_SIZE))
        .map(Symbol::from_index)
        .collect();
    chosen.shuffle(rng);
    chosen
}
