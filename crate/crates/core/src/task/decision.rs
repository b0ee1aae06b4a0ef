//! Stopping rule and copy-phrase bookkeeping.

use serde::{Deserialize, Serialize};

use crate::alphabet::Symbol;

use super::Posterior;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "symbol")]
pub enum Decision {
    Continue,
    Commit(Symbol),
}

/// Commits the most probable symbol once it reaches `threshold`, or when
/// `sequences_used` reaches `max_sequences`.
pub fn decide(posterior: &Posterior, sequences_used: usize, threshold: f64, max_sequences: usize) -> Decision {
    if posterior.max() >= threshold || sequences_used >= max_sequences {
        Decision::Commit(posterior.argmax())
    } else {
        Decision::Continue
    }
}

/// Applies a committed symbol to the spelled text.
pub fn apply_commit(spelled: &mut Vec<Symbol>, s: Symbol) {
    if s.is_backspace() {
        spelled.pop();
    } else {
        spelled.push(s);
    }
}

/// What a cooperative user wants next: erase until the text is a prefix of
/// the phrase, then the next phrase symbol. `None` once the phrase is done.
pub fn next_intent(phrase: &[Symbol], spelled: &[Symbol]) -> Option<Symbol> {
    if spelled.len() > phrase.len() || phrase[..spelled.len()] != *spelled {
        return Some(Symbol::BACKSPACE);
    }
    phrase.get(spelled.len()).copied()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{parse_symbols, ALPHABET_SIZE};

    fn peaked(max: f64) -> Posterior {
        let mut w = [(1.0 - max) / (ALPHABET_SIZE - 1) as f64; ALPHABET_SIZE];
        w[7] = max;
        Posterior(w)
    }

    #[test]
    fn stopping_rule() {
        let h = Symbol::from_char('H').unwrap();
        assert_eq!(decide(&peaked(0.85), 1, 0.8, 10), Decision::Commit(h));
        assert_eq!(decide(&peaked(0.5), 3, 0.8, 10), Decision::Continue);
        assert_eq!(decide(&peaked(0.2), 10, 0.8, 10), Decision::Commit(h));
    }

    #[test]
    fn intents_follow_copy_phrase_discipline() {
        let phrase = parse_symbols("HI").unwrap();
        let mut spelled = Vec::new();
        assert_eq!(next_intent(&phrase, &spelled), Some(phrase[0]));
        apply_commit(&mut spelled, Symbol::from_char('X').unwrap());
        assert_eq!(next_intent(&phrase, &spelled), Some(Symbol::BACKSPACE));
        apply_commit(&mut spelled, Symbol::BACKSPACE);
        assert!(spelled.is_empty());
        apply_commit(&mut spelled, phrase[0]);
        apply_commit(&mut spelled, phrase[1]);
        assert_eq!(next_intent(&phrase, &spelled), None);
        // Backspace on empty text is a no-op.
        let mut empty = Vec::new();
        apply_commit(&mut empty, Symbol::BACKSPACE);
        assert!(empty.is_empty());
    }
}
