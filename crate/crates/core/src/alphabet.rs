//! The fixed symbol set shared by the language model, the posterior and the
//! stimulus sequencer.
//!
//! Index order is part of the on-disk format (session records and model files
//! store per-symbol vectors), so it must never change.

use std::fmt;

/// Number of symbols in the speller alphabet.
pub const ALPHABET_SIZE: usize = 28;

/// Word separator. Rendered as an underscore so that every symbol is a
/// single visible character.
pub const SPACE: char = '_';

/// Deletes the most recently spelled symbol when committed.
pub const BACKSPACE: char = '<';

/// Number of symbols that can appear in text (everything except backspace).
pub const TEXT_SYMBOLS: usize = ALPHABET_SIZE - 1;

const SYMBOLS: [char; ALPHABET_SIZE] = [
    'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J', 'K', 'L', 'M', 'N', 'O', 'P', 'Q', 'R',
    'S', 'T', 'U', 'V', 'W', 'X', 'Y', 'Z', SPACE, BACKSPACE,
];

/// A symbol of the speller alphabet, stored as its index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(u8);

impl Symbol {
    pub const SPACE: Symbol = Symbol(26);
    pub const BACKSPACE: Symbol = Symbol(27);

    /// Looks up a character; lowercase letters are accepted and folded.
    pub fn from_char(c: char) -> Option<Symbol> {
        let c = c.to_ascii_uppercase();
        SYMBOLS.iter().position(|&s| s == c).map(|i| Symbol(i as u8))
    }

    /// Panics if `index >= ALPHABET_SIZE`.
    pub fn from_index(index: usize) -> Symbol {
        assert!(index < ALPHABET_SIZE, "symbol index {index} out of range");
        Symbol(index as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn as_char(self) -> char {
        SYMBOLS[self.0 as usize]
    }

    pub fn is_backspace(self) -> bool {
        self == Symbol::BACKSPACE
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl serde::Serialize for Symbol {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_char(self.as_char())
    }
}

impl<'de> serde::Deserialize<'de> for Symbol {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let c = char::deserialize(d)?;
        Symbol::from_char(c)
            .ok_or_else(|| serde::de::Error::custom(format!("'{c}' is not in the alphabet")))
    }
}

/// All symbols in index order.
pub fn symbols() -> impl ExactSizeIterator<Item = Symbol> {
    (0..ALPHABET_SIZE).map(Symbol::from_index)
}

/// The alphabet as characters, in index order.
pub fn chars() -> &'static [char; ALPHABET_SIZE] {
    &SYMBOLS
}

/// Converts a string into symbols, failing on the first character outside
/// the alphabet (reported back to the caller).
pub fn parse_symbols(text: &str) -> Result<Vec<Symbol>, char> {
    text.chars()
        .map(|c| Symbol::from_char(c).ok_or(c))
        .collect()
}

/// Renders symbols as a string.
pub fn render(symbols: &[Symbol]) -> String {
    symbols.iter().map(|s| s.as_char()).collect()
}
