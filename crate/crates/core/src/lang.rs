//! Character n-gram language model supplying symbol priors.
//!
//! Text is normalised to the speller alphabet: letters are uppercased,
//! everything else becomes `_`, and runs of `_` collapse to one. Training
//! text is prefixed with `_` so that the first letter is counted after a
//! word boundary, and histories are treated the same way.
//!
//! For a history `h` the model uses the longest suffix of `_ + h` (at most
//! `order − 1` symbols) that occurred as a context in training, and
//! estimates `P(c | ctx) = (count(ctx c) + α) / (count(ctx) + 27α)` over the
//! 27 text symbols. Backspace gets a fixed prior and the text symbols share
//! the rest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alphabet::{Symbol, ALPHABET_SIZE, SPACE, TEXT_SYMBOLS};

pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const BACKSPACE_PRIOR: f64 = 0.01;
const FORMAT: &str = "rsvp-ngram";
const FORMAT_VERSION: u32 = 1;

/// Small English text used when no corpus is configured.
pub const ENGLISH_CORPUS: &str = include_str!("../assets/english_corpus.txt");

#[derive(Debug, Error)]
pub enum LangError {
    #[error("corpus contains no letters")]
    EmptyCorpus,
    #[error("'{0}' is not in the alphabet")]
    UnknownSymbol(char),
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("smoothing constant must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("malformed model file: {0}")]
    MalformedModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Maps text onto the alphabet: uppercase letters, `_` for anything else,
/// no repeated `_`.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        let c = if c.is_ascii_alphabetic() { c.to_ascii_uppercase() } else { SPACE };
        if c == SPACE && out.ends_with(SPACE) {
            continue;
        }
        out.push(c);
    }
    out
}

fn text_index(c: char) -> usize {
    // Only called on normalised text, which holds A-Z and '_'.
    Symbol::from_char(c).expect("normalised text").index()
}

/// Immutable count tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NgramModel {
    format: String,
    version: u32,
    order: usize,
    alpha: f64,
    /// Context string → counts of the following text symbol.
    counts: BTreeMap<String, Vec<u64>>,
}

impl NgramModel {
    pub fn from_corpus(text: &str, order: usize, alpha: f64) -> Result<Self, LangError> {
        if order == 0 {
            return Err(LangError::InvalidOrder);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(LangError::InvalidAlpha(alpha));
        }
        let body = normalize(text);
        if !body.chars().any(|c| c != SPACE) {
            return Err(LangError::EmptyCorpus);
        }
        let mut padded = String::from(SPACE);
        padded.push_str(body.trim_start_matches(SPACE));
        let chars: Vec<char> = padded.chars().collect();

        let mut counts: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        for i in 1..chars.len() {
            let next = text_index(chars[i]);
            for k in 0..order.min(i + 1) {
                let ctx: String = chars[i - k..i].iter().collect();
                counts.entry(ctx).or_insert_with(|| vec![0; TEXT_SYMBOLS])[next] += 1;
            }
        }
        Ok(NgramModel {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            order,
            alpha,
            counts,
        })
    }

    pub fn from_corpus_file(path: &Path, order: usize, alpha: f64) -> Result<Self, LangError> {
        Self::from_corpus(&fs::read_to_string(path)?, order, alpha)
    }

    pub fn english(order: usize, alpha: f64) -> Result<Self, LangError> {
        Self::from_corpus(ENGLISH_CORPUS, order, alpha)
    }

    pub fn load(path: &Path) -> Result<Self, LangError> {
        let model: NgramModel =
            serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| LangError::MalformedModel(e.to_string()))?;
        if model.format != FORMAT || model.version != FORMAT_VERSION {
            return Err(LangError::MalformedModel(format!(
                "expected {FORMAT} version {FORMAT_VERSION}, found {} version {}",
                model.format, model.version
            )));
        }
        if model.order == 0 || !(model.alpha > 0.0) || model.counts.values().any(|v| v.len() != TEXT_SYMBOLS) {
            return Err(LangError::MalformedModel("inconsistent tables".into()));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("count tables serialize")
    }

    pub fn save(&self, path: &Path) -> Result<(), LangError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Counts of the symbols following `context`, if it was seen.
    pub fn counts(&self, context: &str) -> Option<&[u64]> {
        self.counts.get(context).map(Vec::as_slice)
    }

    /// The context actually used for `history` after backing off.
    pub fn context_for(&self, history: &[Symbol]) -> String {
        let mut text = String::from(SPACE);
        for s in history {
            let c = s.as_char();
            if !(c == SPACE && text.ends_with(SPACE)) {
                text.push(c);
            }
        }
        let chars: Vec<char> = text.chars().collect();
        let longest = (self.order - 1).min(chars.len());
        (0..=longest)
            .rev()
            .map(|k| chars[chars.len() - k..].iter().collect::<String>())
            .find(|ctx| self.counts.get(ctx).is_some_and(|c| c.iter().any(|&n| n > 0)))
            .unwrap_or_default()
    }

    /// Priors indexed by symbol, backspace included.
    pub fn priors(&self, history: &[Symbol], backspace_prior: f64) -> [f64; ALPHABET_SIZE] {
        let ctx = self.context_for(history);
        let zero = vec![0; TEXT_SYMBOLS];
        let counts = self.counts.get(&ctx).unwrap_or(&zero);
        let total: u64 = counts.iter().sum();
        let denom = total as f64 + TEXT_SYMBOLS as f64 * self.alpha;
        let mut out = [0.0; ALPHABET_SIZE];
        for (i, &n) in counts.iter().enumerate() {
            out[i] = (1.0 - backspace_prior) * (n as f64 + self.alpha) / denom;
        }
        out[Symbol::BACKSPACE.index()] = backspace_prior;
        out
    }
}

/// Symbols with their probabilities, most likely first; ties keep
/// alphabet order.
pub fn rank(priors: &[f64; ALPHABET_SIZE]) -> Vec<(Symbol, f64)> {
    let mut ranked: Vec<(Symbol, f64)> = priors
        .iter()
        .enumerate()
        .map(|(i, &p)| (Symbol::from_index(i), p))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// A model plus the history typed so far.
#[derive(Clone, Debug)]
pub struct LmState {
    model: Arc<NgramModel>,
    history: Vec<Symbol>,
    backspace_prior: f64,
}

impl LmState {
    pub fn new(model: Arc<NgramModel>) -> Self {
        LmState {
            model,
            history: Vec::new(),
            backspace_prior: BACKSPACE_PRIOR,
        }
    }

    /// Builds counts from corpus text.
    pub fn init(corpus: &str, order: usize, alpha: f64) -> Result<Self, LangError> {
        Ok(Self::new(Arc::new(NgramModel::from_corpus(corpus, order, alpha)?)))
    }

    pub fn with_backspace_prior(mut self, p: f64) -> Self {
        self.backspace_prior = p.clamp(0.0, 1.0);
        self
    }

    pub fn model(&self) -> &NgramModel {
        &self.model
    }

    pub fn history(&self) -> &[Symbol] {
        &self.history
    }

    /// Priors indexed by symbol.
    pub fn prior_vector(&self) -> [f64; ALPHABET_SIZE] {
        self.model.priors(&self.history, self.backspace_prior)
    }

    pub fn recent_priors(&self) -> Vec<(Symbol, f64)> {
        rank(&self.prior_vector())
    }

    /// Appends typed symbols (a backspace removes the last one instead) and
    /// returns the priors for what comes next.
    pub fn state_update(&mut self, typed: &[Symbol]) -> Vec<(Symbol, f64)> {
        for &s in typed {
            if s.is_backspace() {
                self.history.pop();
            } else {
                self.history.push(s);
            }
        }
        self.recent_priors()
    }

    /// Like [`LmState::state_update`] for characters; nothing is applied if
    /// any character is outside the alphabet.
    pub fn state_update_str(&mut self, typed: &str) -> Result<Vec<(Symbol, f64)>, LangError> {
        let symbols = typed
            .chars()
            .map(|c| Symbol::from_char(c).ok_or(LangError::UnknownSymbol(c)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.state_update(&symbols))
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }
}
