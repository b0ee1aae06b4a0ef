//! The copy-phrase task and its session record.

use std::fs;
use std::path::Path;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::{render, Symbol};
use crate::lang::NgramModel;

use super::calibration::validate_config;
use super::{
    apply_commit, clamp_ratio, decide, fuse_lm_prior, next_intent, next_sequence, posterior_update, Decision,
    EvidenceSource, Posterior, SequenceLayout, StimuliSequence, TaskConfig, TaskError,
};

pub const SESSION_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    BudgetExhausted,
}

/// One presented sequence and what followed from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    /// Index of the letter decision this sequence belongs to.
    pub letter: usize,
    /// 1-based count of sequences for this letter, including this one.
    pub sequence: usize,
    pub intent: Symbol,
    /// Belief before this sequence. For the first sequence of a letter this
    /// is the fused language model prior.
    pub prior: Posterior,
    pub stimuli: StimuliSequence,
    /// Ratios after clamping, as used in the update.
    pub ratios: Vec<f64>,
    pub posterior: Posterior,
    pub decision: Decision,
    /// Text after applying the decision.
    pub spelled: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LetterSummary {
    pub intent: Symbol,
    pub committed: Symbol,
    pub sequences: usize,
}

impl LetterSummary {
    pub fn correct(&self) -> bool {
        self.intent == self.committed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub version: u32,
    pub phrase: String,
    pub seed: u64,
    /// Kind of evidence source: `oracle`, `simulated` or `live`.
    pub evidence: String,
    pub language_model: bool,
    pub parameters: TaskConfig,
    pub entries: Vec<SequenceEntry>,
    pub letters: Vec<LetterSummary>,
    pub final_text: String,
    pub outcome: Outcome,
}

impl SessionRecord {
    /// Fraction of committed letters that matched the intent.
    pub fn accuracy(&self) -> f64 {
        if self.letters.is_empty() {
            return 0.0;
        }
        self.letters.iter().filter(|l| l.correct()).count() as f64 / self.letters.len() as f64
    }

    pub fn mean_sequences_per_letter(&self) -> f64 {
        if self.letters.is_empty() {
            return 0.0;
        }
        self.letters.iter().map(|l| l.sequences).sum::<usize>() as f64 / self.letters.len() as f64
    }

    pub fn to_json(&self) -> Result<String, TaskError> {
        serde_json::to_string_pretty(self).map_err(|e| TaskError::Serialization(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), TaskError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, TaskError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| TaskError::Serialization(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| TaskError::Serialization("missing format version".into()))?;
        if version != SESSION_FORMAT_VERSION as u64 {
            return Err(TaskError::UnsupportedVersion(version));
        }
        serde_json::from_str(text).map_err(|e| TaskError::Serialization(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Where the task stands within the current letter.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionState {
    pub phrase: Vec<Symbol>,
    pub spelled: Vec<Symbol>,
    pub posterior: Posterior,
    pub sequences_used: usize,
    pub entries: Vec<SequenceEntry>,
}

impl DecisionState {
    pub fn new(phrase: Vec<Symbol>) -> Self {
        DecisionState {
            phrase,
            spelled: Vec::new(),
            posterior: Posterior::uniform(),
            sequences_used: 0,
            entries: Vec::new(),
        }
    }

    /// Starts a new letter from `prior`.
    pub fn begin_letter(&mut self, prior: Posterior) {
        self.posterior = prior;
        self.sequences_used = 0;
    }
}

fn parse_phrase(phrase: &str) -> Result<Vec<Symbol>, TaskError> {
    let symbols = phrase
        .chars()
        .map(|c| {
            let c = if c == ' ' { '_' } else { c };
            Symbol::from_char(c)
                .filter(|s| !s.is_backspace())
                .ok_or(TaskError::InvalidPhrase(c))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if symbols.is_empty() {
        return Err(TaskError::EmptyPhrase);
    }
    Ok(symbols)
}

/// Commit budget: `max_letters`, or twice the phrase length plus ten when
/// that is zero.
pub fn letter_budget(config: &TaskConfig, phrase_len: usize) -> usize {
    if config.max_letters == 0 {
        2 * phrase_len + 10
    } else {
        config.max_letters
    }
}

/// Spells `phrase` with evidence from `source`. With a language model, each
/// letter starts from its prior given the spelled text; otherwise from the
/// uniform prior. Running out of letter budget ends the session with
/// [`Outcome::BudgetExhausted`].
pub fn run_copy_phrase(
    config: &TaskConfig,
    phrase: &str,
    source: &mut dyn EvidenceSource,
    lm: Option<&NgramModel>,
    seed: u64,
) -> Result<SessionRecord, TaskError> {
    validate_config(config)?;
    let target = parse_phrase(phrase)?;
    let budget = letter_budget(config, target.len());
    let layout = SequenceLayout::from_config(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = DecisionState::new(target.clone());
    let mut letters = Vec::new();
    let mut clock = 0.0;
    let mut outcome = Outcome::Completed;

    while let Some(intent) = next_intent(&state.phrase, &state.spelled) {
        if letters.len() >= budget {
            outcome = Outcome::BudgetExhausted;
            break;
        }
        let lm_prior = lm.map(|m| m.priors(&state.spelled, config.backspace_prior));
        state.begin_letter(fuse_lm_prior(lm_prior.as_ref()));
        loop {
            let start = source.sequence_start(clock);
            let stimuli = StimuliSequence {
                symbols: next_sequence(&state.posterior, config.stim_count, &mut rng),
                onsets: layout.onsets(start),
            };
            let ratios: Vec<f64> = source
                .ratios(&stimuli, intent, &layout, start)?
                .into_iter()
                .map(|r| clamp_ratio(r, config.min_ratio, config.max_ratio))
                .collect();
            clock = start + layout.duration();

            let prior = state.posterior;
            state.posterior = posterior_update(&prior, &stimuli.symbols, &ratios)?;
            state.sequences_used += 1;
            let decision = decide(
                &state.posterior,
                state.sequences_used,
                config.decision_threshold,
                config.max_sequences,
            );
            if let Decision::Commit(s) = decision {
                apply_commit(&mut state.spelled, s);
            }
            debug!(
                "letter {} seq {}: intent {} max {:.4} -> {:?}",
                letters.len(),
                state.sequences_used,
                intent,
                state.posterior.max(),
                decision
            );
            state.entries.push(SequenceEntry {
                letter: letters.len(),
                sequence: state.sequences_used,
                intent,
                prior,
                stimuli,
                ratios,
                posterior: state.posterior,
                decision,
                spelled: render(&state.spelled),
            });
            if let Decision::Commit(s) = decision {
                letters.push(LetterSummary {
                    intent,
                    committed: s,
                    sequences: state.sequences_used,
                });
                info!("committed {} (wanted {}), text {:?}", s, intent, render(&state.spelled));
                break;
            }
        }
    }

    Ok(SessionRecord {
        version: SESSION_FORMAT_VERSION,
        phrase: render(&target),
        seed,
        evidence: source.kind().to_string(),
        language_model: lm.is_some(),
        parameters: config.clone(),
        entries: state.entries,
        letters,
        final_text: render(&state.spelled),
        outcome,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplayReport {
    pub entries: usize,
    pub letters: usize,
}

/// Recomputes every posterior and decision of a session from its logged
/// priors and ratios and checks they match exactly.
pub fn replay_session(record: &SessionRecord) -> Result<ReplayReport, TaskError> {
    let p = &record.parameters;
    let mismatch = |entry: usize, reason: String| Err(TaskError::ReplayMismatch { entry, reason });
    let mut spelled: Vec<Symbol> = Vec::new();
    let mut letters = 0;
    let mut previous: Option<&SequenceEntry> = None;

    for (i, e) in record.entries.iter().enumerate() {
        let continuing = previous.is_some_and(|prev| prev.decision == Decision::Continue);
        let expected_sequence = if continuing { previous.unwrap().sequence + 1 } else { 1 };
        if e.sequence != expected_sequence || e.letter != letters {
            return mismatch(i, format!("out of order (letter {}, sequence {})", e.letter, e.sequence));
        }
        if continuing {
            if e.prior != previous.unwrap().posterior {
                return mismatch(i, "prior is not the previous posterior".into());
            }
        } else if (e.prior.sum() - 1.0).abs() > 1e-9 {
            return mismatch(i, format!("letter prior sums to {}", e.prior.sum()));
        }
        let posterior = posterior_update(&e.prior, &e.stimuli.symbols, &e.ratios)?;
        if posterior != e.posterior {
            return mismatch(i, "posterior differs".into());
        }
        let decision = decide(&posterior, e.sequence, p.decision_threshold, p.max_sequences);
        if decision != e.decision {
            return mismatch(i, format!("decision {decision:?} differs from logged {:?}", e.decision));
        }
        if let Decision::Commit(s) = decision {
            apply_commit(&mut spelled, s);
            letters += 1;
        }
        if render(&spelled) != e.spelled {
            return mismatch(i, "spelled text differs".into());
        }
        previous = Some(e);
    }
    if render(&spelled) != record.final_text {
        return mismatch(record.entries.len(), "final text differs".into());
    }
    if letters != record.letters.len() {
        return mismatch(record.entries.len(), "letter count differs".into());
    }
    Ok(ReplayReport {
        entries: record.entries.len(),
        letters,
    })
}
