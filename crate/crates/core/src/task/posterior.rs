//! Belief over the user's intended symbol.

use serde::{Deserialize, Serialize};

use crate::alphabet::{Symbol, ALPHABET_SIZE};

use super::TaskError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Posterior(pub [f64; ALPHABET_SIZE]);

impl Posterior {
    pub fn uniform() -> Self {
        Posterior([1.0 / ALPHABET_SIZE as f64; ALPHABET_SIZE])
    }

    /// Scales non-negative weights to sum to one. All-zero weights give the
    /// uniform distribution.
    pub fn normalized(weights: [f64; ALPHABET_SIZE]) -> Self {
        let total: f64 = weights.iter().sum();
        if total > 0.0 && total.is_finite() {
            Posterior(weights.map(|w| w / total))
        } else {
            Self::uniform()
        }
    }

    pub fn get(&self, s: Symbol) -> f64 {
        self.0[s.index()]
    }

    /// Most probable symbol; ties go to the earlier symbol.
    pub fn argmax(&self) -> Symbol {
        let mut best = 0;
        for i in 1..ALPHABET_SIZE {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Symbol::from_index(best)
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax().index()]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Multiplies the prior of every presented symbol by its likelihood ratio,
/// leaves the rest alone and renormalizes.
pub fn posterior_update(prior: &Posterior, presented: &[Symbol], ratios: &[f64]) -> Result<Posterior, TaskError> {
    if presented.len() != ratios.len() {
        return Err(TaskError::RatioCount {
            presented: presented.len(),
            ratios: ratios.len(),
        });
    }
    let mut w = prior.0;
    for (s, &r) in presented.iter().zip(ratios) {
        if !(r > 0.0 && r.is_finite()) {
            return Err(TaskError::NonPositiveRatio(r));
        }
        w[s.index()] *= r;
    }
    Ok(Posterior::normalized(w))
}

/// Clips a ratio into `[lo, hi]`; NaN counts as no evidence.
pub fn clamp_ratio(r: f64, lo: f64, hi: f64) -> f64 {
    if r.is_nan() {
        1.0
    } else {
        r.clamp(lo, hi)
    }
}

/// Prior for the next letter: the language model's distribution, or uniform
/// when there is none.
pub fn fuse_lm_prior(lm_priors: Option<&[f64; ALPHABET_SIZE]>) -> Posterior {
    match lm_priors {
        Some(p) => Posterior::normalized(*p),
        None => Posterior::uniform(),
    }
}
