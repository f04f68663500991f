//! Scorers: pluggable next-token distributions over a closed vocabulary.

use std::collections::{BTreeMap, BTreeSet};

use crate::decode::{DecodeContext, DecodeError};

/// End-of-sequence marker. Always part of a scorer's vocabulary; never part
/// of a returned sequence.
pub const EOS: &str = "</s>";

/// Begin-of-sequence padding for n-gram contexts. Internal: never scored.
pub(crate) const BOS: &str = "<s>";

/// A next-token distribution. The returned log-probabilities cover the whole
/// vocabulary and sum (in probability space) to 1 before any masking.
pub trait Scorer {
    fn score_next(&self, prefix: &[String], ctx: &DecodeContext) -> BTreeMap<String, f64>;
}

/// Assigns every vocabulary token the same probability regardless of prefix.
pub struct UniformScorer {
    vocab: BTreeSet<String>,
}

impl UniformScorer {
    pub fn new(vocab: BTreeSet<String>) -> Result<Self, DecodeError> {
        if !vocab.contains(EOS) {
            return Err(DecodeError::InvalidConfig(format!(
                "vocabulary must contain the end-of-sequence token {EOS:?}"
            )));
        }
        Ok(Self { vocab })
    }

    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }
}

impl Scorer for UniformScorer {
    fn score_next(&self, _prefix: &[String], _ctx: &DecodeContext) -> BTreeMap<String, f64> {
        let log_p = -(self.vocab.len() as f64).ln();
        self.vocab.iter().map(|t| (t.clone(), log_p)).collect()
    }
}

/// Laplace-smoothed n-gram model over token sequences.
///
/// Counts are taken over sequences padded with `order - 1` begin markers and
/// one end marker, so every context total equals the sum of its continuation
/// counts and the smoothed conditionals sum to exactly 1 over the vocabulary.
/// A context never seen in training falls back to the uniform distribution.
pub struct NgramScorer {
    order: usize,
    alpha: f64,
    vocab: BTreeSet<String>,
    counts: BTreeMap<Vec<String>, BTreeMap<String, u64>>,
    totals: BTreeMap<Vec<String>, u64>,
}

impl NgramScorer {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    fn context_of(&self, prefix: &[String]) -> Vec<String> {
        let len = self.order - 1;
        let mut context = Vec::with_capacity(len);
        if prefix.len() < len {
            context.extend(std::iter::repeat(BOS.to_string()).take(len - prefix.len()));
            context.extend(prefix.iter().cloned());
        } else {
            context.extend(prefix[prefix.len() - len..].iter().cloned());
        }
        context
    }
}

impl Scorer for NgramScorer {
    fn score_next(&self, prefix: &[String], _ctx: &DecodeContext) -> BTreeMap<String, f64> {
        let context = self.context_of(prefix);
        let empty = BTreeMap::new();
        let counts = self.counts.get(&context).unwrap_or(&empty);
        let total = self.totals.get(&context).copied().unwrap_or(0) as f64;
        let denominator = total + self.alpha * self.vocab.len() as f64;
        self.vocab
            .iter()
            .map(|token| {
                let count = counts.get(token).copied().unwrap_or(0) as f64;
                (token.clone(), ((count + self.alpha) / denominator).ln())
            })
            .collect()
    }
}

/// Builds an [`NgramScorer`] from training sequences. The vocabulary is the
/// set of corpus tokens plus the end-of-sequence marker.
pub fn train_ngram(
    corpus: &[Vec<String>],
    order: usize,
    alpha: f64,
) -> Result<NgramScorer, DecodeError> {
    if corpus.is_empty() {
        return Err(DecodeError::InvalidConfig(
            "n-gram training corpus is empty".into(),
        ));
    }
    if order < 1 {
        return Err(DecodeError::InvalidConfig(
            "n-gram order must be at least 1".into(),
        ));
    }
    if !(alpha > 0.0) {
        return Err(DecodeError::InvalidConfig(
            "smoothing constant must be positive".into(),
        ));
    }
    let mut vocab: BTreeSet<String> = corpus.iter().flatten().cloned().collect();
    vocab.insert(EOS.to_string());
    let context_len = order - 1;
    let mut counts: BTreeMap<Vec<String>, BTreeMap<String, u64>> = BTreeMap::new();
    let mut totals: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for sequence in corpus {
        let mut padded: Vec<String> = Vec::with_capacity(sequence.len() + context_len + 1);
        padded.extend(std::iter::repeat(BOS.to_string()).take(context_len));
        padded.extend(sequence.iter().cloned());
        padded.push(EOS.to_string());
        for i in context_len..padded.len() {
            let context = padded[i - context_len..i].to_vec();
            *counts
                .entry(context.clone())
                .or_default()
                .entry(padded[i].clone())
                .or_insert(0) += 1;
            *totals.entry(context).or_insert(0) += 1;
        }
    }
    Ok(NgramScorer {
        order,
        alpha,
        vocab,
        counts,
        totals,
    })
}
