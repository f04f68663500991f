//! Constrained beam-search decoding for the two generation stages.
//!
//! A decode runs a [`Scorer`] step by step, letting every [`Constraint`]
//! lower candidate scores (to negative infinity to forbid) before beam
//! pruning. Finished sequences are banked the moment end-of-sequence is
//! chosen, outside the alive beams, so a wide beam loses nothing.

mod constraint;
mod scorer;

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::ontology::OntologySnapshot;
use crate::scaffold::{
    merge, ContentAssignment, Keyword, Placeholder, ScaffoldError, StructureTemplate,
    StructureToken,
};
use crate::sparql::CanonicalQuery;
use crate::Stage;

pub use constraint::{
    grammar_constraint, Constraint, GrammarConstraint, StructureConstraint, SubgraphConstraint,
    SubgraphMode,
};
pub use scorer::{train_ngram, NgramScorer, Scorer, UniformScorer, EOS};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("every beam was eliminated at step {step} with nothing finished")]
    AllBeamsDead { step: usize },
    #[error("invalid decode configuration: {0}")]
    InvalidConfig(String),
}

/// Everything a scorer and the constraints may consult during one decode.
#[derive(Debug, Clone)]
pub struct DecodeContext {
    stage: Stage,
    expected_structure: Option<StructureTemplate>,
    allowed_relations: Option<BTreeSet<String>>,
    beam_size: usize,
    max_length: usize,
}

impl DecodeContext {
    fn validate_sizes(beam_size: usize, max_length: usize) -> Result<(), DecodeError> {
        if beam_size < 1 {
            return Err(DecodeError::InvalidConfig(
                "beam size must be at least 1".into(),
            ));
        }
        if max_length < 1 {
            return Err(DecodeError::InvalidConfig(
                "maximum length must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Context for structure generation.
    pub fn stage_s(beam_size: usize, max_length: usize) -> Result<Self, DecodeError> {
        Self::validate_sizes(beam_size, max_length)?;
        Ok(Self {
            stage: Stage::Structure,
            expected_structure: None,
            allowed_relations: None,
            beam_size,
            max_length,
        })
    }

    /// Context for content generation against a fixed structure.
    pub fn stage_c(
        structure: StructureTemplate,
        beam_size: usize,
        max_length: usize,
    ) -> Result<Self, DecodeError> {
        Self::validate_sizes(beam_size, max_length)?;
        Ok(Self {
            stage: Stage::Content,
            expected_structure: Some(structure),
            allowed_relations: None,
            beam_size,
            max_length,
        })
    }

    pub fn with_allowed_relations(mut self, relations: BTreeSet<String>) -> Self {
        self.allowed_relations = Some(relations);
        self
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn expected_structure(&self) -> Option<&StructureTemplate> {
        self.expected_structure.as_ref()
    }

    pub fn allowed_relations(&self) -> Option<&BTreeSet<String>> {
        self.allowed_relations.as_ref()
    }

    pub fn beam_size(&self) -> usize {
        self.beam_size
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }
}

/// One finished decode result. `tokens` never contains the end-of-sequence
/// marker; `log_prob` is the raw sum of per-token log-probabilities including
/// the final end-of-sequence step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodedSequence {
    pub tokens: Vec<String>,
    pub log_prob: f64,
}

/// The stage-S decoding vocabulary: every structure keyword and placeholder
/// plus the end-of-sequence marker.
pub fn stage_s_vocabulary() -> BTreeSet<String> {
    let mut vocab: BTreeSet<String> = Keyword::ALL
        .iter()
        .map(|k| k.as_str().to_string())
        .collect();
    vocab.extend(Placeholder::ALL.iter().map(|p| p.as_str().to_string()));
    vocab.insert(EOS.to_string());
    vocab
}

/// The stage-C decoding vocabulary: the six placeholder tags, every ontology
/// label, canonical variables var0..var9, any extra caller-supplied value
/// tokens, and the end-of-sequence marker.
pub fn stage_c_vocabulary(
    ontology: &OntologySnapshot,
    extras: impl IntoIterator<Item = String>,
) -> BTreeSet<String> {
    let mut vocab: BTreeSet<String> = Placeholder::ALL
        .iter()
        .map(|p| p.as_str().to_string())
        .collect();
    vocab.extend(ontology.all_labels().map(str::to_string));
    vocab.extend((0..10).map(|i| format!("var{i}")));
    vocab.extend(extras);
    vocab.insert(EOS.to_string());
    vocab
}

struct Beam {
    tokens: Vec<String>,
    score: f64,
    states: Vec<u64>,
}

/// Beam search under a scorer and a constraint stack.
///
/// Per step, every alive beam is expanded over the scorer's distribution,
/// constraints mask in the given order, and the best `beam_size` unfinished
/// expansions survive (score descending, then full token sequence ascending
/// for determinism). Choosing end-of-sequence banks a finished sequence
/// without occupying a beam slot. Returns up to `beam_size` finished
/// sequences, best first.
pub fn beam_search(
    scorer: &dyn Scorer,
    constraints: &[&dyn Constraint],
    ctx: &DecodeContext,
) -> Result<Vec<DecodedSequence>, DecodeError> {
    let beam_size = ctx.beam_size();
    let max_length = ctx.max_length();
    let mut alive = vec![Beam {
        tokens: Vec::new(),
        score: 0.0,
        states: constraints.iter().map(|c| c.initial_state()).collect(),
    }];
    let mut finished: Vec<DecodedSequence> = Vec::new();

    for step in 0..=max_length {
        if alive.is_empty() {
            break;
        }
        let mut expansions: Vec<(usize, String, f64)> = Vec::new();
        for (index, beam) in alive.iter().enumerate() {
            let mut scores = scorer.score_next(&beam.tokens, ctx);
            if beam.tokens.len() >= max_length {
                scores.retain(|token, _| token == EOS);
            }
            for (ci, constraint) in constraints.iter().enumerate() {
                constraint.mask(beam.states[ci], &beam.tokens, &mut scores, ctx);
            }
            for (token, log_p) in scores {
                if log_p.is_finite() {
                    expansions.push((index, token, beam.score + log_p));
                }
            }
        }
        if expansions.is_empty() {
            if finished.is_empty() {
                return Err(DecodeError::AllBeamsDead { step });
            }
            break;
        }
        expansions.sort_by(|a, b| {
            b.2.total_cmp(&a.2).then_with(|| {
                (alive[a.0].tokens.as_slice(), a.1.as_str())
                    .cmp(&(alive[b.0].tokens.as_slice(), b.1.as_str()))
            })
        });
        let mut next_alive: Vec<Beam> = Vec::with_capacity(beam_size);
        for (index, token, score) in expansions {
            if token == EOS {
                finished.push(DecodedSequence {
                    tokens: alive[index].tokens.clone(),
                    log_prob: score,
                });
            } else if next_alive.len() < beam_size {
                let source = &alive[index];
                let states = constraints
                    .iter()
                    .enumerate()
                    .map(|(ci, c)| c.advance(source.states[ci], &token))
                    .collect();
                let mut tokens = source.tokens.clone();
                tokens.push(token);
                next_alive.push(Beam {
                    tokens,
                    score,
                    states,
                });
            }
        }
        alive = next_alive;
    }

    finished.sort_by(|a, b| {
        b.log_prob
            .total_cmp(&a.log_prob)
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    finished.truncate(beam_size);
    Ok(finished)
}

#[derive(Debug, Error)]
pub enum TwoStageError {
    #[error("structure stage failed: {0}")]
    StructureStage(DecodeError),
    #[error("content stage failed: {0}")]
    ContentStage(DecodeError),
    #[error("structure stage produced no finished sequence")]
    NoStructure,
    #[error("content stage produced no finished sequence")]
    NoContent,
    #[error(transparent)]
    Scaffold(#[from] ScaffoldError),
}

/// Inputs of a full two-stage decode.
pub struct TwoStageConfig<'a> {
    pub structure_scorer: &'a dyn Scorer,
    pub content_scorer: &'a dyn Scorer,
    pub beam_size: usize,
    pub structure_max_length: usize,
    /// Relation labels from a retrieved subgraph; absent means unconstrained.
    pub allowed_relations: Option<BTreeSet<String>>,
    pub subgraph_mode: SubgraphMode,
}

/// Everything a two-stage decode produced, including the per-stage beams.
#[derive(Debug)]
pub struct TwoStageOutcome {
    pub structure_beams: Vec<DecodedSequence>,
    pub structure: StructureTemplate,
    pub content_beams: Vec<DecodedSequence>,
    pub content: ContentAssignment,
    pub query: CanonicalQuery,
}

/// Runs grammar-constrained structure decoding, takes the best structure,
/// runs structure-guided (and optionally subgraph-constrained) content
/// decoding against it, and merges the winning pair into a query.
pub fn two_stage(config: &TwoStageConfig) -> Result<TwoStageOutcome, TwoStageError> {
    let ctx_s = DecodeContext::stage_s(config.beam_size, config.structure_max_length)
        .map_err(TwoStageError::StructureStage)?;
    let grammar = grammar_constraint();
    let structure_beams = beam_search(config.structure_scorer, &[&grammar], &ctx_s)
        .map_err(TwoStageError::StructureStage)?;
    let best = structure_beams.first().ok_or(TwoStageError::NoStructure)?;
    let tokens = best
        .tokens
        .iter()
        .map(|t| t.parse::<StructureToken>())
        .collect::<Result<Vec<_>, _>>()?;
    let structure = StructureTemplate::new(tokens)?;

    let pair_count = structure.placeholders().count();
    let mut ctx_c = DecodeContext::stage_c(structure.clone(), config.beam_size, 2 * pair_count)
        .map_err(TwoStageError::ContentStage)?;
    if let Some(relations) = &config.allowed_relations {
        ctx_c = ctx_c.with_allowed_relations(relations.clone());
    }
    let structure_guide = StructureConstraint::new(&structure);
    let subgraph = match &config.allowed_relations {
        Some(relations) => Some(
            SubgraphConstraint::new(relations.iter().cloned(), config.subgraph_mode)
                .map_err(TwoStageError::ContentStage)?,
        ),
        None => None,
    };
    let mut constraints: Vec<&dyn Constraint> = vec![&structure_guide];
    if let Some(c) = subgraph.as_ref() {
        constraints.push(c);
    }
    let content_beams = beam_search(config.content_scorer, &constraints, &ctx_c)
        .map_err(TwoStageError::ContentStage)?;
    let best = content_beams.first().ok_or(TwoStageError::NoContent)?;

    let mut pairs = Vec::with_capacity(pair_count);
    for pair in best.tokens.chunks(2) {
        let tag: Placeholder = pair[0].parse()?;
        pairs.push((tag, pair[1].clone()));
    }
    let content = ContentAssignment::new(pairs)?;
    let query = merge(&structure, &content)?;
    Ok(TwoStageOutcome {
        structure_beams,
        structure,
        content_beams,
        content,
        query,
    })
}
