//! Decoding constraints: incremental per-beam state plus score masking.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use crate::decode::scorer::EOS;
use crate::decode::{DecodeContext, DecodeError};
use crate::grammar::{self, ConstraintAutomaton};
use crate::scaffold::{Placeholder, StructureTemplate, StructureToken};

/// A decoding constraint. Each beam carries one opaque `u64` state per
/// constraint; `mask` lowers (never raises) candidate scores, setting
/// disallowed candidates to negative infinity.
pub trait Constraint {
    fn initial_state(&self) -> u64;

    /// State after emitting `token`. Never called for the end-of-sequence
    /// marker, which terminates the beam instead.
    fn advance(&self, state: u64, token: &str) -> u64;

    fn mask(
        &self,
        state: u64,
        prefix: &[String],
        scores: &mut BTreeMap<String, f64>,
        ctx: &DecodeContext,
    );
}

const DEAD: u64 = u64::MAX;
const UNREACHABLE: usize = usize::MAX;

/// Masks tokens that leave the structure-grammar acceptor, and end-of-sequence
/// everywhere except accepting states.
///
/// The constraint also looks ahead: a token is masked when the state it leads
/// to cannot reach an accepting state within the remaining length budget, so
/// every surviving beam can still finish.
pub struct GrammarConstraint {
    automaton: &'static ConstraintAutomaton,
    accept_distance: Vec<usize>,
}

impl GrammarConstraint {
    pub fn new(automaton: &'static ConstraintAutomaton) -> Self {
        let n = automaton.state_count();
        let mut accept_distance = vec![UNREACHABLE; n];
        for state in 0..n {
            if automaton.is_accepting(state) {
                accept_distance[state] = 0;
            }
        }
        // Fixpoint relaxation; the automaton is small enough that quadratic
        // passes are immaterial.
        let mut changed = true;
        while changed {
            changed = false;
            for state in 0..n {
                for token in automaton.next_tokens(state) {
                    let next = automaton.step(state, token).expect("listed transition");
                    if accept_distance[next] != UNREACHABLE
                        && accept_distance[next] + 1 < accept_distance[state]
                    {
                        accept_distance[state] = accept_distance[next] + 1;
                        changed = true;
                    }
                }
            }
        }
        Self {
            automaton,
            accept_distance,
        }
    }
}

/// Grammar constraint over the process-wide acceptor.
pub fn grammar_constraint() -> GrammarConstraint {
    GrammarConstraint::new(grammar::automaton())
}

impl Constraint for GrammarConstraint {
    fn initial_state(&self) -> u64 {
        self.automaton.start() as u64
    }

    fn advance(&self, state: u64, token: &str) -> u64 {
        if state == DEAD {
            return DEAD;
        }
        StructureToken::from_str(token)
            .ok()
            .and_then(|t| self.automaton.step(state as usize, t))
            .map(|next| next as u64)
            .unwrap_or(DEAD)
    }

    fn mask(
        &self,
        state: u64,
        prefix: &[String],
        scores: &mut BTreeMap<String, f64>,
        ctx: &DecodeContext,
    ) {
        if state == DEAD {
            for score in scores.values_mut() {
                *score = f64::NEG_INFINITY;
            }
            return;
        }
        let state = state as usize;
        let budget = ctx.max_length().saturating_sub(prefix.len());
        for (token, score) in scores.iter_mut() {
            if !score.is_finite() {
                continue;
            }
            let allowed = if token == EOS {
                self.automaton.is_accepting(state)
            } else {
                budget >= 1
                    && StructureToken::from_str(token)
                        .ok()
                        .and_then(|t| self.automaton.step(state, t))
                        .is_some_and(|next| {
                            self.accept_distance[next] != UNREACHABLE
                                && self.accept_distance[next] <= budget - 1
                        })
            };
            if !allowed {
                *score = f64::NEG_INFINITY;
            }
        }
    }
}

/// Forces stage-C output to alternate placeholder tags and values following a
/// fixed template: position 2k must be the template's k-th tag, odd positions
/// are values (any token), and the sequence ends exactly after the last pair.
pub struct StructureConstraint {
    tags: Vec<Placeholder>,
}

impl StructureConstraint {
    pub fn new(template: &StructureTemplate) -> Self {
        Self {
            tags: template.placeholders().collect(),
        }
    }

    pub fn pair_count(&self) -> usize {
        self.tags.len()
    }
}

impl Constraint for StructureConstraint {
    fn initial_state(&self) -> u64 {
        0
    }

    fn advance(&self, state: u64, _token: &str) -> u64 {
        state + 1
    }

    fn mask(
        &self,
        state: u64,
        prefix: &[String],
        scores: &mut BTreeMap<String, f64>,
        ctx: &DecodeContext,
    ) {
        let position = state as usize;
        let target_len = 2 * self.tags.len();
        // A beam that cannot reach the exact target length within budget has
        // no legal completion.
        if target_len.saturating_sub(position) > ctx.max_length().saturating_sub(prefix.len()) {
            for score in scores.values_mut() {
                *score = f64::NEG_INFINITY;
            }
            return;
        }
        if position >= target_len {
            for (token, score) in scores.iter_mut() {
                if token != EOS {
                    *score = f64::NEG_INFINITY;
                }
            }
        } else if position % 2 == 0 {
            let required = self.tags[position / 2].as_str();
            for (token, score) in scores.iter_mut() {
                if token != required {
                    *score = f64::NEG_INFINITY;
                }
            }
        } else if let Some(score) = scores.get_mut(EOS) {
            *score = f64::NEG_INFINITY;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubgraphMode {
    /// Mask relations outside the allowed set, unless no candidate is inside
    /// it (then the constraint stands down rather than killing the beam).
    Hard,
    /// Penalize relations outside the allowed set by the given amount,
    /// prioritizing in-set relations without forbidding anything.
    Bonus(f64),
}

/// Restricts the relation value emitted right after a `[rel]` tag to a set of
/// allowed relation labels. Labels match on their local name: the part after
/// the last `:`, `/`, or `#`, or the whole label when it has none.
pub struct SubgraphConstraint {
    allowed_locals: BTreeSet<String>,
    mode: SubgraphMode,
}

fn local_name(label: &str) -> &str {
    label.rsplit([':', '/', '#']).next().unwrap_or(label)
}

impl SubgraphConstraint {
    pub fn new(
        allowed: impl IntoIterator<Item = String>,
        mode: SubgraphMode,
    ) -> Result<Self, DecodeError> {
        if let SubgraphMode::Bonus(beta) = mode {
            if !(beta >= 0.0) {
                return Err(DecodeError::InvalidConfig(
                    "subgraph priority weight must be non-negative".into(),
                ));
            }
        }
        Ok(Self {
            allowed_locals: allowed
                .into_iter()
                .map(|label| local_name(&label).to_string())
                .collect(),
            mode,
        })
    }

    fn in_set(&self, candidate: &str) -> bool {
        self.allowed_locals.contains(local_name(candidate))
    }
}

impl Constraint for SubgraphConstraint {
    fn initial_state(&self) -> u64 {
        0
    }

    fn advance(&self, _state: u64, token: &str) -> u64 {
        (token == Placeholder::Rel.as_str()) as u64
    }

    fn mask(
        &self,
        state: u64,
        _prefix: &[String],
        scores: &mut BTreeMap<String, f64>,
        _ctx: &DecodeContext,
    ) {
        if state != 1 || self.allowed_locals.is_empty() {
            return;
        }
        match self.mode {
            SubgraphMode::Hard => {
                let any_inside = scores
                    .iter()
                    .any(|(t, s)| s.is_finite() && t != EOS && self.in_set(t));
                if !any_inside {
                    return;
                }
                for (token, score) in scores.iter_mut() {
                    if score.is_finite() && token != EOS && !self.in_set(token) {
                        *score = f64::NEG_INFINITY;
                    }
                }
            }
            SubgraphMode::Bonus(beta) => {
                for (token, score) in scores.iter_mut() {
                    if score.is_finite() && token != EOS && !self.in_set(token) {
                        *score -= beta;
                    }
                }
            }
        }
    }
}
