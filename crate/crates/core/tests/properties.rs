//! Randomized invariants over the pipeline: structure fills round-trip
//! through canonicalization, the acceptor agrees with the production rules on
//! arbitrary token noise, constraint masks match their stated semantics
//! exactly, scorers stay normalized, and retrieval behaves monotonically in
//! its parameters.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use common::{accept_distances, data_path, ebnf_accepts, fsa_accepts, fsa_language, TestRng};
use proptest::prelude::*;
use proptest::sample::Index;
use skelql::decode::{
    grammar_constraint, stage_s_vocabulary, train_ngram, Constraint, DecodeContext, Scorer,
    StructureConstraint, EOS,
};
use skelql::kg::{retrieve_subgraph, KgStore, RetrievalParams};
use skelql::ontology::OntologySnapshot;
use skelql::scaffold::{
    decompose, merge, ContentAssignment, Placeholder, ScaffoldError, StructureTemplate,
};
use skelql::sparql::{canonicalize, PrefixTable};

const ENTITIES: [&str; 4] = ["dbr:E0", "dbr:E1", "dbr:E2", "dbr:E3"];
const CONCEPTS: [&str; 3] = ["dbo:C0", "dbo:C1", "dbo:C2"];
const RELATIONS: [&str; 3] = ["dbo:r0", "dbo:r1", "dbo:r2"];
const VALUES: [&str; 4] = ["0", "7", "42", "1950"];

fn structure_pool() -> &'static Vec<Vec<String>> {
    static POOL: OnceLock<Vec<Vec<String>>> = OnceLock::new();
    POOL.get_or_init(|| fsa_language(12).into_iter().collect())
}

fn prefixes() -> &'static PrefixTable {
    static TABLE: OnceLock<PrefixTable> = OnceLock::new();
    TABLE.get_or_init(|| PrefixTable::load(data_path("prefixes.json")).expect("prefix table"))
}

fn fill_ontology() -> &'static OntologySnapshot {
    static SNAPSHOT: OnceLock<OntologySnapshot> = OnceLock::new();
    SNAPSHOT.get_or_init(|| {
        OntologySnapshot::new(
            CONCEPTS.iter().map(|s| s.to_string()).collect(),
            RELATIONS.iter().map(|s| s.to_string()).collect(),
            ENTITIES.iter().map(|s| s.to_string()).collect(),
        )
        .expect("disjoint labels")
    })
}

/// Draws from a fixed stream of proptest indices, cycling when exhausted.
struct Chooser<'a> {
    stream: &'a [Index],
    cursor: usize,
}

impl<'a> Chooser<'a> {
    fn new(stream: &'a [Index]) -> Self {
        Self { stream, cursor: 0 }
    }

    fn pick(&mut self, bound: usize) -> usize {
        let index = self.stream[self.cursor % self.stream.len()];
        self.cursor += 1;
        index.index(bound)
    }
}

fn pick_var(vars: &mut Vec<String>, choose: &mut Chooser) -> String {
    if vars.is_empty() || choose.pick(3) == 0 {
        let name = format!("var{}", vars.len());
        vars.push(name.clone());
        name
    } else {
        vars[choose.pick(vars.len())].clone()
    }
}

/// Fills every placeholder of a structure with syntactically canonical values
/// (variables minted var0, var1, .. in first-appearance order) without caring
/// where variables are bound. Good enough for display and alignment
/// properties; queries built from these fills may be semantically unbound.
fn fill_content(structure: &[String], choose: &mut Chooser) -> ContentAssignment {
    let mut pairs = Vec::new();
    let mut vars: Vec<String> = Vec::new();
    for token in structure {
        let Ok(tag) = token.parse::<Placeholder>() else {
            continue;
        };
        let value = match tag {
            Placeholder::Var => pick_var(&mut vars, choose),
            Placeholder::Ent => ENTITIES[choose.pick(ENTITIES.len())].to_string(),
            Placeholder::Cct => CONCEPTS[choose.pick(CONCEPTS.len())].to_string(),
            Placeholder::Rel => RELATIONS[choose.pick(RELATIONS.len())].to_string(),
            Placeholder::Val => VALUES[choose.pick(VALUES.len())].to_string(),
            Placeholder::Con => {
                let var = pick_var(&mut vars, choose);
                let op = ["=", ">"][choose.pick(2)];
                let rhs = VALUES[choose.pick(VALUES.len())];
                format!("( {var} {op} {rhs} )")
            }
        };
        pairs.push((tag, value));
    }
    ContentAssignment::new(pairs).expect("canonical fill values")
}

/// Where a placeholder sits relative to the binding rules: projection
/// variables and the aggregate's inner variable must be bound by the group,
/// group slots (triple variables and filter constraints) do the binding, and
/// modifier slots may reference any bound variable or the aggregate alias.
#[derive(Clone, Copy, PartialEq)]
enum SlotRole {
    ProjVar,
    AggInner,
    AggAlias,
    BodyVar,
    FilterCon,
    ModVar,
    ModCon,
    Fixed(Placeholder),
}

fn slot_roles(structure: &[String]) -> Vec<SlotRole> {
    let open = structure.iter().position(|t| t == "{").expect("group open");
    let close = structure.iter().rposition(|t| t == "}").expect("group close");
    let aggregate = structure[0] == "select" && structure[1] == "(";
    let mut proj_vars_seen = 0;
    let mut roles = Vec::new();
    for (i, token) in structure.iter().enumerate() {
        let Ok(tag) = token.parse::<Placeholder>() else {
            continue;
        };
        let role = if i < open {
            match tag {
                Placeholder::Var if aggregate => {
                    proj_vars_seen += 1;
                    if proj_vars_seen == 1 {
                        SlotRole::AggInner
                    } else {
                        SlotRole::AggAlias
                    }
                }
                Placeholder::Var => SlotRole::ProjVar,
                other => SlotRole::Fixed(other),
            }
        } else if i < close {
            match tag {
                Placeholder::Var => SlotRole::BodyVar,
                Placeholder::Con => SlotRole::FilterCon,
                other => SlotRole::Fixed(other),
            }
        } else {
            match tag {
                Placeholder::Var => SlotRole::ModVar,
                Placeholder::Con => SlotRole::ModCon,
                other => SlotRole::Fixed(other),
            }
        };
        roles.push(role);
    }
    roles
}

/// A structure admits a semantically valid fill when the group can bind
/// everything the projection demands: one slot per plain projection
/// variable, at least one for the aggregate's inner variable.
fn fill_satisfiable(structure: &[String]) -> bool {
    if structure[0] == "ask" {
        return true;
    }
    let roles = slot_roles(structure);
    let binding = roles
        .iter()
        .filter(|r| matches!(r, SlotRole::BodyVar | SlotRole::FilterCon))
        .count();
    let projected = roles.iter().filter(|r| matches!(r, SlotRole::ProjVar)).count();
    let aggregate = roles.iter().any(|r| matches!(r, SlotRole::AggInner));
    if aggregate {
        binding >= 1
    } else {
        binding >= projected
    }
}

fn semantic_pool() -> &'static Vec<Vec<String>> {
    static POOL: OnceLock<Vec<Vec<String>>> = OnceLock::new();
    POOL.get_or_init(|| {
        structure_pool()
            .iter()
            .filter(|s| fill_satisfiable(s))
            .cloned()
            .collect()
    })
}

enum AbstractValue {
    Var(usize),
    Con { var: usize, op: String, rhs: String },
    Lit(String),
}

/// Fills a satisfiable structure so that the merged query passes the
/// binding checks: projection variables are reused inside the group, the
/// aggregate alias stays distinct from its inner variable, and modifier
/// slots only reference bound variables or the alias. Variables are named
/// var0, var1, .. by first appearance over the serialized pair order.
fn semantic_fill(structure: &[String], choose: &mut Chooser) -> ContentAssignment {
    let roles = slot_roles(structure);
    let mut next_id = 0usize;
    let mut fresh = || {
        next_id += 1;
        next_id - 1
    };

    // Reserve ids for the slots with binding obligations.
    let proj_ids: Vec<usize> = roles
        .iter()
        .filter(|r| matches!(r, SlotRole::ProjVar))
        .map(|_| fresh())
        .collect();
    let aggregate = roles.iter().any(|r| matches!(r, SlotRole::AggInner));
    let (inner_id, alias_id) = if aggregate {
        (fresh(), fresh())
    } else {
        (usize::MAX, usize::MAX)
    };

    // Group slots must cover every obligation before running free.
    let mut obligations: Vec<usize> = if aggregate {
        vec![inner_id]
    } else {
        proj_ids.clone()
    };
    obligations.reverse();
    let mut bound: Vec<usize> = Vec::new();
    let mut proj_cursor = 0;
    let mut values = Vec::new();
    for role in &roles {
        let value = match role {
            SlotRole::ProjVar => {
                proj_cursor += 1;
                AbstractValue::Var(proj_ids[proj_cursor - 1])
            }
            SlotRole::AggInner => AbstractValue::Var(inner_id),
            SlotRole::AggAlias => AbstractValue::Var(alias_id),
            SlotRole::BodyVar | SlotRole::FilterCon => {
                let id = if let Some(owed) = obligations.pop() {
                    owed
                } else if !bound.is_empty() && choose.pick(3) != 0 {
                    bound[choose.pick(bound.len())]
                } else {
                    fresh()
                };
                bound.push(id);
                if matches!(role, SlotRole::BodyVar) {
                    AbstractValue::Var(id)
                } else {
                    AbstractValue::Con {
                        var: id,
                        op: ["=", ">"][choose.pick(2)].to_string(),
                        rhs: VALUES[choose.pick(VALUES.len())].to_string(),
                    }
                }
            }
            SlotRole::ModVar | SlotRole::ModCon => {
                let mut pool = bound.clone();
                if aggregate {
                    pool.push(alias_id);
                }
                let id = pool[choose.pick(pool.len())];
                if matches!(role, SlotRole::ModVar) {
                    AbstractValue::Var(id)
                } else {
                    AbstractValue::Con {
                        var: id,
                        op: ["=", ">"][choose.pick(2)].to_string(),
                        rhs: VALUES[choose.pick(VALUES.len())].to_string(),
                    }
                }
            }
            SlotRole::Fixed(Placeholder::Ent) => {
                AbstractValue::Lit(ENTITIES[choose.pick(ENTITIES.len())].to_string())
            }
            SlotRole::Fixed(Placeholder::Cct) => {
                AbstractValue::Lit(CONCEPTS[choose.pick(CONCEPTS.len())].to_string())
            }
            SlotRole::Fixed(Placeholder::Rel) => {
                AbstractValue::Lit(RELATIONS[choose.pick(RELATIONS.len())].to_string())
            }
            SlotRole::Fixed(Placeholder::Val) => {
                AbstractValue::Lit(VALUES[choose.pick(VALUES.len())].to_string())
            }
            SlotRole::Fixed(_) => unreachable!("var and con slots are never fixed"),
        };
        values.push(value);
    }

    // Canonical names follow first appearance over the serialized values.
    let mut order: Vec<usize> = Vec::new();
    for value in &values {
        let id = match value {
            AbstractValue::Var(id) => Some(*id),
            AbstractValue::Con { var, .. } => Some(*var),
            AbstractValue::Lit(_) => None,
        };
        if let Some(id) = id {
            if !order.contains(&id) {
                order.push(id);
            }
        }
    }
    let name = |id: usize| {
        let index = order.iter().position(|o| *o == id).expect("id appeared");
        format!("var{index}")
    };

    let tags: Vec<Placeholder> = structure
        .iter()
        .filter_map(|t| t.parse::<Placeholder>().ok())
        .collect();
    let pairs: Vec<(Placeholder, String)> = tags
        .into_iter()
        .zip(values)
        .map(|(tag, value)| {
            let text = match value {
                AbstractValue::Var(id) => name(id),
                AbstractValue::Con { var, op, rhs } => {
                    format!("( {} {op} {rhs} )", name(var))
                }
                AbstractValue::Lit(text) => text,
            };
            (tag, text)
        })
        .collect();
    ContentAssignment::new(pairs).expect("canonical fill values")
}

/// The serializer's dot policy: every triple carries a trailing dot exactly
/// when the group holds two or more triples. Rewrites a structure from the
/// full (optional-dot) language into that canonical form.
fn normalize_dots(structure: &[String]) -> Vec<String> {
    let open = structure.iter().position(|t| t == "{").expect("group open");
    let close = structure.iter().rposition(|t| t == "}").expect("group close");
    enum Item {
        Triple([String; 3]),
        Filter(String),
    }
    let mut items = Vec::new();
    let mut i = open + 1;
    while i < close {
        if structure[i] == "filter" {
            items.push(Item::Filter(structure[i + 1].clone()));
            i += 2;
        } else {
            items.push(Item::Triple([
                structure[i].clone(),
                structure[i + 1].clone(),
                structure[i + 2].clone(),
            ]));
            i += 3;
            if i < close && structure[i] == "." {
                i += 1;
            }
        }
    }
    let triples = items
        .iter()
        .filter(|item| matches!(item, Item::Triple(_)))
        .count();
    let mut out: Vec<String> = structure[..=open].to_vec();
    for item in items {
        match item {
            Item::Triple(parts) => {
                out.extend(parts);
                if triples >= 2 {
                    out.push(".".to_string());
                }
            }
            Item::Filter(con) => {
                out.push("filter".to_string());
                out.push(con);
            }
        }
    }
    out.extend(structure[close..].iter().cloned());
    out
}

/// Guards the generators: a filter bug that silently emptied the
/// satisfiable pool would otherwise turn the round-trip properties into
/// vacuous passes.
#[test]
fn satisfiable_pool_covers_most_of_the_language() {
    let total = structure_pool().len();
    let satisfiable = semantic_pool().len();
    println!("{satisfiable} of {total} structures admit a bound fill");
    assert!(total > 3000, "bounded language shrank to {total}");
    assert!(
        satisfiable * 2 > total,
        "satisfiable pool shrank to {satisfiable} of {total}"
    );
}

proptest! {
    /// Any satisfiable structure from the bounded language, filled with
    /// binding-aware canonical values, merges into a query that
    /// canonicalization accepts and decomposition splits back into exactly
    /// the (dot-normalized) structure and content.
    #[test]
    fn filled_structures_round_trip(
        which in any::<Index>(),
        stream in proptest::collection::vec(any::<Index>(), 1..48),
    ) {
        let pool = semantic_pool();
        let structure_tokens = &pool[which.index(pool.len())];
        let mut choose = Chooser::new(&stream);
        let content = semantic_fill(structure_tokens, &mut choose);
        let template: StructureTemplate =
            structure_tokens.join(" ").parse().expect("pool structure parses");

        let query = merge(&template, &content).expect("aligned fill merges");

        let expected: StructureTemplate = normalize_dots(structure_tokens)
            .join(" ")
            .parse()
            .expect("normalized structure parses");
        let decomposition = decompose(&query, Some(fill_ontology()));
        prop_assert_eq!(&decomposition.structure, &expected);
        prop_assert_eq!(&decomposition.content, &content);

        // Idempotence: canonical text is its own canonical form.
        let again = canonicalize(&query.text, prefixes()).expect("canonical text reparses");
        prop_assert_eq!(&again.text, &query.text);
    }

    /// Canonical text numbers its variables var0..varN by first appearance.
    #[test]
    fn canonical_variables_numbered_by_first_appearance(
        which in any::<Index>(),
        stream in proptest::collection::vec(any::<Index>(), 1..48),
    ) {
        let pool = semantic_pool();
        let structure_tokens = &pool[which.index(pool.len())];
        let mut choose = Chooser::new(&stream);
        let content = semantic_fill(structure_tokens, &mut choose);
        let template: StructureTemplate =
            structure_tokens.join(" ").parse().expect("pool structure parses");
        let query = merge(&template, &content).expect("aligned fill merges");

        let mut seen = Vec::new();
        for word in query.text.split(' ') {
            if let Some(digits) = word.strip_prefix("var") {
                if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
                    && !seen.contains(&word.to_string())
                {
                    seen.push(word.to_string());
                }
            }
        }
        let expected: Vec<String> = (0..seen.len()).map(|i| format!("var{i}")).collect();
        prop_assert_eq!(seen, expected);
    }

    /// Content assignments survive display and reparsing, including
    /// multi-token constraint spans.
    #[test]
    fn content_display_round_trips(
        which in any::<Index>(),
        stream in proptest::collection::vec(any::<Index>(), 1..48),
    ) {
        let pool = structure_pool();
        let structure_tokens = &pool[which.index(pool.len())];
        let mut choose = Chooser::new(&stream);
        let content = fill_content(structure_tokens, &mut choose);
        let reparsed: ContentAssignment =
            content.to_string().parse().expect("display output parses");
        prop_assert_eq!(reparsed, content);
    }

    /// Corrupting one tag of an aligned content produces a tag mismatch at
    /// exactly that pair; dropping a pair produces an arity mismatch.
    #[test]
    fn merge_reports_misalignment_precisely(
        which in any::<Index>(),
        stream in proptest::collection::vec(any::<Index>(), 1..48),
        victim in any::<Index>(),
        replacement in any::<Index>(),
    ) {
        let pool = structure_pool();
        let structure_tokens = &pool[which.index(pool.len())];
        let mut choose = Chooser::new(&stream);
        let content = fill_content(structure_tokens, &mut choose);
        let template: StructureTemplate =
            structure_tokens.join(" ").parse().expect("pool structure parses");

        let mut pairs = content.pairs().to_vec();
        let position = victim.index(pairs.len());
        let expected_tag = pairs[position].0;
        let other_tags: Vec<Placeholder> = Placeholder::ALL
            .iter()
            .copied()
            .filter(|t| *t != expected_tag)
            .collect();
        let wrong = other_tags[replacement.index(other_tags.len())];
        pairs[position].0 = wrong;
        // A [var] slot rebadged keeps its value; values are nonempty words, so
        // construction only rejects non-canonical [var] values.
        pairs[position].1 = "var0".to_string();
        let corrupted = ContentAssignment::new(pairs.clone()).expect("still well-formed");
        match merge(&template, &corrupted) {
            Err(ScaffoldError::TagMismatch { position: p, expected, found }) => {
                // Mismatch ordinals are 1-based.
                prop_assert_eq!(p, position + 1);
                prop_assert_eq!(expected, expected_tag);
                prop_assert_eq!(found, wrong);
            }
            other => prop_assert!(false, "expected tag mismatch, got {:?}", other),
        }

        pairs.remove(position);
        let short = ContentAssignment::new(pairs).expect("still well-formed");
        match merge(&template, &short) {
            Err(ScaffoldError::ArityMismatch { expected, got }) => {
                prop_assert_eq!(expected, content.len());
                prop_assert_eq!(got, content.len() - 1);
            }
            other => prop_assert!(false, "expected arity mismatch, got {:?}", other),
        }
    }

    /// The acceptor and the production rules agree on arbitrary token noise.
    #[test]
    fn acceptor_matches_rules_on_noise(
        picks in proptest::collection::vec(any::<Index>(), 0..14),
    ) {
        let alphabet: Vec<String> = stage_s_vocabulary()
            .into_iter()
            .filter(|t| t != EOS)
            .collect();
        let tokens: Vec<String> = picks
            .iter()
            .map(|p| alphabet[p.index(alphabet.len())].clone())
            .collect();
        let as_refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
        prop_assert_eq!(fsa_accepts(&tokens), ebnf_accepts(&as_refs));
    }

    /// Same agreement near the language: valid sequences dented by a small
    /// random edit (replace, insert, or delete one token).
    #[test]
    fn acceptor_matches_rules_on_mutations(
        which in any::<Index>(),
        edit in any::<Index>(),
        spot in any::<Index>(),
        what in any::<Index>(),
    ) {
        let pool = structure_pool();
        let mut tokens = pool[which.index(pool.len())].clone();
        let alphabet: Vec<String> = stage_s_vocabulary()
            .into_iter()
            .filter(|t| t != EOS)
            .collect();
        match edit.index(3) {
            0 => {
                let i = spot.index(tokens.len());
                tokens[i] = alphabet[what.index(alphabet.len())].clone();
            }
            1 => {
                let i = spot.index(tokens.len() + 1);
                tokens.insert(i, alphabet[what.index(alphabet.len())].clone());
            }
            _ => {
                let i = spot.index(tokens.len());
                tokens.remove(i);
            }
        }
        let as_refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
        prop_assert_eq!(fsa_accepts(&tokens), ebnf_accepts(&as_refs));
    }

    /// The grammar mask keeps exactly the tokens whose successor state can
    /// still reach acceptance within the remaining budget, and the end marker
    /// exactly at accepting states; everything else drops to -inf unchanged
    /// scores stay bitwise identical.
    #[test]
    fn grammar_mask_matches_lookahead_semantics(
        which in any::<Index>(),
        cut in any::<Index>(),
        extra in 0usize..13,
        seed in any::<u64>(),
    ) {
        let pool = structure_pool();
        let sequence = &pool[which.index(pool.len())];
        let prefix_len = cut.index(sequence.len() + 1);
        let prefix: Vec<String> = sequence[..prefix_len].to_vec();
        let max_length = prefix_len + extra;
        let ctx = DecodeContext::stage_s(1, max_length.max(1)).expect("valid sizes");

        let constraint = grammar_constraint();
        let mut state = constraint.initial_state();
        for token in &prefix {
            state = constraint.advance(state, token);
        }

        let mut rng = TestRng::new(seed);
        let mut scores: BTreeMap<String, f64> = stage_s_vocabulary()
            .into_iter()
            .map(|t| (t, -10.0 * rng.f64()))
            .collect();
        let before = scores.clone();
        constraint.mask(state, &prefix, &mut scores, &ctx);

        let automaton = skelql::grammar::automaton();
        let distances = accept_distances();
        let mut fsa_state = automaton.start();
        for token in &prefix {
            let parsed = token.parse().expect("valid prefix token");
            fsa_state = automaton.step(fsa_state, parsed).expect("valid prefix");
        }
        let budget = ctx.max_length() - prefix.len();
        for (token, score) in &scores {
            let allowed = if token == EOS {
                automaton.is_accepting(fsa_state)
            } else {
                let reachable = token
                    .parse()
                    .ok()
                    .and_then(|t| automaton.step(fsa_state, t))
                    .and_then(|next| distances[next]);
                budget >= 1 && reachable.is_some_and(|d| d <= budget - 1)
            };
            if allowed {
                prop_assert_eq!(
                    score.to_bits(),
                    before[token].to_bits(),
                    "kept token {} must keep its score",
                    token
                );
            } else {
                prop_assert!(
                    *score == f64::NEG_INFINITY,
                    "token {} should be masked (budget {})",
                    token,
                    budget
                );
            }
        }
    }

    /// The template mask admits exactly the scheduled tag at even positions,
    /// everything except the end marker at odd positions, and only the end
    /// marker once all pairs are emitted.
    #[test]
    fn template_mask_matches_schedule(
        which in any::<Index>(),
        position in any::<Index>(),
        slack in 0usize..4,
    ) {
        let pool = structure_pool();
        let structure_tokens = &pool[which.index(pool.len())];
        let template: StructureTemplate =
            structure_tokens.join(" ").parse().expect("pool structure parses");
        let pair_count = template.placeholders().count();
        let target_len = 2 * pair_count;
        let position = position.index(target_len + 1);
        let max_length = target_len + slack;
        let ctx = DecodeContext::stage_c(template.clone(), 1, max_length).expect("valid sizes");
        let constraint = StructureConstraint::new(&template);

        let prefix: Vec<String> = vec!["x".to_string(); position];
        let mut state = constraint.initial_state();
        for token in &prefix {
            state = constraint.advance(state, token);
        }
        let mut scores: BTreeMap<String, f64> = [
            ("[ent]", -1.0), ("[cct]", -1.0), ("[rel]", -1.0), ("[var]", -1.0),
            ("[val]", -1.0), ("[con]", -1.0), ("value", -2.0), (EOS, -0.5),
        ]
        .into_iter()
        .map(|(t, s)| (t.to_string(), s))
        .collect();
        constraint.mask(state, &prefix, &mut scores, &ctx);

        let tags: Vec<Placeholder> = template.placeholders().collect();
        for (token, score) in &scores {
            let finite = score.is_finite();
            if position >= target_len {
                prop_assert_eq!(finite, token == EOS);
            } else if position % 2 == 0 {
                prop_assert_eq!(finite, token == tags[position / 2].as_str());
            } else {
                prop_assert_eq!(finite, token != EOS);
            }
        }
    }

    /// Trained n-gram scorers are genuine conditional distributions: the
    /// probabilities over next tokens sum to one for any prefix.
    #[test]
    fn ngram_scores_normalize(
        seed in any::<u64>(),
        order in 1usize..4,
        alpha in 0.05f64..2.0,
        prefix_len in 0usize..6,
    ) {
        let mut rng = TestRng::new(seed);
        let vocab: Vec<String> = stage_s_vocabulary()
            .into_iter()
            .filter(|t| t != EOS)
            .collect();
        let mut corpus = vec![vocab.clone()];
        corpus.extend(common::random_corpus(&mut rng, &vocab, 6, 10));
        let scorer = train_ngram(&corpus, order, alpha).expect("trainable corpus");

        let prefix: Vec<String> = (0..prefix_len)
            .map(|_| rng.pick(&vocab).clone())
            .collect();
        let ctx = DecodeContext::stage_s(1, 32).expect("valid sizes");
        let scores = scorer.score_next(&prefix, &ctx);
        prop_assert!(scores.keys().any(|t| t == EOS));
        let total: f64 = scores.values().map(|s| s.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "probabilities sum to {}", total);
    }

    /// Retrieval is monotone in its parameters: a smaller top-k returns a
    /// prefix of the larger ranking, and a higher score floor returns exactly
    /// the filtered larger ranking.
    #[test]
    fn retrieval_monotone_in_parameters(
        seed in any::<u64>(),
        small_k in 1usize..8,
        floor in prop::sample::select(vec![0.01f64, 0.1, 0.3, 0.6]),
    ) {
        let mut rng = TestRng::new(seed);
        let nodes: Vec<String> = (0..(6 + rng.below(11)))
            .map(|i| format!("http://example.org/kg/n{i}"))
            .collect();
        let relations = [
            "http://example.org/kg/founded_by",
            "http://example.org/kg/plays_for",
            "http://example.org/kg/located_in",
            "http://example.org/kg/air_date",
        ];
        let mut triples = Vec::new();
        for _ in 0..(10 + rng.below(51)) {
            triples.push((
                rng.pick(&nodes).clone(),
                rng.pick(&relations).to_string(),
                rng.pick(&nodes).clone(),
            ));
        }
        let store = KgStore::from_triples(triples);
        let topics = vec![rng.pick(&nodes).clone()];
        let terms: BTreeSet<String> =
            ["founded", "plays", "located"].iter().map(|s| s.to_string()).collect();

        let wide = RetrievalParams { top_k: 10_000, min_score: 1e-5, max_hops: 2 };
        let full = retrieve_subgraph(&store, &topics, &terms, &wide);

        let narrow = RetrievalParams { top_k: small_k, ..wide };
        let truncated = retrieve_subgraph(&store, &topics, &terms, &narrow);
        let take = small_k.min(full.paths.len());
        prop_assert_eq!(&truncated.paths, &full.paths[..take]);

        let raised = RetrievalParams { min_score: floor, ..wide };
        let filtered = retrieve_subgraph(&store, &topics, &terms, &raised);
        let expected: Vec<_> = full
            .paths
            .iter()
            .filter(|p| p.score >= floor)
            .cloned()
            .collect();
        prop_assert_eq!(&filtered.paths, &expected);

        let union: BTreeSet<String> = filtered
            .paths
            .iter()
            .flat_map(|p| p.relations.iter().cloned())
            .collect();
        prop_assert_eq!(&filtered.relations, &union);
    }
}
