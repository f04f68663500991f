//! Shared oracles for the integration suites. Everything here is written
//! against the public API plus first principles, never against the
//! implementation under test: the structure language is re-derived from its
//! production rules, beam results from exhaustive scoring, and path
//! retrieval from exhaustive enumeration.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use skelql::decode::{DecodeContext, DecodedSequence, Scorer, EOS};
use skelql::kg::{
    hop_relevance, label_of, Direction, KgStore, PathRecord, RetrievalParams,
};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

// ---------------------------------------------------------------------------
// Structure language oracle, straight from the production rules:
//
//   query  := select | ask
//   select := "select" proj "where" group mod*
//   ask    := "ask" "where" group
//   proj   := "distinct"? [var]+ | "(" agg "(" [var] ")" "as" [var] ")"
//   agg    := count | min | max | sum | avg
//   group  := "{" (triple | "filter" [con])+ "}"
//   triple := subj [rel] obj "."?
//   subj   := [ent] | [var] | [cct]
//   obj    := [ent] | [cct] | [var] | [val]
//   mod    := "order" "by" ("asc"|"desc")? ([var]|[con])
//           | "group" "by" [var]+ | "having" [con]
//           | "limit" [val] | "offset" [val]
//
// Matching tracks every reachable end position, so local ambiguity (greedy
// vs short [var]+ runs, optional dots) cannot cause false rejections.

type Ends = BTreeSet<usize>;

fn tok(t: &[&str], i: usize, s: &str) -> Ends {
    if t.get(i) == Some(&s) {
        BTreeSet::from([i + 1])
    } else {
        BTreeSet::new()
    }
}

fn one_of(t: &[&str], i: usize, options: &[&str]) -> Ends {
    options.iter().flat_map(|s| tok(t, i, s)).collect()
}

fn bind(t: &[&str], starts: Ends, f: impl Fn(&[&str], usize) -> Ends) -> Ends {
    starts.into_iter().flat_map(|i| f(t, i)).collect()
}

fn var_plus(t: &[&str], i: usize) -> Ends {
    let mut ends = BTreeSet::new();
    let mut j = i;
    while t.get(j) == Some(&"[var]") {
        j += 1;
        ends.insert(j);
    }
    ends
}

fn proj(t: &[&str], i: usize) -> Ends {
    let mut starts = BTreeSet::from([i]);
    starts.extend(tok(t, i, "distinct"));
    let mut ends = bind(t, starts, var_plus);

    let agg = bind(t, tok(t, i, "("), |t, i| {
        one_of(t, i, &["count", "min", "max", "sum", "avg"])
    });
    let agg = bind(t, agg, |t, i| tok(t, i, "("));
    let agg = bind(t, agg, |t, i| tok(t, i, "[var]"));
    let agg = bind(t, agg, |t, i| tok(t, i, ")"));
    let agg = bind(t, agg, |t, i| tok(t, i, "as"));
    let agg = bind(t, agg, |t, i| tok(t, i, "[var]"));
    ends.extend(bind(t, agg, |t, i| tok(t, i, ")")));
    ends
}

fn subj(t: &[&str], i: usize) -> Ends {
    one_of(t, i, &["[ent]", "[var]", "[cct]"])
}

fn obj(t: &[&str], i: usize) -> Ends {
    one_of(t, i, &["[ent]", "[cct]", "[var]", "[val]"])
}

fn triple(t: &[&str], i: usize) -> Ends {
    let after = bind(t, bind(t, subj(t, i), |t, i| tok(t, i, "[rel]")), obj);
    let mut ends = after.clone();
    ends.extend(bind(t, after, |t, i| tok(t, i, ".")));
    ends
}

fn group_item(t: &[&str], i: usize) -> Ends {
    let mut ends = triple(t, i);
    ends.extend(bind(t, tok(t, i, "filter"), |t, i| tok(t, i, "[con]")));
    ends
}

fn group(t: &[&str], i: usize) -> Ends {
    let mut reachable = tok(t, i, "{");
    let mut after_items = BTreeSet::new();
    loop {
        let next = bind(t, reachable.clone(), group_item);
        let fresh: Ends = next.difference(&after_items).copied().collect();
        if fresh.is_empty() {
            break;
        }
        after_items.extend(fresh.iter().copied());
        reachable = fresh;
    }
    bind(t, after_items, |t, i| tok(t, i, "}"))
}

fn modifier(t: &[&str], i: usize) -> Ends {
    let mut ends = BTreeSet::new();

    let order = bind(t, tok(t, i, "order"), |t, i| tok(t, i, "by"));
    let mut order_starts = order.clone();
    order_starts.extend(bind(t, order, |t, i| one_of(t, i, &["asc", "desc"])));
    ends.extend(bind(t, order_starts, |t, i| one_of(t, i, &["[var]", "[con]"])));

    let group_by = bind(t, tok(t, i, "group"), |t, i| tok(t, i, "by"));
    ends.extend(bind(t, group_by, var_plus));

    ends.extend(bind(t, tok(t, i, "having"), |t, i| tok(t, i, "[con]")));
    ends.extend(bind(t, tok(t, i, "limit"), |t, i| tok(t, i, "[val]")));
    ends.extend(bind(t, tok(t, i, "offset"), |t, i| tok(t, i, "[val]")));
    ends
}

fn modifier_star(t: &[&str], i: usize) -> Ends {
    let mut ends = BTreeSet::from([i]);
    let mut frontier = ends.clone();
    loop {
        let next = bind(t, frontier, modifier);
        let fresh: Ends = next.difference(&ends).copied().collect();
        if fresh.is_empty() {
            break;
        }
        ends.extend(fresh.iter().copied());
        frontier = fresh;
    }
    ends
}

/// Membership in the structure language, by direct rule matching.
pub fn ebnf_accepts(tokens: &[&str]) -> bool {
    let t = tokens;
    let select = bind(t, tok(t, 0, "select"), proj);
    let select = bind(t, select, |t, i| tok(t, i, "where"));
    let select = bind(t, select, group);
    let select = bind(t, select, modifier_star);

    let ask = bind(t, tok(t, 0, "ask"), |t, i| tok(t, i, "where"));
    let ask = bind(t, ask, group);

    select.contains(&t.len()) || ask.contains(&t.len())
}

// Bounded language enumeration, generating from the same rules.

type Lang = Vec<Vec<String>>;

fn lit(s: &str) -> Lang {
    vec![vec![s.to_string()]]
}

fn alt(parts: Vec<Lang>) -> Lang {
    parts.into_iter().flatten().collect()
}

fn cat(a: Lang, b: Lang, budget: usize) -> Lang {
    let mut out = Vec::new();
    for x in &a {
        for y in &b {
            if x.len() + y.len() <= budget {
                let mut joined = x.clone();
                joined.extend(y.iter().cloned());
                out.push(joined);
            }
        }
    }
    out
}

fn cats(parts: Vec<Lang>, budget: usize) -> Lang {
    let mut acc: Lang = vec![Vec::new()];
    for part in parts {
        acc = cat(acc, part, budget);
        if acc.is_empty() {
            break;
        }
    }
    acc
}

fn repeat_plus(base: impl Fn(usize) -> Lang, budget: usize) -> Lang {
    let one = base(budget);
    let mut acc = one.clone();
    let mut frontier = one.clone();
    loop {
        let next = cat(frontier, base(budget), budget);
        if next.is_empty() {
            break;
        }
        acc.extend(next.iter().cloned());
        frontier = next;
    }
    acc
}

fn opt_lang(l: Lang) -> Lang {
    let mut out = vec![Vec::new()];
    out.extend(l);
    out
}

fn gen_proj(budget: usize) -> Lang {
    let vars = repeat_plus(|_| lit("[var]"), budget);
    let plain = cat(opt_lang(lit("distinct")), vars, budget);
    let agg_name = alt(vec![lit("count"), lit("min"), lit("max"), lit("sum"), lit("avg")]);
    let agg = cats(
        vec![
            lit("("),
            agg_name,
            lit("("),
            lit("[var]"),
            lit(")"),
            lit("as"),
            lit("[var]"),
            lit(")"),
        ],
        budget,
    );
    alt(vec![plain, agg])
}

fn gen_triple(budget: usize) -> Lang {
    let s = alt(vec![lit("[ent]"), lit("[var]"), lit("[cct]")]);
    let o = alt(vec![lit("[ent]"), lit("[cct]"), lit("[var]"), lit("[val]")]);
    let core = cats(vec![s, lit("[rel]"), o], budget);
    cat(core, opt_lang(lit(".")), budget)
}

fn gen_group(budget: usize) -> Lang {
    let item = |b: usize| {
        alt(vec![
            gen_triple(b),
            cats(vec![lit("filter"), lit("[con]")], b),
        ])
    };
    let items = repeat_plus(item, budget.saturating_sub(2));
    cats(vec![lit("{"), items, lit("}")], budget)
}

fn gen_modifier(budget: usize) -> Lang {
    let order = cats(
        vec![
            lit("order"),
            lit("by"),
            opt_lang(alt(vec![lit("asc"), lit("desc")])),
            alt(vec![lit("[var]"), lit("[con]")]),
        ],
        budget,
    );
    let group_by = cats(
        vec![lit("group"), lit("by"), repeat_plus(|_| lit("[var]"), budget)],
        budget,
    );
    alt(vec![
        order,
        group_by,
        cats(vec![lit("having"), lit("[con]")], budget),
        cats(vec![lit("limit"), lit("[val]")], budget),
        cats(vec![lit("offset"), lit("[val]")], budget),
    ])
}

fn gen_modifier_star(budget: usize) -> Lang {
    let mut acc = vec![Vec::new()];
    let mut frontier = acc.clone();
    loop {
        let next = cat(frontier, gen_modifier(budget), budget);
        if next.is_empty() {
            break;
        }
        acc.extend(next.iter().cloned());
        frontier = next;
    }
    acc
}

/// Every structure of at most `max_len` tokens, generated from the rules.
pub fn ebnf_language(max_len: usize) -> BTreeSet<Vec<String>> {
    let select = cats(
        vec![
            lit("select"),
            gen_proj(max_len),
            lit("where"),
            gen_group(max_len),
            gen_modifier_star(max_len),
        ],
        max_len,
    );
    let ask = cats(
        vec![lit("ask"), lit("where"), gen_group(max_len)],
        max_len,
    );
    select.into_iter().chain(ask).collect()
}

/// Every sequence of at most `max_len` tokens the acceptance automaton
/// accepts, found by breadth-first walk over its transitions.
pub fn fsa_language(max_len: usize) -> BTreeSet<Vec<String>> {
    let automaton = skelql::grammar::automaton();
    let mut accepted = BTreeSet::new();
    let mut frontier = vec![(automaton.start(), Vec::<String>::new())];
    if automaton.is_accepting(automaton.start()) {
        accepted.insert(Vec::new());
    }
    for _ in 0..max_len {
        let mut next = Vec::new();
        for (state, prefix) in &frontier {
            for token in automaton.next_tokens(*state) {
                let target = automaton.step(*state, token).expect("listed transition");
                let mut seq = prefix.clone();
                seq.push(token.as_str().to_string());
                if automaton.is_accepting(target) {
                    accepted.insert(seq.clone());
                }
                next.push((target, seq));
            }
        }
        frontier = next;
    }
    accepted
}

/// Runs the acceptor over a raw token sequence; unknown tokens reject.
pub fn fsa_accepts(tokens: &[String]) -> bool {
    let automaton = skelql::grammar::automaton();
    let mut state = automaton.start();
    for token in tokens {
        let Ok(parsed) = token.parse::<skelql::scaffold::StructureToken>() else {
            return false;
        };
        match automaton.step(state, parsed) {
            Some(next) => state = next,
            None => return false,
        }
    }
    automaton.is_accepting(state)
}

/// Shortest number of tokens from each state to any accepting state, by
/// fixpoint relaxation over the public transition listing.
pub fn accept_distances() -> Vec<Option<usize>> {
    let automaton = skelql::grammar::automaton();
    let n = automaton.state_count();
    let mut distance: Vec<Option<usize>> = (0..n)
        .map(|s| automaton.is_accepting(s).then_some(0))
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for state in 0..n {
            for token in automaton.next_tokens(state) {
                let next = automaton.step(state, token).expect("listed transition");
                if let Some(d) = distance[next] {
                    if distance[state].is_none_or(|cur| d + 1 < cur) {
                        distance[state] = Some(d + 1);
                        changed = true;
                    }
                }
            }
        }
    }
    distance
}

// ---------------------------------------------------------------------------
// Decode oracle: score every candidate finished sequence with the raw
// scorer and rank exactly the way the beam reports results.

/// Log probability of a finished sequence: per-step token scores plus the
/// final end-marker step, summed left to right.
pub fn score_sequence(scorer: &dyn Scorer, ctx: &DecodeContext, tokens: &[String]) -> f64 {
    let mut prefix: Vec<String> = Vec::new();
    let mut total = 0.0;
    for token in tokens {
        let scores = scorer.score_next(&prefix, ctx);
        total += scores.get(token).copied().unwrap_or(f64::NEG_INFINITY);
        prefix.push(token.clone());
    }
    total + scorer
        .score_next(&prefix, ctx)
        .get(EOS)
        .copied()
        .unwrap_or(f64::NEG_INFINITY)
}

/// Exhaustive-filter reference: rank `candidates` by score (then by tokens)
/// and keep the best `beam_size`.
pub fn exhaustive_beam(
    scorer: &dyn Scorer,
    ctx: &DecodeContext,
    candidates: &BTreeSet<Vec<String>>,
    beam_size: usize,
) -> Vec<DecodedSequence> {
    let mut ranked: Vec<DecodedSequence> = candidates
        .iter()
        .map(|tokens| DecodedSequence {
            tokens: tokens.clone(),
            log_prob: score_sequence(scorer, ctx, tokens),
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.log_prob
            .total_cmp(&a.log_prob)
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    ranked.truncate(beam_size);
    ranked
}

// ---------------------------------------------------------------------------
// Retrieval oracle: enumerate every path up to max_hops from the resolved
// seeds, score it, and sort the way retrieval ranks.

struct OraclePath {
    score: f64,
    key: Vec<String>,
    nodes: Vec<String>,
    relation_iris: Vec<String>,
    directions: Vec<Direction>,
}

fn enumerate_from(
    store: &KgStore,
    terms: &BTreeSet<String>,
    path: &OraclePath,
    max_hops: usize,
    out: &mut Vec<OraclePath>,
) {
    if path.nodes.len() - 1 >= max_hops {
        return;
    }
    let node = path.nodes.last().expect("nonempty");
    let edges = store
        .outgoing(node)
        .iter()
        .map(|(p, o)| (Direction::Outgoing, p, o))
        .chain(
            store
                .incoming(node)
                .iter()
                .map(|(p, s)| (Direction::Incoming, p, s)),
        );
    for (direction, predicate, other) in edges {
        let mut key = path.key.clone();
        key.push(
            match direction {
                Direction::Outgoing => "->",
                Direction::Incoming => "<-",
            }
            .to_string(),
        );
        key.push(predicate.clone());
        key.push(other.clone());
        let mut nodes = path.nodes.clone();
        nodes.push(other.clone());
        let mut relation_iris = path.relation_iris.clone();
        relation_iris.push(predicate.clone());
        let mut directions = path.directions.clone();
        directions.push(direction);
        let extended = OraclePath {
            score: path.score * hop_relevance(label_of(predicate), terms),
            key,
            nodes,
            relation_iris,
            directions,
        };
        enumerate_from(store, terms, &extended, max_hops, out);
        out.push(extended);
    }
}

/// Exhaustive reference for path retrieval: same seed resolution, full
/// enumeration, then filter by `min_score`, rank by score (descending) and
/// path chain (ascending), and truncate to `top_k`.
pub fn exhaustive_paths(
    store: &KgStore,
    topic_entities: &[String],
    terms: &BTreeSet<String>,
    params: &RetrievalParams,
) -> Vec<PathRecord> {
    let mut seeds = BTreeSet::new();
    for topic in topic_entities {
        seeds.extend(
            store
                .resolve_entity(topic)
                .into_iter()
                .filter(|n| !store.outgoing(n).is_empty() || !store.incoming(n).is_empty()),
        );
    }
    let mut all = Vec::new();
    for seed in seeds {
        let root = OraclePath {
            score: 1.0,
            key: vec![seed.clone()],
            nodes: vec![seed],
            relation_iris: Vec::new(),
            directions: Vec::new(),
        };
        enumerate_from(store, terms, &root, params.max_hops, &mut all);
    }
    all.retain(|p| p.score >= params.min_score);
    all.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.key.cmp(&b.key)));
    all.truncate(params.top_k);
    all.into_iter()
        .map(|p| PathRecord {
            relations: p
                .relation_iris
                .iter()
                .map(|iri| label_of(iri).to_string())
                .collect(),
            terminal: label_of(p.nodes.last().expect("nonempty")).to_string(),
            score: p.score,
            nodes: p.nodes,
            relation_iris: p.relation_iris,
            directions: p.directions,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Deterministic pseudo-random corpora for scorer training.

/// Splitmix-style generator; enough randomness for corpus sampling without
/// pulling scorer tests into a particular RNG crate's stream guarantees.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_add(0x9E3779B97F4A7C15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, bound: usize) -> usize {
        (self.next_u64() % bound.max(1) as u64) as usize
    }

    pub fn f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }
}

/// Random training corpus over a vocabulary: `sequences` sequences of
/// 1..=`max_len` tokens each.
pub fn random_corpus(
    rng: &mut TestRng,
    vocab: &[String],
    sequences: usize,
    max_len: usize,
) -> Vec<Vec<String>> {
    (0..sequences)
        .map(|_| {
            let len = 1 + rng.below(max_len);
            (0..len).map(|_| rng.pick(vocab).clone()).collect()
        })
        .collect()
}

/// Frequency map of tokens over a sequence set; handy for building vocab
/// slices in tests.
pub fn token_pool(corpus: &[Vec<String>]) -> BTreeMap<String, usize> {
    let mut pool = BTreeMap::new();
    for seq in corpus {
        for token in seq {
            *pool.entry(token.clone()).or_insert(0) += 1;
        }
    }
    pool
}
