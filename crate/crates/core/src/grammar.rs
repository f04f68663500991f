//! The structure grammar and its finite-state acceptor.
//!
//! Grammar over the structure vocabulary, in EBNF:
//!
//! ```text
//! query  := select | ask
//! select := "select" proj "where" group mod*
//! ask    := "ask" "where" group
//! proj   := "distinct"? [var]+ | "(" agg "(" [var] ")" "as" [var] ")"
//! agg    := "count" | "min" | "max" | "sum" | "avg"
//! group  := "{" ( triple | "filter" [con] )+ "}"
//! triple := subj [rel] obj "."?
//! subj   := [ent] | [var] | [cct]
//! obj    := [ent] | [cct] | [var] | [val]
//! mod    := "order" "by" ("asc"|"desc")? ([var]|[con])
//!         | "group" "by" [var]+
//!         | "having" [con]
//!         | "limit" [val]
//!         | "offset" [val]
//! ```
//!
//! The acceptor is built directly from these productions so each state can
//! report its legal next tokens for constrained decoding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::scaffold::{Keyword, Placeholder, ScaffoldError, StructureTemplate, StructureToken};

pub type StateId = usize;

const SUBJECT_TAGS: [Placeholder; 3] = [Placeholder::Ent, Placeholder::Var, Placeholder::Cct];
const OBJECT_TAGS: [Placeholder; 4] = [
    Placeholder::Ent,
    Placeholder::Cct,
    Placeholder::Var,
    Placeholder::Val,
];

fn kw(keyword: Keyword) -> StructureToken {
    StructureToken::Keyword(keyword)
}

fn ph(tag: Placeholder) -> StructureToken {
    StructureToken::Placeholder(tag)
}

struct StateInfo {
    name: &'static str,
    accepting: bool,
}

/// Deterministic finite-state acceptor for the structure grammar.
pub struct ConstraintAutomaton {
    states: Vec<StateInfo>,
    transitions: Vec<BTreeMap<StructureToken, StateId>>,
    start: StateId,
}

struct Builder {
    states: Vec<StateInfo>,
    transitions: Vec<BTreeMap<StructureToken, StateId>>,
}

impl Builder {
    fn state(&mut self, name: &'static str, accepting: bool) -> StateId {
        self.states.push(StateInfo { name, accepting });
        self.transitions.push(BTreeMap::new());
        self.states.len() - 1
    }

    fn edge(&mut self, from: StateId, token: StructureToken, to: StateId) {
        let previous = self.transitions[from].insert(token, to);
        assert!(
            previous.is_none(),
            "nondeterministic edge from {} on {}",
            self.states[from].name,
            token
        );
    }

    /// Wires a `group` sub-automaton. Entry takes `{`; the closing `}` of a
    /// completed group leads to `close_target`. Returns nothing; all states
    /// are internal to the group.
    fn group(&mut self, entry: StateId, close_target: StateId, names: [&'static str; 6]) {
        let [n_open, n_subj, n_pred, n_obj, n_item, n_filter] = names;
        let open = self.state(n_open, false);
        let subj = self.state(n_subj, false);
        let pred = self.state(n_pred, false);
        let obj = self.state(n_obj, false);
        let item = self.state(n_item, false);
        let filter = self.state(n_filter, false);
        self.edge(entry, kw(Keyword::OpenBrace), open);
        for state in [open, obj, item] {
            for tag in SUBJECT_TAGS {
                self.edge(state, ph(tag), subj);
            }
            self.edge(state, kw(Keyword::Filter), filter);
        }
        self.edge(subj, ph(Placeholder::Rel), pred);
        for tag in OBJECT_TAGS {
            self.edge(pred, ph(tag), obj);
        }
        self.edge(obj, kw(Keyword::Dot), item);
        self.edge(filter, ph(Placeholder::Con), item);
        for state in [obj, item] {
            self.edge(state, kw(Keyword::CloseBrace), close_target);
        }
    }
}

impl ConstraintAutomaton {
    pub fn new() -> Self {
        let mut b = Builder {
            states: Vec::new(),
            transitions: Vec::new(),
        };
        let start = b.state("start", false);

        // ask := "ask" "where" group, then end of query.
        let after_ask = b.state("after-ask", false);
        let ask_where = b.state("ask-where", false);
        let ask_done = b.state("ask-done", true);
        b.edge(start, kw(Keyword::Ask), after_ask);
        b.edge(after_ask, kw(Keyword::Where), ask_where);
        b.group(
            ask_where,
            ask_done,
            [
                "ask-group-open",
                "ask-subject",
                "ask-predicate",
                "ask-object",
                "ask-item",
                "ask-filter",
            ],
        );

        // select := "select" proj "where" group mod*
        let after_select = b.state("after-select", false);
        let after_distinct = b.state("after-distinct", false);
        let proj_vars = b.state("projection-vars", false);
        let select_where = b.state("select-where", false);
        b.edge(start, kw(Keyword::Select), after_select);
        b.edge(after_select, kw(Keyword::Distinct), after_distinct);
        b.edge(after_select, ph(Placeholder::Var), proj_vars);
        b.edge(after_distinct, ph(Placeholder::Var), proj_vars);
        b.edge(proj_vars, ph(Placeholder::Var), proj_vars);
        b.edge(proj_vars, kw(Keyword::Where), select_where);

        // proj := "(" agg "(" [var] ")" "as" [var] ")"
        let agg_open = b.state("aggregate-open", false);
        let agg_fn = b.state("aggregate-function", false);
        let agg_inner_open = b.state("aggregate-inner-open", false);
        let agg_inner_var = b.state("aggregate-inner-var", false);
        let agg_inner_close = b.state("aggregate-inner-close", false);
        let agg_as = b.state("aggregate-as", false);
        let agg_alias = b.state("aggregate-alias", false);
        b.edge(after_select, kw(Keyword::OpenParen), agg_open);
        for f in [
            Keyword::Count,
            Keyword::Min,
            Keyword::Max,
            Keyword::Sum,
            Keyword::Avg,
        ] {
            b.edge(agg_open, kw(f), agg_fn);
        }
        b.edge(agg_fn, kw(Keyword::OpenParen), agg_inner_open);
        b.edge(agg_inner_open, ph(Placeholder::Var), agg_inner_var);
        b.edge(agg_inner_var, kw(Keyword::CloseParen), agg_inner_close);
        b.edge(agg_inner_close, kw(Keyword::As), agg_as);
        b.edge(agg_as, ph(Placeholder::Var), agg_alias);
        let agg_close = b.state("aggregate-close", false);
        b.edge(agg_alias, kw(Keyword::CloseParen), agg_close);
        b.edge(agg_close, kw(Keyword::Where), select_where);

        // The solution-modifier hub doubles as the select accepting state.
        let mod_hub = b.state("modifier-hub", true);
        b.group(
            select_where,
            mod_hub,
            [
                "select-group-open",
                "select-subject",
                "select-predicate",
                "select-object",
                "select-item",
                "select-filter",
            ],
        );

        let order_1 = b.state("order", false);
        let order_2 = b.state("order-by", false);
        let order_dir = b.state("order-by-direction", false);
        let group_1 = b.state("group", false);
        let group_2 = b.state("group-by", false);
        let group_vars = b.state("group-by-vars", true);
        let having_1 = b.state("having", false);
        let limit_1 = b.state("limit", false);
        let offset_1 = b.state("offset", false);

        // Modifiers may start from the hub or directly after "group by"
        // variables, since [var]+ there has no closing delimiter.
        for from in [mod_hub, group_vars] {
            b.edge(from, kw(Keyword::Order), order_1);
            b.edge(from, kw(Keyword::Group), group_1);
            b.edge(from, kw(Keyword::Having), having_1);
            b.edge(from, kw(Keyword::Limit), limit_1);
            b.edge(from, kw(Keyword::Offset), offset_1);
        }
        b.edge(order_1, kw(Keyword::By), order_2);
        b.edge(order_2, kw(Keyword::Asc), order_dir);
        b.edge(order_2, kw(Keyword::Desc), order_dir);
        for state in [order_2, order_dir] {
            b.edge(state, ph(Placeholder::Var), mod_hub);
            b.edge(state, ph(Placeholder::Con), mod_hub);
        }
        b.edge(group_1, kw(Keyword::By), group_2);
        b.edge(group_2, ph(Placeholder::Var), group_vars);
        b.edge(group_vars, ph(Placeholder::Var), group_vars);
        b.edge(having_1, ph(Placeholder::Con), mod_hub);
        b.edge(limit_1, ph(Placeholder::Val), mod_hub);
        b.edge(offset_1, ph(Placeholder::Val), mod_hub);

        ConstraintAutomaton {
            states: b.states,
            transitions: b.transitions,
            start,
        }
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, state: StateId) -> &'static str {
        self.states[state].name
    }

    pub fn is_accepting(&self, state: StateId) -> bool {
        self.states[state].accepting
    }

    pub fn step(&self, state: StateId, token: StructureToken) -> Option<StateId> {
        self.transitions[state].get(&token).copied()
    }

    /// Tokens with an outgoing transition from `state`.
    pub fn next_tokens(&self, state: StateId) -> BTreeSet<StructureToken> {
        self.transitions[state].keys().copied().collect()
    }

    pub fn accepts(&self, tokens: &[StructureToken]) -> bool {
        let mut state = self.start;
        for token in tokens {
            match self.step(state, *token) {
                Some(next) => state = next,
                None => return false,
            }
        }
        self.is_accepting(state)
    }

    /// Runs the acceptor over a token sequence. Rejection carries the index
    /// of the first offending token (the sequence length when the input is a
    /// valid but incomplete prefix) and the token set legal at that point.
    pub fn validate(&self, tokens: &[StructureToken]) -> StructureValidation {
        let mut state = self.start;
        for (position, token) in tokens.iter().enumerate() {
            match self.step(state, *token) {
                Some(next) => state = next,
                None => {
                    return StructureValidation::Invalid {
                        position,
                        expected: self.next_tokens(state),
                    }
                }
            }
        }
        if self.is_accepting(state) {
            StructureValidation::Valid
        } else {
            StructureValidation::Invalid {
                position: tokens.len(),
                expected: self.next_tokens(state),
            }
        }
    }

    /// Graphviz rendering of the acceptor, one edge per transition.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph structure_grammar {\n  rankdir=LR;\n");
        for (id, info) in self.states.iter().enumerate() {
            let shape = if info.accepting {
                "doublecircle"
            } else {
                "circle"
            };
            out.push_str(&format!("  s{id} [label=\"{}\" shape={shape}];\n", info.name));
        }
        for (from, edges) in self.transitions.iter().enumerate() {
            for (token, to) in edges {
                let label = token.as_str().replace('{', "\\{").replace('}', "\\}");
                out.push_str(&format!("  s{from} -> s{to} [label=\"{label}\"];\n"));
            }
        }
        out.push_str("}\n");
        out
    }
}

impl Default for ConstraintAutomaton {
    fn default() -> Self {
        Self::new()
    }
}

/// The process-wide acceptor instance.
pub fn automaton() -> &'static ConstraintAutomaton {
    static AUTOMATON: OnceLock<ConstraintAutomaton> = OnceLock::new();
    AUTOMATON.get_or_init(ConstraintAutomaton::new)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StructureValidation {
    Valid,
    Invalid {
        position: usize,
        expected: BTreeSet<StructureToken>,
    },
}

impl StructureValidation {
    pub fn is_valid(&self) -> bool {
        matches!(self, StructureValidation::Valid)
    }
}

impl fmt::Display for StructureValidation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureValidation::Valid => f.write_str("valid"),
            StructureValidation::Invalid { position, expected } => {
                let expected: Vec<&str> = expected.iter().map(|t| t.as_str()).collect();
                write!(
                    f,
                    "invalid at token {position}, expected one of {{{}}}",
                    expected.join(", ")
                )
            }
        }
    }
}

/// Validates a template against the grammar.
pub fn validate_structure(template: &StructureTemplate) -> StructureValidation {
    automaton().validate(template.tokens())
}

/// Parses a line of structure tokens and validates it. Unknown tokens are a
/// hard error, not an Invalid verdict.
pub fn validate_structure_text(text: &str) -> Result<StructureValidation, ScaffoldError> {
    let template: StructureTemplate = text.parse()?;
    Ok(validate_structure(&template))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComplexityLabel {
    SingleHop,
    MultiHop,
}

impl fmt::Display for ComplexityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComplexityLabel::SingleHop => f.write_str("single-hop"),
            ComplexityLabel::MultiHop => f.write_str("multi-hop"),
        }
    }
}

/// Hop count and feature flags of a valid template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureClass {
    pub hops: usize,
    pub label: ComplexityLabel,
    pub aggregate: bool,
    pub constraint: bool,
}

impl fmt::Display for StructureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label)?;
        match (self.aggregate, self.constraint) {
            (true, true) => f.write_str(" with constraints and aggregates"),
            (true, false) => f.write_str(" with aggregates"),
            (false, true) => f.write_str(" with constraints"),
            (false, false) => Ok(()),
        }
    }
}

/// Classifies a grammar-valid template. Each triple contributes exactly one
/// `[rel]`, so the hop count is the `[rel]` count.
pub fn classify_structure(template: &StructureTemplate) -> StructureClass {
    let mut hops = 0;
    let mut aggregate = false;
    let mut constraint = false;
    for token in template.tokens() {
        match token {
            StructureToken::Placeholder(Placeholder::Rel) => hops += 1,
            StructureToken::Keyword(
                Keyword::Count | Keyword::Min | Keyword::Max | Keyword::Sum | Keyword::Avg,
            ) => aggregate = true,
            StructureToken::Keyword(
                Keyword::Filter | Keyword::Having | Keyword::Order | Keyword::Group,
            ) => constraint = true,
            _ => {}
        }
    }
    StructureClass {
        hops,
        label: if hops >= 2 {
            ComplexityLabel::MultiHop
        } else {
            ComplexityLabel::SingleHop
        },
        aggregate,
        constraint,
    }
}
