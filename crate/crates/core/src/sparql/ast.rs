use std::fmt;

use super::{SparqlError, RDF_TYPE_IRI};

/// A term of the supported subset. Variable names are stored without the
/// `?`/`$` sigil; canonical variables match `var<N>` and serialize bare.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Variable(String),
    PrefixedIri { prefix: String, local: String },
    FullIri(String),
    Literal { lexical: String, suffix: LiteralSuffix },
}

/// Language tag or datatype attached to a literal. `lexical` keeps the exact
/// written surface (quotes included for strings, bare for numbers), so
/// serialization is byte-faithful.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LiteralSuffix {
    None,
    Lang(String),
    Datatype(Box<Term>),
}

impl Term {
    pub fn is_iri(&self) -> bool {
        matches!(self, Term::PrefixedIri { .. } | Term::FullIri(_))
    }

    pub fn is_variable(&self) -> bool {
        matches!(self, Term::Variable(_))
    }

    /// Local part of an IRI term: text after ':' for prefixed names, after the
    /// last '/' or '#' for full IRIs.
    pub fn local_name(&self) -> Option<&str> {
        match self {
            Term::PrefixedIri { local, .. } => Some(local),
            Term::FullIri(iri) => {
                let cut = iri.rfind(['/', '#']).map(|i| i + 1).unwrap_or(0);
                Some(&iri[cut..])
            }
            _ => None,
        }
    }

    pub fn is_rdf_type(&self) -> bool {
        match self {
            Term::PrefixedIri { prefix, local } => prefix == "rdf" && local == "type",
            Term::FullIri(iri) => iri == RDF_TYPE_IRI,
            _ => false,
        }
    }

    pub fn surface(&self) -> String {
        match self {
            Term::Variable(name) => {
                if is_canonical_var(name) {
                    name.clone()
                } else {
                    format!("?{name}")
                }
            }
            Term::PrefixedIri { prefix, local } => format!("{prefix}:{local}"),
            Term::FullIri(iri) => format!("<{iri}>"),
            Term::Literal { lexical, suffix } => match suffix {
                LiteralSuffix::None => lexical.clone(),
                LiteralSuffix::Lang(tag) => format!("{lexical}@{tag}"),
                LiteralSuffix::Datatype(dt) => format!("{lexical}^^{}", dt.surface()),
            },
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.surface())
    }
}

/// True for names of the canonical form `var<N>`.
pub(crate) fn is_canonical_var(name: &str) -> bool {
    name.len() > 3 && name.starts_with("var") && name[3..].chars().all(|c| c.is_ascii_digit())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryForm {
    Select,
    Ask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Count,
    Min,
    Max,
    Sum,
    Avg,
}

impl AggFunc {
    pub fn keyword(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        match word.to_ascii_lowercase().as_str() {
            "count" => Some(AggFunc::Count),
            "min" => Some(AggFunc::Min),
            "max" => Some(AggFunc::Max),
            "sum" => Some(AggFunc::Sum),
            "avg" => Some(AggFunc::Avg),
            _ => None,
        }
    }
}

/// `( count ( inner ) as alias )` style projection; alias must differ from inner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateProjection {
    pub function: AggFunc,
    pub inner: String,
    pub alias: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Projection {
    /// ASK queries project nothing.
    None,
    Vars(Vec<String>),
    Aggregate(AggregateProjection),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriplePattern {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

/// Opaque balanced-token span used for filter, having, and complex sort
/// expressions. Tokens are stored individually so variables inside the span
/// can still be renamed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExprSpan {
    pub tokens: Vec<String>,
}

impl ExprSpan {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Triple(TriplePattern),
    Filter(ExprSpan),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortDirection {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SortKey {
    Var(String),
    Expr(ExprSpan),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Modifier {
    OrderBy {
        direction: Option<SortDirection>,
        key: SortKey,
    },
    GroupBy(Vec<String>),
    Having(ExprSpan),
    Limit(u64),
    Offset(u64),
}

/// Parsed query. `patterns` preserves source order of triples and filters;
/// `modifiers` preserves source order of solution modifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAst {
    pub form: QueryForm,
    pub distinct: bool,
    pub projection: Projection,
    pub patterns: Vec<Pattern>,
    pub modifiers: Vec<Modifier>,
}

/// Syntactic slot a term occupies, with enough context for placeholder
/// classification downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotCtx {
    Subject,
    Predicate,
    Object { rdf_type: bool },
    ProjVar,
    AggInner,
    AggAlias,
    OrderVar,
    GroupVar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    Variable,
    Iri,
    Literal,
}

/// One token of the serialized query, tagged with its role.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryToken {
    Keyword(&'static str),
    Term {
        surface: String,
        kind: TermKind,
        slot: SlotCtx,
    },
    Span {
        tokens: Vec<String>,
    },
    Value {
        text: String,
    },
}

impl QueryToken {
    pub fn surface(&self) -> String {
        match self {
            QueryToken::Keyword(kw) => (*kw).to_string(),
            QueryToken::Term { surface, .. } => surface.clone(),
            QueryToken::Span { tokens } => tokens.join(" "),
            QueryToken::Value { text } => text.clone(),
        }
    }
}

fn term_token(term: &Term, slot: SlotCtx) -> QueryToken {
    let kind = match term {
        Term::Variable(_) => TermKind::Variable,
        Term::Literal { .. } => TermKind::Literal,
        _ => TermKind::Iri,
    };
    QueryToken::Term {
        surface: term.surface(),
        kind,
        slot,
    }
}

fn var_token(name: &str, slot: SlotCtx) -> QueryToken {
    term_token(&Term::Variable(name.to_string()), slot)
}

impl QueryAst {
    /// Emits the query as a role-tagged token sequence. Joining the surfaces
    /// with single spaces yields the canonical text; a triple terminator '.'
    /// follows each triple exactly when the query has two or more triples.
    pub fn tokens(&self) -> Vec<QueryToken> {
        use QueryToken::Keyword;
        let mut out = Vec::new();
        match self.form {
            QueryForm::Select => out.push(Keyword("select")),
            QueryForm::Ask => out.push(Keyword("ask")),
        }
        if self.distinct {
            out.push(Keyword("distinct"));
        }
        match &self.projection {
            Projection::None => {}
            Projection::Vars(vars) => {
                for v in vars {
                    out.push(var_token(v, SlotCtx::ProjVar));
                }
            }
            Projection::Aggregate(agg) => {
                out.push(Keyword("("));
                out.push(Keyword(agg.function.keyword()));
                out.push(Keyword("("));
                out.push(var_token(&agg.inner, SlotCtx::AggInner));
                out.push(Keyword(")"));
                out.push(Keyword("as"));
                out.push(var_token(&agg.alias, SlotCtx::AggAlias));
                out.push(Keyword(")"));
            }
        }
        out.push(Keyword("where"));
        out.push(Keyword("{"));
        let triple_count = self
            .patterns
            .iter()
            .filter(|p| matches!(p, Pattern::Triple(_)))
            .count();
        for pattern in &self.patterns {
            match pattern {
                Pattern::Triple(t) => {
                    out.push(term_token(&t.subject, SlotCtx::Subject));
                    out.push(term_token(&t.predicate, SlotCtx::Predicate));
                    out.push(term_token(
                        &t.object,
                        SlotCtx::Object {
                            rdf_type: t.predicate.is_rdf_type(),
                        },
                    ));
                    if triple_count >= 2 {
                        out.push(Keyword("."));
                    }
                }
                Pattern::Filter(span) => {
                    out.push(Keyword("filter"));
                    out.push(QueryToken::Span {
                        tokens: span.tokens.clone(),
                    });
                }
            }
        }
        out.push(Keyword("}"));
        for modifier in &self.modifiers {
            match modifier {
                Modifier::OrderBy { direction, key } => {
                    out.push(Keyword("order"));
                    out.push(Keyword("by"));
                    match direction {
                        Some(SortDirection::Asc) => out.push(Keyword("asc")),
                        Some(SortDirection::Desc) => out.push(Keyword("desc")),
                        None => {}
                    }
                    match key {
                        SortKey::Var(v) => out.push(var_token(v, SlotCtx::OrderVar)),
                        SortKey::Expr(span) => out.push(QueryToken::Span {
                            tokens: span.tokens.clone(),
                        }),
                    }
                }
                Modifier::GroupBy(vars) => {
                    out.push(Keyword("group"));
                    out.push(Keyword("by"));
                    for v in vars {
                        out.push(var_token(v, SlotCtx::GroupVar));
                    }
                }
                Modifier::Having(span) => {
                    out.push(Keyword("having"));
                    out.push(QueryToken::Span {
                        tokens: span.tokens.clone(),
                    });
                }
                Modifier::Limit(n) => {
                    out.push(Keyword("limit"));
                    out.push(QueryToken::Value { text: n.to_string() });
                }
                Modifier::Offset(n) => {
                    out.push(Keyword("offset"));
                    out.push(QueryToken::Value { text: n.to_string() });
                }
            }
        }
        out
    }

    /// Variable names in first-appearance order over the serialized token
    /// stream, including variables inside opaque spans.
    pub fn variables_in_order(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for token in self.tokens() {
            match token {
                QueryToken::Term {
                    surface,
                    kind: TermKind::Variable,
                    ..
                } => {
                    let name = surface.trim_start_matches(['?', '$']).to_string();
                    if !seen.contains(&name) {
                        seen.push(name);
                    }
                }
                QueryToken::Span { tokens } => {
                    for t in &tokens {
                        if let Some(name) = span_var_name(t) {
                            if !seen.iter().any(|s| s == name) {
                                seen.push(name.to_string());
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        seen
    }

    /// Checks structural invariants: ASK queries carry no projection or
    /// modifiers, aggregate aliases are fresh, and every referenced variable
    /// is grounded in the graph pattern.
    pub fn validate(&self) -> Result<(), SparqlError> {
        if self.patterns.is_empty() {
            return Err(SparqlError::Syntax {
                position: 0,
                expected: vec!["at least one triple or filter".to_string()],
                found: "empty group".to_string(),
            });
        }
        match self.form {
            QueryForm::Ask => {
                if self.projection != Projection::None
                    || !self.modifiers.is_empty()
                    || self.distinct
                {
                    return Err(SparqlError::Unsupported {
                        construct: "projection or modifiers on an ask query".to_string(),
                        position: 0,
                    });
                }
            }
            QueryForm::Select => match &self.projection {
                Projection::None => {
                    return Err(SparqlError::Syntax {
                        position: 0,
                        expected: vec!["projection".to_string()],
                        found: "none".to_string(),
                    })
                }
                Projection::Vars(vars) if vars.is_empty() => {
                    return Err(SparqlError::Syntax {
                        position: 0,
                        expected: vec!["variable".to_string()],
                        found: "empty projection".to_string(),
                    })
                }
                Projection::Aggregate(agg) if agg.alias == agg.inner => {
                    return Err(SparqlError::UnboundVariable {
                        name: agg.alias.clone(),
                    })
                }
                _ => {}
            },
        }

        let mut pattern_vars: Vec<String> = Vec::new();
        for pattern in &self.patterns {
            match pattern {
                Pattern::Triple(t) => {
                    for term in [&t.subject, &t.predicate, &t.object] {
                        if let Term::Variable(name) = term {
                            pattern_vars.push(name.clone());
                        }
                    }
                }
                Pattern::Filter(span) => {
                    for token in &span.tokens {
                        if let Some(name) = span_var_name(token) {
                            pattern_vars.push(name.to_string());
                        }
                    }
                }
            }
        }

        let alias = match &self.projection {
            Projection::Aggregate(agg) => Some(agg.alias.as_str()),
            _ => None,
        };
        let check = |name: &str, allow_alias: bool| -> Result<(), SparqlError> {
            let bound = pattern_vars.iter().any(|v| v == name)
                || (allow_alias && alias == Some(name));
            if bound {
                Ok(())
            } else {
                Err(SparqlError::UnboundVariable {
                    name: name.to_string(),
                })
            }
        };
        match &self.projection {
            Projection::None => {}
            Projection::Vars(vars) => {
                for v in vars {
                    check(v, false)?;
                }
            }
            Projection::Aggregate(agg) => {
                check(&agg.inner, false)?;
            }
        }
        for modifier in &self.modifiers {
            match modifier {
                Modifier::OrderBy { key, .. } => match key {
                    SortKey::Var(v) => check(v, true)?,
                    SortKey::Expr(span) => {
                        for token in &span.tokens {
                            if let Some(name) = span_var_name(token) {
                                check(name, true)?;
                            }
                        }
                    }
                },
                Modifier::GroupBy(vars) => {
                    for v in vars {
                        check(v, true)?;
                    }
                }
                Modifier::Having(span) => {
                    for token in &span.tokens {
                        if let Some(name) = span_var_name(token) {
                            check(name, true)?;
                        }
                    }
                }
                Modifier::Limit(_) | Modifier::Offset(_) => {}
            }
        }
        Ok(())
    }
}

/// Variable name carried by a span token, if any: sigiled `?x`/`$x` forms or
/// bare canonical `var<N>` names.
pub(crate) fn span_var_name(token: &str) -> Option<&str> {
    if let Some(rest) = token.strip_prefix(['?', '$']) {
        if !rest.is_empty() {
            return Some(rest);
        }
        return None;
    }
    if is_canonical_var(token) {
        return Some(token);
    }
    None
}
