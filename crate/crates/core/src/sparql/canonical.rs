use std::collections::BTreeMap;

use super::ast::{
    span_var_name, LiteralSuffix, Modifier, Pattern, Projection, QueryAst, SortKey, Term,
};
use super::parser::parse_with_declarations;
use super::{PrefixTable, SparqlError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CanonicalizeWarning {
    UnknownNamespace { iri: String },
}

/// A query in canonical form. `text` is exactly `serialize(&ast)` and parses
/// back to `ast`; `var_map` maps original variable names to their canonical
/// `var<N>` names in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalQuery {
    pub text: String,
    pub ast: QueryAst,
    pub var_map: BTreeMap<String, String>,
    pub warnings: Vec<CanonicalizeWarning>,
}

impl CanonicalQuery {
    /// Wraps an already-shaped AST without renaming variables. Used when a
    /// query is rebuilt from parts that are canonical by construction.
    pub fn from_ast(ast: QueryAst) -> Result<Self, SparqlError> {
        ast.validate()?;
        let text = serialize(&ast);
        let var_map = ast
            .variables_in_order()
            .into_iter()
            .map(|v| (v.clone(), v))
            .collect();
        Ok(CanonicalQuery {
            text,
            ast,
            var_map,
            warnings: Vec::new(),
        })
    }
}

/// Deterministic serialization: single-space token separation, lowercase
/// keywords, and a '.' after each triple exactly when the query has two or
/// more triples.
pub fn serialize(ast: &QueryAst) -> String {
    let parts: Vec<String> = ast.tokens().iter().map(|t| t.surface()).collect();
    parts.join(" ")
}

/// Normalizes a query: PREFIX prologue removal, keyword lowercasing, IRI
/// compaction against the prefix table (longest namespace match), variable
/// renaming to `var0..varN` in first-appearance order, and single-space
/// serialization. Preserves semantics; an IRI no table entry covers stays in
/// full form and is reported as a warning.
pub fn canonicalize(text: &str, prefixes: &PrefixTable) -> Result<CanonicalQuery, SparqlError> {
    let (mut ast, table) = parse_with_declarations(text, prefixes)?;
    let mut warnings = Vec::new();
    compact_iris(&mut ast, &table, &mut warnings);
    normalize_span_keywords(&mut ast);
    let var_map = rename_variables(&mut ast);
    let text = serialize(&ast);
    debug_assert!(ast.validate().is_ok());
    Ok(CanonicalQuery {
        text,
        ast,
        var_map,
        warnings,
    })
}

fn compact_iris(ast: &mut QueryAst, table: &PrefixTable, warnings: &mut Vec<CanonicalizeWarning>) {
    let mut visit = |term: &mut Term| compact_term(term, table, warnings);
    for pattern in &mut ast.patterns {
        if let Pattern::Triple(t) = pattern {
            visit(&mut t.subject);
            visit(&mut t.predicate);
            visit(&mut t.object);
        }
    }
}

fn compact_term(term: &mut Term, table: &PrefixTable, warnings: &mut Vec<CanonicalizeWarning>) {
    match term {
        Term::FullIri(iri) => {
            match table.compact(iri) {
                Some((prefix, local)) if compactable_local(local) => {
                    *term = Term::PrefixedIri {
                        prefix: prefix.to_string(),
                        local: local.to_string(),
                    };
                }
                Some(_) => {} // covered by a namespace but not representable as one token
                None => {
                    let warning = CanonicalizeWarning::UnknownNamespace { iri: iri.clone() };
                    if !warnings.contains(&warning) {
                        warnings.push(warning);
                    }
                }
            }
        }
        Term::Literal { suffix, .. } => {
            if let LiteralSuffix::Datatype(dt) = suffix {
                if let Term::FullIri(iri) = dt.as_mut() {
                    if let Some((prefix, local)) = table.compact(iri) {
                        if compactable_local(local) && !local.contains(':') {
                            **dt = Term::PrefixedIri {
                                prefix: prefix.to_string(),
                                local: local.to_string(),
                            };
                        }
                    }
                }
            }
        }
        _ => {}
    }
}

/// A local name can become `prefix:local` only if it survives re-tokenization
/// as a single word with a single colon.
fn compactable_local(local: &str) -> bool {
    !local.is_empty()
        && !local.contains(':')
        && !local
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '{' | '}' | '(' | ')' | '<' | '>' | '"'))
        && !local.starts_with(['?', '$'])
}

const SPAN_KEYWORDS: &[&str] = &[
    "count", "min", "max", "sum", "avg", "asc", "desc", "distinct", "as",
];

/// Lowercases the keyword tokens this subset knows about inside opaque spans
/// (e.g. `COUNT` in a having expression). Other span tokens are untouched.
fn normalize_span_keywords(ast: &mut QueryAst) {
    let fix = |span_tokens: &mut Vec<String>| {
        for token in span_tokens.iter_mut() {
            let lower = token.to_ascii_lowercase();
            if SPAN_KEYWORDS.contains(&lower.as_str()) {
                *token = lower;
            }
        }
    };
    for pattern in &mut ast.patterns {
        if let Pattern::Filter(span) = pattern {
            fix(&mut span.tokens);
        }
    }
    for modifier in &mut ast.modifiers {
        match modifier {
            Modifier::Having(span) => fix(&mut span.tokens),
            Modifier::OrderBy {
                key: SortKey::Expr(span),
                ..
            } => fix(&mut span.tokens),
            _ => {}
        }
    }
}

/// Renames variables to `var0..varN` by first appearance in serialization
/// order and returns the original-to-canonical map.
fn rename_variables(ast: &mut QueryAst) -> BTreeMap<String, String> {
    let order = ast.variables_in_order();
    let map: BTreeMap<String, String> = order
        .iter()
        .enumerate()
        .map(|(i, name)| (name.clone(), format!("var{i}")))
        .collect();

    let rename = |name: &mut String| {
        if let Some(new) = map.get(name.as_str()) {
            *name = new.clone();
        }
    };
    let rename_term = |term: &mut Term| {
        if let Term::Variable(name) = term {
            if let Some(new) = map.get(name.as_str()) {
                *name = new.clone();
            }
        }
    };
    let rename_span = |tokens: &mut Vec<String>| {
        for token in tokens.iter_mut() {
            if let Some(name) = span_var_name(token) {
                if let Some(new) = map.get(name) {
                    *token = new.clone();
                }
            }
        }
    };

    match &mut ast.projection {
        Projection::None => {}
        Projection::Vars(vars) => vars.iter_mut().for_each(rename),
        Projection::Aggregate(agg) => {
            rename(&mut agg.inner);
            rename(&mut agg.alias);
        }
    }
    for pattern in &mut ast.patterns {
        match pattern {
            Pattern::Triple(t) => {
                rename_term(&mut t.subject);
                rename_term(&mut t.predicate);
                rename_term(&mut t.object);
            }
            Pattern::Filter(span) => rename_span(&mut span.tokens),
        }
    }
    for modifier in &mut ast.modifiers {
        match modifier {
            Modifier::OrderBy { key, .. } => match key {
                SortKey::Var(v) => rename(v),
                SortKey::Expr(span) => rename_span(&mut span.tokens),
            },
            Modifier::GroupBy(vars) => vars.iter_mut().for_each(rename),
            Modifier::Having(span) => rename_span(&mut span.tokens),
            Modifier::Limit(_) | Modifier::Offset(_) => {}
        }
    }
    map
}
