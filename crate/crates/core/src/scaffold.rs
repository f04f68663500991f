//! Structure/content decomposition: splitting a canonical query into a
//! placeholder template plus an ordered value assignment, and merging the two
//! back into the original query.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{OntologyList, OntologySnapshot};
use crate::sparql::{
    is_canonical_var, parse_sparql, CanonicalQuery, PrefixTable, QueryToken, SlotCtx, SparqlError,
    TermKind,
};

/// The six content placeholders: entity, concept (class), relation, variable,
/// literal value, and opaque constraint expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placeholder {
    Ent,
    Cct,
    Rel,
    Var,
    Val,
    Con,
}

impl Placeholder {
    pub const ALL: [Placeholder; 6] = [
        Placeholder::Ent,
        Placeholder::Cct,
        Placeholder::Rel,
        Placeholder::Var,
        Placeholder::Val,
        Placeholder::Con,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Placeholder::Ent => "[ent]",
            Placeholder::Cct => "[cct]",
            Placeholder::Rel => "[rel]",
            Placeholder::Var => "[var]",
            Placeholder::Val => "[val]",
            Placeholder::Con => "[con]",
        }
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Placeholder {
    type Err = ScaffoldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Placeholder::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ScaffoldError::UnknownToken {
                token: s.to_string(),
            })
    }
}

/// Reserved structure keywords, in canonical lowercase surface form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keyword {
    Select,
    Ask,
    Where,
    OpenBrace,
    CloseBrace,
    Dot,
    OpenParen,
    CloseParen,
    As,
    Count,
    Min,
    Max,
    Sum,
    Avg,
    Distinct,
    Filter,
    Order,
    By,
    Group,
    Having,
    Limit,
    Offset,
    Asc,
    Desc,
}

impl Keyword {
    pub const ALL: [Keyword; 24] = [
        Keyword::Select,
        Keyword::Ask,
        Keyword::Where,
        Keyword::OpenBrace,
        Keyword::CloseBrace,
        Keyword::Dot,
        Keyword::OpenParen,
        Keyword::CloseParen,
        Keyword::As,
        Keyword::Count,
        Keyword::Min,
        Keyword::Max,
        Keyword::Sum,
        Keyword::Avg,
        Keyword::Distinct,
        Keyword::Filter,
        Keyword::Order,
        Keyword::By,
        Keyword::Group,
        Keyword::Having,
        Keyword::Limit,
        Keyword::Offset,
        Keyword::Asc,
        Keyword::Desc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Select => "select",
            Keyword::Ask => "ask",
            Keyword::Where => "where",
            Keyword::OpenBrace => "{",
            Keyword::CloseBrace => "}",
            Keyword::Dot => ".",
            Keyword::OpenParen => "(",
            Keyword::CloseParen => ")",
            Keyword::As => "as",
            Keyword::Count => "count",
            Keyword::Min => "min",
            Keyword::Max => "max",
            Keyword::Sum => "sum",
            Keyword::Avg => "avg",
            Keyword::Distinct => "distinct",
            Keyword::Filter => "filter",
            Keyword::Order => "order",
            Keyword::By => "by",
            Keyword::Group => "group",
            Keyword::Having => "having",
            Keyword::Limit => "limit",
            Keyword::Offset => "offset",
            Keyword::Asc => "asc",
            Keyword::Desc => "desc",
        }
    }
}

impl fmt::Display for Keyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Keyword {
    type Err = ScaffoldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Keyword::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ScaffoldError::UnknownToken {
                token: s.to_string(),
            })
    }
}

/// One token of a structure template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StructureToken {
    Keyword(Keyword),
    Placeholder(Placeholder),
}

impl StructureToken {
    pub fn as_str(self) -> &'static str {
        match self {
            StructureToken::Keyword(k) => k.as_str(),
            StructureToken::Placeholder(p) => p.as_str(),
        }
    }
}

impl fmt::Display for StructureToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StructureToken {
    type Err = ScaffoldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Keyword::from_str(s)
            .map(StructureToken::Keyword)
            .or_else(|_| Placeholder::from_str(s).map(StructureToken::Placeholder))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScaffoldError {
    #[error("unknown structure token {token:?}")]
    UnknownToken { token: String },
    #[error("structure template is empty")]
    EmptyStructure,
    #[error("malformed content assignment: {0}")]
    ContentSyntax(String),
    #[error("structure has {expected} placeholders but content carries {got} values")]
    ArityMismatch { expected: usize, got: usize },
    #[error("placeholder {position} is {expected} in the structure but the content supplies {found}")]
    TagMismatch {
        position: usize,
        expected: Placeholder,
        found: Placeholder,
    },
    #[error("merged text is not a well-formed query: {0}")]
    Merge(#[from] SparqlError),
}

/// An ordered query skeleton made of keywords and placeholders, e.g.
/// `select [var] where { [ent] [rel] [var] }`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StructureTemplate {
    tokens: Vec<StructureToken>,
}

impl StructureTemplate {
    pub fn new(tokens: Vec<StructureToken>) -> Result<Self, ScaffoldError> {
        if tokens.is_empty() {
            return Err(ScaffoldError::EmptyStructure);
        }
        Ok(Self { tokens })
    }

    pub fn tokens(&self) -> &[StructureToken] {
        &self.tokens
    }

    /// Placeholders in left-to-right order.
    pub fn placeholders(&self) -> impl Iterator<Item = Placeholder> + '_ {
        self.tokens.iter().filter_map(|t| match t {
            StructureToken::Placeholder(p) => Some(*p),
            StructureToken::Keyword(_) => None,
        })
    }
}

impl fmt::Display for StructureTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, token) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{token}")?;
        }
        Ok(())
    }
}

impl FromStr for StructureTemplate {
    type Err = ScaffoldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tokens = s
            .split_whitespace()
            .map(StructureToken::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        StructureTemplate::new(tokens)
    }
}

/// The ordered (tag, value) pairs that fill a template's placeholders, e.g.
/// `[var] var0 [ent] dbr:Apple_Inc. [rel] dbo:foundedBy [var] var0`.
///
/// Values are nonempty; a `[con]` value may span several whitespace-separated
/// tokens; a `[var]` value is always a canonical `var<N>` name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContentAssignment {
    pairs: Vec<(Placeholder, String)>,
}

impl ContentAssignment {
    pub fn new(pairs: Vec<(Placeholder, String)>) -> Result<Self, ScaffoldError> {
        for (tag, value) in &pairs {
            if value.split_whitespace().next().is_none() {
                return Err(ScaffoldError::ContentSyntax(format!(
                    "empty value for {tag}"
                )));
            }
            if *tag == Placeholder::Var && !is_canonical_var(value) {
                return Err(ScaffoldError::ContentSyntax(format!(
                    "[var] value {value:?} is not of the form var<N>"
                )));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(Placeholder, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

impl fmt::Display for ContentAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (tag, value)) in self.pairs.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{tag} {value}")?;
        }
        Ok(())
    }
}

impl FromStr for ContentAssignment {
    type Err = ScaffoldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut pairs: Vec<(Placeholder, String)> = Vec::new();
        let mut current: Option<(Placeholder, Vec<&str>)> = None;
        let mut flush = |entry: Option<(Placeholder, Vec<&str>)>| -> Result<(), ScaffoldError> {
            if let Some((tag, words)) = entry {
                if words.is_empty() {
                    return Err(ScaffoldError::ContentSyntax(format!(
                        "tag {tag} has no value"
                    )));
                }
                pairs.push((tag, words.join(" ")));
            }
            Ok(())
        };
        for word in s.split_whitespace() {
            if let Ok(tag) = Placeholder::from_str(word) {
                flush(current.take())?;
                current = Some((tag, Vec::new()));
            } else {
                match current.as_mut() {
                    Some((_, words)) => words.push(word),
                    None => {
                        return Err(ScaffoldError::ContentSyntax(format!(
                            "expected a placeholder tag, found {word:?}"
                        )))
                    }
                }
            }
        }
        flush(current.take())?;
        ContentAssignment::new(pairs)
    }
}

/// A disagreement between the positional classifier and the ontology lists,
/// recorded with how it was resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaffoldWarning {
    ClassificationAmbiguity {
        term: String,
        positional: Placeholder,
        ontology: Placeholder,
        resolved: Placeholder,
    },
}

impl fmt::Display for ScaffoldWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaffoldWarning::ClassificationAmbiguity {
                term,
                positional,
                ontology,
                resolved,
            } => write!(
                f,
                "term {term} sits in a {positional} position but the ontology lists it as {ontology}; classified as {resolved}"
            ),
        }
    }
}

/// Result of splitting a canonical query.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub structure: StructureTemplate,
    pub content: ContentAssignment,
    pub warnings: Vec<ScaffoldWarning>,
}

impl Decomposition {
    pub fn into_parts(self) -> (StructureTemplate, ContentAssignment) {
        (self.structure, self.content)
    }
}

/// Classifies one IRI occurrence. The position decides first: predicates are
/// `[rel]`, objects of rdf:type are `[cct]`, everything else `[ent]`. An
/// ontology list membership overrides the positional guess unless the
/// override is impossible in that slot of the structure grammar (a predicate
/// must stay `[rel]`, and `[rel]` cannot fill a subject or object).
fn classify_iri(
    surface: &str,
    slot: SlotCtx,
    ontology: Option<&OntologySnapshot>,
    warnings: &mut Vec<ScaffoldWarning>,
) -> Placeholder {
    let positional = match slot {
        SlotCtx::Predicate => Placeholder::Rel,
        SlotCtx::Object { rdf_type: true } => Placeholder::Cct,
        _ => Placeholder::Ent,
    };
    let listed = ontology.and_then(|o| o.lookup(surface)).map(|list| match list {
        OntologyList::Concepts => Placeholder::Cct,
        OntologyList::Relations => Placeholder::Rel,
        OntologyList::Entities => Placeholder::Ent,
    });
    match listed {
        None => positional,
        Some(tag) if tag == positional => positional,
        Some(tag) => {
            let in_predicate = matches!(slot, SlotCtx::Predicate);
            let resolved = if in_predicate {
                Placeholder::Rel
            } else if tag == Placeholder::Rel {
                positional
            } else {
                tag
            };
            warnings.push(ScaffoldWarning::ClassificationAmbiguity {
                term: surface.to_string(),
                positional,
                ontology: tag,
                resolved,
            });
            resolved
        }
    }
}

/// Splits a canonical query into its structure template and content
/// assignment. Placeholders are assigned left to right over the serialized
/// token stream, so `merge` on the result reproduces the query text exactly.
pub fn decompose(query: &CanonicalQuery, ontology: Option<&OntologySnapshot>) -> Decomposition {
    let mut tokens = Vec::new();
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for token in query.ast.tokens() {
        match token {
            QueryToken::Keyword(kw) => {
                let keyword = Keyword::from_str(kw)
                    .expect("serializer keywords are part of the structure vocabulary");
                tokens.push(StructureToken::Keyword(keyword));
            }
            QueryToken::Term {
                surface,
                kind,
                slot,
            } => {
                let tag = match kind {
                    TermKind::Variable => Placeholder::Var,
                    TermKind::Literal => Placeholder::Val,
                    TermKind::Iri => classify_iri(&surface, slot, ontology, &mut warnings),
                };
                tokens.push(StructureToken::Placeholder(tag));
                pairs.push((tag, surface));
            }
            QueryToken::Span { tokens: span } => {
                tokens.push(StructureToken::Placeholder(Placeholder::Con));
                pairs.push((Placeholder::Con, span.join(" ")));
            }
            QueryToken::Value { text } => {
                tokens.push(StructureToken::Placeholder(Placeholder::Val));
                pairs.push((Placeholder::Val, text));
            }
        }
    }
    let structure = StructureTemplate::new(tokens)
        .expect("a canonical query serializes to at least one token");
    let content = ContentAssignment::new(pairs)
        .expect("serializer emits nonempty surfaces and canonical variable names");
    Decomposition {
        structure,
        content,
        warnings,
    }
}

/// Substitutes the content values into the template's placeholders and
/// reparses the result. Placeholder positions in errors are 1-based ordinals
/// over the template's placeholders.
pub fn merge(
    structure: &StructureTemplate,
    content: &ContentAssignment,
) -> Result<CanonicalQuery, ScaffoldError> {
    let slots: Vec<Placeholder> = structure.placeholders().collect();
    if slots.len() != content.len() {
        return Err(ScaffoldError::ArityMismatch {
            expected: slots.len(),
            got: content.len(),
        });
    }
    for (i, (slot, (tag, _))) in slots.iter().zip(content.pairs()).enumerate() {
        if slot != tag {
            return Err(ScaffoldError::TagMismatch {
                position: i + 1,
                expected: *slot,
                found: *tag,
            });
        }
    }
    let mut values = content.pairs().iter().map(|(_, v)| v.as_str());
    let words: Vec<&str> = structure
        .tokens()
        .iter()
        .map(|token| match token {
            StructureToken::Keyword(k) => k.as_str(),
            StructureToken::Placeholder(_) => {
                values.next().expect("arity checked above")
            }
        })
        .collect();
    let text = words.join(" ");
    let ast = parse_sparql(&text, &PrefixTable::new())?;
    Ok(CanonicalQuery::from_ast(ast)?)
}

/// Outcome of the restore check: whether `merge(decompose(q))` reproduces the
/// query text byte-for-byte, with the first divergence when it does not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConsistencyReport {
    Consistent,
    Divergent {
        byte_offset: usize,
        original: String,
        restored: String,
    },
    Failed {
        error: String,
    },
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        matches!(self, ConsistencyReport::Consistent)
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConsistencyReport::Consistent => f.write_str("consistent"),
            ConsistencyReport::Divergent {
                byte_offset,
                original,
                restored,
            } => write!(
                f,
                "divergent at byte {byte_offset}: original {original:?}, restored {restored:?}"
            ),
            ConsistencyReport::Failed { error } => write!(f, "failed: {error}"),
        }
    }
}

fn clip(s: &str, from: usize) -> String {
    let mut start = from.min(s.len());
    while start < s.len() && !s.is_char_boundary(start) {
        start += 1;
    }
    s[start..].chars().take(40).collect()
}

fn first_divergence(original: &str, restored: &str) -> ConsistencyReport {
    let byte_offset = original
        .bytes()
        .zip(restored.bytes())
        .position(|(a, b)| a != b)
        .unwrap_or_else(|| original.len().min(restored.len()));
    ConsistencyReport::Divergent {
        byte_offset,
        original: clip(original, byte_offset),
        restored: clip(restored, byte_offset),
    }
}

/// Verifies that a canonical query survives the decompose/merge round trip.
pub fn check_consistency(
    query: &CanonicalQuery,
    ontology: Option<&OntologySnapshot>,
) -> ConsistencyReport {
    let decomposition = decompose(query, ontology);
    match merge(&decomposition.structure, &decomposition.content) {
        Ok(restored) if restored.text == query.text => ConsistencyReport::Consistent,
        Ok(restored) => first_divergence(&query.text, &restored.text),
        Err(err) => ConsistencyReport::Failed {
            error: err.to_string(),
        },
    }
}

/// [`check_consistency`] starting from raw query text: canonicalizes first,
/// reporting canonicalization failures instead of round-trip failures.
pub fn check_consistency_text(
    text: &str,
    prefixes: &PrefixTable,
    ontology: Option<&OntologySnapshot>,
) -> ConsistencyReport {
    match crate::sparql::canonicalize(text, prefixes) {
        Ok(query) => check_consistency(&query, ontology),
        Err(err) => ConsistencyReport::Failed {
            error: err.to_string(),
        },
    }
}
