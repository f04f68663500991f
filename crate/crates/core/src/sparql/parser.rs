use super::ast::*;
use super::lexer::{tokenize, TokKind, Token};
use super::{PrefixTable, SparqlError};

/// Parses a query against the supported subset. Keywords are matched
/// case-insensitively; a leading PREFIX prologue is consumed and dropped from
/// the AST. Constructs outside the subset (UNION, OPTIONAL, property paths,
/// subqueries, blank nodes, variable predicates) raise `Unsupported`.
pub fn parse_sparql(text: &str, prefixes: &PrefixTable) -> Result<QueryAst, SparqlError> {
    parse_with_declarations(text, prefixes).map(|(ast, _)| ast)
}

/// Like `parse_sparql` but also returns the prefix table with the query's own
/// PREFIX declarations layered on top, which canonicalization needs for
/// compaction.
pub(crate) fn parse_with_declarations(
    text: &str,
    prefixes: &PrefixTable,
) -> Result<(QueryAst, PrefixTable), SparqlError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        i: 0,
        end: text.len(),
    };
    let decls = parser.prologue()?;
    let merged = prefixes.with_declarations(&decls)?;
    let ast = parser.query()?;
    ast.validate()?;
    Ok((ast, merged))
}

const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "union", "optional", "minus", "bind", "values", "service", "graph", "exists", "not",
];

struct Parser {
    tokens: Vec<Token>,
    i: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.i)
    }

    fn bump(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.i).cloned();
        if tok.is_some() {
            self.i += 1;
        }
        tok
    }

    fn pos(&self) -> usize {
        self.peek().map(|t| t.pos).unwrap_or(self.end)
    }

    fn found(&self) -> String {
        match self.peek() {
            Some(t) => format!("{:?}", t.text),
            None => "end of input".to_string(),
        }
    }

    fn err(&self, expected: &[&str]) -> SparqlError {
        SparqlError::Syntax {
            position: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.found(),
        }
    }

    fn unsupported(&self, construct: &str) -> SparqlError {
        SparqlError::Unsupported {
            construct: construct.to_string(),
            position: self.pos(),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(t) if t.kind == TokKind::Word && t.text.eq_ignore_ascii_case(kw))
    }

    fn at_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(t) if t.kind == TokKind::Punct && t.text == p)
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), SparqlError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.err(&[kw]))
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), SparqlError> {
        if self.at_punct(p) {
            self.i += 1;
            Ok(())
        } else {
            Err(self.err(&[p]))
        }
    }

    fn variable_name(&mut self) -> Option<String> {
        let tok = self.peek()?;
        if tok.kind != TokKind::Word {
            return None;
        }
        let name = variable_word(&tok.text)?;
        self.i += 1;
        Some(name)
    }

    fn prologue(&mut self) -> Result<Vec<(String, String)>, SparqlError> {
        let mut decls = Vec::new();
        loop {
            if self.at_keyword("base") {
                return Err(self.unsupported("base declaration"));
            }
            if !self.at_keyword("prefix") {
                return Ok(decls);
            }
            self.i += 1;
            let label = match self.peek() {
                Some(t) if t.kind == TokKind::Word && t.text.ends_with(':') => {
                    let label = t.text[..t.text.len() - 1].to_string();
                    self.i += 1;
                    if label.is_empty() {
                        return Err(self.unsupported("default (empty) prefix label"));
                    }
                    label
                }
                _ => return Err(self.err(&["prefix label ending in ':'"])),
            };
            let namespace = match self.peek() {
                Some(t) if t.kind == TokKind::FullIri => {
                    let ns = t.text.clone();
                    self.i += 1;
                    ns
                }
                _ => return Err(self.err(&["<namespace IRI>"])),
            };
            decls.push((label, namespace));
        }
    }

    fn query(&mut self) -> Result<QueryAst, SparqlError> {
        if self.eat_keyword("select") {
            self.select_query()
        } else if self.eat_keyword("ask") {
            self.ask_query()
        } else if self.at_keyword("construct") || self.at_keyword("describe") {
            let kw = self.peek().unwrap().text.to_ascii_lowercase();
            Err(self.unsupported(&format!("{kw} query form")))
        } else {
            Err(self.err(&["select", "ask", "prefix"]))
        }
    }

    fn select_query(&mut self) -> Result<QueryAst, SparqlError> {
        let distinct = self.eat_keyword("distinct");
        if self.at_keyword("reduced") {
            return Err(self.unsupported("reduced projection"));
        }
        let projection = if self.at_punct("(") {
            self.i += 1;
            Projection::Aggregate(self.aggregate_projection()?)
        } else if matches!(self.peek(), Some(t) if t.text == "*") {
            return Err(self.unsupported("select *"));
        } else {
            let mut vars = Vec::new();
            while let Some(name) = self.variable_name() {
                vars.push(name);
            }
            if vars.is_empty() {
                return Err(self.err(&["variable", "(", "distinct"]));
            }
            Projection::Vars(vars)
        };
        self.expect_keyword("where")?;
        let patterns = self.group()?;
        let modifiers = self.modifiers()?;
        if self.peek().is_some() {
            return Err(self.err(&["order", "group", "having", "limit", "offset", "end of input"]));
        }
        Ok(QueryAst {
            form: QueryForm::Select,
            distinct,
            projection,
            patterns,
            modifiers,
        })
    }

    fn aggregate_projection(&mut self) -> Result<AggregateProjection, SparqlError> {
        let function = match self.peek() {
            Some(t) if t.kind == TokKind::Word => match AggFunc::from_keyword(&t.text) {
                Some(f) => {
                    self.i += 1;
                    f
                }
                None => return Err(self.err(&["count", "min", "max", "sum", "avg"])),
            },
            _ => return Err(self.err(&["count", "min", "max", "sum", "avg"])),
        };
        self.expect_punct("(")?;
        if self.at_keyword("distinct") {
            return Err(self.unsupported("distinct inside an aggregate"));
        }
        let inner = self.variable_name().ok_or_else(|| self.err(&["variable"]))?;
        self.expect_punct(")")?;
        self.expect_keyword("as")?;
        let alias = self.variable_name().ok_or_else(|| self.err(&["variable"]))?;
        self.expect_punct(")")?;
        Ok(AggregateProjection {
            function,
            inner,
            alias,
        })
    }

    fn ask_query(&mut self) -> Result<QueryAst, SparqlError> {
        self.expect_keyword("where")?;
        let patterns = self.group()?;
        if self.peek().is_some() {
            return Err(self.err(&["end of input"]));
        }
        Ok(QueryAst {
            form: QueryForm::Ask,
            distinct: false,
            projection: Projection::None,
            patterns,
            modifiers: Vec::new(),
        })
    }

    fn group(&mut self) -> Result<Vec<Pattern>, SparqlError> {
        self.expect_punct("{")?;
        let mut patterns = Vec::new();
        loop {
            if self.at_punct("}") {
                if patterns.is_empty() {
                    return Err(self.err(&["triple pattern", "filter"]));
                }
                self.i += 1;
                return Ok(patterns);
            }
            if self.peek().is_none() {
                return Err(self.err(&["triple pattern", "filter", "}"]));
            }
            if self.at_punct("{") {
                return Err(self.unsupported("nested group or subquery"));
            }
            if let Some(t) = self.peek() {
                if t.kind == TokKind::Word {
                    let lower = t.text.to_ascii_lowercase();
                    if UNSUPPORTED_KEYWORDS.contains(&lower.as_str()) {
                        return Err(self.unsupported(&lower));
                    }
                }
            }
            if self.eat_keyword("filter") {
                let span = self.constraint_span()?;
                patterns.push(Pattern::Filter(span));
            } else {
                let subject = self.term(SlotPos::Subject)?;
                let predicate = self.term(SlotPos::Predicate)?;
                let object = self.term(SlotPos::Object)?;
                patterns.push(Pattern::Triple(TriplePattern {
                    subject,
                    predicate,
                    object,
                }));
            }
            // Triple terminators and trailing dots after filters are accepted
            // in either style and normalized at serialization time.
            while matches!(self.peek(), Some(t) if t.kind == TokKind::Word && t.text == ".") {
                self.i += 1;
            }
        }
    }

    fn term(&mut self, slot: SlotPos) -> Result<Term, SparqlError> {
        let expected: &[&str] = match slot {
            SlotPos::Subject => &["variable", "IRI"],
            SlotPos::Predicate => &["IRI"],
            SlotPos::Object => &["variable", "IRI", "literal"],
        };
        let Some(tok) = self.peek() else {
            return Err(self.err(expected));
        };
        let tok = tok.clone();
        match tok.kind {
            TokKind::FullIri => {
                self.i += 1;
                Ok(Term::FullIri(tok.text))
            }
            TokKind::Literal => {
                if slot == SlotPos::Object {
                    self.i += 1;
                    parse_literal(&tok.text, tok.pos)
                } else {
                    Err(self.err(expected))
                }
            }
            TokKind::Punct => Err(self.err(expected)),
            TokKind::Word => {
                let text = tok.text.as_str();
                if text.starts_with("_:") || text.starts_with('[') {
                    return Err(self.unsupported("blank node"));
                }
                if text == ";" {
                    return Err(self.unsupported("predicate-object list"));
                }
                if text == "," {
                    return Err(self.unsupported("object list"));
                }
                if let Some(name) = variable_word(text) {
                    if slot == SlotPos::Predicate {
                        return Err(self.unsupported("variable predicate"));
                    }
                    self.i += 1;
                    return Ok(Term::Variable(name));
                }
                if text == "a" {
                    if slot == SlotPos::Predicate {
                        self.i += 1;
                        return Ok(Term::PrefixedIri {
                            prefix: "rdf".to_string(),
                            local: "type".to_string(),
                        });
                    }
                    return Err(self.err(expected));
                }
                if is_numeric(text) {
                    if slot == SlotPos::Object {
                        self.i += 1;
                        return Ok(Term::Literal {
                            lexical: text.to_string(),
                            suffix: LiteralSuffix::None,
                        });
                    }
                    return Err(self.err(expected));
                }
                self.check_property_path(text, slot, tok.pos)?;
                if let Some(colon) = text.find(':') {
                    let (prefix, local) = (&text[..colon], &text[colon + 1..]);
                    if local.contains(':') {
                        return Err(self.err(expected));
                    }
                    self.check_property_path(text, slot, tok.pos)?;
                    self.i += 1;
                    return Ok(Term::PrefixedIri {
                        prefix: prefix.to_string(),
                        local: local.to_string(),
                    });
                }
                Err(self.err(expected))
            }
        }
    }

    fn check_property_path(
        &self,
        text: &str,
        slot: SlotPos,
        position: usize,
    ) -> Result<(), SparqlError> {
        if slot == SlotPos::Predicate
            && (text.contains('/')
                || text.contains('|')
                || text.contains('^')
                || text.ends_with('*')
                || text.ends_with('+'))
        {
            return Err(SparqlError::Unsupported {
                construct: "property path".to_string(),
                position,
            });
        }
        Ok(())
    }

    /// Filter and having expressions: either a parenthesized group or a
    /// function-call form `name ( ... )`. The span is kept opaque but must be
    /// paren-balanced.
    fn constraint_span(&mut self) -> Result<ExprSpan, SparqlError> {
        if self.at_punct("(") {
            return self.balanced_group();
        }
        match self.peek() {
            Some(t) if t.kind == TokKind::Word && !t.text.starts_with(['?', '$']) => {
                let head = t.text.clone();
                self.i += 1;
                if !self.at_punct("(") {
                    return Err(self.err(&["("]));
                }
                let mut span = self.balanced_group()?;
                span.tokens.insert(0, head);
                Ok(span)
            }
            _ => Err(self.err(&["(", "function name"])),
        }
    }

    fn balanced_group(&mut self) -> Result<ExprSpan, SparqlError> {
        self.expect_punct("(")?;
        let mut tokens = vec!["(".to_string()];
        let mut depth = 1usize;
        while depth > 0 {
            let Some(tok) = self.bump() else {
                return Err(self.err(&[")"]));
            };
            match tok.kind {
                TokKind::Punct if tok.text == "(" => depth += 1,
                TokKind::Punct if tok.text == ")" => depth -= 1,
                TokKind::Punct => {
                    return Err(SparqlError::Syntax {
                        position: tok.pos,
                        expected: vec![")".to_string()],
                        found: format!("{:?}", tok.text),
                    })
                }
                _ => {}
            }
            let text = match tok.kind {
                TokKind::FullIri => format!("<{}>", tok.text),
                _ => tok.text.clone(),
            };
            tokens.push(text);
        }
        Ok(ExprSpan { tokens })
    }

    fn modifiers(&mut self) -> Result<Vec<Modifier>, SparqlError> {
        let mut modifiers = Vec::new();
        loop {
            if self.eat_keyword("order") {
                self.expect_keyword("by")?;
                let direction = if self.eat_keyword("asc") {
                    Some(SortDirection::Asc)
                } else if self.eat_keyword("desc") {
                    Some(SortDirection::Desc)
                } else {
                    None
                };
                let key = self.sort_key()?;
                modifiers.push(Modifier::OrderBy { direction, key });
            } else if self.eat_keyword("group") {
                self.expect_keyword("by")?;
                let mut vars = Vec::new();
                while let Some(name) = self.variable_name() {
                    vars.push(name);
                }
                if vars.is_empty() {
                    return Err(self.err(&["variable"]));
                }
                modifiers.push(Modifier::GroupBy(vars));
            } else if self.eat_keyword("having") {
                modifiers.push(Modifier::Having(self.constraint_span()?));
            } else if self.eat_keyword("limit") {
                modifiers.push(Modifier::Limit(self.integer()?));
            } else if self.eat_keyword("offset") {
                modifiers.push(Modifier::Offset(self.integer()?));
            } else {
                return Ok(modifiers);
            }
        }
    }

    /// Sort keys that are bare variables (including the `DESC(?x)` sugar with
    /// a single variable inside) normalize to a variable key; anything else is
    /// an opaque span.
    fn sort_key(&mut self) -> Result<SortKey, SparqlError> {
        if let Some(name) = self.variable_name() {
            return Ok(SortKey::Var(name));
        }
        let span = self.constraint_span()?;
        if span.tokens.len() == 3 && span.tokens[0] == "(" && span.tokens[2] == ")" {
            if let Some(name) = variable_word(&span.tokens[1]) {
                return Ok(SortKey::Var(name));
            }
        }
        Ok(SortKey::Expr(span))
    }

    fn integer(&mut self) -> Result<u64, SparqlError> {
        match self.peek() {
            Some(t) if t.kind == TokKind::Word && t.text.chars().all(|c| c.is_ascii_digit()) => {
                let n = t.text.parse::<u64>().map_err(|_| self.err(&["integer"]))?;
                self.i += 1;
                Ok(n)
            }
            _ => Err(self.err(&["integer"])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlotPos {
    Subject,
    Predicate,
    Object,
}

/// `?x` / `$x` sigiled variables, plus bare canonical `var<N>` names so
/// canonical text round-trips.
fn variable_word(text: &str) -> Option<String> {
    if let Some(rest) = text.strip_prefix(['?', '$']) {
        if !rest.is_empty()
            && rest
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            return Some(rest.to_string());
        }
        return None;
    }
    if super::ast::is_canonical_var(text) {
        return Some(text.to_string());
    }
    None
}

fn is_numeric(text: &str) -> bool {
    let rest = text.strip_prefix(['+', '-']).unwrap_or(text);
    if rest.is_empty() {
        return false;
    }
    let (mantissa, exponent) = match rest.find(['e', 'E']) {
        Some(i) => (&rest[..i], Some(&rest[i + 1..])),
        None => (rest, None),
    };
    let mut parts = mantissa.splitn(2, '.');
    let int_part = parts.next().unwrap_or("");
    let frac_part = parts.next();
    let digits_ok = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_digit());
    let mantissa_ok = match frac_part {
        Some(frac) => {
            (digits_ok(int_part) || int_part.is_empty()) && digits_ok(frac)
        }
        None => digits_ok(int_part),
    };
    let exponent_ok = match exponent {
        Some(e) => {
            let e = e.strip_prefix(['+', '-']).unwrap_or(e);
            digits_ok(e)
        }
        None => true,
    };
    mantissa_ok && exponent_ok
}

fn parse_literal(surface: &str, position: usize) -> Result<Term, SparqlError> {
    // The lexer guarantees the shape: quoted string plus optional suffix.
    let mut close = None;
    let bytes: Vec<char> = surface.chars().collect();
    let mut j = 1;
    while j < bytes.len() {
        match bytes[j] {
            '\\' => j += 2,
            '"' => {
                close = Some(j);
                break;
            }
            _ => j += 1,
        }
    }
    let Some(close) = close else {
        return Err(SparqlError::Syntax {
            position,
            expected: vec!["\"".to_string()],
            found: "unterminated literal".to_string(),
        });
    };
    let byte_close = bytes[..=close].iter().map(|c| c.len_utf8()).sum::<usize>();
    let lexical = surface[..byte_close].to_string();
    let rest = &surface[byte_close..];
    let suffix = if rest.is_empty() {
        LiteralSuffix::None
    } else if let Some(tag) = rest.strip_prefix('@') {
        LiteralSuffix::Lang(tag.to_string())
    } else if let Some(dt) = rest.strip_prefix("^^") {
        if let Some(inner) = dt.strip_prefix('<').and_then(|s| s.strip_suffix('>')) {
            LiteralSuffix::Datatype(Box::new(Term::FullIri(inner.to_string())))
        } else if let Some(colon) = dt.find(':') {
            LiteralSuffix::Datatype(Box::new(Term::PrefixedIri {
                prefix: dt[..colon].to_string(),
                local: dt[colon + 1..].to_string(),
            }))
        } else {
            return Err(SparqlError::Syntax {
                position,
                expected: vec!["datatype IRI".to_string()],
                found: format!("{dt:?}"),
            });
        }
    } else {
        return Err(SparqlError::Syntax {
            position,
            expected: vec!["@lang".to_string(), "^^datatype".to_string()],
            found: format!("{rest:?}"),
        });
    };
    Ok(Term::Literal { lexical, suffix })
}
