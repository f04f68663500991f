use super::SparqlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TokKind {
    Word,
    FullIri,
    Literal,
    Punct,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub text: String,
    pub kind: TokKind,
    pub pos: usize,
}

/// Whitespace-oriented tokenizer. `<...>` IRIs and quoted literals are atomic,
/// braces and parens always stand alone, and '.' is a separate token only when
/// whitespace-delimited so local names like `dbr:Apple_Inc.` survive intact.
/// Variable words additionally break at '.', ',' and ';' since variable names
/// never contain them (`?x.` is `?x` followed by a terminator).
pub(crate) fn tokenize(input: &str) -> Result<Vec<Token>, SparqlError> {
    let chars: Vec<(usize, char)> = input.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        match c {
            '{' | '}' | '(' | ')' => {
                tokens.push(Token {
                    text: c.to_string(),
                    kind: TokKind::Punct,
                    pos,
                });
                i += 1;
            }
            '<' => {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i].1 != '>' {
                    i += 1;
                }
                if i == chars.len() {
                    return Err(SparqlError::Syntax {
                        position: chars[start].0,
                        expected: vec![">".to_string()],
                        found: "end of input".to_string(),
                    });
                }
                let inner: String = chars[start + 1..i].iter().map(|(_, ch)| ch).collect();
                tokens.push(Token {
                    text: inner,
                    kind: TokKind::FullIri,
                    pos,
                });
                i += 1;
            }
            '"' => {
                i += 1;
                let mut closed = false;
                while i < chars.len() {
                    match chars[i].1 {
                        '\\' => i += 2,
                        '"' => {
                            closed = true;
                            i += 1;
                            break;
                        }
                        _ => i += 1,
                    }
                }
                if !closed || i > chars.len() {
                    return Err(SparqlError::Syntax {
                        position: pos,
                        expected: vec!["\"".to_string()],
                        found: "end of input".to_string(),
                    });
                }
                // Optional @lang or ^^datatype suffix stays part of the token.
                if i < chars.len() && chars[i].1 == '@' {
                    i += 1;
                    while i < chars.len()
                        && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '-')
                    {
                        i += 1;
                    }
                } else if i + 1 < chars.len() && chars[i].1 == '^' && chars[i + 1].1 == '^' {
                    i += 2;
                    if i < chars.len() && chars[i].1 == '<' {
                        i += 1;
                        while i < chars.len() && chars[i].1 != '>' {
                            i += 1;
                        }
                        if i == chars.len() {
                            return Err(SparqlError::Syntax {
                                position: pos,
                                expected: vec![">".to_string()],
                                found: "end of input".to_string(),
                            });
                        }
                        i += 1;
                    } else {
                        while i < chars.len() && is_word_char(chars[i].1) {
                            i += 1;
                        }
                    }
                }
                let end = if i < chars.len() { chars[i].0 } else { input.len() };
                tokens.push(Token {
                    text: input[pos..end].to_string(),
                    kind: TokKind::Literal,
                    pos,
                });
            }
            _ => {
                let is_var = c == '?' || c == '$';
                i += 1;
                while i < chars.len() {
                    let ch = chars[i].1;
                    if !is_word_char(ch) {
                        break;
                    }
                    if is_var && matches!(ch, '.' | ',' | ';') {
                        break;
                    }
                    i += 1;
                }
                let end = if i < chars.len() { chars[i].0 } else { input.len() };
                tokens.push(Token {
                    text: input[pos..end].to_string(),
                    kind: TokKind::Word,
                    pos,
                });
            }
        }
    }
    Ok(tokens)
}

fn is_word_char(c: char) -> bool {
    !c.is_whitespace() && !matches!(c, '{' | '}' | '(' | ')' | '<' | '"')
}
