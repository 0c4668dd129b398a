//! Tokenizer and s-expression reader for task files.

use super::{DiagCode, Diagnostic, Location};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokenKind {
    Open,
    Close,
    Atom(String),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub loc: Location,
}

pub(crate) fn tokenize(source: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut line = 1;
    let mut column = 1;
    let mut atom = String::new();
    let mut atom_loc = Location::default();
    let mut in_comment = false;

    let flush = |atom: &mut String, loc: Location, tokens: &mut Vec<Token>| {
        if !atom.is_empty() {
            tokens.push(Token {
                kind: TokenKind::Atom(std::mem::take(atom)),
                loc,
            });
        }
    };

    for ch in source.chars() {
        let here = Location { line, column };
        if in_comment {
            if ch == '\n' {
                in_comment = false;
            }
        } else {
            match ch {
                '(' | ')' => {
                    flush(&mut atom, atom_loc, &mut tokens);
                    tokens.push(Token {
                        kind: if ch == '(' {
                            TokenKind::Open
                        } else {
                            TokenKind::Close
                        },
                        loc: here,
                    });
                }
                ';' => {
                    flush(&mut atom, atom_loc, &mut tokens);
                    in_comment = true;
                }
                c if c.is_whitespace() => flush(&mut atom, atom_loc, &mut tokens),
                c => {
                    if atom.is_empty() {
                        atom_loc = here;
                    }
                    atom.push(c);
                }
            }
        }
        if ch == '\n' {
            line += 1;
            column = 1;
        } else {
            column += 1;
        }
    }
    flush(&mut atom, atom_loc, &mut tokens);
    tokens
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum SExpr {
    Atom(String, Location),
    List(Vec<SExpr>, Location),
}

impl SExpr {
    pub fn loc(&self) -> Location {
        match self {
            SExpr::Atom(_, loc) | SExpr::List(_, loc) => *loc,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(s, _) => Some(s),
            SExpr::List(..) => None,
        }
    }
}

/// Reads every top-level form. Paren mismatches are reported before any
/// tree is built, so a returned tree is always well-nested.
pub(crate) fn read(source: &str) -> Result<Vec<SExpr>, Diagnostic> {
    let tokens = tokenize(source);

    let mut open_stack = Vec::new();
    for tok in &tokens {
        match tok.kind {
            TokenKind::Open => open_stack.push(tok.loc),
            TokenKind::Close => {
                if open_stack.pop().is_none() {
                    return Err(Diagnostic::error(
                        DiagCode::UnbalancedParens,
                        tok.loc,
                        "unexpected ')' with no matching '('",
                    ));
                }
            }
            TokenKind::Atom(_) => {}
        }
    }
    if let Some(loc) = open_stack.first() {
        return Err(Diagnostic::error(
            DiagCode::UnbalancedParens,
            *loc,
            "'(' is never closed",
        ));
    }

    let mut stack: Vec<(Vec<SExpr>, Location)> = vec![(Vec::new(), Location::default())];
    for tok in tokens {
        match tok.kind {
            TokenKind::Open => stack.push((Vec::new(), tok.loc)),
            TokenKind::Close => {
                let (items, loc) = stack.pop().expect("balanced");
                stack
                    .last_mut()
                    .expect("balanced")
                    .0
                    .push(SExpr::List(items, loc));
            }
            TokenKind::Atom(a) => stack
                .last_mut()
                .expect("root")
                .0
                .push(SExpr::Atom(a, tok.loc)),
        }
    }
    Ok(stack.pop().expect("root").0)
}
