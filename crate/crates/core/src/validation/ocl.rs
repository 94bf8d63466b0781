//! Subset validator for OCL invariants.
//!
//! Accepts `context IDENT ('inv' IDENT? ':' EXPR)+` where the expression is
//! a token stream with balanced parentheses, closed string literals, the
//! usual comparison/arithmetic/logical operators, dot navigation, and
//! arrow calls restricted to the standard collection operations. An arrow
//! call naming anything else fails as a hallucinated operation.

use super::Diagnostic;

/// Collection operations accepted after `->`.
const ARROW_OPERATIONS: [&str; 24] = [
    "size",
    "isEmpty",
    "notEmpty",
    "forAll",
    "exists",
    "select",
    "reject",
    "collect",
    "includes",
    "excludes",
    "includesAll",
    "excludesAll",
    "sum",
    "asSet",
    "asBag",
    "asSequence",
    "one",
    "any",
    "count",
    "isUnique",
    "first",
    "last",
    "union",
    "intersection",
];

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number,
    Str,
    Arrow,
    Op(char),
    MultiOp(&'static str),
    Qualifier, // ::
    OpenParen,
    CloseParen,
    Colon,
    Comma,
    Bar,
}

struct Lexed {
    token: Token,
    line: usize,
}

fn lex(text: &str) -> Result<Vec<Lexed>, Diagnostic> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1usize;
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                line += 1;
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '\'' => {
                chars.next();
                let mut closed = false;
                for inner in chars.by_ref() {
                    if inner == '\n' {
                        line += 1;
                    }
                    if inner == '\'' {
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err(Diagnostic::at("unterminated string literal", line));
                }
                tokens.push(Lexed { token: Token::Str, line });
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        ident.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Lexed { token: Token::Ident(ident), line });
            }
            c if c.is_ascii_digit() => {
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() || c == '.' {
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Lexed { token: Token::Number, line });
            }
            '-' => {
                chars.next();
                if chars.peek() == Some(&'>') {
                    chars.next();
                    tokens.push(Lexed { token: Token::Arrow, line });
                } else if chars.peek() == Some(&'-') {
                    // Line comment.
                    for inner in chars.by_ref() {
                        if inner == '\n' {
                            line += 1;
                            break;
                        }
                    }
                } else {
                    tokens.push(Lexed { token: Token::Op('-'), line });
                }
            }
            '<' => {
                chars.next();
                match chars.peek() {
                    Some('=') => {
                        chars.next();
                        tokens.push(Lexed { token: Token::MultiOp("<="), line });
                    }
                    Some('>') => {
                        chars.next();
                        tokens.push(Lexed { token: Token::MultiOp("<>"), line });
                    }
                    _ => tokens.push(Lexed { token: Token::Op('<'), line }),
                }
            }
            '>' => {
                chars.next();
                if chars.peek() == Some(&'=') {
                    chars.next();
                    tokens.push(Lexed { token: Token::MultiOp(">="), line });
                } else {
                    tokens.push(Lexed { token: Token::Op('>'), line });
                }
            }
            ':' => {
                chars.next();
                if chars.peek() == Some(&':') {
                    chars.next();
                    tokens.push(Lexed { token: Token::Qualifier, line });
                } else {
                    tokens.push(Lexed { token: Token::Colon, line });
                }
            }
            '=' | '+' | '*' | '/' | '.' => {
                chars.next();
                tokens.push(Lexed { token: Token::Op(c), line });
            }
            '(' => {
                chars.next();
                tokens.push(Lexed { token: Token::OpenParen, line });
            }
            ')' => {
                chars.next();
                tokens.push(Lexed { token: Token::CloseParen, line });
            }
            ',' => {
                chars.next();
                tokens.push(Lexed { token: Token::Comma, line });
            }
            '|' => {
                chars.next();
                tokens.push(Lexed { token: Token::Bar, line });
            }
            other => {
                return Err(Diagnostic::at(format!("unexpected character '{other}'"), line));
            }
        }
    }
    Ok(tokens)
}

/// Validate one OCL invariant block. Empty diagnostics means well-formed.
pub fn validate(text: &str) -> Vec<Diagnostic> {
    if text.trim().is_empty() {
        return vec![Diagnostic::new("empty input")];
    }
    let tokens = match lex(text) {
        Ok(tokens) => tokens,
        Err(diag) => return vec![diag],
    };

    let mut pos = 0usize;
    let ident_of = |t: &Lexed| match &t.token {
        Token::Ident(name) => Some(name.clone()),
        _ => None,
    };

    match tokens.get(pos) {
        Some(t) if ident_of(t).as_deref() == Some("context") => pos += 1,
        Some(t) => return vec![Diagnostic::at("expected 'context'", t.line)],
        None => return vec![Diagnostic::new("expected 'context'")],
    }
    match tokens.get(pos) {
        Some(t) if matches!(t.token, Token::Ident(ref name) if name != "inv") => pos += 1,
        Some(t) => return vec![Diagnostic::at("expected classifier name after 'context'", t.line)],
        None => return vec![Diagnostic::new("expected classifier name after 'context'")],
    }

    let mut invariants = 0usize;
    loop {
        match tokens.get(pos) {
            Some(t) if ident_of(t).as_deref() == Some("inv") => pos += 1,
            Some(t) => {
                return vec![Diagnostic::at("expected 'inv'", t.line)];
            }
            None => break,
        }
        // Optional invariant name.
        if let Some(t) = tokens.get(pos) {
            if matches!(t.token, Token::Ident(ref name) if name != "inv") {
                pos += 1;
            }
        }
        match tokens.get(pos) {
            Some(t) if t.token == Token::Colon => pos += 1,
            Some(t) => return vec![Diagnostic::at("expected ':' after 'inv'", t.line)],
            None => return vec![Diagnostic::new("expected ':' after 'inv'")],
        }

        let (consumed, diags) = validate_expression(&tokens[pos..]);
        if !diags.is_empty() {
            return diags;
        }
        if consumed == 0 {
            let line = tokens.get(pos.saturating_sub(1)).map(|t| t.line).unwrap_or(1);
            return vec![Diagnostic::at("empty invariant expression", line)];
        }
        pos += consumed;
        invariants += 1;
    }

    if invariants == 0 {
        return vec![Diagnostic::new("expected 'inv'")];
    }
    Vec::new()
}

/// Scan expression tokens up to the next top-level `inv` or end of input.
/// Returns tokens consumed plus any diagnostics.
fn validate_expression(tokens: &[Lexed]) -> (usize, Vec<Diagnostic>) {
    let mut depth = 0usize;
    let mut open_lines: Vec<usize> = Vec::new();
    let mut pos = 0usize;

    while let Some(t) = tokens.get(pos) {
        match &t.token {
            Token::Ident(name) if name == "inv" && depth == 0 => break,
            Token::OpenParen => {
                depth += 1;
                open_lines.push(t.line);
                pos += 1;
            }
            Token::CloseParen => {
                if depth == 0 {
                    return (pos, vec![Diagnostic::at("unbalanced ')'", t.line)]);
                }
                depth -= 1;
                open_lines.pop();
                pos += 1;
            }
            Token::Arrow => {
                pos += 1;
                match tokens.get(pos) {
                    Some(Lexed { token: Token::Ident(op), line }) => {
                        if !ARROW_OPERATIONS.contains(&op.as_str()) {
                            return (
                                pos,
                                vec![Diagnostic::at(
                                    format!("unknown operation '->{op}'"),
                                    *line,
                                )],
                            );
                        }
                        pos += 1;
                    }
                    other => {
                        let line = other.map(|t| t.line).unwrap_or(t.line);
                        return (
                            pos,
                            vec![Diagnostic::at("expected operation name after '->'", line)],
                        );
                    }
                }
            }
            // Iterator syntax (x | expr), declarations and argument lists
            // live inside parentheses only.
            Token::Bar | Token::Comma | Token::Colon => {
                if depth == 0 {
                    let what = match t.token {
                        Token::Bar => "'|'",
                        Token::Comma => "','",
                        _ => "':'",
                    };
                    return (
                        pos,
                        vec![Diagnostic::at(
                            format!("unexpected {what} outside parentheses"),
                            t.line,
                        )],
                    );
                }
                pos += 1;
            }
            Token::Ident(_)
            | Token::Number
            | Token::Str
            | Token::Op(_)
            | Token::MultiOp(_)
            | Token::Qualifier => pos += 1,
        }
    }

    if depth > 0 {
        let line = open_lines.last().copied().unwrap_or(1);
        return (pos, vec![Diagnostic::at("unbalanced '('", line)]);
    }
    (pos, Vec::new())
}
