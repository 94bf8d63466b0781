//! Subset validator for Alloy facts.
//!
//! Accepts `'fact' IDENT? '{' BODY '}'` (repeated) with balanced braces,
//! parentheses and brackets. Body tokens are limited to quantifiers,
//! declarations, the bar, the relational/logical operator set and plain
//! identifiers; reserved Alloy keywords outside that set fail, as does any
//! unexpected punctuation.

use super::Diagnostic;

const QUANTIFIERS: [&str; 5] = ["all", "some", "no", "one", "lone"];
const WORD_OPERATORS: [&str; 6] = ["in", "not", "implies", "else", "and", "or"];

/// Reserved words that may not appear inside a fact body in this subset.
const FORBIDDEN_KEYWORDS: [&str; 13] = [
    "sig", "pred", "fun", "assert", "check", "run", "module", "open", "extends", "abstract",
    "let", "enum", "disj",
];

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number,
    Open(char),
    Close(char),
    Punct(&'static str),
}

struct Lexed {
    token: Token,
    line: usize,
}

fn lex(text: &str) -> Result<Vec<Lexed>, Diagnostic> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1usize;

    macro_rules! two_char {
        ($first:expr, $second:expr, $combined:expr, $single:expr) => {{
            chars.next();
            if chars.peek() == Some(&$second) {
                chars.next();
                tokens.push(Lexed { token: Token::Punct($combined), line });
            } else {
                match $single {
                    Some(p) => tokens.push(Lexed { token: Token::Punct(p), line }),
                    None => {
                        return Err(Diagnostic::at(
                            format!("unexpected character '{}'", $first),
                            line,
                        ))
                    }
                }
            }
        }};
    }

    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                line += 1;
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            '/' => {
                chars.next();
                match chars.peek() {
                    Some('/') => {
                        for inner in chars.by_ref() {
                            if inner == '\n' {
                                line += 1;
                                break;
                            }
                        }
                    }
                    Some('*') => {
                        chars.next();
                        let mut prev = ' ';
                        for inner in chars.by_ref() {
                            if inner == '\n' {
                                line += 1;
                            }
                            if prev == '*' && inner == '/' {
                                break;
                            }
                            prev = inner;
                        }
                    }
                    _ => return Err(Diagnostic::at("unexpected character '/'", line)),
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '\'' {
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
                    if c.is_ascii_digit() {
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Lexed { token: Token::Number, line });
            }
            '{' | '(' | '[' => {
                chars.next();
                tokens.push(Lexed { token: Token::Open(c), line });
            }
            '}' | ')' | ']' => {
                chars.next();
                tokens.push(Lexed { token: Token::Close(c), line });
            }
            '-' => {
                chars.next();
                match chars.peek() {
                    Some('>') => {
                        chars.next();
                        tokens.push(Lexed { token: Token::Punct("->"), line });
                    }
                    Some('-') => {
                        // Line comment.
                        for inner in chars.by_ref() {
                            if inner == '\n' {
                                line += 1;
                                break;
                            }
                        }
                    }
                    _ => tokens.push(Lexed { token: Token::Punct("-"), line }),
                }
            }
            '=' => two_char!('=', '>', "=>", Some("=")),
            '!' => two_char!('!', '=', "!=", Some("!")),
            '&' => two_char!('&', '&', "&&", Some("&")),
            '|' => two_char!('|', '|', "||", Some("|")),
            '<' => two_char!('<', '=', "<=", Some("<")),
            '>' => two_char!('>', '=', ">=", Some(">")),
            '#' | '+' | '.' | '~' | '^' | '*' | ':' | ',' => {
                chars.next();
                let p = match c {
                    '#' => "#",
                    '+' => "+",
                    '.' => ".",
                    '~' => "~",
                    '^' => "^",
                    '*' => "*",
                    ':' => ":",
                    _ => ",",
                };
                tokens.push(Lexed { token: Token::Punct(p), line });
            }
            other => {
                return Err(Diagnostic::at(format!("unexpected character '{other}'"), line));
            }
        }
    }
    Ok(tokens)
}

/// Validate a snippet of one or more Alloy facts. Empty diagnostics means
/// well-formed; the single-fact shaping rule is checked elsewhere.
pub fn validate(text: &str) -> Vec<Diagnostic> {
    if text.trim().is_empty() {
        return vec![Diagnostic::new("empty input")];
    }
    let tokens = match lex(text) {
        Ok(tokens) => tokens,
        Err(diag) => return vec![diag],
    };

    let mut pos = 0usize;
    let mut facts = 0usize;
    while pos < tokens.len() {
        match &tokens[pos].token {
            Token::Ident(name) if name == "fact" => pos += 1,
            _ => {
                return vec![Diagnostic::at(
                    if facts == 0 { "expected 'fact'" } else { "unexpected token after fact" },
                    tokens[pos].line,
                )]
            }
        }
        if let Some(Lexed { token: Token::Ident(name), .. }) = tokens.get(pos) {
            if name != "fact" {
                pos += 1;
            }
        }
        match tokens.get(pos) {
            Some(Lexed { token: Token::Open('{'), .. }) => pos += 1,
            Some(t) => return vec![Diagnostic::at("expected '{' after 'fact'", t.line)],
            None => return vec![Diagnostic::new("expected '{' after 'fact'")],
        }

        let (consumed, diags) = validate_body(&tokens[pos..]);
        if !diags.is_empty() {
            return diags;
        }
        pos += consumed;
        facts += 1;
    }

    if facts == 0 {
        return vec![Diagnostic::new("expected 'fact'")];
    }
    Vec::new()
}

/// Scan a fact body up to and including its closing brace, enforcing the
/// token whitelist and delimiter balance.
fn validate_body(tokens: &[Lexed]) -> (usize, Vec<Diagnostic>) {
    let mut stack: Vec<(char, usize)> = vec![('{', tokens.first().map(|t| t.line).unwrap_or(1))];
    let mut pos = 0usize;

    while let Some(t) = tokens.get(pos) {
        match &t.token {
            Token::Open(c) => {
                stack.push((*c, t.line));
                pos += 1;
            }
            Token::Close(c) => {
                let expected = match c {
                    '}' => '{',
                    ')' => '(',
                    ']' => '[',
                    _ => unreachable!(),
                };
                match stack.pop() {
                    Some((open, _)) if open == expected => {
                        pos += 1;
                        if stack.is_empty() {
                            return (pos, Vec::new());
                        }
                    }
                    Some((open, line)) => {
                        return (
                            pos,
                            vec![Diagnostic::at(
                                format!("mismatched '{open}' closed by '{c}'"),
                                line,
                            )],
                        );
                    }
                    None => {
                        return (pos, vec![Diagnostic::at(format!("unbalanced '{c}'"), t.line)]);
                    }
                }
            }
            Token::Ident(name) => {
                if FORBIDDEN_KEYWORDS.contains(&name.as_str()) {
                    return (
                        pos,
                        vec![Diagnostic::at(format!("unknown keyword '{name}'"), t.line)],
                    );
                }
                // Quantifiers, word operators and plain identifiers all pass.
                let _ = (QUANTIFIERS, WORD_OPERATORS);
                pos += 1;
            }
            Token::Number | Token::Punct(_) => pos += 1,
        }
    }

    let (open, line) = stack.last().copied().unwrap_or(('{', 1));
    (pos, vec![Diagnostic::at(format!("unbalanced '{open}'"), line)])
}
