//! Lexical validator for the general-purpose baseline language (Python).
//!
//! Checks balanced delimiters, closed string literals, and consistent
//! indentation blocks after `:`-terminated headers. No parsing beyond the
//! lexical structure; execution and semantics are out of scope.

use super::Diagnostic;

const STRING_MARK: char = '\u{1}';

#[derive(Debug)]
struct LineInfo {
    /// Line content with comments removed and string bodies replaced by a
    /// marker character, so structural scans never see string contents.
    code: String,
    /// Physical line begins inside a multiline string.
    starts_in_string: bool,
    depth_at_start: usize,
    depth_at_end: usize,
    ends_with_backslash: bool,
    number: usize,
}

enum ScanState {
    Normal,
    Str { quote: char, triple: bool, escaped: bool, opened_line: usize },
}

/// Validate one baseline snippet. Empty diagnostics means well-formed.
pub fn validate(text: &str) -> Vec<Diagnostic> {
    if text.trim().is_empty() {
        return vec![Diagnostic::new("empty input")];
    }

    let mut lines: Vec<LineInfo> = Vec::new();
    let mut brackets: Vec<(char, usize)> = Vec::new();
    let mut state = ScanState::Normal;

    for (idx, raw) in text.lines().enumerate() {
        let number = idx + 1;
        let starts_in_string = matches!(state, ScanState::Str { .. });
        let depth_at_start = brackets.len();
        let mut code = String::new();
        let mut chars = raw.chars().peekable();

        loop {
            match state {
                ScanState::Normal => {
                    let Some(c) = chars.next() else { break };
                    match c {
                        '#' => break, // comment to end of line
                        '\'' | '"' => {
                            let mut is_triple = false;
                            if chars.peek() == Some(&c) {
                                let mut look = chars.clone();
                                look.next();
                                if look.peek() == Some(&c) {
                                    chars.next();
                                    chars.next();
                                    is_triple = true;
                                }
                            }
                            code.push(STRING_MARK);
                            state = ScanState::Str {
                                quote: c,
                                triple: is_triple,
                                escaped: false,
                                opened_line: number,
                            };
                        }
                        '(' | '[' | '{' => {
                            brackets.push((c, number));
                            code.push(c);
                        }
                        ')' | ']' | '}' => {
                            let expected = match c {
                                ')' => '(',
                                ']' => '[',
                                _ => '{',
                            };
                            match brackets.pop() {
                                Some((open, _)) if open == expected => code.push(c),
                                Some((open, line)) => {
                                    return vec![Diagnostic::at(
                                        format!("mismatched '{open}' closed by '{c}'"),
                                        line,
                                    )];
                                }
                                None => {
                                    return vec![Diagnostic::at(
                                        format!("unbalanced '{c}'"),
                                        number,
                                    )];
                                }
                            }
                        }
                        other => code.push(other),
                    }
                }
                ScanState::Str { quote, triple, ref mut escaped, opened_line } => {
                    let Some(c) = chars.next() else {
                        if !triple {
                            return vec![Diagnostic::at(
                                "unterminated string literal",
                                opened_line,
                            )];
                        }
                        break;
                    };
                    if *escaped {
                        *escaped = false;
                    } else if c == '\\' {
                        *escaped = true;
                    } else if c == quote {
                        if triple {
                            let mut look = chars.clone();
                            if look.next() == Some(quote) && look.next() == Some(quote) {
                                chars.next();
                                chars.next();
                                state = ScanState::Normal;
                            }
                        } else {
                            state = ScanState::Normal;
                        }
                    }
                }
            }
        }

        let ends_with_backslash =
            matches!(state, ScanState::Normal) && code.trim_end().ends_with('\\');
        lines.push(LineInfo {
            code,
            starts_in_string,
            depth_at_start,
            depth_at_end: brackets.len(),
            ends_with_backslash,
            number,
        });
    }

    if let ScanState::Str { opened_line, .. } = state {
        return vec![Diagnostic::at("unterminated string literal", opened_line)];
    }
    if let Some(&(open, line)) = brackets.last() {
        return vec![Diagnostic::at(format!("unbalanced '{open}'"), line)];
    }

    check_indentation(&lines)
}

fn indent_width(code: &str) -> usize {
    let mut width = 0usize;
    for c in code.chars() {
        match c {
            ' ' => width += 1,
            '\t' => width = (width / 8 + 1) * 8,
            _ => break,
        }
    }
    width
}

fn check_indentation(lines: &[LineInfo]) -> Vec<Diagnostic> {
    let mut stack: Vec<usize> = vec![0];
    let mut pending_block: Option<usize> = None;
    let mut prev_backslash = false;

    for line in lines {
        let is_code = !line.starts_in_string && !line.code.trim().is_empty();
        if !is_code {
            // String interiors and blank/comment lines never affect blocks,
            // but a blank line does end a backslash continuation.
            if !line.starts_in_string {
                prev_backslash = false;
            }
            continue;
        }

        let continuation = line.depth_at_start > 0 || prev_backslash;
        if !continuation {
            let indent = indent_width(&line.code);
            match pending_block {
                Some(header_line) => {
                    let top = *stack.last().unwrap();
                    if indent <= top {
                        return vec![Diagnostic::at(
                            "expected an indented block after ':'",
                            header_line,
                        )];
                    }
                    stack.push(indent);
                }
                None => {
                    let top = *stack.last().unwrap();
                    if indent > top {
                        return vec![Diagnostic::at("unexpected indent", line.number)];
                    }
                    while indent < *stack.last().unwrap() {
                        stack.pop();
                    }
                    if indent != *stack.last().unwrap() {
                        return vec![Diagnostic::at("inconsistent dedent", line.number)];
                    }
                }
            }
        }

        // Statements end where bracket depth returns to zero; only there can
        // a ':' open a block.
        if line.depth_at_end == 0 && !line.ends_with_backslash {
            let trimmed = line.code.trim_end();
            pending_block = trimmed.ends_with(':').then_some(line.number);
            prev_backslash = false;
        } else {
            prev_backslash = line.ends_with_backslash;
        }
    }

    if let Some(header_line) = pending_block {
        return vec![Diagnostic::at("expected an indented block after ':'", header_line)];
    }
    Vec::new()
}

#[cfg(test)]
mod tests {
    use super::*;

    const APPENDIX_FUNCTION: &str = "def check_rear_end_collision_constraint(accidents):\n    for accident in accidents:\n        if accident['type'] == 'rear end collision' and len(accident['crashed_vehicles']) != 2:\n            return False\n\n    return True";

    fn passes(text: &str) -> bool {
        validate(text).is_empty()
    }

    #[test]
    fn appendix_function_passes() {
        assert!(passes(APPENDIX_FUNCTION), "{:?}", validate(APPENDIX_FUNCTION));
    }

    #[test]
    fn empty_input_fails() {
        assert_eq!(validate("")[0].message, "empty input");
    }

    #[test]
    fn missing_colon_makes_indent_unexpected() {
        let text = "def f(x)\n    return x > 0";
        let diags = validate(text);
        assert!(diags[0].message.contains("unexpected indent"));
    }

    #[test]
    fn header_without_body_fails() {
        let diags = validate("def f(x):");
        assert!(diags[0].message.contains("expected an indented block"));
    }

    #[test]
    fn same_indent_after_header_fails() {
        let text = "if x:\nreturn True";
        let diags = validate(text);
        assert!(diags[0].message.contains("expected an indented block"));
    }

    #[test]
    fn inconsistent_dedent_fails() {
        let text = "def f(x):\n    if x:\n        return True\n      return False";
        let diags = validate(text);
        assert!(diags[0].message.contains("inconsistent dedent"));
    }

    #[test]
    fn unbalanced_bracket_fails() {
        let text = "def f(x):\n    return x['type' == 1";
        let diags = validate(text);
        assert!(diags[0].message.contains("unbalanced '['"));
    }

    #[test]
    fn mismatched_brackets_fail() {
        let text = "def f(x):\n    return (x]";
        let diags = validate(text);
        assert!(diags[0].message.contains("mismatched"));
    }

    #[test]
    fn unterminated_string_fails() {
        let text = "def f(x):\n    return x == 'open";
        let diags = validate(text);
        assert!(diags[0].message.contains("unterminated string"));
    }

    #[test]
    fn bracket_continuation_is_not_indent() {
        let text = "def f(xs):\n    total = sum([\n        x\n        for x in xs\n    ])\n    return total > 0";
        assert!(passes(text), "{:?}", validate(text));
    }

    #[test]
    fn comments_and_strings_ignored() {
        let text = "def f(x):  # header:\n    s = 'contains : and ( freely'\n    return s == x";
        assert!(passes(text), "{:?}", validate(text));
    }

    #[test]
    fn docstring_passes() {
        let text = "def f(x):\n    \"\"\"Check x.\n\n    Multi-line docstring: with punctuation (unbalanced.\n    \"\"\"\n    return x > 0";
        assert!(passes(text), "{:?}", validate(text));
    }

    #[test]
    fn else_clause_passes() {
        let text = "def f(x):\n    if x > 0:\n        return True\n    else:\n        return False";
        assert!(passes(text), "{:?}", validate(text));
    }

    #[test]
    fn backslash_continuation_passes() {
        let text = "def f(x):\n    y = x + \\\n        1\n    return y > 0";
        assert!(passes(text), "{:?}", validate(text));
    }
}
