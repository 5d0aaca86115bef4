//! Bracket matching and the fixed catalog of escape repairs.

/// Returns the first balanced `{ ... }` span, ignoring braces inside JSON
/// string literals. Starts that never balance are skipped.
pub fn extract_json(text: &str) -> Option<&str> {
    let mut search_from = 0;
    while let Some(offset) = text[search_from..].find('{') {
        let start = search_from + offset;
        if let Some(end) = match_braces(&text[start..]) {
            return Some(&text[start..start + end]);
        }
        search_from = start + 1;
    }
    None
}

/// Length in bytes of the balanced object at the start of `text`, if any.
fn match_braces(text: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Byte range of the first balanced object, for callers that need positions.
pub fn find_json_span(text: &str) -> Option<std::ops::Range<usize>> {
    let found = extract_json(text)?;
    let start = found.as_ptr() as usize - text.as_ptr() as usize;
    Some(start..start + found.len())
}

fn is_smart_double(c: char) -> bool {
    matches!(c, '\u{201c}' | '\u{201d}' | '\u{201e}' | '\u{201f}')
}

fn next_significant(chars: &[char], from: usize) -> Option<char> {
    chars[from..].iter().copied().find(|c| !c.is_whitespace())
}

/// Best-effort repair of common LLM JSON corruptions. Text before the first
/// `{` and after the object it opens is copied verbatim. Catalog:
///
/// - backslash before a character that cannot follow it is doubled (`\d` → `\\d`);
///   `\'` loses its backslash
/// - raw newlines, carriage returns, tabs and other control characters inside
///   strings are escaped
/// - smart double quotes used as delimiters become `"`
/// - a `"` inside a string that is not followed by `,` `:` `}` `]` or the end
///   of input is treated as content and escaped
/// - trailing commas before `}` or `]` are removed
/// - a string or containers still open at the end of input are closed
///
/// Valid JSON passes through unchanged.
pub fn fix_escapes(text: &str) -> String {
    let Some(start) = text.find('{') else {
        return text.to_string();
    };
    let chars: Vec<char> = text[start..].chars().collect();
    let mut out = String::with_capacity(text.len() + 16);
    out.push_str(&text[..start]);

    #[derive(PartialEq)]
    enum Str {
        None,
        Straight,
        Smart,
    }
    let mut state = Str::None;
    let mut open: Vec<char> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match state {
            Str::None => match c {
                '"' => {
                    state = Str::Straight;
                    out.push('"');
                }
                c if is_smart_double(c) => {
                    state = Str::Smart;
                    out.push('"');
                }
                ',' if matches!(next_significant(&chars, i + 1), Some('}') | Some(']')) => {}
                '{' => {
                    open.push('}');
                    out.push(c);
                }
                '[' => {
                    open.push(']');
                    out.push(c);
                }
                '}' | ']' => {
                    open.pop();
                    out.push(c);
                    if open.is_empty() {
                        out.extend(&chars[i + 1..]);
                        return out;
                    }
                }
                _ => out.push(c),
            },
            Str::Straight | Str::Smart => match c {
                '\\' => match chars.get(i + 1) {
                    Some('"' | '\\' | '/' | 'b' | 'f' | 'n' | 'r' | 't') => {
                        out.push(c);
                        out.push(chars[i + 1]);
                        i += 1;
                    }
                    Some('u')
                        if chars.len() > i + 5
                            && chars[i + 2..i + 6].iter().all(|h| h.is_ascii_hexdigit()) =>
                    {
                        out.extend(&chars[i..i + 6]);
                        i += 5;
                    }
                    Some('\'') => {
                        out.push('\'');
                        i += 1;
                    }
                    _ => out.push_str("\\\\"),
                },
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
                '"' if state == Str::Straight => match next_significant(&chars, i + 1) {
                    None | Some(',' | ':' | '}' | ']') => {
                        state = Str::None;
                        out.push('"');
                    }
                    _ => out.push_str("\\\""),
                },
                '"' => out.push_str("\\\""),
                c if state == Str::Smart && is_smart_double(c) => {
                    state = Str::None;
                    out.push('"');
                }
                _ => out.push(c),
            },
        }
        i += 1;
    }
    if state != Str::None {
        out.push('"');
    }
    out.extend(open.iter().rev());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parses(s: &str) -> bool {
        serde_json::from_str::<Value>(s).is_ok()
    }

    #[test]
    fn nested_object_extracted() {
        assert_eq!(
            extract_json(r#"Thought: ok {"a": {"b": 1}} trailing"#),
            Some(r#"{"a": {"b": 1}}"#)
        );
    }

    #[test]
    fn brace_inside_string_ignored() {
        let text = r#"{"s": "x } y"}"#;
        assert_eq!(extract_json(text), Some(text));
        assert!(parses(text));
    }

    #[test]
    fn no_braces() {
        assert_eq!(extract_json("no braces here"), None);
    }

    #[test]
    fn unclosed_object_is_closed() {
        let fixed = fix_escapes(r#"{"function": "f", "kwargs": {"a": [1, 2"#);
        assert_eq!(fixed, r#"{"function": "f", "kwargs": {"a": [1, 2]}}"#);
        assert_eq!(fix_escapes(r#"{"a": "open"#), r#"{"a": "open"}"#);
    }

    #[test]
    fn unbalanced_first_start_skipped() {
        assert_eq!(extract_json(r#"{ oops { "a": 1 }"#), Some(r#"{ "a": 1 }"#));
    }

    #[test]
    fn windows_path_escaped() {
        let fixed = fix_escapes(r#"{"p": "C:\temp"}"#);
        // \t is a legal escape, so only the unknown ones get doubled
        assert!(parses(&fixed));
        let fixed = fix_escapes(r#"{"p": "C:\data\x"}"#);
        assert_eq!(fixed, r#"{"p": "C:\\data\\x"}"#);
        assert!(parses(&fixed));
    }

    #[test]
    fn trailing_comma_removed() {
        assert_eq!(fix_escapes(r#"{"a": 1,}"#), r#"{"a": 1}"#);
        assert_eq!(fix_escapes("{\"a\": [1, 2, ],\n}"), "{\"a\": [1, 2 ]\n}");
    }

    #[test]
    fn valid_text_unchanged() {
        let valid = r#"prefix "quoted" {"a": "b\"c", "d": [1, {"e": "\u00e9\n"}]} suffix"#;
        assert_eq!(fix_escapes(valid), valid);
    }

    #[test]
    fn raw_newline_in_string() {
        let fixed = fix_escapes("{\"a\": \"line1\nline2\"}");
        assert_eq!(fixed, "{\"a\": \"line1\\nline2\"}");
    }

    #[test]
    fn smart_quotes_normalised() {
        let fixed = fix_escapes("{\u{201c}function\u{201d}: \u{201c}finalize\u{201d}}");
        assert_eq!(fixed, r#"{"function": "finalize"}"#);
    }

    #[test]
    fn stray_inner_quote_escaped() {
        let fixed = fix_escapes(r#"{"msg": "got "timeout" here"}"#);
        assert_eq!(fixed, r#"{"msg": "got \"timeout\" here"}"#);
        assert!(parses(&fixed));
    }
}
