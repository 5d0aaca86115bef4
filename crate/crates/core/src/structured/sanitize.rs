use std::ops::Range;

use super::StructuredError;

/// Ordered (sensitive, clean) pairs. Sensitive entries are single characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstitutionTable {
    pairs: Vec<(char, &'static str)>,
}

impl Default for SubstitutionTable {
    /// Double quotes become single quotes; brackets and braces become C digraphs.
    fn default() -> Self {
        Self {
            pairs: vec![
                ('"', "'"),
                ('[', "<:"),
                (']', ":>"),
                ('{', "<%"),
                ('}', "%>"),
            ],
        }
    }
}

impl SubstitutionTable {
    pub fn pairs(&self) -> &[(char, &'static str)] {
        &self.pairs
    }

    pub fn is_sensitive(&self, c: char) -> bool {
        self.pairs.iter().any(|(s, _)| *s == c)
    }

    pub fn apply(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        self.apply_into(text, &mut out);
        out
    }

    fn apply_into(&self, text: &str, out: &mut String) {
        for c in text.chars() {
            match self.pairs.iter().find(|(s, _)| *s == c) {
                Some((_, clean)) => out.push_str(clean),
                None => out.push(c),
            }
        }
    }

    /// Maps clean substitutes back. Exact inverse only when the original text
    /// contained none of the substitutes.
    pub fn invert(&self, text: &str) -> String {
        // longest substitutes first so "<:" wins over "'"
        let mut by_len: Vec<&(char, &str)> = self.pairs.iter().collect();
        by_len.sort_by_key(|(_, clean)| std::cmp::Reverse(clean.len()));
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        'outer: while let Some(c) = rest.chars().next() {
            for (sensitive, clean) in &by_len {
                if rest.starts_with(clean) {
                    out.push(*sensitive);
                    rest = &rest[clean.len()..];
                    continue 'outer;
                }
            }
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
        out
    }
}

/// Applies the default table outside `protected` byte ranges.
pub fn sanitize_prompt(text: &str, protected: &[Range<usize>]) -> Result<String, StructuredError> {
    sanitize_with(&SubstitutionTable::default(), text, protected)
}

pub fn sanitize_with(
    table: &SubstitutionTable,
    text: &str,
    protected: &[Range<usize>],
) -> Result<String, StructuredError> {
    let mut spans: Vec<Range<usize>> = protected.to_vec();
    spans.sort_by_key(|r| r.start);
    for span in &spans {
        if span.start > span.end || span.end > text.len() {
            return Err(StructuredError::Precondition(format!(
                "protected span {span:?} out of bounds for text of length {}",
                text.len()
            )));
        }
        if !text.is_char_boundary(span.start) || !text.is_char_boundary(span.end) {
            return Err(StructuredError::Precondition(format!(
                "protected span {span:?} splits a character"
            )));
        }
    }
    for pair in spans.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(StructuredError::Precondition(format!(
                "protected spans {:?} and {:?} overlap",
                pair[0], pair[1]
            )));
        }
    }
    let mut out = String::with_capacity(text.len() + text.len() / 8);
    let mut pos = 0;
    for span in &spans {
        table.apply_into(&text[pos..span.start], &mut out);
        out.push_str(&text[span.clone()]);
        pos = span.end;
    }
    table.apply_into(&text[pos..], &mut out);
    Ok(out)
}
