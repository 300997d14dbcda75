//! Text normalization, sentence segmentation and tokenization shared by
//! every stage.

/// Canonical form for drug names and ADE terms: lowercase, trimmed,
/// internal whitespace collapsed, trailing punctuation stripped.
pub fn normalize_term(raw: &str) -> String {
    let collapsed = raw
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() && c != ')' && c != ']')
        .trim_end()
        .to_string()
}

/// Split text into sentences on `.`, `!` or `?` followed by whitespace.
///
/// The terminator stays with its sentence; whitespace between sentences is
/// dropped. Text without terminators is a single sentence.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = chars.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    let sentence = text[start..end].trim();
                    if !sentence.is_empty() {
                        out.push(sentence);
                    }
                    start = end;
                }
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Lowercase and split on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Tokens re-joined with single spaces; used for whole-phrase containment.
pub fn token_string(text: &str) -> String {
    tokenize(text).join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_terms() {
        assert_eq!(normalize_term("  Tamoxifen  "), "tamoxifen");
        assert_eq!(normalize_term("Hot   Flashes!!"), "hot flashes");
        assert_eq!(normalize_term("Cisplatin."), "cisplatin");
        assert_eq!(normalize_term("5-FU"), "5-fu");
    }

    #[test]
    fn splits_sentences_on_terminator_plus_space() {
        let s = split_sentences("I took it. Felt sick! Why? 2.5mg is odd");
        assert_eq!(s, vec!["I took it.", "Felt sick!", "Why?", "2.5mg is odd"]);
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn tokenizes_on_non_alphanumeric() {
        assert_eq!(tokenize("Life-threatening, NAUSEA!"), vec!["life", "threatening", "nausea"]);
        assert!(tokenize("--").is_empty());
    }
}
