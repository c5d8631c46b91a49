//! Word segmentation, punctuation handling and sentence boundaries.
//!
//! Words are whitespace-separated spans. Word offsets used throughout the
//! crate (prompt loci, surprisal targets) index into this segmentation.

use std::collections::HashSet;
use std::sync::OnceLock;

const ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

/// Version tag of the shipped abbreviation list.
pub const ABBREVIATION_LIST_VERSION: &str = "v1";

const CLOSING: &[char] = &[')', ']', '"', '\'', '\u{201d}', '\u{2019}'];
const TRAILING_PUNCT: &[char] = &[
    ',', '.', '!', '?', ';', ':', ')', ']', '"', '\'', '\u{201d}', '\u{2019}',
];
const LEADING_PUNCT: &[char] = &['(', '[', '"', '\'', '\u{201c}', '\u{2018}'];

fn abbreviations() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        ABBREVIATIONS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    })
}

pub fn is_abbreviation(word: &str) -> bool {
    abbreviations().contains(&word.to_lowercase())
}

/// Byte spans of whitespace-separated words.
pub fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                spans.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Lowercased form with everything but alphanumerics and apostrophes removed.
pub fn normalize_form(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric() || *c == '\'' || *c == '\u{2019}')
        .flat_map(char::to_lowercase)
        .collect()
}

/// Strips punctuation from both ends of a word, keeping inner characters.
pub fn trim_punctuation(word: &str) -> &str {
    word.trim_matches(|c: char| TRAILING_PUNCT.contains(&c) || LEADING_PUNCT.contains(&c))
}

/// A token ends a sentence if it ends in `.`, `!` or `?` (optionally
/// followed by closing quotes or brackets) and is not a listed abbreviation.
pub fn is_sentence_final(token: &str) -> bool {
    let core = token.trim_end_matches(CLOSING);
    if !core.ends_with(['.', '!', '?']) {
        return false;
    }
    !is_abbreviation(core)
}

/// Splits one whitespace word into word-level tokens, detaching leading and
/// trailing punctuation one character at a time. Abbreviations stay whole.
pub fn split_word(word: &str) -> Vec<&str> {
    if is_abbreviation(word) {
        return vec![word];
    }
    let mut leading = Vec::new();
    let mut rest = word;
    while let Some(c) = rest.chars().next() {
        if LEADING_PUNCT.contains(&c) && rest.len() > c.len_utf8() {
            leading.push(&rest[..c.len_utf8()]);
            rest = &rest[c.len_utf8()..];
        } else {
            break;
        }
    }
    let mut trailing = Vec::new();
    while let Some(c) = rest.chars().next_back() {
        let at = rest.len() - c.len_utf8();
        if TRAILING_PUNCT.contains(&c) && at > 0 && !is_abbreviation(rest) {
            trailing.push(&rest[at..]);
            rest = &rest[..at];
        } else {
            break;
        }
    }
    let mut out = leading;
    out.push(rest);
    out.extend(trailing.into_iter().rev());
    out
}

/// Whether a token is rendered without a preceding space.
pub fn attaches_left(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| TRAILING_PUNCT.contains(&c))
}

/// Whether the following token is rendered without a preceding space.
pub fn attaches_right(token: &str) -> bool {
    token == "(" || token == "["
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_follow_whitespace() {
        assert_eq!(word_spans(" a  bc d"), vec![(1, 2), (4, 6), (7, 8)]);
        assert!(word_spans("").is_empty());
    }

    #[test]
    fn split_detaches_punctuation() {
        assert_eq!(split_word("left,"), vec!["left", ","]);
        assert_eq!(split_word("soon."), vec!["soon", "."]);
        assert_eq!(split_word("Mrs."), vec!["Mrs."]);
        assert_eq!(split_word("it's"), vec!["it's"]);
        assert_eq!(split_word("(great!)"), vec!["(", "great", "!", ")"]);
        assert_eq!(split_word("."), vec!["."]);
    }

    #[test]
    fn sentence_final_tokens() {
        assert!(is_sentence_final("soon."));
        assert!(is_sentence_final("really?\""));
        assert!(is_sentence_final("."));
        assert!(!is_sentence_final("Mr."));
        assert!(!is_sentence_final("e.g."));
        assert!(!is_sentence_final("left,"));
    }

    #[test]
    fn normalization_drops_punctuation() {
        assert_eq!(normalize_form("Left,"), "left");
        assert_eq!(normalize_form(","), "");
        assert_eq!(normalize_form("it's"), "it's");
    }
}
