use crate::text::{is_sentence_final, word_spans};

/// Cuts `text` after the first sentence-final whitespace token that ends
/// past `prompt_len` (a byte offset). Returns the text unchanged and `false`
/// when there is no such token.
pub fn crop_to_sentence(text: &str, prompt_len: usize) -> (String, bool) {
    for (start, end) in word_spans(text) {
        if end <= prompt_len {
            continue;
        }
        if is_sentence_final(&text[start..end]) {
            return (text[..end].to_string(), true);
        }
    }
    (text.to_string(), false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crops_at_first_terminator() {
        let prompt = "The employees understood the contract would";
        let text = format!("{prompt} be changed very soon. The next");
        let (out, found) = crop_to_sentence(&text, prompt.len());
        assert!(found);
        assert_eq!(out, format!("{prompt} be changed very soon."));
    }

    #[test]
    fn skips_abbreviations() {
        let prompt = "They";
        let (out, found) = crop_to_sentence("They met Mr. Smith yesterday. Then", prompt.len());
        assert!(found);
        assert_eq!(out, "They met Mr. Smith yesterday.");
    }

    #[test]
    fn ignores_terminators_inside_the_prompt() {
        let prompt = "Mrs. Baker is convinced that the school fears";
        let (out, found) = crop_to_sentence(&format!("{prompt} are valid."), prompt.len());
        assert!(found);
        assert!(out.ends_with("valid."));
        let (_, found) = crop_to_sentence("It ended. And then", "It ended. And".len());
        assert!(!found);
    }

    #[test]
    fn missing_terminator() {
        let (out, found) = crop_to_sentence("a b c d", 1);
        assert!(!found);
        assert_eq!(out, "a b c d");
    }

    #[test]
    fn closing_quote_stays() {
        let (out, found) = crop_to_sentence("He said \"go.\" Then", 2);
        assert!(found);
        assert_eq!(out, "He said \"go.\"");
    }
}
