use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{BackendError, TokenId};
use crate::text::{attaches_left, attaches_right, is_sentence_final, split_word, word_spans};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenizerKind {
    WordLevel,
    Subword,
}

/// Token ids of a text plus, for every whitespace word, the half-open range
/// of token positions it covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenization {
    pub ids: Vec<TokenId>,
    pub word_spans: Vec<(usize, usize)>,
}

/// Dense token inventory.
///
/// Subword vocabularies mark pieces that extend the previous word with a
/// prefix (e.g. `##`); every other token starts a new word.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    unk_id: Option<TokenId>,
    eos_id: TokenId,
    kind: TokenizerKind,
    continuation_prefix: Option<String>,
}

impl Vocabulary {
    pub fn new(
        tokens: Vec<String>,
        unk_id: Option<TokenId>,
        eos_id: TokenId,
        kind: TokenizerKind,
        continuation_prefix: Option<String>,
    ) -> Result<Self, String> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(format!("duplicate token `{t}`"));
            }
        }
        let n = tokens.len() as TokenId;
        if eos_id >= n {
            return Err(format!("eos id {eos_id} outside vocabulary of {n}"));
        }
        if unk_id.is_some_and(|u| u >= n) {
            return Err("unk id outside vocabulary".into());
        }
        let continuation_prefix = match kind {
            TokenizerKind::WordLevel => None,
            TokenizerKind::Subword => continuation_prefix.filter(|p| !p.is_empty()),
        };
        Ok(Vocabulary {
            tokens,
            index,
            unk_id,
            eos_id,
            kind,
            continuation_prefix,
        })
    }

    /// Word-level vocabulary; `eos` and `unk` are appended when missing.
    pub fn word_level(mut tokens: Vec<String>, unk: Option<&str>, eos: &str) -> Result<Self, String> {
        for special in [Some(eos), unk].into_iter().flatten() {
            if !tokens.iter().any(|t| t == special) {
                tokens.push(special.to_string());
            }
        }
        let eos_id = tokens.iter().position(|t| t == eos).unwrap() as TokenId;
        let unk_id = unk.map(|u| tokens.iter().position(|t| t == u).unwrap() as TokenId);
        Self::new(tokens, unk_id, eos_id, TokenizerKind::WordLevel, None)
    }

    pub fn subword(
        mut tokens: Vec<String>,
        unk: Option<&str>,
        eos: &str,
        continuation_prefix: &str,
    ) -> Result<Self, String> {
        for special in [Some(eos), unk].into_iter().flatten() {
            if !tokens.iter().any(|t| t == special) {
                tokens.push(special.to_string());
            }
        }
        let eos_id = tokens.iter().position(|t| t == eos).unwrap() as TokenId;
        let unk_id = unk.map(|u| tokens.iter().position(|t| t == u).unwrap() as TokenId);
        Self::new(
            tokens,
            unk_id,
            eos_id,
            TokenizerKind::Subword,
            Some(continuation_prefix.to_string()),
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn unk_id(&self) -> Option<TokenId> {
        self.unk_id
    }

    pub fn kind(&self) -> TokenizerKind {
        self.kind
    }

    pub fn continuation_prefix(&self) -> Option<&str> {
        self.continuation_prefix.as_deref()
    }

    /// Whether the token extends the previous word rather than starting one.
    pub fn is_continuation(&self, id: TokenId) -> bool {
        match (&self.continuation_prefix, self.token(id)) {
            (Some(prefix), Some(tok)) => tok.starts_with(prefix.as_str()) && tok.len() > prefix.len(),
            _ => false,
        }
    }

    /// Surface text of a token with any continuation marker removed.
    pub fn surface(&self, id: TokenId) -> &str {
        let tok = self.token(id).unwrap_or("");
        match &self.continuation_prefix {
            Some(prefix) if self.is_continuation(id) => &tok[prefix.len()..],
            _ => tok,
        }
    }

    /// Whether generating this token closes a sentence.
    pub fn is_boundary(&self, id: TokenId) -> bool {
        id != self.eos_id && is_sentence_final(self.surface(id))
    }

    fn lookup(&self, piece: &str) -> Result<TokenId, BackendError> {
        self.id(piece)
            .or(self.unk_id)
            .ok_or_else(|| BackendError::Tokenize(piece.to_string()))
    }

    fn subword_pieces(&self, piece: &str, out: &mut Vec<TokenId>) -> Result<(), BackendError> {
        let prefix = self.continuation_prefix.as_deref().unwrap_or("");
        let mut rest = piece;
        let mut first = true;
        while !rest.is_empty() {
            let mut found = None;
            let mut end = rest.len();
            while end > 0 {
                if rest.is_char_boundary(end) {
                    let cand = if first {
                        rest[..end].to_string()
                    } else {
                        format!("{prefix}{}", &rest[..end])
                    };
                    if let Some(id) = self.id(&cand) {
                        found = Some((id, end));
                        break;
                    }
                }
                end -= 1;
            }
            match found {
                Some((id, end)) => {
                    out.push(id);
                    rest = &rest[end..];
                    first = false;
                }
                None => {
                    out.push(self.lookup(piece)?);
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    /// Splits text into tokens. Word-level vocabularies detach punctuation;
    /// subword vocabularies then segment each piece greedily, longest match first.
    pub fn tokenize(&self, text: &str) -> Result<Tokenization, BackendError> {
        let mut ids = Vec::new();
        let mut spans = Vec::new();
        for (s, e) in word_spans(text) {
            let start = ids.len();
            for piece in split_word(&text[s..e]) {
                match self.kind {
                    TokenizerKind::WordLevel => ids.push(self.lookup(piece)?),
                    TokenizerKind::Subword => self.subword_pieces(piece, &mut ids)?,
                }
            }
            spans.push((start, ids.len()));
        }
        Ok(Tokenization { ids, word_spans: spans })
    }

    /// Appends the rendering of `ids` to `text`, stopping at end-of-sequence.
    pub fn render_onto(&self, text: &mut String, ids: &[TokenId]) {
        for &id in ids {
            if id == self.eos_id {
                break;
            }
            let surface = self.surface(id);
            let glue = self.is_continuation(id)
                || attaches_left(surface)
                || text.is_empty()
                || text.ends_with(char::is_whitespace)
                || text
                    .split_whitespace()
                    .next_back()
                    .is_some_and(attaches_right);
            if !glue {
                text.push(' ');
            }
            text.push_str(surface);
        }
    }

    pub fn render(&self, ids: &[TokenId]) -> String {
        let mut s = String::new();
        self.render_onto(&mut s, ids);
        s
    }
}
