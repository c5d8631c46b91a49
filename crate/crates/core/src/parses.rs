//! Dependency parses of completions, read from CoNLL-U.
//!
//! Only basic trees are accepted: multiword-token ranges (`1-2`) and empty
//! nodes (`1.1`) are rejected, every sentence needs exactly one root and an
//! acyclic head graph. Token indices are 1-based as in CoNLL-U; head 0 is the
//! root attachment.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::materials::Prompt;
use crate::text::{normalize_form, word_spans};

/// One CoNLL-U token line. All ten columns are kept verbatim so that a file
/// can be written back unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedToken {
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: String,
    pub head: usize,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
}

impl ParsedToken {
    /// Minimal token with the remaining columns set to `_`.
    pub fn new(index: usize, form: &str, pos: &str, head: usize, deprel: &str) -> Self {
        ParsedToken {
            index,
            form: form.to_string(),
            lemma: "_".into(),
            upos: "_".into(),
            xpos: pos.to_string(),
            feats: "_".into(),
            head,
            deprel: deprel.to_string(),
            deps: "_".into(),
            misc: "_".into(),
        }
    }

    /// Language-specific tag when present, universal tag otherwise.
    pub fn pos(&self) -> &str {
        if self.xpos != "_" && !self.xpos.is_empty() {
            &self.xpos
        } else {
            &self.upos
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum TreeError {
    #[error("sentence has no tokens")]
    Empty,
    #[error("token {index} has index {found}")]
    NonSequential { index: usize, found: usize },
    #[error("token {token} has head {head} outside the sentence")]
    HeadOutOfRange { token: usize, head: usize },
    #[error("token {0} is its own head")]
    SelfLoop(usize),
    #[error("no token is attached to the root")]
    NoRoot,
    #[error("several tokens are attached to the root: {0:?}")]
    MultipleRoots(Vec<usize>),
    #[error("head cycle through token {0}")]
    Cycle(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyParse {
    pub sentence_id: String,
    /// Comment lines (with the leading `#`), in file order.
    pub comments: Vec<String>,
    pub tokens: Vec<ParsedToken>,
    /// 1-based index of the locus token, once aligned.
    pub locus_index: Option<usize>,
    /// 1-based index of the post-locus cue token, once aligned.
    pub post_locus_index: Option<usize>,
}

impl DependencyParse {
    /// Builds and validates a parse from `(form, pos, head, deprel)` rows.
    pub fn from_rows(sentence_id: &str, rows: &[(&str, &str, usize, &str)]) -> Result<Self, TreeError> {
        let tokens = rows
            .iter()
            .enumerate()
            .map(|(i, &(form, pos, head, deprel))| ParsedToken::new(i + 1, form, pos, head, deprel))
            .collect();
        let parse = DependencyParse {
            sentence_id: sentence_id.to_string(),
            comments: vec![format!("# sent_id = {sentence_id}")],
            tokens,
            locus_index: None,
            post_locus_index: None,
        };
        parse.validate()?;
        Ok(parse)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token at a 1-based index.
    pub fn token(&self, index: usize) -> &ParsedToken {
        &self.tokens[index - 1]
    }

    pub fn token_mut(&mut self, index: usize) -> &mut ParsedToken {
        &mut self.tokens[index - 1]
    }

    /// Index of the token attached to the root. Assumes a valid tree.
    pub fn root(&self) -> usize {
        self.tokens.iter().find(|t| t.head == 0).map_or(0, |t| t.index)
    }

    /// Indices of the tokens whose head is `index`, in order.
    pub fn dependents(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        self.tokens.iter().filter(move |t| t.head == index).map(|t| t.index)
    }

    pub fn forms(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.form.as_str()).collect()
    }

    /// Checks index order, head range, single root and acyclicity.
    pub fn validate(&self) -> Result<(), TreeError> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(TreeError::Empty);
        }
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i + 1 {
                return Err(TreeError::NonSequential { index: i + 1, found: t.index });
            }
            if t.head > n {
                return Err(TreeError::HeadOutOfRange { token: t.index, head: t.head });
            }
            if t.head == t.index {
                return Err(TreeError::SelfLoop(t.index));
            }
        }
        let roots: Vec<usize> = self.tokens.iter().filter(|t| t.head == 0).map(|t| t.index).collect();
        match roots.len() {
            0 => return Err(TreeError::NoRoot),
            1 => {}
            _ => return Err(TreeError::MultipleRoots(roots)),
        }
        // 0 = unvisited, 1 = on the current path, 2 = reaches the root.
        let mut state = vec![0u8; n + 1];
        state[0] = 2;
        for start in 1..=n {
            let mut path = Vec::new();
            let mut cur = start;
            while state[cur] == 0 {
                state[cur] = 1;
                path.push(cur);
                cur = self.tokens[cur - 1].head;
            }
            if state[cur] == 1 {
                return Err(TreeError::Cycle(cur));
            }
            for p in path {
                state[p] = 2;
            }
        }
        Ok(())
    }

    /// The CoNLL-U block for this sentence, ending with the blank separator line.
    pub fn to_conllu(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str(c);
            out.push('\n');
        }
        for t in &self.tokens {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.index, t.form, t.lemma, t.upos, t.xpos, t.feats, t.head, t.deprel, t.deps, t.misc
            );
        }
        out.push('\n');
        out
    }

    /// Indented JSON view of the tree, for debugging.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parse serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum ConlluErrorKind {
    #[error("expected 10 tab-separated columns, found {0}")]
    Columns(usize),
    #[error("multiword token ranges are not supported")]
    MultiwordToken,
    #[error("empty nodes are not supported")]
    EmptyNode,
    #[error("bad token index `{0}`")]
    Index(String),
    #[error("bad head `{0}`")]
    Head(String),
    #[error("missing `# sent_id` comment")]
    MissingSentId,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// A sentence that was skipped while reading.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("sentence {sentence} (line {line}): {kind}")]
pub struct ConlluError {
    /// The `sent_id`, or `#N` (1-based position in the file) when unknown.
    pub sentence: String,
    pub line: usize,
    pub kind: ConlluErrorKind,
}

#[derive(Debug, Clone, Default)]
pub struct ConlluRead {
    pub parses: Vec<DependencyParse>,
    pub errors: Vec<ConlluError>,
}

fn parse_token(line: &str) -> Result<ParsedToken, ConlluErrorKind> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 10 {
        return Err(ConlluErrorKind::Columns(cols.len()));
    }
    if cols[0].contains('-') {
        return Err(ConlluErrorKind::MultiwordToken);
    }
    if cols[0].contains('.') {
        return Err(ConlluErrorKind::EmptyNode);
    }
    let canonical = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && (s == "0" || !s.starts_with('0'));
    if !canonical(cols[0]) {
        return Err(ConlluErrorKind::Index(cols[0].to_string()));
    }
    if !canonical(cols[6]) {
        return Err(ConlluErrorKind::Head(cols[6].to_string()));
    }
    let index = cols[0].parse().map_err(|_| ConlluErrorKind::Index(cols[0].to_string()))?;
    let head = cols[6].parse().map_err(|_| ConlluErrorKind::Head(cols[6].to_string()))?;
    Ok(ParsedToken {
        index,
        form: cols[1].to_string(),
        lemma: cols[2].to_string(),
        upos: cols[3].to_string(),
        xpos: cols[4].to_string(),
        feats: cols[5].to_string(),
        head,
        deprel: cols[7].to_string(),
        deps: cols[8].to_string(),
        misc: cols[9].to_string(),
    })
}

fn sent_id(comment: &str) -> Option<&str> {
    let rest = comment.strip_prefix('#')?.trim_start();
    let rest = rest.strip_prefix("sent_id")?.trim_start();
    Some(rest.strip_prefix('=')?.trim())
}

/// Reads every sentence of a CoNLL-U document. Invalid sentences are
/// reported in `errors` and the rest are still returned.
pub fn read_conllu(text: &str) -> ConlluRead {
    let mut read = ConlluRead::default();
    let mut ordinal = 0;
    let mut block: Vec<(usize, &str)> = Vec::new();
    let lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    for (no, line) in lines.chain(std::iter::once((0, ""))) {
        if !line.trim().is_empty() {
            block.push((no, line));
            continue;
        }
        if block.is_empty() {
            continue;
        }
        ordinal += 1;
        match read_block(&block) {
            Ok(p) => read.parses.push(p),
            Err((id, line, kind)) => read.errors.push(ConlluError {
                sentence: id.unwrap_or_else(|| format!("#{ordinal}")),
                line,
                kind,
            }),
        }
        block.clear();
    }
    read
}

type BlockError = (Option<String>, usize, ConlluErrorKind);

fn read_block(block: &[(usize, &str)]) -> Result<DependencyParse, BlockError> {
    let mut comments = Vec::new();
    let mut tokens = Vec::new();
    let mut id = None;
    for &(no, line) in block {
        if line.starts_with('#') {
            if id.is_none() {
                id = sent_id(line).map(str::to_string);
            }
            comments.push(line.to_string());
        } else {
            tokens.push(parse_token(line).map_err(|k| (id.clone(), no, k))?);
        }
    }
    let first = block[0].0;
    let Some(sentence_id) = id else {
        return Err((None, first, ConlluErrorKind::MissingSentId));
    };
    let parse = DependencyParse {
        sentence_id,
        comments,
        tokens,
        locus_index: None,
        post_locus_index: None,
    };
    parse
        .validate()
        .map_err(|e| (Some(parse.sentence_id.clone()), first, e.into()))?;
    Ok(parse)
}

pub fn write_conllu(parses: &[DependencyParse]) -> String {
    parses.iter().map(DependencyParse::to_conllu).collect()
}

/// Splits a completion sentence id `prompt_id/sample_index`.
pub fn completion_key(sentence_id: &str) -> Option<(&str, usize)> {
    let (prompt, index) = sentence_id.rsplit_once('/')?;
    Some((prompt, index.parse().ok()?))
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("cannot align word {word} (`{form}`) of `{sentence}` to the parse")]
pub struct AlignError {
    pub sentence: String,
    pub word: usize,
    pub form: String,
}

/// Normalized character stream with the owner of each character.
fn char_owners<'a>(pieces: impl Iterator<Item = &'a str>) -> (Vec<char>, Vec<usize>) {
    let mut chars = Vec::new();
    let mut owners = Vec::new();
    for (i, piece) in pieces.enumerate() {
        for c in normalize_form(piece).chars() {
            chars.push(c);
            owners.push(i);
        }
    }
    (chars, owners)
}

/// Finds the parse tokens of whitespace words of `sentence` (0-based word
/// offsets) and records them as the locus and post-locus tokens.
///
/// Matching compares lowercased forms with punctuation removed, so a parser
/// splitting `left,` into `left` and `,` still aligns. The word's first token
/// must start exactly where the word does, and the text up to the word's end
/// must agree between sentence and parse.
pub fn align_words(
    parse: &DependencyParse,
    sentence: &str,
    locus_word: usize,
    post_locus_word: Option<usize>,
) -> Result<DependencyParse, AlignError> {
    let words: Vec<&str> = word_spans(sentence).into_iter().map(|(s, e)| &sentence[s..e]).collect();
    let (w_chars, w_owner) = char_owners(words.iter().copied());
    let (t_chars, t_owner) = char_owners(parse.tokens.iter().map(|t| t.form.as_str()));
    let find = |word: usize| -> Result<usize, AlignError> {
        let err = || AlignError {
            sentence: sentence.to_string(),
            word,
            form: words.get(word).copied().unwrap_or("").to_string(),
        };
        let start = w_owner.iter().position(|&o| o == word).ok_or_else(err)?;
        let end = w_owner.iter().rposition(|&o| o == word).ok_or_else(err)? + 1;
        if end > t_chars.len() || w_chars[..end] != t_chars[..end] {
            return Err(err());
        }
        if start > 0 && t_owner[start - 1] == t_owner[start] {
            return Err(err());
        }
        Ok(t_owner[start] + 1)
    };
    let mut out = parse.clone();
    out.locus_index = Some(find(locus_word)?);
    out.post_locus_index = post_locus_word.map(find).transpose()?;
    Ok(out)
}

/// Aligns a completion parse with the prompt it was generated from.
pub fn align_locus(parse: &DependencyParse, prompt: &Prompt) -> Result<DependencyParse, AlignError> {
    align_words(parse, &prompt.text, prompt.locus_index, prompt.post_locus_index())
}

#[cfg(test)]
mod tests {
    use super::*;

    const IT_WORKS: &str = "# sent_id = p/0\n1\tIt\tit\tPRON\tPRP\t_\t2\tnsubj\t_\t_\n2\tworks\twork\tVERB\tVBZ\t_\t0\troot\t_\t_\n\n";

    #[test]
    fn minimal_tree() {
        let read = read_conllu(IT_WORKS);
        assert!(read.errors.is_empty());
        let p = &read.parses[0];
        assert_eq!(p.sentence_id, "p/0");
        assert_eq!(p.token(p.root()).form, "works");
        assert_eq!(p.token(1).pos(), "PRP");
        assert_eq!(write_conllu(&read.parses), IT_WORKS);
        assert_eq!(completion_key(&p.sentence_id), Some(("p", 0)));
    }

    #[test]
    fn two_roots_rejected_others_kept() {
        let bad = "# sent_id = bad\n1\tIt\t_\t_\t_\t_\t0\troot\t_\t_\n2\tworks\t_\t_\t_\t_\t0\troot\t_\t_\n\n";
        let read = read_conllu(&format!("{bad}{IT_WORKS}"));
        assert_eq!(read.parses.len(), 1);
        assert_eq!(read.errors.len(), 1);
        assert_eq!(read.errors[0].sentence, "bad");
        assert_eq!(read.errors[0].kind, ConlluErrorKind::Tree(TreeError::MultipleRoots(vec![1, 2])));
    }

    #[test]
    fn malformed_lines() {
        let mwt = "# sent_id = a\n1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tdo\t_\t_\t_\t_\t0\troot\t_\t_\n\n";
        let empty = "# sent_id = b\n1\tgo\t_\t_\t_\t_\t0\troot\t_\t_\n1.1\tgone\t_\t_\t_\t_\t_\t_\t_\t_\n\n";
        let short = "# sent_id = c\n1\tgo\t_\t_\n\n";
        let cycle = "# sent_id = d\n1\ta\t_\t_\t_\t_\t2\tx\t_\t_\n2\tb\t_\t_\t_\t_\t1\tx\t_\t_\n3\tc\t_\t_\t_\t_\t0\troot\t_\t_\n\n";
        let noid = "1\tgo\t_\t_\t_\t_\t0\troot\t_\t_\n\n";
        let read = read_conllu(&[mwt, empty, short, cycle, noid].concat());
        assert!(read.parses.is_empty());
        let kinds: Vec<_> = read.errors.iter().map(|e| e.kind.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                ConlluErrorKind::MultiwordToken,
                ConlluErrorKind::EmptyNode,
                ConlluErrorKind::Columns(4),
                ConlluErrorKind::Tree(TreeError::Cycle(1)),
                ConlluErrorKind::MissingSentId,
            ]
        );
        assert_eq!(read.errors[4].sentence, "#5");
    }

    #[test]
    fn pos_falls_back_to_upos() {
        let mut t = ParsedToken::new(1, "dog", "_", 0, "root");
        t.upos = "NOUN".into();
        assert_eq!(t.pos(), "NOUN");
    }

    fn understood() -> DependencyParse {
        DependencyParse::from_rows(
            "2a",
            &[
                ("The", "DT", 2, "det"),
                ("employees", "NNS", 3, "nsubj"),
                ("understood", "VBD", 0, "root"),
                ("the", "DT", 5, "det"),
                ("contract", "NN", 3, "dobj"),
                ("well", "RB", 3, "advmod"),
                (".", ".", 3, "punct"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn aligns_by_word_offset() {
        let p = align_words(&understood(), "The employees understood the contract", 4, None).unwrap();
        assert_eq!(p.locus_index, Some(5));
        assert_eq!(p.token(5).deprel, "dobj");
    }

    #[test]
    fn aligns_across_split_punctuation() {
        let p = DependencyParse::from_rows(
            "x",
            &[
                ("Even", "RB", 5, "advmod"),
                ("though", "IN", 5, "mark"),
                ("the", "DT", 4, "det"),
                ("band", "NN", 5, "nsubj"),
                ("left", "VBD", 9, "advcl"),
                (",", ",", 9, "punct"),
                ("the", "DT", 8, "det"),
                ("party", "NN", 9, "nsubj"),
                ("went", "VBD", 0, "root"),
                ("on", "RP", 9, "prt"),
            ],
        )
        .unwrap();
        let a = align_words(&p, "Even though the band left, the party went", 4, Some(6)).unwrap();
        assert_eq!(a.locus_index, Some(5));
        assert_eq!(a.post_locus_index, Some(8));
        let a = align_words(&p, "Even though the band left, the party went", 6, Some(7)).unwrap();
        assert_eq!(a.locus_index, Some(8));
        assert_eq!(a.post_locus_index, Some(9));
    }

    #[test]
    fn mangled_completion_fails() {
        let err = align_words(&understood(), "The workers understood the contract", 4, None).unwrap_err();
        assert_eq!(err.word, 4);
        assert!(align_words(&understood(), "The employees understood the contract", 9, None).is_err());
    }

    #[test]
    fn json_dump_round_trips() {
        let p = understood();
        let back: DependencyParse = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(back, p);
    }
}
