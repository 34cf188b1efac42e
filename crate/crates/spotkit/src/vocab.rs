//! Unified token vocabulary shared by every task.
//!
//! The id space is laid out as four contiguous, disjoint ranges in a fixed
//! order: coordinate bins, characters, structural tags, then the four
//! specials `<S>`, `</S>`, `<PAD>`, `<UNK>`. The layout is deterministic so
//! serialized sequences stay stable across runs.
//!
//! Characters and tags are distinct namespaces: a tag spelled `">"` and the
//! charset character `'>'` are different tokens with different ids.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense token identifier into a [`TokenVocabulary`].
pub type TokenId = u32;

/// Number of special tokens (`<S>`, `</S>`, `<PAD>`, `<UNK>`).
pub const NUM_SPECIALS: u32 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum VocabError {
    #[error("duplicate symbol {0:?} in vocabulary construction")]
    DuplicateSymbol(String),
    #[error("tag {0:?} collides with a reserved special token name")]
    ReservedName(String),
    #[error("n_bins must be >= 2, got {0}")]
    BinCount(u32),
    #[error("token id {0} out of range (vocabulary size {1})")]
    IdOutOfRange(TokenId, u32),
    #[error("vocabulary manifest parse error at line {line}: {msg}")]
    Manifest { line: usize, msg: String },
}

/// The four sequence specials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Special {
    /// `<S>` — beginning of sequence.
    SeqStart,
    /// `</S>` — end of sequence.
    SeqEnd,
    /// `<PAD>` — padding.
    Pad,
    /// `<UNK>` — unknown character.
    Unk,
}

impl Special {
    pub const ALL: [Special; 4] = [Special::SeqStart, Special::SeqEnd, Special::Pad, Special::Unk];

    pub fn name(&self) -> &'static str {
        match self {
            Special::SeqStart => "<S>",
            Special::SeqEnd => "</S>",
            Special::Pad => "<PAD>",
            Special::Unk => "<UNK>",
        }
    }
}

/// A single vocabulary entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Token {
    /// Coordinate bin index in `[0, n_bins)`.
    Coord(u32),
    /// One charset character.
    Char(char),
    /// Structural tag, e.g. `<tr>`, `<address>`, `<line>`.
    Tag(String),
    Special(Special),
}

impl Token {
    /// Human-readable spelling used in manifests and text sequence dumps.
    /// The space character is spelled `<SP>` so dumps stay whitespace-separable.
    pub fn name(&self) -> String {
        match self {
            Token::Coord(b) => b.to_string(),
            Token::Char(' ') => "<SP>".to_string(),
            Token::Char(c) => c.to_string(),
            Token::Tag(t) => t.clone(),
            Token::Special(s) => s.name().to_string(),
        }
    }
}

/// Token category consumed by the token-router decoder. Categories are
/// pre-determined per position from the task, never learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenCategory {
    /// Stage-1 structured points sequence tokens.
    Structured,
    /// Stage-2 polygon coordinate tokens.
    Detection,
    /// Stage-2 content character tokens.
    Recognition,
}

/// Unified id space over coordinate bins, characters, structural tags, and
/// specials.
#[derive(Debug, Clone)]
pub struct TokenVocabulary {
    n_bins: u32,
    charset: Vec<char>,
    tags: Vec<String>,
    char_ids: HashMap<char, TokenId>,
    tag_ids: HashMap<String, TokenId>,
}

impl TokenVocabulary {
    /// Build a vocabulary with the fixed `[coords | chars | tags | specials]`
    /// layout. Rejects duplicate characters, duplicate tags, and tags that
    /// shadow a special name.
    pub fn build(
        charset: impl IntoIterator<Item = char>,
        tags: impl IntoIterator<Item = String>,
        n_bins: u32,
    ) -> Result<Self, VocabError> {
        if n_bins < 2 {
            return Err(VocabError::BinCount(n_bins));
        }
        let charset: Vec<char> = charset.into_iter().collect();
        let tags: Vec<String> = tags.into_iter().collect();

        let mut char_ids = HashMap::with_capacity(charset.len());
        for (i, &c) in charset.iter().enumerate() {
            if char_ids.insert(c, n_bins + i as u32).is_some() {
                return Err(VocabError::DuplicateSymbol(c.to_string()));
            }
        }
        let tag_base = n_bins + charset.len() as u32;
        let mut tag_ids = HashMap::with_capacity(tags.len());
        for (i, t) in tags.iter().enumerate() {
            if Special::ALL.iter().any(|s| s.name() == t) {
                return Err(VocabError::ReservedName(t.clone()));
            }
            if tag_ids.insert(t.clone(), tag_base + i as u32).is_some() {
                return Err(VocabError::DuplicateSymbol(t.clone()));
            }
        }
        Ok(Self {
            n_bins,
            charset,
            tags,
            char_ids,
            tag_ids,
        })
    }

    /// Default charset: the 95 printable ASCII characters (space through `~`).
    pub fn printable_ascii() -> Vec<char> {
        (0x20u8..=0x7e).map(|b| b as char).collect()
    }

    pub fn n_bins(&self) -> u32 {
        self.n_bins
    }

    pub fn charset(&self) -> &[char] {
        &self.charset
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// Total number of ids: `n_bins + |charset| + |tags| + 4`.
    pub fn size(&self) -> u32 {
        self.n_bins + self.charset.len() as u32 + self.tags.len() as u32 + NUM_SPECIALS
    }

    fn tag_base(&self) -> u32 {
        self.n_bins + self.charset.len() as u32
    }

    fn special_base(&self) -> u32 {
        self.tag_base() + self.tags.len() as u32
    }

    pub fn coord_id(&self, bin: u32) -> Option<TokenId> {
        (bin < self.n_bins).then_some(bin)
    }

    pub fn char_id(&self, c: char) -> Option<TokenId> {
        self.char_ids.get(&c).copied()
    }

    /// Character id, falling back to `<UNK>` for out-of-charset characters.
    pub fn char_id_or_unk(&self, c: char) -> TokenId {
        self.char_id(c).unwrap_or_else(|| self.special_id(Special::Unk))
    }

    pub fn tag_id(&self, tag: &str) -> Option<TokenId> {
        self.tag_ids.get(tag).copied()
    }

    pub fn special_id(&self, s: Special) -> TokenId {
        self.special_base()
            + match s {
                Special::SeqStart => 0,
                Special::SeqEnd => 1,
                Special::Pad => 2,
                Special::Unk => 3,
            }
    }

    pub fn id_of(&self, token: &Token) -> Option<TokenId> {
        match token {
            Token::Coord(b) => self.coord_id(*b),
            Token::Char(c) => self.char_id(*c),
            Token::Tag(t) => self.tag_id(t),
            Token::Special(s) => Some(self.special_id(*s)),
        }
    }

    pub fn token_of(&self, id: TokenId) -> Result<Token, VocabError> {
        if id < self.n_bins {
            return Ok(Token::Coord(id));
        }
        let mut rest = id - self.n_bins;
        if (rest as usize) < self.charset.len() {
            return Ok(Token::Char(self.charset[rest as usize]));
        }
        rest -= self.charset.len() as u32;
        if (rest as usize) < self.tags.len() {
            return Ok(Token::Tag(self.tags[rest as usize].clone()));
        }
        rest -= self.tags.len() as u32;
        match rest {
            0 => Ok(Token::Special(Special::SeqStart)),
            1 => Ok(Token::Special(Special::SeqEnd)),
            2 => Ok(Token::Special(Special::Pad)),
            3 => Ok(Token::Special(Special::Unk)),
            _ => Err(VocabError::IdOutOfRange(id, self.size())),
        }
    }

    pub fn is_coord(&self, id: TokenId) -> bool {
        id < self.n_bins
    }

    pub fn is_char(&self, id: TokenId) -> bool {
        id >= self.n_bins && id < self.tag_base()
    }

    pub fn is_tag(&self, id: TokenId) -> bool {
        id >= self.tag_base() && id < self.special_base()
    }

    /// Render a token id sequence as whitespace-separated token names.
    pub fn render(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match self.token_of(id) {
                Ok(tok) => {
                    let _ = write!(out, "{}", tok.name());
                }
                Err(_) => {
                    let _ = write!(out, "<?{id}>");
                }
            }
        }
        out
    }

    /// Serialize to the versioned plain-text manifest: a header carrying the
    /// layout counts, then one token name per line in id order.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "spotkit-vocab 1");
        let _ = writeln!(out, "n_bins {}", self.n_bins);
        let _ = writeln!(out, "charset {}", self.charset.len());
        let _ = writeln!(out, "tags {}", self.tags.len());
        for id in 0..self.size() {
            let _ = writeln!(out, "{}", self.token_of(id).expect("id in range").name());
        }
        out
    }

    /// Parse a manifest produced by [`TokenVocabulary::to_manifest`].
    pub fn from_manifest(text: &str) -> Result<Self, VocabError> {
        let mut lines = text.lines().enumerate();
        let mut header = |key: &str| -> Result<u32, VocabError> {
            let (n, line) = lines.next().ok_or(VocabError::Manifest {
                line: 0,
                msg: "truncated header".into(),
            })?;
            let rest = line.strip_prefix(key).ok_or_else(|| VocabError::Manifest {
                line: n + 1,
                msg: format!("expected `{key} ...`, got {line:?}"),
            })?;
            rest.trim().parse().map_err(|_| VocabError::Manifest {
                line: n + 1,
                msg: format!("bad count in {line:?}"),
            })
        };
        let version = header("spotkit-vocab")?;
        if version != 1 {
            return Err(VocabError::Manifest {
                line: 1,
                msg: format!("unsupported manifest version {version}"),
            });
        }
        let n_bins = header("n_bins")?;
        let n_chars = header("charset")? as usize;
        let n_tags = header("tags")? as usize;

        let mut body = lines.map(|(n, l)| (n + 1, l));
        let mut next_line = |what: &str| -> Result<(usize, String), VocabError> {
            body.next()
                .map(|(n, l)| (n, l.to_string()))
                .ok_or_else(|| VocabError::Manifest {
                    line: 0,
                    msg: format!("manifest truncated while reading {what}"),
                })
        };

        for bin in 0..n_bins {
            let (n, line) = next_line("coordinate tokens")?;
            if line.parse::<u32>() != Ok(bin) {
                return Err(VocabError::Manifest {
                    line: n,
                    msg: format!("expected coordinate token {bin}, got {line:?}"),
                });
            }
        }
        let mut charset = Vec::with_capacity(n_chars);
        for _ in 0..n_chars {
            let (n, line) = next_line("charset")?;
            let c = if line == "<SP>" {
                ' '
            } else {
                let mut chars = line.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => c,
                    _ => {
                        return Err(VocabError::Manifest {
                            line: n,
                            msg: format!("expected single character, got {line:?}"),
                        })
                    }
                }
            };
            charset.push(c);
        }
        let mut tags = Vec::with_capacity(n_tags);
        for _ in 0..n_tags {
            tags.push(next_line("tags")?.1);
        }
        for s in Special::ALL {
            let (n, line) = next_line("specials")?;
            if line != s.name() {
                return Err(VocabError::Manifest {
                    line: n,
                    msg: format!("expected special {:?}, got {line:?}", s.name()),
                });
            }
        }
        Self::build(charset, tags, n_bins)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printable_ascii_default_size() {
        let v = TokenVocabulary::build(TokenVocabulary::printable_ascii(), [], 1000).unwrap();
        assert_eq!(v.size(), 1099); // 1000 + 95 + 0 + 4
    }

    #[test]
    fn layout_by_construction() {
        let v = TokenVocabulary::build(['a'], ["<tr>".to_string()], 4).unwrap();
        assert_eq!(v.coord_id(0), Some(0));
        assert_eq!(v.coord_id(3), Some(3));
        assert_eq!(v.char_id('a'), Some(4));
        assert_eq!(v.tag_id("<tr>"), Some(5));
        assert_eq!(v.special_id(Special::SeqStart), 6);
        assert_eq!(v.special_id(Special::Unk), 9);
        assert_eq!(v.size(), 10);
    }

    #[test]
    fn duplicate_char_rejected() {
        let err = TokenVocabulary::build(['a', 'a'], [], 4).unwrap_err();
        assert_eq!(err, VocabError::DuplicateSymbol("a".into()));
    }

    #[test]
    fn duplicate_tag_rejected() {
        let err =
            TokenVocabulary::build([], ["<x>".to_string(), "<x>".to_string()], 4).unwrap_err();
        assert_eq!(err, VocabError::DuplicateSymbol("<x>".into()));
    }

    #[test]
    fn tag_shadowing_special_rejected() {
        let err = TokenVocabulary::build([], ["<PAD>".to_string()], 4).unwrap_err();
        assert_eq!(err, VocabError::ReservedName("<PAD>".into()));
    }

    #[test]
    fn id_token_bijection() {
        let v = TokenVocabulary::build(
            TokenVocabulary::printable_ascii(),
            ["<tr>".to_string(), "<line>".to_string()],
            50,
        )
        .unwrap();
        for id in 0..v.size() {
            let tok = v.token_of(id).unwrap();
            assert_eq!(v.id_of(&tok), Some(id), "token {tok:?}");
        }
        assert!(v.token_of(v.size()).is_err());
    }

    #[test]
    fn char_and_tag_namespaces_are_distinct() {
        let v = TokenVocabulary::build(['>'], [">".to_string()], 4).unwrap();
        let c = v.char_id('>').unwrap();
        let t = v.tag_id(">").unwrap();
        assert_ne!(c, t);
    }

    #[test]
    fn unknown_char_maps_to_unk() {
        let v = TokenVocabulary::build(['a'], [], 4).unwrap();
        assert_eq!(v.char_id_or_unk('z'), v.special_id(Special::Unk));
    }

    #[test]
    fn manifest_round_trip() {
        let v = TokenVocabulary::build(
            TokenVocabulary::printable_ascii(),
            ["<tr>".to_string(), "rowspan=\"2\"".to_string()],
            16,
        )
        .unwrap();
        let text = v.to_manifest();
        let back = TokenVocabulary::from_manifest(&text).unwrap();
        assert_eq!(back.size(), v.size());
        for id in 0..v.size() {
            assert_eq!(back.token_of(id).unwrap(), v.token_of(id).unwrap());
        }
    }
}
