//! Fixture tokenizer: control tags are atomic tokens, everything else is split
//! on whitespace (or into single characters). Whitespace is carried as leading
//! trivia on the following token so token surfaces concatenate back to the
//! exact source.

use std::env;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::grammar::{lex, TagKind, TokenKind};

pub type TokenId = u32;

/// Environment variable selecting the default [`TokenizerMode`].
pub const TOKENIZER_ENV: &str = "MULTIVERSE_TOKENIZER";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerMode {
    #[default]
    Whitespace,
    Char,
}

impl FromStr for TokenizerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "whitespace" | "ws" | "word" => Ok(TokenizerMode::Whitespace),
            "char" | "chars" => Ok(TokenizerMode::Char),
            other => Err(format!("unknown tokenizer mode {other:?} (expected whitespace|char)")),
        }
    }
}

impl fmt::Display for TokenizerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenizerMode::Whitespace => "whitespace",
            TokenizerMode::Char => "char",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub id: TokenId,
    /// Exact source text, including any whitespace preceding the token.
    pub surface: String,
    pub tag: Option<TagKind>,
}

impl Token {
    /// Surface without leading or trailing whitespace.
    pub fn word(&self) -> &str {
        self.surface.trim()
    }

    pub fn is_tag(&self, kind: TagKind) -> bool {
        self.tag == Some(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tokenizer {
    pub mode: TokenizerMode,
    pub vocab_size: u32,
}

const RESERVED: u32 = TagKind::ALL.len() as u32;

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer {
            mode: TokenizerMode::Whitespace,
            vocab_size: 256,
        }
    }
}

impl Tokenizer {
    pub fn new(mode: TokenizerMode, vocab_size: u32) -> Self {
        assert!(vocab_size > RESERVED, "vocabulary must exceed the {RESERVED} reserved tag ids");
        Tokenizer { mode, vocab_size }
    }

    /// Default tokenizer, honouring [`TOKENIZER_ENV`] when set.
    pub fn from_env() -> Result<Self, String> {
        let mode = match env::var(TOKENIZER_ENV) {
            Ok(v) => v.parse()?,
            Err(_) => TokenizerMode::default(),
        };
        Ok(Tokenizer {
            mode,
            ..Tokenizer::default()
        })
    }

    pub fn tag_id(&self, kind: TagKind) -> TokenId {
        kind.index()
    }

    /// Vocabulary id of a plain word (FNV-1a hashed into the non-tag range).
    pub fn word_id(&self, word: &str) -> TokenId {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in word.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        RESERVED + (h % u64::from(self.vocab_size - RESERVED)) as u32
    }

    pub fn tag_token(&self, kind: TagKind, leading: &str) -> Token {
        Token {
            id: self.tag_id(kind),
            surface: format!("{leading}{}", kind.literal()),
            tag: Some(kind),
        }
    }

    pub fn word_token(&self, word: &str, leading: &str) -> Token {
        Token {
            id: self.word_id(word),
            surface: format!("{leading}{word}"),
            tag: None,
        }
    }

    /// Number of tokens in a run of plain text.
    pub fn count_text(&self, text: &str) -> usize {
        match self.mode {
            TokenizerMode::Whitespace => text.split_whitespace().count(),
            TokenizerMode::Char => text.chars().filter(|c| !c.is_whitespace()).count(),
        }
    }

    pub fn stream(&self) -> TokenStream<'_> {
        TokenStream {
            tok: self,
            pending: String::new(),
            tokens: Vec::new(),
        }
    }

    /// Tokenizes a whole source text.
    pub fn tokenize(&self, source: &str) -> Vec<Token> {
        let mut s = self.stream();
        for t in lex(source) {
            match t.kind {
                TokenKind::Tag(k) => {
                    s.push_tag(k);
                }
                TokenKind::Text => {
                    s.push_text(t.raw);
                }
            }
        }
        s.finish()
    }
}

/// Incremental tokenizer used while walking a parsed trajectory.
#[derive(Debug)]
pub struct TokenStream<'t> {
    tok: &'t Tokenizer,
    pending: String,
    tokens: Vec<Token>,
}

impl TokenStream<'_> {
    /// Appends a tag token and returns its index.
    pub fn push_tag(&mut self, kind: TagKind) -> usize {
        let lead = std::mem::take(&mut self.pending);
        self.tokens.push(self.tok.tag_token(kind, &lead));
        self.tokens.len() - 1
    }

    /// Appends the tokens of a text run and returns their index range.
    pub fn push_text(&mut self, text: &str) -> std::ops::Range<usize> {
        let start = self.tokens.len();
        let mut rest = text;
        loop {
            let ws = rest.len() - rest.trim_start().len();
            self.pending.push_str(&rest[..ws]);
            rest = &rest[ws..];
            if rest.is_empty() {
                break;
            }
            let len = match self.tok.mode {
                TokenizerMode::Whitespace => rest.find(char::is_whitespace).unwrap_or(rest.len()),
                TokenizerMode::Char => rest.chars().next().unwrap().len_utf8(),
            };
            let lead = std::mem::take(&mut self.pending);
            self.tokens.push(self.tok.word_token(&rest[..len], &lead));
            rest = &rest[len..];
        }
        start..self.tokens.len()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, i: usize) -> &Token {
        &self.tokens[i]
    }

    /// Whitespace not yet attached to a token.
    pub fn pending(&self) -> &str {
        &self.pending
    }

    /// Finishes the stream. Trailing whitespace is appended to the last
    /// token; a source with no tokens at all yields an empty list.
    pub fn finish(mut self) -> Vec<Token> {
        if let Some(last) = self.tokens.last_mut() {
            last.surface.push_str(&self.pending);
        }
        self.tokens
    }
}
