use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

/// One of the ten control tags of the MapReduce language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TagKind {
    ParallelOpen,
    ParallelClose,
    GoalOpen,
    GoalClose,
    OutlineOpen,
    OutlineClose,
    PathOpen,
    PathClose,
    ConclusionOpen,
    ConclusionClose,
}

impl TagKind {
    pub const ALL: [TagKind; 10] = [
        TagKind::ParallelOpen,
        TagKind::ParallelClose,
        TagKind::GoalOpen,
        TagKind::GoalClose,
        TagKind::OutlineOpen,
        TagKind::OutlineClose,
        TagKind::PathOpen,
        TagKind::PathClose,
        TagKind::ConclusionOpen,
        TagKind::ConclusionClose,
    ];

    pub const fn literal(self) -> &'static str {
        match self {
            TagKind::ParallelOpen => "<Parallel>",
            TagKind::ParallelClose => "</Parallel>",
            TagKind::GoalOpen => "<Goal>",
            TagKind::GoalClose => "</Goal>",
            TagKind::OutlineOpen => "<Outline>",
            TagKind::OutlineClose => "</Outline>",
            TagKind::PathOpen => "<Path>",
            TagKind::PathClose => "</Path>",
            TagKind::ConclusionOpen => "<Conclusion>",
            TagKind::ConclusionClose => "</Conclusion>",
        }
    }

    /// Stable small integer, used as a reserved vocabulary id.
    pub fn index(self) -> u32 {
        Self::ALL.iter().position(|k| *k == self).unwrap() as u32
    }

    pub fn from_literal(s: &str) -> Option<TagKind> {
        Self::ALL.into_iter().find(|k| k.literal() == s)
    }

    pub fn is_open(self) -> bool {
        matches!(
            self,
            TagKind::ParallelOpen
                | TagKind::GoalOpen
                | TagKind::OutlineOpen
                | TagKind::PathOpen
                | TagKind::ConclusionOpen
        )
    }
}

impl fmt::Display for TagKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.literal())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Tag(TagKind),
    Text,
}

/// A lexical token borrowed from the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagToken<'a> {
    pub kind: TokenKind,
    pub span: Range<usize>,
    pub raw: &'a str,
}

impl<'a> TagToken<'a> {
    pub fn tag(&self) -> Option<TagKind> {
        match self.kind {
            TokenKind::Tag(t) => Some(t),
            TokenKind::Text => None,
        }
    }

    pub fn is_text(&self) -> bool {
        self.kind == TokenKind::Text
    }

    /// Text token consisting solely of whitespace.
    pub fn is_blank(&self) -> bool {
        self.is_text() && self.raw.chars().all(char::is_whitespace)
    }

    pub(crate) fn describe(&self) -> String {
        match self.kind {
            TokenKind::Tag(t) => t.literal().to_string(),
            TokenKind::Text => {
                let mut s: String = self.raw.trim().chars().take(24).collect();
                if self.raw.trim().chars().count() > 24 {
                    s.push('…');
                }
                format!("text {s:?}")
            }
        }
    }
}

/// Matches a tag literal at the start of `s`.
pub(crate) fn match_tag(s: &str) -> Option<TagKind> {
    if !s.starts_with('<') {
        return None;
    }
    TagKind::ALL.into_iter().find(|k| s.starts_with(k.literal()))
}

/// Splits `source` into tag tokens and maximal runs of text.
///
/// Every byte of the input lands in exactly one token, so concatenating the
/// `raw` fields reproduces the source. Angle-bracket text that is not one of
/// the ten literals (including near misses such as `<parallel>`) stays text.
pub fn lex(source: &str) -> Vec<TagToken<'_>> {
    let mut tokens = Vec::new();
    let mut text_start = 0;
    let mut i = 0;
    let bytes = source.as_bytes();
    while i < bytes.len() {
        if bytes[i] == b'<' {
            if let Some(kind) = match_tag(&source[i..]) {
                if text_start < i {
                    tokens.push(TagToken {
                        kind: TokenKind::Text,
                        span: text_start..i,
                        raw: &source[text_start..i],
                    });
                }
                let end = i + kind.literal().len();
                tokens.push(TagToken {
                    kind: TokenKind::Tag(kind),
                    span: i..end,
                    raw: &source[i..end],
                });
                i = end;
                text_start = end;
                continue;
            }
        }
        i += 1;
    }
    if text_start < source.len() {
        tokens.push(TagToken {
            kind: TokenKind::Text,
            span: text_start..source.len(),
            raw: &source[text_start..],
        });
    }
    tokens
}

/// True when `s` contains any of the ten tag literals.
pub fn contains_tag(s: &str) -> bool {
    s.match_indices('<').any(|(i, _)| match_tag(&s[i..]).is_some())
}
