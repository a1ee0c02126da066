use std::ops::Range;

use serde::Serialize;

use super::ast::MapReduceBlock;
use super::lexer::{lex, TagKind, TagToken};
use super::parser::{parse_single_block, GrammarError};

/// A region of the source that failed the grammar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub span: Range<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub blocks: Vec<(MapReduceBlock, Range<usize>)>,
    pub violations: Vec<Violation>,
}

impl Extraction {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Index of the `</Parallel>` closing the `<Parallel>` at `open`, if any.
fn matching_close(tokens: &[TagToken<'_>], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, t) in tokens.iter().enumerate().skip(open) {
        match t.tag() {
            Some(TagKind::ParallelOpen) => depth += 1,
            Some(TagKind::ParallelClose) => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Finds every maximal well-formed `<Parallel>…</Parallel>` region.
///
/// Regions are delimited by bracket matching on `<Parallel>` tags alone and
/// then parsed. A region that fails to parse (or never closes) is reported as
/// a violation and scanning resumes just inside it, so a well-formed block
/// nested in a broken one is still recovered. Stray tags outside any region
/// are violations; inside an already-reported region they are not repeated.
pub fn extract_outermost_blocks(source: &str) -> Extraction {
    let tokens = lex(source);
    let mut out = Extraction::default();
    let mut suppress_until = 0usize;
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        match tok.tag() {
            Some(TagKind::ParallelOpen) => match matching_close(&tokens, i) {
                Some(j) => {
                    let span = tok.span.start..tokens[j].span.end;
                    match parse_single_block(&tokens[i..=j]) {
                        Ok(block) => {
                            out.blocks.push((block, span));
                            i = j + 1;
                            continue;
                        }
                        Err(e) => {
                            out.violations.push(violation(span.clone(), &e));
                            suppress_until = suppress_until.max(span.end);
                        }
                    }
                }
                None => {
                    out.violations.push(Violation {
                        span: tok.span.start..source.len(),
                        message: "unterminated <Parallel> block".into(),
                    });
                    suppress_until = source.len();
                }
            },
            Some(kind) if tok.span.start >= suppress_until => {
                out.violations.push(Violation {
                    span: tok.span.clone(),
                    message: format!("stray {kind} outside a <Parallel> block"),
                });
            }
            _ => {}
        }
        i += 1;
    }
    out
}

fn violation(span: Range<usize>, err: &GrammarError) -> Violation {
    Violation {
        span,
        message: err.to_string(),
    }
}
