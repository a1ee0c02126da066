use std::ops::Range;

use regex::Regex;
use serde::Serialize;

use crate::grammar::{extract_outermost_blocks, lex, MapReduceBlock, TagKind};

pub const DEFAULT_PHRASES: [&str; 6] = ["Similarly", "Alternatively", "First", "Then", "Next", "On the other hand"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LintConfig {
    /// Phrases that tie a path to another one. Matched case-insensitively
    /// on word boundaries, any whitespace between words.
    pub phrases: Vec<String>,
    /// Also flag "Path N" mentions of other paths.
    pub cross_references: bool,
}

impl Default for LintConfig {
    fn default() -> Self {
        LintConfig {
            phrases: DEFAULT_PHRASES.iter().map(|p| p.to_string()).collect(),
            cross_references: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LintRule {
    SequentialPhrase,
    CrossPathReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LintFinding {
    /// Dotted ordinals of the innermost enclosing path, e.g. `2` or `1.2`.
    pub path: String,
    /// Text found at `span`.
    pub phrase: String,
    pub span: Range<usize>,
    pub rule: LintRule,
}

struct Matchers {
    phrases: Vec<Regex>,
    cross: Option<Regex>,
}

impl Matchers {
    fn new(cfg: &LintConfig) -> Self {
        let phrases = cfg
            .phrases
            .iter()
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                let words: Vec<String> = p.split_whitespace().map(regex::escape).collect();
                Regex::new(&format!(r"(?i)\b{}\b", words.join(r"\s+"))).expect("escaped phrase")
            })
            .collect();
        let cross = cfg
            .cross_references
            .then(|| Regex::new(r"(?i)\bpath\s+(\d+(?:\.\d+)*)\b").expect("valid regex"));
        Matchers { phrases, cross }
    }
}

/// Flags sequential phrases and cross-path references inside the path
/// bodies of every block in `source`. Spans index into `source`.
pub fn lint_source(source: &str, cfg: &LintConfig) -> Vec<LintFinding> {
    let m = Matchers::new(cfg);
    let mut out = Vec::new();
    for (_, range) in extract_outermost_blocks(source).blocks {
        lint_region(source, range, &m, &mut out);
    }
    out
}

/// [`lint_source`] for one block; spans index into `block.to_source()`.
pub fn independence_lint(block: &MapReduceBlock, cfg: &LintConfig) -> Vec<LintFinding> {
    let src = block.to_source();
    let mut out = Vec::new();
    lint_region(&src, 0..src.len(), &Matchers::new(cfg), &mut out);
    out
}

fn lint_region(source: &str, range: Range<usize>, m: &Matchers, out: &mut Vec<LintFinding>) {
    let base = range.start;
    let mut paths_seen: Vec<u32> = Vec::new();
    let mut stack: Vec<u32> = Vec::new();
    for tok in lex(&source[range]) {
        match tok.tag() {
            Some(TagKind::ParallelOpen) => paths_seen.push(0),
            Some(TagKind::ParallelClose) => {
                paths_seen.pop();
            }
            Some(TagKind::PathOpen) => {
                if let Some(n) = paths_seen.last_mut() {
                    *n += 1;
                    stack.push(*n);
                }
            }
            Some(TagKind::PathClose) => {
                stack.pop();
            }
            Some(_) => {}
            None if !stack.is_empty() => {
                let id: Vec<String> = stack.iter().map(u32::to_string).collect();
                let own = id.join(".");
                let at = base + tok.span.start;
                let mut found = Vec::new();
                for re in &m.phrases {
                    for hit in re.find_iter(tok.raw) {
                        found.push((hit.range(), LintRule::SequentialPhrase));
                    }
                }
                if let Some(re) = &m.cross {
                    for c in re.captures_iter(tok.raw) {
                        let target = &c[1];
                        let related = (1..=id.len()).any(|k| id[..k].join(".") == target);
                        if !related {
                            found.push((c.get(0).expect("match").range(), LintRule::CrossPathReference));
                        }
                    }
                }
                found.sort_by_key(|(r, _)| (r.start, r.end));
                for (r, rule) in found {
                    out.push(LintFinding {
                        path: own.clone(),
                        phrase: tok.raw[r.clone()].to_string(),
                        span: at + r.start..at + r.end,
                        rule,
                    });
                }
            }
            None => {}
        }
    }
}
