use std::ops::Range;

use thiserror::Error;

use super::ast::{MapReduceBlock, Node, Outline, PathBody, Trajectory};
use super::lexer::{TagKind, TagToken};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("malformed structure at bytes {}..{}: expected {expected}, found {found}", span.start, span.end)]
    MalformedStructure {
        span: Range<usize>,
        expected: &'static str,
        found: String,
    },
    #[error("block at bytes {}..{} declares {outlines} outline(s) but has {paths} path(s)", span.start, span.end)]
    CountMismatch {
        span: Range<usize>,
        outlines: usize,
        paths: usize,
    },
}

impl GrammarError {
    pub fn span(&self) -> Range<usize> {
        match self {
            GrammarError::MalformedStructure { span, .. } | GrammarError::CountMismatch { span, .. } => {
                span.clone()
            }
        }
    }
}

/// Parses a lexed token stream into a [`Trajectory`].
pub fn parse(tokens: &[TagToken<'_>]) -> Result<Trajectory, GrammarError> {
    let mut p = Parser::new(tokens);
    let nodes = p.nodes(Context::TopLevel)?;
    if let Some(tok) = p.peek() {
        return Err(p.unexpected(tok, "text or <Parallel>"));
    }
    Ok(Trajectory { nodes })
}

/// Lexes and parses in one call.
pub fn parse_source(source: &str) -> Result<Trajectory, GrammarError> {
    parse(&super::lexer::lex(source))
}

/// Parses exactly one block spanning the whole token slice.
pub(crate) fn parse_single_block(tokens: &[TagToken<'_>]) -> Result<MapReduceBlock, GrammarError> {
    let mut p = Parser::new(tokens);
    let block = p.block()?;
    if let Some(tok) = p.peek() {
        return Err(p.unexpected(tok, "end of block"));
    }
    Ok(block)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Context {
    TopLevel,
    Path,
}

struct Parser<'t, 'a> {
    tokens: &'t [TagToken<'a>],
    pos: usize,
}

impl<'t, 'a> Parser<'t, 'a> {
    fn new(tokens: &'t [TagToken<'a>]) -> Self {
        Self { tokens, pos: 0 }
    }

    fn peek(&self) -> Option<&'t TagToken<'a>> {
        self.tokens.get(self.pos)
    }

    fn end_offset(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.span.end)
    }

    fn unexpected(&self, tok: &TagToken<'_>, expected: &'static str) -> GrammarError {
        GrammarError::MalformedStructure {
            span: tok.span.clone(),
            expected,
            found: tok.describe(),
        }
    }

    fn eof(&self, expected: &'static str) -> GrammarError {
        let end = self.end_offset();
        GrammarError::MalformedStructure {
            span: end..end,
            expected,
            found: "end of input".into(),
        }
    }

    fn expect(&mut self, kind: TagKind, expected: &'static str) -> Result<(), GrammarError> {
        match self.peek() {
            Some(t) if t.tag() == Some(kind) => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.unexpected(t, expected)),
            None => Err(self.eof(expected)),
        }
    }

    /// Optional run of text.
    fn text(&mut self) -> String {
        match self.peek() {
            Some(t) if t.is_text() => {
                self.pos += 1;
                t.raw.to_string()
            }
            _ => String::new(),
        }
    }

    /// Optional whitespace; non-blank text is an error.
    fn blank(&mut self, expected: &'static str) -> Result<String, GrammarError> {
        match self.peek() {
            Some(t) if t.is_blank() => {
                self.pos += 1;
                Ok(t.raw.to_string())
            }
            Some(t) if t.is_text() => Err(self.unexpected(t, expected)),
            _ => Ok(String::new()),
        }
    }

    fn nodes(&mut self, ctx: Context) -> Result<Vec<Node>, GrammarError> {
        let mut nodes = Vec::new();
        while let Some(tok) = self.peek() {
            match tok.tag() {
                None => {
                    self.pos += 1;
                    nodes.push(Node::Text(tok.raw.to_string()));
                }
                Some(TagKind::ParallelOpen) => nodes.push(Node::Block(self.block()?)),
                Some(TagKind::PathClose) if ctx == Context::Path => break,
                Some(_) if ctx == Context::TopLevel => {
                    return Err(self.unexpected(tok, "text or <Parallel>"));
                }
                Some(_) => return Err(self.unexpected(tok, "text, <Parallel> or </Path>")),
            }
        }
        Ok(nodes)
    }

    fn block(&mut self) -> Result<MapReduceBlock, GrammarError> {
        let start = self.peek().map_or(self.end_offset(), |t| t.span.start);
        self.expect(TagKind::ParallelOpen, "<Parallel>")?;
        let lead = self.blank("<Goal>")?;
        self.expect(TagKind::GoalOpen, "<Goal>")?;
        let goal_preamble = self.text();

        let mut outlines = Vec::new();
        loop {
            match self.peek() {
                Some(t) if t.tag() == Some(TagKind::OutlineOpen) => {
                    self.pos += 1;
                    let text = self.text();
                    self.expect(TagKind::OutlineClose, "</Outline>")?;
                    let trailing = self.blank("<Outline> or </Goal>")?;
                    outlines.push(Outline { text, trailing });
                }
                Some(t) if t.tag() == Some(TagKind::GoalClose) => {
                    self.pos += 1;
                    break;
                }
                Some(t) => return Err(self.unexpected(t, "<Outline> or </Goal>")),
                None => return Err(self.eof("<Outline> or </Goal>")),
            }
        }
        let after_goal = self.blank("<Path> or <Conclusion>")?;

        let mut paths = Vec::new();
        loop {
            match self.peek() {
                Some(t) if t.tag() == Some(TagKind::PathOpen) => {
                    self.pos += 1;
                    let nodes = self.nodes(Context::Path)?;
                    self.expect(TagKind::PathClose, "</Path>")?;
                    let trailing = self.blank("<Path> or <Conclusion>")?;
                    paths.push(PathBody { nodes, trailing });
                }
                Some(t) if t.tag() == Some(TagKind::ConclusionOpen) => {
                    self.pos += 1;
                    break;
                }
                Some(t) => return Err(self.unexpected(t, "<Path> or <Conclusion>")),
                None => return Err(self.eof("<Path> or <Conclusion>")),
            }
        }
        let conclusion = self.text();
        self.expect(TagKind::ConclusionClose, "</Conclusion>")?;
        let before_close = self.blank("</Parallel>")?;
        self.expect(TagKind::ParallelClose, "</Parallel>")?;
        let end = self.tokens[self.pos - 1].span.end;

        if outlines.is_empty() || outlines.len() != paths.len() {
            return Err(GrammarError::CountMismatch {
                span: start..end,
                outlines: outlines.len(),
                paths: paths.len(),
            });
        }
        Ok(MapReduceBlock {
            lead,
            goal_preamble,
            outlines,
            after_goal,
            paths,
            conclusion,
            before_close,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{serialize, TagKind};

    const T1: &str = "plan <Parallel> <Goal> <Outline> 1: a </Outline> <Outline> 2: b </Outline> </Goal> <Path> 1: x1 x2 </Path> <Path> 2: y1 y2 y3 </Path> <Conclusion> done </Conclusion> </Parallel> end";

    #[test]
    fn parses_t1() {
        let t = parse_source(T1).unwrap();
        assert_eq!(t.nodes.len(), 3);
        let b = t.blocks().next().unwrap();
        assert_eq!(b.outlines.len(), 2);
        assert_eq!(b.paths.len(), 2);
        assert_eq!(b.outlines[1].summary(), "b");
        assert_eq!(serialize(&t), T1);
    }

    #[test]
    fn zero_outlines_is_count_mismatch() {
        let err = parse_source("<Parallel><Goal></Goal><Conclusion>x</Conclusion></Parallel>").unwrap_err();
        assert!(matches!(
            err,
            GrammarError::CountMismatch {
                outlines: 0,
                paths: 0,
                ..
            }
        ));
    }

    #[test]
    fn path_count_must_match() {
        let src = "<Parallel><Goal><Outline>1: a</Outline><Outline>2: b</Outline></Goal><Path>1: x</Path><Conclusion>c</Conclusion></Parallel>";
        assert!(matches!(
            parse_source(src),
            Err(GrammarError::CountMismatch {
                outlines: 2,
                paths: 1,
                ..
            })
        ));
    }

    #[test]
    fn text_between_paths_is_rejected() {
        let src = "<Parallel><Goal><Outline>1: a</Outline></Goal><Path>1: x</Path> stray <Path>2</Path><Conclusion>c</Conclusion></Parallel>";
        match parse_source(src) {
            Err(GrammarError::MalformedStructure { expected, found, .. }) => {
                assert_eq!(expected, "<Path> or <Conclusion>");
                assert!(found.contains("stray"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_block_reports_eof() {
        let src = "<Parallel><Goal><Outline>1: a</Outline></Goal><Path>1: x</Path>";
        match parse_source(src) {
            Err(GrammarError::MalformedStructure { span, found, .. }) => {
                assert_eq!(span, src.len()..src.len());
                assert_eq!(found, "end of input");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_block_only_inside_path() {
        let in_goal = "<Parallel><Goal><Parallel></Goal></Parallel>";
        assert!(parse_source(in_goal).is_err());
        let in_conclusion = "<Parallel><Goal><Outline>1</Outline></Goal><Path>1</Path><Conclusion><Parallel></Conclusion></Parallel>";
        assert!(parse_source(in_conclusion).is_err());
    }

    #[test]
    fn stray_top_level_tags_are_rejected() {
        for k in TagKind::ALL.into_iter().filter(|k| *k != TagKind::ParallelOpen) {
            let src = format!("text {} more", k.literal());
            assert!(parse_source(&src).is_err(), "{k} accepted at top level");
        }
    }

    #[test]
    fn nested_block_in_path() {
        let src = "<Parallel><Goal><Outline>1: a</Outline><Outline>2: b</Outline></Goal><Path>1: intro <Parallel><Goal><Outline>1.1: c</Outline></Goal><Path>1.1: d</Path><Conclusion>e</Conclusion></Parallel> tail</Path><Path>2: f</Path><Conclusion>g</Conclusion></Parallel>";
        let t = parse_source(src).unwrap();
        let b = t.blocks().next().unwrap();
        assert_eq!(b.depth(), 2);
        assert_eq!(b.paths[0].nodes.len(), 3);
        assert_eq!(serialize(&t), src);
    }
}
