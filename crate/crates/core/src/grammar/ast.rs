use std::fmt;

use serde::{Deserialize, Serialize};

use super::lexer::TagKind;

/// A tagged reasoning trace: free text interleaved with MapReduce blocks.
///
/// Whitespace between tags is kept in the tree so that serialization is
/// byte-exact with the source the tree was parsed from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Node {
    Text(String),
    Block(MapReduceBlock),
}

/// `<Parallel> <Goal> … </Goal> <Path>… <Conclusion> … </Conclusion> </Parallel>`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapReduceBlock {
    /// Whitespace between `<Parallel>` and `<Goal>`.
    pub lead: String,
    /// Free text inside `<Goal>` before the first `<Outline>`.
    pub goal_preamble: String,
    pub outlines: Vec<Outline>,
    /// Whitespace between `</Goal>` and the first `<Path>`.
    pub after_goal: String,
    pub paths: Vec<PathBody>,
    pub conclusion: String,
    /// Whitespace between `</Conclusion>` and `</Parallel>`.
    pub before_close: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outline {
    /// Raw text between `<Outline>` and `</Outline>`.
    pub text: String,
    /// Whitespace following `</Outline>`.
    pub trailing: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathBody {
    pub nodes: Vec<Node>,
    /// Whitespace following `</Path>`.
    pub trailing: String,
}

/// Dotted ordinal such as `2` or `1.2`, written as `1.2:` at the start of an
/// outline or path body.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IndexLabel(pub Vec<u32>);

impl IndexLabel {
    /// Parses a leading `N(.M)*:` label, ignoring leading whitespace.
    /// Returns the label and the byte length consumed (including the colon).
    pub fn parse_prefix(text: &str) -> Option<(IndexLabel, usize)> {
        let trimmed = text.trim_start();
        let mut parts = Vec::new();
        let mut rest = trimmed;
        loop {
            let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
            if digits == 0 || digits > 9 {
                return None;
            }
            parts.push(rest[..digits].parse().ok()?);
            rest = &rest[digits..];
            if let Some(r) = rest.strip_prefix('.') {
                rest = r;
            } else {
                let r = rest.strip_prefix(':')?;
                rest = r;
                break;
            }
        }
        Some((IndexLabel(parts), text.len() - rest.len()))
    }

    pub fn child(&self, ordinal: u32) -> IndexLabel {
        let mut v = self.0.clone();
        v.push(ordinal);
        IndexLabel(v)
    }

    pub fn last(&self) -> u32 {
        *self.0.last().unwrap_or(&0)
    }

    pub fn parent(&self) -> Option<IndexLabel> {
        (self.0.len() > 1).then(|| IndexLabel(self.0[..self.0.len() - 1].to_vec()))
    }
}

impl fmt::Display for IndexLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl Outline {
    pub fn label(&self) -> Option<IndexLabel> {
        IndexLabel::parse_prefix(&self.text).map(|(l, _)| l)
    }

    /// Outline text with the index label removed and whitespace trimmed.
    pub fn summary(&self) -> &str {
        match IndexLabel::parse_prefix(&self.text) {
            Some((_, n)) => self.text[n..].trim(),
            None => self.text.trim(),
        }
    }
}

impl PathBody {
    /// Label at the start of the path body, if its first node is text
    /// starting with one.
    pub fn label(&self) -> Option<IndexLabel> {
        match self.nodes.first() {
            Some(Node::Text(t)) => IndexLabel::parse_prefix(t).map(|(l, _)| l),
            _ => None,
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &MapReduceBlock> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Block(b) => Some(b),
            Node::Text(_) => None,
        })
    }
}

impl MapReduceBlock {
    /// Nested blocks directly inside this block's paths.
    pub fn children(&self) -> impl Iterator<Item = &MapReduceBlock> {
        self.paths.iter().flat_map(|p| p.blocks())
    }

    /// Nesting depth of this block, counting itself (a flat block is 1).
    pub fn depth(&self) -> usize {
        1 + self.children().map(|c| c.depth()).max().unwrap_or(0)
    }

    /// Number of blocks in this subtree, including this one.
    pub fn block_count(&self) -> usize {
        1 + self.children().map(|c| c.block_count()).sum::<usize>()
    }

    pub fn write_to(&self, out: &mut String) {
        out.push_str(TagKind::ParallelOpen.literal());
        out.push_str(&self.lead);
        out.push_str(TagKind::GoalOpen.literal());
        out.push_str(&self.goal_preamble);
        for o in &self.outlines {
            out.push_str(TagKind::OutlineOpen.literal());
            out.push_str(&o.text);
            out.push_str(TagKind::OutlineClose.literal());
            out.push_str(&o.trailing);
        }
        out.push_str(TagKind::GoalClose.literal());
        out.push_str(&self.after_goal);
        for p in &self.paths {
            out.push_str(TagKind::PathOpen.literal());
            write_nodes(&p.nodes, out);
            out.push_str(TagKind::PathClose.literal());
            out.push_str(&p.trailing);
        }
        out.push_str(TagKind::ConclusionOpen.literal());
        out.push_str(&self.conclusion);
        out.push_str(TagKind::ConclusionClose.literal());
        out.push_str(&self.before_close);
        out.push_str(TagKind::ParallelClose.literal());
    }

    pub fn to_source(&self) -> String {
        let mut s = String::new();
        self.write_to(&mut s);
        s
    }

    fn normalized(&self) -> MapReduceBlock {
        MapReduceBlock {
            lead: "\n".into(),
            goal_preamble: norm_text(&self.goal_preamble),
            outlines: self
                .outlines
                .iter()
                .map(|o| Outline {
                    text: norm_text(&o.text),
                    trailing: "\n".into(),
                })
                .collect(),
            after_goal: "\n".into(),
            paths: self
                .paths
                .iter()
                .map(|p| PathBody {
                    nodes: normalize_nodes(&p.nodes),
                    trailing: "\n".into(),
                })
                .collect(),
            conclusion: norm_text(&self.conclusion),
            before_close: "\n".into(),
        }
    }
}

fn norm_text(s: &str) -> String {
    let t = s.trim();
    if t.is_empty() {
        "\n".into()
    } else {
        format!("\n{t}\n")
    }
}

fn normalize_nodes(nodes: &[Node]) -> Vec<Node> {
    nodes
        .iter()
        .filter_map(|n| match n {
            Node::Text(t) if t.trim().is_empty() => None,
            Node::Text(t) => Some(Node::Text(norm_text(t))),
            Node::Block(b) => Some(Node::Block(b.normalized())),
        })
        .collect()
}

pub(crate) fn write_nodes(nodes: &[Node], out: &mut String) {
    for n in nodes {
        match n {
            Node::Text(t) => out.push_str(t),
            Node::Block(b) => b.write_to(out),
        }
    }
}

impl Trajectory {
    pub fn blocks(&self) -> impl Iterator<Item = &MapReduceBlock> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Block(b) => Some(b),
            Node::Text(_) => None,
        })
    }

    pub fn is_sequential(&self) -> bool {
        self.blocks().next().is_none()
    }

    /// All blocks in pre-order together with their nesting depth (1-based).
    pub fn blocks_with_depth(&self) -> Vec<(usize, &MapReduceBlock)> {
        fn walk<'a>(b: &'a MapReduceBlock, depth: usize, out: &mut Vec<(usize, &'a MapReduceBlock)>) {
            out.push((depth, b));
            for c in b.children() {
                walk(c, depth + 1, out);
            }
        }
        let mut out = Vec::new();
        for b in self.blocks() {
            walk(b, 1, &mut out);
        }
        out
    }

    pub fn max_depth(&self) -> usize {
        self.blocks().map(|b| b.depth()).max().unwrap_or(0)
    }

    /// Canonical form: one tag per line, text trimmed. Two trajectories that
    /// differ only in inter-tag whitespace normalize to the same tree.
    pub fn normalized(&self) -> Trajectory {
        Trajectory {
            nodes: normalize_nodes(&self.nodes),
        }
    }
}

/// Writes the trajectory back to text. For a tree produced by the parser this
/// reproduces the original source byte for byte.
pub fn serialize(t: &Trajectory) -> String {
    let mut out = String::new();
    write_nodes(&t.nodes, &mut out);
    out
}
