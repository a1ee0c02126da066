use std::collections::BTreeSet;

use serde::Serialize;

use crate::grammar::{GrammarError, MapReduceBlock, Node, TagKind, Trajectory};
use crate::tokenizer::{Token, Tokenizer};

pub type SegmentId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    /// Text before the first block, outside any block.
    Sequential,
    /// `<Parallel>` … `</Goal>`.
    Plan,
    /// `<Path>` up to `</Path>` or up to a nested block.
    Path,
    /// `<Conclusion>` … `</Parallel>` plus any text that follows until the
    /// next block or the end of the enclosing path.
    Reduce,
}

/// A contiguous run of tokens that share one visibility context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub id: SegmentId,
    pub kind: SegmentKind,
    /// Segments whose tokens are all visible to this one. Empty only for the
    /// root; a Reduce segment lists the tail segment of every sibling path.
    pub parents: Vec<SegmentId>,
    pub tokens: Vec<Token>,
    /// Index of the block this segment belongs to (not set for Sequential).
    pub block: Option<usize>,
    /// 1-based outline ordinal for Path segments.
    pub ordinal: Option<usize>,
}

impl Segment {
    pub fn parent(&self) -> Option<SegmentId> {
        self.parents.first().copied()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockInfo {
    /// Nesting depth, 1 for top-level blocks.
    pub depth: usize,
    pub plan: SegmentId,
    /// Every segment belonging to each path (its head segment first), in
    /// outline order.
    pub paths: Vec<Vec<SegmentId>>,
    pub reduce: SegmentId,
}

/// Branch-structured token layout of one trajectory.
///
/// Segment ids follow source order, which is also a topological order of the
/// parent relation. `layout` is the memory order used when the tokens are
/// flattened into one sequence; it starts out equal to source order and
/// changes only through [`GenerationDag::permute_paths`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GenerationDag {
    pub segments: Vec<Segment>,
    pub blocks: Vec<BlockInfo>,
    pub layout: Vec<SegmentId>,
}

struct Builder<'t> {
    stream: crate::tokenizer::TokenStream<'t>,
    token_seg: Vec<SegmentId>,
    segments: Vec<Segment>,
    blocks: Vec<BlockInfo>,
}

impl Builder<'_> {
    fn new_segment(
        &mut self,
        kind: SegmentKind,
        parents: Vec<SegmentId>,
        block: Option<usize>,
        ordinal: Option<usize>,
    ) -> SegmentId {
        let id = self.segments.len();
        self.segments.push(Segment {
            id,
            kind,
            parents,
            tokens: Vec::new(),
            block,
            ordinal,
        });
        id
    }

    fn tag(&mut self, seg: SegmentId, kind: TagKind) {
        self.stream.push_tag(kind);
        self.token_seg.push(seg);
    }

    fn text(&mut self, cursor: &mut Option<SegmentId>, text: &str) {
        let range = self.stream.push_text(text);
        if range.is_empty() {
            return;
        }
        let seg = *cursor.get_or_insert_with(|| {
            // Only the root can lack a segment.
            let id = self.segments.len();
            self.segments.push(Segment {
                id,
                kind: SegmentKind::Sequential,
                parents: Vec::new(),
                tokens: Vec::new(),
                block: None,
                ordinal: None,
            });
            id
        });
        self.token_seg.extend(range.map(|_| seg));
    }

    fn nodes(&mut self, nodes: &[Node], cursor: &mut Option<SegmentId>, depth: usize) -> Result<(), GrammarError> {
        for n in nodes {
            match n {
                Node::Text(t) => self.text(cursor, t),
                Node::Block(b) => {
                    let reduce = self.block(b, *cursor, depth)?;
                    *cursor = Some(reduce);
                }
            }
        }
        Ok(())
    }

    fn block(&mut self, b: &MapReduceBlock, parent: Option<SegmentId>, depth: usize) -> Result<SegmentId, GrammarError> {
        if b.outlines.is_empty() || b.outlines.len() != b.paths.len() {
            return Err(GrammarError::CountMismatch {
                span: 0..0,
                outlines: b.outlines.len(),
                paths: b.paths.len(),
            });
        }
        let block_id = self.blocks.len();
        // Reserve the slot so nested blocks get later ids (pre-order).
        self.blocks.push(BlockInfo {
            depth,
            plan: 0,
            paths: Vec::new(),
            reduce: 0,
        });

        let plan = self.new_segment(SegmentKind::Plan, parent.into_iter().collect(), Some(block_id), None);
        let mut cur = Some(plan);
        self.tag(plan, TagKind::ParallelOpen);
        self.text(&mut cur, &b.lead);
        self.tag(plan, TagKind::GoalOpen);
        self.text(&mut cur, &b.goal_preamble);
        for o in &b.outlines {
            self.tag(plan, TagKind::OutlineOpen);
            self.text(&mut cur, &o.text);
            self.tag(plan, TagKind::OutlineClose);
            self.text(&mut cur, &o.trailing);
        }
        self.tag(plan, TagKind::GoalClose);
        self.text(&mut cur, &b.after_goal);

        let mut path_segments = Vec::with_capacity(b.paths.len());
        let mut tails = Vec::with_capacity(b.paths.len());
        for (k, p) in b.paths.iter().enumerate() {
            let head = self.new_segment(SegmentKind::Path, vec![plan], Some(block_id), Some(k + 1));
            let mut cursor = Some(head);
            self.tag(head, TagKind::PathOpen);
            self.nodes(&p.nodes, &mut cursor, depth + 1)?;
            let tail = cursor.expect("path cursor is always set");
            self.tag(tail, TagKind::PathClose);
            self.text(&mut cursor, &p.trailing);
            path_segments.push((head..self.segments.len()).collect());
            tails.push(tail);
        }

        let reduce = self.new_segment(SegmentKind::Reduce, tails, Some(block_id), None);
        let mut cur = Some(reduce);
        self.tag(reduce, TagKind::ConclusionOpen);
        self.text(&mut cur, &b.conclusion);
        self.tag(reduce, TagKind::ConclusionClose);
        self.text(&mut cur, &b.before_close);
        self.tag(reduce, TagKind::ParallelClose);

        self.blocks[block_id] = BlockInfo {
            depth,
            plan,
            paths: path_segments,
            reduce,
        };
        Ok(reduce)
    }
}

/// Builds the segment DAG of a trajectory.
///
/// One Plan segment per block covers `<Parallel>`…`</Goal>`, one Path segment
/// per path starts at `<Path>`, and one Reduce segment starts at
/// `<Conclusion>`. Text following a block continues the Reduce segment, so a
/// nested block splits its enclosing path into the path head and the nested
/// block's segments.
pub fn build_dag(t: &Trajectory, tok: &Tokenizer) -> Result<GenerationDag, GrammarError> {
    let mut b = Builder {
        stream: tok.stream(),
        token_seg: Vec::new(),
        segments: Vec::new(),
        blocks: Vec::new(),
    };
    let mut cursor = None;
    b.nodes(&t.nodes, &mut cursor, 1)?;

    let Builder {
        stream,
        token_seg,
        mut segments,
        blocks,
    } = b;
    for (token, seg) in stream.finish().into_iter().zip(token_seg) {
        segments[seg].tokens.push(token);
    }
    let layout = (0..segments.len()).collect();
    Ok(GenerationDag {
        segments,
        blocks,
        layout,
    })
}

impl GenerationDag {
    pub fn token_count(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    /// `(segment, index within segment)` of every token in layout order.
    pub fn token_keys(&self) -> Vec<(SegmentId, usize)> {
        self.layout
            .iter()
            .flat_map(|&s| (0..self.segments[s].len()).map(move |i| (s, i)))
            .collect()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.layout.iter().flat_map(move |&s| self.segments[s].tokens.iter())
    }

    /// Source text in canonical (segment id) order.
    pub fn source(&self) -> String {
        self.segments
            .iter()
            .flat_map(|s| s.tokens.iter())
            .map(|t| t.surface.as_str())
            .collect()
    }

    /// Strict ancestors of every segment.
    pub fn ancestors(&self) -> Vec<BTreeSet<SegmentId>> {
        let mut out: Vec<BTreeSet<SegmentId>> = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            let mut set = BTreeSet::new();
            for &p in &s.parents {
                set.insert(p);
                set.extend(out[p].iter().copied());
            }
            out.push(set);
        }
        out
    }

    /// Root segment (the only one without parents), if the DAG is non-empty.
    pub fn root(&self) -> Option<SegmentId> {
        self.segments.iter().find(|s| s.parents.is_empty()).map(|s| s.id)
    }

    /// Returns a copy whose layout places the paths of `block` in `order`
    /// (a permutation of `0..paths`). Positions and visibility are unchanged
    /// by construction; only the memory order of the sibling subtrees moves.
    pub fn permute_paths(&self, block: usize, order: &[usize]) -> GenerationDag {
        let info = &self.blocks[block];
        let n = info.paths.len();
        let mut seen = vec![false; n];
        assert_eq!(order.len(), n, "permutation length");
        for &o in order {
            assert!(o < n && !seen[o], "not a permutation: {order:?}");
            seen[o] = true;
        }
        let owner = |s: SegmentId| info.paths.iter().position(|p| p.contains(&s));
        let first = self.layout.iter().position(|&s| owner(s).is_some()).expect("path segments in layout");
        let count: usize = info.paths.iter().map(Vec::len).sum();
        let window = &self.layout[first..first + count];
        let mut groups = vec![Vec::new(); n];
        for &s in window {
            groups[owner(s).expect("path subtrees are contiguous in layout")].push(s);
        }
        let mut layout = self.layout[..first].to_vec();
        for &o in order {
            layout.extend(&groups[o]);
        }
        layout.extend(&self.layout[first + count..]);
        GenerationDag {
            segments: self.segments.clone(),
            blocks: self.blocks.clone(),
            layout,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_source;

    pub(crate) const T1: &str = "plan <Parallel> <Goal> <Outline> 1: a </Outline> <Outline> 2: b </Outline> </Goal> <Path> 1: x1 x2 </Path> <Path> 2: y1 y2 y3 </Path> <Conclusion> done </Conclusion> </Parallel> end";

    fn dag(src: &str) -> GenerationDag {
        build_dag(&parse_source(src).unwrap(), &Tokenizer::default()).unwrap()
    }

    #[test]
    fn t1_segments() {
        let d = dag(T1);
        let lens: Vec<_> = d.segments.iter().map(|s| (s.kind, s.len())).collect();
        assert_eq!(
            lens,
            [
                (SegmentKind::Sequential, 1),
                (SegmentKind::Plan, 11),
                (SegmentKind::Path, 5),
                (SegmentKind::Path, 6),
                (SegmentKind::Reduce, 5),
            ]
        );
        assert_eq!(d.token_count(), 28);
        assert_eq!(d.segments[4].parents, vec![2, 3]);
        assert_eq!(d.source(), T1);
        assert_eq!(d.root(), Some(0));
    }

    #[test]
    fn sequential_text_is_one_segment() {
        let d = dag("a b c d");
        assert_eq!(d.segments.len(), 1);
        assert_eq!(d.segments[0].kind, SegmentKind::Sequential);
        assert_eq!(d.segments[0].len(), 4);
    }

    #[test]
    fn nested_block_hangs_off_path_head() {
        let src = "<Parallel><Goal><Outline>1: a</Outline><Outline>2: b</Outline></Goal><Path>1: in <Parallel><Goal><Outline>1.1: c</Outline></Goal><Path>1.1: d</Path><Conclusion>e</Conclusion></Parallel> tail</Path><Path>2: f</Path><Conclusion>g</Conclusion></Parallel>";
        let d = dag(src);
        assert_eq!(d.blocks.len(), 2);
        let outer = &d.blocks[0];
        let inner = &d.blocks[1];
        assert_eq!(inner.depth, 2);
        assert_eq!(d.segments[inner.plan].parents, vec![outer.paths[0][0]]);
        // Outer reduce sees the nested reduce (tail of path 1) and path 2.
        assert_eq!(d.segments[outer.reduce].parents, vec![inner.reduce, outer.paths[1][0]]);
        assert_eq!(outer.paths[0].len(), 4);
        assert_eq!(d.source(), src);
    }

    #[test]
    fn permute_moves_whole_subtrees() {
        let src = "<Parallel><Goal><Outline>1</Outline><Outline>2</Outline><Outline>3</Outline></Goal><Path>a</Path><Path>b</Path><Path>c</Path><Conclusion>z</Conclusion></Parallel>";
        let d = dag(src);
        let p = d.permute_paths(0, &[2, 0, 1]);
        let words: Vec<_> = p.tokens().map(|t| t.word().to_string()).collect();
        let joined = words.join(" ");
        assert!(joined.contains("<Path> c </Path> <Path> a </Path> <Path> b </Path>"), "{joined}");
        assert_eq!(p.source(), src);
    }

    #[test]
    fn hand_built_mismatch_is_rejected() {
        let mut t = parse_source("<Parallel><Goal><Outline>1</Outline></Goal><Path>a</Path><Conclusion>z</Conclusion></Parallel>").unwrap();
        if let Node::Block(b) = &mut t.nodes[0] {
            b.paths.push(b.paths[0].clone());
        }
        assert!(matches!(
            build_dag(&t, &Tokenizer::default()),
            Err(GrammarError::CountMismatch { .. })
        ));
    }
}
