use std::fmt::Write as _;

use serde::Serialize;

use super::dag::{GenerationDag, SegmentId, SegmentKind};
use crate::grammar::{GrammarError, Trajectory};
use crate::tokenizer::{Token, TokenId, Tokenizer};

/// Gap between the furthest path position and the first Reduce position.
pub const REDUCE_OFFSET: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositionConfig {
    pub reduce_offset: usize,
}

impl Default for PositionConfig {
    fn default() -> Self {
        PositionConfig {
            reduce_offset: REDUCE_OFFSET,
        }
    }
}

/// First position of every segment, indexed by segment id.
pub fn segment_starts(dag: &GenerationDag, cfg: PositionConfig) -> Vec<usize> {
    let mut starts = vec![0usize; dag.segments.len()];
    let mut last = vec![None::<usize>; dag.segments.len()];
    for s in &dag.segments {
        // Last position reached along each parent chain. Empty segments never
        // occur in built DAGs, but fall back to their own start - 1 anyway.
        let reach = s
            .parents
            .iter()
            .map(|&p| last[p].map(|l| l + 1).unwrap_or(starts[p]))
            .max();
        starts[s.id] = match (reach, s.kind) {
            (None, _) => 0,
            (Some(r), SegmentKind::Reduce) => r - 1 + cfg.reduce_offset,
            (Some(r), _) => r,
        };
        last[s.id] = (!s.is_empty()).then(|| starts[s.id] + s.len() - 1);
    }
    starts
}

/// Position of every token in layout order.
pub fn assign_positions(dag: &GenerationDag) -> Vec<usize> {
    assign_positions_with(dag, PositionConfig::default())
}

pub fn assign_positions_with(dag: &GenerationDag, cfg: PositionConfig) -> Vec<usize> {
    let starts = segment_starts(dag, cfg);
    dag.token_keys().into_iter().map(|(s, i)| starts[s] + i).collect()
}

/// Square boolean attention mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    n: usize,
    bits: Vec<bool>,
}

impl AttentionMask {
    pub fn new(n: usize) -> Self {
        AttentionMask {
            n,
            bits: vec![false; n * n],
        }
    }

    /// Standard lower-triangular causal mask.
    pub fn causal(n: usize) -> Self {
        let mut m = AttentionMask::new(n);
        for i in 0..n {
            for j in 0..=i {
                m.set(i, j, true);
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.n..(i + 1) * self.n]
    }

    /// `[start, len]` runs of visible columns in row `i`.
    pub fn runs(&self, i: usize) -> Vec<[usize; 2]> {
        let mut out = Vec::new();
        let mut start = None;
        for (j, &b) in self.row(i).iter().chain([&false]).enumerate() {
            match (b, start) {
                (true, None) => start = Some(j),
                (false, Some(s)) => {
                    out.push([s, j - s]);
                    start = None;
                }
                _ => {}
            }
        }
        out
    }

    /// Rows as `#` (visible) and `.` (masked).
    pub fn to_grid(&self) -> String {
        let mut s = String::with_capacity(self.n * (self.n + 1));
        for i in 0..self.n {
            s.extend(self.row(i).iter().map(|&b| if b { '#' } else { '.' }));
            s.push('\n');
        }
        s
    }

    /// Sub-mask over the given rows/columns, in the given order.
    pub fn select(&self, indices: &[usize]) -> AttentionMask {
        let mut m = AttentionMask::new(indices.len());
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                m.set(a, b, self.get(i, j));
            }
        }
        m
    }
}

/// Token `i` sees token `j` iff `j` is in an ancestor segment of `i`, or in
/// the same segment and not later.
pub fn build_mask(dag: &GenerationDag) -> AttentionMask {
    let keys = dag.token_keys();
    let ancestors = dag.ancestors();
    let mut m = AttentionMask::new(keys.len());
    for (i, &(si, ii)) in keys.iter().enumerate() {
        for (j, &(sj, ij)) in keys.iter().enumerate() {
            let visible = if si == sj { ij <= ii } else { ancestors[si].contains(&sj) };
            m.set(i, j, visible);
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilitySpec {
    pub positions: Vec<usize>,
    pub mask: AttentionMask,
}

#[derive(Serialize)]
struct VisibilityJson<'a> {
    positions: &'a [usize],
    mask_runs: Vec<Vec<[usize; 2]>>,
}

impl VisibilitySpec {
    pub fn from_dag(dag: &GenerationDag) -> Self {
        VisibilitySpec {
            positions: assign_positions(dag),
            mask: build_mask(dag),
        }
    }

    /// `{positions, mask_runs}` with each mask row run-length encoded as
    /// `[start, len]` pairs of visible columns.
    pub fn to_json(&self) -> serde_json::Value {
        let runs = (0..self.mask.len()).map(|i| self.mask.runs(i)).collect();
        serde_json::to_value(VisibilityJson {
            positions: &self.positions,
            mask_runs: runs,
        })
        .expect("plain data serializes")
    }

    /// Mask grid with the position of each row appended.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, p) in self.positions.iter().enumerate() {
            let row: String = self.mask.row(i).iter().map(|&b| if b { '#' } else { '.' }).collect();
            let _ = writeln!(s, "{row} {p}");
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchOptions {
    /// Keep next-token targets whose target is a control tag.
    pub tag_loss: bool,
    pub positions: PositionConfig,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            tag_loss: true,
            positions: PositionConfig::default(),
        }
    }
}

/// One flattened teacher-forcing sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub tokens: Vec<TokenId>,
    pub positions: Vec<usize>,
    pub mask: AttentionMask,
    pub targets: Vec<Option<TokenId>>,
    /// Owning `(segment, index)` of every token.
    pub keys: Vec<(SegmentId, usize)>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Sub-batch of the given tokens, keeping their positions and mutual
    /// visibility.
    pub fn select(&self, indices: &[usize]) -> TrainingBatch {
        TrainingBatch {
            tokens: indices.iter().map(|&i| self.tokens[i]).collect(),
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            mask: self.mask.select(indices),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            keys: indices.iter().map(|&i| self.keys[i]).collect(),
        }
    }

    /// Layout indices of the tokens visible from the token at `i` (its
    /// ancestor chain plus the earlier tokens of its own segment).
    pub fn visible_from(&self, i: usize) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.mask.get(i, j)).collect()
    }
}

/// Next-token target of the last token of segment `s`.
///
/// The Plan continues into path 1; a Path's tail has no target because the
/// engine itself supplies `<Conclusion>`; any other segment continues into its
/// single-parent child.
fn boundary_target(dag: &GenerationDag, s: SegmentId) -> Option<&Token> {
    let seg = &dag.segments[s];
    let child = dag
        .segments
        .iter()
        .filter(|c| c.parents == [s])
        .find(|c| seg.kind != SegmentKind::Plan || c.ordinal == Some(1));
    child.and_then(|c| c.tokens.first())
}

pub fn batch_from_dag(dag: &GenerationDag, opts: BatchOptions) -> TrainingBatch {
    let keys = dag.token_keys();
    let mut tokens = Vec::with_capacity(keys.len());
    let mut targets = Vec::with_capacity(keys.len());
    for &(s, i) in &keys {
        let seg = &dag.segments[s];
        tokens.push(seg.tokens[i].id);
        let next = seg.tokens.get(i + 1).or_else(|| boundary_target(dag, s));
        targets.push(next.filter(|t| opts.tag_loss || t.tag.is_none()).map(|t| t.id));
    }
    TrainingBatch {
        tokens,
        positions: assign_positions_with(dag, opts.positions),
        mask: build_mask(dag),
        targets,
        keys,
    }
}

pub fn build_training_batch(t: &Trajectory, tok: &Tokenizer) -> Result<TrainingBatch, GrammarError> {
    let dag = super::build_dag(t, tok)?;
    Ok(batch_from_dag(&dag, BatchOptions::default()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::build_dag;
    use crate::grammar::parse_source;

    const T1: &str = "plan <Parallel> <Goal> <Outline> 1: a </Outline> <Outline> 2: b </Outline> </Goal> <Path> 1: x1 x2 </Path> <Path> 2: y1 y2 y3 </Path> <Conclusion> done </Conclusion> </Parallel> end";

    fn dag(src: &str) -> GenerationDag {
        build_dag(&parse_source(src).unwrap(), &Tokenizer::default()).unwrap()
    }

    #[test]
    fn t1_positions() {
        let p = assign_positions(&dag(T1));
        let expected: Vec<usize> = (0..12).chain(12..17).chain(12..18).chain(18..23).collect();
        assert_eq!(p, expected);
    }

    #[test]
    fn reduce_offset_is_configurable() {
        let p = assign_positions_with(&dag(T1), PositionConfig { reduce_offset: 0 });
        assert_eq!(p[23], 17);
    }

    #[test]
    fn t1_mask_blocks() {
        let m = build_mask(&dag(T1));
        assert_eq!(m.len(), 28);
        // y1 (index 19) cannot see x1 (index 13); done (24) sees 0..=23.
        assert!(!m.get(19, 13));
        assert!((0..24).all(|j| m.get(24, j)));
        for i in 12..17 {
            for j in 17..23 {
                assert!(!m.get(i, j) && !m.get(j, i));
            }
        }
    }

    #[test]
    fn runs_and_grid() {
        let m = AttentionMask::causal(3);
        assert_eq!(m.runs(2), vec![[0, 3]]);
        assert_eq!(m.to_grid(), "#..\n##.\n###\n");
        let spec = VisibilitySpec::from_dag(&dag(T1));
        let json = spec.to_json();
        assert_eq!(json["mask_runs"][19], serde_json::json!([[0, 12], [17, 3]]));
    }

    #[test]
    fn t1_targets() {
        let d = dag(T1);
        let b = batch_from_dag(&d, BatchOptions::default());
        let tok = Tokenizer::default();
        let path = tok.tag_id(crate::grammar::TagKind::PathOpen);
        // </Goal> (index 11) targets path 1's <Path>.
        assert_eq!(b.targets[11], Some(path));
        // Path tails carry no target; reduce's last continues into "end".
        assert_eq!(b.targets[16], None);
        assert_eq!(b.targets[22], None);
        assert_eq!(b.targets[26], Some(tok.word_id("end")));
        assert_eq!(b.targets[27], None);

        let no_tags = batch_from_dag(
            &d,
            BatchOptions {
                tag_loss: false,
                ..BatchOptions::default()
            },
        );
        assert_eq!(no_tags.targets[11], None);
        assert_eq!(no_tags.targets[0], None);
        assert_eq!(no_tags.targets[23], Some(tok.word_id("done")));
    }
}
