use std::collections::BTreeMap;

use serde::Serialize;

use super::ast::{IndexLabel, MapReduceBlock, Trajectory};
use super::extract::extract_outermost_blocks;

/// Optional structural limits. The grammar itself allows any depth; the
/// curation profile caps nesting at 2.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Limits {
    pub max_depth: Option<usize>,
    pub max_paths: Option<usize>,
}

impl Limits {
    pub const CURATION: Limits = Limits {
        max_depth: Some(2),
        max_paths: None,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FindingKind {
    Grammar { message: String, start: usize, end: usize },
    DepthExceeded { depth: usize, max: usize },
    PathsExceeded { paths: usize, max: usize },
    MissingLabel { element: LabelledElement, ordinal: usize },
    IndexGap { element: LabelledElement, expected: String, found: String },
    LabelMismatch { ordinal: usize, outline: String, path: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelledElement {
    Outline,
    Path,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    /// Pre-order index of the block the finding belongs to, if any.
    pub block: Option<usize>,
    pub severity: Severity,
    #[serde(flatten)]
    pub kind: FindingKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockSummary {
    pub index: usize,
    pub depth: usize,
    pub paths: usize,
    pub outline_labels: Vec<Option<String>>,
    pub path_labels: Vec<Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub blocks: Vec<BlockSummary>,
    pub violations: Vec<Finding>,
    /// depth -> number of blocks at that depth
    pub depth_histogram: BTreeMap<usize, usize>,
    /// path count -> number of blocks with that many paths
    pub path_counts: BTreeMap<usize, usize>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.violations.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn max_depth(&self) -> usize {
        self.blocks.iter().map(|b| b.depth).max().unwrap_or(0)
    }
}

struct Walker<'l> {
    limits: &'l Limits,
    blocks: Vec<BlockSummary>,
    findings: Vec<Finding>,
}

impl Walker<'_> {
    fn block(&mut self, b: &MapReduceBlock, depth: usize, parent_label: Option<&IndexLabel>) {
        let index = self.blocks.len();
        let outline_labels: Vec<_> = b.outlines.iter().map(|o| o.label()).collect();
        let path_labels: Vec<_> = b.paths.iter().map(|p| p.label()).collect();
        self.blocks.push(BlockSummary {
            index,
            depth,
            paths: b.paths.len(),
            outline_labels: outline_labels.iter().map(|l| l.as_ref().map(|l| l.to_string())).collect(),
            path_labels: path_labels.iter().map(|l| l.as_ref().map(|l| l.to_string())).collect(),
        });

        if let Some(max) = self.limits.max_depth {
            if depth > max {
                self.push(index, Severity::Error, FindingKind::DepthExceeded { depth, max });
            }
        }
        if let Some(max) = self.limits.max_paths {
            if b.paths.len() > max {
                self.push(
                    index,
                    Severity::Error,
                    FindingKind::PathsExceeded {
                        paths: b.paths.len(),
                        max,
                    },
                );
            }
        }

        let nested = depth > 1;
        self.labels(index, LabelledElement::Outline, &outline_labels, parent_label, nested);
        self.labels(index, LabelledElement::Path, &path_labels, parent_label, nested);
        for (k, (o, p)) in outline_labels.iter().zip(&path_labels).enumerate() {
            if let (Some(o), Some(p)) = (o, p) {
                if o != p {
                    self.push(
                        index,
                        Severity::Warning,
                        FindingKind::LabelMismatch {
                            ordinal: k + 1,
                            outline: o.to_string(),
                            path: p.to_string(),
                        },
                    );
                }
            }
        }

        for (path, label) in b.paths.iter().zip(&path_labels) {
            for child in path.blocks() {
                self.block(child, depth + 1, label.as_ref());
            }
        }
    }

    fn labels(
        &mut self,
        block: usize,
        element: LabelledElement,
        labels: &[Option<IndexLabel>],
        parent: Option<&IndexLabel>,
        nested: bool,
    ) {
        for (k, label) in labels.iter().enumerate() {
            let ordinal = k as u32 + 1;
            let expected = match parent {
                Some(p) => p.child(ordinal),
                None => IndexLabel(vec![ordinal]),
            };
            match label {
                None => self.push(
                    block,
                    Severity::Warning,
                    FindingKind::MissingLabel {
                        element,
                        ordinal: k + 1,
                    },
                ),
                // Inside an unlabelled path any dotted prefix is accepted as
                // long as the final ordinal counts up from 1.
                Some(l) if nested && parent.is_none() && l.0.len() > 1 && l.last() == ordinal => {}
                Some(l) if *l != expected => self.push(
                    block,
                    Severity::Warning,
                    FindingKind::IndexGap {
                        element,
                        expected: expected.to_string(),
                        found: l.to_string(),
                    },
                ),
                Some(_) => {}
            }
        }
    }

    fn push(&mut self, block: usize, severity: Severity, kind: FindingKind) {
        self.findings.push(Finding {
            block: Some(block),
            severity,
            kind,
        });
    }

    fn finish(self, mut extra: Vec<Finding>) -> ValidationReport {
        let mut depth_histogram = BTreeMap::new();
        let mut path_counts = BTreeMap::new();
        for b in &self.blocks {
            *depth_histogram.entry(b.depth).or_insert(0) += 1;
            *path_counts.entry(b.paths).or_insert(0) += 1;
        }
        extra.extend(self.findings);
        ValidationReport {
            pass: extra.iter().all(|f| f.severity != Severity::Error),
            blocks: self.blocks,
            violations: extra,
            depth_histogram,
            path_counts,
        }
    }
}

/// Structural report over a parsed trajectory: depth and path count of every
/// block, index-label consistency, and any limits that were supplied.
///
/// Label problems are warnings; only limit breaches fail the report.
pub fn validate(t: &Trajectory, limits: &Limits) -> ValidationReport {
    let mut w = Walker {
        limits,
        blocks: Vec::new(),
        findings: Vec::new(),
    };
    for b in t.blocks() {
        w.block(b, 1, None);
    }
    w.finish(Vec::new())
}

/// Like [`validate`] but starting from raw text: grammar violations become
/// error findings and the well-formed outermost blocks are still reported.
pub fn validate_source(source: &str, limits: &Limits) -> ValidationReport {
    let ex = extract_outermost_blocks(source);
    let grammar = ex
        .violations
        .iter()
        .map(|v| Finding {
            block: None,
            severity: Severity::Error,
            kind: FindingKind::Grammar {
                message: v.message.clone(),
                start: v.span.start,
                end: v.span.end,
            },
        })
        .collect();
    let mut w = Walker {
        limits,
        blocks: Vec::new(),
        findings: Vec::new(),
    };
    for (b, _) in &ex.blocks {
        w.block(b, 1, None);
    }
    w.finish(grammar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_source;

    fn block(labels: &[&str], body: &str) -> String {
        let outlines: String = labels.iter().map(|l| format!("<Outline>{l} o</Outline>")).collect();
        let paths: String = labels.iter().map(|l| format!("<Path>{l} {body}</Path>")).collect();
        format!("<Parallel><Goal>{outlines}</Goal>{paths}<Conclusion>c</Conclusion></Parallel>")
    }

    #[test]
    fn index_gap_is_a_warning() {
        let t = parse_source(&block(&["1:", "3:"], "p")).unwrap();
        let r = validate(&t, &Limits::default());
        assert!(r.pass);
        let gaps: Vec<_> = r
            .violations
            .iter()
            .filter(|f| matches!(f.kind, FindingKind::IndexGap { .. }))
            .collect();
        assert_eq!(gaps.len(), 2, "{:?}", r.violations);
    }

    #[test]
    fn triple_nesting_fails_curation_limits() {
        let inner = block(&["1.1.1:"], "leaf");
        let mid = block(&["1.1:"], &inner);
        let outer = block(&["1:"], &mid);
        let t = parse_source(&outer).unwrap();
        let r = validate(&t, &Limits::CURATION);
        assert!(!r.pass);
        assert_eq!(r.max_depth(), 3);
        assert_eq!(r.depth_histogram.get(&3), Some(&1));
        assert!(r
            .errors()
            .any(|f| f.kind == FindingKind::DepthExceeded { depth: 3, max: 2 }));
        // No limits: same tree passes.
        assert!(validate(&t, &Limits::default()).pass);
    }

    #[test]
    fn max_paths_limit() {
        let t = parse_source(&block(&["1:", "2:", "3:"], "p")).unwrap();
        let r = validate(
            &t,
            &Limits {
                max_depth: None,
                max_paths: Some(2),
            },
        );
        assert!(!r.pass);
        assert_eq!(r.path_counts.get(&3), Some(&1));
    }

    #[test]
    fn missing_and_mismatched_labels() {
        let src = "<Parallel><Goal><Outline>a</Outline><Outline>2: b</Outline></Goal><Path>1: x</Path><Path>3: y</Path><Conclusion>c</Conclusion></Parallel>";
        let r = validate(&parse_source(src).unwrap(), &Limits::default());
        assert!(r.pass);
        let kinds: Vec<_> = r.violations.iter().map(|f| &f.kind).collect();
        assert!(kinds.iter().any(|k| matches!(k, FindingKind::MissingLabel { element: LabelledElement::Outline, ordinal: 1 })));
        assert!(kinds.iter().any(|k| matches!(k, FindingKind::LabelMismatch { ordinal: 2, .. })));
    }

    #[test]
    fn source_report_includes_grammar_errors() {
        let r = validate_source("x </Goal> y", &Limits::default());
        assert!(!r.pass);
        assert!(r.blocks.is_empty());
    }
}
