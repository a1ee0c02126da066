//! Automated checks for curating parallel-structured training data: edit
//! distance gating of refilled steps, the grammar gate, a path-independence
//! lint and a five-stage pipeline harness with a pluggable backend.

mod content;
mod edit;
mod lint;
mod pipeline;

use std::ops::Range;

use serde::Serialize;

pub use content::{
    content_check, parse_labeled_steps, strip_outline, whole_text_check, AlignmentError, ContentReport, Granularity,
    LabeledStep, StepCheck,
};
pub use edit::{levenshtein, levenshtein_by, relative_edit_distance, EditDistanceResult, DEFAULT_THRESHOLD};
pub use lint::{independence_lint, lint_source, LintConfig, LintFinding, LintRule, DEFAULT_PHRASES};
pub use pipeline::{
    pipeline_run, Attempt, CurationError, CurationRecord, CurationStatus, PipelineConfig, PromptSet, Stage,
    StageBackend, StageRecord, StageRequest,
};

use crate::grammar::{extract_outermost_blocks, MapReduceBlock, Violation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GrammarGate {
    pub pass: bool,
    /// Outermost blocks with their byte ranges in the checked text.
    pub blocks: Vec<(MapReduceBlock, Range<usize>)>,
    pub violations: Vec<Violation>,
}

/// Extracts the outermost blocks; passes iff nothing was malformed.
pub fn grammar_gate(text: &str) -> GrammarGate {
    let e = extract_outermost_blocks(text);
    GrammarGate {
        pass: e.violations.is_empty(),
        blocks: e.blocks,
        violations: e.violations,
    }
}
