//! The MapReduce control-tag language: lexing, parsing, serialization,
//! outermost-block extraction and structural validation.

mod ast;
mod extract;
pub mod generate;
mod lexer;
mod parser;
mod validate;

pub use ast::{serialize, IndexLabel, MapReduceBlock, Node, Outline, PathBody, Trajectory};
pub use extract::{extract_outermost_blocks, Extraction, Violation};
pub use lexer::{contains_tag, lex, TagKind, TagToken, TokenKind};
pub use parser::{parse, parse_source, GrammarError};
pub use validate::{
    validate, validate_source, BlockSummary, Finding, FindingKind, LabelledElement, Limits, Severity,
    ValidationReport,
};
