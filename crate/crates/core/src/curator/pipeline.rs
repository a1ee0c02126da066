use std::fmt;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use super::content::{content_check, parse_labeled_steps, whole_text_check, AlignmentError, ContentReport, Granularity};
use super::edit::DEFAULT_THRESHOLD;
use super::lint::{lint_source, LintConfig, LintFinding};
use super::{grammar_gate, GrammarGate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Main steps and substeps of the original reasoning.
    Extract,
    /// Which adjacent steps can run in parallel.
    Parallelize,
    /// Tree summary with `<parallel>` annotations.
    Summarize,
    /// Summary refilled with the original sentences.
    Refill,
    /// MapReduce tags added and paths rewritten.
    Restructure,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Extract,
        Stage::Parallelize,
        Stage::Summarize,
        Stage::Refill,
        Stage::Restructure,
    ];

    /// 1-based stage number.
    pub fn id(self) -> usize {
        Stage::ALL.iter().position(|&s| s == self).expect("listed") + 1
    }

    /// Prompt file name inside a prompt directory.
    pub fn prompt_file(self) -> String {
        format!("stage{}.txt", self.id())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}", self.id())
    }
}

/// One prompt per stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    prompts: [String; 5],
}

impl PromptSet {
    /// The prompts shipped in `prompts/stage{1..5}.txt`.
    pub fn builtin() -> Self {
        PromptSet {
            prompts: [
                include_str!("../../prompts/stage1.txt"),
                include_str!("../../prompts/stage2.txt"),
                include_str!("../../prompts/stage3.txt"),
                include_str!("../../prompts/stage4.txt"),
                include_str!("../../prompts/stage5.txt"),
            ]
            .map(String::from),
        }
    }

    /// Reads `stage1.txt` .. `stage5.txt` from `dir`.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut prompts: [String; 5] = Default::default();
        for (slot, stage) in prompts.iter_mut().zip(Stage::ALL) {
            *slot = std::fs::read_to_string(dir.join(stage.prompt_file()))?;
        }
        Ok(PromptSet { prompts })
    }

    pub fn get(&self, stage: Stage) -> &str {
        &self.prompts[stage.id() - 1]
    }
}

/// What a stage backend is asked to transform.
#[derive(Debug, Clone, Copy)]
pub struct StageRequest<'a> {
    pub stage: Stage,
    pub prompt: &'a str,
    /// Accepted output of the previous stage (the original for stage 1).
    pub previous: &'a str,
    pub original: &'a str,
    /// 0 for the first try, then 1, 2, ... for regenerations.
    pub attempt: usize,
}

/// Text transform standing in for the LLM of each stage.
pub trait StageBackend {
    fn transform(&mut self, req: &StageRequest<'_>) -> String;
}

impl<F: FnMut(&StageRequest<'_>) -> String> StageBackend for F {
    fn transform(&mut self, req: &StageRequest<'_>) -> String {
        self(req)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    /// Extra attempts allowed per stage after the first.
    pub max_regens: usize,
    pub threshold: f64,
    /// Per-step comparison applies when the original carries step labels;
    /// otherwise the whole text is compared.
    pub granularity: Granularity,
    pub lint: LintConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_regens: 3,
            threshold: DEFAULT_THRESHOLD,
            granularity: Granularity::PerStep,
            lint: LintConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attempt {
    pub output: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub content: Option<ContentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment: Option<AlignmentError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grammar: Option<GrammarGate>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub attempts: Vec<Attempt>,
    pub regeneration_count: usize,
}

impl StageRecord {
    /// Output of the accepted attempt, if any.
    pub fn output(&self) -> Option<&str> {
        self.attempts.iter().find(|a| a.accepted).map(|a| a.output.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CurationStatus {
    Accepted,
    Rejected { stage: Stage },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurationRecord {
    pub input: String,
    pub stages: Vec<StageRecord>,
    /// Independence findings on the final text; advisory, not a gate.
    pub lint: Vec<LintFinding>,
    pub status: CurationStatus,
}

impl CurationRecord {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn final_output(&self) -> Option<&str> {
        match self.status {
            CurationStatus::Accepted => self.stage(Stage::Restructure).and_then(StageRecord::output),
            CurationStatus::Rejected { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurationError {
    #[error("{stage} still failing after {attempts} attempts")]
    RegenerationExhausted {
        stage: Stage,
        attempts: usize,
        record: Box<CurationRecord>,
    },
}

fn check(stage: Stage, input: &str, output: String, cfg: &PipelineConfig) -> Attempt {
    let mut a = Attempt {
        output,
        content: None,
        alignment: None,
        grammar: None,
        accepted: true,
    };
    match stage {
        Stage::Refill => {
            let original = parse_labeled_steps(input);
            if cfg.granularity == Granularity::PerStep && !original.is_empty() {
                match content_check(&original, &parse_labeled_steps(&a.output), cfg.threshold) {
                    Ok(r) => {
                        a.accepted = r.pass;
                        a.content = Some(r);
                    }
                    Err(e) => {
                        a.accepted = false;
                        a.alignment = Some(e);
                    }
                }
            } else {
                let r = whole_text_check(input, &a.output, cfg.threshold);
                a.accepted = r.pass;
                a.content = Some(r);
            }
        }
        Stage::Restructure => {
            let g = grammar_gate(&a.output);
            a.accepted = g.pass;
            a.grammar = Some(g);
        }
        _ => {}
    }
    a
}

/// Runs the five stages in order. Stage 4 output must pass the content
/// check against `input` and stage 5 output the grammar gate; a failing
/// stage is regenerated up to `max_regens` times.
pub fn pipeline_run(
    input: &str,
    backend: &mut dyn StageBackend,
    prompts: &PromptSet,
    cfg: &PipelineConfig,
) -> Result<CurationRecord, CurationError> {
    let mut record = CurationRecord {
        input: input.to_string(),
        stages: Vec::new(),
        lint: Vec::new(),
        status: CurationStatus::Accepted,
    };
    let mut previous = input.to_string();
    for stage in Stage::ALL {
        let mut sr = StageRecord {
            stage,
            attempts: Vec::new(),
            regeneration_count: 0,
        };
        for attempt in 0..=cfg.max_regens {
            let output = backend.transform(&StageRequest {
                stage,
                prompt: prompts.get(stage),
                previous: &previous,
                original: input,
                attempt,
            });
            let a = check(stage, input, output, cfg);
            let ok = a.accepted;
            sr.attempts.push(a);
            if ok {
                break;
            }
        }
        sr.regeneration_count = sr.attempts.len() - 1;
        let accepted = sr.output().map(str::to_string);
        record.stages.push(sr);
        match accepted {
            Some(out) => previous = out,
            None => {
                record.status = CurationStatus::Rejected { stage };
                return Err(CurationError::RegenerationExhausted {
                    stage,
                    attempts: cfg.max_regens + 1,
                    record: Box::new(record),
                });
            }
        }
    }
    record.lint = lint_source(&previous, &cfg.lint);
    Ok(record)
}
