use std::fs;
use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use multiverse_core::attention::{build_dag, SegmentKind, VisibilitySpec};
use multiverse_core::curator::{content_check, parse_labeled_steps, whole_text_check, ContentReport};
use multiverse_core::engine::{
    run_report, sweep as run_sweep, sweep_csv, synthetic_fixture, EngineConfig, EngineLimits,
    ScriptedModel, SimulationReport,
};
use multiverse_core::grammar::{parse_source, validate_source, Limits, Trajectory, ValidationReport};
use multiverse_core::tokenizer::Tokenizer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{
    AttentionDumpArgs, CurateCheckArgs, DumpFormat, Output, SimulateArgs, SweepArgs, ValidateArgs, Verdict,
};

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_file(path: &Path) -> Result<Trajectory> {
    let src = read(path)?;
    parse_source(&src).with_context(|| format!("parsing {}", path.display()))
}

pub fn emit(out: &Output, text: &str) -> Result<()> {
    match &out.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn verdict(pass: bool) -> Verdict {
    if pass {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[derive(Serialize)]
struct ValidateOutput<'a> {
    file: String,
    limits: Limits,
    #[serde(flatten)]
    report: &'a ValidationReport,
}

pub fn validate(a: ValidateArgs) -> Result<Verdict> {
    let src = read(&a.file)?;
    let limits = Limits {
        max_depth: if a.curation { Limits::CURATION.max_depth } else { a.max_depth },
        max_paths: a.max_paths,
    };
    let report = validate_source(&src, &limits);
    emit(
        &a.output,
        &json(&ValidateOutput {
            file: a.file.display().to_string(),
            limits,
            report: &report,
        }),
    )?;
    Ok(verdict(report.pass))
}

#[derive(Serialize)]
struct DumpOutput {
    file: String,
    tokens: Vec<String>,
    segments: Vec<SegmentKind>,
    positions: Vec<usize>,
    /// Per row, `[start, length]` runs of visible columns.
    mask_runs: Vec<Vec<[usize; 2]>>,
}

pub fn attention_dump(a: AttentionDumpArgs, tok: &Tokenizer) -> Result<Verdict> {
    let t = parse_file(&a.file)?;
    let dag = build_dag(&t, tok)?;
    let spec = VisibilitySpec::from_dag(&dag);
    let text = match a.format {
        DumpFormat::Text => spec.to_text(),
        DumpFormat::Json => {
            let keys = dag.token_keys();
            json(&DumpOutput {
                file: a.file.display().to_string(),
                tokens: keys.iter().map(|&(s, i)| dag.segments[s].tokens[i].word().to_string()).collect(),
                segments: keys.iter().map(|&(s, _)| dag.segments[s].kind).collect(),
                positions: spec.positions.clone(),
                mask_runs: (0..spec.mask.len()).map(|i| spec.mask.runs(i)).collect(),
            })
        }
    };
    emit(&a.output, &text)?;
    Ok(Verdict::Pass)
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    trajectory: String,
    cost: String,
    max_len: usize,
    #[serde(flatten)]
    report: &'a SimulationReport,
}

pub fn simulate(a: SimulateArgs, tok: &Tokenizer) -> Result<Verdict> {
    let t = parse_file(&a.trajectory)?;
    let mut backend = ScriptedModel::new(&t, tok)?;
    let limits = EngineLimits {
        max_worker_len: a.max_len,
        ..EngineLimits::default()
    };
    let report = run_report(&mut backend, &EngineConfig::new(a.cost, limits));
    if let Some(path) = &a.events {
        let mut lines = String::new();
        for e in &report.events {
            lines.push_str(&serde_json::to_string(e)?);
            lines.push('\n');
        }
        fs::write(path, lines).with_context(|| format!("writing {}", path.display()))?;
    }
    let text = json(&SimulateOutput {
        trajectory: a.trajectory.display().to_string(),
        cost: a.cost.to_string(),
        max_len: a.max_len,
        report: &report,
    });
    emit(&Output { out: a.report.clone() }, &text)?;
    Ok(verdict(report.is_done()))
}

#[derive(Serialize)]
struct SweepOutput {
    cost: String,
    seed: u64,
    rows: Vec<multiverse_core::engine::SweepRow>,
}

pub fn sweep(a: SweepArgs, tok: &Tokenizer) -> Result<Verdict> {
    let trajectories: Vec<Trajectory> = if a.trajectory.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        a.paths
            .iter()
            .map(|&k| {
                let lengths: Vec<usize> = (0..k.max(1)).map(|_| a.words + rng.gen_range(0..=a.jitter)).collect();
                parse_source(&synthetic_fixture(&lengths)).expect("synthetic blocks parse")
            })
            .collect()
    } else {
        a.trajectory.iter().map(|p| parse_file(p)).collect::<Result<_>>()?
    };
    let cfg = EngineConfig::new(a.cost, EngineLimits::default());
    let rows = run_sweep(&trajectories, &a.batch, &cfg, tok)?;
    let text = if a.csv {
        sweep_csv(&rows)
    } else {
        json(&SweepOutput {
            cost: a.cost.to_string(),
            seed: a.seed,
            rows,
        })
    };
    emit(&a.output, &text)?;
    Ok(Verdict::Pass)
}

#[derive(Serialize)]
struct CurateOutput {
    original: String,
    candidate: String,
    #[serde(flatten)]
    report: ContentReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    alignment_error: Option<multiverse_core::curator::AlignmentError>,
}

pub fn curate_check(a: CurateCheckArgs) -> Result<Verdict> {
    anyhow::ensure!(
        (0.0..=1.0).contains(&a.threshold),
        "threshold must be within [0, 1], got {}",
        a.threshold
    );
    let original = read(&a.original)?;
    let candidate = read(&a.candidate)?;
    let (o, c) = (parse_labeled_steps(&original), parse_labeled_steps(&candidate));
    let (report, alignment_error) = if a.whole_text || o.is_empty() || c.is_empty() {
        (whole_text_check(&original, &candidate, a.threshold), None)
    } else {
        match content_check(&o, &c, a.threshold) {
            Ok(r) => (r, None),
            Err(e) => {
                let mut r = whole_text_check(&original, &candidate, a.threshold);
                r.pass = false;
                (r, Some(e))
            }
        }
    };
    let pass = report.pass;
    emit(
        &a.output,
        &json(&CurateOutput {
            original: a.original.display().to_string(),
            candidate: a.candidate.display().to_string(),
            report,
            alignment_error,
        }),
    )?;
    Ok(verdict(pass))
}
