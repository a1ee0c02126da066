use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use multiverse_core::engine::compute_parallelism;
use multiverse_core::grammar::{parse_source, validate_source, Limits};
use multiverse_core::tokenizer::Tokenizer;
use serde::Serialize;

use crate::commands::{emit, json};
use crate::{StatsArgs, Verdict};

#[derive(Debug, Serialize)]
pub struct FileStats {
    pub file: String,
    /// Blocks at any depth.
    pub block_count: usize,
    pub max_depth: usize,
    /// path count -> number of blocks with that many paths
    pub path_count_histogram: BTreeMap<usize, usize>,
    pub total_tokens: usize,
    pub sequential_length: usize,
    pub parallel_degree: f64,
}

#[derive(Debug, Serialize)]
pub struct Skipped {
    pub file: String,
    pub error: String,
}

#[derive(Debug, Serialize)]
pub struct Aggregate {
    pub files: usize,
    /// Fraction of files with at least one block.
    pub existence_ratio: f64,
    pub mean_blocks: f64,
    pub mean_parallel_degree: f64,
}

#[derive(Debug, Serialize)]
pub struct StatsReport {
    pub corpus: String,
    pub files: Vec<FileStats>,
    pub skipped: Vec<Skipped>,
    pub aggregate: Aggregate,
}

fn file_stats(name: String, src: &str, tok: &Tokenizer) -> Result<FileStats> {
    let t = parse_source(src)?;
    let report = validate_source(src, &Limits::default());
    let p = compute_parallelism(&t, tok)?;
    Ok(FileStats {
        file: name,
        block_count: report.blocks.len(),
        max_depth: report.max_depth(),
        path_count_histogram: report.path_counts,
        total_tokens: p.total_tokens,
        sequential_length: p.sequential_length,
        parallel_degree: p.degree,
    })
}

fn aggregate(rows: &[FileStats]) -> Aggregate {
    let n = rows.len();
    let mean = |f: &dyn Fn(&FileStats) -> f64| {
        if n == 0 {
            0.0
        } else {
            rows.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Aggregate {
        files: n,
        existence_ratio: mean(&|r| if r.block_count > 0 { 1.0 } else { 0.0 }),
        mean_blocks: mean(&|r| r.block_count as f64),
        mean_parallel_degree: mean(&|r| r.parallel_degree),
    }
}

pub fn collect(dir: &Path, tok: &Tokenizer) -> Result<StatsReport> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))? {
        let path = entry?.path();
        let hidden = path.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.'));
        if path.is_file() && !hidden {
            paths.push(path);
        }
    }
    paths.sort();

    let mut files = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let name = path.strip_prefix(dir).unwrap_or(&path).display().to_string();
        let row = fs::read_to_string(&path)
            .map_err(anyhow::Error::from)
            .and_then(|src| file_stats(name.clone(), &src, tok));
        match row {
            Ok(row) => files.push(row),
            Err(e) => skipped.push(Skipped {
                file: name,
                error: format!("{e:#}"),
            }),
        }
    }
    let aggregate = aggregate(&files);
    Ok(StatsReport {
        corpus: dir.display().to_string(),
        files,
        skipped,
        aggregate,
    })
}

pub fn run(a: StatsArgs, tok: &Tokenizer) -> Result<Verdict> {
    let report = collect(&a.dir, tok)?;
    emit(&a.output, &json(&report))?;
    Ok(Verdict::Pass)
}
