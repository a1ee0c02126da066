use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::backend::{Backend, ScriptedModel};
use super::sim::{run_batch, EngineConfig, Event, EventKind};
use crate::attention::{build_dag, AttentionMask, VisibilitySpec};
use crate::grammar::{GrammarError, Trajectory};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Parallelism {
    pub total_tokens: usize,
    /// Tokens on the longest dependency chain.
    pub sequential_length: usize,
    /// `total_tokens / sequential_length`; 1 for sequential text.
    pub degree: f64,
}

/// Token totals and critical path of a trajectory, from its segment DAG.
pub fn compute_parallelism(t: &Trajectory, tok: &Tokenizer) -> Result<Parallelism, GrammarError> {
    let dag = build_dag(t, tok)?;
    let mut end = vec![0usize; dag.segments.len()];
    for s in &dag.segments {
        let start = s.parents.iter().map(|&p| end[p]).max().unwrap_or(0);
        end[s.id] = start + s.len();
    }
    let total_tokens = dag.token_count();
    let sequential_length = end.iter().copied().max().unwrap_or(0);
    let degree = if sequential_length == 0 {
        1.0
    } else {
        total_tokens as f64 / sequential_length as f64
    };
    Ok(Parallelism {
        total_tokens,
        sequential_length,
        degree,
    })
}

struct Replay {
    positions: Vec<usize>,
    /// Emission indices each token could see, itself included.
    seen: Vec<Vec<usize>>,
    layout: Vec<usize>,
}

fn replay(events: &[Event], request: usize) -> Replay {
    let mut positions: Vec<usize> = Vec::new();
    let mut seen: Vec<Vec<usize>> = Vec::new();
    let mut lists: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut fork_len: HashMap<usize, usize> = HashMap::new();
    for e in events.iter().filter(|e| e.request == request) {
        match e.kind {
            EventKind::Decode | EventKind::Prefill => {
                let idx = positions.len();
                positions.push(e.position.unwrap_or(0));
                let list = lists.entry(e.worker).or_default();
                list.push(idx);
                seen.push(list.clone());
            }
            EventKind::Spawn => {
                let parent = lists.get(&e.worker).cloned().unwrap_or_default();
                for &c in e.children.as_deref().unwrap_or(&[]) {
                    fork_len.insert(c, parent.len());
                    lists.insert(c, parent.clone());
                }
            }
            EventKind::Merge => {
                let mut merged = lists.get(&e.worker).cloned().unwrap_or_default();
                for &c in e.children.as_deref().unwrap_or(&[]) {
                    let list = lists.remove(&c).unwrap_or_default();
                    merged.extend_from_slice(&list[fork_len[&c]..]);
                }
                lists.insert(e.worker, merged);
            }
            _ => {}
        }
    }
    Replay {
        positions,
        seen,
        layout: lists.remove(&0).unwrap_or_default(),
    }
}

/// Emission indices (counting decoded and prefilled tokens of `request` in
/// log order) arranged in the final layout of the main sequence.
pub fn emission_layout(events: &[Event], request: usize) -> Vec<usize> {
    replay(events, request).layout
}

/// Rebuilds positions and attention mask from an event log alone: a token
/// sees what its sequence held when it was emitted. Rows follow the final
/// layout of the main sequence.
pub fn reconstruct_visibility(events: &[Event], request: usize) -> VisibilitySpec {
    let r = replay(events, request);
    let mut row_of = vec![usize::MAX; r.positions.len()];
    for (row, &idx) in r.layout.iter().enumerate() {
        row_of[idx] = row;
    }
    let mut mask = AttentionMask::new(r.layout.len());
    for (row, &idx) in r.layout.iter().enumerate() {
        for &j in &r.seen[idx] {
            mask.set(row, row_of[j], true);
        }
    }
    VisibilitySpec {
        positions: r.layout.iter().map(|&i| r.positions[i]).collect(),
        mask,
    }
}

/// `<Parallel>` block with one empty outline per path and the given number
/// of plain words in each path. No text outside the block.
pub fn synthetic_fixture(path_words: &[usize]) -> String {
    let mut s = String::from("<Parallel> <Goal>");
    for _ in path_words {
        s.push_str(" <Outline> </Outline>");
    }
    s.push_str(" </Goal>");
    for (p, &n) in path_words.iter().enumerate() {
        s.push_str(" <Path>");
        for w in 0..n {
            let _ = write!(s, " p{}w{}", p + 1, w + 1);
        }
        s.push_str(" </Path>");
    }
    s.push_str(" <Conclusion> </Conclusion> </Parallel>");
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub degree: f64,
    /// Batch wall units per token of one request.
    pub latency_per_token: f64,
    pub batch: usize,
    pub speedup: f64,
}

pub const SWEEP_CSV_HEADER: &str = "degree,latency_per_token,batch,speedup";

/// Replays every trajectory at every batch size (`batch` identical copies
/// decoded together) and records the cost per token.
pub fn sweep(
    trajectories: &[Trajectory],
    batches: &[usize],
    cfg: &EngineConfig,
    tok: &Tokenizer,
) -> Result<Vec<SweepRow>, GrammarError> {
    let mut rows = Vec::new();
    for t in trajectories {
        let script = ScriptedModel::new(t, tok)?;
        for &batch in batches {
            let backends: Vec<Box<dyn Backend>> = (0..batch)
                .map(|_| Box::new(script.clone()) as Box<dyn Backend>)
                .collect();
            let report = run_batch(backends, cfg);
            let first = &report.requests[0];
            let total = first.total_tokens.max(1);
            rows.push(SweepRow {
                degree: first.parallel_degree,
                latency_per_token: report.wall_units / total as f64,
                batch,
                speedup: report.speedup,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{:.4},{:.6},{},{:.6}", r.degree, r.latency_per_token, r.batch, r.speedup);
    }
    out
}
