use std::collections::HashMap;

use serde::Serialize;

use super::dag::{GenerationDag, SegmentId, SegmentKind};
use super::toy::{max_abs_diff, ToyError, ToyModel};
use super::visibility::{batch_from_dag, BatchOptions};

/// Sibling orders tried per block: all of them up to this many paths, and a
/// rotation/reversal sample beyond it.
const EXHAUSTIVE_PATHS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationCheck {
    pub block: usize,
    /// Path indices (0-based) in the order they were laid out.
    pub order: Vec<usize>,
    /// Max abs logit delta over the block's Reduce tokens.
    pub reduce_delta: f32,
    /// Max abs logit delta over every token.
    pub max_delta: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationReport {
    pub tolerance: f32,
    pub checks: Vec<PermutationCheck>,
    pub max_reduce_delta: f32,
    pub pass: bool,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n > EXHAUSTIVE_PATHS {
        let mut out: Vec<Vec<usize>> = (0..n).map(|r| (0..n).map(|i| (i + r) % n).collect()).collect();
        out.push((0..n).rev().collect());
        return out;
    }
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    heap(n, &mut cur, &mut out);
    out.sort();
    out
}

fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(a.clone());
        return;
    }
    for i in 0..k - 1 {
        heap(k - 1, a, out);
        if k.is_multiple_of(2) {
            a.swap(i, k - 1);
        } else {
            a.swap(0, k - 1);
        }
    }
    heap(k - 1, a, out);
}

/// Re-lays out the sibling paths of every block in every order and compares
/// logits with the canonical layout, token by token.
pub fn permutation_equivalence_check(
    dag: &GenerationDag,
    model: &ToyModel,
    tolerance: f32,
) -> Result<PermutationReport, ToyError> {
    let base_batch = batch_from_dag(dag, BatchOptions::default());
    let base = model.forward(&base_batch)?;
    let base_index: HashMap<(SegmentId, usize), usize> =
        base_batch.keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();

    let mut checks = Vec::new();
    for (b, info) in dag.blocks.iter().enumerate() {
        for order in permutations(info.paths.len()) {
            let permuted = dag.permute_paths(b, &order);
            let batch = batch_from_dag(&permuted, BatchOptions::default());
            let out = model.forward(&batch)?;
            let mut reduce_delta = 0.0f32;
            let mut max_delta = 0.0f32;
            for (i, key) in batch.keys.iter().enumerate() {
                let d = max_abs_diff(&out.logits[i], &base.logits[base_index[key]]);
                max_delta = max_delta.max(d);
                let seg = &dag.segments[key.0];
                if seg.kind == SegmentKind::Reduce && seg.block == Some(b) {
                    reduce_delta = reduce_delta.max(d);
                }
            }
            checks.push(PermutationCheck {
                block: b,
                order,
                reduce_delta,
                max_delta,
            });
        }
    }
    let max_reduce_delta = checks.iter().map(|c| c.reduce_delta).fold(0.0, f32::max);
    Ok(PermutationReport {
        tolerance,
        pass: max_reduce_delta <= tolerance,
        checks,
        max_reduce_delta,
    })
}
