use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{Backend, DecodeContext, SeqAddr};
use super::cost::CostModel;
use super::metrics::emission_layout;
use crate::attention::REDUCE_OFFSET;
use crate::grammar::TagKind;
use crate::kvcache::{CacheError, KvStore, SequenceHandle};
use crate::tokenizer::{Token, TokenId};

pub const DEFAULT_MAX_LEN: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineLimits {
    /// Tokens a single path worker may emit before it is cut off.
    pub max_worker_len: usize,
    /// Tokens a whole request may emit.
    pub max_request_len: usize,
    /// Deepest block nesting a request may open.
    pub max_depth: Option<usize>,
    pub max_steps: usize,
}

impl Default for EngineLimits {
    fn default() -> Self {
        EngineLimits {
            max_worker_len: DEFAULT_MAX_LEN,
            max_request_len: DEFAULT_MAX_LEN,
            max_depth: None,
            max_steps: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub cost: CostModel,
    pub limits: EngineLimits,
    pub reduce_offset: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig::new(CostModel::default(), EngineLimits::default())
    }
}

impl EngineConfig {
    pub fn new(cost: CostModel, limits: EngineLimits) -> Self {
        EngineConfig {
            cost,
            limits,
            reduce_offset: REDUCE_OFFSET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngineError {
    #[error("request {request}, sequence {seq}, step {step}: grammar violation at {found:?} (expected {expected})")]
    GrammarViolationDuringDecode {
        request: usize,
        seq: usize,
        step: usize,
        found: String,
        expected: &'static str,
    },
    #[error("request {request}: {limit} limit of {max} exceeded")]
    LimitExceeded {
        request: usize,
        limit: &'static str,
        max: usize,
    },
    #[error("request {request}: cache error: {message}")]
    Cache { request: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    SequentialDecode,
    CollectingGoal,
    ParallelDecode,
    Reducing,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkerState {
    Decoding,
    Zombie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    PathClose,
    MaxLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Token produced by the backend.
    Decode,
    /// Token inserted by the engine (`<Path> i` headers, `<Conclusion>`).
    Prefill,
    Spawn,
    Zombie,
    Merge,
    Phase,
    Done,
    Failed,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub request: usize,
    /// Sequence within the request; 0 is the request's main sequence.
    pub worker: usize,
    pub kind: EventKind,
    /// Exact token surface, including leading whitespace.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub token: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub token_id: Option<TokenId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub position: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub children: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ordinal: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub phase: Option<Phase>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub terminated_by: Option<Termination>,
}

impl Event {
    fn new(step: usize, request: usize, worker: usize, kind: EventKind) -> Self {
        Event {
            step,
            request,
            worker,
            kind,
            token: None,
            token_id: None,
            position: None,
            children: None,
            ordinal: None,
            phase: None,
            terminated_by: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WorkerStats {
    pub seq: usize,
    pub ordinal: usize,
    pub tokens_emitted: usize,
    pub terminated_by: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockStats {
    /// Sequence that opened the block.
    pub owner: usize,
    pub depth: usize,
    pub outlines: usize,
    pub spawn_step: usize,
    pub merge_step: Option<usize>,
    pub workers: Vec<WorkerStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RequestStatus {
    Done,
    Failed { error: EngineError },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub request: usize,
    pub status: RequestStatus,
    pub total_tokens: usize,
    /// Tokens on the longest chain of sequentially dependent steps.
    pub sequential_length: usize,
    pub parallel_degree: f64,
    /// Units elapsed when the request finished.
    pub wall_units: f64,
    /// Units a plain autoregressive decoder would need for the same tokens
    /// at the same batch size.
    pub ar_baseline_units: f64,
    pub speedup_vs_sequential: f64,
    pub steps: usize,
    pub max_concurrent_workers: usize,
    /// Concatenated surfaces of the final main sequence.
    pub text: String,
    pub blocks: Vec<BlockStats>,
    #[serde(skip)]
    pub events: Vec<Event>,
}

impl SimulationReport {
    pub fn is_done(&self) -> bool {
        self.status == RequestStatus::Done
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchReport {
    pub cost: CostModel,
    pub wall_units: f64,
    pub ar_baseline_units: f64,
    pub speedup: f64,
    pub requests: Vec<SimulationReport>,
}

/// Position inside the tag grammar of one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Gs {
    /// Fresh worker, before its `<Path>`.
    PathHeader,
    Body,
    AfterParallel,
    GoalPreamble,
    InOutline,
    AfterOutline,
    Waiting,
    /// Merged, before its `<Conclusion>`.
    ReduceHeader,
    InConclusion,
    AfterConclusion,
    Closed,
}

impl Gs {
    fn phase(self) -> Phase {
        match self {
            Gs::PathHeader | Gs::Body | Gs::Closed => Phase::SequentialDecode,
            Gs::AfterParallel | Gs::GoalPreamble | Gs::InOutline | Gs::AfterOutline => Phase::CollectingGoal,
            Gs::Waiting => Phase::ParallelDecode,
            Gs::ReduceHeader | Gs::InConclusion | Gs::AfterConclusion => Phase::Reducing,
        }
    }
}

struct Seq {
    id: usize,
    ordinal: Option<usize>,
    addr: SeqAddr,
    depth: usize,
    handle: SequenceHandle,
    gs: Gs,
    outlines: usize,
    blocks_opened: usize,
    pending: VecDeque<Token>,
    emitted: usize,
    chain: usize,
    next_pos: usize,
    children: Vec<usize>,
    block: Option<usize>,
    worker: Option<WorkerState>,
    terminated_by: Option<Termination>,
    phase: Phase,
}

impl Seq {
    fn runnable(&self) -> bool {
        self.gs != Gs::Waiting && self.gs != Gs::Closed && self.worker != Some(WorkerState::Zombie)
    }
}

struct Request<'b> {
    index: usize,
    reduce_offset: usize,
    backend: Box<dyn Backend + 'b>,
    store: KvStore,
    seqs: Vec<Seq>,
    blocks: Vec<BlockStats>,
    events: Vec<Event>,
    total_tokens: usize,
    active_workers: usize,
    max_concurrent: usize,
    status: Option<RequestStatus>,
    finish_units: f64,
    steps: usize,
}

enum Outcome {
    Continue,
    Finished,
}

impl<'b> Request<'b> {
    fn new(index: usize, backend: Box<dyn Backend + 'b>, reduce_offset: usize) -> Self {
        let mut store = KvStore::new(backend.record_len());
        let handle = store.empty();
        Request {
            index,
            reduce_offset,
            backend,
            store,
            seqs: vec![Seq {
                id: 0,
                ordinal: None,
                addr: SeqAddr::new(),
                depth: 0,
                handle,
                gs: Gs::Body,
                outlines: 0,
                blocks_opened: 0,
                pending: VecDeque::new(),
                emitted: 0,
                chain: 0,
                next_pos: 0,
                children: Vec::new(),
                block: None,
                worker: None,
                terminated_by: None,
                phase: Phase::SequentialDecode,
            }],
            blocks: Vec::new(),
            events: Vec::new(),
            total_tokens: 0,
            active_workers: 0,
            max_concurrent: 0,
            status: None,
            finish_units: 0.0,
            steps: 0,
        }
    }

    fn cache_err(&self, e: CacheError) -> EngineError {
        EngineError::Cache {
            request: self.index,
            message: e.to_string(),
        }
    }

    fn violation(&self, seq: usize, step: usize, token: &Token, expected: &'static str) -> EngineError {
        EngineError::GrammarViolationDuringDecode {
            request: self.index,
            seq,
            step,
            found: token.word().to_string(),
            expected,
        }
    }

    fn event(&mut self, step: usize, seq: usize, kind: EventKind) -> &mut Event {
        self.events.push(Event::new(step, self.index, seq, kind));
        self.events.last_mut().expect("just pushed")
    }

    fn sync_phase(&mut self, step: usize, id: usize) {
        let s = &self.seqs[id];
        let phase = s.gs.phase();
        if phase != s.phase {
            self.seqs[id].phase = phase;
            self.event(step, id, EventKind::Phase).phase = Some(phase);
        }
    }

    /// Merges finished workers back into their owner and queues the
    /// `<Conclusion>` prefill.
    fn reduce_ready(&mut self, step: usize) -> Result<(), EngineError> {
        for id in 0..self.seqs.len() {
            let s = &self.seqs[id];
            if s.gs != Gs::Waiting || !s.children.iter().all(|&c| self.seqs[c].worker == Some(WorkerState::Zombie)) {
                continue;
            }
            let children = std::mem::take(&mut self.seqs[id].children);
            let handles: Vec<_> = children.iter().map(|&c| self.seqs[c].handle).collect();
            let prefix = self.seqs[id].handle;
            let merged = self.store.merge(prefix, &handles).map_err(|e| self.cache_err(e))?;
            for h in handles.into_iter().chain([prefix]) {
                self.store.release(h).map_err(|e| self.cache_err(e))?;
            }
            let chain = children.iter().map(|&c| self.seqs[c].chain).max().unwrap_or(0);
            let furthest = children.iter().map(|&c| self.seqs[c].next_pos).max().unwrap_or(1);
            let s = &mut self.seqs[id];
            s.handle = merged;
            s.chain = s.chain.max(chain);
            s.next_pos = furthest - 1 + self.reduce_offset;
            s.gs = Gs::ReduceHeader;
            let block = s.block.expect("waiting sequence owns a block");
            let ctx_addr = s.addr.clone();
            let ctx = DecodeContext {
                request: self.index,
                seq: id,
                addr: &ctx_addr,
                position: s.next_pos,
                emitted: s.emitted,
            };
            let header = self.backend.reduce_header(&ctx);
            self.seqs[id].pending.push_back(header);
            self.blocks[block].merge_step = Some(step);
            for (w, &c) in self.blocks[block].workers.iter_mut().zip(&children) {
                w.tokens_emitted = self.seqs[c].emitted;
                w.terminated_by = self.seqs[c].terminated_by;
            }
            self.event(step, id, EventKind::Merge).children = Some(children);
            self.sync_phase(step, id);
        }
        Ok(())
    }

    fn spawn(&mut self, step: usize, id: usize) {
        let n = self.seqs[id].outlines;
        let parent_handle = self.seqs[id].handle;
        let handles = self.store.fork(parent_handle, n).expect("outline count checked before spawn");
        let (depth, chain, next_pos) = {
            let p = &self.seqs[id];
            (p.depth + 1, p.chain, p.next_pos)
        };
        let local = self.seqs[id].blocks_opened - 1;
        let mut children = Vec::with_capacity(n);
        for (k, handle) in handles.into_iter().enumerate() {
            let cid = self.seqs.len();
            let mut addr = self.seqs[id].addr.clone();
            addr.push((local, k + 1));
            let ctx = DecodeContext {
                request: self.index,
                seq: cid,
                addr: &addr,
                position: next_pos,
                emitted: 0,
            };
            let header = self.backend.path_header(&ctx, k + 1);
            self.seqs.push(Seq {
                id: cid,
                ordinal: Some(k + 1),
                addr,
                depth,
                handle,
                gs: Gs::PathHeader,
                outlines: 0,
                blocks_opened: 0,
                pending: header.into(),
                emitted: 0,
                chain,
                next_pos,
                children: Vec::new(),
                block: None,
                worker: Some(WorkerState::Decoding),
                terminated_by: None,
                phase: Phase::SequentialDecode,
            });
            children.push(cid);
        }
        let block = self.blocks.len();
        self.blocks.push(BlockStats {
            owner: id,
            depth,
            outlines: n,
            spawn_step: step,
            merge_step: None,
            workers: children
                .iter()
                .enumerate()
                .map(|(k, &c)| WorkerStats {
                    seq: c,
                    ordinal: k + 1,
                    tokens_emitted: 0,
                    terminated_by: None,
                })
                .collect(),
        });
        let s = &mut self.seqs[id];
        s.block = Some(block);
        s.children = children.clone();
        s.gs = Gs::Waiting;
        self.active_workers += n;
        self.max_concurrent = self.max_concurrent.max(self.active_workers);
        let e = self.event(step, id, EventKind::Spawn);
        e.children = Some(children);
        self.sync_phase(step, id);
    }

    fn zombie(&mut self, step: usize, id: usize, why: Termination) {
        let s = &mut self.seqs[id];
        s.worker = Some(WorkerState::Zombie);
        s.terminated_by = Some(why);
        s.gs = Gs::Closed;
        self.active_workers -= 1;
        let ordinal = s.ordinal;
        let e = self.event(step, id, EventKind::Zombie);
        e.terminated_by = Some(why);
        e.ordinal = ordinal;
    }

    /// Grammar transition for `token` emitted by sequence `id`. Returns the
    /// follow-up action to take once the token is stored.
    fn transition(&mut self, step: usize, id: usize, token: &Token, limits: &EngineLimits) -> Result<After, EngineError> {
        let s = &self.seqs[id];
        let is_worker = s.worker.is_some();
        let tag = token.tag;
        let (next, after) = match (s.gs, tag) {
            (Gs::PathHeader, Some(TagKind::PathOpen)) => (Gs::Body, After::Nothing),
            (Gs::PathHeader, _) => return Err(self.violation(id, step, token, "<Path>")),
            (Gs::Body, None) => (Gs::Body, After::Nothing),
            (Gs::Body, Some(TagKind::ParallelOpen)) => {
                let depth = s.depth + 1;
                if let Some(max) = limits.max_depth {
                    if depth > max {
                        return Err(EngineError::LimitExceeded {
                            request: self.index,
                            limit: "max_depth",
                            max,
                        });
                    }
                }
                (Gs::AfterParallel, After::Nothing)
            }
            (Gs::Body, Some(TagKind::PathClose)) if is_worker => (Gs::Closed, After::Zombie),
            (Gs::Body, _) if is_worker => return Err(self.violation(id, step, token, "text, <Parallel> or </Path>")),
            (Gs::Body, _) => return Err(self.violation(id, step, token, "text or <Parallel>")),
            (Gs::AfterParallel, Some(TagKind::GoalOpen)) => (Gs::GoalPreamble, After::Nothing),
            (Gs::AfterParallel, _) => return Err(self.violation(id, step, token, "<Goal>")),
            (Gs::GoalPreamble, None) => (Gs::GoalPreamble, After::Nothing),
            (Gs::GoalPreamble | Gs::AfterOutline, Some(TagKind::OutlineOpen)) => (Gs::InOutline, After::Nothing),
            (Gs::GoalPreamble | Gs::AfterOutline, Some(TagKind::GoalClose)) => {
                if s.outlines == 0 {
                    return Err(self.violation(id, step, token, "at least one <Outline> before </Goal>"));
                }
                (Gs::Waiting, After::Spawn)
            }
            (Gs::GoalPreamble | Gs::AfterOutline, _) => {
                return Err(self.violation(id, step, token, "<Outline> or </Goal>"))
            }
            (Gs::InOutline, None) => (Gs::InOutline, After::Nothing),
            (Gs::InOutline, Some(TagKind::OutlineClose)) => (Gs::AfterOutline, After::Nothing),
            (Gs::InOutline, _) => return Err(self.violation(id, step, token, "</Outline>")),
            (Gs::ReduceHeader, Some(TagKind::ConclusionOpen)) => (Gs::InConclusion, After::Nothing),
            (Gs::ReduceHeader, _) => return Err(self.violation(id, step, token, "<Conclusion>")),
            (Gs::InConclusion, None) => (Gs::InConclusion, After::Nothing),
            (Gs::InConclusion, Some(TagKind::ConclusionClose)) => (Gs::AfterConclusion, After::Nothing),
            (Gs::InConclusion, _) => return Err(self.violation(id, step, token, "</Conclusion>")),
            (Gs::AfterConclusion, Some(TagKind::ParallelClose)) => (Gs::Body, After::Nothing),
            (Gs::AfterConclusion, _) => return Err(self.violation(id, step, token, "</Parallel>")),
            (Gs::Waiting | Gs::Closed, _) => unreachable!("sequence {id} is not decoding"),
        };
        let s = &mut self.seqs[id];
        match (s.gs, next) {
            (Gs::Body, Gs::AfterParallel) => {
                s.outlines = 0;
                s.blocks_opened += 1;
            }
            (Gs::GoalPreamble | Gs::AfterOutline, Gs::InOutline) => s.outlines += 1,
            _ => {}
        }
        // Waiting and Closed take effect after the token is stored.
        if !matches!(next, Gs::Waiting | Gs::Closed) {
            s.gs = next;
        }
        Ok(after)
    }

    /// One scheduler step for this request. Returns the number of tokens
    /// processed.
    fn step(&mut self, step: usize, limits: &EngineLimits) -> Result<(usize, Outcome), EngineError> {
        self.reduce_ready(step)?;
        let runnable: Vec<usize> = self.seqs.iter().filter(|s| s.runnable()).map(|s| s.id).collect();
        let mut active = 0;
        for id in runnable {
            let (token, kind) = match self.seqs[id].pending.pop_front() {
                Some(t) => (t, EventKind::Prefill),
                None => {
                    let s = &self.seqs[id];
                    let ctx = DecodeContext {
                        request: self.index,
                        seq: id,
                        addr: &s.addr,
                        position: s.next_pos,
                        emitted: s.emitted,
                    };
                    match self.backend.next_token(&ctx) {
                        Some(t) => (t, EventKind::Decode),
                        None if id == 0 && s.gs == Gs::Body => return Ok((active, Outcome::Finished)),
                        None => {
                            let end = Token {
                                id: 0,
                                surface: "end of stream".into(),
                                tag: None,
                            };
                            let expected = if s.worker.is_some() { "</Path>" } else { "block to close" };
                            return Err(self.violation(id, step, &end, expected));
                        }
                    }
                }
            };
            let after = self.transition(step, id, &token, limits)?;

            let s = &self.seqs[id];
            let position = s.next_pos;
            let ctx = DecodeContext {
                request: self.index,
                seq: id,
                addr: &s.addr,
                position,
                emitted: s.emitted,
            };
            let context = self.store.payloads(s.handle).map_err(|e| self.cache_err(e))?;
            let payload = self.backend.encode(&ctx, &token, &context);
            drop(context);
            let handle = s.handle;
            self.store.extend(handle, &[token.id], &payload).map_err(|e| self.cache_err(e))?;

            let s = &mut self.seqs[id];
            s.emitted += 1;
            s.chain += 1;
            s.next_pos += 1;
            let (emitted, is_worker) = (s.emitted, s.worker.is_some());
            self.total_tokens += 1;
            active += 1;
            let e = self.event(step, id, kind);
            e.token = Some(token.surface.clone());
            e.token_id = Some(token.id);
            e.position = Some(position);

            if self.total_tokens > limits.max_request_len {
                return Err(EngineError::LimitExceeded {
                    request: self.index,
                    limit: "max_request_len",
                    max: limits.max_request_len,
                });
            }
            match after {
                After::Spawn => self.spawn(step, id),
                After::Zombie => self.zombie(step, id, Termination::PathClose),
                After::Nothing if is_worker && emitted >= limits.max_worker_len => {
                    self.zombie(step, id, Termination::MaxLength)
                }
                After::Nothing => {}
            }
            self.sync_phase(step, id);
        }
        Ok((active, Outcome::Continue))
    }

    fn text(&self) -> String {
        let surfaces: Vec<&str> = self
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Decode | EventKind::Prefill))
            .map(|e| e.token.as_deref().unwrap_or(""))
            .collect();
        emission_layout(&self.events, self.index)
            .into_iter()
            .map(|i| surfaces[i])
            .collect()
    }

    fn report(&self, ar_step_units: f64) -> SimulationReport {
        let sequential_length = self.seqs[0].chain;
        let total = self.total_tokens;
        let degree = if sequential_length == 0 { 1.0 } else { total as f64 / sequential_length as f64 };
        let ar = total as f64 * ar_step_units;
        SimulationReport {
            request: self.index,
            status: self.status.clone().unwrap_or(RequestStatus::Done),
            total_tokens: total,
            sequential_length,
            parallel_degree: degree,
            wall_units: self.finish_units,
            ar_baseline_units: ar,
            speedup_vs_sequential: if self.finish_units > 0.0 { ar / self.finish_units } else { 1.0 },
            steps: self.steps,
            max_concurrent_workers: self.max_concurrent,
            text: self.text(),
            blocks: self.blocks.clone(),
            events: self.events.clone(),
        }
    }
}

#[derive(Clone, Copy)]
enum After {
    Nothing,
    Spawn,
    Zombie,
}

/// Runs several requests side by side; every step's cost is charged once
/// for all tokens processed in it.
pub fn run_batch<'b>(backends: Vec<Box<dyn Backend + 'b>>, cfg: &EngineConfig) -> BatchReport {
    let mut requests: Vec<Request<'b>> = backends
        .into_iter()
        .enumerate()
        .map(|(i, b)| Request::new(i, b, cfg.reduce_offset))
        .collect();
    let batch = requests.len();
    let mut wall = 0.0;
    let mut step = 0;
    while requests.iter().any(|r| r.status.is_none()) {
        step += 1;
        let mut active = 0;
        for r in requests.iter_mut().filter(|r| r.status.is_none()) {
            let result = if step > cfg.limits.max_steps {
                Err(EngineError::LimitExceeded {
                    request: r.index,
                    limit: "max_steps",
                    max: cfg.limits.max_steps,
                })
            } else {
                r.step(step, &cfg.limits)
            };
            match result {
                Ok((n, outcome)) => {
                    active += n;
                    if n > 0 {
                        r.steps = step;
                    }
                    if let Outcome::Finished = outcome {
                        r.status = Some(RequestStatus::Done);
                        r.event(step, 0, EventKind::Done);
                        r.sync_phase_done(step, Phase::Done);
                    }
                }
                Err(error) => {
                    r.event(step, 0, EventKind::Failed);
                    r.sync_phase_done(step, Phase::Failed);
                    r.status = Some(RequestStatus::Failed { error });
                }
            }
        }
        wall += cfg.cost.charge(active);
        for r in requests.iter_mut().filter(|r| r.status.is_some() && r.finish_units == 0.0) {
            r.finish_units = wall;
        }
    }
    // A plain decoder emits one token per request per step.
    let ar_step = cfg.cost.charge(batch.max(1));
    let reports: Vec<SimulationReport> = requests.iter().map(|r| r.report(ar_step)).collect();
    let longest = reports.iter().map(|r| r.total_tokens).max().unwrap_or(0);
    let ar_total = longest as f64 * ar_step;
    BatchReport {
        cost: cfg.cost,
        wall_units: wall,
        ar_baseline_units: ar_total,
        speedup: if wall > 0.0 { ar_total / wall } else { 1.0 },
        requests: reports,
    }
}

impl Request<'_> {
    fn sync_phase_done(&mut self, step: usize, phase: Phase) {
        if self.seqs[0].phase != phase {
            self.seqs[0].phase = phase;
            self.event(step, 0, EventKind::Phase).phase = Some(phase);
        }
    }
}

/// Runs a single request to completion.
pub fn run(backend: &mut dyn Backend, cfg: &EngineConfig) -> Result<SimulationReport, EngineError> {
    let mut report = run_batch(vec![Box::new(Forward(backend))], cfg);
    let r = report.requests.pop().expect("one request");
    match &r.status {
        RequestStatus::Done => Ok(r),
        RequestStatus::Failed { error } => Err(error.clone()),
    }
}

/// Like [`run`] but keeps the report of a failed request.
pub fn run_report(backend: &mut dyn Backend, cfg: &EngineConfig) -> SimulationReport {
    let mut report = run_batch(vec![Box::new(Forward(backend))], cfg);
    report.requests.pop().expect("one request")
}

struct Forward<'a>(&'a mut dyn Backend);

impl Backend for Forward<'_> {
    fn record_len(&self) -> usize {
        self.0.record_len()
    }
    fn next_token(&mut self, ctx: &DecodeContext<'_>) -> Option<Token> {
        self.0.next_token(ctx)
    }
    fn path_header(&mut self, ctx: &DecodeContext<'_>, ordinal: usize) -> Vec<Token> {
        self.0.path_header(ctx, ordinal)
    }
    fn reduce_header(&mut self, ctx: &DecodeContext<'_>) -> Token {
        self.0.reduce_header(ctx)
    }
    fn encode(&mut self, ctx: &DecodeContext<'_>, token: &Token, context: &[&[f32]]) -> Vec<f32> {
        self.0.encode(ctx, token, context)
    }
}
