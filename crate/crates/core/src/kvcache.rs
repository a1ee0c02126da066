//! Prefix-sharing radix store of per-token KV records.
//!
//! Every handle resolves to an ordered list of whole nodes; a node is split
//! as soon as a handle would end or diverge inside it. Forking copies a node
//! list, merging concatenates node lists, and neither touches payload data.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::tokenizer::TokenId;

pub type NodeId = usize;

const ROOT: NodeId = 0;

/// Opaque reference to a logical token sequence held by a [`KvStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SequenceHandle(u64);

impl fmt::Display for SequenceHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("capacity exceeded: need {needed} slots, {available} free")]
    CapacityExceeded { needed: usize, available: usize },
    #[error("branch {index} does not extend the merge prefix")]
    BranchNotDescendant { index: usize },
    #[error("unknown handle {0}")]
    UnknownHandle(SequenceHandle),
    #[error("handle {0} was already released")]
    DoubleRelease(SequenceHandle),
    #[error("payload length {found}, expected {expected}")]
    PayloadSize { expected: usize, found: usize },
    #[error("fork into zero handles")]
    EmptyFork,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StorageStats {
    pub physical_tokens_stored: usize,
    pub logical_tokens_reachable: usize,
    pub bytes_copied_on_last_op: usize,
    pub bytes_written_total: usize,
    pub live_handles: usize,
    pub live_nodes: usize,
}

/// Fixed-size f32 records addressed by slot index, with a free list.
#[derive(Debug, Clone)]
struct SlabPool {
    record_len: usize,
    data: Vec<f32>,
    free: Vec<usize>,
    slots: usize,
    capacity: Option<usize>,
}

impl SlabPool {
    fn live(&self) -> usize {
        self.slots - self.free.len()
    }

    fn available(&self) -> usize {
        self.capacity.map_or(usize::MAX, |c| c - self.live())
    }

    fn alloc(&mut self, record: &[f32]) -> usize {
        let slot = self.free.pop().unwrap_or_else(|| {
            self.slots += 1;
            self.data.resize(self.slots * self.record_len, 0.0);
            self.slots - 1
        });
        let r = slot * self.record_len;
        self.data[r..r + self.record_len].copy_from_slice(record);
        slot
    }

    fn get(&self, slot: usize) -> &[f32] {
        &self.data[slot * self.record_len..(slot + 1) * self.record_len]
    }
}

#[derive(Debug, Clone)]
struct Node {
    parent: Option<NodeId>,
    tokens: Vec<TokenId>,
    slots: Vec<usize>,
    children: BTreeMap<TokenId, NodeId>,
    refcount: usize,
    /// Zero-length join point created by a merge.
    join: bool,
}

impl Node {
    fn new(parent: Option<NodeId>, join: bool) -> Self {
        Node {
            parent,
            tokens: Vec::new(),
            slots: Vec::new(),
            children: BTreeMap::new(),
            refcount: 0,
            join,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeDump {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub edge_tokens: usize,
    pub refcount: usize,
    pub join: bool,
    pub children: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct KvStore {
    pool: SlabPool,
    nodes: Vec<Option<Node>>,
    handles: HashMap<SequenceHandle, Vec<NodeId>>,
    next_handle: u64,
    bytes_copied_last: usize,
    bytes_written: usize,
}

impl KvStore {
    pub fn new(record_len: usize) -> Self {
        Self::build(record_len, None)
    }

    /// Store holding at most `max_tokens` physical records.
    pub fn with_capacity(record_len: usize, max_tokens: usize) -> Self {
        Self::build(record_len, Some(max_tokens))
    }

    fn build(record_len: usize, capacity: Option<usize>) -> Self {
        KvStore {
            pool: SlabPool {
                record_len,
                data: Vec::new(),
                free: Vec::new(),
                slots: 0,
                capacity,
            },
            nodes: vec![Some(Node::new(None, false))],
            handles: HashMap::new(),
            next_handle: 0,
            bytes_copied_last: 0,
            bytes_written: 0,
        }
    }

    pub fn record_len(&self) -> usize {
        self.pool.record_len
    }

    fn node(&self, id: NodeId) -> &Node {
        self.nodes[id].as_ref().expect("live node")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes[id].as_mut().expect("live node")
    }

    fn list(&self, h: SequenceHandle) -> Result<&Vec<NodeId>, CacheError> {
        self.handles.get(&h).ok_or_else(|| self.missing(h))
    }

    fn missing(&self, h: SequenceHandle) -> CacheError {
        if h.0 < self.next_handle {
            CacheError::DoubleRelease(h)
        } else {
            CacheError::UnknownHandle(h)
        }
    }

    fn register(&mut self, list: Vec<NodeId>) -> SequenceHandle {
        for &n in &list {
            self.node_mut(n).refcount += 1;
        }
        let h = SequenceHandle(self.next_handle);
        self.next_handle += 1;
        self.handles.insert(h, list);
        h
    }

    /// A fresh empty sequence.
    pub fn empty(&mut self) -> SequenceHandle {
        self.bytes_copied_last = 0;
        self.register(vec![ROOT])
    }

    pub fn is_live(&self, h: SequenceHandle) -> bool {
        self.handles.contains_key(&h)
    }

    pub fn len(&self, h: SequenceHandle) -> Result<usize, CacheError> {
        Ok(self.list(h)?.iter().map(|&n| self.node(n).tokens.len()).sum())
    }

    /// Splits `n` after `k` tokens. Every handle holding `n` now holds both
    /// halves; the caller decides whether a handle in progress takes the tail.
    fn split(&mut self, n: NodeId, k: usize) -> NodeId {
        let tail_id = self.nodes.len();
        let node = self.node_mut(n);
        debug_assert!(k > 0 && k < node.tokens.len());
        let mut tail = Node::new(Some(n), false);
        tail.tokens = node.tokens.split_off(k);
        tail.slots = node.slots.split_off(k);
        tail.children = std::mem::take(&mut node.children);
        tail.refcount = node.refcount;
        node.children.insert(tail.tokens[0], tail_id);
        let grandchildren: Vec<NodeId> = tail.children.values().copied().collect();
        self.nodes.push(Some(tail));
        for c in grandchildren {
            self.node_mut(c).parent = Some(tail_id);
        }
        for list in self.handles.values_mut() {
            // A merged list can hold the same node more than once.
            if list.contains(&n) {
                *list = list
                    .iter()
                    .flat_map(|&x| if x == n { vec![n, tail_id] } else { vec![x] })
                    .collect();
            }
        }
        tail_id
    }

    /// Number of leading `tokens` already stored below `tail`.
    fn shared_prefix(&self, tail: NodeId, tokens: &[TokenId]) -> usize {
        let mut at = tail;
        let mut matched = 0;
        while matched < tokens.len() {
            let Some(&child) = self.node(at).children.get(&tokens[matched]) else { break };
            let edge = &self.node(child).tokens;
            let m = edge.iter().zip(&tokens[matched..]).take_while(|(a, b)| a == b).count();
            matched += m;
            if m < edge.len() {
                break;
            }
            at = child;
        }
        matched
    }

    /// Appends tokens (with one payload record each, concatenated) to `h`.
    /// Tokens already stored under the same prefix are shared, not
    /// rewritten; only the part after the divergence point allocates slots.
    pub fn extend(&mut self, h: SequenceHandle, tokens: &[TokenId], payloads: &[f32]) -> Result<(), CacheError> {
        let rl = self.pool.record_len;
        if payloads.len() != tokens.len() * rl {
            return Err(CacheError::PayloadSize {
                expected: tokens.len() * rl,
                found: payloads.len(),
            });
        }
        let tail = *self.list(h)?.last().expect("handles are never empty");
        let needed = tokens.len() - self.shared_prefix(tail, tokens);
        if needed > self.pool.available() {
            return Err(CacheError::CapacityExceeded {
                needed,
                available: self.pool.available(),
            });
        }
        self.bytes_copied_last = 0;

        let mut added = Vec::new();
        let mut at = tail;
        let mut i = 0;
        while i < tokens.len() {
            if let Some(&child) = self.node(at).children.get(&tokens[i]) {
                let edge = &self.node(child).tokens;
                let m = edge.iter().zip(&tokens[i..]).take_while(|(a, b)| a == b).count();
                if m < edge.len() {
                    self.split(child, m);
                }
                added.push(child);
                at = child;
                i += m;
                continue;
            }
            let id = self.nodes.len();
            let mut node = Node::new(Some(at), false);
            for (j, &t) in tokens.iter().enumerate().skip(i) {
                node.tokens.push(t);
                node.slots.push(self.pool.alloc(&payloads[j * rl..(j + 1) * rl]));
            }
            self.bytes_written += (tokens.len() - i) * rl * std::mem::size_of::<f32>();
            self.nodes.push(Some(node));
            self.node_mut(at).children.insert(tokens[i], id);
            added.push(id);
            break;
        }
        for &n in &added {
            self.node_mut(n).refcount += 1;
        }
        self.handles.get_mut(&h).expect("checked above").extend(added);
        Ok(())
    }

    /// `n` new handles resolving to the same sequence as `h`.
    pub fn fork(&mut self, h: SequenceHandle, n: usize) -> Result<Vec<SequenceHandle>, CacheError> {
        if n == 0 {
            return Err(CacheError::EmptyFork);
        }
        let list = self.list(h)?.clone();
        self.bytes_copied_last = 0;
        Ok((0..n).map(|_| self.register(list.clone())).collect())
    }

    /// New handle for `prefix ++ suffix(branch 1) ++ … ++ suffix(branch n)`,
    /// built by concatenating node lists. Further extension goes below a
    /// fresh zero-length join node.
    pub fn merge(&mut self, prefix: SequenceHandle, branches: &[SequenceHandle]) -> Result<SequenceHandle, CacheError> {
        let base = self.list(prefix)?;
        let mut list = base.clone();
        for (index, &b) in branches.iter().enumerate() {
            let bl = self.list(b)?;
            if !bl.starts_with(base) {
                return Err(CacheError::BranchNotDescendant { index });
            }
            list.extend_from_slice(&bl[base.len()..]);
        }
        let join = self.nodes.len();
        self.nodes.push(Some(Node::new(None, true)));
        list.push(join);
        self.bytes_copied_last = 0;
        Ok(self.register(list))
    }

    /// Drops `h`, reclaiming nodes no handle references any more.
    pub fn release(&mut self, h: SequenceHandle) -> Result<(), CacheError> {
        let list = self.handles.remove(&h).ok_or_else(|| self.missing(h))?;
        self.bytes_copied_last = 0;
        // Children come after their parents in every list, so walking in
        // reverse frees leaves first.
        for &n in list.iter().rev() {
            let node = self.node_mut(n);
            node.refcount -= 1;
            if node.refcount > 0 || n == ROOT {
                continue;
            }
            let node = self.nodes[n].take().expect("live node");
            debug_assert!(node.children.is_empty(), "zero-ref node {n} has children");
            self.pool.free.extend(node.slots);
            if let (Some(p), Some(&first)) = (node.parent, node.tokens.first()) {
                self.node_mut(p).children.remove(&first);
            }
        }
        Ok(())
    }

    pub fn resolve(&self, h: SequenceHandle) -> Result<Vec<TokenId>, CacheError> {
        Ok(self.list(h)?.iter().flat_map(|&n| self.node(n).tokens.iter().copied()).collect())
    }

    /// Payload records of every token of `h`, in sequence order.
    pub fn payloads(&self, h: SequenceHandle) -> Result<Vec<&[f32]>, CacheError> {
        Ok(self
            .list(h)?
            .iter()
            .flat_map(|&n| self.node(n).slots.iter().map(|&s| self.pool.get(s)))
            .collect())
    }

    /// Slot index of every token of `h`; equal slots mean shared storage.
    pub fn slots(&self, h: SequenceHandle) -> Result<Vec<usize>, CacheError> {
        Ok(self.list(h)?.iter().flat_map(|&n| self.node(n).slots.iter().copied()).collect())
    }

    pub fn nodes_of(&self, h: SequenceHandle) -> Result<&[NodeId], CacheError> {
        self.list(h).map(Vec::as_slice)
    }

    pub fn refcount(&self, n: NodeId) -> Option<usize> {
        self.nodes.get(n)?.as_ref().map(|x| x.refcount)
    }

    /// Sum of refcounts over live nodes.
    pub fn total_refcount(&self) -> usize {
        self.nodes.iter().flatten().map(|n| n.refcount).sum()
    }

    pub fn live_handles(&self) -> Vec<SequenceHandle> {
        let mut v: Vec<_> = self.handles.keys().copied().collect();
        v.sort();
        v
    }

    pub fn stats(&self) -> StorageStats {
        StorageStats {
            physical_tokens_stored: self.pool.live(),
            logical_tokens_reachable: self.handles.values().flatten().map(|&n| self.node(n).tokens.len()).sum(),
            bytes_copied_on_last_op: self.bytes_copied_last,
            bytes_written_total: self.bytes_written,
            live_handles: self.handles.len(),
            live_nodes: self.nodes.iter().flatten().count(),
        }
    }

    pub fn dump(&self) -> Vec<NodeDump> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(id, n)| {
                let n = n.as_ref()?;
                Some(NodeDump {
                    id,
                    parent: n.parent,
                    edge_tokens: n.tokens.len(),
                    refcount: n.refcount,
                    join: n.join,
                    children: n.children.values().copied().collect(),
                })
            })
            .collect()
    }

    pub fn dump_json(&self) -> serde_json::Value {
        serde_json::to_value(self.dump()).expect("plain data serializes")
    }

    /// Indented tree, one node per line; join nodes start their own trees.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        let roots = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(id, n)| n.as_ref().filter(|n| n.parent.is_none()).map(|_| id));
        for r in roots {
            self.dump_node(r, 0, &mut out);
        }
        out
    }

    fn dump_node(&self, id: NodeId, depth: usize, out: &mut String) {
        let n = self.node(id);
        let kind = if id == ROOT {
            "root"
        } else if n.join {
            "join"
        } else {
            "node"
        };
        let _ = writeln!(
            out,
            "{:indent$}{kind} {id} tokens={} refs={}",
            "",
            n.tokens.len(),
            n.refcount,
            indent = depth * 2
        );
        for &c in n.children.values() {
            self.dump_node(c, depth + 1, out);
        }
    }
}
