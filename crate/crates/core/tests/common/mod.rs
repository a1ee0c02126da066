//! Independent oracles shared by the integration tests and the acceptance
//! runner. None of them go through the DAG or cache code they check.

#![allow(dead_code)]

use multiverse_core::grammar::TagKind;
use multiverse_core::tokenizer::{Token, Tokenizer};

pub const T1: &str = "plan <Parallel> <Goal> <Outline> 1: a </Outline> <Outline> 2: b </Outline> </Goal> <Path> 1: x1 x2 </Path> <Path> 2: y1 y2 y3 </Path> <Conclusion> done </Conclusion> </Parallel> end";

pub fn fixture(name: &str) -> String {
    let path = format!("{}/fixtures/{name}.txt", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub const REFERENCE_FIXTURES: [&str; 4] = [
    "ref_data_a",
    "ref_data_b",
    "ref_generation_a",
    "ref_generation_b",
];

/// Per token in source order: the `(block, path ordinal)` of every path that
/// encloses it, outermost first. Blocks are numbered in opening order.
pub fn path_stacks(tokens: &[Token]) -> Vec<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut open_blocks: Vec<(usize, usize)> = Vec::new(); // (block id, paths seen)
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut next_block = 0;
    for t in tokens {
        match t.tag {
            Some(TagKind::ParallelOpen) => {
                open_blocks.push((next_block, 0));
                next_block += 1;
            }
            Some(TagKind::PathOpen) => {
                let b = open_blocks.last_mut().unwrap();
                b.1 += 1;
                stack.push(*b);
            }
            _ => {}
        }
        out.push(stack.clone());
        match t.tag {
            Some(TagKind::PathClose) => {
                stack.pop();
            }
            Some(TagKind::ParallelClose) => {
                open_blocks.pop();
            }
            _ => {}
        }
    }
    out
}

/// Visibility by brute force over source order: `j` is visible from `i` iff
/// it comes no later and the two never sit in different paths of one block.
pub fn mask_oracle(tokens: &[Token]) -> Vec<Vec<bool>> {
    let stacks = path_stacks(tokens);
    let n = tokens.len();
    let mut m = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..=i {
            m[i][j] = stacks[i]
                .iter()
                .all(|&(b, o)| stacks[j].iter().all(|&(b2, o2)| b2 != b || o2 == o));
        }
    }
    m
}

/// Positions by a single pass over source order with a stack of open blocks.
pub fn positions_oracle(tokens: &[Token]) -> Vec<usize> {
    struct Frame {
        plan_next: usize,
        furthest: usize,
    }
    let mut frames: Vec<Frame> = Vec::new();
    let mut next = 0usize;
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        match t.tag {
            Some(TagKind::PathOpen) => next = frames.last().unwrap().plan_next,
            Some(TagKind::ConclusionOpen) => next = frames.last().unwrap().furthest + 1,
            _ => {}
        }
        let pos = next;
        out.push(pos);
        next += 1;
        match t.tag {
            Some(TagKind::ParallelOpen) => frames.push(Frame {
                plan_next: 0,
                furthest: 0,
            }),
            Some(TagKind::GoalClose) => frames.last_mut().unwrap().plan_next = pos + 1,
            Some(TagKind::PathClose) => {
                let f = frames.last_mut().unwrap();
                f.furthest = f.furthest.max(pos);
            }
            Some(TagKind::ParallelClose) => {
                frames.pop();
            }
            _ => {}
        }
    }
    out
}

/// Longest chain of sequentially dependent tokens, by brute force over the
/// visibility oracle: the longest path in the DAG whose edges connect each
/// token to the tokens it can see.
pub fn critical_path_oracle(tokens: &[Token]) -> usize {
    let m = mask_oracle(tokens);
    let mut longest = vec![0usize; tokens.len()];
    for i in 0..tokens.len() {
        longest[i] = 1 + (0..i).filter(|&j| m[i][j]).map(|j| longest[j]).max().unwrap_or(0);
    }
    longest.into_iter().max().unwrap_or(0)
}

pub fn tokenize(src: &str) -> Vec<Token> {
    Tokenizer::default().tokenize(src)
}

/// Flat-array model of the KV store. Each token carries an identity key that
/// depends only on its context and value, which is what the radix store is
/// allowed to deduplicate on; merges insert a unique join marker.
#[derive(Debug, Default)]
pub struct FlatCache {
    pub seqs: std::collections::BTreeMap<u64, FlatSeq>,
    intern: std::collections::HashMap<(u64, u32), u64>,
    next_key: u64,
    next_id: u64,
}

#[derive(Debug, Clone, Default)]
pub struct FlatSeq {
    pub tokens: Vec<u32>,
    pub payloads: Vec<Vec<f32>>,
    /// Token keys and join markers, in order.
    pub elems: Vec<Elem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Elem {
    Token(u64),
    Join(u64),
}

impl FlatSeq {
    fn context(&self) -> u64 {
        match self.elems.last() {
            None => 0,
            Some(Elem::Token(k)) | Some(Elem::Join(k)) => *k,
        }
    }
}

impl FlatCache {
    pub fn new() -> Self {
        FlatCache {
            next_key: 1,
            ..Default::default()
        }
    }

    fn add(&mut self, s: FlatSeq) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.seqs.insert(id, s);
        id
    }

    pub fn empty(&mut self) -> u64 {
        self.add(FlatSeq::default())
    }

    /// Key the next token would get; payloads are derived from it so that
    /// deduplicated tokens carry identical records.
    pub fn key_for(&mut self, id: u64, token: u32) -> u64 {
        let ctx = self.seqs[&id].context();
        let next = &mut self.next_key;
        *self.intern.entry((ctx, token)).or_insert_with(|| {
            *next += 1;
            *next
        })
    }

    pub fn payload_for(key: u64, token: u32, record_len: usize) -> Vec<f32> {
        (0..record_len).map(|i| (key * 7 + token as u64 * 3 + i as u64) as f32).collect()
    }

    pub fn extend(&mut self, id: u64, tokens: &[u32], record_len: usize) -> Vec<f32> {
        let mut flat = Vec::new();
        for &t in tokens {
            let key = self.key_for(id, t);
            let p = Self::payload_for(key, t, record_len);
            flat.extend_from_slice(&p);
            let s = self.seqs.get_mut(&id).unwrap();
            s.tokens.push(t);
            s.payloads.push(p);
            s.elems.push(Elem::Token(key));
        }
        flat
    }

    pub fn fork(&mut self, id: u64, n: usize) -> Vec<u64> {
        let s = self.seqs[&id].clone();
        (0..n).map(|_| self.add(s.clone())).collect()
    }

    pub fn is_descendant(&self, prefix: u64, branch: u64) -> bool {
        self.seqs[&branch].elems.starts_with(&self.seqs[&prefix].elems)
    }

    pub fn merge(&mut self, prefix: u64, branches: &[u64]) -> u64 {
        let mut out = self.seqs[&prefix].clone();
        let (n_tokens, n_elems) = (out.tokens.len(), out.elems.len());
        for b in branches {
            let s = &self.seqs[b];
            let skip = s.elems[..n_elems].iter().filter(|e| matches!(e, Elem::Token(_))).count();
            debug_assert_eq!(skip, n_tokens);
            out.tokens.extend_from_slice(&s.tokens[n_tokens..]);
            out.payloads.extend_from_slice(&s.payloads[n_tokens..]);
            out.elems.extend_from_slice(&s.elems[n_elems..]);
        }
        self.next_key += 1;
        out.elems.push(Elem::Join(self.next_key));
        self.add(out)
    }

    pub fn release(&mut self, id: u64) {
        self.seqs.remove(&id);
    }

    /// Distinct token identities still referenced by some sequence.
    pub fn physical(&self) -> usize {
        self.seqs
            .values()
            .flat_map(|s| s.elems.iter())
            .filter(|e| matches!(e, Elem::Token(_)))
            .collect::<std::collections::HashSet<_>>()
            .len()
    }
}

/// Drives a [`KvStore`] and a [`FlatCache`] with the same random op log,
/// asserting agreement after every op. Returns the number of merges made.
pub fn run_cache_log(seed: u64, ops: usize, record_len: usize) -> Result<usize, String> {
    use multiverse_core::kvcache::{CacheError, KvStore, SequenceHandle};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut store = KvStore::new(record_len);
    let mut oracle = FlatCache::new();
    let mut live: Vec<(u64, SequenceHandle)> = Vec::new();
    let mut merges = 0;

    for step in 0..ops {
        // Keep the working set bounded so long logs stay cheap to verify.
        let roll = if live.len() > 48 { 99 } else { rng.gen_range(0..100) };
        if live.is_empty() || roll < 5 {
            live.push((oracle.empty(), store.empty()));
        } else if roll < 45 {
            let (o, h) = live[rng.gen_range(0..live.len())];
            let n = rng.gen_range(1..=4);
            let toks: Vec<u32> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let payload = oracle.extend(o, &toks, record_len);
            store.extend(h, &toks, &payload).map_err(|e| format!("step {step}: {e}"))?;
        } else if roll < 60 {
            let (o, h) = live[rng.gen_range(0..live.len())];
            let n = rng.gen_range(1..=3);
            let before: Vec<(usize, usize)> = store
                .nodes_of(h)
                .unwrap()
                .iter()
                .map(|&x| (x, store.refcount(x).unwrap()))
                .collect();
            let physical = store.stats().physical_tokens_stored;
            let os = oracle.fork(o, n);
            let hs = store.fork(h, n).unwrap();
            live.extend(os.into_iter().zip(hs));
            if store.stats().physical_tokens_stored != physical || store.stats().bytes_copied_on_last_op != 0 {
                return Err(format!("step {step}: fork changed storage"));
            }
            for (x, rc) in before {
                let occurrences = store.nodes_of(h).unwrap().iter().filter(|&&y| y == x).count();
                if store.refcount(x) != Some(rc + n * occurrences) {
                    return Err(format!("step {step}: refcount of node {x} not +{n}"));
                }
            }
        } else if roll < 75 {
            let (po, ph) = live[rng.gen_range(0..live.len())];
            let candidates: Vec<_> = live.iter().copied().filter(|&(o, _)| oracle.is_descendant(po, o)).collect();
            let k = rng.gen_range(1..=3);
            let mut branches: Vec<(u64, SequenceHandle)> =
                (0..k).map(|_| candidates[rng.gen_range(0..candidates.len())]).collect();
            if rng.gen_bool(0.1) {
                branches.push(live[rng.gen_range(0..live.len())]);
            }
            let valid = branches.iter().all(|&(o, _)| oracle.is_descendant(po, o));
            let bh: Vec<_> = branches.iter().map(|b| b.1).collect();
            match store.merge(ph, &bh) {
                Ok(m) if valid => {
                    let bo: Vec<_> = branches.iter().map(|b| b.0).collect();
                    live.push((oracle.merge(po, &bo), m));
                    merges += 1;
                    if store.stats().bytes_copied_on_last_op != 0 {
                        return Err(format!("step {step}: merge copied bytes"));
                    }
                }
                Err(CacheError::BranchNotDescendant { .. }) if !valid => {}
                other => return Err(format!("step {step}: merge validity disagrees: {other:?} vs {valid}")),
            }
        } else {
            let i = rng.gen_range(0..live.len());
            let (o, h) = live.swap_remove(i);
            let refs = store.total_refcount();
            let listed = store.nodes_of(h).unwrap().len();
            oracle.release(o);
            store.release(h).map_err(|e| format!("step {step}: {e}"))?;
            if store.total_refcount() != refs - listed {
                return Err(format!("step {step}: release did not drop one ref per node"));
            }
            if store.release(h) != Err(CacheError::DoubleRelease(h)) {
                return Err(format!("step {step}: double release not detected"));
            }
        }

        for &(o, h) in &live {
            let s = &oracle.seqs[&o];
            if store.resolve(h).unwrap() != s.tokens {
                return Err(format!("step {step}: tokens of {h} differ"));
            }
            let payloads = store.payloads(h).unwrap();
            if payloads.len() != s.payloads.len() || payloads.iter().zip(&s.payloads).any(|(a, b)| *a != b.as_slice()) {
                return Err(format!("step {step}: payloads of {h} differ"));
            }
        }
        let stats = store.stats();
        if stats.physical_tokens_stored != oracle.physical() {
            return Err(format!(
                "step {step}: physical {} vs oracle {}",
                stats.physical_tokens_stored,
                oracle.physical()
            ));
        }
        let logical: usize = oracle.seqs.values().map(|s| s.tokens.len()).sum();
        if stats.logical_tokens_reachable != logical {
            return Err(format!("step {step}: logical {} vs {logical}", stats.logical_tokens_reachable));
        }
    }
    Ok(merges)
}

/// Edit distance straight from its recursive definition, no memoization.
/// Exponential; keep inputs short.
pub fn levenshtein_recursive<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = levenshtein_recursive(ra, rb) + usize::from(x != y);
            sub.min(levenshtein_recursive(ra, b) + 1)
                .min(levenshtein_recursive(a, rb) + 1)
        }
    }
}

/// Every string over `0..alphabet` of length at most `max_len`, shortest
/// first, so a string's prefix (itself minus the last symbol) always comes
/// earlier.
pub struct AllStrings {
    pub strings: Vec<Vec<u8>>,
    /// Index of each string's prefix; unused for the empty string.
    pub prefix: Vec<usize>,
}

impl AllStrings {
    pub fn new(alphabet: u8, max_len: usize) -> Self {
        let mut strings: Vec<Vec<u8>> = vec![Vec::new()];
        let mut prefix = vec![0];
        let mut level = 0..1;
        for _ in 0..max_len {
            let start = strings.len();
            for p in level.clone() {
                for c in 0..alphabet {
                    let mut s = strings[p].clone();
                    s.push(c);
                    strings.push(s);
                    prefix.push(p);
                }
            }
            level = start..strings.len();
        }
        AllStrings { strings, prefix }
    }

    /// The same recursion as [`levenshtein_recursive`], evaluated once per
    /// pair of strings: `d(a, b)` reads `d(a', b)`, `d(a, b')` and
    /// `d(a', b')` where `'` drops the last symbol. Row-major `u8` table.
    pub fn distance_table(&self) -> Vec<u8> {
        let n = self.strings.len();
        let mut d = vec![0u8; n * n];
        for a in 0..n {
            let la = self.strings[a].len();
            for b in 0..n {
                let lb = self.strings[b].len();
                d[a * n + b] = if la == 0 {
                    lb as u8
                } else if lb == 0 {
                    la as u8
                } else {
                    let (pa, pb) = (self.prefix[a], self.prefix[b]);
                    let same = self.strings[a][la - 1] == self.strings[b][lb - 1];
                    let sub = d[pa * n + pb] + u8::from(!same);
                    sub.min(d[pa * n + b] + 1).min(d[a * n + pb] + 1)
                };
            }
        }
        d
    }
}
