//! Parallel-branch generation toolkit: the MapReduce tag grammar, branch-aware
//! attention masks and positions with a toy transformer, a prefix-sharing
//! radix KV store, a fork/join decoding simulator and data-curation checks.

pub mod attention;
pub mod curator;
pub mod engine;
pub mod grammar;
pub mod kvcache;
pub mod tokenizer;
