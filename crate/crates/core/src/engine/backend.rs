use std::collections::HashMap;

use crate::attention::toy::argmax;
use crate::attention::{build_dag, SegmentKind, ToyModel};
use crate::grammar::{parse_source, GrammarError, IndexLabel, TagKind, Trajectory};
use crate::tokenizer::{Token, TokenId, Tokenizer};

/// Address of a sequence: for each enclosing block, the block's index among
/// the blocks opened by its owning sequence and the path ordinal (1-based).
pub type SeqAddr = Vec<(usize, usize)>;

/// What a backend is told about the sequence it is producing a token for.
#[derive(Debug, Clone, Copy)]
pub struct DecodeContext<'a> {
    pub request: usize,
    pub seq: usize,
    pub addr: &'a [(usize, usize)],
    pub position: usize,
    /// Tokens this sequence has emitted so far.
    pub emitted: usize,
}

/// Token source driven by the simulator.
pub trait Backend {
    /// Floats per token in the KV payloads produced by [`Backend::encode`].
    fn record_len(&self) -> usize {
        0
    }

    /// Next token for a decoding sequence, or `None` at end of stream.
    fn next_token(&mut self, ctx: &DecodeContext<'_>) -> Option<Token>;

    /// Tokens prefilled into a freshly spawned worker (`ctx` is the worker's
    /// own context). Must start with `<Path>`.
    fn path_header(&mut self, _ctx: &DecodeContext<'_>, ordinal: usize) -> Vec<Token> {
        let tok = Tokenizer::default();
        vec![tok.tag_token(TagKind::PathOpen, " "), tok.word_token(&format!("{ordinal}:"), " ")]
    }

    /// Token prefilled after a merge. Must be `<Conclusion>`.
    fn reduce_header(&mut self, _ctx: &DecodeContext<'_>) -> Token {
        Tokenizer::default().tag_token(TagKind::ConclusionOpen, " ")
    }

    /// KV record for `token`, given the records of every token it attends
    /// to, in sequence order.
    fn encode(&mut self, _ctx: &DecodeContext<'_>, _token: &Token, _context: &[&[f32]]) -> Vec<f32> {
        Vec::new()
    }
}

/// Replays a parsed trajectory: every sequence emits exactly the tokens the
/// trajectory gives it, one per request.
#[derive(Debug, Clone)]
pub struct ScriptedModel {
    scripts: HashMap<SeqAddr, Vec<Token>>,
    cursors: HashMap<SeqAddr, usize>,
}

impl ScriptedModel {
    pub fn new(t: &Trajectory, tok: &Tokenizer) -> Result<Self, GrammarError> {
        let dag = build_dag(t, tok)?;
        let mut seg_addr: Vec<SeqAddr> = Vec::with_capacity(dag.segments.len());
        let mut block_addr: HashMap<usize, (SeqAddr, usize)> = HashMap::new();
        let mut opened: HashMap<SeqAddr, usize> = HashMap::new();
        for s in &dag.segments {
            let addr = match s.kind {
                SegmentKind::Sequential => SeqAddr::new(),
                SegmentKind::Plan => {
                    let addr = s.parent().map(|p| seg_addr[p].clone()).unwrap_or_default();
                    let n = opened.entry(addr.clone()).or_insert(0);
                    block_addr.insert(s.block.expect("plan has a block"), (addr.clone(), *n));
                    *n += 1;
                    addr
                }
                SegmentKind::Path => {
                    let (owner, local) = &block_addr[&s.block.expect("path has a block")];
                    let mut a = owner.clone();
                    a.push((*local, s.ordinal.expect("path has an ordinal")));
                    a
                }
                SegmentKind::Reduce => block_addr[&s.block.expect("reduce has a block")].0.clone(),
            };
            seg_addr.push(addr);
        }
        let mut scripts: HashMap<SeqAddr, Vec<Token>> = HashMap::new();
        for (s, addr) in dag.segments.iter().zip(seg_addr) {
            scripts.entry(addr).or_default().extend(s.tokens.iter().cloned());
        }
        Ok(ScriptedModel {
            scripts,
            cursors: HashMap::new(),
        })
    }

    pub fn from_source(source: &str, tok: &Tokenizer) -> Result<Self, GrammarError> {
        Self::new(&parse_source(source)?, tok)
    }

    /// The full script of one sequence.
    pub fn script(&self, addr: &[(usize, usize)]) -> Option<&[Token]> {
        self.scripts.get(addr).map(Vec::as_slice)
    }

    fn peek(&self, addr: &[(usize, usize)]) -> Option<&Token> {
        let at = self.cursors.get(addr).copied().unwrap_or(0);
        self.scripts.get(addr)?.get(at)
    }

    fn take(&mut self, addr: &[(usize, usize)]) -> Option<Token> {
        let t = self.peek(addr)?.clone();
        *self.cursors.entry(addr.to_vec()).or_insert(0) += 1;
        Some(t)
    }
}

fn is_label(word: &str) -> bool {
    matches!(IndexLabel::parse_prefix(word), Some((_, n)) if n == word.len())
}

impl Backend for ScriptedModel {
    fn next_token(&mut self, ctx: &DecodeContext<'_>) -> Option<Token> {
        self.take(ctx.addr)
    }

    /// `<Path>` plus the index label when the scripted path starts with one.
    fn path_header(&mut self, ctx: &DecodeContext<'_>, _ordinal: usize) -> Vec<Token> {
        let mut out = Vec::new();
        if let Some(open) = self.take(ctx.addr) {
            out.push(open);
            if self.peek(ctx.addr).is_some_and(|t| t.tag.is_none() && is_label(t.word())) {
                out.extend(self.take(ctx.addr));
            }
        }
        out
    }

    fn reduce_header(&mut self, ctx: &DecodeContext<'_>) -> Token {
        self.take(ctx.addr)
            .unwrap_or_else(|| Tokenizer::default().tag_token(TagKind::ConclusionOpen, " "))
    }
}

/// Runs the toy transformer inside the simulator. With a script the tokens
/// are teacher-forced and the model only produces KV records and logits;
/// without one it decodes greedily.
pub struct ToyBackend<'m> {
    model: &'m ToyModel,
    script: Option<ScriptedModel>,
    /// Greedy mode stops each sequence after this many tokens.
    pub greedy_budget: usize,
    last_logits: HashMap<usize, Vec<f32>>,
    /// Logits of every encoded token, in encode order.
    pub trace: Vec<Vec<f32>>,
}

impl<'m> ToyBackend<'m> {
    pub fn scripted(model: &'m ToyModel, script: ScriptedModel) -> Self {
        ToyBackend {
            model,
            script: Some(script),
            greedy_budget: 0,
            last_logits: HashMap::new(),
            trace: Vec::new(),
        }
    }

    pub fn greedy(model: &'m ToyModel, budget: usize) -> Self {
        ToyBackend {
            model,
            script: None,
            greedy_budget: budget,
            last_logits: HashMap::new(),
            trace: Vec::new(),
        }
    }

    fn token_for(id: TokenId) -> Token {
        match TagKind::ALL.get(id as usize) {
            Some(&k) => Tokenizer::default().tag_token(k, " "),
            None => Token {
                id,
                surface: format!(" t{id}"),
                tag: None,
            },
        }
    }
}

impl Backend for ToyBackend<'_> {
    fn record_len(&self) -> usize {
        self.model.config().kv_record_len()
    }

    fn next_token(&mut self, ctx: &DecodeContext<'_>) -> Option<Token> {
        if let Some(s) = &mut self.script {
            return s.next_token(ctx);
        }
        if ctx.emitted >= self.greedy_budget {
            return None;
        }
        let id = self.last_logits.get(&ctx.seq).map_or(0, |l| argmax(l) as TokenId);
        Some(Self::token_for(id))
    }

    fn path_header(&mut self, ctx: &DecodeContext<'_>, ordinal: usize) -> Vec<Token> {
        match &mut self.script {
            Some(s) => s.path_header(ctx, ordinal),
            None => {
                let tok = Tokenizer::default();
                vec![tok.tag_token(TagKind::PathOpen, " "), tok.word_token(&format!("{ordinal}:"), " ")]
            }
        }
    }

    fn reduce_header(&mut self, ctx: &DecodeContext<'_>) -> Token {
        match &mut self.script {
            Some(s) => s.reduce_header(ctx),
            None => Tokenizer::default().tag_token(TagKind::ConclusionOpen, " "),
        }
    }

    fn encode(&mut self, ctx: &DecodeContext<'_>, token: &Token, context: &[&[f32]]) -> Vec<f32> {
        let out = self
            .model
            .step(token.id, ctx.position, context)
            .expect("toy backend records match the model");
        self.last_logits.insert(ctx.seq, out.logits.clone());
        self.trace.push(out.logits);
        out.payload
    }
}
