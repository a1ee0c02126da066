//! Seeded generator of grammar-valid tagged trajectories.

use rand::seq::SliceRandom;
use rand::Rng;

const WORDS: &[&str] = &[
    "compute", "the", "sum", "of", "x", "y", "case", "so", "therefore", "a<b", "2^3", "=", "8",
    "<b>", "$H$", "Ω’s", "chord", "dense", "count", "7", "≈", "paths", "</p>", "set",
];
const SPACES: &[&str] = &[" ", "\n", "\n\n", "  ", "\t", " \n"];

#[derive(Debug, Clone, Copy)]
pub struct GenConfig {
    /// Maximum nesting depth of blocks (0 gives purely sequential text).
    pub max_depth: usize,
    /// Maximum number of paths per block (at least 1).
    pub max_paths: usize,
    /// Maximum words per text run.
    pub max_words: usize,
    /// Maximum consecutive blocks at one level.
    pub max_blocks: usize,
    /// Emit `N:` / `1.2:` index labels on outlines and paths.
    pub labels: bool,
    /// Vary inter-tag whitespace (otherwise a single space).
    pub noisy_whitespace: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_depth: 3,
            max_paths: 5,
            max_words: 6,
            max_blocks: 2,
            labels: true,
            noisy_whitespace: true,
        }
    }
}

struct Gen<'r, R> {
    rng: &'r mut R,
    cfg: GenConfig,
    out: String,
}

impl<R: Rng> Gen<'_, R> {
    fn space(&mut self) {
        if self.cfg.noisy_whitespace {
            let s = SPACES.choose(self.rng).unwrap();
            self.out.push_str(s);
        } else {
            self.out.push(' ');
        }
    }

    fn maybe_space(&mut self) {
        if !self.cfg.noisy_whitespace || self.rng.gen_bool(0.7) {
            self.space();
        }
    }

    fn words(&mut self, min: usize) {
        let n = self.rng.gen_range(min..=self.cfg.max_words.max(min));
        for i in 0..n {
            if i > 0 {
                self.space();
            }
            let w = WORDS.choose(self.rng).unwrap();
            self.out.push_str(w);
        }
    }

    fn label(&mut self, prefix: &Option<String>, k: usize) -> Option<String> {
        if !self.cfg.labels {
            return None;
        }
        let l = match prefix {
            Some(p) => format!("{p}.{k}"),
            None => k.to_string(),
        };
        self.out.push_str(&l);
        self.out.push(':');
        self.space();
        Some(l)
    }

    fn block(&mut self, depth: usize, prefix: Option<String>) {
        let n = self.rng.gen_range(1..=self.cfg.max_paths.max(1));
        self.out.push_str("<Parallel>");
        self.maybe_space();
        self.out.push_str("<Goal>");
        if self.rng.gen_bool(0.3) {
            self.words(1);
        }
        self.maybe_space();
        for k in 1..=n {
            self.out.push_str("<Outline>");
            self.maybe_space();
            self.label(&prefix, k);
            self.words(1);
            self.maybe_space();
            self.out.push_str("</Outline>");
            self.maybe_space();
        }
        self.out.push_str("</Goal>");
        self.maybe_space();
        for k in 1..=n {
            self.out.push_str("<Path>");
            self.maybe_space();
            let label = self.label(&prefix, k);
            self.words(1);
            if depth < self.cfg.max_depth && self.rng.gen_bool(0.35) {
                self.space();
                self.block(depth + 1, label);
                if self.rng.gen_bool(0.5) {
                    self.space();
                    self.words(1);
                }
            }
            self.maybe_space();
            self.out.push_str("</Path>");
            self.maybe_space();
        }
        self.out.push_str("<Conclusion>");
        self.maybe_space();
        self.words(0);
        self.maybe_space();
        self.out.push_str("</Conclusion>");
        self.maybe_space();
        self.out.push_str("</Parallel>");
    }
}

/// Generates a random trajectory source text that the parser accepts.
pub fn random_trajectory<R: Rng>(rng: &mut R, cfg: GenConfig) -> String {
    let mut g = Gen {
        rng,
        cfg,
        out: String::new(),
    };
    if g.rng.gen_bool(0.7) {
        g.words(1);
        g.space();
    }
    if cfg.max_depth > 0 {
        let blocks = g.rng.gen_range(1..=cfg.max_blocks.max(1));
        for i in 0..blocks {
            if i > 0 && g.rng.gen_bool(0.5) {
                g.space();
                g.words(1);
                g.space();
            }
            g.block(1, None);
        }
        if g.rng.gen_bool(0.6) {
            g.space();
            g.words(1);
        }
    } else {
        g.words(1);
    }
    if g.rng.gen_bool(0.3) {
        g.space();
    }
    g.out
}

/// Random purely sequential text of `words` whitespace-separated words.
pub fn random_sequential<R: Rng>(rng: &mut R, words: usize) -> String {
    let mut g = Gen {
        rng,
        cfg: GenConfig::default(),
        out: String::new(),
    };
    for i in 0..words {
        if i > 0 {
            g.space();
        }
        let w = WORDS.choose(g.rng).unwrap();
        g.out.push_str(w);
    }
    g.out
}
