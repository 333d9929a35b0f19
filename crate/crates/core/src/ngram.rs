//! Add-alpha smoothed n-gram models with recursive backoff.
//!
//! These stand in for the draft, companion, and target LLMs at desk scale.
//! For a seen context of length `order-1`, the next-token distribution is
//! `P(t|ctx) = (count(ctx,t) + alpha) / (count(ctx) + alpha*V)`; an unseen
//! context falls back to the `(order-1)`-gram table, recursively down to the
//! unigram, which is always populated. Models are immutable after training
//! and safely shareable across threads.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::ProbDist;
use crate::error::{Result, SvError};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    counts: HashMap<u32, u64>,
}

/// One table per context length `0..order`.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    vocab: Vocabulary,
    levels: Vec<HashMap<Vec<u32>, ContextCounts>>,
}

impl NGramModel {
    /// Train on a token sequence. Counts every n-gram of length `1..=order`.
    /// The vocabulary is built from the corpus by first appearance.
    pub fn train(corpus: &[String], order: usize, alpha: f64) -> Result<Self> {
        Self::train_impl(corpus, order, alpha, None)
    }

    /// Train against a shared vocabulary, so models trained on different
    /// corpus slices stay comparable. Errors on out-of-vocabulary tokens.
    pub fn train_with_vocab(
        corpus: &[String],
        vocab: Vocabulary,
        order: usize,
        alpha: f64,
    ) -> Result<Self> {
        Self::train_impl(corpus, order, alpha, Some(vocab))
    }

    fn train_impl(
        corpus: &[String],
        order: usize,
        alpha: f64,
        vocab: Option<Vocabulary>,
    ) -> Result<Self> {
        if order < 1 {
            return Err(SvError::Config("n-gram order must be >= 1".into()));
        }
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(SvError::Config(format!("alpha must be > 0, got {alpha}")));
        }
        if corpus.is_empty() {
            return Err(SvError::Data("empty training corpus".into()));
        }
        if corpus.len() < order {
            return Err(SvError::Data(format!(
                "corpus length {} shorter than order {order}",
                corpus.len()
            )));
        }
        let vocab =
            vocab.unwrap_or_else(|| Vocabulary::from_tokens(corpus.iter().map(String::as_str)));
        if vocab.len() < 2 {
            return Err(SvError::Data(
                "corpus must contain at least 2 distinct tokens".into(),
            ));
        }
        let ids = vocab.encode(corpus)?;

        let mut levels: Vec<HashMap<Vec<u32>, ContextCounts>> = vec![HashMap::new(); order];
        for (ctx_len, level) in levels.iter_mut().enumerate() {
            for w in ids.windows(ctx_len + 1) {
                let (ctx, tok) = w.split_at(ctx_len);
                let entry = level.entry(ctx.to_vec()).or_default();
                entry.total += 1;
                *entry.counts.entry(tok[0]).or_insert(0) += 1;
            }
        }

        Ok(NGramModel {
            order,
            alpha,
            vocab,
            levels,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Next-token distribution for a context (token ids). Uses the longest
    /// available context suffix; unseen contexts back off one level at a time.
    /// The unigram level is always seen, so a distribution always exists.
    pub fn next_dist(&self, context: &[u32]) -> ProbDist {
        let v = self.vocab.len();
        let max_ctx = (self.order - 1).min(context.len());
        for ctx_len in (0..=max_ctx).rev() {
            let suffix = &context[context.len() - ctx_len..];
            if let Some(entry) = self.levels[ctx_len].get(suffix) {
                let denom = entry.total as f64 + self.alpha * v as f64;
                let probs = (0..v as u32)
                    .map(|t| {
                        (entry.counts.get(&t).copied().unwrap_or(0) as f64 + self.alpha) / denom
                    })
                    .collect();
                return ProbDist::from_weights(probs).expect("smoothed counts are positive");
            }
        }
        unreachable!("unigram level always has the empty context")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        serde_json::to_writer(BufWriter::new(file), &SerModel::from(self))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let ser: SerModel = serde_json::from_reader(BufReader::new(file))?;
        ser.try_into()
    }
}

/// Serialized form: self-describing JSON with order, alpha, vocabulary, and
/// counts, sorted for byte-stable output.
#[derive(Serialize, Deserialize)]
struct SerModel {
    order: usize,
    alpha: f64,
    vocab: Vocabulary,
    levels: Vec<Vec<SerContext>>,
}

#[derive(Serialize, Deserialize)]
struct SerContext {
    ctx: Vec<u32>,
    counts: Vec<(u32, u64)>,
}

impl From<&NGramModel> for SerModel {
    fn from(m: &NGramModel) -> Self {
        let levels = m
            .levels
            .iter()
            .map(|level| {
                let mut ctxs: Vec<SerContext> = level
                    .iter()
                    .map(|(ctx, e)| {
                        let mut counts: Vec<(u32, u64)> =
                            e.counts.iter().map(|(&t, &c)| (t, c)).collect();
                        counts.sort_unstable();
                        SerContext {
                            ctx: ctx.clone(),
                            counts,
                        }
                    })
                    .collect();
                ctxs.sort_by(|a, b| a.ctx.cmp(&b.ctx));
                ctxs
            })
            .collect();
        SerModel {
            order: m.order,
            alpha: m.alpha,
            vocab: m.vocab.clone(),
            levels,
        }
    }
}

impl TryFrom<SerModel> for NGramModel {
    type Error = SvError;
    fn try_from(s: SerModel) -> Result<Self> {
        if s.order < 1 || s.levels.len() != s.order {
            return Err(SvError::Data("inconsistent model file".into()));
        }
        if !s.alpha.is_finite() || s.alpha <= 0.0 {
            return Err(SvError::Data("model alpha must be > 0".into()));
        }
        let levels = s
            .levels
            .into_iter()
            .map(|level| {
                level
                    .into_iter()
                    .map(|c| {
                        let total = c.counts.iter().map(|&(_, n)| n).sum();
                        (
                            c.ctx,
                            ContextCounts {
                                total,
                                counts: c.counts.into_iter().collect(),
                            },
                        )
                    })
                    .collect()
            })
            .collect();
        Ok(NGramModel {
            order: s.order,
            alpha: s.alpha,
            vocab: s.vocab,
            levels,
        })
    }
}
