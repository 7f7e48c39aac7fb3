//! Backoff n-gram language models used as per-state emission models.
//!
//! Models are trained with interpolated Witten-Bell smoothing (or raw MLE,
//! for test harnesses), stored in backoff normal form, and scored in the
//! natural-log domain. ARPA text serialization lives in [`arpa`].

pub mod arpa;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const UNK: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;

pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";

/// Token/id bijection with reserved entries for the unknown word and the
/// sentence boundary markers. Ids are dense from 0; lookups of unseen
/// tokens map to [`UNK`].
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    ids: HashMap<String, TokenId>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary {
            ids: HashMap::new(),
            tokens: Vec::new(),
        };
        for reserved in [UNK_TOKEN, BOS_TOKEN, EOS_TOKEN] {
            v.intern(reserved);
        }
        v
    }

    /// Insert `token` if absent and return its id.
    pub fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.ids.insert(token.to_string(), id);
        self.tokens.push(token.to_string());
        id
    }

    /// Resolve a token to its id; unseen tokens map to [`UNK`].
    pub fn lookup(&self, token: &str) -> TokenId {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Smoothing {
    WittenBell,
    /// Raw count ratios with no mass for unseen events. Test-only: scores of
    /// unseen tokens are `-inf` and such models cannot be written to ARPA.
    Mle,
}

/// Backoff n-gram model over token ids.
///
/// `probs[n-1]` maps a length-`n-1` context to the natural-log conditional
/// probability of each token observed after it; level 1 (empty context) is
/// dense over the predictable vocabulary for Witten-Bell models.
/// `backoffs[len-1]` holds the natural-log backoff weight of each observed
/// context; an absent context backs off with weight 0 (log domain).
#[derive(Debug, Clone)]
pub struct LanguageModel {
    order: usize,
    vocab: Vocabulary,
    smoothing: Smoothing,
    boundaries: bool,
    probs: Vec<HashMap<Box<[TokenId]>, HashMap<TokenId, f64>>>,
    backoffs: Vec<HashMap<Box<[TokenId]>, f64>>,
}

impl LanguageModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    /// Whether the model was trained with sentence boundary markers.
    pub fn boundaries(&self) -> bool {
        self.boundaries
    }

    /// Tokens the model can predict: every level-1 entry (always includes
    /// the unknown token for Witten-Bell models; never the start marker).
    pub fn predictable(&self) -> Vec<TokenId> {
        let mut ids: Vec<TokenId> = self.probs[0]
            .get(&[][..])
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default();
        ids.sort_unstable();
        ids
    }

    /// Natural-log probability of `token` after `context` (most recent token
    /// last), resolving through backoff. Total over all contexts; returns
    /// `-inf` only for MLE models on unseen events.
    pub fn logprob(&self, context: &[TokenId], token: TokenId) -> f64 {
        let start = context.len().min(self.order - 1);
        let mut ctx = &context[context.len() - start..];
        let mut acc = 0.0;
        loop {
            let level = ctx.len();
            if let Some(p) = self.probs[level].get(ctx).and_then(|m| m.get(&token)) {
                return acc + p;
            }
            if level == 0 {
                return f64::NEG_INFINITY;
            }
            if let Some(bow) = self.backoffs[level - 1].get(ctx) {
                acc += bow;
            }
            ctx = &ctx[1..];
        }
    }

    /// Sum of per-token conditional log-probabilities of a token-string
    /// sequence. With `use_boundaries`, the first token is conditioned on
    /// the start marker and an end-marker prediction is appended; an empty
    /// sequence then scores `P(end|start)`, otherwise 0.
    pub fn score(&self, tokens: &[String], use_boundaries: bool) -> f64 {
        let ids: Vec<TokenId> = tokens.iter().map(|t| self.vocab.lookup(t)).collect();
        self.score_ids(&ids, use_boundaries)
    }

    pub fn score_ids(&self, ids: &[TokenId], use_boundaries: bool) -> f64 {
        let mut seq = Vec::with_capacity(ids.len() + 2);
        if use_boundaries {
            seq.push(BOS);
        }
        seq.extend_from_slice(ids);
        if use_boundaries {
            seq.push(EOS);
        }
        let first = if use_boundaries { 1 } else { 0 };
        let mut total = 0.0;
        for t in first..seq.len() {
            let lo = t.saturating_sub(self.order - 1).max(0);
            total += self.logprob(&seq[lo..t], seq[t]);
        }
        total
    }

    /// Probability mass assigned to the whole predictable vocabulary after
    /// `context`. One within 1e-6 for every valid Witten-Bell model.
    pub fn conditional_mass(&self, context: &[TokenId]) -> f64 {
        self.predictable()
            .iter()
            .map(|&w| self.logprob(context, w).exp())
            .sum()
    }
}

/// Count tables for one training pass: `counts[n-1][context][token]`.
type CountTables = Vec<HashMap<Box<[TokenId]>, HashMap<TokenId, u64>>>;

fn collect_counts(
    utterances: &[&[String]],
    order: usize,
    boundaries: bool,
    vocab: &mut Vocabulary,
) -> CountTables {
    let mut counts: CountTables = vec![HashMap::new(); order];
    for utt in utterances {
        let mut seq: Vec<TokenId> = Vec::with_capacity(utt.len() + 2);
        if boundaries {
            seq.push(BOS);
        }
        for tok in utt.iter() {
            seq.push(vocab.intern(tok));
        }
        if boundaries {
            seq.push(EOS);
        }
        let first = if boundaries { 1 } else { 0 };
        for t in first..seq.len() {
            for n in 1..=order {
                if t + 1 >= n {
                    let ctx = &seq[t + 1 - n..t];
                    *counts[n - 1]
                        .entry(ctx.into())
                        .or_default()
                        .entry(seq[t])
                        .or_insert(0) += 1;
                }
            }
        }
    }
    counts
}

/// Train a backoff n-gram model on tokenized utterances.
///
/// Witten-Bell interpolates each level with the next shorter history,
/// `P(w|h) = (c(h,w) + T(h) P(w|h')) / (c(h) + T(h))`, bottoming out in a
/// uniform distribution over the predictable vocabulary (observed types
/// plus the unknown token, plus the end marker when `boundaries` is set).
/// MLE stores raw count ratios and reserves no unknown mass.
pub fn train_lm(
    utterances: &[&[String]],
    order: usize,
    smoothing: Smoothing,
    boundaries: bool,
) -> Result<LanguageModel> {
    if !(1..=3).contains(&order) {
        return Err(Error::invalid(format!(
            "lm order must be 1, 2 or 3, got {order}"
        )));
    }
    if utterances.is_empty() {
        return Err(Error::invalid("cannot train a language model on an empty utterance list"));
    }

    let mut vocab = Vocabulary::new();
    let counts = collect_counts(utterances, order, boundaries, &mut vocab);

    let mut lm = LanguageModel {
        order,
        vocab,
        smoothing,
        boundaries,
        probs: vec![HashMap::new(); order],
        backoffs: vec![HashMap::new(); order.saturating_sub(1)],
    };

    match smoothing {
        Smoothing::WittenBell => fill_witten_bell(&mut lm, &counts),
        Smoothing::Mle => fill_mle(&mut lm, &counts),
    }
    Ok(lm)
}

fn fill_witten_bell(lm: &mut LanguageModel, counts: &CountTables) {
    // Predictable vocabulary: everything but the start marker, and the end
    // marker only when boundaries are in use.
    let mut predictable: Vec<TokenId> = (0..lm.vocab.len() as TokenId)
        .filter(|&id| id != BOS && (id != EOS || lm.boundaries))
        .collect();
    predictable.sort_unstable();
    let uniform = 1.0 / predictable.len() as f64;

    // Level 1: dense over the predictable vocabulary.
    let unigram = counts[0].get(&[][..]).cloned().unwrap_or_default();
    let total: u64 = unigram.values().sum();
    let types = unigram.len() as f64;
    let denom = total as f64 + types;
    let mut level1 = HashMap::with_capacity(predictable.len());
    for &w in &predictable {
        let c = unigram.get(&w).copied().unwrap_or(0) as f64;
        level1.insert(w, ((c + types * uniform) / denom).ln());
    }
    lm.probs[0].insert(Box::from(&[][..]), level1);

    // Higher levels, shortest history first so the interpolation target is
    // already resolved.
    for n in 2..=lm.order {
        let mut probs: HashMap<Box<[TokenId]>, HashMap<TokenId, f64>> = HashMap::new();
        let mut bows: HashMap<Box<[TokenId]>, f64> = HashMap::new();
        for (ctx, followers) in &counts[n - 1] {
            let c_total: u64 = followers.values().sum();
            let t_types = followers.len() as f64;
            let denom = c_total as f64 + t_types;
            let shorter = &ctx[1..];
            let mut here = HashMap::with_capacity(followers.len());
            for (&w, &c) in followers {
                let lower = lm.logprob(shorter, w).exp();
                here.insert(w, ((c as f64 + t_types * lower) / denom).ln());
            }
            probs.insert(ctx.clone(), here);
            bows.insert(ctx.clone(), (t_types / denom).ln());
        }
        lm.probs[n - 1] = probs;
        lm.backoffs[n - 2] = bows;
    }
}

fn fill_mle(lm: &mut LanguageModel, counts: &CountTables) {
    for n in 1..=lm.order {
        let mut probs: HashMap<Box<[TokenId]>, HashMap<TokenId, f64>> = HashMap::new();
        for (ctx, followers) in &counts[n - 1] {
            let c_total: u64 = followers.values().sum();
            let here = followers
                .iter()
                .map(|(&w, &c)| (w, (c as f64 / c_total as f64).ln()))
                .collect();
            probs.insert(ctx.clone(), here);
            if n >= 2 {
                // No reserved mass: an observed context never backs off.
                lm.backoffs[n - 2].insert(ctx.clone(), f64::NEG_INFINITY);
            }
        }
        lm.probs[n - 1] = probs;
    }
}
