//! Synthetic dyadic corpora sampled from known ground-truth parameters.
//!
//! The generator follows the influence process exactly: the target opens in
//! a state drawn from the class initial distribution, and before every
//! later target turn a partner pseudo-state is drawn i.i.d. from the class
//! prior, the partner utterance is emitted from that pseudo-state, and the
//! target transitions according to the row-normalized product
//! `A(s, .) * B(p, .)^beta_true`. Ratings are constant per class so a
//! percentile cut reproduces the planted labels, and couple outcomes cycle
//! through 1..4.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, Couple, LabeledDataset, Session, Speaker, Turn};
use crate::error::{Error, Result};

/// Token emission distributions of one state: unigram weights plus an
/// optional token-bigram chain for order-2 generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateEmission {
    pub unigram: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bigram: Option<Vec<Vec<f64>>>,
}

/// Per-class chain dynamics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassDynamics {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    /// Prior over partner pseudo-states (no temporal self-dependence).
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub vocab: Vec<String>,
    /// Shared across classes, one entry per state.
    pub states: Vec<StateEmission>,
    pub c0: ClassDynamics,
    pub c1: ClassDynamics,
    pub beta_true: f64,
    /// Inclusive range of target turns per session.
    pub turns_range: (usize, usize),
    /// Inclusive range of tokens per utterance.
    pub utterance_len: (usize, usize),
}

fn check_dist(row: &[f64], len: usize, what: &str) -> Result<()> {
    if row.len() != len {
        return Err(Error::invalid(format!(
            "{what} has length {}, expected {len}",
            row.len()
        )));
    }
    if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::invalid(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{what} sums to {sum}, expected 1")));
    }
    Ok(())
}

impl GroundTruth {
    pub fn k(&self) -> usize {
        self.states.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k < 2 {
            return Err(Error::invalid("ground truth needs at least 2 states"));
        }
        if self.vocab.is_empty() {
            return Err(Error::invalid("ground truth vocabulary is empty"));
        }
        let v = self.vocab.len();
        for (i, st) in self.states.iter().enumerate() {
            check_dist(&st.unigram, v, &format!("state {i} unigram"))?;
            if let Some(rows) = &st.bigram {
                if rows.len() != v {
                    return Err(Error::invalid(format!(
                        "state {i} bigram table must have one row per vocab token"
                    )));
                }
                for (j, row) in rows.iter().enumerate() {
                    check_dist(row, v, &format!("state {i} bigram row {j}"))?;
                }
            }
        }
        for (name, class) in [("c0", &self.c0), ("c1", &self.c1)] {
            for (i, row) in class.a.iter().enumerate() {
                check_dist(row, k, &format!("{name} A row {i}"))?;
            }
            for (i, row) in class.b.iter().enumerate() {
                check_dist(row, k, &format!("{name} B row {i}"))?;
            }
            check_dist(&class.pi, k, &format!("{name} pi"))?;
            check_dist(&class.rho, k, &format!("{name} rho"))?;
            if class.a.len() != k || class.b.len() != k {
                return Err(Error::invalid(format!("{name} tables must be K x K")));
            }
            if class.a.iter().chain(class.b.iter()).any(|r| r.iter().any(|&x| x <= 0.0)) {
                return Err(Error::invalid(format!("{name} A and B entries must be positive")));
            }
        }
        if !(self.beta_true >= 0.0 && self.beta_true.is_finite()) {
            return Err(Error::invalid("beta_true must be finite and >= 0"));
        }
        let ok_range = |(lo, hi): (usize, usize)| lo >= 1 && lo <= hi;
        if !ok_range(self.turns_range) || !ok_range(self.utterance_len) {
            return Err(Error::invalid("turns_range and utterance_len must be non-empty ranges"));
        }
        Ok(())
    }

    /// Distribution of the next target state given the previous one and the
    /// partner pseudo-state: the row-normalized `A(s,.) * B(p,.)^beta`.
    pub fn transition_distribution(&self, label: ClassLabel, s_prev: usize, p: usize) -> Vec<f64> {
        let class = self.class(label);
        let raw: Vec<f64> = (0..self.k())
            .map(|s| class.a[s_prev][s] * class.b[p][s].powf(self.beta_true))
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / sum).collect()
    }

    pub fn class(&self, label: ClassLabel) -> &ClassDynamics {
        match label {
            ClassLabel::C0 => &self.c0,
            ClassLabel::C1 => &self.c1,
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Computation(format!("serialize ground truth: {e}")))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let gt: GroundTruth =
            toml::from_str(text).map_err(|e| Error::invalid(format!("ground truth config: {e}")))?;
        gt.validate()?;
        Ok(gt)
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Built-in configuration: well-separated emissions (symmetric KL above
    /// 2 nats), class-distinct chain and influence tables, planted beta 1.
    pub fn default_separable() -> Self {
        let vocab: Vec<String> = [
            "calm", "fine", "sure", "okay", "thanks", "angry", "upset", "never", "wrong", "stop",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let hi = 0.18;
        let lo = 0.02;
        let state0: Vec<f64> = (0..10).map(|i| if i < 5 { hi } else { lo }).collect();
        let state1: Vec<f64> = (0..10).map(|i| if i < 5 { lo } else { hi }).collect();
        GroundTruth {
            vocab,
            states: vec![
                StateEmission { unigram: state0, bigram: None },
                StateEmission { unigram: state1, bigram: None },
            ],
            c0: ClassDynamics {
                a: vec![vec![0.9, 0.1], vec![0.4, 0.6]],
                b: vec![vec![0.85, 0.15], vec![0.15, 0.85]],
                pi: vec![0.8, 0.2],
                rho: vec![0.5, 0.5],
            },
            c1: ClassDynamics {
                a: vec![vec![0.6, 0.4], vec![0.1, 0.9]],
                b: vec![vec![0.3, 0.7], vec![0.7, 0.3]],
                pi: vec![0.2, 0.8],
                rho: vec![0.5, 0.5],
            },
            beta_true: 1.0,
            turns_range: (15, 25),
            utterance_len: (4, 9),
        }
    }
}

/// Symmetric KL divergence between two discrete distributions, in nats.
pub fn symmetric_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, &b)| a > 0.0 && b > 0.0)
        .map(|(&a, &b)| (a - b) * (a / b).ln())
        .sum()
}

/// Detached, collision-resistant per-session RNG seed.
fn session_seed(root: u64, class_idx: u64, couple: u64, session: u64) -> u64 {
    let mut x = root ^ 0x9e37_79b9_7f4a_7c15;
    for v in [class_idx, couple, session] {
        x = x.wrapping_add(v).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x ^= x >> 27;
        x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

fn sample_utterance(gt: &GroundTruth, state: usize, rng: &mut ChaCha12Rng) -> Vec<String> {
    let len = rng.gen_range(gt.utterance_len.0..=gt.utterance_len.1);
    let emission = &gt.states[state];
    let unigram = WeightedIndex::new(&emission.unigram).expect("validated distribution");
    let mut tokens = Vec::with_capacity(len);
    let mut prev = unigram.sample(rng);
    tokens.push(gt.vocab[prev].clone());
    for _ in 1..len {
        let next = match &emission.bigram {
            Some(rows) => WeightedIndex::new(&rows[prev])
                .expect("validated distribution")
                .sample(rng),
            None => unigram.sample(rng),
        };
        tokens.push(gt.vocab[next].clone());
        prev = next;
    }
    tokens
}

fn sample_session(
    gt: &GroundTruth,
    label: ClassLabel,
    couple_id: &str,
    session_id: &str,
    outcome: i32,
    rng: &mut ChaCha12Rng,
) -> Session {
    let class = gt.class(label);
    let m = rng.gen_range(gt.turns_range.0..=gt.turns_range.1);
    let mut turns = Vec::with_capacity(2 * m - 1);
    let push_turn = |speaker: Speaker, tokens: Vec<String>, turns: &mut Vec<Turn>| {
        let text = tokens.join(" ");
        turns.push(Turn { speaker, text, tokens });
    };

    let pi = WeightedIndex::new(&class.pi).expect("validated distribution");
    let rho = WeightedIndex::new(&class.rho).expect("validated distribution");
    let mut state = pi.sample(rng);
    push_turn(Speaker::Target, sample_utterance(gt, state, rng), &mut turns);
    for _ in 1..m {
        let pseudo = rho.sample(rng);
        push_turn(Speaker::Partner, sample_utterance(gt, pseudo, rng), &mut turns);
        let dist = gt.transition_distribution(label, state, pseudo);
        state = WeightedIndex::new(&dist).expect("normalized product").sample(rng);
        push_turn(Speaker::Target, sample_utterance(gt, state, rng), &mut turns);
    }

    let rating = match label {
        ClassLabel::C0 => 2.0,
        ClassLabel::C1 => 8.0,
    };
    Session {
        couple_id: couple_id.to_string(),
        session_id: session_id.to_string(),
        rated_role: "rated".to_string(),
        rating,
        outcome: Some(outcome),
        class_label: Some(label),
        turns,
    }
}

/// Sample a labeled corpus: `n_couples_per_class` couples per class with
/// `sessions_per_couple` sessions each. Fully determined by `seed`; every
/// session draws from its own derived stream, so the result does not depend
/// on sampling order.
pub fn sample_corpus(
    gt: &GroundTruth,
    n_couples_per_class: usize,
    sessions_per_couple: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    gt.validate()?;
    if n_couples_per_class == 0 || sessions_per_couple == 0 {
        return Err(Error::invalid("couple and session counts must be positive"));
    }
    let mut couples = Vec::with_capacity(2 * n_couples_per_class);
    let mut global_idx = 0usize;
    for (class_idx, label) in [(0u64, ClassLabel::C0), (1u64, ClassLabel::C1)] {
        for c in 0..n_couples_per_class {
            let couple_id = format!("c{class_idx}-{c:03}");
            let outcome = (global_idx % 4) as i32 + 1;
            global_idx += 1;
            let sessions = (0..sessions_per_couple)
                .map(|t| {
                    let mut rng = ChaCha12Rng::seed_from_u64(session_seed(
                        seed,
                        class_idx,
                        c as u64,
                        t as u64,
                    ));
                    sample_session(
                        gt,
                        label,
                        &couple_id,
                        &format!("{couple_id}-s{t}"),
                        outcome,
                        &mut rng,
                    )
                })
                .collect();
            couples.push(Couple {
                couple_id,
                sessions,
                outcome: Some(outcome),
            });
        }
    }
    Ok(LabeledDataset {
        couples,
        percentile: 20.0,
    })
}
