//! Behavior-state sequence models over conversation turns.
//!
//! Two scoring schemes share one lattice: a single-speaker chain over the
//! target's turns, and an influence-weighted extension where the target's
//! transition at each turn also conditions on a perceived partner
//! pseudo-state inferred from the partner's previous utterance. Emission
//! weights `alpha` and partner weights `beta` scale the corresponding
//! log-probability groups; the target's own previous state always carries
//! weight one. All scoring runs in the natural-log domain.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, Session};
use crate::error::{Error, Result};
use crate::ngram::LanguageModel;

/// The emission models shared by every behavior class: one language model
/// per state.
#[derive(Debug, Clone)]
pub struct StateSet {
    lms: Vec<LanguageModel>,
}

impl StateSet {
    pub fn new(lms: Vec<LanguageModel>) -> Result<Self> {
        if lms.len() < 2 {
            return Err(Error::invalid(format!(
                "a state set needs at least 2 states, got {}",
                lms.len()
            )));
        }
        Ok(StateSet { lms })
    }

    pub fn k(&self) -> usize {
        self.lms.len()
    }

    pub fn lm(&self, state: usize) -> &LanguageModel {
        &self.lms[state]
    }

    pub fn lms(&self) -> &[LanguageModel] {
        &self.lms
    }

    /// Emission log-scores of every turn under every state. Each model is
    /// scored with the boundary convention it was trained with.
    pub fn session_scores(&self, session: &Session) -> SessionScores {
        let score_turn = |tokens: &[String]| -> Vec<f64> {
            self.lms
                .iter()
                .map(|lm| lm.score(tokens, lm.boundaries()))
                .collect()
        };
        SessionScores {
            target: session.target_turns().map(|t| score_turn(&t.tokens)).collect(),
            partner: session.partner_turns().map(|t| score_turn(&t.tokens)).collect(),
        }
    }
}

/// Per-turn emission log-scores: `target[j][state]` for the `M` target
/// turns and `partner[j][state]` for the `M - 1` partner turns.
#[derive(Debug, Clone)]
pub struct SessionScores {
    pub target: Vec<Vec<f64>>,
    pub partner: Vec<Vec<f64>>,
}

impl SessionScores {
    pub fn m(&self) -> usize {
        self.target.len()
    }
}

/// Which target turns receive the partner-influence transition factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfluenceSpan {
    /// Every turn after the first (default): the last partner utterance
    /// still influences the closing target turn.
    Full,
    /// The closing target turn receives no influence factor; the final
    /// pseudo-state contributes only its own emission.
    ExceptFinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeMode {
    /// Compare classes by their best-path joint log-score (default).
    MaxPath,
    /// Compare classes by the total log-likelihood summed over all paths.
    SumForward,
}

/// Exponent pair plus decoding options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceConfig {
    pub alpha: f64,
    pub beta: f64,
    pub span: InfluenceSpan,
    pub decode_mode: DecodeMode,
}

impl InfluenceConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be finite and > 0, got {alpha}")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::invalid(format!("beta must be finite and >= 0, got {beta}")));
        }
        Ok(InfluenceConfig {
            alpha,
            beta,
            span: InfluenceSpan::Full,
            decode_mode: DecodeMode::MaxPath,
        })
    }

    /// Single-speaker configuration: `beta = 0` removes every partner term.
    pub fn single_speaker(alpha: f64) -> Result<Self> {
        Self::new(alpha, 0.0)
    }

    pub fn with_span(mut self, span: InfluenceSpan) -> Self {
        self.span = span;
        self
    }

    pub fn with_decode_mode(mut self, mode: DecodeMode) -> Self {
        self.decode_mode = mode;
        self
    }
}

/// Per-class transition tables: speaker chain `A`, partner influence `B`,
/// and initial distribution `pi`, all row-stochastic with strictly positive
/// entries. Log tables are precomputed for decoding.
#[derive(Debug, Clone)]
pub struct ClassParams {
    pub class_id: ClassLabel,
    pub k: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    /// Smoothing constant the tables were estimated with (0 for uniform).
    pub delta: f64,
    ln_a: Vec<Vec<f64>>,
    ln_b: Vec<Vec<f64>>,
    ln_pi: Vec<f64>,
}

const ROW_SUM_TOL: f64 = 1e-12;

fn check_row(row: &[f64], what: &str) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::invalid(format!("{what} sums to {sum}, expected 1")));
    }
    if row.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::invalid(format!("{what} has a non-positive entry")));
    }
    Ok(())
}

impl ClassParams {
    pub fn new(
        class_id: ClassLabel,
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        pi: Vec<f64>,
        delta: f64,
    ) -> Result<Self> {
        let k = pi.len();
        if k < 2 {
            return Err(Error::invalid("class params need at least 2 states"));
        }
        if a.len() != k || b.len() != k || a.iter().any(|r| r.len() != k) || b.iter().any(|r| r.len() != k)
        {
            return Err(Error::invalid("transition tables must be K x K"));
        }
        for (i, row) in a.iter().enumerate() {
            check_row(row, &format!("A row {i}"))?;
        }
        for (i, row) in b.iter().enumerate() {
            check_row(row, &format!("B row {i}"))?;
        }
        check_row(&pi, "pi")?;
        let ln = |rows: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r.iter().map(|x| x.ln()).collect()).collect()
        };
        let ln_a = ln(&a);
        let ln_b = ln(&b);
        let ln_pi = pi.iter().map(|x| x.ln()).collect();
        Ok(ClassParams {
            class_id,
            k,
            a,
            b,
            pi,
            delta,
            ln_a,
            ln_b,
            ln_pi,
        })
    }

    pub fn uniform(class_id: ClassLabel, k: usize) -> Self {
        let row = vec![1.0 / k as f64; k];
        Self::new(
            class_id,
            vec![row.clone(); k],
            vec![row.clone(); k],
            row,
            0.0,
        )
        .expect("uniform tables are valid")
    }

    /// Plain-text key-value serialization: `class`, `k`, `delta`, the `A`
    /// and `B` rows in order, then `pi`. Values print shortest-exact.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "class {}", self.class_id)?;
        writeln!(w, "k {}", self.k)?;
        writeln!(w, "delta {}", self.delta)?;
        for row in &self.a {
            writeln!(w, "a {}", join_floats(row))?;
        }
        for row in &self.b {
            writeln!(w, "b {}", join_floats(row))?;
        }
        writeln!(w, "pi {}", join_floats(&self.pi))?;
        w.flush()?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let reader = BufReader::new(file);
        let mut class_id = None;
        let mut k = None;
        let mut delta = 0.0;
        let mut a: Vec<Vec<f64>> = Vec::new();
        let mut b: Vec<Vec<f64>> = Vec::new();
        let mut pi: Option<Vec<f64>> = None;
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (key, rest) = t.split_once(char::is_whitespace).ok_or_else(|| {
                Error::parse(lineno, format!("expected 'key values', found {t:?}"))
            })?;
            let floats = || -> Result<Vec<f64>> {
                rest.split_whitespace()
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|_| Error::parse(lineno, format!("bad number {v:?}")))
                    })
                    .collect()
            };
            match key {
                "class" => class_id = Some(rest.trim().parse::<ClassLabel>()?),
                "k" => {
                    k = Some(rest.trim().parse::<usize>().map_err(|_| {
                        Error::parse(lineno, format!("bad state count {rest:?}"))
                    })?)
                }
                "delta" => {
                    delta = rest.trim().parse::<f64>().map_err(|_| {
                        Error::parse(lineno, format!("bad delta {rest:?}"))
                    })?
                }
                "a" => a.push(floats()?),
                "b" => b.push(floats()?),
                "pi" => pi = Some(floats()?),
                other => return Err(Error::parse(lineno, format!("unknown key {other:?}"))),
            }
        }
        let class_id = class_id.ok_or_else(|| Error::invalid("params file missing class"))?;
        let expect_k = k.ok_or_else(|| Error::invalid("params file missing k"))?;
        let pi = pi.ok_or_else(|| Error::invalid("params file missing pi"))?;
        let params = ClassParams::new(class_id, a, b, pi, delta)?;
        if params.k != expect_k {
            return Err(Error::invalid(format!(
                "params file declares k={expect_k} but rows have K={}",
                params.k
            )));
        }
        Ok(params)
    }
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Best-scoring state assignment: target states for all `M` turns, pseudo
/// states for the `M - 1` partner turns, and the joint log-score of the
/// pair of sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPath {
    pub speaker_states: Vec<usize>,
    pub pseudo_states: Vec<usize>,
    pub log_score: f64,
}

/// `w * x` with the convention that a zero weight annihilates the term even
/// when `x` is `-inf`, so weight 0 removes a factor group exactly.
#[inline]
fn wmul(w: f64, x: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * x
    }
}

fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Whether the influence factor applies on the edge into target turn
/// `pos` (1-based from the second turn, i.e. `pos` in `1..m`).
#[inline]
fn influence_edge_active(pos: usize, m: usize, span: InfluenceSpan) -> bool {
    pos < m - 1 || span == InfluenceSpan::Full
}

/// Joint log-score of the single-speaker chain: initial + transitions +
/// `alpha`-weighted emissions of the target turns. Partner turns are
/// ignored entirely.
pub fn joint_logprob_ldbm(
    sc: &SessionScores,
    cp: &ClassParams,
    alpha: f64,
    speaker: &[usize],
) -> Result<f64> {
    let m = sc.m();
    if speaker.len() != m {
        return Err(Error::invalid(format!(
            "speaker path length {} does not match {m} target turns",
            speaker.len()
        )));
    }
    let mut total = cp.ln_pi[speaker[0]] + wmul(alpha, sc.target[0][speaker[0]]);
    for j in 1..m {
        total += cp.ln_a[speaker[j - 1]][speaker[j]] + wmul(alpha, sc.target[j][speaker[j]]);
    }
    Ok(total)
}

/// Joint log-score of the influence model for a given pair of sequences:
/// initial + speaker transitions + `beta`-weighted influence factors +
/// `alpha`-weighted target emissions + `beta`-weighted partner emissions.
pub fn joint_logprob_influence(
    sc: &SessionScores,
    cp: &ClassParams,
    cfg: &InfluenceConfig,
    speaker: &[usize],
    pseudo: &[usize],
) -> Result<f64> {
    let m = sc.m();
    if speaker.len() != m || pseudo.len() + 1 != m {
        return Err(Error::invalid(format!(
            "path lengths ({}, {}) do not match turn counts ({m}, {})",
            speaker.len(),
            pseudo.len(),
            m - 1
        )));
    }
    let mut total = cp.ln_pi[speaker[0]] + wmul(cfg.alpha, sc.target[0][speaker[0]]);
    for j in 1..m {
        total += cp.ln_a[speaker[j - 1]][speaker[j]]
            + wmul(cfg.alpha, sc.target[j][speaker[j]]);
        if influence_edge_active(j, m, cfg.span) {
            total += wmul(cfg.beta, cp.ln_b[pseudo[j - 1]][speaker[j]]);
        }
    }
    for j in 0..m - 1 {
        total += wmul(cfg.beta, sc.partner[j][pseudo[j]]);
    }
    Ok(total)
}

/// Single-speaker Viterbi over the target turns. Ties prefer the lower
/// state index at the earliest differing turn.
pub fn viterbi_ldbm(sc: &SessionScores, cp: &ClassParams, alpha: f64) -> (Vec<usize>, f64) {
    let m = sc.m();
    let k = cp.k;
    assert!(m >= 1, "session has no target turns");

    // Backward pass, then a forward greedy readout so that ties resolve
    // toward the lexicographically smallest path.
    let mut suffix = vec![vec![0.0; k]; m];
    for s in 0..k {
        suffix[m - 1][s] = wmul(alpha, sc.target[m - 1][s]);
    }
    for j in (0..m - 1).rev() {
        for s in 0..k {
            let mut best = f64::NEG_INFINITY;
            for s2 in 0..k {
                let v = cp.ln_a[s][s2] + suffix[j + 1][s2];
                if v > best {
                    best = v;
                }
            }
            suffix[j][s] = wmul(alpha, sc.target[j][s]) + best;
        }
    }
    let mut path = vec![0usize; m];
    path[0] = argmax_first(|s| cp.ln_pi[s] + suffix[0][s], k);
    for j in 1..m {
        let prev = path[j - 1];
        path[j] = argmax_first(|s| cp.ln_a[prev][s] + suffix[j][s], k);
    }
    let score = joint_logprob_ldbm(sc, cp, alpha, &path).expect("path built to length");
    (path, score)
}

fn argmax_first(f: impl Fn(usize) -> f64, k: usize) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for s in 0..k {
        let v = f(s);
        if v > best {
            best = v;
            arg = s;
        }
    }
    arg
}

/// Exact joint decode over the composite lattice of (target state, pseudo
/// state) pairs. Ties prefer the lower state index, earlier positions
/// first, with the target state of a turn deciding before its pseudo state.
pub fn viterbi_influence(
    sc: &SessionScores,
    cp: &ClassParams,
    cfg: &InfluenceConfig,
) -> DecodedPath {
    let m = sc.m();
    let k = cp.k;
    assert!(m >= 1, "session has no target turns");
    debug_assert_eq!(sc.partner.len(), m - 1);

    if m == 1 {
        let s0 = argmax_first(|s| cp.ln_pi[s] + wmul(cfg.alpha, sc.target[0][s]), k);
        let speaker = vec![s0];
        let log_score = joint_logprob_influence(sc, cp, cfg, &speaker, &[]).unwrap();
        return DecodedPath {
            speaker_states: speaker,
            pseudo_states: Vec::new(),
            log_score,
        };
    }

    // suffix value of the final (target-only) step.
    let mut last = vec![0.0; k];
    for s in 0..k {
        last[s] = wmul(cfg.alpha, sc.target[m - 1][s]);
    }
    // comp[j][s * k + p]: best suffix score from composite step j onward,
    // including the step's own emissions.
    let mut comp = vec![vec![f64::NEG_INFINITY; k * k]; m - 1];
    for j in (0..m - 1).rev() {
        for s in 0..k {
            let own_s = wmul(cfg.alpha, sc.target[j][s]);
            for p in 0..k {
                let own = own_s + wmul(cfg.beta, sc.partner[j][p]);
                let mut best = f64::NEG_INFINITY;
                if j == m - 2 {
                    let b_active = influence_edge_active(m - 1, m, cfg.span);
                    for s2 in 0..k {
                        let mut edge = cp.ln_a[s][s2];
                        if b_active {
                            edge += wmul(cfg.beta, cp.ln_b[p][s2]);
                        }
                        let v = edge + last[s2];
                        if v > best {
                            best = v;
                        }
                    }
                } else {
                    for s2 in 0..k {
                        let edge = cp.ln_a[s][s2] + wmul(cfg.beta, cp.ln_b[p][s2]);
                        for p2 in 0..k {
                            let v = edge + comp[j + 1][s2 * k + p2];
                            if v > best {
                                best = v;
                            }
                        }
                    }
                }
                comp[j][s * k + p] = own + best;
            }
        }
    }

    // Forward readout; composite index order (s, then p) matches the
    // documented tie-break.
    let mut speaker = vec![0usize; m];
    let mut pseudo = vec![0usize; m - 1];
    let first = argmax_first(|c| cp.ln_pi[c / k] + comp[0][c], k * k);
    speaker[0] = first / k;
    pseudo[0] = first % k;
    for j in 0..m - 1 {
        let (s, p) = (speaker[j], pseudo[j]);
        if j == m - 2 {
            let b_active = influence_edge_active(m - 1, m, cfg.span);
            speaker[m - 1] = argmax_first(
                |s2| {
                    let mut edge = cp.ln_a[s][s2];
                    if b_active {
                        edge += wmul(cfg.beta, cp.ln_b[p][s2]);
                    }
                    edge + last[s2]
                },
                k,
            );
        } else {
            let next = argmax_first(
                |c| {
                    let (s2, p2) = (c / k, c % k);
                    cp.ln_a[s][s2] + wmul(cfg.beta, cp.ln_b[p][s2]) + comp[j + 1][s2 * k + p2]
                },
                k * k,
            );
            speaker[j + 1] = next / k;
            pseudo[j + 1] = next % k;
        }
    }

    let log_score = joint_logprob_influence(sc, cp, cfg, &speaker, &pseudo).unwrap();
    DecodedPath {
        speaker_states: speaker,
        pseudo_states: pseudo,
        log_score,
    }
}

/// Same contract as [`viterbi_influence`], but run over target states only.
///
/// A pseudo state couples to nothing but its own emission and the next
/// target state, so each one can be maximized per edge:
/// `p_j* = argmax_p beta * (ln B(p, s_{j+1}) + score(lm_p, U_p^j))`, the
/// final pseudo state maximizing only its emission when its influence
/// factor is out of span.
pub fn viterbi_influence_reduced(
    sc: &SessionScores,
    cp: &ClassParams,
    cfg: &InfluenceConfig,
) -> DecodedPath {
    let m = sc.m();
    let k = cp.k;
    assert!(m >= 1, "session has no target turns");

    if m == 1 {
        return viterbi_influence(sc, cp, cfg);
    }

    // infl[j][s2]: best pseudo contribution on the edge into target turn
    // j+1 when its influence factor applies.
    let mut infl = vec![vec![f64::NEG_INFINITY; k]; m - 1];
    for j in 0..m - 1 {
        for s2 in 0..k {
            infl[j][s2] = (0..k)
                .map(|p| wmul(cfg.beta, cp.ln_b[p][s2] + sc.partner[j][p]))
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    // Emission-only fallback for an out-of-span final pseudo state.
    let infl_end: Vec<f64> = if m >= 2 {
        vec![(0..k)
            .map(|p| wmul(cfg.beta, sc.partner[m - 2][p]))
            .fold(f64::NEG_INFINITY, f64::max)]
    } else {
        Vec::new()
    };

    let edge_infl = |j: usize, s2: usize| -> f64 {
        if influence_edge_active(j + 1, m, cfg.span) {
            infl[j][s2]
        } else {
            infl_end[0]
        }
    };

    let mut suffix = vec![vec![0.0; k]; m];
    for s in 0..k {
        suffix[m - 1][s] = wmul(cfg.alpha, sc.target[m - 1][s]);
    }
    for j in (0..m - 1).rev() {
        for s in 0..k {
            let mut best = f64::NEG_INFINITY;
            for s2 in 0..k {
                let v = cp.ln_a[s][s2] + edge_infl(j, s2) + suffix[j + 1][s2];
                if v > best {
                    best = v;
                }
            }
            suffix[j][s] = wmul(cfg.alpha, sc.target[j][s]) + best;
        }
    }

    let mut speaker = vec![0usize; m];
    speaker[0] = argmax_first(|s| cp.ln_pi[s] + suffix[0][s], k);
    for j in 0..m - 1 {
        let prev = speaker[j];
        speaker[j + 1] = argmax_first(|s2| cp.ln_a[prev][s2] + edge_infl(j, s2) + suffix[j + 1][s2], k);
    }

    let mut pseudo = vec![0usize; m - 1];
    for j in 0..m - 1 {
        let s2 = speaker[j + 1];
        pseudo[j] = if influence_edge_active(j + 1, m, cfg.span) {
            argmax_first(|p| wmul(cfg.beta, cp.ln_b[p][s2] + sc.partner[j][p]), k)
        } else {
            argmax_first(|p| wmul(cfg.beta, sc.partner[j][p]), k)
        };
    }

    let log_score = joint_logprob_influence(sc, cp, cfg, &speaker, &pseudo).unwrap();
    DecodedPath {
        speaker_states: speaker,
        pseudo_states: pseudo,
        log_score,
    }
}

/// Log of the likelihood summed over every (target, pseudo) sequence pair,
/// computed stably over the composite lattice. Always at least the
/// best-path score.
pub fn forward_loglik(sc: &SessionScores, cp: &ClassParams, cfg: &InfluenceConfig) -> f64 {
    let m = sc.m();
    let k = cp.k;
    assert!(m >= 1, "session has no target turns");

    if m == 1 {
        let vals: Vec<f64> = (0..k)
            .map(|s| cp.ln_pi[s] + wmul(cfg.alpha, sc.target[0][s]))
            .collect();
        return logsumexp(&vals);
    }

    let mut f = vec![0.0; k * k];
    for s in 0..k {
        for p in 0..k {
            f[s * k + p] = cp.ln_pi[s]
                + wmul(cfg.alpha, sc.target[0][s])
                + wmul(cfg.beta, sc.partner[0][p]);
        }
    }
    let mut incoming = vec![f64::NEG_INFINITY; k * k];
    for j in 1..m - 1 {
        let mut f2 = vec![f64::NEG_INFINITY; k * k];
        for s2 in 0..k {
            for (c, inc) in incoming.iter_mut().enumerate() {
                let (s, p) = (c / k, c % k);
                *inc = f[c] + cp.ln_a[s][s2] + wmul(cfg.beta, cp.ln_b[p][s2]);
            }
            let base = logsumexp(&incoming) + wmul(cfg.alpha, sc.target[j][s2]);
            for p2 in 0..k {
                f2[s2 * k + p2] = base + wmul(cfg.beta, sc.partner[j][p2]);
            }
        }
        f = f2;
    }
    let b_active = influence_edge_active(m - 1, m, cfg.span);
    let mut finals = vec![f64::NEG_INFINITY; k];
    for (s2, fin) in finals.iter_mut().enumerate() {
        for (c, inc) in incoming.iter_mut().enumerate() {
            let (s, p) = (c / k, c % k);
            let mut edge = cp.ln_a[s][s2];
            if b_active {
                edge += wmul(cfg.beta, cp.ln_b[p][s2]);
            }
            *inc = f[c] + edge;
        }
        *fin = logsumexp(&incoming) + wmul(cfg.alpha, sc.target[m - 1][s2]);
    }
    logsumexp(&finals)
}

/// Pick the class whose model best explains the session. Returns the label
/// and both class scores; an exact tie goes to C0.
pub fn classify(
    sc: &SessionScores,
    params_c0: &ClassParams,
    params_c1: &ClassParams,
    cfg: &InfluenceConfig,
) -> (ClassLabel, f64, f64) {
    let score = |cp: &ClassParams| match cfg.decode_mode {
        DecodeMode::MaxPath => viterbi_influence_reduced(sc, cp, cfg).log_score,
        DecodeMode::SumForward => forward_loglik(sc, cp, cfg),
    };
    let s0 = score(params_c0);
    let s1 = score(params_c1);
    let label = if s1 > s0 { ClassLabel::C1 } else { ClassLabel::C0 };
    (label, s0, s1)
}

/// Convenience wrapper scoring the session under the shared state set
/// first.
pub fn classify_session(
    session: &Session,
    states: &StateSet,
    params_c0: &ClassParams,
    params_c1: &ClassParams,
    cfg: &InfluenceConfig,
) -> (ClassLabel, f64, f64) {
    let sc = states.session_scores(session);
    classify(&sc, params_c0, params_c1, cfg)
}

/// Estimate class transition tables from decoded paths with add-delta
/// smoothing: `A(i,j) = (c(i->j) + delta) / (c(i) + K * delta)`, `B` from
/// (pseudo state, next target state) pairs, and `pi` either uniform or
/// from first-state counts.
pub fn estimate_transitions(
    decoded: &[DecodedPath],
    class_id: ClassLabel,
    k: usize,
    delta: f64,
    pi_from_counts: bool,
) -> Result<ClassParams> {
    if decoded.is_empty() {
        return Err(Error::invalid("cannot estimate transitions from an empty path list"));
    }
    if delta <= 0.0 {
        return Err(Error::invalid(format!("delta must be > 0, got {delta}")));
    }
    let mut a_counts = vec![vec![0u64; k]; k];
    let mut b_counts = vec![vec![0u64; k]; k];
    let mut pi_counts = vec![0u64; k];
    for path in decoded {
        let sp = &path.speaker_states;
        pi_counts[sp[0]] += 1;
        for w in sp.windows(2) {
            a_counts[w[0]][w[1]] += 1;
        }
        for (j, &p) in path.pseudo_states.iter().enumerate() {
            b_counts[p][sp[j + 1]] += 1;
        }
    }
    let smooth = |counts: &[Vec<u64>]| -> Vec<Vec<f64>> {
        counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                let denom = total as f64 + k as f64 * delta;
                row.iter().map(|&c| (c as f64 + delta) / denom).collect()
            })
            .collect()
    };
    let a = smooth(&a_counts);
    let b = smooth(&b_counts);
    let pi = if pi_from_counts {
        let total: u64 = pi_counts.iter().sum();
        let denom = total as f64 + k as f64 * delta;
        pi_counts.iter().map(|&c| (c as f64 + delta) / denom).collect()
    } else {
        vec![1.0 / k as f64; k]
    };
    ClassParams::new(class_id, a, b, pi, delta)
}
