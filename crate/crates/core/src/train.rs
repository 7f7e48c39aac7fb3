//! Hard-EM training of the state emission models plus per-class transition
//! estimation.
//!
//! State models start from the session class labels (every turn of a C0
//! session seeds state 0, C1 seeds state 1). Each iteration decodes every
//! training session with the current models under uniform transitions,
//! reassigns turns to their decoded states, and retrains both state models
//! on the pooled reassignments. Transitions stay uniform throughout EM and
//! are estimated once per class after convergence.

use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, LabeledDataset, Session};
use crate::error::{Error, Result};
use crate::exec::run_jobs;
use crate::hmm::{
    estimate_transitions, viterbi_influence_reduced, ClassParams, DecodedPath, InfluenceConfig,
    StateSet,
};
use crate::ngram::{train_lm, LanguageModel, Smoothing};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Upper bound on EM iterations.
    pub max_iters: usize,
    /// Stop once the fraction of reassigned turns falls below this.
    pub converge_frac: f64,
    /// Pool partner turns (under their decoded pseudo-states) into state
    /// model retraining.
    pub include_partner_in_lm: bool,
    /// Add-delta smoothing for transition estimation.
    pub delta: f64,
    pub lm_order: usize,
    pub smoothing: Smoothing,
    /// Train and score turns with sentence boundary markers.
    pub boundaries: bool,
    /// Estimate the initial distribution from decoded first states instead
    /// of leaving it uniform.
    pub pi_from_counts: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iters: 10,
            converge_frac: 0.01,
            include_partner_in_lm: true,
            delta: 1.0,
            lm_order: 2,
            smoothing: Smoothing::WittenBell,
            boundaries: true,
            pi_from_counts: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.converge_frac) {
            return Err(Error::invalid(format!(
                "converge_frac must be in [0, 1), got {}",
                self.converge_frac
            )));
        }
        if self.delta <= 0.0 {
            return Err(Error::invalid(format!("delta must be > 0, got {}", self.delta)));
        }
        if !(1..=3).contains(&self.lm_order) {
            return Err(Error::invalid(format!(
                "lm_order must be 1, 2 or 3, got {}",
                self.lm_order
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterationStats {
    /// Sum over training sessions of the decoded best-path joint log-score
    /// under the iteration's input models and uniform transitions.
    pub objective: f64,
    /// Fraction of previously assigned turns that changed state.
    pub reassigned_frac: f64,
}

/// Output of training: the shared state set, per-class transition tables,
/// the influence configuration used, and the iteration log.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub states: StateSet,
    pub c0: ClassParams,
    pub c1: ClassParams,
    pub config: InfluenceConfig,
    pub log: Vec<IterationStats>,
    /// Objective of the post-convergence decode that feeds transition
    /// estimation.
    pub final_objective: f64,
}

fn labeled_sessions(train: &LabeledDataset) -> Result<Vec<(&Session, ClassLabel)>> {
    let mut out = Vec::new();
    for s in train.sessions() {
        let label = s.class_label.ok_or_else(|| {
            Error::invalid(format!("session {} has no class label", s.session_id))
        })?;
        out.push((s, label));
    }
    if out.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    Ok(out)
}

/// Initial state models: state 0 from all rated-speaker turns of C0
/// sessions, state 1 from C1 sessions. Partner turns carry no label and
/// are excluded here.
pub fn init_state_lms(train: &LabeledDataset, cfg: &TrainConfig) -> Result<StateSet> {
    cfg.validate()?;
    let sessions = labeled_sessions(train)?;
    let mut pools: [Vec<&[String]>; 2] = [Vec::new(), Vec::new()];
    for (session, label) in &sessions {
        let idx = match label {
            ClassLabel::C0 => 0,
            ClassLabel::C1 => 1,
        };
        for turn in session.target_turns() {
            pools[idx].push(&turn.tokens);
        }
    }
    let mut lms = Vec::with_capacity(2);
    for (idx, pool) in pools.iter().enumerate() {
        if pool.is_empty() {
            return Err(Error::invalid(format!(
                "class C{idx} has no rated-speaker turns to initialize state {idx}"
            )));
        }
        lms.push(train_lm(pool, cfg.lm_order, cfg.smoothing, cfg.boundaries)?);
    }
    StateSet::new(lms)
}

struct Assignments {
    /// Per session, per target turn.
    target: Vec<Vec<usize>>,
    /// Per session, per partner turn; empty until the first E-step when
    /// partner turns participate.
    partner: Vec<Vec<usize>>,
}

fn retrain_states(
    sessions: &[(&Session, ClassLabel)],
    assign: &Assignments,
    include_partner: bool,
    old: StateSet,
    cfg: &TrainConfig,
) -> Result<StateSet> {
    let k = old.k();
    let mut pools: Vec<Vec<&[String]>> = vec![Vec::new(); k];
    for (i, (session, _)) in sessions.iter().enumerate() {
        for (turn, &state) in session.target_turns().zip(&assign.target[i]) {
            pools[state].push(&turn.tokens);
        }
        if include_partner {
            for (turn, &state) in session.partner_turns().zip(&assign.partner[i]) {
                pools[state].push(&turn.tokens);
            }
        }
    }
    let mut lms: Vec<LanguageModel> = Vec::with_capacity(k);
    for (state, pool) in pools.iter().enumerate() {
        if pool.is_empty() {
            log::warn!("state {state} received no utterances; carrying its model forward");
            lms.push(old.lm(state).clone());
        } else {
            lms.push(train_lm(pool, cfg.lm_order, cfg.smoothing, cfg.boundaries)?);
        }
    }
    StateSet::new(lms)
}

fn decode_all(
    sessions: &[(&Session, ClassLabel)],
    states: &StateSet,
    uniform: &ClassParams,
    inf: &InfluenceConfig,
) -> Vec<DecodedPath> {
    run_jobs(sessions.len(), |i| {
        let sc = states.session_scores(sessions[i].0);
        viterbi_influence_reduced(&sc, uniform, inf)
    })
}

/// Iterative hard-EM training followed by per-class transition estimation.
pub fn hard_em(
    train: &LabeledDataset,
    cfg: &TrainConfig,
    inf: &InfluenceConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let sessions = labeled_sessions(train)?;
    let mut states = init_state_lms(train, cfg)?;
    let k = states.k();
    let uniform = ClassParams::uniform(ClassLabel::C0, k);

    let mut assign = Assignments {
        target: sessions
            .iter()
            .map(|(s, label)| {
                let init = match label {
                    ClassLabel::C0 => 0,
                    ClassLabel::C1 => 1,
                };
                vec![init; s.target_count()]
            })
            .collect(),
        partner: vec![Vec::new(); sessions.len()],
    };

    let mut log = Vec::new();
    for _iter in 0..cfg.max_iters {
        let paths = decode_all(&sessions, &states, &uniform, inf);
        let objective: f64 = paths.iter().map(|p| p.log_score).sum();

        // Reassignment fraction over turns that had a previous assignment;
        // partner turns enter the comparison once they have been assigned.
        let mut changed = 0usize;
        let mut compared = 0usize;
        for (i, path) in paths.iter().enumerate() {
            for (old, new) in assign.target[i].iter().zip(&path.speaker_states) {
                compared += 1;
                if old != new {
                    changed += 1;
                }
            }
            for (old, new) in assign.partner[i].iter().zip(&path.pseudo_states) {
                compared += 1;
                if old != new {
                    changed += 1;
                }
            }
            assign.target[i] = path.speaker_states.clone();
            if cfg.include_partner_in_lm {
                assign.partner[i] = path.pseudo_states.clone();
            }
        }
        let frac = if compared == 0 {
            0.0
        } else {
            changed as f64 / compared as f64
        };

        states = retrain_states(&sessions, &assign, cfg.include_partner_in_lm, states, cfg)?;
        log.push(IterationStats {
            objective,
            reassigned_frac: frac,
        });
        if frac < cfg.converge_frac {
            break;
        }
    }

    // Final decode with the converged models feeds transition estimation,
    // split per class.
    let paths = decode_all(&sessions, &states, &uniform, inf);
    let final_objective: f64 = paths.iter().map(|p| p.log_score).sum();
    let mut c0_paths = Vec::new();
    let mut c1_paths = Vec::new();
    for ((_, label), path) in sessions.iter().zip(paths) {
        match label {
            ClassLabel::C0 => c0_paths.push(path),
            ClassLabel::C1 => c1_paths.push(path),
        }
    }
    let c0 = estimate_transitions(&c0_paths, ClassLabel::C0, k, cfg.delta, cfg.pi_from_counts)?;
    let c1 = estimate_transitions(&c1_paths, ClassLabel::C1, k, cfg.delta, cfg.pi_from_counts)?;

    Ok(TrainedModel {
        states,
        c0,
        c1,
        config: *inf,
        log,
        final_objective,
    })
}

/// Train at a dev-selected configuration: composition of [`init_state_lms`]
/// and [`hard_em`].
pub fn train_full(
    train: &LabeledDataset,
    selected: &InfluenceConfig,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    hard_em(train, cfg, selected)
}

/// Manifest stored next to the model files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub k: usize,
    pub train_config: TrainConfig,
    pub influence: InfluenceConfig,
    pub log: Vec<IterationStats>,
    pub final_objective: f64,
}

/// Persist a trained model: one ARPA file per state (`s0.arpa`, ...),
/// one params file per class (`c0.params`, `c1.params`), and
/// `manifest.json`.
pub fn save_model(dir: &std::path::Path, model: &TrainedModel, cfg: &TrainConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, lm) in model.states.lms().iter().enumerate() {
        crate::ngram::arpa::write_arpa(lm, &dir.join(format!("s{i}.arpa")))?;
    }
    model.c0.write_file(&dir.join("c0.params"))?;
    model.c1.write_file(&dir.join("c1.params"))?;
    let manifest = ModelManifest {
        k: model.states.k(),
        train_config: *cfg,
        influence: model.config,
        log: model.log.clone(),
        final_objective: model.final_objective,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Computation(format!("serialize manifest: {e}")))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

/// Load a model directory written by [`save_model`].
pub fn load_model(dir: &std::path::Path) -> Result<(TrainedModel, TrainConfig)> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: ModelManifest = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("malformed manifest.json: {e}")))?;
    let mut lms = Vec::with_capacity(manifest.k);
    for i in 0..manifest.k {
        lms.push(crate::ngram::arpa::read_arpa(&dir.join(format!("s{i}.arpa")))?);
    }
    let states = StateSet::new(lms)?;
    let c0 = ClassParams::read_file(&dir.join("c0.params"))?;
    let c1 = ClassParams::read_file(&dir.join("c1.params"))?;
    Ok((
        TrainedModel {
            states,
            c0,
            c1,
            config: manifest.influence,
            log: manifest.log.clone(),
            final_objective: manifest.final_objective,
        },
        manifest.train_config,
    ))
}
