//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Run with `cargo test -p dyad-cli --test acceptance -- --nocapture` to see
//! the per-criterion lines; the heavier end-to-end criteria take a few
//! minutes in total.

use std::collections::BTreeMap;
use std::process::Command;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use dyad_core::corpus::{ClassLabel, Session, Speaker, Turn};
use dyad_core::experiments::{
    run_nested_locco, DevAccuracyTable, DevMode, GridPoint, ParamGrid, Variant,
};
use dyad_core::hmm::{
    classify, forward_loglik, joint_logprob_influence, joint_logprob_ldbm, viterbi_influence,
    viterbi_influence_reduced, viterbi_ldbm, ClassParams, InfluenceConfig, InfluenceSpan,
    SessionScores, StateSet,
};
use dyad_core::ngram::{arpa, train_lm, LanguageModel, Smoothing, TokenId, UNK};
use dyad_core::outcomes::{build_config_histogram, fit_gaussian, to_gamma_histogram};
use dyad_core::synth::{sample_corpus, symmetric_kl, ClassDynamics, GroundTruth, StateEmission};
use dyad_core::train::{hard_em, TrainConfig};

const GRID7: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0];

// ---------------------------------------------------------------------------
// Shared instance generation: emission scores from real trained models over
// a vocabulary of at most five tokens, random transition tables, random
// sessions with one to four target turns.
// ---------------------------------------------------------------------------

struct Instance {
    sc: SessionScores,
    cp: ClassParams,
    cfg: InfluenceConfig,
}

fn random_row(rng: &mut ChaCha12Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let mut row: Vec<f64> = raw.iter().map(|x| x / sum).collect();
    let tail: f64 = row[1..].iter().sum();
    row[0] = 1.0 - tail; // exact row sum for validation
    row
}

fn random_params(rng: &mut ChaCha12Rng, k: usize) -> ClassParams {
    ClassParams::new(
        ClassLabel::C0,
        (0..k).map(|_| random_row(rng, k)).collect(),
        (0..k).map(|_| random_row(rng, k)).collect(),
        random_row(rng, k),
        1.0,
    )
    .unwrap()
}

fn random_lm(rng: &mut ChaCha12Rng, vocab: &[&str], order: usize) -> LanguageModel {
    let utts: Vec<Vec<String>> = (0..rng.gen_range(2..6))
        .map(|_| {
            (0..rng.gen_range(1..5))
                .map(|_| vocab[rng.gen_range(0..vocab.len())].to_string())
                .collect()
        })
        .collect();
    let refs: Vec<&[String]> = utts.iter().map(|u| u.as_slice()).collect();
    train_lm(&refs, order, Smoothing::WittenBell, true).unwrap()
}

fn random_session(rng: &mut ChaCha12Rng, vocab: &[&str], m: usize) -> Session {
    let mut turns = Vec::new();
    for j in 0..(2 * m - 1) {
        let speaker = if j % 2 == 0 { Speaker::Target } else { Speaker::Partner };
        let tokens: Vec<String> = (0..rng.gen_range(1..4))
            .map(|_| vocab[rng.gen_range(0..vocab.len())].to_string())
            .collect();
        turns.push(Turn {
            speaker,
            text: tokens.join(" "),
            tokens,
        });
    }
    Session {
        couple_id: "x".into(),
        session_id: "x-s".into(),
        rated_role: "rated".into(),
        rating: 5.0,
        outcome: None,
        class_label: None,
        turns,
    }
}

fn make_instances(n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let full_vocab = ["a", "b", "c", "d", "e"];
    (0..n)
        .map(|i| {
            let vs = rng.gen_range(2..=5);
            let vocab = &full_vocab[..vs];
            let order = rng.gen_range(1..=2);
            let lms = vec![random_lm(&mut rng, vocab, order), random_lm(&mut rng, vocab, order)];
            let states = StateSet::new(lms).unwrap();
            let m = rng.gen_range(1..=4);
            let session = random_session(&mut rng, vocab, m);
            let sc = states.session_scores(&session);
            let cp = random_params(&mut rng, 2);
            let span = if i % 2 == 0 { InfluenceSpan::Full } else { InfluenceSpan::ExceptFinal };
            let cfg = InfluenceConfig::new(
                GRID7[rng.gen_range(0..7)],
                GRID7[rng.gen_range(0..7)],
            )
            .unwrap()
            .with_span(span);
            Instance { sc, cp, cfg }
        })
        .collect()
}

/// Independent evaluation of the joint log-score: sums the five factor
/// groups straight from the probability tables.
fn oracle_joint(
    sc: &SessionScores,
    cp: &ClassParams,
    cfg: &InfluenceConfig,
    speaker: &[usize],
    pseudo: &[usize],
) -> f64 {
    let m = sc.target.len();
    let mut total = cp.pi[speaker[0]].ln();
    for j in 1..m {
        total += cp.a[speaker[j - 1]][speaker[j]].ln();
    }
    let b_limit = match cfg.span {
        InfluenceSpan::Full => m,
        InfluenceSpan::ExceptFinal => m - 1,
    };
    for j in 1..b_limit {
        total += cfg.beta * cp.b[pseudo[j - 1]][speaker[j]].ln();
    }
    for j in 0..m {
        total += cfg.alpha * sc.target[j][speaker[j]];
    }
    for j in 0..m - 1 {
        total += cfg.beta * sc.partner[j][pseudo[j]];
    }
    total
}

/// Brute force over all `2^M * 2^(M-1)` sequence pairs.
fn enumerate_paths(m: usize, k: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let digits = 2 * m - 1;
    let total = k.pow(digits as u32);
    let mut out = Vec::with_capacity(total);
    for mut code in 0..total {
        let mut interleaved = vec![0usize; digits];
        for slot in (0..digits).rev() {
            interleaved[slot] = code % k;
            code /= k;
        }
        let mut speaker = Vec::with_capacity(m);
        let mut pseudo = Vec::with_capacity(m - 1);
        for (i, &d) in interleaved.iter().enumerate() {
            if i % 2 == 0 {
                speaker.push(d);
            } else {
                pseudo.push(d);
            }
        }
        out.push((speaker, pseudo));
    }
    out
}

// ---------------------------------------------------------------------------
// Criterion 1: composite decoder matches brute-force enumeration.
// ---------------------------------------------------------------------------

#[test]
fn c1_decoder_matches_brute_force() {
    let started = Instant::now();
    let instances = make_instances(200, 1001);
    assert_eq!(instances.len(), 200);
    for inst in &instances {
        let m = inst.sc.target.len();
        let decoded = viterbi_influence(&inst.sc, &inst.cp, &inst.cfg);
        let best = enumerate_paths(m, 2)
            .into_iter()
            .map(|(sp, ps)| oracle_joint(&inst.sc, &inst.cp, &inst.cfg, &sp, &ps))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            (decoded.log_score - best).abs() <= 1e-9,
            "decoder {} vs enumeration {best}",
            decoded.log_score
        );
        // The reported score is the recomputable joint of the returned path.
        let recheck = oracle_joint(
            &inst.sc,
            &inst.cp,
            &inst.cfg,
            &decoded.speaker_states,
            &decoded.pseudo_states,
        );
        assert!((decoded.log_score - recheck).abs() <= 1e-9);
        // The total-likelihood companion dominates the best path and matches
        // the enumerated sum, up to roundoff at the working magnitude
        // (scores reach ~1e4 nats at alpha = beta = 1000).
        let fwd = forward_loglik(&inst.sc, &inst.cp, &inst.cfg);
        let sum = {
            let scores: Vec<f64> = enumerate_paths(m, 2)
                .into_iter()
                .map(|(sp, ps)| oracle_joint(&inst.sc, &inst.cp, &inst.cfg, &sp, &ps))
                .collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            mx + scores.iter().map(|s| (s - mx).exp()).sum::<f64>().ln()
        };
        let slack = 1e-9 * (1.0 + decoded.log_score.abs());
        assert!(
            fwd >= decoded.log_score - slack,
            "sum over paths {fwd} below best path {}",
            decoded.log_score
        );
        assert!((fwd - sum).abs() <= slack, "forward {fwd} vs enumerated sum {sum}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "oracle run took {elapsed:?}");
    println!(
        "[PASS] criterion 1: decoder equals brute-force max on 200 instances ({elapsed:?})"
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: beta = 0 reduces the influence model to the single-speaker
// chain, for scores and for classification decisions.
// ---------------------------------------------------------------------------

#[test]
fn c2_beta_zero_reduces_to_single_speaker() {
    let mut rng = ChaCha12Rng::seed_from_u64(1002);
    let vocab = ["a", "b", "c", "d"];
    for _ in 0..100 {
        let lms = vec![random_lm(&mut rng, &vocab, 1), random_lm(&mut rng, &vocab, 1)];
        let states = StateSet::new(lms).unwrap();
        let m = rng.gen_range(1..=4);
        let session = random_session(&mut rng, &vocab, m);
        let sc = states.session_scores(&session);
        let c0 = random_params(&mut rng, 2);
        let c1 = random_params(&mut rng, 2);
        let alpha = GRID7[rng.gen_range(0..7)];
        let cfg = InfluenceConfig::new(alpha, 0.0).unwrap();

        // Joint scores agree for arbitrary paths.
        let speaker: Vec<usize> = (0..m).map(|_| rng.gen_range(0..2)).collect();
        let pseudo: Vec<usize> = (0..m - 1).map(|_| rng.gen_range(0..2)).collect();
        let joint = joint_logprob_influence(&sc, &c0, &cfg, &speaker, &pseudo).unwrap();
        let chain = joint_logprob_ldbm(&sc, &c0, alpha, &speaker).unwrap();
        assert!(
            (joint - chain).abs() <= 1e-12,
            "beta=0 joint {joint} != chain {chain}"
        );

        // Classification decisions agree with the single-speaker decoder.
        let (label, s0, s1) = classify(&sc, &c0, &c1, &cfg);
        let (_, l0) = viterbi_ldbm(&sc, &c0, alpha);
        let (_, l1) = viterbi_ldbm(&sc, &c1, alpha);
        assert_eq!(s0, l0);
        assert_eq!(s1, l1);
        let expected = if l1 > l0 { ClassLabel::C1 } else { ClassLabel::C0 };
        assert_eq!(label, expected);
    }
    println!("[PASS] criterion 2: beta=0 reduction exact on 100 random sessions");
}

// ---------------------------------------------------------------------------
// Criterion 3: the speaker-lattice decoder matches the composite decoder.
// ---------------------------------------------------------------------------

#[test]
fn c3_reduced_decoder_equivalent() {
    let instances = make_instances(200, 1001);
    for inst in &instances {
        let full = viterbi_influence(&inst.sc, &inst.cp, &inst.cfg);
        let reduced = viterbi_influence_reduced(&inst.sc, &inst.cp, &inst.cfg);
        assert!(
            (full.log_score - reduced.log_score).abs() <= 1e-9,
            "composite {} vs reduced {}",
            full.log_score,
            reduced.log_score
        );
    }
    println!("[PASS] criterion 3: reduced decoder matches composite on 200 instances");
}

// ---------------------------------------------------------------------------
// Criterion 4: language-model correctness.
// ---------------------------------------------------------------------------

#[test]
fn c4_language_model_correctness() {
    let mut rng = ChaCha12Rng::seed_from_u64(1004);
    let vocab = ["u", "v", "w", "x", "y", "z"];

    // Hand-computed Witten-Bell unigram: counts a=2, b=1 over {a, b, unk}.
    let utts = vec![vec!["a".to_string(), "a".to_string(), "b".to_string()]];
    let refs: Vec<&[String]> = utts.iter().map(|u| u.as_slice()).collect();
    let lm = train_lm(&refs, 1, Smoothing::WittenBell, false).unwrap();
    let a = lm.vocab().lookup("a");
    let b = lm.vocab().lookup("b");
    assert!((lm.logprob(&[], a).exp() - 8.0 / 15.0).abs() <= 1e-9);
    assert!((lm.logprob(&[], b).exp() - 5.0 / 15.0).abs() <= 1e-9);
    assert!((lm.logprob(&[], UNK).exp() - 2.0 / 15.0).abs() <= 1e-9);

    for order in 1..=3usize {
        for boundaries in [false, true] {
            let utts: Vec<Vec<String>> = (0..25)
                .map(|_| {
                    (0..rng.gen_range(1..=7))
                        .map(|_| vocab[rng.gen_range(0..vocab.len())].to_string())
                        .collect()
                })
                .collect();
            let refs: Vec<&[String]> = utts.iter().map(|u| u.as_slice()).collect();
            let lm = train_lm(&refs, order, Smoothing::WittenBell, boundaries).unwrap();

            // Normalization at 50 random contexts (seen and unseen mixes).
            let ids: Vec<TokenId> = vocab.iter().map(|t| lm.vocab().lookup(t)).collect();
            for _ in 0..50 {
                let len = rng.gen_range(0..order);
                let ctx: Vec<TokenId> = (0..len)
                    .map(|_| {
                        if rng.gen_bool(0.2) {
                            UNK
                        } else {
                            ids[rng.gen_range(0..ids.len())]
                        }
                    })
                    .collect();
                let mass = lm.conditional_mass(&ctx);
                assert!(
                    (mass - 1.0).abs() <= 1e-6,
                    "order {order} boundaries {boundaries}: mass {mass} at context {ctx:?}"
                );
            }

            // ARPA round trip drift is below 1e-6 per token.
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("model.arpa");
            arpa::write_arpa(&lm, &path).unwrap();
            let back = arpa::read_arpa(&path).unwrap();
            for _ in 0..30 {
                let sent: Vec<String> = (0..rng.gen_range(1..=10))
                    .map(|_| vocab[rng.gen_range(0..vocab.len())].to_string())
                    .collect();
                let drift = (back.score(&sent, boundaries) - lm.score(&sent, boundaries)).abs();
                assert!(
                    drift <= 1e-6 * sent.len() as f64,
                    "round-trip drift {drift} on {} tokens",
                    sent.len()
                );
            }
        }
    }
    println!("[PASS] criterion 4: LM normalization, ARPA round trip, hand-computed smoothing");
}

// ---------------------------------------------------------------------------
// Criterion 5: hard-EM objective monotonicity with MLE emissions.
// ---------------------------------------------------------------------------

#[test]
fn c5_hard_em_monotone_with_mle() {
    let mut rng = ChaCha12Rng::seed_from_u64(1005);
    let vocab = ["a", "b", "c", "d"];
    for trial in 0..6 {
        let mut sessions = Vec::new();
        for couple in 0..4 {
            for sess in 0..2 {
                let m = rng.gen_range(2..=5);
                let turns: Vec<Turn> = (0..(2 * m - 1))
                    .map(|j| {
                        let speaker = if j % 2 == 0 { Speaker::Target } else { Speaker::Partner };
                        let tokens: Vec<String> = (0..rng.gen_range(1..=4))
                            .map(|_| vocab[rng.gen_range(0..vocab.len())].to_string())
                            .collect();
                        Turn {
                            speaker,
                            text: tokens.join(" "),
                            tokens,
                        }
                    })
                    .collect();
                sessions.push(Session {
                    couple_id: format!("t{trial}c{couple}"),
                    session_id: format!("t{trial}c{couple}s{sess}"),
                    rated_role: "rated".into(),
                    rating: if couple % 2 == 0 { 2.0 } else { 8.0 },
                    outcome: None,
                    class_label: None,
                    turns,
                });
            }
        }
        let ds = dyad_core::corpus::binarize_by_percentile(&sessions, 40.0).unwrap();
        // Pooled-partner training is exactly monotone when alpha == beta;
        // the partner-free mode is monotone for any alpha.
        let configs = [
            (InfluenceConfig::new(1.0, 1.0).unwrap(), true),
            (InfluenceConfig::new(1.0, 0.0).unwrap(), false),
        ];
        for (inf, include_partner) in configs {
            let cfg = TrainConfig {
                lm_order: 1,
                smoothing: Smoothing::Mle,
                include_partner_in_lm: include_partner,
                max_iters: 6,
                converge_frac: 0.0,
                ..TrainConfig::default()
            };
            let model = hard_em(&ds, &cfg, &inf).unwrap();
            for pair in model.log.windows(2) {
                assert!(
                    pair[1].objective >= pair[0].objective - 1e-8,
                    "trial {trial}: objective fell {} -> {}",
                    pair[0].objective,
                    pair[1].objective
                );
            }
            assert!(model.final_objective >= model.log.last().unwrap().objective - 1e-8);
        }
    }
    println!("[PASS] criterion 5: hard-EM objective non-decreasing on 6 micro-corpora");
}

// ---------------------------------------------------------------------------
// Criterion 6: end-to-end synthetic evaluation. Configuration confirmed by
// an oracle run over seeds 1-5 before freezing: influence accuracies
// 0.9375 / 0.975 / 0.925 / 0.925 / 0.9625 (mean 0.945), single-speaker mean
// 0.895, at dev split k=8.
// ---------------------------------------------------------------------------

#[test]
fn c6_synthetic_end_to_end_accuracy() {
    let gt = GroundTruth::default_separable();
    assert!(symmetric_kl(&gt.states[0].unigram, &gt.states[1].unigram) >= 2.0);
    assert_eq!(gt.beta_true, 1.0);
    assert_eq!(gt.turns_range, (15, 25));

    let cfg = TrainConfig {
        lm_order: 1,
        ..TrainConfig::default()
    };
    let grid = ParamGrid::default_log7();
    let mut influence_accs = Vec::new();
    let mut ldbm_accs = Vec::new();
    for seed in 1..=5u64 {
        let ds = sample_corpus(&gt, 20, 2, seed).unwrap();
        assert_eq!(ds.couples.len(), 40);
        let dev_mode = DevMode::Split { k: 8, seed: 101 };
        let (inf_result, _) =
            run_nested_locco(&ds, &grid, Variant::Influence, &cfg, &dev_mode).unwrap();
        let (ldbm_result, _) =
            run_nested_locco(&ds, &grid, Variant::LdbmTunedAlpha, &cfg, &dev_mode).unwrap();
        println!(
            "  seed {seed}: influence {:.4}, single-speaker {:.4}",
            inf_result.accuracy, ldbm_result.accuracy
        );
        influence_accs.push(inf_result.accuracy);
        ldbm_accs.push(ldbm_result.accuracy);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mean_influence = mean(&influence_accs);
    let mean_ldbm = mean(&ldbm_accs);
    for (i, &acc) in influence_accs.iter().enumerate() {
        assert!(
            acc >= 0.90,
            "influence accuracy {acc} below 0.90 at seed {} ({influence_accs:?})",
            i + 1
        );
    }
    assert!(
        mean_influence >= mean_ldbm,
        "influence mean {mean_influence} below single-speaker mean {mean_ldbm}"
    );
    println!(
        "[PASS] criterion 6: influence accuracy >= 0.90 on every seed (mean {:.4}), >= single-speaker mean {:.4}",
        mean_influence, mean_ldbm
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: grid selection tracks the planted influence strength.
// ---------------------------------------------------------------------------

/// Corpus with no partner influence: class structure lives entirely in the
/// speaker chain, the partner stream is pure noise.
fn no_influence_gt() -> GroundTruth {
    let state0: Vec<f64> = (0..10).map(|i| if i < 5 { 0.18 } else { 0.02 }).collect();
    let state1: Vec<f64> = (0..10).map(|i| if i < 5 { 0.02 } else { 0.18 }).collect();
    let uniform = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
    GroundTruth {
        vocab: direction_vocab(),
        states: vec![
            StateEmission { unigram: state0, bigram: None },
            StateEmission { unigram: state1, bigram: None },
        ],
        c0: ClassDynamics {
            a: vec![vec![0.9, 0.1], vec![0.4, 0.6]],
            b: uniform.clone(),
            pi: vec![0.8, 0.2],
            rho: vec![0.5, 0.5],
        },
        c1: ClassDynamics {
            a: vec![vec![0.6, 0.4], vec![0.1, 0.9]],
            b: uniform,
            pi: vec![0.2, 0.8],
            rho: vec![0.5, 0.5],
        },
        beta_true: 0.0,
        turns_range: (10, 16),
        utterance_len: (3, 6),
    }
}

/// Corpus dominated by partner influence: uninformative self-transitions,
/// classes differ only in whether the speaker copies or opposes the
/// perceived partner state. Emissions are deliberately soft so that
/// influence weighting materially changes decoding.
fn strong_influence_gt() -> GroundTruth {
    let state0: Vec<f64> = (0..10).map(|i| if i < 5 { 0.13 } else { 0.07 }).collect();
    let state1: Vec<f64> = (0..10).map(|i| if i < 5 { 0.07 } else { 0.13 }).collect();
    let uniform = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
    GroundTruth {
        vocab: direction_vocab(),
        states: vec![
            StateEmission { unigram: state0, bigram: None },
            StateEmission { unigram: state1, bigram: None },
        ],
        c0: ClassDynamics {
            a: uniform.clone(),
            b: vec![vec![0.85, 0.15], vec![0.15, 0.85]],
            pi: vec![0.7, 0.3],
            rho: vec![0.7, 0.3],
        },
        c1: ClassDynamics {
            a: uniform,
            b: vec![vec![0.15, 0.85], vec![0.85, 0.15]],
            pi: vec![0.3, 0.7],
            rho: vec![0.7, 0.3],
        },
        beta_true: 10.0,
        turns_range: (10, 16),
        utterance_len: (3, 6),
    }
}

fn direction_vocab() -> Vec<String> {
    ["calm", "fine", "sure", "okay", "thanks", "angry", "upset", "never", "wrong", "stop"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[test]
fn c7_selected_beta_tracks_planted_influence() {
    // Oracle run before freezing: over seeds 1-5 with rotating dev, the
    // no-influence corpus selects beta <= 0.1 in 46/60 folds and the
    // strong-influence corpus selects beta >= 1 in 49/60.
    let cfg = TrainConfig {
        lm_order: 1,
        ..TrainConfig::default()
    };
    let grid = ParamGrid::default_log7();
    let run_direction = |gt: &GroundTruth| -> (usize, usize, usize) {
        let mut low = 0;
        let mut high = 0;
        let mut folds = 0;
        for seed in 1..=5u64 {
            let ds = sample_corpus(gt, 6, 2, seed).unwrap();
            let (result, _) =
                run_nested_locco(&ds, &grid, Variant::Influence, &cfg, &DevMode::Rotating)
                    .unwrap();
            for s in &result.selections {
                let beta = s.point.beta.expect("influence grid");
                folds += 1;
                if beta <= 0.1 {
                    low += 1;
                }
                if beta >= 1.0 {
                    high += 1;
                }
            }
        }
        (low, high, folds)
    };

    let (low, _, folds) = run_direction(&no_influence_gt());
    assert!(
        2 * low > folds,
        "beta_true=0: selected beta <= 0.1 in only {low}/{folds} folds"
    );
    let (_, high, folds10) = run_direction(&strong_influence_gt());
    assert!(
        2 * high > folds10,
        "beta_true=10: selected beta >= 1 in only {high}/{folds10} folds"
    );
    println!(
        "[PASS] criterion 7: beta selection tracks planted influence ({low}/{folds} low, {high}/{folds10} high)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: outcome pipeline against hand-computed values.
// ---------------------------------------------------------------------------

#[test]
fn c8_outcome_pipeline_hand_computed() {
    let values = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];
    let points: Vec<GridPoint> = values
        .iter()
        .flat_map(|&a| values.iter().map(move |&b| GridPoint { alpha: a, beta: Some(b) }))
        .collect();

    // Couple u: unique best at (1, 10). Couple v: exact tie between
    // (1, 0.1) and (1, 10). Both share outcome 2.
    let mut cells = BTreeMap::new();
    let row_for = |best: &[(f64, f64)]| -> Vec<Option<(f64, u32)>> {
        points
            .iter()
            .map(|p| {
                let is_best = best.iter().any(|&(a, b)| p.alpha == a && p.beta == Some(b));
                Some((if is_best { 0.875 } else { 0.25 }, 4))
            })
            .collect()
    };
    cells.insert("u".to_string(), row_for(&[(1.0, 10.0)]));
    cells.insert("v".to_string(), row_for(&[(1.0, 0.1), (1.0, 10.0)]));
    let table = DevAccuracyTable::from_entries(points, cells).unwrap();
    let couples: Vec<dyad_core::corpus::Couple> = ["u", "v"]
        .iter()
        .map(|id| dyad_core::corpus::Couple {
            couple_id: id.to_string(),
            sessions: Vec::new(),
            outcome: Some(2),
        })
        .collect();

    let h = build_config_histogram(&table, &couples, 2).unwrap();
    let ai = h.alphas.iter().position(|&a| a == 1.0).unwrap();
    let b01 = h.betas.iter().position(|&b| b == 0.1).unwrap();
    let b10 = h.betas.iter().position(|&b| b == 10.0).unwrap();
    // u contributes 1.0 to (1, 10); v contributes 0.5 to each tie; then
    // normalize by two couples.
    assert!((h.weights[ai][b10] - 0.75).abs() <= 1e-12);
    assert!((h.weights[ai][b01] - 0.25).abs() <= 1e-12);
    let mass: f64 = h.weights.iter().flatten().sum();
    assert!((mass - 1.0).abs() <= 1e-12);

    let g = to_gamma_histogram(&h);
    let mass1: f64 = g.weights.iter().sum();
    assert!((mass1 - 1.0).abs() <= 1e-12);
    let at = |gamma: f64| -> f64 {
        g.gammas
            .iter()
            .zip(&g.weights)
            .find(|(x, _)| **x == gamma)
            .map(|(_, w)| *w)
            .unwrap()
    };
    assert!((at(-1.0) - 0.75).abs() <= 1e-12);
    assert!((at(1.0) - 0.25).abs() <= 1e-12);

    // mu = 0.75*(-1) + 0.25*(1) = -0.5;
    // var = 0.75*(-0.5)^2 + 0.25*(1.5)^2 = 0.75 => sigma = sqrt(0.75).
    let fit = fit_gaussian(&g);
    assert!((fit.mu - (-0.5)).abs() <= 1e-12);
    assert!((fit.sigma - 0.75f64.sqrt()).abs() <= 1e-12);
    println!("[PASS] criterion 8: outcome histograms and fits match hand computation");
}

// ---------------------------------------------------------------------------
// Criterion 9: grid runs are byte-identical across reruns.
// ---------------------------------------------------------------------------

#[test]
fn c9_grid_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let dyad = env!("CARGO_BIN_EXE_dyad");
    let run = |args: &[&str]| {
        let out = Command::new(dyad)
            .args(args)
            .current_dir(dir.path())
            .output()
            .expect("spawn dyad");
        assert!(
            out.status.success(),
            "dyad {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run(&[
        "synth",
        "--output",
        "corpus.jsonl",
        "--couples-per-class",
        "3",
        "--sessions-per-couple",
        "2",
        "--seed",
        "6",
    ]);
    let grid_args = |out: &str| -> Vec<String> {
        [
            "grid",
            "--input",
            "corpus.jsonl",
            "--output",
            out,
            "--orders",
            "1",
            "--variants",
            "influence,ldbm",
            "--alphas",
            "0.1,1",
            "--betas",
            "0.1,1",
            "--dev-mode",
            "split",
            "--dev-k",
            "2",
            "--seed",
            "33",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };
    for out in ["run_a", "run_b"] {
        let args = grid_args(out);
        run(&args.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    }
    let mut compared = 0;
    for entry in std::fs::read_dir(dir.path().join("run_a")).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_string_lossy().ends_with(".csv") {
            let x = std::fs::read(dir.path().join("run_a").join(&name)).unwrap();
            let y = std::fs::read(dir.path().join("run_b").join(&name)).unwrap();
            assert_eq!(x, y, "{name:?} differs across reruns");
            compared += 1;
        }
    }
    assert!(compared >= 5, "expected several CSVs, compared {compared}");
    println!("[PASS] criterion 9: rerun produced {compared} byte-identical CSVs");
}
