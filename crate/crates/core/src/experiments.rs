//! Nested leave-one-couple-out evaluation with (alpha, beta) grid search.
//!
//! Every couple serves once as the outer test fold. Within a fold, each
//! grid point is scored on held-out dev couples — either every remaining
//! couple rotating through the dev role (accuracies averaged) or one random
//! split — the best point is selected (ties prefer smaller alpha, then
//! smaller beta), the model is retrained on all non-test couples at that
//! point, and the test couple's sessions are classified. Dev accuracies are
//! also aggregated per couple into the table consumed by outcome analysis.
//!
//! Folds and their inner evaluations are pure functions of the dataset and
//! configuration; results merge in fold order, so output is deterministic
//! regardless of worker count.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::corpus::{loco_splits, ClassLabel, LabeledDataset, Session};
use crate::error::{Error, Result};
use crate::exec::run_jobs;
use crate::hmm::{classify_session, InfluenceConfig};
use crate::train::{hard_em, TrainConfig, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Full influence model: 7x7 grid over (alpha, beta).
    Influence,
    /// Single-speaker model with alpha tuned on dev (7 points, no beta).
    LdbmTunedAlpha,
    /// Single-speaker baseline fixed at alpha = 1.
    LdbmFixedAlpha1,
}

impl Variant {
    pub fn tag(&self) -> &'static str {
        match self {
            Variant::Influence => "influence",
            Variant::LdbmTunedAlpha => "ldbm",
            Variant::LdbmFixedAlpha1 => "ldbm-a1",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "influence" => Ok(Variant::Influence),
            "ldbm" => Ok(Variant::LdbmTunedAlpha),
            "ldbm-a1" => Ok(Variant::LdbmFixedAlpha1),
            other => Err(Error::invalid(format!(
                "unknown variant {other:?} (expected influence, ldbm or ldbm-a1)"
            ))),
        }
    }
}

/// One grid configuration; `beta = None` marks single-speaker training and
/// decoding (partner turns ignored entirely).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub alpha: f64,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl ParamGrid {
    /// The default search space: both exponents over seven logarithmic
    /// steps from 1e-3 to 1e3, 49 points in total.
    pub fn default_log7() -> Self {
        let values = vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];
        ParamGrid {
            alphas: values.clone(),
            betas: values,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.betas.is_empty() {
            return Err(Error::invalid("parameter grid must not be empty"));
        }
        for &v in self.alphas.iter().chain(self.betas.iter()) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("grid values must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Grid points for a variant, ascending by (alpha, beta) so that a
    /// first-wins argmax implements the documented tie-break.
    pub fn points(&self, variant: Variant) -> Vec<GridPoint> {
        let mut alphas = self.alphas.clone();
        alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut betas = self.betas.clone();
        betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        match variant {
            Variant::Influence => alphas
                .iter()
                .flat_map(|&a| betas.iter().map(move |&b| GridPoint { alpha: a, beta: Some(b) }))
                .collect(),
            Variant::LdbmTunedAlpha => alphas
                .iter()
                .map(|&a| GridPoint { alpha: a, beta: None })
                .collect(),
            Variant::LdbmFixedAlpha1 => vec![GridPoint { alpha: 1.0, beta: None }],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DevMode {
    /// Every non-test couple serves as dev once per grid point; accuracies
    /// are averaged over the rotations.
    Rotating,
    /// One random dev split of `k` couples per fold, drawn deterministically
    /// from `seed` and the fold index.
    Split { k: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct SessionPrediction {
    pub fold: String,
    pub couple_id: String,
    pub session_id: String,
    pub true_label: ClassLabel,
    pub predicted: ClassLabel,
    pub score_c0: f64,
    pub score_c1: f64,
}

#[derive(Debug, Clone)]
pub struct FoldSelection {
    pub test_couple: String,
    pub point: GridPoint,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub variant: Variant,
    pub order: usize,
    pub selections: Vec<FoldSelection>,
    pub predictions: Vec<SessionPrediction>,
    pub accuracy: f64,
}

/// Per-couple dev accuracy, averaged over every outer fold in which the
/// couple served as dev, for each grid point.
#[derive(Debug, Clone)]
pub struct DevAccuracyTable {
    pub points: Vec<GridPoint>,
    cells: BTreeMap<String, Vec<Option<(f64, u32)>>>,
}

impl DevAccuracyTable {
    pub fn from_entries(
        points: Vec<GridPoint>,
        cells: BTreeMap<String, Vec<Option<(f64, u32)>>>,
    ) -> Result<Self> {
        for (couple, row) in &cells {
            if row.len() != points.len() {
                return Err(Error::invalid(format!(
                    "couple {couple} has {} cells for {} grid points",
                    row.len(),
                    points.len()
                )));
            }
        }
        Ok(DevAccuracyTable { points, cells })
    }

    pub fn couples(&self) -> impl Iterator<Item = &String> {
        self.cells.keys()
    }

    /// Mean accuracy and fold count for one couple at one grid point.
    pub fn accuracy(&self, couple: &str, point_idx: usize) -> Option<(f64, u32)> {
        self.cells.get(couple).and_then(|row| row[point_idx])
    }

    /// All grid points achieving the couple's maximum averaged dev
    /// accuracy (several under exact ties).
    pub fn best_points(&self, couple: &str) -> Result<Vec<GridPoint>> {
        let row = self
            .cells
            .get(couple)
            .ok_or_else(|| Error::invalid(format!("unknown couple {couple:?} in dev table")))?;
        let mut best = f64::NEG_INFINITY;
        for cell in row.iter().flatten() {
            if cell.0 > best {
                best = cell.0;
            }
        }
        if best == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("couple {couple:?} has no dev accuracies")));
        }
        Ok(row
            .iter()
            .enumerate()
            .filter_map(|(i, cell)| match cell {
                Some((acc, _)) if *acc == best => Some(self.points[i]),
                _ => None,
            })
            .collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["couple", "alpha", "beta", "accuracy", "n"])
            ?;
        for (couple, row) in &self.cells {
            for (i, cell) in row.iter().enumerate() {
                let Some((acc, n)) = cell else { continue };
                let point = &self.points[i];
                let beta = point.beta.map(|b| format!("{b}")).unwrap_or_default();
                w.write_record([
                    couple.as_str(),
                    &format!("{}", point.alpha),
                    &beta,
                    &format!("{acc}"),
                    &format!("{n}"),
                ])
                ?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut points: Vec<GridPoint> = Vec::new();
        let mut cells: BTreeMap<String, Vec<Option<(f64, u32)>>> = BTreeMap::new();
        for (i, record) in reader.records().enumerate() {
            let lineno = i + 2; // header occupies line 1
            let record = record.map_err(|e| Error::parse(lineno, e.to_string()))?;
            if record.len() != 5 {
                return Err(Error::parse(lineno, "expected 5 columns"));
            }
            let couple = record[0].to_string();
            let alpha: f64 = record[1]
                .parse()
                .map_err(|_| Error::parse(lineno, "bad alpha"))?;
            let beta: Option<f64> = if record[2].is_empty() {
                None
            } else {
                Some(record[2].parse().map_err(|_| Error::parse(lineno, "bad beta"))?)
            };
            let acc: f64 = record[3]
                .parse()
                .map_err(|_| Error::parse(lineno, "bad accuracy"))?;
            let n: u32 = record[4].parse().map_err(|_| Error::parse(lineno, "bad n"))?;
            let point = GridPoint { alpha, beta };
            let idx = match points.iter().position(|p| *p == point) {
                Some(idx) => idx,
                None => {
                    points.push(point);
                    for row in cells.values_mut() {
                        row.push(None);
                    }
                    points.len() - 1
                }
            };
            let row = cells.entry(couple).or_insert_with(|| vec![None; points.len()]);
            if row.len() < points.len() {
                row.resize(points.len(), None);
            }
            row[idx] = Some((acc, n));
        }
        for row in cells.values_mut() {
            row.resize(points.len(), None);
        }
        Self::from_entries(points, cells)
    }
}


fn train_point(
    train: &LabeledDataset,
    point: &GridPoint,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, InfluenceConfig)> {
    let mut eff = *cfg;
    if point.beta.is_none() {
        eff.include_partner_in_lm = false;
    }
    let inf = InfluenceConfig::new(point.alpha, point.beta.unwrap_or(0.0))?;
    let model = hard_em(train, &eff, &inf)?;
    Ok((model, inf))
}

fn classify_with(
    model: &TrainedModel,
    inf: &InfluenceConfig,
    eval: &[&Session],
) -> Vec<(ClassLabel, ClassLabel, f64, f64)> {
    eval.iter()
        .map(|s| {
            let (pred, s0, s1) = classify_session(s, &model.states, &model.c0, &model.c1, inf);
            (s.class_label.expect("labeled dataset"), pred, s0, s1)
        })
        .collect()
}

fn train_and_classify(
    train: &LabeledDataset,
    eval: &[&Session],
    point: &GridPoint,
    cfg: &TrainConfig,
) -> Result<Vec<(ClassLabel, ClassLabel, f64, f64)>> {
    let (model, inf) = train_point(train, point, cfg)?;
    Ok(classify_with(&model, &inf, eval))
}

fn accuracy_of(preds: &[(ClassLabel, ClassLabel, f64, f64)]) -> f64 {
    let correct = preds.iter().filter(|(t, p, _, _)| t == p).count();
    correct as f64 / preds.len() as f64
}

struct FoldOutput {
    selection: FoldSelection,
    predictions: Vec<SessionPrediction>,
    /// (dev couple, point index, session accuracy on that couple)
    dev_records: Vec<(String, usize, f64)>,
}

fn couple_sessions<'a>(ds: &'a LabeledDataset, id: &str) -> Vec<&'a Session> {
    ds.couples
        .iter()
        .filter(|c| c.couple_id == id)
        .flat_map(|c| c.sessions.iter())
        .collect()
}

fn run_fold(
    ds: &LabeledDataset,
    test_id: &str,
    train_ids: &[String],
    fold_idx: usize,
    points: &[GridPoint],
    cfg: &TrainConfig,
    dev_mode: &DevMode,
) -> Result<FoldOutput> {
    let mut dev_records = Vec::new();
    let mut selection_metric = vec![f64::NEG_INFINITY; points.len()];

    match dev_mode {
        DevMode::Rotating => {
            for (pi, point) in points.iter().enumerate() {
                let mut sum = 0.0;
                for dev_id in train_ids {
                    let train_on: Vec<String> = train_ids
                        .iter()
                        .filter(|id| *id != dev_id)
                        .cloned()
                        .collect();
                    let train_ds = ds.subset(&train_on);
                    let dev_sessions = couple_sessions(ds, dev_id);
                    let preds = train_and_classify(&train_ds, &dev_sessions, point, cfg)?;
                    let acc = accuracy_of(&preds);
                    dev_records.push((dev_id.clone(), pi, acc));
                    sum += acc;
                }
                selection_metric[pi] = sum / train_ids.len() as f64;
            }
        }
        DevMode::Split { k, seed } => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(fold_idx as u64));
            let mut picked = rand::seq::index::sample(&mut rng, train_ids.len(), *k).into_vec();
            picked.sort_unstable();
            let dev_ids: Vec<String> = picked.iter().map(|&i| train_ids[i].clone()).collect();
            let train_on: Vec<String> = train_ids
                .iter()
                .filter(|id| !dev_ids.contains(id))
                .cloned()
                .collect();
            let train_ds = ds.subset(&train_on);
            for (pi, point) in points.iter().enumerate() {
                let (model, inf) = train_point(&train_ds, point, cfg)?;
                let mut pooled = Vec::new();
                for dev_id in &dev_ids {
                    let dev_sessions = couple_sessions(ds, dev_id);
                    let preds = classify_with(&model, &inf, &dev_sessions);
                    dev_records.push((dev_id.clone(), pi, accuracy_of(&preds)));
                    pooled.extend(preds);
                }
                selection_metric[pi] = accuracy_of(&pooled);
            }
        }
    }

    // First-wins argmax over the ascending point order.
    let mut best = 0;
    for pi in 1..points.len() {
        if selection_metric[pi] > selection_metric[best] {
            best = pi;
        }
    }

    let train_ds = ds.subset(&train_ids.to_vec());
    let test_sessions = couple_sessions(ds, test_id);
    let preds = train_and_classify(&train_ds, &test_sessions, &points[best], cfg)?;
    let predictions = test_sessions
        .iter()
        .zip(&preds)
        .map(|(s, (t, p, s0, s1))| SessionPrediction {
            fold: test_id.to_string(),
            couple_id: s.couple_id.clone(),
            session_id: s.session_id.clone(),
            true_label: *t,
            predicted: *p,
            score_c0: *s0,
            score_c1: *s1,
        })
        .collect();

    Ok(FoldOutput {
        selection: FoldSelection {
            test_couple: test_id.to_string(),
            point: points[best],
            dev_accuracy: selection_metric[best],
        },
        predictions,
        dev_records,
    })
}

/// Full nested leave-one-couple-out run for one variant and one LM order
/// (taken from `cfg.lm_order`).
///
/// Every inner training subset must contain sessions of both classes;
/// with `Rotating` that holds whenever each class has at least three
/// couples, and with `Split { k }` whenever each class has at least `k + 2`.
pub fn run_nested_locco(
    ds: &LabeledDataset,
    grid: &ParamGrid,
    variant: Variant,
    cfg: &TrainConfig,
    dev_mode: &DevMode,
) -> Result<(ExperimentResult, DevAccuracyTable)> {
    grid.validate()?;
    cfg.validate()?;
    let folds = loco_splits(ds)?;
    if let DevMode::Split { k, .. } = dev_mode {
        let n = ds.couples.len();
        if *k == 0 || *k + 1 >= n {
            return Err(Error::invalid(format!(
                "split dev mode needs 1 <= k <= n-2 (k={k}, n={n})"
            )));
        }
    }
    let points = grid.points(variant);

    let outputs = run_jobs(folds.len(), |fi| {
        let (test_id, train_ids) = &folds[fi];
        run_fold(ds, test_id, train_ids, fi, &points, cfg, dev_mode)
    });

    let mut selections = Vec::new();
    let mut predictions = Vec::new();
    let mut sums: BTreeMap<String, Vec<(f64, u32)>> = BTreeMap::new();
    for output in outputs {
        let output = output?;
        selections.push(output.selection);
        predictions.extend(output.predictions);
        for (couple, pi, acc) in output.dev_records {
            let row = sums.entry(couple).or_insert_with(|| vec![(0.0, 0); points.len()]);
            row[pi].0 += acc;
            row[pi].1 += 1;
        }
    }
    let correct = predictions
        .iter()
        .filter(|p| p.true_label == p.predicted)
        .count();
    let accuracy = correct as f64 / predictions.len() as f64;

    let cells = sums
        .into_iter()
        .map(|(couple, row)| {
            let means = row
                .into_iter()
                .map(|(sum, n)| if n == 0 { None } else { Some((sum / n as f64, n)) })
                .collect();
            (couple, means)
        })
        .collect();
    let table = DevAccuracyTable::from_entries(points, cells)?;

    Ok((
        ExperimentResult {
            variant,
            order: cfg.lm_order,
            selections,
            predictions,
            accuracy,
        },
        table,
    ))
}

pub fn write_predictions_csv(path: &Path, results: &[ExperimentResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "variant", "order", "fold", "couple", "session", "true", "predicted", "score_c0",
        "score_c1",
    ])
    ?;
    for r in results {
        for p in &r.predictions {
            w.write_record([
                r.variant.tag(),
                &format!("{}", r.order),
                &p.fold,
                &p.couple_id,
                &p.session_id,
                &p.true_label.to_string(),
                &p.predicted.to_string(),
                &format!("{}", p.score_c0),
                &format!("{}", p.score_c1),
            ])
            ?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_selections_csv(path: &Path, results: &[ExperimentResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "order", "test_couple", "alpha", "beta", "dev_accuracy"])
        ?;
    for r in results {
        for s in &r.selections {
            let beta = s.point.beta.map(|b| format!("{b}")).unwrap_or_default();
            w.write_record([
                r.variant.tag(),
                &format!("{}", r.order),
                &s.test_couple,
                &format!("{}", s.point.alpha),
                &beta,
                &format!("{}", s.dev_accuracy),
            ])
            ?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, results: &[ExperimentResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["order", "variant", "accuracy", "n_sessions"])
        ?;
    for r in results {
        w.write_record([
            &format!("{}", r.order),
            r.variant.tag(),
            &format!("{}", r.accuracy),
            &format!("{}", r.predictions.len()),
        ])
        ?;
    }
    w.flush()?;
    Ok(())
}

/// Accuracy matrix, orders down the rows and the three variants across the
/// columns, cells in percent.
pub fn format_summary_table(results: &[ExperimentResult]) -> String {
    let variants = [Variant::LdbmFixedAlpha1, Variant::LdbmTunedAlpha, Variant::Influence];
    let mut orders: Vec<usize> = results.iter().map(|r| r.order).collect();
    orders.sort_unstable();
    orders.dedup();
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8}{:>12}{:>12}{:>12}\n",
        "order",
        variants[0].tag(),
        variants[1].tag(),
        variants[2].tag()
    ));
    for order in orders {
        out.push_str(&format!("{order:<8}"));
        for variant in variants {
            let cell = results
                .iter()
                .find(|r| r.order == order && r.variant == variant)
                .map(|r| format!("{:.2}", 100.0 * r.accuracy))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!("{cell:>12}"));
        }
        out.push('\n');
    }
    out
}
