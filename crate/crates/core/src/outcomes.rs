//! Mapping per-couple best configurations to relationship outcomes.
//!
//! For each outcome rating, every couple's best dev-accuracy grid points
//! contribute one count split evenly across ties; the normalized 2-D
//! histogram is then marginalized over alpha onto the axis
//! `gamma = log10(1 / beta)` and summarized by a weighted-moment Gaussian
//! fit. Positive gamma means the speaker's own past behavior dominates the
//! partner's influence, negative the reverse.

use std::path::Path;

use crate::corpus::Couple;
use crate::error::{Error, Result};
use crate::experiments::DevAccuracyTable;

#[derive(Debug, Clone)]
pub struct ConfigHistogram2D {
    pub outcome: i32,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `weights[i][j]` for `alphas[i]`, `betas[j]`; sums to one.
    pub weights: Vec<Vec<f64>>,
    pub n_couples: usize,
}

#[derive(Debug, Clone)]
pub struct GammaHistogram1D {
    pub outcome: i32,
    /// Ascending gamma bin centers, one per beta grid value.
    pub gammas: Vec<f64>,
    pub weights: Vec<f64>,
    pub n_couples: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GaussianFit {
    pub outcome: i32,
    pub mu: f64,
    pub sigma: f64,
    pub n_couples: usize,
}

/// `log10(1/beta)`, rounded to nine decimals so grid powers of ten land on
/// exact integers.
pub fn gamma_of_beta(beta: f64) -> f64 {
    (-beta.log10() * 1e9).round() / 1e9
}

/// Normalized histogram of best (alpha, beta) configurations over couples
/// with the given outcome rating. A couple with `k` tied best points
/// contributes `1/k` to each of them.
pub fn build_config_histogram(
    table: &DevAccuracyTable,
    couples: &[Couple],
    outcome: i32,
) -> Result<ConfigHistogram2D> {
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    for p in &table.points {
        let beta = p.beta.ok_or_else(|| {
            Error::invalid("outcome analysis needs an influence-model dev table (beta present)")
        })?;
        if !alphas.contains(&p.alpha) {
            alphas.push(p.alpha);
        }
        if !betas.contains(&beta) {
            betas.push(beta);
        }
    }
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    betas.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let selected: Vec<&Couple> = couples
        .iter()
        .filter(|c| c.outcome == Some(outcome))
        .collect();
    if selected.is_empty() {
        return Err(Error::invalid(format!("no couples with outcome rating {outcome}")));
    }

    let mut weights = vec![vec![0.0; betas.len()]; alphas.len()];
    for couple in &selected {
        let best = table.best_points(&couple.couple_id)?;
        let share = 1.0 / best.len() as f64;
        for point in best {
            let beta = point.beta.expect("validated above");
            let ai = alphas.iter().position(|&a| a == point.alpha).unwrap();
            let bi = betas.iter().position(|&b| b == beta).unwrap();
            weights[ai][bi] += share;
        }
    }
    let n = selected.len();
    for row in &mut weights {
        for w in row.iter_mut() {
            *w /= n as f64;
        }
    }
    Ok(ConfigHistogram2D {
        outcome,
        alphas,
        betas,
        weights,
        n_couples: n,
    })
}

/// Marginalize the 2-D histogram over alpha onto gamma bins, preserving
/// total mass. Bins come out in ascending gamma order.
pub fn to_gamma_histogram(h: &ConfigHistogram2D) -> GammaHistogram1D {
    let mut pairs: Vec<(f64, f64)> = h
        .betas
        .iter()
        .enumerate()
        .map(|(bi, &beta)| {
            let mass: f64 = h.weights.iter().map(|row| row[bi]).sum();
            (gamma_of_beta(beta), mass)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    GammaHistogram1D {
        outcome: h.outcome,
        gammas: pairs.iter().map(|(g, _)| *g).collect(),
        weights: pairs.iter().map(|(_, w)| *w).collect(),
        n_couples: h.n_couples,
    }
}

/// Weighted moment match: mu is the histogram mean, sigma the population
/// standard deviation.
pub fn fit_gaussian(g: &GammaHistogram1D) -> GaussianFit {
    let mu: f64 = g.gammas.iter().zip(&g.weights).map(|(x, w)| w * x).sum();
    let var: f64 = g
        .gammas
        .iter()
        .zip(&g.weights)
        .map(|(x, w)| w * (x - mu) * (x - mu))
        .sum();
    GaussianFit {
        outcome: g.outcome,
        mu,
        sigma: var.max(0.0).sqrt(),
        n_couples: g.n_couples,
    }
}

#[derive(Debug, Clone)]
pub struct OutcomeEntry {
    pub hist2d: ConfigHistogram2D,
    pub gamma: GammaHistogram1D,
    pub fit: GaussianFit,
}

#[derive(Debug, Clone)]
pub struct OutcomeReport {
    pub entries: Vec<OutcomeEntry>,
}

impl OutcomeReport {
    /// Outcome ratings ordered by |mu|, farthest from zero first.
    pub fn mu_ordering(&self) -> Vec<i32> {
        let mut order: Vec<(i32, f64)> = self
            .entries
            .iter()
            .map(|e| (e.fit.outcome, e.fit.mu.abs()))
            .collect();
        order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        order.into_iter().map(|(o, _)| o).collect()
    }
}

/// Run the histogram/fit pipeline for every outcome rating (1 through 4)
/// present among the couples.
pub fn outcome_report(table: &DevAccuracyTable, couples: &[Couple]) -> Result<OutcomeReport> {
    let mut entries = Vec::new();
    for outcome in 1..=4 {
        if !couples.iter().any(|c| c.outcome == Some(outcome)) {
            continue;
        }
        let hist2d = build_config_histogram(table, couples, outcome)?;
        let gamma = to_gamma_histogram(&hist2d);
        let fit = fit_gaussian(&gamma);
        entries.push(OutcomeEntry { hist2d, gamma, fit });
    }
    if entries.is_empty() {
        return Err(Error::invalid("no couples carry outcome ratings"));
    }
    Ok(OutcomeReport { entries })
}


pub fn write_hist2d_csv(path: &Path, report: &OutcomeReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["outcome", "alpha", "beta", "weight"])?;
    for e in &report.entries {
        let h = &e.hist2d;
        for (ai, &alpha) in h.alphas.iter().enumerate() {
            for (bi, &beta) in h.betas.iter().enumerate() {
                w.write_record([
                    &format!("{}", h.outcome),
                    &format!("{alpha}"),
                    &format!("{beta}"),
                    &format!("{}", h.weights[ai][bi]),
                ])
                ?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_gamma_csv(path: &Path, report: &OutcomeReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["outcome", "gamma", "weight"])?;
    for e in &report.entries {
        for (g, weight) in e.gamma.gammas.iter().zip(&e.gamma.weights) {
            w.write_record([
                &format!("{}", e.gamma.outcome),
                &format!("{g}"),
                &format!("{weight}"),
            ])
            ?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_fits_csv(path: &Path, report: &OutcomeReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["outcome", "mu", "sigma", "n_couples"])?;
    for e in &report.entries {
        w.write_record([
            &format!("{}", e.fit.outcome),
            &format!("{}", e.fit.mu),
            &format!("{}", e.fit.sigma),
            &format!("{}", e.fit.n_couples),
        ])
        ?;
    }
    w.flush()?;
    Ok(())
}
