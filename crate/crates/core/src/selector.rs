//! The e-value selection engine.
//!
//! For a bootstrap ensemble, the full-model distribution `Ê_*` scores every
//! primary draw against the reference summary, and the drop-one
//! distribution `Ê_{−j}` scores the same draws with coordinate `j` set to
//! zero. Predictor `j` is selected at `(q, t)` when
//! `c_q(Ê_{−j}) < c_{q·t}(Ê_*)`, and the final set at a given `t` is the
//! intersection over all `q`. The bootstrap scale `s` (and optionally `t`)
//! is chosen by held-out fixed-effect prediction error.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evalmap::{quantile_of_sorted, standardize, EvalDistribution, EvaluationKind};
use crate::gboot::{build_ensemble_from_basis, BootstrapEnsemble, PerturbationBasis, ResamplingConfig};
use crate::lmm::{fit_ace, gls_solve, FitOptions, FittedAceModel, FixedEffectsDesign};
use crate::rng::{derive_seed, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub q_list: Vec<f64>,
    /// Thresholds; prediction error is minimized jointly over `s_grid × t_grid`.
    pub t_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub kind: EvaluationKind,
    pub r: usize,
    pub r1: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self::for_kind(EvaluationKind::E2)
    }
}

pub fn default_q_list() -> Vec<f64> {
    vec![0.5, 0.6, 0.7, 0.8, 0.9]
}

pub fn default_s_grid() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 2.0]
}

/// Default threshold fraction for an evaluation map.
pub fn default_t(kind: EvaluationKind) -> f64 {
    match kind {
        EvaluationKind::E1 => (-1.0f64).exp(),
        EvaluationKind::E2 => 0.8,
    }
}

impl SelectionConfig {
    pub fn for_kind(kind: EvaluationKind) -> Self {
        Self {
            q_list: default_q_list(),
            t_grid: vec![default_t(kind)],
            s_grid: default_s_grid(),
            kind,
            r: 500,
            r1: 500,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_list.is_empty() || self.t_grid.is_empty() || self.s_grid.is_empty() {
            return Err(Error::InvalidConfig("q_list, t_grid and s_grid must be nonempty".into()));
        }
        for &t in &self.t_grid {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!("threshold t = {t} outside (0, 1)")));
            }
            for &q in &self.q_list {
                let qt = q * t;
                if !(q > 0.0 && q < 1.0 && qt > 0.0 && qt < 1.0) {
                    return Err(Error::InvalidConfig(format!("q = {q}, t = {t}: q and q·t must lie in (0, 1)")));
                }
            }
        }
        for &s in &self.s_grid {
            self.resampling(s).validate()?;
        }
        Ok(())
    }

    /// Resampling settings for grid point `s`. The seed depends on the value
    /// of `s`, not its position in the grid.
    pub fn resampling(&self, s: f64) -> ResamplingConfig {
        ResamplingConfig { r: self.r, r1: self.r1, s, seed: derive_seed(self.seed, &[tag::GRID_POINT, s.to_bits()]) }
    }

    fn sorted_s_grid(&self) -> Vec<f64> {
        let mut s = self.s_grid.clone();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }

    fn sorted_t_grid(&self) -> Vec<f64> {
        let mut t = self.t_grid.clone();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

/// Full-model and drop-one evaluation distributions for one ensemble.
pub fn evalue_distributions(
    ensemble: &BootstrapEnsemble,
    kind: EvaluationKind,
) -> Result<(EvalDistribution, Vec<EvalDistribution>)> {
    let reference = &ensemble.reference_summary;
    let p = ensemble.p_g();
    let zero = DVector::zeros(p);
    let dropped = standardize(&zero, &reference.mean, &reference.sd)?;
    let dropped_sq = dropped.map(|z| z * z);

    let mut full = Vec::with_capacity(ensemble.primary.len());
    let mut dropone = vec![Vec::with_capacity(ensemble.primary.len()); p];
    for draw in &ensemble.primary {
        let z = standardize(draw, &reference.mean, &reference.sd)?;
        let sq = z.norm_squared();
        full.push(kind.score_from_sq_norm(sq));
        for j in 0..p {
            // Replacing a coordinate by its own value leaves the norm as is.
            let sq_j = if z[j] == dropped[j] { sq } else { (sq - z[j] * z[j] + dropped_sq[j]).max(0.0) };
            dropone[j].push(kind.score_from_sq_norm(sq_j));
        }
    }
    let full = EvalDistribution { values: full, kind, label: "full".into() };
    let dropone = dropone
        .into_iter()
        .enumerate()
        .map(|(j, values)| EvalDistribution { values, kind, label: format!("-{j}") })
        .collect();
    Ok((full, dropone))
}

/// Quantile e-values of the full and every drop-one model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalueReport {
    pub q_list: Vec<f64>,
    /// `c_q(Ê_*)` for each `q` in `q_list`.
    pub full_quantiles: Vec<f64>,
    /// `c_q(Ê_{−j})`, predictors × `q_list`.
    pub dropone_quantiles: DMatrix<f64>,
    /// `Ê_*` sorted ascending, for thresholds at arbitrary `q·t`.
    pub full_sorted: Vec<f64>,
    pub kind: EvaluationKind,
    pub s: f64,
}

impl EvalueReport {
    pub fn new(full: &EvalDistribution, dropone: &[EvalDistribution], q_list: &[f64], s: f64) -> Result<Self> {
        let mut full_sorted = full.values.clone();
        full_sorted.sort_by(f64::total_cmp);
        let full_quantiles = q_list.iter().map(|&q| quantile_of_sorted(&full_sorted, q)).collect::<Result<Vec<_>>>()?;
        let mut dropone_quantiles = DMatrix::zeros(dropone.len(), q_list.len());
        for (j, dist) in dropone.iter().enumerate() {
            let mut sorted = dist.values.clone();
            sorted.sort_by(f64::total_cmp);
            for (c, &q) in q_list.iter().enumerate() {
                dropone_quantiles[(j, c)] = quantile_of_sorted(&sorted, q)?;
            }
        }
        Ok(Self { q_list: q_list.to_vec(), full_quantiles, dropone_quantiles, full_sorted, kind: full.kind, s })
    }

    pub fn from_ensemble(ensemble: &BootstrapEnsemble, kind: EvaluationKind, q_list: &[f64]) -> Result<Self> {
        let (full, dropone) = evalue_distributions(ensemble, kind)?;
        Self::new(&full, &dropone, q_list, ensemble.config.s)
    }

    pub fn p_g(&self) -> usize {
        self.dropone_quantiles.nrows()
    }

    fn q_column(&self, q: f64) -> Result<usize> {
        self.q_list
            .iter()
            .position(|&x| (x - q).abs() < 1e-12)
            .ok_or_else(|| Error::InvalidConfig(format!("q = {q} was not computed in this report")))
    }

    /// `c_{q·t}(Ê_*)`.
    pub fn full_threshold(&self, q: f64, t: f64) -> Result<f64> {
        quantile_of_sorted(&self.full_sorted, q * t)
    }
}

/// `{ j : c_q(Ê_{−j}) < c_{q·t}(Ê_*) }`.
pub fn select_single(report: &EvalueReport, q: f64, t: f64) -> Result<Vec<usize>> {
    let col = report.q_column(q)?;
    let threshold = report.full_threshold(q, t)?;
    Ok((0..report.p_g()).filter(|&j| report.dropone_quantiles[(j, col)] < threshold).collect())
}

/// Predictors selected at every `q` in `q_list`.
pub fn select_q_intersection(report: &EvalueReport, q_list: &[f64], t: f64) -> Result<Vec<usize>> {
    let mut keep: BTreeSet<usize> = (0..report.p_g()).collect();
    for &q in q_list {
        let chosen: BTreeSet<usize> = select_single(report, q, t)?.into_iter().collect();
        keep = keep.intersection(&chosen).copied().collect();
    }
    Ok(keep.into_iter().collect())
}

/// `{ j : mean(Ê_{−j}) < mean(Ê_*) }`.
pub fn mean_evalue_select(ensemble: &BootstrapEnsemble, kind: EvaluationKind) -> Result<Vec<usize>> {
    let (full, dropone) = evalue_distributions(ensemble, kind)?;
    let full_mean = full.mean();
    Ok(dropone.iter().enumerate().filter(|(_, d)| d.mean() < full_mean).map(|(j, _)| j).collect())
}

fn check_same_layout(a: &Dataset, b: &Dataset) -> Result<()> {
    if a.snp_ids() != b.snp_ids() || a.covariate_ids() != b.covariate_ids() {
        return Err(Error::Structural("training and test datasets have different SNP or covariate layouts".into()));
    }
    Ok(())
}

/// GLS coefficients for intercept + covariates + `selected` SNPs on the
/// training data, with the variance components frozen at `train_fit`.
pub fn restricted_coefficients(train_fit: &FittedAceModel, train: &Dataset, selected: &[usize]) -> Result<DVector<f64>> {
    let design = FixedEffectsDesign::with_snps(train, selected)?;
    let responses: Vec<DVector<f64>> = train.families().iter().map(|f| f.phenotype.clone()).collect();
    Ok(gls_solve(&design, &responses, &train_fit.per_family_v_inverse)?.coefficients)
}

/// Sum of squared fixed-effect prediction residuals on `test` for the model
/// restricted to `selected`.
pub fn restricted_prediction_error(
    train_fit: &FittedAceModel,
    train: &Dataset,
    selected: &[usize],
    test: &Dataset,
) -> Result<f64> {
    check_same_layout(train, test)?;
    let beta = restricted_coefficients(train_fit, train, selected)?;
    let test_design = FixedEffectsDesign::with_snps(test, selected)?;
    Ok(test_design
        .blocks()
        .iter()
        .zip(test.families())
        .map(|(x, f)| (&f.phenotype - x * &beta).norm_squared())
        .sum())
}

/// One evaluated `(s, t)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub s: f64,
    pub t: f64,
    pub selected: Vec<usize>,
    pub prediction_error: f64,
}

/// Grid point with the smallest prediction error; ties go to the smaller
/// selected set, then smaller `s`, then smaller `t`.
pub fn best_grid_point(points: &[GridPoint]) -> Option<&GridPoint> {
    points.iter().min_by(|a, b| {
        a.prediction_error
            .total_cmp(&b.prediction_error)
            .then(a.selected.len().cmp(&b.selected.len()))
            .then(a.s.total_cmp(&b.s))
            .then(a.t.total_cmp(&b.t))
    })
}

/// Every grid point plus the e-value report at each `s`.
#[derive(Debug, Clone)]
pub struct GridEvaluation {
    pub points: Vec<GridPoint>,
    pub reports: Vec<EvalueReport>,
}

impl GridEvaluation {
    pub fn report_for(&self, s: f64) -> Option<&EvalueReport> {
        self.reports.iter().find(|r| r.s == s)
    }
}

/// Bootstrap ensemble the grid uses at scale `s`.
pub fn grid_ensemble(fit: &FittedAceModel, train: &Dataset, config: &SelectionConfig, s: f64) -> Result<BootstrapEnsemble> {
    build_ensemble_from_basis(&PerturbationBasis::new(fit, train)?, &config.resampling(s))
}

/// Evaluate all `(s, t)` combinations against a fitted full model.
pub fn evaluate_grid(fit: &FittedAceModel, train: &Dataset, test: &Dataset, config: &SelectionConfig) -> Result<GridEvaluation> {
    config.validate()?;
    check_same_layout(train, test)?;
    if !fit.converged {
        return Err(Error::Numerical("full-model fit did not converge".into()));
    }
    let basis = PerturbationBasis::new(fit, train)?;
    let s_grid = config.sorted_s_grid();
    let t_grid = config.sorted_t_grid();

    let per_s: Vec<(EvalueReport, Vec<(f64, Vec<usize>)>)> = s_grid
        .par_iter()
        .map(|&s| {
            let ensemble = build_ensemble_from_basis(&basis, &config.resampling(s))?;
            let report = EvalueReport::from_ensemble(&ensemble, config.kind, &config.q_list)?;
            let sets = t_grid
                .iter()
                .map(|&t| Ok((t, select_q_intersection(&report, &config.q_list, t)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok((report, sets))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pe_cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut points = Vec::with_capacity(s_grid.len() * t_grid.len());
    let mut reports = Vec::with_capacity(s_grid.len());
    for (report, sets) in per_s {
        for (t, selected) in sets {
            let pe = match pe_cache.get(&selected) {
                Some(&pe) => pe,
                None => {
                    let pe = restricted_prediction_error(fit, train, &selected, test)?;
                    pe_cache.insert(selected.clone(), pe);
                    pe
                }
            };
            points.push(GridPoint { s: report.s, t, selected, prediction_error: pe });
        }
        reports.push(report);
    }
    Ok(GridEvaluation { points, reports })
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    pub winning_s: f64,
    pub winning_t: f64,
    pub pe_trace: Vec<GridPoint>,
    /// Report at the winning `s`.
    pub report: EvalueReport,
    pub full_fit: FittedAceModel,
}

/// Fit the full model on `train`, evaluate the grid and keep the set with the
/// lowest prediction error on `test`.
pub fn select_over_grid(train: &Dataset, test: &Dataset, config: &SelectionConfig) -> Result<SelectionResult> {
    config.validate()?;
    let fit = fit_ace(train, &FitOptions::default())?;
    select_with_fit(fit, train, test, config)
}

pub fn select_with_fit(fit: FittedAceModel, train: &Dataset, test: &Dataset, config: &SelectionConfig) -> Result<SelectionResult> {
    let grid = evaluate_grid(&fit, train, test, config)?;
    let best = best_grid_point(&grid.points).ok_or(Error::Empty("selection grid"))?.clone();
    let report = grid.report_for(best.s).expect("every s has a report").clone();
    Ok(SelectionResult {
        selected: best.selected,
        winning_s: best.s,
        winning_t: best.t,
        pe_trace: grid.points,
        report,
        full_fit: fit,
    })
}

#[cfg(test)]
mod tests;
