//! Comparison selectors: mBIC2 backward deletion on an ordinary linear model
//! and single-SNP GLS t-tests with Benjamini–Hochberg control.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::lmm::{fit_ace_with_design, AceLikelihood, FitOptions, FixedEffectsDesign, GlsSystem};
use crate::pedigree::AceVarianceComponents;

/// Constant in the mBIC2 `2k·log(p/c)` term.
pub const MBIC2_DEFAULT_CONSTANT: f64 = 4.0;

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// `n·log(RSS/n) + k·log(n) + 2k·log(p/c) − 2·log(k!)`.
pub fn mbic2_criterion(n: usize, rss: f64, k: usize, p_g: usize, constant: f64) -> f64 {
    let n_f = n as f64;
    let k_f = k as f64;
    n_f * (rss.max(f64::MIN_POSITIVE) / n_f).ln() + k_f * n_f.ln() + 2.0 * k_f * (p_g as f64 / constant).ln()
        - 2.0 * ln_factorial(k)
}

fn identity_system(dataset: &Dataset) -> Result<GlsSystem> {
    let identity = AceVarianceComponents { sigma_a2: 0.0, sigma_c2: 0.0, sigma_e2: 1.0 };
    let lik = AceLikelihood::new(dataset, &FixedEffectsDesign::full(dataset))?;
    lik.stats()
        .assemble(&identity)
        .ok_or_else(|| Error::Numerical("identity covariance failed to factor".into()))
}

/// Backward deletion under mBIC2 with the default penalty constant.
pub fn mbic2_backward(dataset: &Dataset) -> Result<Vec<usize>> {
    mbic2_backward_with(dataset, MBIC2_DEFAULT_CONSTANT)
}

/// Start from every SNP in an ordinary least-squares model (intercept and
/// covariates always kept) and repeatedly drop the SNP whose removal lowers
/// the criterion most; ties go to the lowest index.
pub fn mbic2_backward_with(dataset: &Dataset, constant: f64) -> Result<Vec<usize>> {
    let system = identity_system(dataset)?;
    system.check_rank()?;
    let n = dataset.n_total();
    let p_g = dataset.p_g();
    let covariate_cols: Vec<usize> = (1 + p_g..1 + p_g + dataset.p_cov()).collect();
    let criterion = |snps: &[usize]| -> Result<f64> {
        let mut cols = vec![0];
        cols.extend(snps.iter().map(|&j| 1 + j));
        cols.extend(&covariate_cols);
        let fit = system.solve_subset(&cols)?;
        Ok(mbic2_criterion(n, fit.weighted_rss, snps.len(), p_g, constant))
    };

    let mut current: Vec<usize> = (0..p_g).collect();
    let mut current_value = criterion(&current)?;
    while !current.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for pos in 0..current.len() {
            let mut trial = current.clone();
            trial.remove(pos);
            let value = criterion(&trial)?;
            if best.is_none_or(|(_, b)| value < b) {
                best = Some((pos, value));
            }
        }
        let (pos, value) = best.expect("nonempty set");
        if value < current_value {
            current.remove(pos);
            current_value = value;
        } else {
            break;
        }
    }
    Ok(current)
}

/// Per-SNP two-sided t-test results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueVector {
    pub pvalues: Vec<f64>,
    pub statistics: Vec<f64>,
    pub df: usize,
}

/// Single-SNP GLS tests with variance components from the SNP-free model.
pub fn single_snp_gls_pvalues(dataset: &Dataset) -> Result<PValueVector> {
    let null_design = FixedEffectsDesign::with_snps(dataset, &[])?;
    let null_fit = fit_ace_with_design(dataset, &null_design, &FitOptions::default())?;
    single_snp_gls_pvalues_with_vc(dataset, &null_fit.vc)
}

/// Single-SNP GLS tests with `V` frozen at `vc`.
///
/// Each SNP gets design `[1 | g_j | C]`; the residual scale is re-estimated
/// as the weighted residual sum of squares over `N − (p + 2)` degrees of
/// freedom, so `vc = (0, 0, 1)` reproduces ordinary per-SNP t-tests.
pub fn single_snp_gls_pvalues_with_vc(dataset: &Dataset, vc: &AceVarianceComponents) -> Result<PValueVector> {
    let lik = AceLikelihood::new(dataset, &FixedEffectsDesign::full(dataset))?;
    let system = lik
        .stats()
        .assemble(vc)
        .ok_or_else(|| Error::Numerical("frozen covariance is not positive definite".into()))?;
    let p_g = dataset.p_g();
    let p = dataset.p_cov();
    let n = dataset.n_total();
    if n <= p + 2 {
        return Err(Error::Structural(format!("{n} observations leave no residual degrees of freedom")));
    }
    let df = n - (p + 2);
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    let covariate_cols: Vec<usize> = (1 + p_g..1 + p_g + p).collect();

    let mut pvalues = Vec::with_capacity(p_g);
    let mut statistics = Vec::with_capacity(p_g);
    for j in 0..p_g {
        let mut cols = vec![0, 1 + j];
        cols.extend(&covariate_cols);
        match system.solve_subset(&cols) {
            Ok(fit) => {
                let sigma2 = fit.weighted_rss / df as f64;
                let se = (sigma2 * fit.covariance[(1, 1)]).sqrt();
                let stat = fit.coefficients[1] / se;
                let pv = if stat.is_finite() { (2.0 * dist.sf(stat.abs())).min(1.0) } else { 0.0 };
                statistics.push(stat);
                pvalues.push(pv);
            }
            // A SNP with no variation carries no evidence.
            Err(Error::RankDeficient { .. }) => {
                statistics.push(0.0);
                pvalues.push(1.0);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(PValueVector { pvalues, statistics, df })
}

/// Benjamini–Hochberg step-up: indices of the `k` smallest p-values, `k` the
/// largest rank with `p_(k) ≤ k·level/m`. Returned in ascending index order.
pub fn benjamini_hochberg(pvalues: &[f64], level: f64) -> Result<Vec<usize>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("FDR level {level} outside (0, 1)")));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let cutoff = order
        .iter()
        .enumerate()
        .filter(|&(rank, &j)| pvalues[j] <= (rank + 1) as f64 * level / m as f64)
        .map(|(rank, _)| rank + 1)
        .last()
        .unwrap_or(0);
    let mut chosen: Vec<usize> = order[..cutoff].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

#[cfg(test)]
mod tests;
