//! Generalized-bootstrap coefficient ensembles.
//!
//! Instead of refitting the model per replicate, each bootstrap draw uses the
//! first-order representation
//!
//! `β̂_r = β̂ + s · (XᵀV̂⁻¹X)⁻¹ Σᵢ wᵢ XᵢᵀV̂ᵢ⁻¹(yᵢ − Xᵢθ̂)`
//!
//! with one centered weight `wᵢ ~ Gamma(1,1) − 1` per family, shared by all
//! of its members. The SNP block of `β̂_r` is kept.
//!
//! Everything except the weights is fixed by the full-model fit, so the
//! per-family scores are folded into a `p_g × m` loading matrix once and
//! every draw is a single matrix–vector product.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evalmap::ReferenceSummary;
use crate::lmm::{FittedAceModel, FixedEffectsDesign};
use crate::rng::{substream, tag};

/// Smallest ensemble size accepted for either collection.
pub const MIN_ENSEMBLE_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResamplingConfig {
    /// Primary ensemble size.
    pub r: usize,
    /// Reference ensemble size.
    pub r1: usize,
    /// Bootstrap standard-deviation multiplier.
    pub s: f64,
    pub seed: u64,
}

impl Default for ResamplingConfig {
    fn default() -> Self {
        Self { r: 500, r1: 500, s: 1.0, seed: 0 }
    }
}

impl ResamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r < MIN_ENSEMBLE_SIZE || self.r1 < MIN_ENSEMBLE_SIZE {
            return Err(Error::InvalidConfig(format!(
                "ensemble sizes must be at least {MIN_ENSEMBLE_SIZE}; got R = {}, R1 = {}",
                self.r, self.r1
            )));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::InvalidConfig(format!("bootstrap scale s must be positive, got {}", self.s)));
        }
        Ok(())
    }
}

/// `m` independent `Exp(1) − 1` weights.
pub fn draw_family_weights<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(m, |_, _| {
        let g: f64 = Exp1.sample(rng);
        g - 1.0
    })
}

fn check_fit_matches(fit: &FittedAceModel, dataset: &Dataset) -> Result<()> {
    let k = 1 + dataset.p_g() + dataset.p_cov();
    if fit.coefficients.len() != k || fit.per_family_v_inverse.len() != dataset.m() || fit.snp_range().len() != dataset.p_g() {
        return Err(Error::Structural(format!(
            "fit has {} coefficients over {} families; dataset needs {k} over {}",
            fit.coefficients.len(),
            fit.per_family_v_inverse.len(),
            dataset.m()
        )));
    }
    Ok(())
}

/// Per-family score vectors `XᵢᵀV̂ᵢ⁻¹(yᵢ − Xᵢθ̂)` as the columns of a `k × m` matrix.
pub fn family_scores(fit: &FittedAceModel, dataset: &Dataset) -> Result<DMatrix<f64>> {
    check_fit_matches(fit, dataset)?;
    let design = FixedEffectsDesign::full(dataset);
    let k = design.ncols();
    let mut scores = DMatrix::zeros(k, dataset.m());
    for (i, ((x, fam), vinv)) in design
        .blocks()
        .iter()
        .zip(dataset.families())
        .zip(&fit.per_family_v_inverse)
        .enumerate()
    {
        let resid = &fam.phenotype - x * &fit.coefficients;
        scores.set_column(i, &(x.transpose() * (vinv * resid)));
    }
    Ok(scores)
}

/// One bootstrap draw computed family by family from the fit.
pub fn perturb_coefficients(
    fit: &FittedAceModel,
    dataset: &Dataset,
    weights: &DVector<f64>,
    s: f64,
) -> Result<DVector<f64>> {
    if weights.len() != dataset.m() {
        return Err(Error::Structural(format!(
            "{} weights for {} families",
            weights.len(),
            dataset.m()
        )));
    }
    let scores = family_scores(fit, dataset)?;
    let weighted = scores * weights;
    let shift = &fit.coefficient_covariance * weighted;
    let range = fit.snp_range();
    Ok(fit.snp_coefficients() + shift.rows(range.start, range.len()) * s)
}

/// The fixed part of every draw: `β̂_g` and the SNP rows of `(XᵀV̂⁻¹X)⁻¹ S`.
#[derive(Debug, Clone)]
pub struct PerturbationBasis {
    pub center: DVector<f64>,
    pub loadings: DMatrix<f64>,
}

impl PerturbationBasis {
    pub fn new(fit: &FittedAceModel, dataset: &Dataset) -> Result<Self> {
        let scores = family_scores(fit, dataset)?;
        let range = fit.snp_range();
        let rows = fit.coefficient_covariance.rows(range.start, range.len());
        Ok(Self { center: fit.snp_coefficients(), loadings: rows * scores })
    }

    pub fn families(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn draw(&self, weights: &DVector<f64>, s: f64) -> DVector<f64> {
        &self.center + (&self.loadings * weights) * s
    }

    /// Draw `index` of the collection labelled `collection` under `seed`.
    fn seeded_draw(&self, seed: u64, collection: u64, index: usize, s: f64) -> DVector<f64> {
        let mut rng = substream(seed, &[collection, index as u64]);
        self.draw(&draw_family_weights(self.families(), &mut rng), s)
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapEnsemble {
    pub primary: Vec<DVector<f64>>,
    pub reference: Vec<DVector<f64>>,
    pub reference_summary: ReferenceSummary,
    /// Full-model SNP coefficients the ensemble is centered on.
    pub center: DVector<f64>,
    pub config: ResamplingConfig,
}

impl BootstrapEnsemble {
    pub fn p_g(&self) -> usize {
        self.center.len()
    }
}

pub fn build_ensemble(fit: &FittedAceModel, dataset: &Dataset, config: &ResamplingConfig) -> Result<BootstrapEnsemble> {
    config.validate()?;
    if !fit.converged {
        return Err(Error::Numerical("cannot bootstrap an unconverged fit".into()));
    }
    build_ensemble_from_basis(&PerturbationBasis::new(fit, dataset)?, config)
}

/// Draw both collections from a precomputed basis.
///
/// Draw `r` of the primary collection uses substream
/// `(seed, [PRIMARY_ENSEMBLE, r])` and draw `r` of the reference collection
/// `(seed, [REFERENCE_ENSEMBLE, r])`, so output is independent of scheduling.
pub fn build_ensemble_from_basis(basis: &PerturbationBasis, config: &ResamplingConfig) -> Result<BootstrapEnsemble> {
    config.validate()?;
    let generate = |collection: u64, count: usize| -> Vec<DVector<f64>> {
        (0..count)
            .into_par_iter()
            .map(|r| basis.seeded_draw(config.seed, collection, r, config.s))
            .collect()
    };
    let primary = generate(tag::PRIMARY_ENSEMBLE, config.r);
    let reference = generate(tag::REFERENCE_ENSEMBLE, config.r1);
    let reference_summary = ReferenceSummary::from_draws(&reference)?;
    Ok(BootstrapEnsemble { primary, reference, reference_summary, center: basis.center.clone(), config: *config })
}
