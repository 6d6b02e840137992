//! Maximum-likelihood fitting of the ACE linear mixed model
//!
//! `yᵢ = Xᵢθ + εᵢ`, `εᵢ ~ N(0, a2·Φᵢ + c2·11ᵀ + e2·I)`.
//!
//! Fixed effects are profiled out by GLS; the three variance components are
//! found by a Nelder–Mead search over their logarithms, each floored at
//! [`VARIANCE_FLOOR`].

mod design;
mod gls;
pub mod optim;

pub use design::{FixedEffectsDesign, INTERCEPT};
pub use gls::{gls_solve, GlsEstimate, GlsSystem, SubsetFit, SufficientStats};

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pedigree::{ace_covariance_unchecked, build_kinship, AceVarianceComponents};
use optim::{nelder_mead, Minimum, NelderMeadOptions};

/// Lower bound applied to every variance component during optimization.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Start fractions of the phenotypic variance for (a2, c2, e2). The first is
/// the primary start; the others guard against local minima.
const START_SPLITS: [[f64; 3]; 3] = [[0.5, 0.25, 0.25], [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], [0.1, 0.6, 0.3]];

/// Relationship matrices for every family, in dataset order.
pub fn family_kinships(dataset: &Dataset) -> Result<Vec<DMatrix<f64>>> {
    dataset
        .families()
        .iter()
        .map(|f| build_kinship(&f.pedigree).map(|k| k.into_inner()))
        .collect()
}

fn responses(dataset: &Dataset) -> Vec<DVector<f64>> {
    dataset.families().iter().map(|f| f.phenotype.clone()).collect()
}

/// Profiled Gaussian likelihood of one dataset under a fixed design.
#[derive(Debug, Clone)]
pub struct AceLikelihood {
    stats: SufficientStats,
}

impl AceLikelihood {
    pub fn new(dataset: &Dataset, design: &FixedEffectsDesign) -> Result<Self> {
        let phis = family_kinships(dataset)?;
        let stats = SufficientStats::new(design, &responses(dataset), &phis)?;
        Ok(Self { stats })
    }

    pub fn stats(&self) -> &SufficientStats {
        &self.stats
    }

    /// −2 log-likelihood at `vc`; `+∞` when some `Vᵢ` is not positive definite.
    pub fn neg2_loglik(&self, vc: &AceVarianceComponents) -> Result<f64> {
        match self.stats.assemble(vc) {
            Some(system) => system.neg2_loglik(),
            None => Ok(f64::INFINITY),
        }
    }
}

/// −2 log-likelihood of the full fixed-effect model at `vc`.
pub fn profile_neg_loglik(dataset: &Dataset, vc: &AceVarianceComponents) -> Result<f64> {
    AceLikelihood::new(dataset, &FixedEffectsDesign::full(dataset))?.neg2_loglik(vc)
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub tolerance: f64,
    pub max_iters: usize,
    pub init: Option<AceVarianceComponents>,
    pub multi_start: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iters: 2000, init: None, multi_start: true }
    }
}

#[derive(Debug, Clone)]
pub struct FittedAceModel {
    /// `[intercept, SNPs…, covariates…]`.
    pub coefficients: DVector<f64>,
    pub labels: Vec<String>,
    pub vc: AceVarianceComponents,
    pub coefficient_covariance: DMatrix<f64>,
    pub per_family_v_inverse: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Best −2 log-likelihood after each optimizer iteration of the winning start.
    pub trace: Vec<f64>,
    pub warning: Option<String>,
    snp_count: usize,
}

impl FittedAceModel {
    pub fn neg2_loglik(&self) -> f64 {
        -2.0 * self.log_likelihood
    }

    /// Position of the SNP block inside `coefficients`.
    pub fn snp_range(&self) -> std::ops::Range<usize> {
        1..1 + self.snp_count
    }

    pub fn snp_coefficients(&self) -> DVector<f64> {
        self.coefficients.rows(1, self.snp_count).into_owned()
    }
}

fn vc_from_log(u: &[f64]) -> AceVarianceComponents {
    let floor = |x: f64| x.exp().max(VARIANCE_FLOOR);
    AceVarianceComponents { sigma_a2: floor(u[0]), sigma_c2: floor(u[1]), sigma_e2: floor(u[2]) }
}

fn vc_to_log(vc: &AceVarianceComponents) -> [f64; 3] {
    [vc.sigma_a2, vc.sigma_c2, vc.sigma_e2].map(|x| x.max(VARIANCE_FLOOR).ln())
}

/// Sample variance of all phenotypes, falling back to 1 for constant data.
fn phenotypic_variance(dataset: &Dataset) -> f64 {
    let y = dataset.stacked_phenotype();
    let n = y.len();
    if n < 2 {
        return 1.0;
    }
    let mean = y.mean();
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var > 0.0 && var.is_finite() {
        var
    } else {
        1.0
    }
}

/// Fit the ACE model with all SNPs and covariates as fixed effects.
pub fn fit_ace(dataset: &Dataset, options: &FitOptions) -> Result<FittedAceModel> {
    fit_ace_with_design(dataset, &FixedEffectsDesign::full(dataset), options)
}

pub fn fit_ace_with_design(
    dataset: &Dataset,
    design: &FixedEffectsDesign,
    options: &FitOptions,
) -> Result<FittedAceModel> {
    let likelihood = AceLikelihood::new(dataset, design)?;
    let identity = AceVarianceComponents { sigma_a2: 0.0, sigma_c2: 0.0, sigma_e2: 1.0 };
    likelihood
        .stats
        .assemble(&identity)
        .ok_or_else(|| Error::Numerical("identity covariance failed to factor".into()))?
        .check_rank()?;

    let objective = |u: &[f64]| match likelihood.stats.assemble(&vc_from_log(u)) {
        Some(system) => system.neg2_loglik().unwrap_or(f64::INFINITY),
        None => f64::INFINITY,
    };
    let nm = NelderMeadOptions {
        f_tolerance: options.tolerance,
        x_tolerance: options.tolerance,
        max_iters: options.max_iters,
        initial_step: 0.5,
    };

    let total = phenotypic_variance(dataset);
    let mut starts: Vec<[f64; 3]> = Vec::new();
    match options.init {
        Some(vc) => starts.push(vc_to_log(&vc)),
        None => starts.push(START_SPLITS[0].map(|f| (f * total).ln())),
    }
    if options.multi_start {
        starts.extend(START_SPLITS[1..].iter().map(|s| s.map(|f| (f * total).ln())));
    }

    let mut best: Option<Minimum> = None;
    for start in &starts {
        let run = nelder_mead(objective, start, &nm);
        if best.as_ref().is_none_or(|b| run.value < b.value) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one start");
    // A fresh simplex at the optimum catches premature collapse.
    let polish = nelder_mead(objective, &best.x, &NelderMeadOptions { initial_step: 0.1, ..nm });
    let converged = best.converged && polish.converged;
    let iterations = best.iterations + polish.iterations;
    if polish.value <= best.value {
        best.trace.extend(polish.trace.iter().copied());
        best.x = polish.x;
        best.value = polish.value;
    }
    if !best.value.is_finite() {
        return Err(Error::Numerical("likelihood is infinite at every start point".into()));
    }

    let vc = vc_from_log(&best.x);
    let system = likelihood
        .stats
        .assemble(&vc)
        .ok_or_else(|| Error::Numerical("fitted covariance is not positive definite".into()))?;
    let fit = system.solve()?;
    let neg2 = system.neg2_loglik()?;

    let phis = family_kinships(dataset)?;
    let mut cache: Vec<(&DMatrix<f64>, DMatrix<f64>)> = Vec::new();
    let mut per_family_v_inverse = Vec::with_capacity(phis.len());
    for phi in &phis {
        let inv = match cache.iter().find(|(p, _)| *p == phi) {
            Some((_, inv)) => inv.clone(),
            None => {
                let inv = ace_covariance_unchecked(phi, &vc)
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("fitted covariance is not positive definite".into()))?
                    .inverse();
                cache.push((phi, inv.clone()));
                inv
            }
        };
        per_family_v_inverse.push(inv);
    }

    let warning = (!converged).then(|| {
        format!("variance-component search stopped after {iterations} iterations without meeting tolerance")
    });
    Ok(FittedAceModel {
        coefficients: fit.coefficients,
        labels: design.labels().to_vec(),
        vc,
        coefficient_covariance: fit.covariance,
        per_family_v_inverse,
        log_likelihood: -0.5 * neg2,
        converged,
        iterations,
        trace: best.trace,
        warning,
        snp_count: design.snp_range().len(),
    })
}

#[cfg(test)]
mod tests;
