//! Variable selection in family-structured linear mixed models with
//! quantile e-values.
//!
//! The pipeline fits one ACE mixed model ([`lmm`]), perturbs its
//! coefficients with a generalized bootstrap ([`gboot`]), scores full and
//! drop-one coefficient draws with an evaluation map ([`evalmap`]) and keeps
//! the predictors whose drop-one tail quantiles fall below a fraction of the
//! full model's ([`selector`]). [`simgen`] generates synthetic family data
//! and [`baselines`] provides mBIC2 and single-SNP GLS comparisons.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod evalmap;
pub mod gboot;
pub mod linalg;
pub mod lmm;
pub mod pedigree;
pub mod rng;
pub mod selector;
pub mod simgen;

pub use baselines::{benjamini_hochberg, mbic2_backward, single_snp_gls_pvalues, PValueVector};
pub use dataset::{Dataset, Family};
pub use error::{Error, Result};
pub use evalmap::{empirical_quantile, evaluate, standardize, EvalDistribution, EvaluationKind, ReferenceSummary};
pub use gboot::{build_ensemble, draw_family_weights, perturb_coefficients, BootstrapEnsemble, ResamplingConfig};
pub use lmm::{fit_ace, gls_solve, profile_neg_loglik, FitOptions, FittedAceModel, FixedEffectsDesign};
pub use pedigree::{ace_covariance, build_kinship, AceVarianceComponents, ChildType, PedigreeSpec, RelationshipMatrix};
pub use selector::{
    evalue_distributions, mean_evalue_select, restricted_prediction_error, select_over_grid, select_q_intersection,
    select_single, EvalueReport, SelectionConfig, SelectionResult,
};
pub use simgen::{effect_sizes, score_selection, simulate_dataset, BlockSpec, Metrics, SimConfig, TruthSpec};
