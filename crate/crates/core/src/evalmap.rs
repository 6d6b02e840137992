//! Evaluation maps scoring a point against a bootstrap reference, plus the
//! empirical quantile used to summarize their distributions.
//!
//! Both maps only see the reference through its per-coordinate mean and
//! standard deviation:
//!
//! * `E1(x) = 1 / (1 + ‖z‖²)`
//! * `E2(x) = exp(−‖z‖)`
//!
//! with `z = (x − mean) / sd`. Both lie in `(0, 1]` and equal 1 only at the
//! mean.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvaluationKind {
    E1,
    E2,
}

impl EvaluationKind {
    /// Score as a function of the squared standardized norm.
    #[inline]
    pub fn score_from_sq_norm(self, sq_norm: f64) -> f64 {
        match self {
            EvaluationKind::E1 => 1.0 / (1.0 + sq_norm),
            EvaluationKind::E2 => (-sq_norm.sqrt()).exp(),
        }
    }
}

impl fmt::Display for EvaluationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvaluationKind::E1 => "E1",
            EvaluationKind::E2 => "E2",
        })
    }
}

impl FromStr for EvaluationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "E1" => Ok(EvaluationKind::E1),
            "E2" => Ok(EvaluationKind::E2),
            other => Err(Error::InvalidConfig(format!("unknown evaluation map {other:?}"))),
        }
    }
}

/// Per-coordinate mean and standard deviation of a reference ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSummary {
    pub mean: DVector<f64>,
    pub sd: DVector<f64>,
}

impl ReferenceSummary {
    pub fn new(mean: DVector<f64>, sd: DVector<f64>) -> Result<Self> {
        if mean.len() != sd.len() {
            return Err(Error::Structural("reference mean and sd lengths differ".into()));
        }
        check_sd(&sd)?;
        Ok(Self { mean, sd })
    }

    /// Sample moments (denominator `R − 1`) of `draws`.
    pub fn from_draws(draws: &[DVector<f64>]) -> Result<Self> {
        let r = draws.len();
        if r < 2 {
            return Err(Error::Empty("reference ensemble needs at least two draws"));
        }
        let p = draws[0].len();
        let mut mean = DVector::zeros(p);
        for d in draws {
            mean += d;
        }
        mean /= r as f64;
        let mut var = DVector::<f64>::zeros(p);
        for d in draws {
            let c = d - &mean;
            var += c.component_mul(&c);
        }
        let sd = (var / (r - 1) as f64).map(f64::sqrt);
        Self::new(mean, sd)
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Smallest standard deviation accepted in a reference.
pub const MIN_REFERENCE_SD: f64 = 1e-12;

fn check_sd(sd: &DVector<f64>) -> Result<()> {
    match sd.iter().position(|&s| !(s >= MIN_REFERENCE_SD) || !s.is_finite()) {
        Some(coordinate) => Err(Error::DegenerateReference { coordinate }),
        None => Ok(()),
    }
}

/// `z_j = (x_j − mean_j) / sd_j`.
pub fn standardize(x: &DVector<f64>, mean: &DVector<f64>, sd: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != mean.len() || x.len() != sd.len() {
        return Err(Error::Structural(format!(
            "standardize: lengths {} / {} / {} differ",
            x.len(),
            mean.len(),
            sd.len()
        )));
    }
    check_sd(sd)?;
    Ok(DVector::from_fn(x.len(), |j, _| (x[j] - mean[j]) / sd[j]))
}

pub fn evaluate(x: &DVector<f64>, reference: &ReferenceSummary, kind: EvaluationKind) -> Result<f64> {
    let z = standardize(x, &reference.mean, &reference.sd)?;
    Ok(kind.score_from_sq_norm(z.norm_squared()))
}

/// A sample of evaluation-map scores for one candidate model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDistribution {
    pub values: Vec<f64>,
    pub kind: EvaluationKind,
    /// Dropped predictor, or `"full"`.
    pub label: String,
}

impl EvalDistribution {
    pub fn quantile(&self, q: f64) -> Result<f64> {
        empirical_quantile(&self.values, q)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Rank `⌈q·n⌉` (1-based), with products within rounding of an integer
/// taken as that integer so e.g. `0.7 × 10` gives 7.
pub fn quantile_rank(q: f64, n: usize) -> usize {
    let x = q * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * (n as f64).max(1.0) { nearest } else { x.ceil() };
    (k as usize).clamp(1, n)
}

fn check_probability(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("quantile level {q} outside (0, 1)")))
    }
}

/// The `⌈q·n⌉`-th order statistic of `values`.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("empirical quantile of an empty sample"));
    }
    check_probability(q)?;
    let k = quantile_rank(q, values.len());
    let mut v = values.to_vec();
    let (_, nth, _) = v.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*nth)
}

/// Same as [`empirical_quantile`] for an already ascending slice.
pub fn quantile_of_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::Empty("empirical quantile of an empty sample"));
    }
    check_probability(q)?;
    Ok(sorted[quantile_rank(q, sorted.len()) - 1])
}
