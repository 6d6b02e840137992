//! Generalized least squares over block-diagonal covariances.

use nalgebra::{DMatrix, DVector};

use super::design::FixedEffectsDesign;
use crate::error::{Error, Result};
use crate::linalg::{rank_error, spd_inverse_logdet, spd_solve, collinear_columns};
use crate::pedigree::{ace_covariance_unchecked, AceVarianceComponents};

#[derive(Debug, Clone, PartialEq)]
pub struct GlsEstimate {
    pub coefficients: DVector<f64>,
    /// `(Σ XᵢᵀVᵢ⁻¹Xᵢ)⁻¹`.
    pub covariance: DMatrix<f64>,
}

/// Blockwise GLS: `(Σ XᵢᵀVᵢ⁻¹Xᵢ)⁻¹ Σ XᵢᵀVᵢ⁻¹yᵢ`.
pub fn gls_solve(
    design: &FixedEffectsDesign,
    responses: &[DVector<f64>],
    v_inverses: &[DMatrix<f64>],
) -> Result<GlsEstimate> {
    let m = design.blocks().len();
    if responses.len() != m || v_inverses.len() != m {
        return Err(Error::Structural(format!(
            "{m} design blocks but {} responses and {} covariance inverses",
            responses.len(),
            v_inverses.len()
        )));
    }
    let k = design.ncols();
    let mut normal = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for ((x, y), vinv) in design.blocks().iter().zip(responses).zip(v_inverses) {
        let n = x.nrows();
        if y.len() != n || vinv.nrows() != n || vinv.ncols() != n {
            return Err(Error::Structural("family block dimensions disagree".into()));
        }
        let xt_vinv = x.transpose() * vinv;
        normal += &xt_vinv * x;
        rhs += &xt_vinv * y;
    }
    let (coefficients, covariance) = spd_solve(&normal, &rhs, design.labels())?;
    Ok(GlsEstimate { coefficients, covariance })
}

/// Families sharing one relationship matrix, with their cross-products
/// pre-summed by member position.
#[derive(Debug, Clone)]
struct KinshipGroup {
    phi: DMatrix<f64>,
    count: usize,
    /// For positions a ≤ b (upper-triangle order): `Σ xₐx_bᵀ + x_bxₐᵀ`
    /// (a single term when a = b).
    xx: Vec<DMatrix<f64>>,
    xy: Vec<DVector<f64>>,
    yy: Vec<f64>,
}

impl KinshipGroup {
    fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..n).flat_map(move |a| (a..n).map(move |b| (a, b)))
    }
}

/// Sufficient statistics of the Gaussian likelihood for a fixed design.
///
/// Families are grouped by relationship matrix, so assembling the normal
/// equations for new variance components costs `O(n² k²)` per group and
/// nothing per family.
#[derive(Debug, Clone)]
pub struct SufficientStats {
    groups: Vec<KinshipGroup>,
    labels: Vec<String>,
    n_total: usize,
}

impl SufficientStats {
    pub fn new(design: &FixedEffectsDesign, responses: &[DVector<f64>], phis: &[DMatrix<f64>]) -> Result<Self> {
        let k = design.ncols();
        let mut groups: Vec<KinshipGroup> = Vec::new();
        let mut n_total = 0;
        if responses.len() != design.blocks().len() || phis.len() != design.blocks().len() {
            return Err(Error::Structural("design, responses and kinship counts differ".into()));
        }
        for ((x, y), phi) in design.blocks().iter().zip(responses).zip(phis) {
            let n = x.nrows();
            if y.len() != n || phi.nrows() != n {
                return Err(Error::Structural("family block dimensions disagree".into()));
            }
            n_total += n;
            let idx = match groups.iter().position(|g| &g.phi == phi) {
                Some(i) => i,
                None => {
                    let pairs = n * (n + 1) / 2;
                    groups.push(KinshipGroup {
                        phi: phi.clone(),
                        count: 0,
                        xx: vec![DMatrix::zeros(k, k); pairs],
                        xy: vec![DVector::zeros(k); 2 * pairs],
                        yy: vec![0.0; pairs],
                    });
                    groups.len() - 1
                }
            };
            let g = &mut groups[idx];
            g.count += 1;
            for (p, (a, b)) in KinshipGroup::pairs(n).enumerate() {
                let xa = x.row(a).transpose();
                let xb = x.row(b).transpose();
                if a == b {
                    g.xx[p].ger(1.0, &xa, &xa, 1.0);
                    g.yy[p] += y[a] * y[a];
                    g.xy[2 * p].axpy(y[a], &xa, 1.0);
                } else {
                    g.xx[p].ger(1.0, &xa, &xb, 1.0);
                    g.xx[p].ger(1.0, &xb, &xa, 1.0);
                    g.yy[p] += 2.0 * y[a] * y[b];
                    g.xy[2 * p].axpy(y[b], &xa, 1.0);
                    g.xy[2 * p + 1].axpy(y[a], &xb, 1.0);
                }
            }
        }
        Ok(Self { groups, labels: design.labels().to_vec(), n_total })
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Normal equations under `vc`. `None` when some `Vᵢ` is not positive definite.
    pub fn assemble(&self, vc: &AceVarianceComponents) -> Option<GlsSystem> {
        let k = self.labels.len();
        let mut normal = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        let mut yvy = 0.0;
        let mut logdet = 0.0;
        for g in &self.groups {
            let v = ace_covariance_unchecked(&g.phi, vc);
            let (vinv, ld) = spd_inverse_logdet(&v)?;
            logdet += g.count as f64 * ld;
            let n = g.phi.nrows();
            for (p, (a, b)) in KinshipGroup::pairs(n).enumerate() {
                let w = vinv[(a, b)];
                normal.zip_apply(&g.xx[p], |acc, x| *acc += w * x);
                yvy += w * g.yy[p];
                rhs.axpy(w, &g.xy[2 * p], 1.0);
                if a != b {
                    rhs.axpy(w, &g.xy[2 * p + 1], 1.0);
                }
            }
        }
        Some(GlsSystem { normal, rhs, yvy, logdet, n_total: self.n_total, labels: self.labels.clone() })
    }
}

/// Assembled GLS normal equations `XᵀV⁻¹X`, `XᵀV⁻¹y`, `yᵀV⁻¹y`.
#[derive(Debug, Clone)]
pub struct GlsSystem {
    pub normal: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub yvy: f64,
    /// `Σ log|Vᵢ|`.
    pub logdet: f64,
    pub n_total: usize,
    pub labels: Vec<String>,
}

/// GLS fit on a subset of design columns.
#[derive(Debug, Clone)]
pub struct SubsetFit {
    pub columns: Vec<usize>,
    pub coefficients: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// `(y − Xβ̂)ᵀV⁻¹(y − Xβ̂)`.
    pub weighted_rss: f64,
}

impl GlsSystem {
    pub fn solve(&self) -> Result<SubsetFit> {
        let all: Vec<usize> = (0..self.labels.len()).collect();
        self.solve_subset(&all)
    }

    pub fn solve_subset(&self, columns: &[usize]) -> Result<SubsetFit> {
        let a = self.normal.select_rows(columns).select_columns(columns);
        let b = DVector::from_iterator(columns.len(), columns.iter().map(|&c| self.rhs[c]));
        let labels: Vec<String> = columns.iter().map(|&c| self.labels[c].clone()).collect();
        let (coefficients, covariance) = spd_solve(&a, &b, &labels)?;
        let weighted_rss = (self.yvy - b.dot(&coefficients)).max(0.0);
        Ok(SubsetFit { columns: columns.to_vec(), coefficients, covariance, weighted_rss })
    }

    /// Collinear design columns, if any.
    pub fn check_rank(&self) -> Result<()> {
        let dropped = collinear_columns(&self.normal);
        if dropped.is_empty() {
            Ok(())
        } else {
            Err(rank_error(&dropped, &self.labels))
        }
    }

    /// −2 log-likelihood with the fixed effects profiled out.
    pub fn neg2_loglik(&self) -> Result<f64> {
        let fit = self.solve()?;
        Ok(self.n_total as f64 * (2.0 * std::f64::consts::PI).ln() + self.logdet + fit.weighted_rss)
    }
}
