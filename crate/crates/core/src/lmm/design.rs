use nalgebra::DMatrix;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(intercept)";

/// Per-family fixed-effect design blocks `[1 | G | C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedEffectsDesign {
    blocks: Vec<DMatrix<f64>>,
    labels: Vec<String>,
    /// Dataset SNP column behind each SNP design column.
    snp_columns: Vec<usize>,
}

impl FixedEffectsDesign {
    /// Intercept, every SNP, then every covariate.
    pub fn full(dataset: &Dataset) -> Self {
        let all: Vec<usize> = (0..dataset.p_g()).collect();
        Self::with_snps(dataset, &all).expect("all columns are in range")
    }

    /// Intercept, the SNPs at `snp_columns` (in that order), then every covariate.
    pub fn with_snps(dataset: &Dataset, snp_columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = snp_columns.iter().find(|&&c| c >= dataset.p_g()) {
            return Err(Error::Structural(format!("SNP column {bad} out of range")));
        }
        let k = 1 + snp_columns.len() + dataset.p_cov();
        let blocks = dataset
            .families()
            .iter()
            .map(|fam| {
                let n = fam.len();
                let mut x = DMatrix::zeros(n, k);
                x.column_mut(0).fill(1.0);
                for (c, &j) in snp_columns.iter().enumerate() {
                    x.column_mut(1 + c).copy_from(&fam.genotypes.column(j));
                }
                let off = 1 + snp_columns.len();
                for c in 0..dataset.p_cov() {
                    x.column_mut(off + c).copy_from(&fam.covariates.column(c));
                }
                x
            })
            .collect();
        let mut labels = Vec::with_capacity(k);
        labels.push(INTERCEPT.to_string());
        labels.extend(snp_columns.iter().map(|&j| dataset.snp_ids()[j].clone()));
        labels.extend(dataset.covariate_ids().iter().cloned());
        Ok(Self { blocks, labels, snp_columns: snp_columns.to_vec() })
    }

    /// Build directly from blocks; all blocks must share a column count.
    pub fn from_blocks(blocks: Vec<DMatrix<f64>>, labels: Vec<String>) -> Result<Self> {
        if blocks.iter().any(|b| b.ncols() != labels.len()) {
            return Err(Error::Structural("design block column count differs from label count".into()));
        }
        Ok(Self { blocks, labels, snp_columns: Vec::new() })
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn ncols(&self) -> usize {
        self.labels.len()
    }

    pub fn snp_columns(&self) -> &[usize] {
        &self.snp_columns
    }

    /// Design columns holding SNP effects.
    pub fn snp_range(&self) -> std::ops::Range<usize> {
        1..1 + self.snp_columns.len()
    }
}
