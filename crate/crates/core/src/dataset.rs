use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::pedigree::PedigreeSpec;

/// One family's observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub pedigree: PedigreeSpec,
    /// Phenotype, one entry per member in pedigree order.
    pub phenotype: DVector<f64>,
    /// Minor-allele counts, members × SNPs.
    pub genotypes: DMatrix<f64>,
    /// Members × covariates; zero columns when there are none.
    pub covariates: DMatrix<f64>,
}

impl Family {
    pub fn len(&self) -> usize {
        self.pedigree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pedigree.is_empty()
    }
}

/// A validated collection of families sharing one SNP and covariate layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    families: Vec<Family>,
    snp_ids: Vec<String>,
    covariate_ids: Vec<String>,
}

impl Dataset {
    pub fn new(families: Vec<Family>, snp_ids: Vec<String>, covariate_ids: Vec<String>) -> Result<Self> {
        if families.is_empty() {
            return Err(Error::Empty("dataset has no families"));
        }
        let p_g = snp_ids.len();
        let p = covariate_ids.len();
        for fam in &families {
            let id = fam.pedigree.family_id();
            let n = fam.len();
            if fam.phenotype.len() != n || fam.genotypes.nrows() != n || fam.covariates.nrows() != n {
                return Err(Error::Structural(format!(
                    "family {id}: {n} members but phenotype/genotype/covariate rows are {}/{}/{}",
                    fam.phenotype.len(),
                    fam.genotypes.nrows(),
                    fam.covariates.nrows()
                )));
            }
            if fam.genotypes.ncols() != p_g || fam.covariates.ncols() != p {
                return Err(Error::Structural(format!(
                    "family {id}: expected {p_g} SNP and {p} covariate columns, got {} and {}",
                    fam.genotypes.ncols(),
                    fam.covariates.ncols()
                )));
            }
            if let Some(bad) = fam.genotypes.iter().find(|&&g| !(g == 0.0 || g == 1.0 || g == 2.0)) {
                return Err(Error::Structural(format!(
                    "family {id}: genotype value {bad} outside {{0,1,2}}"
                )));
            }
            if fam.phenotype.iter().chain(fam.covariates.iter()).any(|x| !x.is_finite()) {
                return Err(Error::Structural(format!("family {id}: missing or non-finite value")));
            }
        }
        Ok(Self { families, snp_ids, covariate_ids })
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    pub fn covariate_ids(&self) -> &[String] {
        &self.covariate_ids
    }

    /// Number of families.
    pub fn m(&self) -> usize {
        self.families.len()
    }

    /// Number of individuals across all families.
    pub fn n_total(&self) -> usize {
        self.families.iter().map(Family::len).sum()
    }

    pub fn p_g(&self) -> usize {
        self.snp_ids.len()
    }

    pub fn p_cov(&self) -> usize {
        self.covariate_ids.len()
    }

    /// Families at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let families = indices
            .iter()
            .map(|&i| {
                self.families
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Structural(format!("family index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(families, self.snp_ids.clone(), self.covariate_ids.clone())
    }

    /// Same families with only the SNP columns at `columns`.
    pub fn select_snps(&self, columns: &[usize]) -> Result<Self> {
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.p_g()) {
            return Err(Error::Structural(format!("SNP column {bad} out of range")));
        }
        let families = self
            .families
            .iter()
            .map(|f| Family { genotypes: f.genotypes.select_columns(columns), ..f.clone() })
            .collect();
        let ids = columns.iter().map(|&c| self.snp_ids[c].clone()).collect();
        Self::new(families, ids, self.covariate_ids.clone())
    }

    /// All phenotypes stacked in family order.
    pub fn stacked_phenotype(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_total(),
            self.families.iter().flat_map(|f| f.phenotype.iter().copied()),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pedigree::ChildType;

    fn fam(id: &str, g: f64) -> Family {
        Family {
            pedigree: PedigreeSpec::nuclear(id, ChildType::Dz),
            phenotype: DVector::from_element(4, 1.0),
            genotypes: DMatrix::from_element(4, 2, g),
            covariates: DMatrix::zeros(4, 0),
        }
    }

    #[test]
    fn accepts_consistent_layout() {
        let ds = Dataset::new(vec![fam("a", 0.0), fam("b", 2.0)], vec!["s1".into(), "s2".into()], vec![]).unwrap();
        assert_eq!((ds.m(), ds.n_total(), ds.p_g(), ds.p_cov()), (2, 8, 2, 0));
        assert_eq!(ds.subset(&[1]).unwrap().families()[0].pedigree.family_id(), "b");
        assert_eq!(ds.select_snps(&[1]).unwrap().snp_ids(), &["s2".to_string()]);
    }

    #[test]
    fn rejects_bad_genotype_and_shapes() {
        let ids = vec!["s1".to_string(), "s2".to_string()];
        assert!(Dataset::new(vec![fam("a", 3.0)], ids.clone(), vec![]).is_err());
        assert!(Dataset::new(vec![fam("a", 1.0)], vec!["s1".into()], vec![]).is_err());
        let mut short = fam("a", 1.0);
        short.phenotype = DVector::from_element(3, 0.0);
        assert!(Dataset::new(vec![short], ids.clone(), vec![]).is_err());
        let mut missing = fam("a", 1.0);
        missing.phenotype[0] = f64::NAN;
        assert!(Dataset::new(vec![missing], ids, vec![]).is_err());
    }
}
