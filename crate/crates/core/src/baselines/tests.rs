use super::*;
use crate::dataset::Family;
use crate::pedigree::{ChildType, PedigreeSpec};
use crate::rng::substream;
use crate::simgen::{simulate_dataset, SimConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn sim(h: f64, m: usize, seed: u64) -> Dataset {
    let config = SimConfig { m, h, ..Default::default() };
    simulate_dataset(&config, &mut substream(seed, &[])).unwrap().0
}

/// Same families with the given genotype columns replaced.
fn with_genotypes(ds: &Dataset, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Dataset {
    let fams: Vec<Family> = ds.families().iter().map(|fam| Family { genotypes: f(&fam.genotypes), ..fam.clone() }).collect();
    let p = fams[0].genotypes.ncols();
    Dataset::new(fams, (0..p).map(|j| format!("s{j}")).collect(), vec![]).unwrap()
}

#[test]
fn bh_examples() {
    assert_eq!(benjamini_hochberg(&[0.01, 0.02, 0.5], 0.05).unwrap(), vec![0, 1]);
    assert!(benjamini_hochberg(&[1.0; 7], 0.05).unwrap().is_empty());
    assert_eq!(benjamini_hochberg(&[0.04], 0.05).unwrap(), vec![0]);
    // Step-up: a p-value above its own cutoff is still rejected under a later one.
    assert_eq!(benjamini_hochberg(&[0.5, 0.03, 0.032, 0.001], 0.05).unwrap(), vec![1, 2, 3]);
    assert!(benjamini_hochberg(&[], 0.05).unwrap().is_empty());
    assert!(benjamini_hochberg(&[0.1], 0.0).is_err());
    assert!(benjamini_hochberg(&[0.1], 1.0).is_err());
}

proptest! {
    #[test]
    fn bh_is_monotone_in_level(p in prop::collection::vec(0.0f64..1.0, 1..40), a in 0.001f64..0.5, d in 0.0f64..0.4) {
        let small: std::collections::BTreeSet<_> = benjamini_hochberg(&p, a).unwrap().into_iter().collect();
        let large: std::collections::BTreeSet<_> = benjamini_hochberg(&p, (a + d).min(0.99)).unwrap().into_iter().collect();
        prop_assert!(small.is_subset(&large));
    }

    #[test]
    fn bh_matches_brute_force(p in prop::collection::vec(0.0f64..0.2, 1..20), level in 0.01f64..0.3) {
        let m = p.len();
        let mut sorted = p.clone();
        sorted.sort_by(f64::total_cmp);
        let k = (1..=m).rev().find(|&k| sorted[k - 1] <= k as f64 * level / m as f64).unwrap_or(0);
        let chosen = benjamini_hochberg(&p, level).unwrap();
        prop_assert_eq!(chosen.len(), k);
        if k > 0 {
            prop_assert!(chosen.iter().all(|&j| p[j] <= sorted[k - 1]));
        }
    }
}

#[test]
fn mbic2_criterion_values() {
    let base = mbic2_criterion(1000, 500.0, 0, 50, 4.0);
    assert!((base - 1000.0 * 0.5f64.ln()).abs() < 1e-12);
    let two = mbic2_criterion(1000, 500.0, 2, 50, 4.0);
    let expected = base + 2.0 * 1000f64.ln() + 4.0 * 12.5f64.ln() - 2.0 * 2f64.ln();
    assert!((two - expected).abs() < 1e-12);
}

/// Ordinary least squares t-tests computed on the stacked data.
fn ols_t_statistics(ds: &Dataset) -> Vec<f64> {
    let n = ds.n_total();
    let y = ds.stacked_phenotype();
    (0..ds.p_g())
        .map(|j| {
            let g: Vec<f64> = ds.families().iter().flat_map(|f| f.genotypes.column(j).iter().copied().collect::<Vec<_>>()).collect();
            let x = DMatrix::from_fn(n, 2, |i, c| if c == 0 { 1.0 } else { g[i] });
            let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
            let beta = &xtx_inv * x.transpose() * &y;
            let rss = (&y - &x * &beta).norm_squared();
            beta[1] / (rss / (n - 2) as f64 * xtx_inv[(1, 1)]).sqrt()
        })
        .collect()
}

#[test]
fn identity_covariance_reduces_to_ols_t_tests() {
    let ds = sim(10.0, 60, 1);
    let identity = AceVarianceComponents::new(0.0, 0.0, 1.0).unwrap();
    let result = single_snp_gls_pvalues_with_vc(&ds, &identity).unwrap();
    assert_eq!(result.df, ds.n_total() - 2);
    let oracle = ols_t_statistics(&ds);
    let dist = StudentsT::new(0.0, 1.0, result.df as f64).unwrap();
    for j in 0..ds.p_g() {
        assert!((result.statistics[j] - oracle[j]).abs() < 1e-8, "snp {j}");
        assert!((result.pvalues[j] - 2.0 * dist.sf(oracle[j].abs())).abs() < 1e-8);
    }
}

#[test]
fn identical_snps_get_identical_pvalues() {
    let ds = with_genotypes(&sim(10.0, 80, 2), |g| {
        let mut g = g.clone();
        g.set_column(9, &g.column(0).clone_owned());
        g
    });
    let result = single_snp_gls_pvalues(&ds).unwrap();
    assert_eq!(result.pvalues[0], result.pvalues[9]);
    assert_eq!(result.statistics[0], result.statistics[9]);
    assert!(result.pvalues.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn monomorphic_snp_is_uninformative() {
    let ds = with_genotypes(&sim(10.0, 50, 3), |g| {
        let mut g = g.clone();
        g.column_mut(3).fill(1.0);
        g
    });
    let result = single_snp_gls_pvalues(&ds).unwrap();
    assert_eq!(result.pvalues[3], 1.0);
}

fn dominant_dataset(seed: u64) -> Dataset {
    let mut rng = substream(seed, &[]);
    let fams = (0..60)
        .map(|i| {
            let g = DMatrix::from_fn(4, 8, |_, _| f64::from(rng.random_range(0u8..3)));
            let noise = DVector::from_fn(4, |_, _| rng.random::<f64>() - 0.5);
            Family {
                pedigree: PedigreeSpec::nuclear(format!("f{i}"), ChildType::Adopted),
                phenotype: g.column(5) * 3.0 + noise,
                genotypes: g,
                covariates: DMatrix::zeros(4, 0),
            }
        })
        .collect();
    Dataset::new(fams, (0..8).map(|j| format!("s{j}")).collect(), vec![]).unwrap()
}

#[test]
fn mbic2_keeps_dominant_predictor() {
    let ds = dominant_dataset(4);
    let kept = mbic2_backward(&ds).unwrap();
    assert!(kept.contains(&5), "{kept:?}");
}

#[test]
fn mbic2_is_order_invariant() {
    let ds = dominant_dataset(5);
    let perm: Vec<usize> = vec![7, 2, 5, 0, 1, 6, 3, 4];
    let permuted = with_genotypes(&ds, |g| DMatrix::from_fn(4, 8, |r, c| g[(r, perm[c])]));
    let a = mbic2_backward(&ds).unwrap();
    let mut b: Vec<usize> = mbic2_backward(&permuted).unwrap().into_iter().map(|j| perm[j]).collect();
    b.sort_unstable();
    assert_eq!(a, b);
}

#[test]
fn mbic2_rejects_collinear_design() {
    let ds = with_genotypes(&sim(0.0, 40, 6), |g| {
        let mut g = g.clone();
        g.set_column(1, &g.column(0).clone_owned());
        g
    });
    assert!(matches!(mbic2_backward(&ds), Err(Error::RankDeficient { .. })));
}
