use super::*;
use crate::dataset::Family;
use crate::pedigree::{ChildType, PedigreeSpec};
use crate::rng::substream;
use crate::simgen::{simulate_dataset, SimConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn small_sim(m: usize, seed: u64) -> Dataset {
    let config = SimConfig { m, seed, ..SimConfig::default() };
    simulate_dataset(&config, &mut substream(seed, &[1])).unwrap().0
}

/// Random families with arbitrary continuous design columns.
fn random_blocks(sizes: &[usize], k: usize, seed: u64) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>, Vec<DMatrix<f64>>) {
    let mut rng = substream(seed, &[2]);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut vinvs = Vec::new();
    for &n in sizes {
        let mut x = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        x.column_mut(0).fill(1.0);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let v = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
        xs.push(x);
        ys.push(DVector::from_fn(n, |_, _| rng.random::<f64>() * 4.0 - 2.0));
        vinvs.push(v.try_inverse().unwrap());
    }
    (xs, ys, vinvs)
}

fn labels(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("x{j}")).collect()
}

/// Generalized least squares on the explicitly stacked system.
fn dense_gls(xs: &[DMatrix<f64>], ys: &[DVector<f64>], vinvs: &[DMatrix<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n: usize = xs.iter().map(|x| x.nrows()).sum();
    let k = xs[0].ncols();
    let mut x = DMatrix::zeros(n, k);
    let mut y = DVector::zeros(n);
    let mut w = DMatrix::zeros(n, n);
    let mut off = 0;
    for ((xi, yi), vi) in xs.iter().zip(ys).zip(vinvs) {
        let ni = xi.nrows();
        x.view_mut((off, 0), (ni, k)).copy_from(xi);
        y.rows_mut(off, ni).copy_from(yi);
        w.view_mut((off, off), (ni, ni)).copy_from(vi);
        off += ni;
    }
    let normal = x.transpose() * &w * &x;
    let cov = normal.clone().try_inverse().unwrap();
    (&cov * x.transpose() * &w * y, cov)
}

#[test]
fn gls_with_identity_is_ols() {
    let (xs, ys, _) = random_blocks(&[7], 3, 1);
    let design = FixedEffectsDesign::from_blocks(xs.clone(), labels(3)).unwrap();
    let est = gls_solve(&design, &ys, &[DMatrix::identity(7, 7)]).unwrap();
    let ols = xs[0].clone().svd(true, true).solve(&ys[0], 1e-14).unwrap();
    assert!((est.coefficients - ols).amax() < 1e-12);
}

#[test]
fn gls_recovers_noiseless_coefficients() {
    let (xs, _, vinvs) = random_blocks(&[4, 4, 3, 5], 3, 2);
    let beta = DVector::from_row_slice(&[1.5, -2.0, 0.25]);
    let ys: Vec<_> = xs.iter().map(|x| x * &beta).collect();
    let design = FixedEffectsDesign::from_blocks(xs, labels(3)).unwrap();
    let est = gls_solve(&design, &ys, &vinvs).unwrap();
    assert!((est.coefficients - beta).amax() < 1e-10);
}

#[test]
fn gls_three_families_match_dense_oracle() {
    let (xs, ys, vinvs) = random_blocks(&[4, 3, 5], 3, 3);
    let design = FixedEffectsDesign::from_blocks(xs.clone(), labels(3)).unwrap();
    let est = gls_solve(&design, &ys, &vinvs).unwrap();
    let (beta, cov) = dense_gls(&xs, &ys, &vinvs);
    assert!((est.coefficients - beta).amax() < 1e-8);
    assert!((est.covariance - cov).amax() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn gls_matches_dense_oracle(sizes in prop::collection::vec(2usize..6, 1..=5), k in 1usize..3, seed in 0u64..10_000) {
        let total: usize = sizes.iter().sum();
        prop_assume!(total > k + 1);
        let (xs, ys, vinvs) = random_blocks(&sizes, k, seed);
        let design = FixedEffectsDesign::from_blocks(xs.clone(), labels(k)).unwrap();
        let est = gls_solve(&design, &ys, &vinvs).unwrap();
        let (beta, cov) = dense_gls(&xs, &ys, &vinvs);
        prop_assert!((est.coefficients - beta).amax() < 1e-8);
        prop_assert!((est.covariance - cov).amax() < 1e-8);
    }
}

#[test]
fn gls_rejects_collinear_design() {
    let (mut xs, ys, vinvs) = random_blocks(&[4, 4], 3, 4);
    for x in &mut xs {
        let c = x.column(1) * 2.0;
        x.set_column(2, &c);
    }
    let design = FixedEffectsDesign::from_blocks(xs, labels(3)).unwrap();
    let err = gls_solve(&design, &ys, &vinvs).unwrap_err();
    assert_eq!(err, Error::RankDeficient { columns: vec!["x2".into()] });
}

#[test]
fn gls_rejects_mismatched_blocks() {
    let (xs, ys, vinvs) = random_blocks(&[4, 4], 2, 5);
    let design = FixedEffectsDesign::from_blocks(xs, labels(2)).unwrap();
    assert!(matches!(gls_solve(&design, &ys[..1], &vinvs), Err(Error::Structural(_))));
}

#[test]
fn sufficient_statistics_match_blockwise_gls() {
    let ds = small_sim(40, 6);
    let design = FixedEffectsDesign::full(&ds);
    let vc = AceVarianceComponents::new(2.0, 0.7, 1.3).unwrap();
    let phis = family_kinships(&ds).unwrap();
    let vinvs: Vec<_> = phis.iter().map(|p| ace_covariance_unchecked(p, &vc).try_inverse().unwrap()).collect();
    let ys: Vec<_> = ds.families().iter().map(|f| f.phenotype.clone()).collect();
    let direct = gls_solve(&design, &ys, &vinvs).unwrap();
    let system = SufficientStats::new(&design, &ys, &phis).unwrap().assemble(&vc).unwrap();
    let fast = system.solve().unwrap();
    assert!((direct.coefficients - fast.coefficients).amax() < 1e-9);
    assert!((direct.covariance - fast.covariance).amax() < 1e-9);
}

fn one_family_dataset(y: DVector<f64>, g: DMatrix<f64>) -> Dataset {
    let n = y.len();
    let ped = PedigreeSpec::nuclear("f", ChildType::Adopted);
    let fam = Family { pedigree: ped, phenotype: y, genotypes: g.clone(), covariates: DMatrix::zeros(n, 0) };
    let ids = (0..g.ncols()).map(|j| format!("s{j}")).collect();
    Dataset::new(vec![fam], ids, vec![]).unwrap()
}

#[test]
fn zero_residual_likelihood_is_gaussian_constant() {
    let g = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 1.0]);
    let y = DVector::from_row_slice(&[0.5, 1.0, 1.5, 1.0]);
    let ds = one_family_dataset(y, g);
    let identity = AceVarianceComponents::new(0.0, 0.0, 1.0).unwrap();
    let value = profile_neg_loglik(&ds, &identity).unwrap();
    assert!((value - 4.0 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-10);
}

#[test]
fn likelihood_is_invariant_to_family_order() {
    let ds = small_sim(30, 7);
    let mut order: Vec<usize> = (0..30).collect();
    order.reverse();
    order.swap(3, 17);
    let shuffled = ds.subset(&order).unwrap();
    let vc = AceVarianceComponents::default();
    let a = profile_neg_loglik(&ds, &vc).unwrap();
    let b = profile_neg_loglik(&shuffled, &vc).unwrap();
    assert!((a - b).abs() < 1e-8 * a.abs());
}

#[test]
fn truth_beats_doubled_additive_variance_on_average() {
    let truth = AceVarianceComponents::default();
    let doubled = AceVarianceComponents { sigma_a2: 8.0, ..truth };
    let reps = 50;
    let mut diff = 0.0;
    for seed in 0..reps {
        let ds = small_sim(200, 100 + seed);
        diff += profile_neg_loglik(&ds, &doubled).unwrap() - profile_neg_loglik(&ds, &truth).unwrap();
    }
    assert!(diff / reps as f64 > 0.0);
}

#[test]
fn fit_produces_consistent_inverses() {
    let ds = small_sim(120, 8);
    let fit = fit_ace(&ds, &FitOptions::default()).unwrap();
    assert!(fit.converged, "{:?}", fit.warning);
    let phis = family_kinships(&ds).unwrap();
    for (phi, vinv) in phis.iter().zip(&fit.per_family_v_inverse) {
        let v = ace_covariance_unchecked(phi, &fit.vc);
        assert!((vinv * v - DMatrix::identity(4, 4)).amax() < 1e-8);
    }
    let cov = &fit.coefficient_covariance;
    assert!((cov - cov.transpose()).amax() < 1e-12);
    assert!(cov.clone().symmetric_eigen().eigenvalues.min() > 0.0);
    assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(fit.neg2_loglik() <= fit.trace[0]);
}

#[test]
fn multi_start_agreement() {
    let ds = small_sim(150, 9);
    let base = fit_ace(&ds, &FitOptions { multi_start: false, ..Default::default() }).unwrap();
    for init in [(0.5, 3.0, 2.0), (8.0, 0.1, 0.5), (1.0, 1.0, 1.0)] {
        let vc = AceVarianceComponents::new(init.0, init.1, init.2).unwrap();
        let other = fit_ace(&ds, &FitOptions { init: Some(vc), multi_start: false, ..Default::default() }).unwrap();
        assert!((other.neg2_loglik() - base.neg2_loglik()).abs() < 1e-4);
    }
}

#[test]
fn gradient_vanishes_at_interior_optimum() {
    let ds = small_sim(200, 10);
    let fit = fit_ace(&ds, &FitOptions::default()).unwrap();
    let v = [fit.vc.sigma_a2, fit.vc.sigma_c2, fit.vc.sigma_e2];
    assert!(v.iter().all(|&x| x > 0.05), "optimum on the boundary: {v:?}");
    let f = |x: [f64; 3]| {
        profile_neg_loglik(&ds, &AceVarianceComponents { sigma_a2: x[0], sigma_c2: x[1], sigma_e2: x[2] }).unwrap()
    };
    let h = 1e-5;
    let grad: Vec<f64> = (0..3)
        .map(|i| {
            let (mut up, mut down) = (v, v);
            up[i] += h;
            down[i] -= h;
            (f(up) - f(down)) / (2.0 * h)
        })
        .collect();
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    assert!(norm <= 1e-3, "gradient {grad:?}");
}

#[test]
fn rescaling_phenotype_is_equivariant() {
    let ds = small_sim(150, 11);
    let c = 3.0;
    let scaled = Dataset::new(
        ds.families().iter().map(|f| Family { phenotype: &f.phenotype * c, ..f.clone() }).collect(),
        ds.snp_ids().to_vec(),
        vec![],
    )
    .unwrap();
    let a = fit_ace(&ds, &FitOptions::default()).unwrap();
    let b = fit_ace(&scaled, &FitOptions::default()).unwrap();
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-12);
    assert!(rel(b.vc.sigma_a2, a.vc.sigma_a2 * c * c) < 1e-6);
    assert!(rel(b.vc.sigma_c2, a.vc.sigma_c2 * c * c) < 1e-6);
    assert!(rel(b.vc.sigma_e2, a.vc.sigma_e2 * c * c) < 1e-6);
    let scale = a.coefficients.amax();
    assert!((&b.coefficients - &a.coefficients * c).amax() < 1e-6 * c * scale);
}

#[test]
fn constant_phenotype_drives_components_to_floor() {
    let fams = (0..20)
        .map(|i| Family {
            pedigree: PedigreeSpec::nuclear(format!("f{i}"), ChildType::Mz),
            phenotype: DVector::from_element(4, 2.5),
            genotypes: DMatrix::zeros(4, 0),
            covariates: DMatrix::zeros(4, 0),
        })
        .collect();
    let ds = Dataset::new(fams, vec![], vec![]).unwrap();
    let fit = fit_ace(&ds, &FitOptions::default()).unwrap();
    assert!(fit.vc.sigma_a2 < 1e-6 && fit.vc.sigma_c2 < 1e-6 && fit.vc.sigma_e2 < 1e-6, "{:?}", fit.vc);
    assert!(fit.vc.sigma_e2 >= VARIANCE_FLOOR);
    assert!((fit.coefficients[0] - 2.5).abs() < 1e-9);
}

#[test]
fn fit_reports_rank_deficiency() {
    let ds = small_sim(30, 12);
    let dup = Dataset::new(
        ds.families()
            .iter()
            .map(|f| {
                let mut g = f.genotypes.clone().insert_column(50, 0.0);
                g.set_column(50, &f.genotypes.column(0));
                Family { genotypes: g, ..f.clone() }
            })
            .collect(),
        ds.snp_ids().iter().cloned().chain(["dup".to_string()]).collect(),
        vec![],
    )
    .unwrap();
    match fit_ace(&dup, &FitOptions::default()) {
        Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["dup".to_string()]),
        other => panic!("expected rank error, got {other:?}"),
    }
}

#[test]
fn iteration_cap_flags_non_convergence() {
    let ds = small_sim(50, 13);
    let fit = fit_ace(&ds, &FitOptions { max_iters: 3, ..Default::default() }).unwrap();
    assert!(!fit.converged);
    assert!(fit.warning.is_some());
}
