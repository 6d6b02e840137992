use super::*;
use crate::evalmap::{empirical_quantile, ReferenceSummary};
use crate::rng::substream;
use crate::simgen::{simulate_replication, SimConfig};
use proptest::prelude::*;
use rand::Rng;

fn synthetic_report(dropone: &[f64], full_value: f64, q: f64) -> EvalueReport {
    EvalueReport {
        q_list: vec![q],
        full_quantiles: vec![full_value],
        dropone_quantiles: DMatrix::from_column_slice(dropone.len(), 1, dropone),
        full_sorted: vec![full_value; 10],
        kind: EvaluationKind::E2,
        s: 1.0,
    }
}

/// Ensemble with independent Gaussian draws around `center`.
fn gaussian_ensemble(center: &[f64], seed: u64) -> BootstrapEnsemble {
    let mut rng = substream(seed, &[]);
    let p = center.len();
    let c = DVector::from_row_slice(center);
    let draw = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<DVector<f64>> {
        (0..n)
            .map(|_| DVector::from_fn(p, |j, _| c[j] + rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.3))
            .collect()
    };
    let primary = draw(400, &mut rng);
    let reference = draw(300, &mut rng);
    let reference_summary = ReferenceSummary::from_draws(&reference).unwrap();
    BootstrapEnsemble {
        primary,
        reference,
        reference_summary,
        center: c,
        config: ResamplingConfig { r: 400, r1: 300, s: 1.0, seed },
    }
}

#[test]
fn synthetic_report_selects_first_predictor() {
    let report = synthetic_report(&[0.1, 0.5], 0.3, 0.9);
    assert_eq!(report.full_threshold(0.9, 0.8).unwrap(), 0.3);
    assert_eq!(select_single(&report, 0.9, 0.8).unwrap(), vec![0]);
}

#[test]
fn threshold_below_everything_selects_nothing() {
    let report = synthetic_report(&[0.1, 0.5], 0.05, 0.9);
    assert!(select_single(&report, 0.9, 0.8).unwrap().is_empty());
    assert!(select_q_intersection(&report, &[0.9], 0.8).unwrap().is_empty());
}

#[test]
fn unknown_q_is_config_error() {
    let report = synthetic_report(&[0.1], 0.3, 0.9);
    assert!(matches!(select_single(&report, 0.5, 0.8), Err(Error::InvalidConfig(_))));
}

#[test]
fn zero_coordinate_drop_equals_full() {
    let mut ens = gaussian_ensemble(&[1.0, 0.0, 2.0], 1);
    for d in &mut ens.primary {
        d[1] = 0.0;
    }
    ens.center[1] = 0.0;
    let (full, dropone) = evalue_distributions(&ens, EvaluationKind::E2).unwrap();
    assert_eq!(dropone[1].values, full.values);
    assert!(full.values.iter().all(|&v| v > 0.0 && v <= 1.0));
    let report = EvalueReport::from_ensemble(&ens, EvaluationKind::E2, &default_q_list()).unwrap();
    for &t in &[0.2, 0.5, 0.8, 0.99] {
        for &q in &default_q_list() {
            assert!(!select_single(&report, q, t).unwrap().contains(&1));
        }
    }
    assert!(!mean_evalue_select(&ens, EvaluationKind::E1).unwrap().contains(&1));
}

#[test]
fn dropone_matches_explicit_recomputation() {
    let ens = gaussian_ensemble(&[1.0, -0.3, 0.05, 2.0], 2);
    let (full, dropone) = evalue_distributions(&ens, EvaluationKind::E1).unwrap();
    let summary = &ens.reference_summary;
    for (r, draw) in ens.primary.iter().enumerate() {
        let e = |v: &DVector<f64>| {
            let z = (v - &summary.mean).component_div(&summary.sd);
            1.0 / (1.0 + z.norm_squared())
        };
        assert!((full.values[r] - e(draw)).abs() < 1e-12);
        for j in 0..4 {
            let mut reduced = draw.clone();
            reduced[j] = 0.0;
            assert!((dropone[j].values[r] - e(&reduced)).abs() < 1e-12);
        }
    }
}

#[test]
fn strong_signal_is_selected_and_zero_signal_is_not() {
    let ens = gaussian_ensemble(&[3.0, 0.0, 0.0], 3);
    let report = EvalueReport::from_ensemble(&ens, EvaluationKind::E2, &default_q_list()).unwrap();
    assert_eq!(select_q_intersection(&report, &default_q_list(), 0.8).unwrap(), vec![0]);
    assert!(mean_evalue_select(&ens, EvaluationKind::E2).unwrap().contains(&0));
}

#[test]
fn report_quantiles_match_distributions() {
    let ens = gaussian_ensemble(&[1.0, 0.5], 4);
    let (full, dropone) = evalue_distributions(&ens, EvaluationKind::E2).unwrap();
    let q = default_q_list();
    let report = EvalueReport::new(&full, &dropone, &q, 1.0).unwrap();
    for (c, &qq) in q.iter().enumerate() {
        assert_eq!(report.full_quantiles[c], empirical_quantile(&full.values, qq).unwrap());
        assert_eq!(report.dropone_quantiles[(1, c)], empirical_quantile(&dropone[1].values, qq).unwrap());
    }
    assert_eq!(report.full_threshold(0.9, 0.5).unwrap(), empirical_quantile(&full.values, 0.45).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn threshold_is_monotone_and_intersection_is_contained(
        center in prop::collection::vec(-2.0f64..2.0, 1..6),
        seed in 0u64..500,
        t1 in 0.05f64..0.95,
        dt in 0.0f64..0.5,
    ) {
        let t2 = (t1 + dt).min(0.99);
        let ens = gaussian_ensemble(&center, seed);
        let q = default_q_list();
        let report = EvalueReport::from_ensemble(&ens, EvaluationKind::E2, &q).unwrap();
        for &qq in &q {
            let a: BTreeSet<_> = select_single(&report, qq, t1).unwrap().into_iter().collect();
            let b: BTreeSet<_> = select_single(&report, qq, t2).unwrap().into_iter().collect();
            prop_assert!(a.is_subset(&b));
        }
        let inter: BTreeSet<_> = select_q_intersection(&report, &q, t1).unwrap().into_iter().collect();
        for &qq in &q {
            let per: BTreeSet<_> = select_single(&report, qq, t1).unwrap().into_iter().collect();
            prop_assert!(inter.is_subset(&per));
        }
        prop_assert_eq!(
            select_q_intersection(&report, &[0.7], t1).unwrap(),
            select_single(&report, 0.7, t1).unwrap()
        );
    }
}

#[test]
fn best_grid_point_breaks_ties() {
    let pt = |s: f64, t: f64, selected: Vec<usize>, pe: f64| GridPoint { s, t, selected, prediction_error: pe };
    let points = vec![pt(0.5, 0.8, vec![0, 1], 10.0), pt(0.2, 0.8, vec![0], 10.0), pt(0.1, 0.8, vec![1], 10.0), pt(1.0, 0.8, vec![], 11.0)];
    let best = best_grid_point(&points).unwrap();
    assert_eq!((best.s, best.selected.clone()), (0.1, vec![1]));
    let later_t = vec![pt(0.1, 0.9, vec![1], 10.0), pt(0.1, 0.7, vec![2], 10.0)];
    assert_eq!(best_grid_point(&later_t).unwrap().t, 0.7);
    assert!(best_grid_point(&[]).is_none());
}

#[test]
fn config_validation() {
    assert!(SelectionConfig::default().validate().is_ok());
    assert!(SelectionConfig { t_grid: vec![1.0], ..Default::default() }.validate().is_err());
    assert!(SelectionConfig { q_list: vec![], ..Default::default() }.validate().is_err());
    assert!(SelectionConfig { r: 10, ..Default::default() }.validate().is_err());
    assert!(SelectionConfig { s_grid: vec![-1.0], ..Default::default() }.validate().is_err());
    assert!((SelectionConfig::for_kind(EvaluationKind::E1).t_grid[0] - (-1.0f64).exp()).abs() < 1e-15);
}

fn replication(h: f64, rep: u64) -> (Dataset, Dataset) {
    let config = SimConfig { h, seed: 77, ..Default::default() };
    let (train, test, _) = simulate_replication(&config, rep).unwrap();
    (train, test)
}

fn quick_config() -> SelectionConfig {
    SelectionConfig { s_grid: vec![0.3, 1.0, 0.6], r: 150, r1: 150, seed: 5, ..Default::default() }
}

#[test]
fn intercept_only_prediction_error() {
    let (train, test) = replication(10.0, 0);
    let fit = fit_ace(&train, &FitOptions::default()).unwrap();
    let pe = restricted_prediction_error(&fit, &train, &[], &test).unwrap();
    // Intercept-only GLS estimate: Σ 1ᵀV⁻¹y / Σ 1ᵀV⁻¹1.
    let (mut num, mut den) = (0.0, 0.0);
    for (f, vinv) in train.families().iter().zip(&fit.per_family_v_inverse) {
        let ones = DVector::from_element(f.phenotype.len(), 1.0);
        num += (ones.transpose() * vinv * &f.phenotype)[0];
        den += (ones.transpose() * vinv * &ones)[0];
    }
    let mu = num / den;
    let expected: f64 = test.stacked_phenotype().iter().map(|y| (y - mu).powi(2)).sum();
    assert!((pe - expected).abs() < 1e-8 * expected);
}

#[test]
fn noiseless_test_set_has_zero_prediction_error() {
    let (train, test) = replication(10.0, 1);
    let fit = fit_ace(&train, &FitOptions::default()).unwrap();
    let selected = vec![0, 6, 30];
    let beta = restricted_coefficients(&fit, &train, &selected).unwrap();
    let design = FixedEffectsDesign::with_snps(&test, &selected).unwrap();
    let exact = Dataset::new(
        test.families()
            .iter()
            .zip(design.blocks())
            .map(|(f, x)| crate::dataset::Family { phenotype: x * &beta, ..f.clone() })
            .collect(),
        test.snp_ids().to_vec(),
        vec![],
    )
    .unwrap();
    assert!(restricted_prediction_error(&fit, &train, &selected, &exact).unwrap() < 1e-18 * exact.n_total() as f64 + 1e-20);
}

#[test]
fn prediction_error_rejects_layout_mismatch_and_rank_loss() {
    let (train, test) = replication(10.0, 2);
    let fit = fit_ace(&train, &FitOptions::default()).unwrap();
    let narrow = test.select_snps(&[0, 1, 2]).unwrap();
    assert!(matches!(restricted_prediction_error(&fit, &train, &[0], &narrow), Err(Error::Structural(_))));
    assert!(restricted_prediction_error(&fit, &train, &[0, 0], &test).is_err());
}

#[test]
fn grid_selection_is_deterministic_and_order_free() {
    let (train, test) = replication(10.0, 3);
    let config = quick_config();
    let a = select_over_grid(&train, &test, &config).unwrap();
    let b = select_over_grid(&train, &test, &config).unwrap();
    assert_eq!(a.selected, b.selected);
    assert_eq!(a.pe_trace, b.pe_trace);
    assert_eq!(a.report, b.report);
    let reordered = SelectionConfig { s_grid: vec![1.0, 0.6, 0.3], ..config.clone() };
    let c = select_over_grid(&train, &test, &reordered).unwrap();
    assert_eq!(a.selected, c.selected);
    assert_eq!(a.winning_s, c.winning_s);
    assert_eq!(a.pe_trace.len(), 3);
    let min = a.pe_trace.iter().map(|p| p.prediction_error).fold(f64::INFINITY, f64::min);
    let best = a.pe_trace.iter().find(|p| p.s == a.winning_s && p.t == a.winning_t).unwrap();
    assert_eq!(best.prediction_error, min);
}

#[test]
fn single_point_grid_equals_direct_pipeline() {
    let (train, test) = replication(10.0, 4);
    let config = SelectionConfig { s_grid: vec![0.5], ..quick_config() };
    let result = select_over_grid(&train, &test, &config).unwrap();
    let ens = grid_ensemble(&result.full_fit, &train, &config, 0.5).unwrap();
    let report = EvalueReport::from_ensemble(&ens, config.kind, &config.q_list).unwrap();
    let direct = select_q_intersection(&report, &config.q_list, config.t_grid[0]).unwrap();
    assert_eq!(result.selected, direct);
    assert_eq!(result.report, report);
}

#[test]
fn causal_drop_shifts_distribution_left() {
    let (train, _) = replication(10.0, 5);
    let fit = fit_ace(&train, &FitOptions::default()).unwrap();
    let ens = grid_ensemble(&fit, &train, &quick_config(), 0.3).unwrap();
    let (full, dropone) = evalue_distributions(&ens, EvaluationKind::E2).unwrap();
    assert!(dropone[0].quantile(0.5).unwrap() < full.quantile(0.5).unwrap());
}
