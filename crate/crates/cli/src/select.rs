//! The `select` workflow: split families, run the grid search, write reports.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use qevalue::dataset::Dataset;
use qevalue::evalmap::EvaluationKind;
use qevalue::lmm::{fit_ace, FitOptions};
use qevalue::pedigree::AceVarianceComponents;
use qevalue::rng::{substream, tag};
use qevalue::selector::{evalue_distributions, grid_ensemble, select_with_fit, SelectionResult};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::write_text;

pub const REPORT_FILE: &str = "report.csv";
pub const TRACE_FILE: &str = "pe_trace.csv";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const DISTRIBUTIONS_FILE: &str = "distributions.csv";

/// Seeded unstratified split of family indices into (train, test), each
/// sorted ascending.
pub fn split_families(m: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if m < 2 {
        return Err(CliError::Validation(format!("need at least 2 families to split, found {m}")));
    }
    let n_train = ((m as f64 * train_fraction).round() as usize).clamp(1, m - 1);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut substream(seed, &[tag::SPLIT]));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectSummary {
    pub kind: EvaluationKind,
    pub winning_s: f64,
    pub winning_t: f64,
    pub q_list: Vec<f64>,
    /// `c_{q·t}(Ê_*)` at the winning `(s, t)`, one per `q`.
    pub thresholds: Vec<f64>,
    pub selected: Vec<String>,
    pub train_families: usize,
    pub test_families: usize,
    pub variance_components: AceVarianceComponents,
    pub log_likelihood: f64,
    pub distributions_dumped: bool,
}

pub struct SelectRun {
    pub result: SelectionResult,
    pub train: Dataset,
    pub test: Dataset,
}

pub fn run_select(dataset: &Dataset, config: &RunConfig) -> Result<SelectRun> {
    let (train_idx, test_idx) = split_families(dataset.m(), config.split_fraction, config.seed)?;
    let train = dataset.subset(&train_idx)?;
    let test = dataset.subset(&test_idx)?;
    let selection = config.selection_config();
    selection.validate()?;
    let fit = fit_ace(&train, &FitOptions::default())?;
    let result = select_with_fit(fit, &train, &test, &selection)?;
    Ok(SelectRun { result, train, test })
}

fn q_label(q: f64) -> String {
    format!("evalue_q{q}")
}

pub fn write_select_outputs(
    run: &SelectRun,
    config: &RunConfig,
    out: &Path,
    dump_distributions: bool,
    snp_map: Option<&HashMap<String, String>>,
) -> Result<()> {
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    let result = &run.result;
    let report = &result.report;
    let ids = run.train.snp_ids();
    let coefficients = result.full_fit.snp_coefficients();

    let mut text = String::from("snp_id,position");
    for &q in &report.q_list {
        write!(text, ",{}", q_label(q)).unwrap();
    }
    text.push_str(",selected,coefficient,association\n");
    for (j, id) in ids.iter().enumerate() {
        let position = match snp_map {
            Some(map) => map.get(id).cloned().unwrap_or_default(),
            None => (j + 1).to_string(),
        };
        write!(text, "{id},{position}").unwrap();
        for c in 0..report.q_list.len() {
            write!(text, ",{}", report.dropone_quantiles[(j, c)]).unwrap();
        }
        let beta = coefficients[j];
        let sign = if beta > 0.0 { "+" } else if beta < 0.0 { "-" } else { "0" };
        writeln!(text, ",{},{beta},{sign}", u8::from(result.selected.contains(&j))).unwrap();
    }
    write_text(&out.join(REPORT_FILE), &text)?;

    let mut trace = String::from("s,t,n_selected,prediction_error,selected\n");
    for p in &result.pe_trace {
        let names: Vec<&str> = p.selected.iter().map(|&j| ids[j].as_str()).collect();
        writeln!(trace, "{},{},{},{},{}", p.s, p.t, p.selected.len(), p.prediction_error, names.join(";")).unwrap();
    }
    write_text(&out.join(TRACE_FILE), &trace)?;

    let thresholds = report
        .q_list
        .iter()
        .map(|&q| report.full_threshold(q, result.winning_t))
        .collect::<qevalue::Result<Vec<_>>>()?;
    let summary = SelectSummary {
        kind: report.kind,
        winning_s: result.winning_s,
        winning_t: result.winning_t,
        q_list: report.q_list.clone(),
        thresholds,
        selected: result.selected.iter().map(|&j| ids[j].clone()).collect(),
        train_families: run.train.m(),
        test_families: run.test.m(),
        variance_components: result.full_fit.vc,
        log_likelihood: result.full_fit.log_likelihood,
        distributions_dumped: dump_distributions,
    };
    let body = toml::to_string(&summary).map_err(|e| CliError::Validation(e.to_string()))?;
    write_text(&out.join(SUMMARY_FILE), &body)?;

    if dump_distributions {
        let selection = config.selection_config();
        let ensemble = grid_ensemble(&result.full_fit, &run.train, &selection, result.winning_s)?;
        let (full, dropone) = evalue_distributions(&ensemble, selection.kind)?;
        let mut dump = String::from("draw,full");
        for id in ids {
            write!(dump, ",{id}").unwrap();
        }
        dump.push('\n');
        for r in 0..full.values.len() {
            write!(dump, "{r},{}", full.values[r]).unwrap();
            for d in &dropone {
                write!(dump, ",{}", d.values[r]).unwrap();
            }
            dump.push('\n');
        }
        write_text(&out.join(DISTRIBUTIONS_FILE), &dump)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (a, b) = split_families(100, 0.75, 3).unwrap();
        assert_eq!((a.len(), b.len()), (75, 25));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_families(100, 0.75, 3).unwrap().0, a);
        assert_ne!(split_families(100, 0.75, 4).unwrap().0, a);
        assert_eq!(split_families(2, 0.99, 0).unwrap().1.len(), 1);
        assert!(split_families(1, 0.5, 0).is_err());
    }
}
