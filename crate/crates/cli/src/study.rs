//! Replicated simulation study comparing e-value selection with the baselines.

use std::fmt::Write as _;
use std::path::Path;

use qevalue::baselines::{benjamini_hochberg, mbic2_backward_with, single_snp_gls_pvalues};
use qevalue::dataset::Dataset;
use qevalue::evalmap::EvaluationKind;
use qevalue::lmm::{fit_ace, FitOptions, FittedAceModel};
use qevalue::rng::{derive_seed, tag};
use qevalue::selector::{best_grid_point, evaluate_grid, SelectionConfig};
use qevalue::simgen::{score_selection, simulate_replication, Metrics, SimConfig, TruthSpec};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::write_text;

pub const LONG_FILE: &str = "replications.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const TABLE_FILE: &str = "table.csv";

pub const LONG_HEADER: &str = "replication,h,method,kind,t,s,tp,tn,rtp,rtn,n_selected,selected,status";
pub const AGGREGATE_HEADER: &str = "method,kind,t,h,replications,failures,tp,tn,rtp,rtn";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Evalue,
    Mbic2,
    RfglsBh,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Evalue => "evalue",
            Method::Mbic2 => "mbic2",
            Method::RfglsBh => "rfgls_bh",
        }
    }
}

/// One method's outcome on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub replication: u64,
    pub h: f64,
    pub method: Method,
    pub kind: Option<EvaluationKind>,
    pub t: Option<f64>,
    pub s: Option<f64>,
    pub outcome: std::result::Result<(Vec<usize>, Metrics), String>,
}

/// Means over successful replications of one method/threshold/h cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: Method,
    pub kind: Option<EvaluationKind>,
    pub t: Option<f64>,
    pub h: f64,
    pub replications: usize,
    pub failures: usize,
    pub tp: Option<f64>,
    pub tn: Option<f64>,
    pub rtp: Option<f64>,
    pub rtn: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub rows: Vec<StudyRow>,
    pub aggregate: Vec<AggregateRow>,
}

impl StudyOutput {
    pub fn cell(&self, method: Method, kind: Option<EvaluationKind>, t: Option<f64>, h: f64) -> Option<&AggregateRow> {
        self.aggregate.iter().find(|r| r.method == method && r.kind == kind && r.t == t && r.h == h)
    }
}

fn evalue_rows(
    fit: &std::result::Result<FittedAceModel, String>,
    train: &Dataset,
    test: &Dataset,
    truth: &TruthSpec,
    sim: &SimConfig,
    selection: &SelectionConfig,
    thresholds: &[f64],
) -> Vec<(Option<f64>, Option<f64>, std::result::Result<(Vec<usize>, Metrics), String>)> {
    let grid = fit.clone().and_then(|fit| evaluate_grid(&fit, train, test, selection).map_err(|e| e.to_string()));
    thresholds
        .iter()
        .map(|&t| match &grid {
            Ok(grid) => {
                let points: Vec<_> = grid.points.iter().filter(|p| p.t == t).cloned().collect();
                match best_grid_point(&points) {
                    Some(best) => {
                        let metrics = score_selection(&best.selected, truth, &sim.blocks).map_err(|e| e.to_string());
                        (Some(t), Some(best.s), metrics.map(|m| (best.selected.clone(), m)))
                    }
                    None => (Some(t), None, Err("empty grid".to_string())),
                }
            }
            Err(e) => (Some(t), None, Err(e.clone())),
        })
        .collect()
}

/// All methods on one simulated replication at heritability `h`.
pub fn run_replication(config: &RunConfig, h: f64, replication: u64) -> Vec<StudyRow> {
    let sim = SimConfig { h, ..config.sim_config() };
    let row = |method, kind, t, s, outcome| StudyRow { replication, h, method, kind, t, s, outcome };
    let (train, test, truth) = match simulate_replication(&sim, replication) {
        Ok(data) => data,
        Err(e) => return vec![row(Method::Evalue, None, None, None, Err(format!("simulation failed: {e}")))],
    };
    let score = |selected: qevalue::Result<Vec<usize>>| -> std::result::Result<(Vec<usize>, Metrics), String> {
        let selected = selected.map_err(|e| e.to_string())?;
        let metrics = score_selection(&selected, &truth, &sim.blocks).map_err(|e| e.to_string())?;
        Ok((selected, metrics))
    };

    let mut rows = Vec::new();
    if config.baselines.mbic2 {
        rows.push(row(Method::Mbic2, None, None, None, score(mbic2_backward_with(&train, config.baselines.mbic2_constant))));
    }
    if config.baselines.rfgls {
        let chosen = single_snp_gls_pvalues(&train).and_then(|p| benjamini_hochberg(&p.pvalues, config.baselines.fdr_level));
        rows.push(row(Method::RfglsBh, None, None, None, score(chosen)));
    }
    if !config.study.kinds.is_empty() {
        let fit = fit_ace(&train, &FitOptions::default()).map_err(|e| e.to_string());
        let seed = derive_seed(config.seed, &[tag::REPLICATION, replication, h.to_bits()]);
        for &kind in &config.study.kinds {
            let thresholds = config.study.thresholds(kind);
            let selection = SelectionConfig { kind, t_grid: thresholds.to_vec(), seed, ..config.selection.clone() };
            for (t, s, outcome) in evalue_rows(&fit, &train, &test, &truth, &sim, &selection, thresholds) {
                rows.push(row(Method::Evalue, Some(kind), t, s, outcome));
            }
        }
    }
    rows
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate(rows: &[StudyRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(Method, Option<EvaluationKind>, Option<u64>, u64)> = Vec::new();
    for r in rows {
        let key = (r.method, r.kind, r.t.map(f64::to_bits), r.h.to_bits());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, kind, t_bits, h_bits)| {
            let cell: Vec<&StudyRow> = rows
                .iter()
                .filter(|r| r.method == method && r.kind == kind && r.t.map(f64::to_bits) == t_bits && r.h.to_bits() == h_bits)
                .collect();
            let ok: Vec<&Metrics> = cell.iter().filter_map(|r| r.outcome.as_ref().ok().map(|(_, m)| m)).collect();
            AggregateRow {
                method,
                kind,
                t: t_bits.map(f64::from_bits),
                h: f64::from_bits(h_bits),
                replications: ok.len(),
                failures: cell.len() - ok.len(),
                tp: mean(ok.iter().filter_map(|m| m.tp)),
                tn: mean(ok.iter().map(|m| m.tn)),
                rtp: mean(ok.iter().filter_map(|m| m.rtp)),
                rtn: mean(ok.iter().map(|m| m.rtn)),
            }
        })
        .collect()
}

/// Run every `(h, replication)` pair; rows come back in `(h, replication)`
/// order regardless of scheduling.
pub fn run_study(config: &RunConfig) -> Result<StudyOutput> {
    config.validate()?;
    let units: Vec<(f64, u64)> = config
        .study
        .h_list
        .iter()
        .flat_map(|&h| (0..config.study.replications as u64).map(move |r| (h, r)))
        .collect();
    let rows: Vec<StudyRow> = units
        .par_iter()
        .map(|&(h, r)| run_replication(config, h, r))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let aggregate = aggregate(&rows);
    Ok(StudyOutput { rows, aggregate })
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt4(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn rate_pair(a: Option<f64>, b: Option<f64>) -> String {
    let show = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
    format!("{}/{}", show(a), show(b))
}

pub fn long_csv(rows: &[StudyRow]) -> String {
    let mut out = format!("{LONG_HEADER}\n");
    for r in rows {
        let (metrics, selected, status) = match &r.outcome {
            Ok((sel, m)) => (Some(*m), sel.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(";"), "ok".to_string()),
            Err(e) => (None, String::new(), format!("\"error: {}\"", e.replace('"', "'"))),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.replication,
            r.h,
            r.method.as_str(),
            opt(r.kind),
            opt(r.t),
            opt(r.s),
            opt(metrics.and_then(|m| m.tp)),
            opt(metrics.map(|m| m.tn)),
            opt(metrics.and_then(|m| m.rtp)),
            opt(metrics.map(|m| m.rtn)),
            r.outcome.as_ref().map(|(s, _)| s.len().to_string()).unwrap_or_default(),
            selected,
            status
        )
        .unwrap();
    }
    out
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method.as_str(),
            opt(r.kind),
            opt(r.t),
            r.h,
            r.replications,
            r.failures,
            opt4(r.tp),
            opt4(r.tn),
            opt4(r.rtp),
            opt4(r.rtn)
        )
        .unwrap();
    }
    out
}

/// Wide table: one row per method/threshold, one `TP/TN` and one `RTP/RTN`
/// column per `h`.
pub fn wide_table(rows: &[AggregateRow], h_list: &[f64]) -> String {
    let mut out = String::from("method,kind,t");
    for h in h_list {
        write!(out, ",tp/tn h={h}").unwrap();
    }
    for h in h_list {
        write!(out, ",rtp/rtn h={h}").unwrap();
    }
    out.push('\n');
    let mut seen: Vec<(Method, Option<EvaluationKind>, Option<u64>)> = Vec::new();
    for r in rows {
        let key = (r.method, r.kind, r.t.map(f64::to_bits));
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        write!(out, "{},{},{}", r.method.as_str(), opt(r.kind), opt(r.t)).unwrap();
        let find = |h: f64| rows.iter().find(|x| (x.method, x.kind, x.t.map(f64::to_bits)) == key && x.h == h);
        for &h in h_list {
            write!(out, ",{}", find(h).map(|x| rate_pair(x.tp, x.tn)).unwrap_or_default()).unwrap();
        }
        for &h in h_list {
            write!(out, ",{}", find(h).map(|x| rate_pair(x.rtp, x.rtn)).unwrap_or_default()).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_study(output: &StudyOutput, config: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    write_text(&out.join(LONG_FILE), &long_csv(&output.rows))?;
    write_text(&out.join(AGGREGATE_FILE), &aggregate_csv(&output.aggregate))?;
    write_text(&out.join(TABLE_FILE), &wide_table(&output.aggregate, &config.study.h_list))?;
    Ok(())
}
