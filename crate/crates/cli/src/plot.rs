//! Density and e-value plots from a `select` output directory.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use csv::ReaderBuilder;

use crate::error::{CliError, Result};
use crate::io::write_text;
use crate::select::{SelectSummary, DISTRIBUTIONS_FILE, REPORT_FILE, SUMMARY_FILE};

pub const DENSITY_CSV: &str = "density.csv";
pub const DENSITY_SVG: &str = "density.svg";
pub const GRID_POINTS: usize = 256;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;

/// Silverman's rule of thumb, `0.9·min(sd, IQR/1.34)·n^(−1/5)`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let pos = p * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let iqr = at(0.75) - at(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (n as f64).powf(-0.2)
}

/// Gaussian kernel density of `values` evaluated on `grid`.
pub fn gaussian_kde(values: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mut h = silverman_bandwidth(values);
    if !(h > 0.0) {
        // Point mass: fall back to a narrow kernel relative to the grid.
        h = grid.windows(2).map(|w| w[1] - w[0]).next().unwrap_or(1.0).max(1e-6);
    }
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&x| values.iter().map(|&v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum::<f64>() * norm)
        .collect()
}

fn read_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(CliError::io(path))?;
    let mut reader = ReaderBuilder::new().from_reader(file);
    let headers: Vec<String> = reader.headers().map_err(CliError::csv(path))?.iter().map(str::to_string).collect();
    let mut columns = vec![Vec::new(); headers.len()];
    for record in reader.records() {
        let record = record.map_err(CliError::csv(path))?;
        let line = record.position().map_or(0, |p| p.line());
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| CliError::Parse {
                path: path.to_path_buf(),
                line,
                column: headers[c].clone(),
                message: format!("{cell:?} is not a number"),
            })?;
            columns[c].push(v);
        }
    }
    Ok((headers, columns))
}

struct ReportRow {
    snp_id: String,
    position: String,
    evalues: Vec<f64>,
    selected: bool,
}

fn read_report(path: &Path, q_count: usize) -> Result<Vec<ReportRow>> {
    let file = File::open(path).map_err(CliError::io(path))?;
    let mut reader = ReaderBuilder::new().from_reader(file);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(CliError::csv(path))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |column: &str| CliError::Parse {
            path: path.to_path_buf(),
            line,
            column: column.to_string(),
            message: "malformed report row".into(),
        };
        let evalues = (0..q_count)
            .map(|c| record.get(2 + c).and_then(|s| s.parse().ok()).ok_or_else(|| bad("evalue")))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(ReportRow {
            snp_id: record.get(0).ok_or_else(|| bad("snp_id"))?.to_string(),
            position: record.get(1).unwrap_or_default().to_string(),
            evalues,
            selected: record.get(2 + q_count).ok_or_else(|| bad("selected"))? == "1",
        });
    }
    Ok(rows)
}

fn polyline(points: &[(f64, f64)], colour: &str, width: f64) -> String {
    let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"{width}\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

fn svg_frame(title: &str, x_label: &str, y_label: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n\
         <line x1=\"{MARGIN}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{x_label}</text>\n\
         <text x=\"15\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 15 {})\">{y_label}</text>\n",
        WIDTH / 2.0,
        WIDTH / 2.0,
        HEIGHT - 10.0,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
    )
}

fn scale(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    if hi > lo {
        out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
    } else {
        (out_lo + out_hi) / 2.0
    }
}

/// Density CSV and overlay SVG of the full and drop-one distributions.
pub fn density_outputs(headers: &[String], columns: &[Vec<f64>]) -> (String, String) {
    let lo = columns.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = columns.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.05).max(1e-3);
    let (lo, hi) = ((lo - pad).max(0.0), (hi + pad).min(1.0));
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).collect();
    let densities: Vec<Vec<f64>> = columns.iter().map(|c| gaussian_kde(c, &grid)).collect();

    let mut csv = String::from("grid");
    for h in headers {
        write!(csv, ",{h}").unwrap();
    }
    csv.push('\n');
    for (i, x) in grid.iter().enumerate() {
        write!(csv, "{x}").unwrap();
        for d in &densities {
            write!(csv, ",{}", d[i]).unwrap();
        }
        csv.push('\n');
    }

    let top = densities.iter().flatten().copied().fold(0.0, f64::max);
    let mut svg = svg_frame("Bootstrap e-value densities", "evaluation map value", "density");
    let to_points = |d: &[f64]| -> Vec<(f64, f64)> {
        grid.iter()
            .zip(d)
            .map(|(&x, &y)| (scale(x, lo, hi, MARGIN, WIDTH - MARGIN), scale(y, 0.0, top, HEIGHT - MARGIN, MARGIN)))
            .collect()
    };
    for d in densities.iter().skip(1) {
        svg.push_str(&polyline(&to_points(d), "#7f9fbf", 1.0));
    }
    if let Some(full) = densities.first() {
        svg.push_str(&polyline(&to_points(full), "#c0392b", 2.5));
    }
    svg.push_str("</svg>\n");
    (csv, svg)
}

/// `1 − e-value` per SNP with the selection cutoff drawn as a horizontal line.
pub fn evalue_svg(labels: &[(String, String)], evalues: &[f64], selected: &[bool], cutoff: f64, q: f64) -> String {
    let mut svg = svg_frame(&format!("1 - e-value by SNP (q = {q})"), "SNP position", "1 - e-value");
    let n = evalues.len();
    let x_of = |i: usize| scale(i as f64, 0.0, n.saturating_sub(1) as f64, MARGIN + 10.0, WIDTH - MARGIN - 10.0);
    let y_of = |v: f64| scale(1.0 - v, 0.0, 1.0, HEIGHT - MARGIN, MARGIN);
    let cy = y_of(cutoff);
    writeln!(
        svg,
        "<line x1=\"{MARGIN}\" y1=\"{cy:.2}\" x2=\"{}\" y2=\"{cy:.2}\" stroke=\"#c0392b\" stroke-dasharray=\"6,4\"/>",
        WIDTH - MARGIN
    )
    .unwrap();
    for (i, (&v, &sel)) in evalues.iter().zip(selected).enumerate() {
        let colour = if sel { "#c0392b" } else { "#34495e" };
        let (id, pos) = &labels[i];
        writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{colour}\"><title>{id} ({pos})</title></circle>",
            x_of(i),
            y_of(v)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

/// Read a `select` output directory and write plots into `out`.
pub fn emit_plots(input: &Path, out: &Path) -> Result<Vec<String>> {
    let summary_path = input.join(SUMMARY_FILE);
    let text = std::fs::read_to_string(&summary_path).map_err(CliError::io(&summary_path))?;
    let summary: SelectSummary =
        toml::from_str(&text).map_err(|e| CliError::Config { path: summary_path.clone(), message: e.to_string() })?;
    let dist_path = input.join(DISTRIBUTIONS_FILE);
    if !dist_path.exists() {
        return Err(CliError::Validation(format!(
            "{} not found; rerun `select` with --dump-distributions to record the bootstrap distributions",
            dist_path.display()
        )));
    }
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    let mut written = Vec::new();

    let (headers, columns) = read_columns(&dist_path)?;
    let (csv, svg) = density_outputs(&headers[1..], &columns[1..]);
    write_text(&out.join(DENSITY_CSV), &csv)?;
    write_text(&out.join(DENSITY_SVG), &svg)?;
    written.extend([DENSITY_CSV.to_string(), DENSITY_SVG.to_string()]);

    let rows = read_report(&input.join(REPORT_FILE), summary.q_list.len())?;
    let labels: Vec<(String, String)> = rows.iter().map(|r| (r.snp_id.clone(), r.position.clone())).collect();
    let selected: Vec<bool> = rows.iter().map(|r| r.selected).collect();
    for (c, (&q, &cutoff)) in summary.q_list.iter().zip(&summary.thresholds).enumerate() {
        let evalues: Vec<f64> = rows.iter().map(|r| r.evalues[c]).collect();
        let name = format!("evalues_q{q}.svg");
        write_text(&out.join(&name), &evalue_svg(&labels, &evalues, &selected, cutoff, q))?;
        written.push(name);
    }
    Ok(written)
}
