//! File-based front end for the `qevalue` library: configuration, CSV
//! ingestion, the `simulate`/`select`/`study`/`plot` workflows and their
//! report writers.

pub mod config;
pub mod error;
pub mod io;
pub mod plot;
pub mod select;
pub mod study;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qevalue::rng::{substream, tag};
use qevalue::simgen::simulate_dataset;

pub use config::RunConfig;
pub use error::{CliError, Result};

/// Environment variable that fixes the worker thread count.
pub const THREADS_ENV: &str = "QEVALUE_THREADS";

pub const TRUTH_FILE: &str = "truth.csv";

/// Simulate one dataset and write it in the ingest layout plus `truth.csv`.
pub fn simulate(config: &RunConfig, out: &Path) -> Result<io::DataPaths> {
    let sim = config.sim_config();
    let (dataset, truth) = simulate_dataset(&sim, &mut substream(sim.seed, &[tag::SIM_TRAIN, 0]))?;
    let paths = io::write_dataset(&dataset, out)?;
    let mut text = String::from("snp_id,block,beta,causal\n");
    for (j, id) in dataset.snp_ids().iter().enumerate() {
        let block = sim.blocks.block_of(j).map_or(0, |b| b + 1);
        writeln!(text, "{id},{block},{},{}", truth.beta[j], u8::from(truth.causal_indices.contains(&j))).unwrap();
    }
    io::write_text(&out.join(TRUTH_FILE), &text)?;
    Ok(paths)
}

pub struct SelectArgs {
    pub data: io::DataPaths,
    pub out: PathBuf,
    pub dump_distributions: bool,
    pub snp_map: Option<PathBuf>,
}

/// Ingest, split, select and write the report files. Returns the ingest
/// summary for logging.
pub fn select(config: &RunConfig, args: &SelectArgs) -> Result<io::Ingested> {
    let ingested = io::ingest(&args.data)?;
    let snp_map = args.snp_map.as_deref().map(io::read_snp_map).transpose()?;
    let run = select::run_select(&ingested.dataset, config)?;
    select::write_select_outputs(&run, config, &args.out, args.dump_distributions, snp_map.as_ref())?;
    Ok(ingested)
}

pub fn study(config: &RunConfig, out: &Path) -> Result<study::StudyOutput> {
    let output = study::run_study(config)?;
    study::write_study(&output, config, out)?;
    Ok(output)
}
