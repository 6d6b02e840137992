use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qevalue_cli::io::DataPaths;
use qevalue_cli::{CliError, RunConfig, SelectArgs, THREADS_ENV};

#[derive(Parser)]
#[command(name = "qevalue", version, about = "Quantile e-value SNP selection for family data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one family dataset with known causal SNPs
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select SNPs from pedigree, phenotype and genotype files
    Select {
        #[arg(long)]
        ped: PathBuf,
        #[arg(long)]
        pheno: PathBuf,
        #[arg(long)]
        geno: PathBuf,
        #[arg(long)]
        covar: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the full and drop-one distributions at the winning s
        #[arg(long)]
        dump_distributions: bool,
        /// CSV with columns snp_id,position copied into the report
        #[arg(long)]
        snp_map: Option<PathBuf>,
    },
    /// Replicated simulation study against the baseline selectors
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Density and e-value plots from a select output directory
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Validation(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Validation(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Simulate { config, out } => {
            let config = RunConfig::load(&config)?;
            qevalue_cli::simulate(&config, &out)?;
            eprintln!("wrote simulated dataset to {}", out.display());
        }
        Command::Select { ped, pheno, geno, covar, config, out, dump_distributions, snp_map } => {
            let config = RunConfig::load(&config)?;
            let args = SelectArgs {
                data: DataPaths { pedigree: ped, phenotype: pheno, genotype: geno, covariates: covar },
                out,
                dump_distributions,
                snp_map,
            };
            let ingested = qevalue_cli::select(&config, &args)?;
            for f in &ingested.files {
                eprintln!("{}: {} rows, {} columns", f.path.display(), f.rows, f.columns);
            }
            if !ingested.dropped_families.is_empty() {
                eprintln!(
                    "dropped {} families with missing values: {}",
                    ingested.dropped_families.len(),
                    ingested.dropped_families.join(", ")
                );
            }
            eprintln!("wrote selection report to {}", args.out.display());
        }
        Command::Study { config, out } => {
            let config = RunConfig::load(&config)?;
            let output = qevalue_cli::study(&config, &out)?;
            let failures: usize = output.aggregate.iter().map(|r| r.failures).sum();
            eprintln!("wrote {} result rows to {} ({failures} failures)", output.rows.len(), out.display());
        }
        Command::Plot { input, out } => {
            let written = qevalue_cli::plot::emit_plots(&input, &out)?;
            eprintln!("wrote {} plot files to {}", written.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
