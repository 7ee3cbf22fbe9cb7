use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use lipid_mc::harness::{
    parse_config, run_analyze, run_benchmark, run_simulation, write_analysis_csv, AnalyzeMode,
    AnalyzeOptions,
};
use lipid_mc::imaging::RasterNeighborhood;
use lipid_mc::lattice::SiteType;
use lipid_mc::mpkk::suggest_dims;

#[derive(Parser)]
#[command(name = "lipid-mc", version, about = "Two-component membrane lattice Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a key=value config file.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Time sequential Kawasaki against MPKK at several lane counts.
    Bench {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        lanes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Where to write bench.csv; defaults to the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Recompute an observable per frame and print `step,value` CSV.
    Analyze {
        /// Trajectory or final-lattice file, or a snapshot file or directory.
        path: PathBuf,
        /// clusters, ffn or image_ffn.
        #[arg(long)]
        mode: String,
        /// Draw random neighbours with this seed instead of the exact expectation.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = lipid_mc::imaging::DEFAULT_DELTA_COL)]
        delta_col: u8,
        /// moore8 or hex6.
        #[arg(long, default_value = "moore8")]
        neighborhood: String,
        /// Species whose clusters are measured: A or B.
        #[arg(long, default_value = "A")]
        species: char,
    },
    /// Print the nearest lattice size that admits seven-site domain coverage.
    SuggestDims { l: usize, m: usize },
}

fn read_config(path: &PathBuf) -> Result<lipid_mc::harness::RunConfig> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, output_dir } => {
            let mut cfg = read_config(&config)?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let report = run_simulation(&cfg)?;
            let t = report.summary.totals;
            eprintln!(
                "{} steps on {} with {}: {} attempted, {} accepted, final energy {} kT",
                report.summary.steps,
                cfg.dims,
                cfg.engine.name(),
                t.attempted,
                t.accepted,
                cfg.model.omega_ab() * report.final_lattice.unlike_contacts() as f64
            );
        }
        Command::Bench { config, lanes, repeats, output_dir } => {
            let cfg = read_config(&config)?;
            let report = run_benchmark(&cfg, &lanes, repeats)?;
            let dir = output_dir.unwrap_or_else(|| cfg.output_dir.clone());
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join("bench.csv");
            let mut file = io::BufWriter::new(
                fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
            );
            report.write_csv(&mut file)?;
            file.flush()?;
            report.write_csv(&mut io::stdout().lock())?;
        }
        Command::Analyze { path, mode, seed, delta_col, neighborhood, species } => {
            let Some(mode) = AnalyzeMode::parse(&mode) else {
                bail!("unknown mode {mode:?}; expected clusters, ffn or image_ffn");
            };
            let Some(neighborhood) = RasterNeighborhood::parse(&neighborhood) else {
                bail!("unknown neighborhood {neighborhood:?}; expected moore8 or hex6");
            };
            let Some(species) = SiteType::from_char(species) else {
                bail!("species must be A or B");
            };
            let opts = AnalyzeOptions { species, delta_col, neighborhood, seed };
            let rows = run_analyze(&path, mode, &opts)?;
            write_analysis_csv(&rows, &mut io::stdout().lock())?;
        }
        Command::SuggestDims { l, m } => {
            let d = suggest_dims(l, m)?;
            println!("{} {}", d.l(), d.m());
        }
    }
    Ok(())
}
