//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 input I/O error,
//! 3 stage failure (the partial manifest names the stage).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trade_forensics::config::PipelineConfig;
use trade_forensics::error::Error;
use trade_forensics::pipeline::{reemit_reports, run_pipeline, RunManifest, RunMode};
use trade_forensics::synthgen::{generate_dataset, PlantSpec};

#[derive(Parser)]
#[command(
    name = "trade-forensics",
    version,
    about = "Forensic anomaly detection over customs trade CSVs",
    long_about = "Batch pipeline that parses raw customs exports, engineers per-record \
                  features, runs layered anomaly detection (K-Means archetypes, grouped \
                  IQR price outliers, Isolation Forest mega-trades, vague-description \
                  flags), scores and ranks a case file, and emits network, explanation, \
                  and intelligence reports."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write every output file
    Analyze(RunArgs),
    /// Parse the input and write only the reject quarantine
    Ingest(RunArgs),
    /// Re-emit report files from a prior run's manifest
    Report(ReportArgs),
    /// Generate a synthetic dataset with planted ground truth
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Input CSV file
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output directory
    #[arg(long, env = "TRADE_FORENSICS_OUT")]
    out: Option<PathBuf>,
    /// Config file (flat key = value TOML); flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; per-stage seeds derive from it
    #[arg(long)]
    seed: Option<u64>,
    /// K-Means cluster count
    #[arg(long)]
    clusters: Option<usize>,
    /// Isolation Forest flagging quantile (0, 0.5)
    #[arg(long)]
    contamination: Option<f64>,
    /// Tukey fence multiplier
    #[arg(long)]
    iqr_multiplier: Option<f64>,
    /// Smallest HS group eligible for price flags
    #[arg(long)]
    min_group_size: Option<usize>,
    /// Isolation Forest tree count
    #[arg(long)]
    iforest_trees: Option<usize>,
    /// Isolation Forest subsample size
    #[arg(long)]
    iforest_subsample: Option<usize>,
    /// Also write per-record Shapley attributions
    #[arg(long)]
    emit_shap_values: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// manifest.json from a previous run
    #[arg(long)]
    manifest: PathBuf,
    /// Alternative output directory (defaults to the manifest's)
    #[arg(long, env = "TRADE_FORENSICS_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Total data lines, including malformed ones
    #[arg(long, default_value_t = 1000)]
    records: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Planted customs-review price outliers
    #[arg(long, default_value_t = 40)]
    outliers: usize,
    /// Planted vague-description records
    #[arg(long, default_value_t = 15)]
    vague: usize,
    /// Planted mega-trades
    #[arg(long, default_value_t = 5)]
    mega: usize,
    /// Fraction of lines rendered malformed
    #[arg(long, default_value_t = 0.05)]
    defect_rate: f64,
    /// Output directory for synthetic.csv and ground_truth.json
    #[arg(long, env = "TRADE_FORENSICS_OUT", default_value = ".")]
    out: PathBuf,
}

fn build_config(args: &RunArgs) -> Result<PipelineConfig, Error> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(input) = &args.input {
        config.input = Some(input.clone());
    }
    if let Some(out) = &args.out {
        config.out_dir = Some(out.clone());
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(clusters) = args.clusters {
        config.clusters = clusters;
    }
    if let Some(c) = args.contamination {
        config.contamination = c;
    }
    if let Some(m) = args.iqr_multiplier {
        config.iqr_multiplier = m;
    }
    if let Some(g) = args.min_group_size {
        config.min_group_size = g;
    }
    if let Some(t) = args.iforest_trees {
        config.iforest_trees = t;
    }
    if let Some(s) = args.iforest_subsample {
        config.iforest_subsample = s;
    }
    if args.emit_shap_values {
        config.emit_shap_values = true;
    }
    config.validate()?;
    Ok(config)
}

fn print_manifest_summary(manifest: &RunManifest) {
    println!(
        "parsed {} records ({} rejected) from {} data lines",
        manifest.counts.parsed, manifest.counts.rejected, manifest.counts.data_lines
    );
    if manifest.counts.cluster_eligible > 0 || manifest.counts.case_file_entries > 0 {
        println!(
            "flagged {} customs-review / {} data-quality price anomalies, {} mega-trades",
            manifest.counts.price_flagged_customs,
            manifest.counts.price_flagged_data_quality,
            manifest.counts.mega_trades
        );
        println!("case file holds {} entries", manifest.counts.case_file_entries);
    }
    if let Some(out) = &manifest.config.out_dir {
        println!("outputs written to {}", out.display());
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Analyze(args) => {
            let config = build_config(&args)?;
            let manifest = run_pipeline(&config, RunMode::Full)?;
            print_manifest_summary(&manifest);
            Ok(())
        }
        Command::Ingest(args) => {
            let config = build_config(&args)?;
            let manifest = run_pipeline(&config, RunMode::IngestOnly)?;
            print_manifest_summary(&manifest);
            Ok(())
        }
        Command::Report(args) => {
            let manifest = reemit_reports(&args.manifest, args.out)?;
            print_manifest_summary(&manifest);
            Ok(())
        }
        Command::Synth(args) => {
            let spec = PlantSpec {
                n_records: args.records,
                n_price_outliers: args.outliers,
                n_vague: args.vague,
                n_mega_trades: args.mega,
                defect_rate: args.defect_rate,
                seed: args.seed,
                ..PlantSpec::default()
            };
            let (csv, truth) = generate_dataset(&spec)?;
            std::fs::create_dir_all(&args.out)?;
            let csv_path = args.out.join("synthetic.csv");
            std::fs::write(&csv_path, csv)?;
            let truth_json = serde_json::to_string_pretty(&truth)
                .map_err(|e| Error::parameter(format!("ground truth serialization: {e}")))?;
            std::fs::write(args.out.join("ground_truth.json"), truth_json)?;
            println!(
                "wrote {} and ground_truth.json ({} outliers, {} vague, {} mega)",
                csv_path.display(),
                truth.outlier_record_ids.len(),
                truth.vague_record_ids.len(),
                truth.mega_record_ids.len()
            );
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::DegenerateInput(_) => 1,
        Error::Io(_) => 2,
        Error::Stage { .. } => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
