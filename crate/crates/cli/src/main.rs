mod annotate;
mod commands;
mod config;
mod logging;
mod manifest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Detect, rewrite and audit biased language in news corpora.
#[derive(Debug, Parser)]
#[command(name = "bias-audit", version, about)]
pub struct Cli {
    /// Run configuration file (TOML or JSON).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Parallel requests; overrides the provider's max_concurrency.
    #[arg(long, global = true, value_name = "N")]
    pub concurrency: Option<usize>,
    /// Log verbosity on stderr.
    #[arg(long, global = true, default_value = "info", value_name = "LEVEL")]
    pub log_level: log::Level,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a corpus and write normalised articles and diagnostics.
    Ingest {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print corpus statistics as JSON.
    Stats {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Score every paragraph with the detection prompt.
    Detect {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Model id; overrides the provider config.
        #[arg(long)]
        model: Option<String>,
        /// `mock` or a provider config file.
        #[arg(long)]
        provider: Option<String>,
        /// Run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Failure fraction above which the exit code is 2.
        #[arg(long)]
        failure_threshold: Option<f64>,
    },
    /// Rewrite flagged paragraphs with one prompt level.
    Debias {
        #[arg(long)]
        assessments: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        level: u8,
        #[arg(long)]
        provider: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        failure_threshold: Option<f64>,
    },
    /// Score rewrites with the detector and record post-scores.
    Reassess {
        /// A debias output file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Detector model id.
        #[arg(long)]
        detector: Option<String>,
        #[arg(long)]
        provider: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        failure_threshold: Option<f64>,
    },
    /// Compare outputs with human annotations.
    Evaluate {
        #[command(subcommand)]
        target: EvaluateTarget,
    },
    /// Publisher/year and state/year tables, pairwise tests and charts.
    Analyze {
        #[arg(long)]
        assessments: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write SVG charts.
        #[arg(long)]
        charts: bool,
        /// Gazetteer file replacing the bundled state list.
        #[arg(long)]
        gazetteer: Option<PathBuf>,
    },
    /// Summarise a run directory as Markdown.
    Report {
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Generate synthetic annotations from the mock scoring rule.
    MockAnnotate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Debias outputs whose rewrites should also be annotated.
        #[arg(long, num_args = 1..)]
        debiased: Vec<PathBuf>,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        annotators: usize,
        /// Probability that an annotator deviates from the rule.
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvaluateTarget {
    /// Table 1 style agreement metrics for one or more assessment files.
    Detection {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        assessments: Vec<PathBuf>,
        #[command(flatten)]
        metrics: MetricArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Residual bias after rewriting, by human and LLM judges.
    Debias {
        #[arg(long)]
        annotations: PathBuf,
        /// Reassessed debias outputs, one per level.
        #[arg(long = "debiased", alias = "assessments", required = true, num_args = 1..)]
        debiased: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = TieArg::HigherSeverity)]
        tie_rule: TieArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Similarity of rewrites to originals.
    Similarity {
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long = "debiased", alias = "assessments", required = true, num_args = 1..)]
        debiased: Vec<PathBuf>,
        /// `mock` or an embedding provider config file.
        #[arg(long)]
        embedding_provider: Option<String>,
        /// Skip embedding cosine even when a provider is configured.
        #[arg(long)]
        no_embedding: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct MetricArgs {
    #[arg(long, value_enum, default_value_t = AlphaLevelArg::Nominal)]
    pub alpha_level: AlphaLevelArg,
    #[arg(long, value_enum, default_value_t = AlphaRatersArg::ModelVsMajority)]
    pub alpha_raters: AlphaRatersArg,
    #[arg(long = "kappa-weight", value_enum, default_value_t = KappaArg::None)]
    pub kappa_weight: KappaArg,
    #[arg(long, value_enum, default_value_t = TieArg::HigherSeverity)]
    pub tie_rule: TieArg,
    /// Skip annotated paragraphs without an assessment.
    #[arg(long)]
    pub allow_gaps: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlphaLevelArg {
    Nominal,
    Ordinal,
    Interval,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlphaRatersArg {
    ModelVsMajority,
    ModelVsAnnotators,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KappaArg {
    None,
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TieArg {
    HigherSeverity,
    LowerSeverity,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    logging::init(cli.log_level);
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
