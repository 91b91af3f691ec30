use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use iris_aging::imaging::{PolarGrid, Sector};
use iris_aging::matcher::{EncoderConfig, DEFAULT_MAX_ROTATION};
use iris_aging::pipeline::{self, ModelSelection, PipelineError, ReportFormat};
use iris_aging::quality::{Family, QualityConfig};
use iris_aging::synth::SynthConfig;
use iris_aging::Execution;

/// Template aging analysis for iris recognition: covariates, matching,
/// genuine-pair records and linear models of score drift over time.
#[derive(Debug, Parser)]
#[command(name = "iris-aging", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset with known effects.
    Synth(SynthArgs),
    /// Unwrap every manifest image to a polar texture and mask.
    Normalize(NormalizeArgs),
    /// Compute per-image quality covariates for one matcher family.
    Quality(QualityArgs),
    /// Encode polar irises and score all genuine pairs.
    Match(MatchArgs),
    /// Join genuine pairs, scores and covariates into a records CSV.
    Pairs(PairsArgs),
    /// Fit named models and write the reports.
    Fit(FitArgs),
    /// Re-render a saved JSON report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Worker threads (all cores by default).
    #[arg(long, env = "IRIS_AGING_JOBS", value_name = "N")]
    jobs: Option<usize>,
    /// Run single-threaded.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn exec(&self) -> Execution {
        if self.sequential || self.jobs == Some(1) {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// JSON or TOML synthetic configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct NormalizeArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 64)]
    rows: usize,
    /// Columns per full circle.
    #[arg(long, default_value_t = 512)]
    cols: usize,
    /// Angular sectors in degrees, e.g. `-45:45,135:225`.
    #[arg(long, value_name = "LIST")]
    sectors: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    D,
    B,
    V,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::D => Family::D,
            FamilyArg::B => Family::B,
            FamilyArg::V => Family::V,
        }
    }
}

#[derive(Debug, Args)]
struct QualityArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, ignore_case = true)]
    family: FamilyArg,
    /// Gaussian scale of the sharpness filter.
    #[arg(long, default_value_t = iris_aging::imaging::DEFAULT_LOG_SIGMA)]
    log_sigma: f64,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Maximum code shift in either direction.
    #[arg(long, default_value_t = DEFAULT_MAX_ROTATION)]
    max_rotation: usize,
    /// JSON encoder configuration.
    #[arg(long, value_name = "PATH")]
    encoder: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PairsArgs {
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, ignore_case = true)]
    family: FamilyArg,
    /// Score CSV; defaults to `<out>/scores_<F>.csv`.
    #[arg(long, value_name = "PATH")]
    scores: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Args)]
#[group(multiple = false)]
struct FormatArgs {
    /// Print the Markdown report (default).
    #[arg(long)]
    markdown: bool,
    /// Print the JSON report.
    #[arg(long)]
    json: bool,
}

impl FormatArgs {
    fn format(self) -> ReportFormat {
        if self.json {
            ReportFormat::Json
        } else {
            ReportFormat::Markdown
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, ignore_case = true)]
    family: FamilyArg,
    /// Records CSV; defaults to `<out>/records_<F>.csv`.
    #[arg(long, value_name = "PATH")]
    records: Option<PathBuf>,
    /// Comma-separated model names.
    #[arg(long, value_delimiter = ',', conflicts_with = "catalog")]
    models: Vec<String>,
    /// Fit every catalog model of the family (default when no models are named).
    #[arg(long)]
    catalog: bool,
    /// Extra model definitions; same-named catalog models are replaced.
    #[arg(long, value_name = "PATH")]
    model_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    format: FormatArgs,
    /// Model names, as an alternative to --models.
    #[arg(value_name = "MODEL", conflicts_with = "catalog")]
    names: Vec<String>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// JSON report written by `fit`.
    #[arg(long, value_name = "PATH")]
    report: PathBuf,
    #[command(flatten)]
    format: FormatArgs,
}

fn read_encoder(path: &Path) -> Result<EncoderConfig, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}

fn run(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::Synth(a) => {
            let mut cfg = match &a.config {
                Some(p) => SynthConfig::load(p)?,
                None => SynthConfig::default(),
            };
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            let exec = a.common.exec();
            let n = pipeline::with_jobs(a.common.jobs, || pipeline::synth(&cfg, &a.common.out, exec))?;
            eprintln!("wrote {n} images to {}", a.common.out.display());
        }
        Command::Normalize(a) => {
            let grid = PolarGrid {
                rows: a.rows,
                cols: a.cols,
                sectors: match &a.sectors {
                    Some(list) => Sector::parse_list(list)
                        .map_err(|e| PipelineError::Usage(format!("--sectors: {e}")))?,
                    None => vec![Sector::FULL],
                },
            };
            let exec = a.common.exec();
            let n = pipeline::with_jobs(a.common.jobs, || {
                pipeline::normalize(&a.manifest, &a.common.out, &grid, exec)
            })?;
            eprintln!("normalized {n} images");
        }
        Command::Quality(a) => {
            let cfg = QualityConfig { log_sigma: a.log_sigma };
            let exec = a.common.exec();
            let path = pipeline::with_jobs(a.common.jobs, || {
                pipeline::quality(&a.manifest, &a.common.out, a.family.into(), &cfg, exec)
            })?;
            eprintln!("wrote {}", path.display());
        }
        Command::Match(a) => {
            let enc = match &a.encoder {
                Some(p) => read_encoder(p)?,
                None => EncoderConfig::default(),
            };
            let exec = a.common.exec();
            let path = pipeline::with_jobs(a.common.jobs, || {
                pipeline::match_genuine(&a.manifest, &a.common.out, &enc, a.max_rotation, exec)
            })?;
            eprintln!("wrote {}", path.display());
        }
        Command::Pairs(a) => {
            let path = pipeline::pairs(&a.manifest, &a.common.out, a.family.into(), a.scores.as_deref())?;
            eprintln!("wrote {}", path.display());
        }
        Command::Fit(a) => {
            let family: Family = a.family.into();
            let mut names = a.models;
            names.extend(a.names);
            let selection = if names.is_empty() {
                ModelSelection::Catalog
            } else {
                ModelSelection::Names(names)
            };
            let models = pipeline::resolve_models(family, &selection, a.model_file.as_deref())?;
            let records = a
                .records
                .unwrap_or_else(|| pipeline::records_path(&a.common.out, family));
            let exec = a.common.exec();
            let report = pipeline::with_jobs(a.common.jobs, || {
                pipeline::fit(&records, family, &models, a.alpha, &a.common.out, exec)
            })?;
            match a.format.format() {
                ReportFormat::Markdown => print!("{}", report.to_markdown()),
                ReportFormat::Json => print!("{}", report.to_json()),
            }
        }
        Command::Report(a) => {
            print!("{}", pipeline::render_report(&a.report, a.format.format())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                if !e.to_string().contains(&s.to_string()) {
                    eprintln!("  caused by: {s}");
                }
                source = s.source();
            }
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
