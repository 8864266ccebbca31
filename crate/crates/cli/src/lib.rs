//! Command-line driver: runs experiments into self-describing run
//! directories and compares finished runs.

use std::cell::RefCell;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hapfl::orchestrator::{
    compare_runs, read_metrics_csv, run_experiment_with, summary_csv, summary_text, ExperimentConfig, MetricsWriter,
    Mode, RunSeries, RunSummary,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable that overrides the config seed (a `--seed` flag wins).
pub const SEED_ENV: &str = "HAPFL_SEED";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
/// Hex digits of the config hash used as the run directory name.
const RUN_ID_LEN: usize = 12;

#[derive(Debug, Parser)]
#[command(name = "hapfl", version, about = "Heterogeneity-aware federated learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write its metrics, manifest and checkpoints.
    Run(RunArgs),
    /// Summarise two or more finished runs against the first.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON config; missing keys take their defaults.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config mode.
    #[arg(long)]
    pub mode: Option<String>,
    /// Overrides the config seed and HAPFL_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parent directory for the run directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Run directories; the first is the baseline.
    #[arg(required = true, num_args = 2..)]
    pub runs: Vec<PathBuf>,
    /// Where to write the CSV table.
    #[arg(long, default_value = "comparison.csv")]
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] hapfl::Error),
}

impl CliError {
    fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }

    /// 1 for anything the user can fix, 2 for broken internal invariants.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                hapfl::Error::Config { .. } | hapfl::Error::Parse(_) | hapfl::Error::Io(_) | hapfl::Error::Json(_) => 1,
                hapfl::Error::Dimension { .. } | hapfl::Error::NonFinite { .. } | hapfl::Error::Contract(_) => 2,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(CliError::io(format!("cannot read config {}", path.display())))?;
    Ok(ExperimentConfig::from_json(&text)?)
}

/// Stable id for a config and seed: hex SHA-256 of both.
pub fn run_id(cfg: &ExperimentConfig) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(cfg).map_err(hapfl::Error::from)?);
    hasher.update(cfg.seed.to_le_bytes());
    Ok(hex::encode(hasher.finalize()))
}

/// Output locations, relative to the `--out` directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPaths {
    pub run_dir: PathBuf,
    pub metrics: PathBuf,
    pub manifest: PathBuf,
    pub checkpoints: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub seed: u64,
    pub mode: Mode,
    pub config: ExperimentConfig,
    pub paths: RunPaths,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub rounds_expected: usize,
    pub rounds_completed: usize,
    /// Set until the run finishes cleanly.
    pub partial: bool,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn read(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let file = File::open(&path).map_err(CliError::io(format!("cannot open {}", path.display())))?;
        Ok(serde_json::from_reader(BufReader::new(file)).map_err(hapfl::Error::from)?)
    }

    fn write(&self, out: &Path) -> Result<()> {
        let path = out.join(&self.paths.manifest);
        let text = serde_json::to_string_pretty(self).map_err(hapfl::Error::from)?;
        fs::write(&path, text + "\n").map_err(CliError::io(format!("cannot write {}", path.display())))
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Applies `--mode`, then the seed with precedence flag > env > config.
pub fn resolve_config(args: &RunArgs, seed_env: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg = parse_config(&args.config)?;
    if let Some(mode) = &args.mode {
        cfg.mode = mode.parse()?;
    }
    if let Some(raw) = seed_env {
        cfg.seed = raw
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got {raw:?}")))?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Runs the experiment and returns its manifest. On failure the manifest is
/// left on disk flagged partial, with the error recorded.
pub fn cmd_run(args: &RunArgs, seed_env: Option<&str>) -> Result<RunManifest> {
    let cfg = resolve_config(args, seed_env)?;
    let id = run_id(&cfg)?;
    let run_dir = PathBuf::from(&id[..RUN_ID_LEN]);
    let paths = RunPaths {
        metrics: run_dir.join(METRICS_FILE),
        manifest: run_dir.join(MANIFEST_FILE),
        checkpoints: run_dir.join(CHECKPOINT_DIR),
        run_dir,
    };
    let abs_dir = args.out.join(&paths.run_dir);
    fs::create_dir_all(&abs_dir).map_err(CliError::io(format!("cannot create {}", abs_dir.display())))?;

    let mut manifest = RunManifest {
        run_id: id,
        seed: cfg.seed,
        mode: cfg.mode,
        config: cfg.clone(),
        paths,
        started_at: now(),
        finished_at: None,
        rounds_expected: cfg.rounds * cfg.episodes,
        rounds_completed: 0,
        partial: true,
        error: None,
    };
    manifest.write(&args.out)?;

    let result = execute(&cfg, &args.out, &manifest.paths, &mut manifest.rounds_completed);
    manifest.finished_at = Some(now());
    match result {
        Ok(()) => {
            manifest.partial = false;
            manifest.write(&args.out)?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.error = Some(e.to_string());
            // the original error matters more than a failed manifest rewrite
            let _ = manifest.write(&args.out);
            Err(e)
        }
    }
}

fn execute(cfg: &ExperimentConfig, out: &Path, paths: &RunPaths, completed: &mut usize) -> Result<()> {
    let metrics_path = out.join(&paths.metrics);
    let file =
        File::create(&metrics_path).map_err(CliError::io(format!("cannot create {}", metrics_path.display())))?;
    // both callbacks need the writer
    let writer = RefCell::new(MetricsWriter::new(BufWriter::new(file))?);
    let checkpoints = out.join(&paths.checkpoints);
    run_experiment_with(
        cfg,
        |m| {
            writer.borrow_mut().write(m)?;
            *completed += 1;
            Ok(())
        },
        |episode, sim| {
            writer.borrow_mut().flush()?;
            sim.write_checkpoints(&checkpoints.join(format!("episode_{episode}")))
        },
    )?;
    writer.into_inner().flush()?;
    Ok(())
}

/// Display name of a run directory: `<mode>@<dir>` when a manifest is present.
fn run_name(dir: &Path) -> String {
    let base = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    match RunManifest::read(dir) {
        Ok(m) => format!("{}@{base}", m.mode),
        Err(_) => base,
    }
}

pub fn load_run(dir: &Path) -> Result<RunSeries> {
    let path = dir.join(METRICS_FILE);
    let file = File::open(&path).map_err(CliError::io(format!("cannot open {}", path.display())))?;
    Ok(RunSeries {
        name: run_name(dir),
        rows: read_metrics_csv(BufReader::new(file))?,
    })
}

/// Loads every run, checks they cover the same rounds, and returns the
/// summaries together with the aligned text table. Writes the CSV table.
pub fn cmd_compare(args: &CompareArgs) -> Result<(Vec<RunSummary>, String)> {
    if args.runs.len() < 2 {
        return Err(CliError::Usage("compare needs at least two run directories".into()));
    }
    let runs = args.runs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    let rounds = runs[0].rows.len();
    if rounds == 0 {
        return Err(CliError::Usage(format!("{} has no rounds", args.runs[0].display())));
    }
    for (run, dir) in runs.iter().zip(&args.runs) {
        if run.rows.len() != rounds {
            return Err(CliError::Usage(format!(
                "{} has {} rounds but {} has {rounds}",
                dir.display(),
                run.rows.len(),
                args.runs[0].display()
            )));
        }
    }
    let summaries = compare_runs(&runs)?;
    fs::write(&args.out, summary_csv(&summaries))
        .map_err(CliError::io(format!("cannot write {}", args.out.display())))?;
    Ok((summaries.clone(), summary_text(&summaries)))
}

/// Parses `args` (program name first), dispatches, and returns the exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Run(args) => {
            let seed_env = std::env::var(SEED_ENV).ok();
            cmd_run(args, seed_env.as_deref()).map(|m| {
                println!("{}", args.out.join(&m.paths.run_dir).display());
            })
        }
        Command::Compare(args) => cmd_compare(args).map(|(_, text)| print!("{text}")),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
