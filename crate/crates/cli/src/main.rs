//! `modalsim`: batch front end for the modal-choice model.
//!
//! Exit codes: 0 ok, 1 validation error, 2 I/O error, 3 internal error.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use modalsim_core::bias::{crowd_medians, halo_rationality_report_with, halo_rescue_table, HaloComparison};
use modalsim_core::decision::{rationality_report, CriterionMask, EvalSource};
use modalsim_core::policy::{builtin_scenario, run_scenario, BiasConfig, PolicyScenario, ScenarioResult};
use modalsim_core::report::{halo_rescue_csv, rationality_csv, stats_tables, transfer_csv};
use modalsim_core::snapshot::{read_canonical_json, write_canonical_json};
use modalsim_core::stats::StdevConvention;
use modalsim_core::survey::{parse_survey_csv, SchemaMap};
use modalsim_core::synth::{default_config, synthesize, Profile};
use modalsim_core::Population;
use modalsim_service::ServiceConfig;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Internal(_) => 3,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "modalsim", version, about = "Modal-choice model, bias operators and policy scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Evals {
    #[value(name = "self")]
    Own,
    Crowd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stdev {
    Population,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    OurSample,
    France,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a survey CSV into a population snapshot.
    Ingest {
        csv: PathBuf,
        /// JSON column-name mapping; defaults to the built-in layout.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the descriptive tables and figure data as CSV files.
    Stats {
        pop: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "population")]
        stdev: Stdev,
    },
    /// Rational / irrational / constrained shares by usual mode.
    Rationality {
        pop: PathBuf,
        #[arg(long, value_enum, default_value = "self")]
        evals: Evals,
        #[arg(long, value_enum, default_value = "off")]
        halo: Switch,
        /// Compare against every mode rather than accessible ones when building halo masks.
        #[arg(long)]
        halo_all_modes: bool,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Irrational choices made rational by a halo mask, by mode and criterion.
    HaloRescue {
        pop: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic population.
    Synth {
        #[arg(long, value_enum, default_value = "our-sample")]
        profile: ProfileArg,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a policy scenario: a built-in key (free-pt, safe-lanes, city-15) or a JSON file.
    Scenario {
        pop: PathBuf,
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        bias_config: Option<PathBuf>,
        /// Directory for `<name>_result.json` and `<name>_transfer.csv`.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, env = "MODALSIM_HOST", default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, env = "MODALSIM_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        cors: bool,
        /// Persist populations here on shutdown and reload them on demand.
        #[arg(long)]
        snapshot_dir: Option<PathBuf>,
    },
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Write via a temporary file in the same directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| CliError::Io { path: path.to_path_buf(), source };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Append the command line and a timestamp to `run.log` next to the outputs.
/// Data files themselves never carry timestamps.
fn run_log(dir: &Path) {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let args: Vec<String> = std::env::args().collect();
    let line = format!("{secs}\t{}\n", args.join(" "));
    let appended = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("run.log"))
        .and_then(|mut f| f.write_all(line.as_bytes()));
    if let Err(e) = appended {
        log::warn!("could not write run log: {e}");
    }
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

fn load_population(path: &Path) -> Result<Population> {
    read_canonical_json(&read_file(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn to_json(v: &ScenarioResult) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| CliError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn load_scenario(arg: &str) -> Result<(String, PolicyScenario)> {
    if let Some(s) = builtin_scenario(arg) {
        return Ok((arg.to_string(), s));
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(invalid(format!("{arg:?} is neither a built-in scenario (free-pt, safe-lanes, city-15) nor a file")));
    }
    let s: PolicyScenario = serde_json::from_slice(&read_file(path)?).map_err(|e| invalid(format!("{arg}: {e}")))?;
    s.validate().map_err(invalid)?;
    let key = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into());
    Ok((key, s))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { csv, schema, out } => {
            let schema = match schema {
                Some(p) => SchemaMap::from_json(&read_file(&p)?).map_err(invalid)?,
                None => SchemaMap::default(),
            };
            let bytes = read_file(&csv)?;
            let source = csv.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let pop = parse_survey_csv(bytes.as_slice(), &schema, &source).map_err(invalid)?;
            let flagged = pop.iter().filter(|r| !r.outlier_flags.is_empty()).count();
            eprintln!("{} respondents ingested, {flagged} flagged", pop.len());
            write_atomic(&out, &write_canonical_json(&pop))?;
            run_log(parent_dir(&out));
        }
        Command::Stats { pop, out_dir, stdev } => {
            let pop = load_population(&pop)?;
            let convention = match stdev {
                Stdev::Population => StdevConvention::Population,
                Stdev::Sample => StdevConvention::Sample,
            };
            for (name, csv) in stats_tables(&pop, convention).map_err(invalid)? {
                write_atomic(&out_dir.join(name), csv.as_bytes())?;
            }
            run_log(&out_dir);
        }
        Command::Rationality { pop, evals, halo, halo_all_modes, out } => {
            let pop = load_population(&pop)?;
            let src = match evals {
                Evals::Own => EvalSource::SelfEvals,
                Evals::Crowd => EvalSource::Crowd(crowd_medians(&pop).map_err(invalid)?),
            };
            let comparison = if halo_all_modes { HaloComparison::AllModes } else { HaloComparison::AvailableModes };
            let report = match halo {
                Switch::On => halo_rationality_report_with(&pop, &src, comparison),
                Switch::Off => rationality_report(&pop, &src, |_| CriterionMask::NONE),
            }
            .map_err(invalid)?;
            if !report.skipped.is_empty() {
                eprintln!("{} respondents skipped (all priorities zero)", report.skipped.len());
            }
            write_or_print(out.as_deref(), &rationality_csv(&report))?;
        }
        Command::HaloRescue { pop, out } => {
            let pop = load_population(&pop)?;
            write_or_print(out.as_deref(), &halo_rescue_csv(&halo_rescue_table(&pop)))?;
        }
        Command::Synth { profile, n, seed, out } => {
            let mut cfg = default_config(match profile {
                ProfileArg::OurSample => Profile::OurSample,
                ProfileArg::France => Profile::France,
            });
            cfg.n = n.unwrap_or(cfg.n);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let pop = synthesize(&cfg).map_err(invalid)?;
            write_atomic(&out, &write_canonical_json(&pop))?;
            run_log(parent_dir(&out));
        }
        Command::Scenario { pop, scenario, bias_config, out_dir } => {
            let pop = load_population(&pop)?;
            let (key, scenario) = load_scenario(&scenario)?;
            let bias: BiasConfig = match bias_config {
                Some(p) => serde_json::from_slice(&read_file(&p)?).map_err(|e| invalid(format!("{}: {e}", p.display())))?,
                None => BiasConfig::default(),
            };
            bias.validate().map_err(invalid)?;
            let result = run_scenario(&pop, &scenario, &bias).map_err(invalid)?;
            write_atomic(&out_dir.join(format!("{key}_result.json")), &to_json(&result)?)?;
            write_atomic(&out_dir.join(format!("{key}_transfer.csv")), transfer_csv(&result.transfer).as_bytes())?;
            eprintln!(
                "{}: emissions index {:.3} -> {:.3}",
                result.scenario.name, result.emissions_before, result.emissions_index
            );
            run_log(&out_dir);
        }
        Command::Serve { host, port, cors, snapshot_dir } => {
            let config = ServiceConfig { snapshot_dir, cors, ..Default::default() };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            let addr = SocketAddr::new(host, port);
            rt.block_on(modalsim_service::serve(addr, config))
                .map_err(|source| CliError::Io { path: PathBuf::from(addr.to_string()), source })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
