//! Command-line front end.
//!
//! Every subcommand resolves its configuration in three layers: the preset
//! defaults, then an optional JSON config file, then explicit flags. The
//! resolved configuration is echoed next to every CSV it writes.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::exec::Execution;
use crate::models::{ModelKind, Support};
use crate::numerics::rng::ALGORITHM_ID;
use crate::simulation::{
    parse_roster, run_simulation_with, EstimatorSpec, Estimation, ReplicationRow, SimulationConfig, SimulationReport,
    SummaryRow, DEFAULT_SEED,
};
use crate::weights::parse_xi_list;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID_INPUT: i32 = 2;
pub const EXIT_ALL_DEGENERATE: i32 = 3;
pub const EXIT_SIMULATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "steingmm", version, about = "Stein method-of-moments and GMM estimators for gamma models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Fit the estimator roster to a data file.
    Estimate(Flags),
    /// Run a Monte Carlo study and write summary and per-replication CSVs.
    Simulate(Flags),
    /// Reproduce the one-parameter gamma MSE table.
    ReproTable1(Flags),
    /// Reproduce the per-ξ versus GMM comparison for the two-parameter gamma.
    ReproFigure1(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Estimate(_) => "estimate",
            Command::Simulate(_) => "simulate",
            Command::ReproTable1(_) => "repro-table1",
            Command::ReproFigure1(_) => "repro-figure1",
        }
    }

    pub fn flags(&self) -> &Flags {
        match self {
            Command::Estimate(f) | Command::Simulate(f) | Command::ReproTable1(f) | Command::ReproFigure1(f) => f,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Model name: gamma1 or gamma2.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Data file: one real per line, `#` starts a comment line.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated ξ list for the GMM estimators.
    #[arg(long)]
    pub xi: Option<String>,
    /// Comma-separated estimator roster, e.g. `hyvarinen,power:2,gmm2step,mle`.
    #[arg(long)]
    pub estimators: Option<String>,
    /// Sample size per replication.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of replications.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
    /// True gamma shape for simulations.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// True gamma rate for simulations, and the known rate for gamma1.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with defaults that flags override.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Fields accepted in a `--config` JSON file. All are optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<ModelKind>,
    pub data: Option<PathBuf>,
    pub xi: Option<Vec<f64>>,
    pub estimators: Option<Vec<EstimatorSpec>>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub out: Option<PathBuf>,
}

/// The fully resolved configuration, written as the sidecar JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub command: String,
    pub model: ModelKind,
    pub data_path: Option<PathBuf>,
    pub xi_list: Vec<f64>,
    pub estimators: Vec<EstimatorSpec>,
    pub n: usize,
    pub replications: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub workers: Option<usize>,
    pub output_path: Option<PathBuf>,
    pub config_path: Option<PathBuf>,
    pub rng: &'static str,
    pub version: &'static str,
}

impl ResolvedConfig {
    pub fn simulation_config(&self) -> SimulationConfig {
        SimulationConfig {
            model: self.model,
            alpha: self.alpha,
            beta: self.beta,
            n: self.n,
            replications: self.replications,
            master_seed: self.seed,
            xi_list: self.xi_list.clone(),
            estimators: self.estimators.clone(),
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    AllDegenerate,
    Simulation(Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Data(_) => EXIT_INVALID_INPUT,
            CliError::AllDegenerate => EXIT_ALL_DEGENERATE,
            CliError::Simulation(_) => EXIT_SIMULATION,
            CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "invalid configuration: {m}"),
            CliError::Data(m) => write!(f, "invalid data: {m}"),
            CliError::AllDegenerate => f.write_str("every requested estimator was degenerate on this sample"),
            CliError::Simulation(e) => write!(f, "simulation failed: {e}"),
            CliError::Io(m) => f.write_str(m),
        }
    }
}

fn io_error(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Renders a real with 17 significant digits, positionally for moderate
/// magnitudes and in scientific notation otherwise. The rendering parses
/// back to the identical `f64`.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.16e}", x.abs());
    let (mantissa, exponent) = sci.split_once('e').expect("exponent marker");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if x < 0.0 { "-" } else { "" };
    if !(-5..=16).contains(&exponent) {
        return format!("{sign}{mantissa}e{exponent}");
    }
    if exponent >= 0 {
        let split = exponent as usize + 1;
        let (int_part, frac_part) = digits.split_at(split);
        if frac_part.is_empty() {
            format!("{sign}{int_part}")
        } else {
            format!("{sign}{int_part}.{frac_part}")
        }
    } else {
        let zeros = "0".repeat((-exponent - 1) as usize);
        format!("{sign}0.{zeros}{digits}")
    }
}

/// Parses newline-delimited reals, skipping blank lines and lines whose
/// first non-blank character is `#`. Errors name the 1-based line.
pub fn parse_data(text: &str, support: Support) -> Result<Vec<f64>, String> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = i + 1;
        let x: f64 = line.parse().map_err(|_| format!("line {lineno}: '{line}' is not a decimal number"))?;
        if !x.is_finite() {
            return Err(format!("line {lineno}: '{line}' is not finite"));
        }
        if !support.contains(x) {
            return Err(format!(
                "line {lineno}: {x} lies outside the model support ({}, {})",
                support.lower, support.upper
            ));
        }
        values.push(x);
    }
    if values.is_empty() {
        return Err("the data file contains no observations".into());
    }
    Ok(values)
}

pub fn read_data(path: &Path, support: Support) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    parse_data(&text, support).map_err(|m| CliError::Data(format!("{}: {m}", path.display())))
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub struct EstimateRow {
    pub estimator: String,
    pub parameter: String,
    pub estimate: Option<f64>,
    pub diagnostic: String,
}

pub fn write_estimate_csv<W: Write>(out: W, rows: &[EstimateRow]) -> io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["estimator", "parameter", "estimate", "diagnostic"]).map_err(csv_err)?;
    for r in rows {
        let estimate = r.estimate.map(format_real).unwrap_or_default();
        w.write_record([r.estimator.as_str(), r.parameter.as_str(), estimate.as_str(), r.diagnostic.as_str()])
            .map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record([
        "estimator",
        "parameter",
        "true_value",
        "mean",
        "bias",
        "variance",
        "mse",
        "mc_standard_error_of_mse",
        "successes",
        "failures",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.estimator.clone(),
            r.parameter.clone(),
            format_real(r.true_value),
            format_real(r.mean),
            format_real(r.bias),
            format_real(r.variance),
            format_real(r.mse),
            format_real(r.mc_standard_error_of_mse),
            r.successes.to_string(),
            r.failures.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

/// Long format; a failed estimate is an empty field.
pub fn write_replications_csv<W: Write>(out: W, rows: &[ReplicationRow]) -> io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["replication", "estimator", "parameter", "estimate"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.replication.to_string(),
            r.estimator.clone(),
            r.parameter.clone(),
            r.estimate.map(format_real).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

/// `dir/name.csv` → `dir/name.<tag>.csv`.
pub fn sibling_path(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{tag}.csv"))
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn load_config_file(path: &Path) -> Result<ConfigFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Applies preset defaults, then the config file, then the flags.
pub fn resolve(command: &Command) -> Result<ResolvedConfig, CliError> {
    let flags = command.flags();
    let file = match &flags.config {
        Some(path) => load_config_file(path)?,
        None => ConfigFile::default(),
    };
    let seed = flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let preset = match command {
        Command::ReproFigure1(_) => SimulationConfig::figure1(seed),
        _ => SimulationConfig::table1(seed),
    };
    let usage = |e: Error| CliError::Usage(e.to_string());

    let xi_list = match &flags.xi {
        Some(text) => parse_xi_list(text).map_err(usage)?,
        None => file.xi.unwrap_or(preset.xi_list),
    };
    let estimators = match &flags.estimators {
        Some(text) => parse_roster(text).map_err(usage)?,
        None => file.estimators.unwrap_or(preset.estimators),
    };
    let resolved = ResolvedConfig {
        command: command.name().to_string(),
        model: flags.model.or(file.model).unwrap_or(preset.model),
        data_path: flags.data.clone().or(file.data),
        xi_list,
        estimators,
        n: flags.n.or(file.n).unwrap_or(preset.n),
        replications: flags.reps.or(file.reps).unwrap_or(preset.replications),
        alpha: flags.alpha.or(file.alpha).unwrap_or(preset.alpha),
        beta: flags.beta.or(file.beta).unwrap_or(preset.beta),
        seed,
        workers: flags.workers.or(file.workers),
        output_path: flags.out.clone().or(file.out),
        config_path: flags.config.clone(),
        rng: ALGORITHM_ID,
        version: env!("CARGO_PKG_VERSION"),
    };
    if resolved.model == ModelKind::Basis {
        return Err(CliError::Usage("the basis model is only available through the library".into()));
    }
    Ok(resolved)
}

fn write_file(path: &Path, f: impl FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    let mut buf = io::BufWriter::new(file);
    f(&mut buf).and_then(|_| buf.flush()).map_err(|e| io_error(path, e))
}

fn sidecar_json(config: &ResolvedConfig) -> String {
    let mut text = serde_json::to_string_pretty(config).expect("config serializes");
    text.push('\n');
    text
}

/// Writes the primary CSV to `--out` (or stdout) and the sidecar JSON next
/// to it (or to stderr).
fn emit(
    config: &ResolvedConfig,
    primary: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), CliError> {
    match &config.output_path {
        Some(path) => {
            write_file(path, |w| primary(w))?;
            let json = sidecar_path(path);
            fs::write(&json, sidecar_json(config)).map_err(|e| io_error(&json, e))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            primary(&mut lock).map_err(|e| CliError::Io(format!("stdout: {e}")))?;
            eprint!("{}", sidecar_json(config));
            Ok(())
        }
    }
}

fn diagnostic_text(d: &crate::estimators::Diagnostics) -> String {
    let mut parts = Vec::new();
    if let Some(c) = d.condition_number {
        parts.push(format!("condition={c:.6e}"));
    }
    if let Some(i) = d.iterations {
        parts.push(format!("iterations={i}"));
    }
    if let Some(r) = d.ridge_used {
        if r > 0.0 {
            parts.push(format!("ridge={r:.6e}"));
        }
    }
    if parts.is_empty() {
        "ok".into()
    } else {
        parts.join(";")
    }
}

/// Runs every estimator on the data and returns the CSV rows. Fails with
/// [`CliError::AllDegenerate`] only when every estimator hit a degenerate
/// linear system, after the rows have been produced.
pub fn estimate_rows(config: &ResolvedConfig, sample: &[f64]) -> Result<(Vec<EstimateRow>, bool), CliError> {
    let estimation =
        Estimation::new(config.model, config.beta, &config.xi_list).map_err(|e| CliError::Usage(e.to_string()))?;
    let names = estimation.parameter_names();
    let mut rows = Vec::new();
    let mut all_degenerate = true;
    for &spec in &config.estimators {
        match estimation.estimate_reported(spec, sample) {
            Ok(result) => {
                all_degenerate = false;
                let diagnostic = diagnostic_text(&result.diagnostics);
                for (name, &value) in names.iter().zip(result.theta_hat.iter()) {
                    rows.push(EstimateRow {
                        estimator: spec.to_string(),
                        parameter: (*name).to_string(),
                        estimate: Some(value),
                        diagnostic: diagnostic.clone(),
                    });
                }
            }
            Err(e) => {
                if !matches!(e, Error::DegenerateProblem(_) | Error::SingularSystem { .. }) {
                    all_degenerate = false;
                }
                for name in names {
                    rows.push(EstimateRow {
                        estimator: spec.to_string(),
                        parameter: (*name).to_string(),
                        estimate: None,
                        diagnostic: format!("error: {e}"),
                    });
                }
            }
        }
    }
    Ok((rows, all_degenerate))
}

fn cmd_estimate(config: &ResolvedConfig) -> Result<(), CliError> {
    let path = config.data_path.as_deref().ok_or_else(|| CliError::Usage("estimate needs --data".into()))?;
    let estimation =
        Estimation::new(config.model, config.beta, &config.xi_list).map_err(|e| CliError::Usage(e.to_string()))?;
    let sample = read_data(path, estimation.model().support())?;
    let (rows, all_degenerate) = estimate_rows(config, &sample)?;
    emit(config, |w| write_estimate_csv(w, &rows))?;
    if all_degenerate {
        return Err(CliError::AllDegenerate);
    }
    Ok(())
}

fn run_study(config: &ResolvedConfig) -> Result<SimulationReport, CliError> {
    let sim = config.simulation_config();
    sim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let report = run_simulation_with(&sim, Execution::from_workers(config.workers)).map_err(CliError::Simulation)?;
    for f in &report.failures {
        eprintln!("warning: replication {} {}: {}", f.replication, f.estimator, f.message);
    }
    for (estimator, parameter) in &report.suppressed {
        eprintln!("warning: summary for {estimator}/{parameter} suppressed: too many failed replications");
    }
    Ok(report)
}

/// Summary CSV as the primary output; per-replication rows beside it.
fn cmd_summary_study(config: &ResolvedConfig) -> Result<(), CliError> {
    let report = run_study(config)?;
    emit(config, |w| write_summary_csv(w, &report.summary))?;
    if let Some(out) = &config.output_path {
        write_file(&sibling_path(out, "replications"), |w| write_replications_csv(w, &report.per_replication))?;
    }
    Ok(())
}

/// Per-replication long-format CSV as the primary output; summary beside it.
fn cmd_figure(config: &ResolvedConfig) -> Result<(), CliError> {
    let report = run_study(config)?;
    emit(config, |w| write_replications_csv(w, &report.per_replication))?;
    if let Some(out) = &config.output_path {
        write_file(&sibling_path(out, "summary"), |w| write_summary_csv(w, &report.summary))?;
    }
    Ok(())
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    let config = resolve(command)?;
    match command {
        Command::Estimate(_) => cmd_estimate(&config),
        Command::Simulate(_) | Command::ReproTable1(_) => cmd_summary_study(&config),
        Command::ReproFigure1(_) => cmd_figure(&config),
    }
}

/// Runs the parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_formatting_round_trips() {
        assert_eq!(format_real(2.2), "2.2000000000000002");
        assert_eq!(format_real(6.0), "6.0000000000000000");
        assert_eq!(format_real(-0.5), "-0.50000000000000000");
        assert_eq!(format_real(0.0), "0");
        assert_eq!(format_real(1e-7), "9.9999999999999995e-8");
        assert_eq!(format_real(1.5e-7), "1.4999999999999999e-7");
        for &x in &[1.0 / 3.0, 12345.678, 1e20, -3.3e-9, 0.000123, 1e16 - 2.0, f64::MIN_POSITIVE] {
            let s = format_real(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn data_parsing() {
        let s = Support::POSITIVE_REALS;
        assert_eq!(parse_data("# header\n1\n\n 2.5 \n", s).unwrap(), vec![1.0, 2.5]);
        let err = parse_data("1\nabc\n", s).unwrap_err();
        assert!(err.contains("line 2"), "{err}");
        let err = parse_data("1\n2\n-1\n", s).unwrap_err();
        assert!(err.contains("line 3"), "{err}");
        assert!(parse_data("# nothing\n", s).is_err());
        assert!(parse_data("1\ninf\n", s).is_err());
    }

    #[test]
    fn sibling_and_sidecar_paths() {
        let out = Path::new("/tmp/run/table.csv");
        assert_eq!(sibling_path(out, "summary"), Path::new("/tmp/run/table.summary.csv"));
        assert_eq!(sidecar_path(out), Path::new("/tmp/run/table.json"));
    }

    #[test]
    fn flags_override_config_file() {
        let dir = std::env::temp_dir().join(format!("steingmm-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cfg.json");
        fs::write(&path, r#"{"model": "gamma2", "n": 80, "seed": 7, "xi": [0, 1]}"#).unwrap();
        let flags = Flags { n: Some(90), config: Some(path.clone()), ..Flags::default() };
        let resolved = resolve(&Command::Simulate(flags)).unwrap();
        assert_eq!(resolved.model, ModelKind::Gamma2);
        assert_eq!(resolved.n, 90);
        assert_eq!(resolved.seed, 7);
        assert_eq!(resolved.xi_list, vec![0.0, 1.0]);
        assert_eq!(resolved.replications, 1000);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = std::env::temp_dir().join(format!("steingmm-cli-bad-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cfg.json");
        fs::write(&path, r#"{"sample_size": 80}"#).unwrap();
        let flags = Flags { config: Some(path), ..Flags::default() };
        let err = resolve(&Command::Simulate(flags)).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_INVALID_INPUT);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn figure_preset_defaults() {
        let resolved = resolve(&Command::ReproFigure1(Flags::default())).unwrap();
        assert_eq!(resolved.model, ModelKind::Gamma2);
        assert_eq!(resolved.n, 500);
        assert_eq!(resolved.estimators.len(), 12);
        assert_eq!(resolved.seed, DEFAULT_SEED);
    }
}
