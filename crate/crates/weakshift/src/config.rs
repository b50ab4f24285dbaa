//! Command-line and config-file parsing.
//!
//! Every command accepts the same option set. A config file holds
//! `key = value` lines whose keys are the flag names without `--`; flags on
//! the command line override file values.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, ValueEnum};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Output spectra and observables at given angles.
    Simulate,
    /// Shift and loss over a range of angles.
    Sweep,
    /// Delay estimate from measured sweep data.
    Fit,
    /// Observables under angle jitter and instrument smoothing.
    Montecarlo,
    /// Low-loss and high-loss working points.
    Regimes,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Fit => "fit",
            Command::Montecarlo => "montecarlo",
            Command::Regimes => "regimes",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize)]
pub struct Options {
    /// Gaussian pulse duration (intensity FWHM).
    #[arg(long)]
    pub tau_fs: Option<f64>,
    /// Carrier frequency of the Gaussian pulse.
    #[arg(long)]
    pub nu0_thz: Option<f64>,
    /// Measured input spectrum, CSV `frequency_thz,density`.
    #[arg(long)]
    pub spectrum_file: Option<PathBuf>,
    /// Nodes of the sampling grid for Gaussian pulses.
    #[arg(long)]
    pub grid_nodes: Option<usize>,
    /// Half-width of the sampling grid for Gaussian pulses.
    #[arg(long)]
    pub grid_half_width_thz: Option<f64>,

    /// Arm delay difference T = T1 − T2.
    #[arg(long, allow_hyphen_values = true)]
    pub delay_fs: Option<f64>,
    /// Arm delay difference in attoseconds.
    #[arg(long, allow_hyphen_values = true)]
    pub delay_as: Option<f64>,
    /// Optical path of arm 1 (round trip).
    #[arg(long)]
    pub arm1_mm: Option<f64>,
    /// Optical path of arm 2 (round trip).
    #[arg(long)]
    pub arm2_mm: Option<f64>,

    /// Single post-selection angle.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_rad: Option<f64>,
    /// Start of the angle range (default −π).
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_min_rad: Option<f64>,
    /// End of the angle range (default π).
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_max_rad: Option<f64>,
    /// Angles in the range, endpoints included (default 361).
    #[arg(long)]
    pub gamma_steps: Option<usize>,

    /// Spectrometer resolution (FWHM) at the carrier wavelength.
    #[arg(long)]
    pub resolution_nm: Option<f64>,
    /// Scans averaged per measured spectrum.
    #[arg(long)]
    pub scans: Option<usize>,
    /// Standard deviation of the post-selection angle per scan.
    #[arg(long)]
    pub jitter_rad: Option<f64>,
    /// Monte-Carlo samples per angle, or bootstrap samples for fit.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Seed of the random streams.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for Monte-Carlo (1 = serial).
    #[arg(long)]
    pub threads: Option<usize>,

    /// Loss budget for the low-loss working point.
    #[arg(long)]
    pub budget_db: Option<f64>,
    /// Losses above this are flagged high-loss.
    #[arg(long)]
    pub threshold_db: Option<f64>,

    /// Sweep data to fit, CSV `gamma_rad,delta_f_thz,loss_db`.
    #[arg(long)]
    pub data_file: Option<PathBuf>,
    /// Lower end of the delay search bracket.
    #[arg(long, allow_hyphen_values = true)]
    pub t_min_fs: Option<f64>,
    /// Upper end of the delay search bracket.
    #[arg(long, allow_hyphen_values = true)]
    pub t_max_fs: Option<f64>,
    /// Also fit a constant offset of the angle axis.
    #[arg(long)]
    pub fit_gamma_offset: bool,
    /// Minimum coarse-scan nodes for the fit.
    #[arg(long)]
    pub fit_grid_nodes: Option<usize>,

    /// Directory for output files (default current directory).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write plot.svg.
    #[arg(long)]
    pub svg: bool,
    /// Also write spectra.csv for sweeps.
    #[arg(long)]
    pub spectra: bool,
}

#[derive(Debug, Parser)]
#[command(
    name = "weakshift",
    version,
    allow_negative_numbers = true,
    about = "Spectral shifts and losses of a weak-value delay interferometer"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// File of `key = value` lines using the flag names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    options: Options,
}

#[derive(Debug, Parser)]
#[command(
    name = "config",
    no_binary_name = true,
    allow_negative_numbers = true,
    disable_help_flag = true,
    disable_version_flag = true
)]
struct FileOptions {
    #[command(flatten)]
    options: Options,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub config_file: Option<PathBuf>,
    pub options: Options,
}

/// Unit-less keys and the flags they should have been.
const AMBIGUOUS: &[(&str, &str)] = &[
    ("delay", "--delay-fs or --delay-as"),
    ("tau", "--tau-fs"),
    ("nu0", "--nu0-thz"),
    ("gamma", "--gamma-rad"),
    ("gamma-min", "--gamma-min-rad"),
    ("gamma-max", "--gamma-max-rad"),
    ("resolution", "--resolution-nm"),
    ("jitter", "--jitter-rad"),
    ("budget", "--budget-db"),
    ("threshold", "--threshold-db"),
    ("t-min", "--t-min-fs"),
    ("t-max", "--t-max-fs"),
    ("arm1", "--arm1-mm"),
    ("arm2", "--arm2-mm"),
    ("grid-half-width", "--grid-half-width-thz"),
];

fn check_ambiguous(key: &str) -> Result<(), CliError> {
    match AMBIGUOUS.iter().find(|(k, _)| *k == key) {
        Some((k, s)) => Err(CliError::AmbiguousUnit {
            key: (*k).to_string(),
            suggestion: (*s).to_string(),
        }),
        None => Ok(()),
    }
}

fn map_clap(e: clap::Error) -> CliError {
    let msg = e.to_string();
    let first = msg
        .lines()
        .next()
        .unwrap_or("")
        .trim_start_matches("error: ")
        .to_string();
    match e.kind() {
        ErrorKind::UnknownArgument => CliError::UnknownFlag(first),
        _ => CliError::Usage(first),
    }
}

/// Flag-style arguments from config-file text.
fn file_arguments(text: &str, origin: &Path) -> Result<Vec<String>, CliError> {
    let mut args = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected `key = value`",
                origin.display(),
                n + 1
            )));
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"');
        check_ambiguous(&key)?;
        if key == "config" || key == "command" {
            return Err(CliError::Usage(format!(
                "{}:{}: `{key}` cannot be set in a config file",
                origin.display(),
                n + 1
            )));
        }
        match (key.as_str(), value) {
            ("fit-gamma-offset" | "svg" | "spectra", "true") => args.push(format!("--{key}")),
            ("fit-gamma-offset" | "svg" | "spectra", "false") => {}
            ("fit-gamma-offset" | "svg" | "spectra", other) => {
                return Err(CliError::Usage(format!(
                    "{key}: expected true or false, got `{other}`"
                )))
            }
            _ => {
                args.push(format!("--{key}"));
                args.push(value.to_string());
            }
        }
    }
    Ok(args)
}

macro_rules! overlay {
    ($cli:expr, $file:expr; $($field:ident),* ; $($flag:ident),*) => {
        Options {
            $($field: $cli.$field.or($file.$field),)*
            $($flag: $cli.$flag || $file.$flag,)*
        }
    };
}

fn merge(cli: Options, file: Options) -> Options {
    overlay!(cli, file;
        tau_fs, nu0_thz, spectrum_file, grid_nodes, grid_half_width_thz,
        delay_fs, delay_as, arm1_mm, arm2_mm,
        gamma_rad, gamma_min_rad, gamma_max_rad, gamma_steps,
        resolution_nm, scans, jitter_rad, samples, seed, threads,
        budget_db, threshold_db,
        data_file, t_min_fs, t_max_fs, fit_grid_nodes, out_dir;
        fit_gamma_offset, svg, spectra)
}

/// Outcome of argument parsing.
#[derive(Debug)]
pub enum Parsed {
    Run(Box<RunConfig>),
    /// Help or version text to print; exit 0.
    Info(String),
}

pub fn parse_config<I, T>(argv: I) -> Result<Parsed, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    for arg in argv.iter().skip(1) {
        if let Some(flag) = arg.to_str().and_then(|a| a.strip_prefix("--")) {
            check_ambiguous(flag.split('=').next().unwrap_or(flag))?;
        }
    }
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            return Ok(Parsed::Info(e.to_string()))
        }
        Err(e) => return Err(map_clap(e)),
    };
    let options = match &cli.config {
        None => cli.options,
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let args = file_arguments(&text, path)?;
            let file = FileOptions::try_parse_from(args).map_err(map_clap)?;
            merge(cli.options, file.options)
        }
    };
    Ok(Parsed::Run(Box::new(RunConfig {
        command: cli.command,
        config_file: cli.config,
        options,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> Result<RunConfig, CliError> {
        let mut argv = vec!["weakshift"];
        argv.extend_from_slice(args);
        match parse_config(argv)? {
            Parsed::Run(c) => Ok(*c),
            Parsed::Info(_) => panic!("unexpected info output"),
        }
    }

    #[test]
    fn sweep_example_parses() {
        let c = run(&[
            "sweep",
            "--tau-fs",
            "320",
            "--nu0-thz",
            "193.44",
            "--delay-fs",
            "53",
            "--gamma-steps",
            "361",
        ])
        .unwrap();
        assert_eq!(c.command, Command::Sweep);
        assert_eq!(c.options.tau_fs, Some(320.0));
        assert_eq!(c.options.nu0_thz, Some(193.44));
        assert_eq!(c.options.delay_fs, Some(53.0));
        assert_eq!(c.options.gamma_steps, Some(361));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn negative_values_parse() {
        let c = run(&["simulate", "--delay-fs", "0", "--gamma-rad", "-1.5707963"]).unwrap();
        assert_eq!(c.options.gamma_rad, Some(-1.5707963));
    }

    #[test]
    fn error_kinds() {
        assert_eq!(run(&["sweep", "--bogus", "1"]).unwrap_err().exit_code(), 3);
        assert_eq!(run(&["sweep", "--delay", "53"]).unwrap_err().exit_code(), 5);
        assert_eq!(run(&["sweep", "--tau=320"]).unwrap_err().exit_code(), 5);
        assert_eq!(
            run(&["sweep", "--tau-fs", "abc"]).unwrap_err().exit_code(),
            2
        );
        assert_eq!(run(&[]).unwrap_err().exit_code(), 2);
        assert_eq!(run(&["explode"]).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn help_is_info() {
        assert!(matches!(
            parse_config(["weakshift", "--help"]).unwrap(),
            Parsed::Info(_)
        ));
    }

    #[test]
    fn file_values_are_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# pulse\ntau_fs = 320\nnu0-thz = 193.44\ndelay-fs = 22\nsvg = true\n",
        )
        .unwrap();
        let c = run(&[
            "sweep",
            "--config",
            path.to_str().unwrap(),
            "--delay-fs",
            "53",
        ])
        .unwrap();
        assert_eq!(c.options.tau_fs, Some(320.0));
        assert_eq!(c.options.delay_fs, Some(53.0));
        assert!(c.options.svg);

        std::fs::write(&path, "delay = 53\n").unwrap();
        assert_eq!(
            run(&["sweep", "--config", path.to_str().unwrap()])
                .unwrap_err()
                .exit_code(),
            5
        );
        std::fs::write(&path, "speed-fs = 53\n").unwrap();
        assert_eq!(
            run(&["sweep", "--config", path.to_str().unwrap()])
                .unwrap_err()
                .exit_code(),
            3
        );
        std::fs::write(&path, "just words\n").unwrap();
        assert_eq!(
            run(&["sweep", "--config", path.to_str().unwrap()])
                .unwrap_err()
                .exit_code(),
            2
        );
        let missing = dir.path().join("missing.conf");
        assert_eq!(
            run(&["sweep", "--config", missing.to_str().unwrap()])
                .unwrap_err()
                .exit_code(),
            6
        );
    }
}
