//! Command-line surface: `validate`, `generate`, `diagnose` and `report`.
//!
//! Each command writes exactly one JSON document to stdout; logging goes to
//! stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::pipeline::{
    diagnose, generate_with_inputs, validate_inputs, write_report, GenerationConfig, Inputs, PipelineError,
    DIAGNOSTICS_FILE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_GENERATION: i32 = 2;
pub const EXIT_FLAGGED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "synpop", version, about = "Synthetic population and ecosystem generator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Generation config (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the number of worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Override the output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Abort on the first failing region; flagged diagnostics exit with 3.
    #[arg(long, global = true)]
    pub strict: bool,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check every input and print a rule-by-rule report.
    Validate,
    /// Generate all regions.
    Generate,
    /// Compare generated outputs with the region marginals.
    Diagnose,
    /// Diagnose, then render the markdown summary and SVG maps.
    Report,
}

fn emit(out: &mut dyn Write, doc: &serde_json::Value) {
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(doc).expect("json serializes"));
}

fn failure(out: &mut dyn Write, code: i32, message: String) -> i32 {
    log::error!("{message}");
    emit(out, &json!({ "ok": false, "error": message }));
    code
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            if e.use_stderr() {
                let _ = e.print();
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    execute(&cli, out)
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> i32 {
    let Some(path) = &cli.config else {
        eprintln!("error: --config <PATH> is required");
        return EXIT_USAGE;
    };
    if !path.is_file() {
        eprintln!("error: config file not found: {}", path.display());
        return EXIT_USAGE;
    }
    let mut cfg = match GenerationConfig::load(path) {
        Ok(c) => c,
        Err(e) => return failure(out, EXIT_VALIDATION, e.to_string()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    if let Some(dir) = &cli.out {
        cfg.output_dir = dir.clone();
    }
    cfg.strict |= cli.strict;

    if cli.command == Command::Validate {
        let report = validate_inputs(&cfg);
        emit(out, &serde_json::to_value(&report).expect("report serializes"));
        return if report.ok { EXIT_OK } else { EXIT_VALIDATION };
    }

    let inputs = match Inputs::load(&cfg) {
        Ok(i) => i,
        Err(e) => return failure(out, EXIT_VALIDATION, e.to_string()),
    };
    match cli.command {
        Command::Validate => unreachable!(),
        Command::Generate => match generate_with_inputs(&inputs, &cfg) {
            Ok(summary) => {
                let mut doc = serde_json::to_value(&summary).expect("summary serializes");
                doc["ok"] = json!(summary.failed == 0);
                emit(out, &doc);
                EXIT_OK
            }
            Err(e @ (PipelineError::Config(_) | PipelineError::Ingest(_))) => {
                failure(out, EXIT_VALIDATION, e.to_string())
            }
            Err(e) => failure(out, EXIT_GENERATION, e.to_string()),
        },
        Command::Diagnose | Command::Report => {
            let (report, obs) = match diagnose(&inputs, &cfg.output_dir) {
                Ok(r) => r,
                Err(e) => return failure(out, EXIT_GENERATION, e.to_string()),
            };
            let mut files = vec![DIAGNOSTICS_FILE.to_string()];
            if cli.command == Command::Report {
                match write_report(&report, &obs, &cfg.output_dir) {
                    Ok(written) => files.extend(written),
                    Err(e) => return failure(out, EXIT_GENERATION, e.to_string()),
                }
            }
            let flagged = report.flagged_regions.len();
            emit(
                out,
                &json!({
                    "ok": flagged == 0,
                    "output_dir": cfg.output_dir,
                    "regions": report.regions.len(),
                    "tests": report.total_tests,
                    "rejected_tests": report.rejected_tests,
                    "flagged_region_count": flagged,
                    "flagged_regions": report.flagged_regions,
                    "files": files,
                }),
            );
            if cfg.strict && flagged > 0 {
                EXIT_FLAGGED
            } else {
                EXIT_OK
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_command_is_usage_error() {
        let mut out = Vec::new();
        assert_eq!(run(["synpop", "explode"], &mut out), EXIT_USAGE);
        assert_eq!(run(["synpop", "generate", "--colour"], &mut out), EXIT_USAGE);
        assert!(out.is_empty());
    }

    #[test]
    fn missing_config_is_usage_error() {
        let mut out = Vec::new();
        assert_eq!(run(["synpop", "validate", "--config", "/no/such/config.json"], &mut out), EXIT_USAGE);
        assert_eq!(run(["synpop", "validate"], &mut out), EXIT_USAGE);
    }

    #[test]
    fn help_goes_to_stdout() {
        let mut out = Vec::new();
        assert_eq!(run(["synpop", "--help"], &mut out), EXIT_OK);
        assert!(String::from_utf8(out).unwrap().contains("generate"));
    }

    #[test]
    fn malformed_config_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, "{\"counts\": 3}").unwrap();
        let mut out = Vec::new();
        let code = run(["synpop".into(), "validate".into(), "--config".into(), path.into_os_string()], &mut out);
        assert_eq!(code, EXIT_VALIDATION);
        let doc: serde_json::Value = serde_json::from_slice(&out).unwrap();
        assert_eq!(doc["ok"], false);
    }
}
