//! Command-line front end: system files, run configuration, analyses and
//! report rendering.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod system;

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use clap::Parser;

pub use commands::{run, Outcome};
pub use config::{Cli, Command, RunConfig};
pub use error::CliError;
pub use report::{Format, Report};
pub use system::{parse_system, serialize_system, SystemSpec};

/// Write `text` to `path` through a sibling temporary file and a rename.
fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Io(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, text).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

fn execute(cli: &Cli) -> Result<(String, i32, Vec<String>), CliError> {
    let cfg = RunConfig::from_options(&cli.options)?;
    let path = cli
        .options
        .system
        .as_ref()
        .ok_or_else(|| CliError::Config("--system: required".into()))?;
    let parsed = system::parse_system_file(path)?;
    let go = || run(cli.command, &parsed.spec, &cfg);
    let outcome = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| CliError::Config(format!("--workers: {e}")))?
            .install(go)?,
        None => go()?,
    };
    let mut report = outcome.report;
    let mut warnings = parsed.warnings;
    warnings.append(&mut report.warnings);
    report.warnings = warnings.clone();
    let text = report.render(cfg.format);
    match &cli.options.output {
        Some(p) => write_atomic(p, &text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))?;
        }
    }
    Ok((text, outcome.exit_code, warnings))
}

/// Parse `args`, run, print, and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                error::EXIT_INPUT
            } else {
                error::EXIT_OK
            };
        }
    };
    match execute(&cli) {
        Ok((_, code, warnings)) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            code
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}
