//! Command-line front end for `dataplan-core`.
//!
//! [`run`] parses arguments, executes one subcommand and writes its output.
//! Output is fully built in memory first, so a failing command leaves
//! standard output and the `--out` file untouched.

pub mod args;
pub mod commands;
pub mod error;
pub mod report;
pub mod svg;

use std::ffi::OsString;
use std::io::{Read, Write};

use clap::error::ErrorKind;
use clap::Parser;

pub use args::Cli;
pub use commands::{run_command, Output};
pub use error::CliError;
pub use report::ReportBundle;

/// Runs the tool and returns its exit code: 0 on success, 1 for invalid
/// input or usage, 2 for an internal invariant violation.
pub fn run<I, T>(
    args: I,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(rendered.as_bytes());
                    0
                }
                _ => {
                    let _ = stderr.write_all(rendered.as_bytes());
                    1
                }
            };
        }
    };
    match run_command(&cli.command, stdin).and_then(|out| deliver(out, stdout, stderr)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", one_line(&e.to_string()));
            e.exit_code()
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn deliver(out: Output, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let write = |path: &std::path::Path, bytes: &[u8]| {
        std::fs::write(path, bytes).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })
    };
    for (path, bytes) in &out.files {
        write(path, bytes)?;
    }
    match &out.out {
        Some(path) => write(path, &out.primary)?,
        None => stdout
            .write_all(&out.primary)
            .and_then(|_| stdout.flush())
            .map_err(|source| CliError::Write {
                path: "<stdout>".into(),
                source,
            })?,
    }
    for w in &out.warnings {
        let _ = writeln!(stderr, "warning: {}", one_line(w));
    }
    Ok(())
}
