//! File formats, command-line driver and parallel Monte-Carlo on top of
//! [`weakshift_core`].

pub mod config;
pub mod error;
pub mod io;
pub mod parallel;
pub mod run;
pub mod svg;

pub use config::{parse_config, Command, Options, Parsed, RunConfig};
pub use error::CliError;
pub use run::{run, RunReport};

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match parse_config(argv) {
        Ok(Parsed::Run(c)) => *c,
        Ok(Parsed::Info(text)) => {
            print!("{text}");
            return 0;
        }
        Err(e) => {
            eprintln!("weakshift: {e}");
            return e.exit_code();
        }
    };
    match run(config) {
        Ok(done) => {
            for path in &done.written {
                println!("{}", path.display());
            }
            for w in &done.report.warnings {
                eprintln!("warning: {w}");
            }
            0
        }
        Err(e) => {
            eprintln!("weakshift: {e}");
            e.exit_code()
        }
    }
}
