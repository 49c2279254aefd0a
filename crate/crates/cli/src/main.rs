//! `lsk`: hyperbolic-geometry analyses and toy segmentation heads from the
//! command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

pub(crate) fn worker_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Applies `LSK_THREADS` to the global pool. Returns a usage message when
/// the value is not a positive integer.
fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("LSK_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| format!("LSK_THREADS must be a positive integer, got '{v}'"))?;
    #[cfg(feature = "parallel")]
    {
        // a second initialisation (tests, replay) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let _ = n;
    Ok(())
}

/// Exit status for an error: 2 usage, 3 IO or parse, 1 anything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    use lsk_core::Error as E;
    if let Some(err) = e.downcast_ref::<E>() {
        return match err {
            E::Usage(_) | E::DimensionMismatch { .. } | E::InvalidCurvature(_) | E::CurvatureMismatch { .. } => 2,
            E::Io(_) | E::Parse { .. } | E::Json(_) => 3,
            _ => 1,
        };
    }
    if e.downcast_ref::<commands::UsageError>().is_some() {
        return 2;
    }
    if e.downcast_ref::<std::io::Error>().is_some() || e.downcast_ref::<serde_json::Error>().is_some() {
        return 3;
    }
    1
}

/// Parses and runs one invocation; `argv` excludes the program name.
pub(crate) fn run(argv: Vec<String>) -> ExitCode {
    let cli = match Cli::try_parse_from(std::iter::once("lsk".to_string()).chain(argv.iter().cloned())) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Deltahyp(a) => commands::deltahyp(&argv, a),
        Command::Gradcheck(a) => commands::gradcheck(&argv, a),
        Command::Gradfield(a) => commands::gradfield(&argv, a),
        Command::Train(a) => commands::train(&argv, a, false),
        Command::EuclidBaseline(a) => commands::train(&argv, a, true),
        Command::Infer(a) => commands::infer(&argv, a),
        Command::Uncertainty(a) => commands::uncertainty(&argv, a),
        Command::Losscape(a) => commands::losscape(&argv, a),
        Command::Zeroshot(a) => commands::zeroshot(&argv, a),
        Command::Replay(a) => commands::replay(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn main() -> ExitCode {
    run(std::env::args().skip(1).collect())
}
