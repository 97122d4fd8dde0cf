use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use clap::ValueEnum;
use mbadmm::cases::Case;
use mbadmm::problem::{self, Problem, ValidateOptions, ValidationReport};
use mbadmm::solver::SolverState;

pub const EXIT_USAGE: u8 = 64;

/// Command-line misuse detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {:?}", s))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be finite and positive, got {}", s))
    }
}

pub fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("not a positive integer: {:?}", s)),
    }
}

pub fn case_name(s: &str) -> Result<Case, String> {
    Case::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = Case::ALL.iter().map(|c| c.name()).collect();
        format!("unknown case {:?}; expected one of {}", s, names.join(", "))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Init {
    Zeros,
    Random,
}

impl Init {
    pub fn state(self, p: &Problem, seed: u64) -> SolverState {
        match self {
            Init::Zeros => SolverState::zeros(p),
            Init::Random => SolverState::random(p, seed),
        }
    }
}

pub fn load(path: &Path) -> anyhow::Result<Problem> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    problem::load_problem(&text).with_context(|| format!("loading {}", path.display()))
}

pub fn report(p: &Problem, trust_modulus: bool) -> anyhow::Result<ValidationReport> {
    let opts = ValidateOptions {
        trust_modulus,
        rank_tol: None,
    };
    Ok(problem::validate_with(p, opts)?)
}

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Downstream reader went away (`| head`); not worth reporting.
pub fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<csv::Error>().is_some_and(|ce| {
                matches!(ce.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe)
            })
    })
}

/// Writes `text` to stdout, ignoring a closed pipe.
pub fn emit(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

/// 12 significant digits.
pub fn sig12(v: f64) -> String {
    format!("{:.11e}", v)
}

pub fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{:e}", x)).collect::<Vec<_>>().join(" ")
}
