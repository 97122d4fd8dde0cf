use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Args;
use mbadmm::analysis::{self, RateModel};
use mbadmm::grid;
use mbadmm::problem::Problem;
use mbadmm::solver::{self, RunResult, SolverConfig};
use mbadmm::trace::format_float;
use rayon::prelude::*;

use crate::util::{self, usage, Init};

/// Caps the sweep worker pool.
pub const THREADS_ENV: &str = "MBADMM_THREADS";

#[derive(Args)]
pub struct SweepArgs {
    /// Problem file (JSON).
    pub file: PathBuf,
    /// `b1,b2,…`, `lin:LO:HI:N` or `log:LO:HI:N`.
    #[arg(long, allow_hyphen_values = true)]
    pub beta_grid: String,
    /// Summary CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000, value_parser = util::positive_usize)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8, allow_negative_numbers = true, value_parser = util::positive_f64)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Init::Zeros)]
    pub init: Init,
    #[arg(long)]
    pub inner: bool,
}

fn thread_count() -> anyhow::Result<usize> {
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let cap = util::positive_usize(v.trim()).map_err(|e| usage(format!("{}: {}", THREADS_ENV, e)))?;
            Ok(cap.min(avail.max(1)))
        }
        Err(std::env::VarError::NotPresent) => Ok(avail),
        Err(e) => Err(usage(format!("{}: {}", THREADS_ENV, e))),
    }
}

/// Power-law exponent of the primal residual series.
fn fit_exponent(out: &RunResult) -> Option<f64> {
    let series: Vec<f64> = out.trace.iter().map(|r| r.primal_residual).collect();
    analysis::fit_rate(&series, RateModel::Power).ok().map(|f| f.value)
}

fn run_one(p: &Problem, beta: f64, args: &SweepArgs) -> Result<RunResult, solver::SolverError> {
    let mut cfg = SolverConfig::new(beta).with_tol(args.tol).with_max_iters(args.max_iters);
    cfg.inner.enabled = args.inner;
    solver::run(p, &cfg, args.init.state(p, args.seed))
}

/// CSV `beta,status,iters,final_primal,fit_exponent`, rows in grid order.
/// Failed runs get status `error` and empty fields. Exits 0 when at least one
/// run completes.
pub fn run(args: &SweepArgs) -> anyhow::Result<ExitCode> {
    let betas = grid::parse_beta_grid(&args.beta_grid).map_err(|e| usage(format!("--beta-grid: {}", e)))?;
    let threads = thread_count()?;
    let p = util::load(&args.file)?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let results: Vec<_> = pool.install(|| betas.par_iter().map(|&b| run_one(&p, b, args)).collect());

    let sink: Box<dyn std::io::Write> = match &args.out {
        Some(path) => Box::new(util::create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["beta", "status", "iters", "final_primal", "fit_exponent"])?;
    let mut any_ok = false;
    for (beta, res) in betas.iter().zip(&results) {
        let beta_s = beta.to_string();
        match res {
            Ok(out) => {
                any_ok = true;
                let last = solver::residuals(&p, &out.state, *beta)
                    .map(|r| format_float(r.primal))
                    .unwrap_or_default();
                let fit = fit_exponent(out).map(format_float).unwrap_or_default();
                w.write_record([beta_s.as_str(), out.status.as_str(), &out.state.k.to_string(), &last, &fit])?;
            }
            Err(e) => {
                eprintln!("error: beta = {}: {}", beta, e);
                w.write_record([beta_s.as_str(), "error", "", "", ""])?;
            }
        }
    }
    w.flush().context("writing sweep summary")?;
    Ok(if any_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
