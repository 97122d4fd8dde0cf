use std::fmt::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, ValueEnum};
use mbadmm::analysis;
use mbadmm::problem::ValidationReport;
use mbadmm::solver::{self, RunStatus, SolverConfig};
use mbadmm::trace;

use crate::util::{self, Init};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReferenceMode {
    /// Compute a solution anchor when a trace is written.
    Auto,
    None,
}

#[derive(Args)]
pub struct SolveArgs {
    /// Problem file (JSON).
    pub file: PathBuf,
    /// Penalty parameter.
    #[arg(long, allow_negative_numbers = true, value_parser = util::positive_f64)]
    pub beta: f64,
    #[arg(long, default_value_t = 100_000, value_parser = util::positive_usize)]
    pub max_iters: usize,
    /// Relative stopping tolerance.
    #[arg(long, default_value_t = 1e-8, allow_negative_numbers = true, value_parser = util::positive_f64)]
    pub tol: f64,
    /// Write the per-iteration trace CSV here.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Seed for `--init random`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Init::Zeros)]
    pub init: Init,
    /// Anchor for the potential and distance columns of the trace.
    #[arg(long, value_enum, default_value_t = ReferenceMode::Auto)]
    pub reference: ReferenceMode,
    /// Solve subproblems without a closed form by proximal gradient.
    #[arg(long)]
    pub inner: bool,
    /// Accept strong-convexity moduli declared on external terms.
    #[arg(long)]
    pub trust_modulus: bool,
}

pub fn exit_code(status: RunStatus) -> ExitCode {
    ExitCode::from(match status {
        RunStatus::Converged => 0,
        RunStatus::MaxIters => 2,
        RunStatus::Diverged => 3,
    })
}

fn warn_outside_range(report: &ValidationReport, beta: f64) {
    if report.num_blocks() < 3 {
        return;
    }
    let Ok(range) = analysis::beta_upper_convergence(report) else { return };
    if !range.applicable {
        eprintln!("note: no guaranteed convergence range; blocks 3..m are not all strongly convex");
    } else if !range.contains(beta) {
        eprintln!(
            "warning: beta = {} lies outside the guaranteed convergence range (0, {})",
            beta,
            util::sig12(range.upper)
        );
    } else if range.near_boundary(beta) {
        eprintln!("note: beta = {} is within 1% of the convergence bound {}", beta, util::sig12(range.upper));
    }
}

pub fn run(args: &SolveArgs) -> anyhow::Result<ExitCode> {
    let p = util::load(&args.file)?;
    let report = util::report(&p, args.trust_modulus)?;
    warn_outside_range(&report, args.beta);

    let mut cfg = SolverConfig::new(args.beta).with_tol(args.tol).with_max_iters(args.max_iters);
    cfg.inner.enabled = args.inner;
    cfg.record_trace = args.trace_out.is_some();
    if cfg.record_trace && args.reference == ReferenceMode::Auto {
        match analysis::compute_reference(&p) {
            Ok(r) => cfg.reference = Some(r),
            Err(e) => eprintln!("note: no reference solution ({}); potential columns left empty", e),
        }
    }
    let out = solver::run(&p, &cfg, args.init.state(&p, args.seed))?;
    if let Some(path) = &args.trace_out {
        trace::write_trace(util::create(path)?, &out.trace).with_context(|| format!("writing {}", path.display()))?;
    }

    let res = solver::residuals(&p, &out.state, args.beta)?;
    let mut w = String::new();
    writeln!(w, "status: {}", out.status.as_str())?;
    writeln!(w, "iterations: {}", out.state.k)?;
    writeln!(w, "primal_residual: {:e}", res.primal)?;
    writeln!(w, "dual_residual_max: {:e}", res.dual_max())?;
    writeln!(w, "objective: {:e}", p.objective_value(&out.state.x)?)?;
    if let Ok(kkt) = analysis::kkt_residual(&p, &out.state.x, &out.state.z) {
        writeln!(w, "kkt_residual: {:e}", kkt)?;
    }
    for (i, xi) in out.state.x.iter().enumerate() {
        writeln!(w, "x{}: {}", i + 1, util::join(xi))?;
    }
    writeln!(w, "z: {}", util::join(&out.state.z))?;
    util::emit(&w)?;
    Ok(exit_code(out.status))
}
