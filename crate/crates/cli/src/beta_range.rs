use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use mbadmm::analysis;

use crate::util;

#[derive(Args)]
pub struct BetaRangeArgs {
    /// Problem file (JSON).
    pub file: PathBuf,
    /// Report where this penalty value sits relative to each bound.
    #[arg(long, allow_negative_numbers = true, value_parser = util::positive_f64)]
    pub beta: Option<f64>,
    /// Accept strong-convexity moduli declared on external terms.
    #[arg(long)]
    pub trust_modulus: bool,
}

#[derive(Args)]
pub struct ValidateArgs {
    /// Problem file (JSON).
    pub file: PathBuf,
    #[arg(long)]
    pub trust_modulus: bool,
}

/// CSV `source,upper,applicable`; `upper` is empty for rows that need a
/// modulus the problem lacks.
pub fn run(args: &BetaRangeArgs) -> anyhow::Result<ExitCode> {
    let p = util::load(&args.file)?;
    let report = util::report(&p, args.trust_modulus)?;
    let ranges = analysis::all_beta_ranges(&report)?;

    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    w.write_record(["source", "upper", "applicable"])?;
    for r in &ranges {
        let upper = if r.applicable { util::sig12(r.upper) } else { String::new() };
        w.write_record([r.source.as_str(), &upper, if r.applicable { "true" } else { "false" }])?;
    }
    w.flush()?;

    if let Some(beta) = args.beta {
        for r in ranges.iter().filter(|r| r.applicable) {
            let side = if r.contains(beta) { "inside" } else { "outside" };
            eprintln!("note: beta = {} is {} the {} range", beta, side, r.source);
            if r.near_boundary(beta) {
                eprintln!("note: beta = {} is within 1% of the {} bound {}", beta, r.source, util::sig12(r.upper));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn run_validate(args: &ValidateArgs) -> anyhow::Result<ExitCode> {
    let p = util::load(&args.file)?;
    let report = util::report(&p, args.trust_modulus)?;
    let mut w = std::io::stdout().lock();
    writeln!(w, "blocks: {}", p.num_blocks())?;
    writeln!(w, "rows: {}", p.num_rows())?;
    for (i, (blk, r)) in p.blocks().iter().zip(&report.blocks).enumerate() {
        writeln!(
            w,
            "block {}: dim {}, mu {:e}, gram_norm {:e}, rank {}{}",
            i + 1,
            blk.dim(),
            r.mu,
            r.gram_norm,
            r.column_rank,
            if r.full_column_rank { " (full)" } else { " (deficient)" }
        )?;
    }
    writeln!(w, "strongly_convex_blocks: {}", report.strongly_convex_count)?;
    writeln!(w, "structural_conditions: {}", report.structural)?;
    Ok(ExitCode::SUCCESS)
}
