//! Per-iteration trace CSV.

use std::io::Write;

use crate::solver::TraceRow;

pub const TRACE_HEADER: [&str; 7] = [
    "k",
    "primal_res",
    "dual_res_max",
    "objective",
    "phi",
    "theta_potential",
    "dist_to_ref",
];

/// 17 significant digits; round-trips every finite `f64`.
pub fn format_float(v: f64) -> String {
    format!("{:.16e}", v)
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            format_float(r.primal_residual),
            format_float(r.dual_residual_max()),
            format_float(r.objective),
            opt(r.phi),
            opt(r.theta_potential),
            opt(r.distance_to_ref),
        ])?;
    }
    w.flush()?;
    Ok(())
}
