//! Penalty-parameter grids for sweeps.
//!
//! Accepted forms:
//! - a comma-separated list, `0.1,0.2,0.5`
//! - `lin:LO:HI:N`, N evenly spaced values from LO to HI
//! - `log:LO:HI:N`, N log-spaced values from LO to HI
//!
//! Every value must be finite and positive.

use thiserror::Error;

/// Upper limit on generated grid sizes.
pub const MAX_GRID_LEN: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("empty beta grid")]
    Empty,
    #[error("bad grid value {0:?}")]
    BadValue(String),
    #[error("beta must be finite and positive, got {0}")]
    NotPositive(String),
    #[error("bad grid range {0:?}: {1}")]
    BadRange(String, &'static str),
}

fn positive(tok: &str) -> Result<f64, GridError> {
    let v: f64 = tok.trim().parse().map_err(|_| GridError::BadValue(tok.to_string()))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(GridError::NotPositive(tok.trim().to_string()));
    }
    Ok(v)
}

pub fn parse_beta_grid(spec: &str) -> Result<Vec<f64>, GridError> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(GridError::Empty);
    }
    if let Some(rest) = spec.strip_prefix("lin:").map(|r| (r, false)).or(spec.strip_prefix("log:").map(|r| (r, true))) {
        return parse_range(spec, rest.0, rest.1);
    }
    spec.split(',')
        .map(|tok| if tok.trim().is_empty() { Err(GridError::BadValue(tok.to_string())) } else { positive(tok) })
        .collect()
}

fn parse_range(spec: &str, body: &str, log: bool) -> Result<Vec<f64>, GridError> {
    let parts: Vec<&str> = body.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(GridError::BadRange(spec.to_string(), "expected LO:HI:N"));
    };
    let (lo, hi) = (positive(lo)?, positive(hi)?);
    let n: usize = n.trim().parse().map_err(|_| GridError::BadValue(n.to_string()))?;
    if n == 0 {
        return Err(GridError::Empty);
    }
    if n > MAX_GRID_LEN {
        return Err(GridError::BadRange(spec.to_string(), "too many points"));
    }
    if n == 1 {
        return if lo == hi { Ok(vec![lo]) } else { Err(GridError::BadRange(spec.to_string(), "N = 1 needs LO = HI")) };
    }
    let (a, b) = if log { (lo.ln(), hi.ln()) } else { (lo, hi) };
    let step = (b - a) / (n - 1) as f64;
    let vals: Vec<f64> = (0..n)
        .map(|i| {
            let t = if i == n - 1 { b } else { a + step * i as f64 };
            if log { t.exp() } else { t }
        })
        .collect();
    if let Some(v) = vals.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(GridError::NotPositive(v.to_string()));
    }
    // endpoints are exact
    let mut vals = vals;
    vals[0] = lo;
    vals[n - 1] = hi;
    Ok(vals)
}
