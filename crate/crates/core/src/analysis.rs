//! Penalty-parameter ranges, the coefficient system behind them, the
//! Lyapunov-style potentials, ergodic averages and empirical rate fits.

use std::fmt;

use thiserror::Error;

use crate::linalg::{self, LinalgError, Lu, Matrix, Vector};
use crate::problem::{self, ConstraintSet, ObjectiveTerm, Problem, ProblemError, ValidationReport};
use crate::solver::{self, RunStatus, SolverConfig, SolverError, SolverState};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("out of scope: {0}")]
    OutOfScope(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("KKT system has no unique solution")]
    NoUniqueSolution,
    #[error("reference solution unavailable: {0}")]
    ReferenceUnavailable(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;

// ---------------------------------------------------------------------------
// penalty ranges

/// Which bound produced a [`BetaRange`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeSource {
    /// Global convergence with m − 2 strongly convex blocks.
    Convergence,
    /// O(1/t) ergodic rate.
    Ergodic,
    /// Alternative ergodic bound valid for m ≥ 4.
    ErgodicM4,
    /// Earlier linear-convergence analysis, first scenario.
    PriorLinearScenario1,
    /// Earlier linear-convergence analysis, second scenario.
    PriorLinearScenario2,
}

impl RangeSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            RangeSource::Convergence => "convergence",
            RangeSource::Ergodic => "ergodic",
            RangeSource::ErgodicM4 => "ergodic-m4",
            RangeSource::PriorLinearScenario1 => "prior-linear-scenario-1",
            RangeSource::PriorLinearScenario2 => "prior-linear-scenario-2",
        }
    }
}

impl fmt::Display for RangeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Open interval `(0, upper)`. When the bound needs moduli that are zero,
/// `applicable` is false and `upper` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaRange {
    pub upper: f64,
    pub source: RangeSource,
    pub applicable: bool,
}

impl BetaRange {
    fn not_applicable(source: RangeSource) -> Self {
        Self {
            upper: 0.0,
            source,
            applicable: false,
        }
    }

    pub fn contains(&self, beta: f64) -> bool {
        self.applicable && beta > 0.0 && beta < self.upper
    }

    /// Whether `beta` lies within 1% of the upper end (either side).
    pub fn near_boundary(&self, beta: f64) -> bool {
        self.applicable && (beta - self.upper).abs() <= 0.01 * self.upper
    }
}

fn require_m3(report: &ValidationReport) -> Result<usize> {
    let m = report.num_blocks();
    if m < 3 {
        return Err(AnalysisError::OutOfScope(format!("penalty ranges need m >= 3, got m = {}", m)));
    }
    Ok(m)
}

/// `min_{i∈blocks} μ_i / (den(i)·‖A_iᵀA_i‖)`, or `None` when any modulus in
/// the range is not positive.
fn min_ratio(report: &ValidationReport, blocks: std::ops::RangeInclusive<usize>, den: impl Fn(usize) -> f64) -> Option<f64> {
    let mut best = f64::INFINITY;
    for i in blocks {
        let blk = &report.blocks[i - 1];
        if !(blk.mu > 0.0 && blk.gram_norm > 0.0) {
            return None;
        }
        best = best.min(blk.mu / (den(i) * blk.gram_norm));
    }
    Some(best)
}

fn range_from(source: RangeSource, upper: Option<f64>) -> BetaRange {
    match upper {
        Some(upper) => BetaRange {
            upper,
            source,
            applicable: true,
        },
        None => BetaRange::not_applicable(source),
    }
}

/// Convergence range: `min_{3≤i≤m} μ_i / (max{4m−10, 3m−6.5}·‖A_iᵀA_i‖)`.
pub fn beta_upper_convergence(report: &ValidationReport) -> Result<BetaRange> {
    let m = require_m3(report)? as f64;
    let den = (4.0 * m - 10.0).max(3.0 * m - 6.5);
    Ok(range_from(
        RangeSource::Convergence,
        min_ratio(report, 3..=report.num_blocks(), |_| den),
    ))
}

/// Ergodic-rate range `min_i μ_i / (((13+√33)/4·m − (17+√33)/2)·‖A_iᵀA_i‖)`.
pub fn beta_upper_ergodic_base(report: &ValidationReport) -> Result<BetaRange> {
    let m = require_m3(report)? as f64;
    let s33 = 33f64.sqrt();
    let den = (13.0 + s33) / 4.0 * m - (17.0 + s33) / 2.0;
    Ok(range_from(RangeSource::Ergodic, min_ratio(report, 3..=report.num_blocks(), |_| den)))
}

/// The m ≥ 4 alternative `min_i μ_i / ((4.5m − 11)·‖A_iᵀA_i‖)`.
pub fn beta_upper_ergodic_m4(report: &ValidationReport) -> Result<BetaRange> {
    let m = require_m3(report)?;
    if m < 4 {
        return Err(AnalysisError::OutOfScope("the alternative ergodic bound needs m >= 4".into()));
    }
    let den = 4.5 * m as f64 - 11.0;
    Ok(range_from(RangeSource::ErgodicM4, min_ratio(report, 3..=m, |_| den)))
}

/// Ergodic range; for m ≥ 4 the larger of the two available bounds.
pub fn beta_upper_ergodic(report: &ValidationReport) -> Result<BetaRange> {
    let base = beta_upper_ergodic_base(report)?;
    if report.num_blocks() < 4 {
        return Ok(base);
    }
    let alt = beta_upper_ergodic_m4(report)?;
    Ok(if alt.applicable && alt.upper > base.upper { alt } else { base })
}

/// Bounds of the earlier linear-convergence analysis (scenarios 1 and 2),
/// which need `μ_i > 0` for every `i ≥ 2`.
pub fn beta_upper_prior_linear(report: &ValidationReport, scenario: u8) -> Result<BetaRange> {
    let m = require_m3(report)?;
    let mf = m as f64;
    let (source, factor, last_den) = match scenario {
        1 => (RangeSource::PriorLinearScenario1, 1.0, (mf + 1.0) * (mf - 2.0)),
        2 => (RangeSource::PriorLinearScenario2, 3.0, 3.0 * mf * mf - 3.0 * mf - 2.0),
        other => return Err(AnalysisError::InvalidInput(format!("unknown scenario {}", other))),
    };
    let inner = min_ratio(report, 2..=m - 1, |i| {
        let i = i as f64;
        factor * (2.0 * mf - i) * (i - 1.0) / 4.0
    });
    let last = min_ratio(report, m..=m, |_| last_den / 4.0);
    Ok(range_from(source, inner.zip(last).map(|(a, b)| a.min(b))))
}

/// Every range row reported by the CLI, in a fixed order.
pub fn all_beta_ranges(report: &ValidationReport) -> Result<Vec<BetaRange>> {
    let mut out = vec![beta_upper_convergence(report)?, beta_upper_ergodic_base(report)?];
    if report.num_blocks() >= 4 {
        out.push(beta_upper_ergodic_m4(report)?);
    }
    out.push(beta_upper_prior_linear(report, 1)?);
    out.push(beta_upper_prior_linear(report, 2)?);
    Ok(out)
}

// ---------------------------------------------------------------------------
// coefficient system

/// Free scalars `a, b, δ > 0` of the one-step descent inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProofParameters {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

impl ProofParameters {
    /// `a = b = 1/5`, `δ = (1 − 4a)(m−2)/(m−2+ε′)`: realizes the convergence range.
    pub fn for_convergence(m: usize, eps_prime: f64) -> Self {
        let a = 0.2;
        Self::with_a(a, m, eps_prime)
    }

    /// `a = b = (7−√33)/8`, `δ = ((√33−5)/2)(m−2)/(m−2+ε′)`: realizes the ergodic range.
    pub fn for_ergodic(m: usize, eps_prime: f64) -> Self {
        let a = (7.0 - 33f64.sqrt()) / 8.0;
        Self::with_a(a, m, eps_prime)
    }

    fn with_a(a: f64, m: usize, eps_prime: f64) -> Self {
        let mm2 = m as f64 - 2.0;
        Self {
            a,
            b: a,
            delta: (1.0 - 4.0 * a) * mm2 / (mm2 + eps_prime),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub params: ProofParameters,
    /// `C_2, …, C_m`
    pub c: Vec<f64>,
    /// `ζ_3, …, ζ_m`
    pub zeta: Vec<f64>,
    /// `ζ̃_3, …, ζ̃_m`
    pub zeta_tilde: Vec<f64>,
    /// `τ_3, …, τ_m`
    pub tau: Vec<f64>,
}

impl CoefficientSet {
    pub fn c_positive(&self) -> bool {
        self.c.iter().all(|&v| v > 0.0)
    }

    pub fn zeta_positive(&self) -> bool {
        self.zeta.iter().all(|&v| v > 0.0)
    }

    pub fn zeta_tilde_positive(&self) -> bool {
        self.zeta_tilde.iter().all(|&v| v > 0.0)
    }
}

/// `τ_i = (i−3)/2 + (7+√33)(m−2)/8`
pub fn tau(i: usize, m: usize) -> f64 {
    (i as f64 - 3.0) / 2.0 + (7.0 + 33f64.sqrt()) * (m as f64 - 2.0) / 8.0
}

/// Weight on `‖A_iΔx_i‖²` in the Fejér potential: `(i−3)/2 + 5(m−2)/4`.
pub fn phi_weight(i: usize, m: usize) -> f64 {
    (i as f64 - 3.0) / 2.0 + 5.0 * (m as f64 - 2.0) / 4.0
}

pub fn coefficients(report: &ValidationReport, beta: f64, params: ProofParameters) -> Result<CoefficientSet> {
    let m = require_m3(report)?;
    let ProofParameters { a, b, delta } = params;
    if !(a > 0.0 && b > 0.0 && delta > 0.0) {
        return Err(AnalysisError::InvalidInput("a, b and delta must be positive".into()));
    }
    if !(beta >= 0.0) {
        return Err(AnalysisError::InvalidInput(format!("beta must be nonnegative, got {}", beta)));
    }
    let mf = m as f64;
    let mut c = vec![(0.5 - (a + b) - delta / 2.0) * beta];
    let mut zeta = Vec::with_capacity(m - 2);
    let mut zeta_tilde = Vec::with_capacity(m - 2);
    let mut taus = Vec::with_capacity(m - 2);
    for i in 3..=m {
        let blk = &report.blocks[i - 1];
        let ratio = blk.mu / blk.gram_norm;
        let fi = i as f64;
        c.push(ratio - beta * ((1.0 / (4.0 * a) + 1.0 / (4.0 * b)) * (mf - 2.0) + (3.0 * mf - fi - 7.0) / 2.0));
        let zeta_pen = beta * ((mf - 2.0) / (2.0 * delta) + (fi - 3.0) / 2.0);
        zeta.push(ratio - zeta_pen);
        zeta_tilde.push(ratio / 2.0 - zeta_pen);
        taus.push(tau(i, m));
    }
    Ok(CoefficientSet {
        params,
        c,
        zeta,
        zeta_tilde,
        tau: taus,
    })
}

// ---------------------------------------------------------------------------
// potentials

/// Primal–dual point `(x_1, …, x_m, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: Vec<Vector>,
    pub z: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    DirectKkt,
    LongRun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub point: Point,
    pub provenance: Provenance,
}

fn check_point(p: &Problem, point: &Point) -> problem::Result<()> {
    p.check_point(&point.x)?;
    if point.z.len() != p.num_rows() {
        return Err(ProblemError::Invalid(format!(
            "multiplier has length {}, expected {}",
            point.z.len(),
            p.num_rows()
        )));
    }
    Ok(())
}

/// `‖v − v*‖²_Q` with `v = (x_2, …, x_m, z)` and
/// `Q = blockdiag(βA_2ᵀA_2, …, βA_mᵀA_m, I/β)`.
pub fn q_distance_sq(p: &Problem, x: &[Vector], z: &[f64], point: &Point, beta: f64) -> problem::Result<f64> {
    check_point(p, point)?;
    p.check_point(x)?;
    let mut acc = 0.0;
    for i in 1..p.num_blocks() {
        let d = p.block(i).a.matvec(&linalg::sub_vec(&x[i], &point.x[i]))?;
        acc += beta * linalg::dot(&d, &d);
    }
    let dz = linalg::sub_vec(z, &point.z);
    Ok(acc + linalg::dot(&dz, &dz) / beta)
}

/// `‖v^k − v*‖_Q` for the current iterate of `state`.
pub fn q_distance(p: &Problem, state: &SolverState, point: &Point, beta: f64) -> problem::Result<f64> {
    Ok(q_distance_sq(p, &state.x, &state.z, point, beta)?.sqrt())
}

fn weighted_potential(
    p: &Problem,
    state: &SolverState,
    point: &Point,
    beta: f64,
    weight: impl Fn(usize, usize) -> f64,
) -> problem::Result<f64> {
    let m = p.num_blocks();
    p.check_point(&state.x_prev)?;
    let mut total = 0.5 * q_distance_sq(p, &state.x, &state.z, point, beta)?;
    for i in 3..=m {
        let blk = p.block(i - 1);
        let d = blk.a.matvec(&linalg::sub_vec(&state.x[i - 1], &state.x_prev[i - 1]))?;
        total += beta * weight(i, m) * linalg::dot(&d, &d);
    }
    Ok(total)
}

/// Fejér potential `½‖v^{k+1} − v*‖²_Q + β Σ_{i≥3} [(i−3)/2 + 5(m−2)/4] ‖A_i(x_i^{k+1} − x_i^k)‖²`,
/// evaluated on `(state.x, state.z)` and `state.x_prev`.
pub fn potential_phi(p: &Problem, state: &SolverState, reference: &ReferenceSolution, beta: f64) -> problem::Result<f64> {
    weighted_potential(p, state, &reference.point, beta, phi_weight)
}

/// Same shape as [`potential_phi`] with the ergodic weights `τ_i`, against an
/// arbitrary point.
pub fn potential_theta(p: &Problem, state: &SolverState, point: &Point, beta: f64) -> problem::Result<f64> {
    weighted_potential(p, state, point, beta, tau)
}

// ---------------------------------------------------------------------------
// ergodic averages

/// Running average `x̄_t = (1/t) Σ_{k=1}^t x^{k+1}` of the iterates pushed so far.
#[derive(Debug, Clone)]
pub struct ErgodicAverager {
    t: usize,
    sum_x: Vec<Vector>,
    sum_z: Vector,
}

impl ErgodicAverager {
    pub fn new(p: &Problem) -> Self {
        Self {
            t: 0,
            sum_x: p.block_dims().into_iter().map(|n| vec![0.0; n]).collect(),
            sum_z: vec![0.0; p.num_rows()],
        }
    }

    pub fn push(&mut self, x: &[Vector], z: &[f64]) {
        self.t += 1;
        for (s, xi) in self.sum_x.iter_mut().zip(x) {
            linalg::axpy(1.0, xi, s);
        }
        linalg::axpy(1.0, z, &mut self.sum_z);
    }

    pub fn count(&self) -> usize {
        self.t
    }

    pub fn mean(&self) -> Option<Point> {
        if self.t == 0 {
            return None;
        }
        let inv = 1.0 / self.t as f64;
        Some(Point {
            x: self.sum_x.iter().map(|s| s.iter().map(|v| v * inv).collect()).collect(),
            z: self.sum_z.iter().map(|v| v * inv).collect(),
        })
    }
}

/// Offline average of the first `t` stored block iterates.
pub fn ergodic_average(iterates: &[Vec<Vector>], t: usize) -> Result<Vec<Vector>> {
    if t == 0 || t > iterates.len() {
        return Err(AnalysisError::InvalidInput(format!(
            "cannot average {} of {} iterates",
            t,
            iterates.len()
        )));
    }
    let mut mean: Vec<Vector> = iterates[0].iter().map(|v| vec![0.0; v.len()]).collect();
    for it in &iterates[..t] {
        for (m, xi) in mean.iter_mut().zip(it) {
            linalg::axpy(1.0, xi, m);
        }
    }
    let inv = 1.0 / t as f64;
    mean.iter_mut().for_each(|m| m.iter_mut().for_each(|v| *v *= inv));
    Ok(mean)
}

// ---------------------------------------------------------------------------
// rate fits

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateModel {
    /// `y_t ≈ C·t^p`, reported value `p`.
    Power,
    /// `y_k ≈ C·r^k`, reported value `r`.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub model: RateModel,
    pub value: f64,
    pub r_squared: f64,
}

/// Least-squares fit on log–log (power) or semilog (geometric) axes after
/// dropping the leading 10% of the series. Entry `j` of the series is taken
/// to be at `t = j + 1`.
pub fn fit_rate(series: &[f64], model: RateModel) -> Result<RateFit> {
    if series.len() < 10 {
        return Err(AnalysisError::InvalidInput(format!(
            "need at least 10 points, got {}",
            series.len()
        )));
    }
    if let Some(pos) = series.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(AnalysisError::InvalidInput(format!(
            "series entry {} is not positive ({})",
            pos, series[pos]
        )));
    }
    let skip = series.len() / 10;
    let (xs, ys): (Vec<f64>, Vec<f64>) = series
        .iter()
        .enumerate()
        .skip(skip)
        .map(|(j, &y)| {
            let t = (j + 1) as f64;
            let x = match model {
                RateModel::Power => t.ln(),
                RateModel::Geometric => t,
            };
            (x, y.ln())
        })
        .unzip();
    let (slope, r_squared) = linear_regression(&xs, &ys);
    let value = match model {
        RateModel::Power => slope,
        RateModel::Geometric => slope.exp(),
    };
    Ok(RateFit { model, value, r_squared })
}

fn linear_regression(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

// ---------------------------------------------------------------------------
// optimality

/// Max of the primal residual and the per-block stationarity gaps.
///
/// Smooth unconstrained blocks use `‖∇θ_i(x_i) − A_iᵀz‖`. Blocks with a
/// set or a nonsmooth term use the unit-step fixed-point gap
/// `‖x_i − prox_{θ_i^ns + ι_{X_i}}(x_i − (∇θ_i^s(x_i) − A_iᵀz))‖`.
pub fn kkt_residual(p: &Problem, x: &[Vector], z: &[f64]) -> Result<f64> {
    let mut worst = linalg::norm2(&p.constraint_residual(x)?);
    if z.len() != p.num_rows() {
        return Err(AnalysisError::InvalidInput(format!(
            "multiplier has length {}, expected {}",
            z.len(),
            p.num_rows()
        )));
    }
    for (blk, xi) in p.blocks().iter().zip(x) {
        let mut g = blk.objective.smooth_gradient(xi)?;
        linalg::axpy(-1.0, &blk.a.tr_matvec(z)?, &mut g);
        let smooth_free = matches!(blk.set, ConstraintSet::Free)
            && matches!(blk.objective, ObjectiveTerm::Zero | ObjectiveTerm::Quadratic { .. });
        let gap = if smooth_free {
            linalg::norm2(&g)
        } else {
            let mut y = linalg::sub_vec(xi, &g);
            match &blk.objective {
                ObjectiveTerm::WeightedL1 { weight } => {
                    y.iter_mut().for_each(|v| {
                        *v = v.signum() * (v.abs() - weight).max(0.0);
                    });
                }
                ObjectiveTerm::External(ext) => {
                    y = match &ext.hook {
                        Some(h) => h.prox(&y, 1.0),
                        None => return Err(ProblemError::UnboundHook(ext.name.clone()).into()),
                    };
                }
                _ => {}
            }
            blk.set.project(&mut y);
            linalg::norm2(&linalg::sub_vec(xi, &y))
        };
        worst = worst.max(gap);
    }
    Ok(worst)
}

/// Solution anchor for the potential diagnostics.
///
/// Smooth unconstrained problems solve the assembled KKT system directly;
/// anything else is run to `1e-12` at half the convergence bound and must
/// converge.
pub fn compute_reference(p: &Problem) -> Result<ReferenceSolution> {
    let direct = p.blocks().iter().all(|b| {
        matches!(b.set, ConstraintSet::Free) && matches!(b.objective, ObjectiveTerm::Zero | ObjectiveTerm::Quadratic { .. })
    });
    if direct {
        direct_kkt(p)
    } else {
        long_run_reference(p)
    }
}

/// Assembles `[[P, −Aᵀ], [A, 0]] [x; z] = [−q; b]` and solves it by LU.
pub fn kkt_system(p: &Problem) -> Result<(Matrix, Vector)> {
    let dims = p.block_dims();
    let n: usize = dims.iter().sum();
    let l = p.num_rows();
    let mut k = Matrix::zeros(n + l, n + l);
    let mut rhs = vec![0.0; n + l];
    let mut off = 0;
    for (blk, &ni) in p.blocks().iter().zip(&dims) {
        match &blk.objective {
            ObjectiveTerm::Quadratic { p: pm, q } => {
                k.set_block(off, off, pm);
                for (j, &qj) in q.iter().enumerate() {
                    rhs[off + j] = -qj;
                }
            }
            ObjectiveTerm::Zero => {}
            _ => {
                return Err(AnalysisError::InvalidInput(
                    "KKT assembly needs zero or quadratic objectives".into(),
                ))
            }
        }
        k.set_block(off, n, &blk.a.transpose().scaled(-1.0));
        k.set_block(n, off, &blk.a);
        off += ni;
    }
    rhs[n..].copy_from_slice(p.b());
    Ok((k, rhs))
}

fn direct_kkt(p: &Problem) -> Result<ReferenceSolution> {
    let (k, rhs) = kkt_system(p)?;
    let lu = match Lu::factor(&k) {
        Ok(lu) => lu,
        Err(LinalgError::Singular { .. }) => return Err(AnalysisError::NoUniqueSolution),
        Err(e) => return Err(e.into()),
    };
    let mut sol = lu.solve(&rhs)?;
    // two rounds of iterative refinement
    for _ in 0..2 {
        let mut r = k.matvec(&sol)?;
        linalg::axpy(-1.0, &rhs, &mut r);
        let corr = lu.solve(&r)?;
        linalg::axpy(-1.0, &corr, &mut sol);
    }
    let mut x = Vec::with_capacity(p.num_blocks());
    let mut off = 0;
    for ni in p.block_dims() {
        x.push(sol[off..off + ni].to_vec());
        off += ni;
    }
    let z = sol[off..].to_vec();
    Ok(ReferenceSolution {
        point: Point { x, z },
        provenance: Provenance::DirectKkt,
    })
}

fn long_run_reference(p: &Problem) -> Result<ReferenceSolution> {
    let report = problem::validate(p)?;
    let range = beta_upper_convergence(&report)?;
    if !range.applicable {
        return Err(AnalysisError::ReferenceUnavailable(
            "no penalty range is available for a long run".into(),
        ));
    }
    let mut cfg = SolverConfig::new(0.5 * range.upper).with_tol(1e-12).with_max_iters(1_000_000);
    cfg.record_trace = false;
    cfg.inner.enabled = true;
    let out = solver::run(p, &cfg, SolverState::zeros(p))?;
    if out.status != RunStatus::Converged {
        return Err(AnalysisError::ReferenceUnavailable(format!(
            "long run ended with status {}",
            out.status.as_str()
        )));
    }
    Ok(ReferenceSolution {
        point: Point {
            x: out.state.x,
            z: out.state.z,
        },
        provenance: Provenance::LongRun,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::problem::Block;
    use approx::assert_relative_eq;

    fn profile(m: usize, mu: f64) -> ValidationReport {
        ValidationReport::from_profile(&vec![mu; m], &vec![1.0; m])
    }

    #[test]
    fn convergence_range_m3_is_two_fifths() {
        let r = beta_upper_convergence(&profile(3, 1.0)).unwrap();
        assert!(r.applicable);
        assert_eq!(r.upper, 0.4);
    }

    #[test]
    fn convergence_range_m4() {
        let r = beta_upper_convergence(&profile(4, 6.0)).unwrap();
        assert_relative_eq!(r.upper, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn zero_modulus_is_not_applicable() {
        let rep = ValidationReport::from_profile(&[1.0, 1.0, 0.0, 1.0], &[1.0; 4]);
        assert!(!beta_upper_convergence(&rep).unwrap().applicable);
        assert!(!beta_upper_ergodic(&rep).unwrap().applicable);
        assert_eq!(beta_upper_convergence(&rep).unwrap().upper, 0.0);
    }

    #[test]
    fn m_below_three_is_out_of_scope() {
        assert!(matches!(
            beta_upper_convergence(&profile(2, 1.0)),
            Err(AnalysisError::OutOfScope(_))
        ));
    }

    #[test]
    fn ergodic_range_m3() {
        let r = beta_upper_ergodic(&profile(3, 1.0)).unwrap();
        assert_relative_eq!(r.upper, (33f64.sqrt() - 5.0) / 2.0, max_relative = 1e-12);
        assert_eq!(r.source, RangeSource::Ergodic);
    }

    #[test]
    fn ergodic_range_m4_takes_larger_bound() {
        let s33 = 33f64.sqrt();
        let base = 1.0 / ((13.0 + s33) - (17.0 + s33) / 2.0);
        let alt = 1.0 / 7.0;
        let rep = profile(4, 1.0);
        assert_relative_eq!(beta_upper_ergodic_base(&rep).unwrap().upper, base, max_relative = 1e-14);
        let best = beta_upper_ergodic(&rep).unwrap();
        assert_relative_eq!(best.upper, base.max(alt), max_relative = 1e-14);
        assert_eq!(best.source, RangeSource::ErgodicM4);
    }

    #[test]
    fn prior_linear_ranges_m15() {
        let mu = 0.37;
        let rep = profile(15, mu);
        assert_relative_eq!(beta_upper_prior_linear(&rep, 1).unwrap().upper, mu / 52.0, max_relative = 1e-14);
        assert_relative_eq!(beta_upper_prior_linear(&rep, 2).unwrap().upper, mu / 157.0, max_relative = 1e-14);
        assert_relative_eq!(beta_upper_convergence(&rep).unwrap().upper, mu / 50.0, max_relative = 1e-14);
        let needs_block2 = ValidationReport::from_profile(&[0.0, 0.0, 1.0], &[1.0; 3]);
        assert!(!beta_upper_prior_linear(&needs_block2, 1).unwrap().applicable);
        assert!(beta_upper_prior_linear(&rep, 3).is_err());
    }

    #[test]
    fn tau_m3() {
        assert_relative_eq!(tau(3, 3), (7.0 + 33f64.sqrt()) / 8.0);
    }

    #[test]
    fn coefficients_at_zero_beta() {
        let rep = ValidationReport::from_profile(&[0.0, 0.0, 2.0, 3.0], &[1.0, 1.0, 4.0, 2.0]);
        let cs = coefficients(&rep, 0.0, ProofParameters::for_convergence(4, 1e-6)).unwrap();
        assert_eq!(cs.c[0], 0.0);
        assert_eq!(cs.c[1], 0.5);
        assert_eq!(cs.c[2], 1.5);
    }

    #[test]
    fn coefficients_positive_inside_range() {
        for m in 3..=8 {
            let rep = profile(m, 1.3);
            let upper = beta_upper_convergence(&rep).unwrap().upper;
            let cs = coefficients(&rep, 0.999 * upper, ProofParameters::for_convergence(m, 1e-9)).unwrap();
            assert!(cs.c_positive(), "m = {}: {:?}", m, cs.c);
            assert!(cs.zeta_positive(), "m = {}: {:?}", m, cs.zeta);
            let upper_e = beta_upper_ergodic_base(&rep).unwrap().upper;
            let ce = coefficients(&rep, 0.999 * upper_e, ProofParameters::for_ergodic(m, 1e-9)).unwrap();
            assert!(ce.c_positive() && ce.zeta_tilde_positive(), "m = {}: {:?}", m, ce);
        }
    }

    #[test]
    fn fit_exact_series() {
        let power: Vec<f64> = (1..=100).map(|t| 1.0 / t as f64).collect();
        let f = fit_rate(&power, RateModel::Power).unwrap();
        assert_relative_eq!(f.value, -1.0, epsilon = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);
        let geo: Vec<f64> = (1..=100).map(|k| 0.9f64.powi(k)).collect();
        let f = fit_rate(&geo, RateModel::Geometric).unwrap();
        assert_relative_eq!(f.value, 0.9, epsilon = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);
        assert!(fit_rate(&[1.0; 5], RateModel::Power).is_err());
        let mut bad = power.clone();
        bad[40] = 0.0;
        assert!(fit_rate(&bad, RateModel::Power).is_err());
    }

    #[test]
    fn averages() {
        let its = vec![vec![vec![0.0]], vec![vec![2.0]]];
        assert_eq!(ergodic_average(&its, 2).unwrap(), vec![vec![1.0]]);
        let constant = vec![vec![vec![3.5, -1.0]]; 7];
        assert_eq!(ergodic_average(&constant, 7).unwrap(), vec![vec![3.5, -1.0]]);
        assert!(ergodic_average(&its, 0).is_err());
    }

    fn symmetric_three() -> Problem {
        let blocks = (0..3)
            .map(|_| Block::new(Matrix::identity(1), ObjectiveTerm::scaled_norm_sq(1.0, 1), ConstraintSet::Free))
            .collect();
        Problem::new(blocks, vec![3.0]).unwrap()
    }

    #[test]
    fn reference_of_symmetric_instance() {
        let p = symmetric_three();
        let r = compute_reference(&p).unwrap();
        assert_eq!(r.provenance, Provenance::DirectKkt);
        for xi in &r.point.x {
            assert_relative_eq!(xi[0], 1.0, epsilon = 1e-14);
        }
        assert_relative_eq!(r.point.z[0], 1.0, epsilon = 1e-14);
        assert!(kkt_residual(&p, &r.point.x, &r.point.z).unwrap() < 1e-12);
    }

    #[test]
    fn kkt_residual_scales_with_perturbation() {
        let p = symmetric_three();
        let eps = 1e-4;
        let x = vec![vec![1.0 + eps], vec![1.0], vec![1.0]];
        let r = kkt_residual(&p, &x, &[1.0]).unwrap();
        assert_relative_eq!(r, eps, max_relative = 1e-8);
    }

    #[test]
    fn potentials_vanish_at_reference() {
        let p = symmetric_three();
        let r = compute_reference(&p).unwrap();
        let s = SolverState::from_point(r.point.x.clone(), r.point.z.clone());
        assert_eq!(potential_phi(&p, &s, &r, 0.3).unwrap(), 0.0);
        assert_eq!(potential_theta(&p, &s, &r.point, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn long_run_reference_for_constrained_problem() {
        // min ½‖x3‖² s.t. x1 + x2 + x3 = 1 with x1 ≥ 0 and x2 in [−1, 1].
        let blocks = vec![
            Block::new(Matrix::identity(1), ObjectiveTerm::scaled_norm_sq(1.0, 1), ConstraintSet::Nonnegative),
            Block::new(
                Matrix::identity(1),
                ObjectiveTerm::scaled_norm_sq(1.0, 1),
                ConstraintSet::Box { lo: vec![-1.0], hi: vec![0.1] },
            ),
            Block::new(Matrix::identity(1), ObjectiveTerm::scaled_norm_sq(1.0, 1), ConstraintSet::Free),
        ];
        let p = Problem::new(blocks, vec![1.5]).unwrap();
        let r = compute_reference(&p).unwrap();
        assert_eq!(r.provenance, Provenance::LongRun);
        // x2 hits its upper bound 0.1; the rest split 1.4 evenly.
        assert_relative_eq!(r.point.x[1][0], 0.1, epsilon = 1e-9);
        assert_relative_eq!(r.point.x[0][0], 0.7, epsilon = 1e-9);
        assert_relative_eq!(r.point.x[2][0], 0.7, epsilon = 1e-9);
        assert!(kkt_residual(&p, &r.point.x, &r.point.z).unwrap() < 1e-9);
    }
}
