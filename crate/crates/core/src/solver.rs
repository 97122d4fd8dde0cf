//! Direct m-block ADMM: one Gauss–Seidel sweep over the blocks in order
//! 1..m, each minimizing the augmented Lagrangian in its own variable, then
//! the multiplier update `z ← z − β(Σ A_i x_i − b)`.

use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;
use thiserror::Error;

use crate::analysis::{self, ReferenceSolution};
use crate::linalg::{self, Cholesky, LinalgError, Matrix, Vector};
use crate::problem::{ConstraintSet, ObjectiveTerm, Problem, ProblemError};

/// Tolerance for recognizing `A_iᵀA_i = c·I`.
pub const SCALED_IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("block {block}: subproblem has no closed form ({reason}); enable the inner solver to approximate it")]
    UnsupportedSubproblem { block: usize, reason: String },
    #[error("block {block}: inner proximal-gradient loop did not reach {tol:e} within {iters} iterations")]
    InnerFailure { block: usize, iters: usize, tol: f64 },
    #[error("block {block}: {source}")]
    Subproblem { block: usize, source: LinalgError },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, SolverError>;

/// Settings of the opt-in inexact subproblem solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerConfig {
    pub enabled: bool,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            max_iters: 10_000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Penalty parameter β.
    pub beta: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub inner: InnerConfig,
    pub record_trace: bool,
    /// Anchor for the potential and distance diagnostics.
    pub reference: Option<ReferenceSolution>,
    /// Iterate norm beyond which a run is declared diverged.
    pub divergence_threshold: f64,
}

impl SolverConfig {
    pub fn new(beta: f64) -> Self {
        Self {
            beta,
            max_iters: 100_000,
            tol_primal: 1e-8,
            tol_dual: 1e-8,
            inner: InnerConfig::default(),
            record_trace: true,
            reference: None,
            divergence_threshold: 1e12,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol_primal = tol;
        self.tol_dual = tol;
        self
    }

    pub fn with_max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn with_reference(mut self, reference: ReferenceSolution) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(SolverError::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return Err(SolverError::Config("tolerances must be positive".into()));
        }
        if self.inner.enabled && !(self.inner.tol > 0.0 && self.inner.max_iters > 0) {
            return Err(SolverError::Config("inner solver needs a positive tolerance and budget".into()));
        }
        Ok(())
    }
}

/// Current and previous iterate. `k` counts completed sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vec<Vector>,
    pub x_prev: Vec<Vector>,
    pub z: Vector,
    pub z_prev: Vector,
    pub k: usize,
}

impl SolverState {
    pub fn zeros(p: &Problem) -> Self {
        let x: Vec<Vector> = p.block_dims().into_iter().map(|n| vec![0.0; n]).collect();
        let z = vec![0.0; p.num_rows()];
        Self::from_point(x, z)
    }

    /// Start at `(x, z)` with the previous iterate equal to the current one.
    pub fn from_point(x: Vec<Vector>, z: Vector) -> Self {
        Self {
            x_prev: x.clone(),
            z_prev: z.clone(),
            x,
            z,
            k: 0,
        }
    }

    /// Entries drawn uniformly from `[-1, 1]` with a fixed seed.
    pub fn random(p: &Problem, seed: u64) -> Self {
        let mut rng = StdRng::seed_from_u64(seed);
        let x: Vec<Vector> = p
            .block_dims()
            .into_iter()
            .map(|n| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        let z = (0..p.num_rows()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        Self::from_point(x, z)
    }

    /// Euclidean norm of the stacked `(x_1, …, x_m, z)`.
    pub fn norm(&self) -> f64 {
        let sx: f64 = self.x.iter().map(|v| linalg::dot(v, v)).sum();
        (sx + linalg::dot(&self.z, &self.z)).sqrt()
    }

    fn check(&self, p: &Problem) -> Result<()> {
        p.check_point(&self.x)?;
        p.check_point(&self.x_prev)?;
        if self.z.len() != p.num_rows() || self.z_prev.len() != p.num_rows() {
            return Err(SolverError::Config(format!(
                "multiplier has length {}, expected {}",
                self.z.len(),
                p.num_rows()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub primal_residual: f64,
    pub dual_residuals: Vec<f64>,
    pub objective: f64,
    pub phi: Option<f64>,
    pub theta_potential: Option<f64>,
    /// `‖v^k − v*‖_Q` against the configured reference.
    pub distance_to_ref: Option<f64>,
    /// `‖(x_1, …, x_m, z)‖`, kept for growth-rate fits.
    pub iterate_norm: f64,
}

impl TraceRow {
    pub fn dual_residual_max(&self) -> f64 {
        self.dual_residuals.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxIters,
    Diverged,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIters => "max-iters",
            RunStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: SolverState,
    pub status: RunStatus,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    /// `‖Σ A_i x_i − b‖`
    pub primal: f64,
    /// `‖β A_iᵀ Σ_{j>i} A_j (x_j^k − x_j^{k+1})‖`, zero for the last block.
    pub dual: Vec<f64>,
}

impl Residuals {
    pub fn dual_max(&self) -> f64 {
        self.dual.iter().cloned().fold(0.0, f64::max)
    }
}

enum BlockPlan {
    /// `(P + βAᵀA) x = rhs`
    Linear(Cholesky),
    /// `AᵀA = c·I`: prox of the objective at `Aᵀv/c` with step `1/(βc)`.
    ClosedForm { c: f64 },
    /// Proximal gradient with the given step.
    Inner { step: f64 },
}

/// Solver bound to one problem, with per-block factorizations cached.
pub struct Solver<'p> {
    problem: &'p Problem,
    cfg: SolverConfig,
    plans: Vec<BlockPlan>,
}

impl<'p> Solver<'p> {
    pub fn new(problem: &'p Problem, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let plans = problem
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, blk)| plan_block(i + 1, blk, &cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { problem, cfg, plans })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }

    /// Minimizer of the block-`i` subproblem (0-based) given the other
    /// blocks' current values in `x` and the multiplier `z`.
    pub fn solve_block(&self, i: usize, x: &[Vector], z: &[f64]) -> Result<Vector> {
        let p = self.problem;
        let beta = self.cfg.beta;
        let blk = p.block(i);
        // r = Σ_{j≠i} A_j x_j − b
        let mut r: Vector = p.b().iter().map(|v| -v).collect();
        for (j, (bj, xj)) in p.blocks().iter().zip(x).enumerate() {
            if j != i {
                linalg::axpy(1.0, &bj.a.matvec(xj)?, &mut r);
            }
        }
        match &self.plans[i] {
            BlockPlan::Linear(chol) => {
                // Aᵀz − q − βAᵀr
                let mut rhs = blk.a.tr_matvec(z)?;
                linalg::axpy(-beta, &blk.a.tr_matvec(&r)?, &mut rhs);
                if let ObjectiveTerm::Quadratic { q, .. } = &blk.objective {
                    linalg::axpy(-1.0, q, &mut rhs);
                }
                chol.solve(&rhs)
                    .map_err(|source| SolverError::Subproblem { block: i + 1, source })
            }
            BlockPlan::ClosedForm { c } => {
                let v = shifted_target(z, &r, beta);
                let u: Vector = blk.a.tr_matvec(&v)?.into_iter().map(|t| t / c).collect();
                closed_form_prox(i + 1, &blk.objective, &blk.set, &u, beta * c)
            }
            BlockPlan::Inner { step } => {
                let v = shifted_target(z, &r, beta);
                inner_prox_gradient(i + 1, &blk.a, &blk.objective, &blk.set, &v, beta, *step, &x[i], &self.cfg.inner)
            }
        }
    }

    /// One full sweep followed by the multiplier update.
    pub fn step(&self, state: &SolverState) -> Result<SolverState> {
        state.check(self.problem)?;
        let mut x = state.x.clone();
        for i in 0..self.problem.num_blocks() {
            x[i] = self.solve_block(i, &x, &state.z)?;
        }
        let res = self.problem.constraint_residual(&x)?;
        let mut z = state.z.clone();
        linalg::axpy(-self.cfg.beta, &res, &mut z);
        Ok(SolverState {
            x_prev: state.x.clone(),
            z_prev: state.z.clone(),
            x,
            z,
            k: state.k + 1,
        })
    }

    /// Whether `state` meets the scaled stopping rule
    /// `max(primal/(1+‖b‖), max_i dual_i/(1+‖A_iᵀz‖)) ≤ min(tol_primal, tol_dual)`.
    pub fn converged(&self, state: &SolverState, res: &Residuals) -> Result<bool> {
        Ok(scaled_residual(self.problem, state, res)? <= self.cfg.tol_primal.min(self.cfg.tol_dual))
    }

    pub fn run(&self, init: SolverState) -> Result<RunResult> {
        init.check(self.problem)?;
        let mut state = init;
        let mut trace = Vec::new();
        for _ in 0..self.cfg.max_iters {
            let next = self.step(&state)?;
            let norm = next.norm();
            let diverged = !norm.is_finite() || norm > self.cfg.divergence_threshold;
            let res = residuals(self.problem, &next, self.cfg.beta)?;
            if self.cfg.record_trace && norm.is_finite() {
                trace.push(self.trace_row(&next, &res, norm)?);
            }
            let done = !diverged && self.converged(&next, &res)?;
            state = next;
            if diverged {
                return Ok(RunResult { state, status: RunStatus::Diverged, trace });
            }
            if done {
                return Ok(RunResult { state, status: RunStatus::Converged, trace });
            }
        }
        Ok(RunResult { state, status: RunStatus::MaxIters, trace })
    }

    fn trace_row(&self, state: &SolverState, res: &Residuals, norm: f64) -> Result<TraceRow> {
        let p = self.problem;
        let beta = self.cfg.beta;
        let (phi, theta, dist) = match &self.cfg.reference {
            Some(reference) => (
                Some(analysis::potential_phi(p, state, reference, beta)?),
                Some(analysis::potential_theta(p, state, &reference.point, beta)?),
                Some(analysis::q_distance(p, state, &reference.point, beta)?),
            ),
            None => (None, None, None),
        };
        Ok(TraceRow {
            k: state.k,
            primal_residual: res.primal,
            dual_residuals: res.dual.clone(),
            objective: p.objective_value(&state.x)?,
            phi,
            theta_potential: theta,
            distance_to_ref: dist,
            iterate_norm: norm,
        })
    }
}

fn plan_block(index: usize, blk: &crate::problem::Block, cfg: &SolverConfig) -> Result<BlockPlan> {
    let beta = cfg.beta;
    let gram = blk.a.gram();
    let free = matches!(blk.set, ConstraintSet::Free);
    let linear_p = match &blk.objective {
        ObjectiveTerm::Zero => Some(None),
        ObjectiveTerm::Quadratic { p, .. } => Some(Some(p)),
        _ => None,
    };
    if free {
        if let Some(p) = linear_p {
            let mut h = gram.scaled(beta);
            if let Some(p) = p {
                h = h.add(p)?;
            }
            let chol = Cholesky::factor(&h).map_err(|source| SolverError::Subproblem { block: index, source })?;
            return Ok(BlockPlan::Linear(chol));
        }
    }
    let scaled_identity = gram
        .scalar_multiple_of_identity(SCALED_IDENTITY_TOL)
        .filter(|c| *c > 0.0);
    let separable = match &blk.objective {
        ObjectiveTerm::Zero | ObjectiveTerm::WeightedL1 { .. } => true,
        ObjectiveTerm::Quadratic { p, .. } => is_diagonal(p),
        ObjectiveTerm::External(_) => free,
    };
    if let (Some(c), true) = (scaled_identity, separable) {
        return Ok(BlockPlan::ClosedForm { c });
    }
    let reason = if scaled_identity.is_none() {
        "A_iᵀA_i is not a positive multiple of the identity".to_string()
    } else {
        "objective is not separable".to_string()
    };
    if matches!(blk.objective, ObjectiveTerm::External(_)) && !free {
        return Err(SolverError::UnsupportedSubproblem {
            block: index,
            reason: "external prox combined with a constraint set".into(),
        });
    }
    if !cfg.inner.enabled {
        return Err(SolverError::UnsupportedSubproblem { block: index, reason });
    }
    let smooth_lip = match &blk.objective {
        ObjectiveTerm::Quadratic { p, .. } => linalg::lambda_max_sym(p)?.max(0.0),
        _ => 0.0,
    };
    let gram_norm = linalg::lambda_max_sym(&gram)?.max(0.0);
    let lip = smooth_lip + beta * gram_norm;
    if !(lip > 0.0) {
        return Err(SolverError::UnsupportedSubproblem {
            block: index,
            reason: "subproblem has no curvature".into(),
        });
    }
    Ok(BlockPlan::Inner { step: 1.0 / lip })
}

fn is_diagonal(p: &Matrix) -> bool {
    (0..p.rows()).all(|i| (0..p.cols()).all(|j| i == j || p[(i, j)] == 0.0))
}

/// `v = z/β − r`, so the penalty part reads `(β/2)‖A_i x − v‖²` up to a constant.
fn shifted_target(z: &[f64], r: &[f64], beta: f64) -> Vector {
    z.iter().zip(r).map(|(zi, ri)| zi / beta - ri).collect()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// `argmin θ(x) + ι_X(x) + (w/2)‖x − u‖²` for separable terms.
fn closed_form_prox(
    block: usize,
    objective: &ObjectiveTerm,
    set: &ConstraintSet,
    u: &[f64],
    w: f64,
) -> Result<Vector> {
    let mut x: Vector = match objective {
        ObjectiveTerm::Zero => u.to_vec(),
        ObjectiveTerm::WeightedL1 { weight } => u.iter().map(|&v| soft_threshold(v, weight / w)).collect(),
        ObjectiveTerm::Quadratic { p, q } => u
            .iter()
            .enumerate()
            .map(|(j, &v)| (w * v - q[j]) / (w + p[(j, j)]))
            .collect(),
        ObjectiveTerm::External(ext) => match &ext.hook {
            Some(h) => h.prox(u, 1.0 / w),
            None => return Err(ProblemError::UnboundHook(ext.name.clone()).into()),
        },
    };
    if x.len() != u.len() {
        return Err(SolverError::Subproblem {
            block,
            source: LinalgError::DimensionMismatch("prox hook returned a vector of the wrong length".into()),
        });
    }
    // Clipping after a 1-D convex prox gives the prox of term + interval.
    set.project(&mut x);
    Ok(x)
}

/// Proximal gradient on `θ_smooth(x) + (β/2)‖Ax − v‖² + θ_nonsmooth(x) + ι_X(x)`.
#[allow(clippy::too_many_arguments)]
fn inner_prox_gradient(
    block: usize,
    a: &Matrix,
    objective: &ObjectiveTerm,
    set: &ConstraintSet,
    v: &[f64],
    beta: f64,
    step: f64,
    warm: &[f64],
    inner: &InnerConfig,
) -> Result<Vector> {
    let mut x = warm.to_vec();
    for _ in 0..inner.max_iters {
        let mut resid = a.matvec(&x)?;
        linalg::axpy(-1.0, v, &mut resid);
        let mut grad = a.tr_matvec(&resid)?;
        grad.iter_mut().for_each(|g| *g *= beta);
        linalg::axpy(1.0, &objective.smooth_gradient(&x)?, &mut grad);
        let mut y: Vector = x.iter().zip(&grad).map(|(xi, gi)| xi - step * gi).collect();
        match objective {
            ObjectiveTerm::WeightedL1 { weight } => {
                y.iter_mut().for_each(|yi| *yi = soft_threshold(*yi, weight * step));
            }
            ObjectiveTerm::External(ext) => {
                y = match &ext.hook {
                    Some(h) => h.prox(&y, step),
                    None => return Err(ProblemError::UnboundHook(ext.name.clone()).into()),
                };
            }
            _ => {}
        }
        set.project(&mut y);
        let change = linalg::norm2(&linalg::sub_vec(&y, &x));
        let scale = 1.0 + linalg::norm2(&x);
        x = y;
        if change <= inner.tol * scale {
            return Ok(x);
        }
    }
    Err(SolverError::InnerFailure {
        block,
        iters: inner.max_iters,
        tol: inner.tol,
    })
}

// ---------------------------------------------------------------------------
// free-function surface

/// `Σθ_i(x_i) − zᵀ(ΣA_ix_i − b) + (β/2)‖ΣA_ix_i − b‖²`
pub fn augmented_lagrangian(p: &Problem, x: &[Vector], z: &[f64], beta: f64) -> Result<f64> {
    let r = p.constraint_residual(x)?;
    if z.len() != r.len() {
        return Err(SolverError::Config(format!("multiplier has length {}, expected {}", z.len(), r.len())));
    }
    let obj = p.objective_value(x)?;
    Ok(obj - linalg::dot(z, &r) + 0.5 * beta * linalg::dot(&r, &r))
}

/// Block-`i` update (0-based) using the values currently held in `state.x`.
pub fn solve_block(p: &Problem, i: usize, state: &SolverState, cfg: &SolverConfig) -> Result<Vector> {
    let solver = Solver::new(p, cfg.clone())?;
    solver.solve_block(i, &state.x, &state.z)
}

pub fn step(p: &Problem, state: &SolverState, cfg: &SolverConfig) -> Result<SolverState> {
    Solver::new(p, cfg.clone())?.step(state)
}

pub fn run(p: &Problem, cfg: &SolverConfig, init: SolverState) -> Result<RunResult> {
    Solver::new(p, cfg.clone())?.run(init)
}

/// Primal residual and the per-block dual witnesses extracted from the
/// subproblem optimality conditions of the last sweep.
pub fn residuals(p: &Problem, state: &SolverState, beta: f64) -> Result<Residuals> {
    state.check(p)?;
    let primal = linalg::norm2(&p.constraint_residual(&state.x)?);
    let m = p.num_blocks();
    let mut dual = vec![0.0; m];
    let mut suffix = vec![0.0; p.num_rows()];
    for i in (0..m).rev() {
        // suffix = Σ_{j>i} A_j (x_j^k − x_j^{k+1})
        let s = p.block(i).a.tr_matvec(&suffix)?;
        dual[i] = beta * linalg::norm2(&s);
        let diff = linalg::sub_vec(&state.x_prev[i], &state.x[i]);
        linalg::axpy(1.0, &p.block(i).a.matvec(&diff)?, &mut suffix);
    }
    Ok(Residuals { primal, dual })
}

/// Left-hand side of the stopping rule.
pub fn scaled_residual(p: &Problem, state: &SolverState, res: &Residuals) -> Result<f64> {
    let mut worst = res.primal / (1.0 + linalg::norm2(p.b()));
    for (blk, d) in p.blocks().iter().zip(&res.dual) {
        let atz = linalg::norm2(&blk.a.tr_matvec(&state.z)?);
        worst = worst.max(d / (1.0 + atz));
    }
    Ok(worst)
}
