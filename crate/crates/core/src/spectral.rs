//! Closed-form iteration matrices of the scheme on scalar-block homogeneous
//! equations `Σ A_i x_i = 0`, with optional `(σ_i/2)x_i²` objectives.
//!
//! With `μ = z/β` the iterate `(x_2, …, x_m, μ)` evolves as `S·(…)` where
//! `S = L⁻¹R`. Block 1 is eliminated, so it never appears in the state.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::linalg::{self, LinalgError, Lu, Matrix, Vector};
use crate::problem::{Block, ConstraintSet, ObjectiveTerm, Problem, ProblemError};

/// Half-width of the band around 1 reported as [`Prediction::Marginal`].
pub const PREDICTION_BAND: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("degenerate construction: {0}")]
    Degenerate(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Convergent,
    Divergent,
    Marginal,
}

impl Prediction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Prediction::Convergent => "convergent",
            Prediction::Divergent => "divergent",
            Prediction::Marginal => "marginal",
        }
    }
}

pub fn predict_rho(rho: f64) -> Prediction {
    if rho > 1.0 + PREDICTION_BAND {
        Prediction::Divergent
    } else if rho < 1.0 - PREDICTION_BAND {
        Prediction::Convergent
    } else {
        Prediction::Marginal
    }
}

#[derive(Debug, Clone)]
pub struct IterationMatrixBundle {
    pub l: Matrix,
    pub r: Matrix,
    /// `L⁻¹R`
    pub s: Matrix,
    pub rho: f64,
    /// `None` for the null-objective map, which does not depend on β.
    pub beta: Option<f64>,
    /// `σ_1, …, σ_m`
    pub sigma: Vec<f64>,
}

impl IterationMatrixBundle {
    fn from_parts(l: Matrix, r: Matrix, beta: Option<f64>, sigma: Vec<f64>) -> Result<Self> {
        let lu = Lu::factor(&l).map_err(|e| match e {
            LinalgError::Singular { pivot } => SpectralError::Construction(format!("L is singular at pivot {}", pivot)),
            other => other.into(),
        })?;
        let s = lu.solve_matrix(&r)?;
        let rho = linalg::spectral_radius(&s)?;
        Ok(Self { l, r, s, rho, beta, sigma })
    }

    pub fn predict(&self) -> Prediction {
        predict_rho(self.rho)
    }

    pub fn dim(&self) -> usize {
        self.s.rows()
    }

    /// `‖LS − R‖_F / max(1, ‖R‖_F)`
    pub fn consistency_residual(&self) -> Result<f64> {
        let ls = self.l.matmul(&self.s)?;
        Ok(ls.sub(&self.r)?.frobenius_norm() / self.r.frobenius_norm().max(1.0))
    }

    /// `S^k v`
    pub fn apply(&self, v: &[f64], k: usize) -> Result<Vector> {
        let mut out = v.to_vec();
        for _ in 0..k {
            out = self.s.matvec(&out)?;
        }
        Ok(out)
    }
}

fn check_core(a: &Matrix) -> Result<usize> {
    if !a.is_square() || a.rows() < 2 {
        return Err(SpectralError::InvalidInput(format!(
            "A must be square with m >= 2, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let a1 = a.col(0);
    if linalg::dot(&a1, &a1) == 0.0 {
        return Err(SpectralError::Degenerate("A_1ᵀA_1 = 0".into()));
    }
    match Lu::factor(a) {
        Ok(_) => Ok(a.rows()),
        Err(LinalgError::Singular { .. }) => Err(SpectralError::InvalidInput("A must be nonsingular".into())),
        Err(e) => Err(e.into()),
    }
}

/// `L` with `σ_i/β` added to the Gram diagonal of block `i` (`shift[i-2]`).
fn build_l(a: &Matrix, shift: &[f64]) -> Matrix {
    let m = a.rows();
    let cols: Vec<Vector> = (0..m).map(|j| a.col(j)).collect();
    let n = (m - 1) + m;
    let mut l = Matrix::zeros(n, n);
    for i in 1..m {
        for j in 1..=i {
            l[(i - 1, j - 1)] = linalg::dot(&cols[i], &cols[j]);
        }
        l[(i - 1, i - 1)] += shift[i - 1];
    }
    for r in 0..m {
        for j in 1..m {
            l[(m - 1 + r, j - 1)] = cols[j][r];
        }
        l[(m - 1 + r, m - 1 + r)] = 1.0;
    }
    l
}

fn build_r(a: &Matrix) -> Matrix {
    let m = a.rows();
    let cols: Vec<Vector> = (0..m).map(|j| a.col(j)).collect();
    let n = (m - 1) + m;
    let mut r = Matrix::zeros(n, n);
    for i in 1..m {
        for j in (i + 1)..m {
            r[(i - 1, j - 1)] = -linalg::dot(&cols[i], &cols[j]);
        }
        for c in 0..m {
            r[(i - 1, m - 1 + c)] = cols[i][c];
        }
    }
    for c in 0..m {
        r[(m - 1 + c, m - 1 + c)] = 1.0;
    }
    // rank-one elimination of x_1: R −= (1/A_1ᵀA_1)·u·wᵀ
    let a1 = &cols[0];
    let g11 = linalg::dot(a1, a1);
    let mut u = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for col in &cols[1..] {
        u.push(linalg::dot(col, a1));
        w.push(-linalg::dot(a1, col));
    }
    u.extend_from_slice(a1);
    w.extend_from_slice(a1);
    for (i, ui) in u.iter().enumerate() {
        for (j, wj) in w.iter().enumerate() {
            r[(i, j)] -= ui * wj / g11;
        }
    }
    r
}

/// Null-objective map for `A = [A_1, …, A_m]` with scalar blocks.
pub fn build_homogeneous(a: &Matrix) -> Result<IterationMatrixBundle> {
    let m = check_core(a)?;
    let l = build_l(a, &vec![0.0; m - 1]);
    IterationMatrixBundle::from_parts(l, build_r(a), None, vec![0.0; m])
}

/// Map with objectives `(σ_i/2)x_i²` on blocks `2..m` (`sigma[i-2] = σ_i`).
/// Only `L` changes: `σ_i/β` joins its diagonal.
pub fn build_quadratic_diag(a: &Matrix, sigma: &[f64], beta: f64) -> Result<IterationMatrixBundle> {
    let m = check_core(a)?;
    if sigma.len() != m - 1 {
        return Err(SpectralError::InvalidInput(format!(
            "expected {} coefficients for blocks 2..m, got {}",
            m - 1,
            sigma.len()
        )));
    }
    check_sigmas(sigma, beta)?;
    let shift: Vec<f64> = sigma.iter().map(|s| s / beta).collect();
    let mut all = vec![0.0];
    all.extend_from_slice(sigma);
    IterationMatrixBundle::from_parts(build_l(a, &shift), build_r(a), Some(beta), all)
}

fn check_sigmas(sigma: &[f64], beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(SpectralError::InvalidInput(format!("beta must be positive, got {}", beta)));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(SpectralError::InvalidInput(format!("sigma must be nonnegative, got {}", s)));
    }
    Ok(())
}

/// `d_i = 1/(1 + σ_i/β)`
fn damping(extra_sigmas: &[f64], beta: f64) -> Vec<f64> {
    extra_sigmas.iter().map(|s| 1.0 / (1.0 + s / beta)).collect()
}

/// Lower-right corner `[[1, −1], [d, 0]]` of the lagged extension, for one block.
pub fn extension_corner(d: f64) -> Matrix {
    Matrix::from_rows(&[[1.0, -1.0], [d, 0.0]]).expect("finite literal")
}

/// How the decoupled blocks `i ≥ 4` update `μ_[i]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtensionForm {
    /// `μ_[i] ← μ_[i] − x_i^k`: the lagged `[[S,0,0],[0,I,−I],[0,D,0]]` form.
    Lagged,
    /// `μ_[i] ← μ_[i] − x_i^{k+1} = (1 − d_i)μ_[i]`: what the scheme computes.
    Exact,
}

/// Extension of a 3×3 core by decoupled blocks `Ǎ_i = e_i` with objectives
/// `(σ_i/2)x_i²`, `i = 4, …, m`. State order is
/// `(x_2, x_3, μ_[1:3], μ_[4], …, μ_[m], x_4, …, x_m)`.
pub fn build_block_extension(a3: &Matrix, extra_sigmas: &[f64], beta: f64) -> Result<IterationMatrixBundle> {
    build_block_extension_with(a3, extra_sigmas, beta, ExtensionForm::Lagged)
}

pub fn build_block_extension_with(
    a3: &Matrix,
    extra_sigmas: &[f64],
    beta: f64,
    form: ExtensionForm,
) -> Result<IterationMatrixBundle> {
    if a3.rows() != 3 || a3.cols() != 3 {
        return Err(SpectralError::InvalidInput("the extension core must be 3x3".into()));
    }
    let core = build_homogeneous(a3)?;
    if extra_sigmas.is_empty() {
        return Ok(core);
    }
    check_sigmas(extra_sigmas, beta)?;
    let e = extra_sigmas.len();
    let nc = core.dim();
    let n = nc + 2 * e;
    let d = damping(extra_sigmas, beta);

    let mut l = Matrix::identity(n);
    l.set_block(0, 0, &core.l);
    let mut r = Matrix::zeros(n, n);
    r.set_block(0, 0, &core.r);
    let mut s = Matrix::zeros(n, n);
    s.set_block(0, 0, &core.s);
    for (k, &dk) in d.iter().enumerate() {
        let (mu, x) = (nc + k, nc + e + k);
        match form {
            ExtensionForm::Lagged => {
                for t in [&mut r, &mut s] {
                    t[(mu, mu)] = 1.0;
                    t[(mu, x)] = -1.0;
                    t[(x, mu)] = dk;
                }
            }
            ExtensionForm::Exact => {
                for t in [&mut r, &mut s] {
                    t[(mu, mu)] = 1.0 - dk;
                    t[(x, mu)] = dk;
                }
            }
        }
    }
    let rho = linalg::spectral_radius(&s)?;
    if rho < core.rho - 1e-10 * core.rho.max(1.0) {
        return Err(SpectralError::Construction(format!(
            "extension radius {} fell below its core radius {}",
            rho, core.rho
        )));
    }
    let mut sigma = vec![0.0; 3];
    sigma.extend_from_slice(extra_sigmas);
    Ok(IterationMatrixBundle {
        l,
        r,
        s,
        rho,
        beta: Some(beta),
        sigma,
    })
}

// ---------------------------------------------------------------------------
// problems realizing the maps

/// `Σ A_i x_i = 0` with scalar blocks and objectives `(σ_i/2)x_i²` on blocks
/// `2..m` (`sigma[i-2]`; an empty slice means all zero).
pub fn homogeneous_problem(a: &Matrix, sigma: &[f64]) -> Result<Problem> {
    let m = a.cols();
    if !sigma.is_empty() && sigma.len() != m - 1 {
        return Err(SpectralError::InvalidInput(format!(
            "expected {} coefficients for blocks 2..m, got {}",
            m - 1,
            sigma.len()
        )));
    }
    let blocks = (0..m)
        .map(|j| {
            let s = if j == 0 || sigma.is_empty() { 0.0 } else { sigma[j - 1] };
            let obj = if s == 0.0 { ObjectiveTerm::Zero } else { ObjectiveTerm::scaled_norm_sq(s, 1) };
            Block::new(Matrix::column(&a.col(j)), obj, ConstraintSet::Free)
        })
        .collect();
    Ok(Problem::new(blocks, vec![0.0; a.rows()])?)
}

/// The problem behind [`build_block_extension`]: `Ǎ = diag(A3, I_{m−3})`.
pub fn block_extension_problem(a3: &Matrix, extra_sigmas: &[f64]) -> Result<Problem> {
    let m = 3 + extra_sigmas.len();
    let mut a = Matrix::zeros(m, m);
    a.set_block(0, 0, a3);
    for k in 3..m {
        a[(k, k)] = 1.0;
    }
    let mut sigma = vec![0.0, 0.0];
    sigma.extend_from_slice(extra_sigmas);
    homogeneous_problem(&a, &sigma)
}

/// Inverse of [`homogeneous_problem`]: recovers `A` and `σ_2, …, σ_m` from a
/// problem with scalar free blocks, `b = 0`, and objectives that are zero or
/// `(σ/2)x²`. Block 1 must carry no objective.
pub fn scalar_profile(p: &Problem) -> Result<(Matrix, Vector)> {
    let m = p.num_blocks();
    if p.b().iter().any(|v| *v != 0.0) {
        return Err(SpectralError::InvalidInput("closed-form maps need b = 0".into()));
    }
    let mut a = Matrix::zeros(p.num_rows(), m);
    let mut sigma = Vec::with_capacity(m.saturating_sub(1));
    for (j, blk) in p.blocks().iter().enumerate() {
        let i = j + 1;
        if blk.dim() != 1 {
            return Err(SpectralError::InvalidInput(format!("block {} is not scalar", i)));
        }
        if blk.set != ConstraintSet::Free {
            return Err(SpectralError::InvalidInput(format!("block {} is constrained", i)));
        }
        let s = match &blk.objective {
            ObjectiveTerm::Zero => 0.0,
            ObjectiveTerm::Quadratic { p, q } if q[0] == 0.0 => p[(0, 0)],
            _ => {
                return Err(SpectralError::InvalidInput(format!(
                    "block {} objective is not of the form (σ/2)x²",
                    i
                )))
            }
        };
        if j == 0 {
            if s != 0.0 {
                return Err(SpectralError::InvalidInput("block 1 must carry no objective".into()));
            }
        } else {
            sigma.push(s);
        }
        for r in 0..p.num_rows() {
            a[(r, j)] = blk.a[(r, 0)];
        }
    }
    Ok((a, sigma))
}

/// `(x_2, …, x_m, z/β)` for scalar blocks.
pub fn homogeneous_state(x: &[Vector], z: &[f64], beta: f64) -> Vector {
    let mut v: Vector = x[1..].iter().map(|xi| xi[0]).collect();
    v.extend(z.iter().map(|zi| zi / beta));
    v
}

/// `(x_2, x_3, μ_[1:3], μ_[4..m], x_4..x_m)` with `μ = z/β`.
pub fn extension_state(x: &[Vector], z: &[f64], beta: f64) -> Vector {
    let m = x.len();
    let mut v = vec![x[1][0], x[2][0]];
    v.extend(z.iter().map(|zi| zi / beta));
    v.extend(x[3..m].iter().map(|xi| xi[0]));
    v
}

// ---------------------------------------------------------------------------
// perturbation bound

/// `|ρ̂(A+Δ) − ρ̂(A)| ≤ C‖Δ‖` with `ρ̂(·) = √‖(·)ᵀ(·)‖` and
/// `C = (2‖A‖+1)/√‖AᵀA‖`.
#[derive(Debug, Clone)]
pub struct PerturbationCheck {
    pub a: Matrix,
    pub delta: Matrix,
    pub c: f64,
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn perturbation_check(a: &Matrix, delta: &Matrix) -> Result<PerturbationCheck> {
    if a.rows() != delta.rows() || a.cols() != delta.cols() {
        return Err(SpectralError::InvalidInput("A and Delta must have the same shape".into()));
    }
    let nd = linalg::two_norm(delta)?;
    if nd >= 1.0 {
        return Err(SpectralError::PreconditionViolation(format!("‖Delta‖ = {} is not below 1", nd)));
    }
    let na = linalg::two_norm(a)?;
    if na == 0.0 {
        return Err(SpectralError::PreconditionViolation("A must be nonzero".into()));
    }
    let gram = linalg::two_norm(&a.gram())?;
    let c = (2.0 * na + 1.0) / gram.sqrt();
    let lhs = (linalg::two_norm(&a.add(delta)?)? - na).abs();
    let bound = c * nd;
    Ok(PerturbationCheck {
        a: a.clone(),
        delta: delta.clone(),
        c,
        lhs,
        bound,
        holds: lhs <= bound + 1e-12,
    })
}

// ---------------------------------------------------------------------------
// random search

#[derive(Debug, Clone)]
pub struct SearchHit {
    pub a: Matrix,
    pub rho: f64,
    pub trials: usize,
}

/// Samples `A ∈ [−1, 1]^{m×m}` until the null-objective map has `ρ(S) > 1`.
pub fn search_divergent(m: usize, max_trials: usize, seed: u64) -> Result<Option<SearchHit>> {
    if m < 3 {
        return Err(SpectralError::InvalidInput(format!("search needs m >= 3, got {}", m)));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    for trial in 1..=max_trials {
        let data: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let a = Matrix::new(m, m, data)?;
        let bundle = match build_homogeneous(&a) {
            Ok(b) => b,
            Err(SpectralError::InvalidInput(_) | SpectralError::Degenerate(_) | SpectralError::Construction(_)) => continue,
            Err(e) => return Err(e),
        };
        if bundle.predict() == Prediction::Divergent {
            return Ok(Some(SearchHit {
                a,
                rho: bundle.rho,
                trials: trial,
            }));
        }
    }
    Ok(None)
}
