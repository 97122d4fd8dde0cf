//! Separable m-block problem `min Σ θ_i(x_i)  s.t.  Σ A_i x_i = b, x_i ∈ X_i`,
//! its JSON file format, and structural validation.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix, Vector, DEFAULT_RANK_TOL, SYMMETRY_TOL};

/// Absolute tolerance for indicator-set feasibility.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Relative slack on `λ_min(P) ≥ 0`.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("dimension error in block {block}: {message}")]
    Dimension { block: usize, message: String },
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("external objective `{0}` has no prox hook bound")]
    UnboundHook(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ProblemError>;

/// User-supplied proximal operator for an `external` objective term.
pub trait ProxHook: Send + Sync {
    /// `argmin_x h(x) + ‖x − v‖²/(2·step)`
    fn prox(&self, v: &[f64], step: f64) -> Vector;
    fn value(&self, x: &[f64]) -> f64;
}

#[derive(Clone)]
pub struct ExternalTerm {
    pub name: String,
    /// Modulus claimed by the user. Ignored unless validation trusts it.
    pub declared_modulus: Option<f64>,
    pub hook: Option<Arc<dyn ProxHook>>,
}

impl fmt::Debug for ExternalTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalTerm")
            .field("name", &self.name)
            .field("declared_modulus", &self.declared_modulus)
            .field("bound", &self.hook.is_some())
            .finish()
    }
}

impl PartialEq for ExternalTerm {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.declared_modulus == other.declared_modulus
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveTerm {
    Zero,
    /// `½ xᵀPx + qᵀx`
    Quadratic { p: Matrix, q: Vector },
    /// `weight · ‖x‖₁`
    WeightedL1 { weight: f64 },
    External(ExternalTerm),
}

impl ObjectiveTerm {
    pub fn quadratic(p: Matrix, q: Vector) -> Self {
        ObjectiveTerm::Quadratic { p, q }
    }

    /// `(σ/2)‖x‖²` on `n` coordinates.
    pub fn scaled_norm_sq(sigma: f64, n: usize) -> Self {
        ObjectiveTerm::Quadratic {
            p: Matrix::identity(n).scaled(sigma),
            q: vec![0.0; n],
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(match self {
            ObjectiveTerm::Zero => 0.0,
            ObjectiveTerm::Quadratic { p, q } => {
                let px = p.matvec(x)?;
                0.5 * linalg::dot(x, &px) + linalg::dot(q, x)
            }
            ObjectiveTerm::WeightedL1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            ObjectiveTerm::External(ext) => match &ext.hook {
                Some(h) => h.value(x),
                None => return Err(ProblemError::UnboundHook(ext.name.clone())),
            },
        })
    }

    /// Gradient of the smooth part (quadratic terms only; zero otherwise).
    pub fn smooth_gradient(&self, x: &[f64]) -> Result<Vector> {
        Ok(match self {
            ObjectiveTerm::Quadratic { p, q } => {
                let mut g = p.matvec(x)?;
                linalg::axpy(1.0, q, &mut g);
                g
            }
            _ => vec![0.0; x.len()],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    Free,
    Nonnegative,
    Box { lo: Vector, hi: Vector },
}

impl ConstraintSet {
    pub fn project(&self, x: &mut [f64]) {
        match self {
            ConstraintSet::Free => {}
            ConstraintSet::Nonnegative => x.iter_mut().for_each(|v| *v = v.max(0.0)),
            ConstraintSet::Box { lo, hi } => {
                for ((v, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
                    *v = v.clamp(l, h);
                }
            }
        }
    }

    /// Largest violation of the set constraints (0 when feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            ConstraintSet::Free => 0.0,
            ConstraintSet::Nonnegative => x.iter().fold(0.0, |m, &v| m.max(-v)),
            ConstraintSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .fold(0.0, |m, (&v, (&l, &h))| m.max(l - v).max(v - h)),
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            ConstraintSet::Box { lo, .. } => Some(lo.len()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub a: Matrix,
    pub objective: ObjectiveTerm,
    pub set: ConstraintSet,
}

impl Block {
    pub fn new(a: Matrix, objective: ObjectiveTerm, set: ConstraintSet) -> Self {
        Self { a, objective, set }
    }

    /// Block of dimension `a.cols()` with no objective and no set.
    pub fn free_zero(a: Matrix) -> Self {
        Self::new(a, ObjectiveTerm::Zero, ConstraintSet::Free)
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    blocks: Vec<Block>,
    b: Vector,
}

impl Problem {
    /// Checks every structural invariant; errors name the offending block.
    pub fn new(blocks: Vec<Block>, b: Vector) -> Result<Self> {
        if blocks.len() < 2 {
            return Err(ProblemError::Invalid(format!(
                "need at least 2 blocks, got {}",
                blocks.len()
            )));
        }
        let l = b.len();
        if l == 0 {
            return Err(ProblemError::Invalid("right-hand side b is empty".into()));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::Invalid("b has non-finite entries".into()));
        }
        for (i, blk) in blocks.iter().enumerate() {
            let dim_err = |message: String| ProblemError::Dimension { block: i + 1, message };
            if blk.a.rows() != l {
                return Err(dim_err(format!(
                    "A has {} rows but b has length {}",
                    blk.a.rows(),
                    l
                )));
            }
            let n = blk.a.cols();
            if n == 0 {
                return Err(dim_err("A has no columns".into()));
            }
            if !blk.a.is_finite() {
                return Err(dim_err("A has non-finite entries".into()));
            }
            match &blk.objective {
                ObjectiveTerm::Quadratic { p, q } => {
                    if p.rows() != n || p.cols() != n {
                        return Err(dim_err(format!("P is {}x{}, expected {}x{}", p.rows(), p.cols(), n, n)));
                    }
                    if q.len() != n {
                        return Err(dim_err(format!("q has length {}, expected {}", q.len(), n)));
                    }
                    if !p.is_finite() || q.iter().any(|v| !v.is_finite()) {
                        return Err(dim_err("quadratic term has non-finite entries".into()));
                    }
                    if !p.is_symmetric(SYMMETRY_TOL) {
                        return Err(dim_err("P is not symmetric".into()));
                    }
                    let eig = linalg::symmetric_eigenvalues(p)?;
                    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
                    if lo < -PSD_TOL * hi.abs().max(1.0) {
                        return Err(dim_err(format!("P is not positive semidefinite (eigenvalue {:e})", lo)));
                    }
                }
                ObjectiveTerm::WeightedL1 { weight } => {
                    if !(weight.is_finite() && *weight >= 0.0) {
                        return Err(dim_err(format!("l1 weight {} must be finite and nonnegative", weight)));
                    }
                }
                ObjectiveTerm::External(ext) => {
                    if let Some(mu) = ext.declared_modulus {
                        if !(mu.is_finite() && mu >= 0.0) {
                            return Err(dim_err(format!("declared modulus {} is invalid", mu)));
                        }
                    }
                }
                ObjectiveTerm::Zero => {}
            }
            if let ConstraintSet::Box { lo, hi } = &blk.set {
                if lo.len() != hi.len() || Some(n) != blk.set.dim() {
                    return Err(dim_err(format!(
                        "box bounds have lengths {}/{}, expected {}",
                        lo.len(),
                        hi.len(),
                        n
                    )));
                }
                if lo.iter().zip(hi).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
                    return Err(dim_err("box requires lo <= hi entrywise".into()));
                }
            }
        }
        Ok(Self { blocks, b })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Block {
        &self.blocks[i]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Number of blocks `m`.
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Row count `l` shared by every `A_i`.
    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(Block::dim).collect()
    }

    /// Attaches a prox implementation to every external term named `name`.
    /// Returns how many terms were bound.
    pub fn bind_hook(&mut self, name: &str, hook: Arc<dyn ProxHook>) -> usize {
        let mut bound = 0;
        for blk in &mut self.blocks {
            if let ObjectiveTerm::External(ext) = &mut blk.objective {
                if ext.name == name {
                    ext.hook = Some(hook.clone());
                    bound += 1;
                }
            }
        }
        bound
    }

    pub fn check_point(&self, x: &[Vector]) -> Result<()> {
        if x.len() != self.blocks.len() {
            return Err(ProblemError::Invalid(format!(
                "{} block vectors for a {}-block problem",
                x.len(),
                self.blocks.len()
            )));
        }
        for (i, (xi, blk)) in x.iter().zip(&self.blocks).enumerate() {
            if xi.len() != blk.dim() {
                return Err(ProblemError::Dimension {
                    block: i + 1,
                    message: format!("x has length {}, expected {}", xi.len(), blk.dim()),
                });
            }
        }
        Ok(())
    }

    /// `Σ A_i x_i`
    pub fn constraint_image(&self, x: &[Vector]) -> Result<Vector> {
        self.check_point(x)?;
        let mut acc = vec![0.0; self.num_rows()];
        for (blk, xi) in self.blocks.iter().zip(x) {
            linalg::axpy(1.0, &blk.a.matvec(xi)?, &mut acc);
        }
        Ok(acc)
    }

    /// `Σ A_i x_i − b`
    pub fn constraint_residual(&self, x: &[Vector]) -> Result<Vector> {
        let mut r = self.constraint_image(x)?;
        linalg::axpy(-1.0, &self.b, &mut r);
        Ok(r)
    }

    /// `Σ θ_i(x_i)`; `+∞` when some `x_i` leaves its set by more than
    /// [`FEASIBILITY_TOL`].
    pub fn objective_value(&self, x: &[Vector]) -> Result<f64> {
        self.check_point(x)?;
        let mut total = 0.0;
        for (blk, xi) in self.blocks.iter().zip(x) {
            if blk.set.violation(xi) > FEASIBILITY_TOL {
                return Ok(f64::INFINITY);
            }
            total += blk.objective.value(xi)?;
        }
        Ok(total)
    }
}

/// Free-function form of [`Problem::objective_value`].
pub fn objective_value(p: &Problem, x: &[Vector]) -> Result<f64> {
    p.objective_value(x)
}

// ---------------------------------------------------------------------------
// validation

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateOptions {
    /// Accept user-declared moduli on external terms.
    pub trust_modulus: bool,
    pub rank_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    /// Strong-convexity modulus `μ_i`.
    pub mu: f64,
    /// `‖A_iᵀA_i‖`
    pub gram_norm: f64,
    pub column_rank: usize,
    pub full_column_rank: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub blocks: Vec<BlockReport>,
    pub strongly_convex_count: usize,
    /// Blocks 3..m strongly convex and every `A_i` of full column rank.
    pub structural: bool,
}

impl ValidationReport {
    /// Report from moduli and Gram norms alone (all blocks taken full rank).
    /// Handy for evaluating the penalty ranges on hypothetical profiles.
    pub fn from_profile(mu: &[f64], gram_norm: &[f64]) -> Self {
        let blocks: Vec<BlockReport> = mu
            .iter()
            .zip(gram_norm)
            .map(|(&mu, &g)| BlockReport {
                mu,
                gram_norm: g,
                column_rank: 1,
                full_column_rank: true,
            })
            .collect();
        Self::assemble(blocks)
    }

    fn assemble(blocks: Vec<BlockReport>) -> Self {
        let strongly_convex_count = blocks.iter().filter(|b| b.mu > 0.0).count();
        let structural = blocks.len() >= 3
            && blocks.iter().skip(2).all(|b| b.mu > 0.0)
            && blocks.iter().all(|b| b.full_column_rank);
        Self {
            blocks,
            strongly_convex_count,
            structural,
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
}

/// Strong-convexity modulus of a term: `λ_min(P)` for quadratics, 0 for
/// everything else unless an external modulus is explicitly trusted.
pub fn modulus(term: &ObjectiveTerm, trust_modulus: bool) -> Result<f64> {
    Ok(match term {
        ObjectiveTerm::Quadratic { p, .. } => linalg::lambda_min_spd(p)?.max(0.0),
        ObjectiveTerm::External(ext) if trust_modulus => ext.declared_modulus.unwrap_or(0.0),
        _ => 0.0,
    })
}

pub fn validate(p: &Problem) -> Result<ValidationReport> {
    validate_with(p, ValidateOptions::default())
}

pub fn validate_with(p: &Problem, opts: ValidateOptions) -> Result<ValidationReport> {
    let tol = opts.rank_tol.unwrap_or(DEFAULT_RANK_TOL);
    let mut blocks = Vec::with_capacity(p.num_blocks());
    for blk in p.blocks() {
        let mu = modulus(&blk.objective, opts.trust_modulus)?;
        let gram_norm = linalg::lambda_max_sym(&blk.a.gram())?.max(0.0);
        let column_rank = linalg::column_rank(&blk.a, tol)?;
        blocks.push(BlockReport {
            mu,
            gram_norm,
            column_rank,
            full_column_rank: column_rank == blk.dim(),
        });
    }
    Ok(ValidationReport::assemble(blocks))
}

// ---------------------------------------------------------------------------
// file format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    m: usize,
    b: Vec<f64>,
    blocks: Vec<BlockFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    objective: ObjectiveFile,
    set: SetFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum ObjectiveFile {
    Zero,
    Quadratic {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        q: Vec<f64>,
    },
    L1 {
        weight: f64,
    },
    External {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        modulus: Option<f64>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum SetFile {
    Free,
    Nonneg,
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

fn matrix_from_file(rows: &[Vec<f64>], block: usize, what: &str) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(ProblemError::Dimension {
            block,
            message: format!("{} has no rows", what),
        });
    }
    Matrix::from_rows(rows).map_err(|e| ProblemError::Dimension {
        block,
        message: format!("{}: {}", what, e),
    })
}

/// Parses a problem file (UTF-8 JSON) and cross-checks all dimensions.
pub fn load_problem(text: &str) -> Result<Problem> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ProblemFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ProblemError::Parse {
            path,
            message: e.into_inner().to_string(),
        }
    })?;
    if file.m != file.blocks.len() {
        return Err(ProblemError::Invalid(format!(
            "m = {} but {} blocks given",
            file.m,
            file.blocks.len()
        )));
    }
    let mut blocks = Vec::with_capacity(file.blocks.len());
    for (idx, bf) in file.blocks.into_iter().enumerate() {
        let i = idx + 1;
        let a = matrix_from_file(&bf.a, i, "A")?;
        let objective = match bf.objective {
            ObjectiveFile::Zero => ObjectiveTerm::Zero,
            ObjectiveFile::Quadratic { p, q } => ObjectiveTerm::Quadratic {
                p: matrix_from_file(&p, i, "P")?,
                q,
            },
            ObjectiveFile::L1 { weight } => ObjectiveTerm::WeightedL1 { weight },
            ObjectiveFile::External { name, modulus } => ObjectiveTerm::External(ExternalTerm {
                name,
                declared_modulus: modulus,
                hook: None,
            }),
        };
        let set = match bf.set {
            SetFile::Free => ConstraintSet::Free,
            SetFile::Nonneg => ConstraintSet::Nonnegative,
            SetFile::Box { lo, hi } => ConstraintSet::Box { lo, hi },
        };
        blocks.push(Block::new(a, objective, set));
    }
    Problem::new(blocks, file.b)
}

/// Serializes to the problem-file format. Floats use shortest round-trip
/// formatting, so [`load_problem`] reproduces the problem bit-exactly.
pub fn serialize_problem(p: &Problem) -> String {
    let file = ProblemFile {
        m: p.num_blocks(),
        b: p.b.clone(),
        blocks: p
            .blocks
            .iter()
            .map(|blk| BlockFile {
                a: blk.a.to_rows(),
                objective: match &blk.objective {
                    ObjectiveTerm::Zero => ObjectiveFile::Zero,
                    ObjectiveTerm::Quadratic { p, q } => ObjectiveFile::Quadratic {
                        p: p.to_rows(),
                        q: q.clone(),
                    },
                    ObjectiveTerm::WeightedL1 { weight } => ObjectiveFile::L1 { weight: *weight },
                    ObjectiveTerm::External(ext) => ObjectiveFile::External {
                        name: ext.name.clone(),
                        modulus: ext.declared_modulus,
                    },
                },
                set: match &blk.set {
                    ConstraintSet::Free => SetFile::Free,
                    ConstraintSet::Nonnegative => SetFile::Nonneg,
                    ConstraintSet::Box { lo, hi } => SetFile::Box {
                        lo: lo.clone(),
                        hi: hi.clone(),
                    },
                },
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("problem serialization cannot fail")
}

/// Matrix in the problem-file encoding (row-major array of arrays).
pub fn matrix_to_json(m: &Matrix) -> serde_json::Value {
    serde_json::json!(m.to_rows())
}
