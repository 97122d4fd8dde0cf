//! Seeded random problem families for property sweeps and benchmarks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, Matrix, Vector};
use crate::problem::{Block, ConstraintSet, ObjectiveTerm, Problem};

/// Largest block dimension drawn.
pub const MAX_BLOCK_DIM: usize = 5;

/// Floor on the smallest singular value of every `A_i` (and of `[A_1 A_2]`
/// where the family needs it). Nominally full-rank blocks near this floor make
/// the solution huge and the iterates crawl.
pub const MIN_BLOCK_SV: f64 = 0.05;

/// Redraws of the stacked matrix before giving up.
const MAX_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Blocks 1 and 2 convex (possibly singular) quadratics, blocks 3..m
    /// strongly convex with `λ_min(P_i) ∈ [mu_lo, mu_hi]`, every `A_i` of
    /// full column rank and `[A_1 A_2]` of full column rank too.
    /// The stacked `[A_1 … A_m]` has singular values in `[0.5, 1]`; each
    /// `A_i` and `[A_1 A_2]` has smallest singular value at least
    /// [`MIN_BLOCK_SV`].
    StrongTail { mu_lo: f64, mu_hi: f64 },
    /// Blocks 2..m strongly convex and one `A_j`, `j ≥ 2`, square.
    LinearRate { mu_lo: f64, mu_hi: f64 },
}

impl Family {
    pub const DEFAULT_STRONG_TAIL: Family = Family::StrongTail { mu_lo: 0.5, mu_hi: 2.0 };
    pub const DEFAULT_LINEAR_RATE: Family = Family::LinearRate { mu_lo: 0.5, mu_hi: 2.0 };
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::new(rows, cols, data).expect("finite samples")
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `BBᵀ` with `B` of random width in `0..=n`.
fn convex_quadratic<R: Rng + ?Sized>(rng: &mut R, n: usize) -> ObjectiveTerm {
    let r = rng.gen_range(0..=n);
    let p = if r == 0 {
        Matrix::zeros(n, n)
    } else {
        let b = gaussian(rng, n, r, 1.0 / (r as f64).sqrt());
        symmetrize(&b.matmul(&b.transpose()).expect("conformant"))
    };
    ObjectiveTerm::quadratic(p, gaussian_vec(rng, n))
}

/// `μI + CCᵀ` with `C` of width `n − 1`, so `λ_min = μ` exactly in exact arithmetic.
fn strong_quadratic<R: Rng + ?Sized>(rng: &mut R, n: usize, mu: f64) -> ObjectiveTerm {
    let mut p = Matrix::identity(n).scaled(mu);
    if n > 1 {
        let c = gaussian(rng, n, n - 1, 1.0 / ((n - 1) as f64).sqrt());
        p = p.add(&c.matmul(&c.transpose()).expect("conformant")).expect("conformant");
    }
    ObjectiveTerm::quadratic(symmetrize(&p), gaussian_vec(rng, n))
}

/// Orthonormal columns spanning the range of a Gaussian `rows × cols` draw
/// (two passes of modified Gram–Schmidt).
fn orthonormal_columns<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let g = gaussian(rng, rows, cols, 1.0);
    let mut q: Vec<Vector> = Vec::with_capacity(cols);
    for j in 0..cols {
        let mut v = g.col(j);
        for _ in 0..2 {
            for u in &q {
                let d = linalg::dot(u, &v);
                linalg::axpy(-d, u, &mut v);
            }
        }
        let nv = linalg::norm2(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        q.push(v);
    }
    let mut out = Matrix::zeros(rows, cols);
    for (j, col) in q.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            out[(i, j)] = x;
        }
    }
    out
}

/// `U·diag(s)·Vᵀ` of shape `l × n` (`l ≤ n`) with singular values `s ∈ [0.5, 1]`.
fn conditioned_matrix<R: Rng + ?Sized>(rng: &mut R, l: usize, n: usize) -> Matrix {
    let u = orthonormal_columns(rng, l, l);
    let v = orthonormal_columns(rng, n, l);
    let s: Vec<f64> = (0..l).map(|_| rng.gen_range(0.5..=1.0)).collect();
    let us = u.matmul(&Matrix::from_diag(&s)).expect("conformant");
    us.matmul(&v.transpose()).expect("conformant")
}

fn columns(a: &Matrix, range: std::ops::Range<usize>) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), range.len());
    for r in 0..a.rows() {
        for (c, src) in range.clone().enumerate() {
            out[(r, c)] = a[(r, src)];
        }
    }
    out
}

fn min_singular_value(a: &Matrix) -> f64 {
    let eig = linalg::symmetric_eigenvalues(&a.gram()).expect("finite gram");
    eig[0].max(0.0).sqrt()
}

/// Stacked matrix whose column blocks (and, with `pair`, the first two
/// together) all clear [`MIN_BLOCK_SV`].
fn separated_matrix<R: Rng + ?Sized>(rng: &mut R, l: usize, dims: &[usize], pair: bool) -> Matrix {
    let n: usize = dims.iter().sum();
    for _ in 0..MAX_DRAWS {
        let a = conditioned_matrix(rng, l, n);
        let mut off = 0;
        let mut ok = true;
        for &ni in dims {
            ok &= min_singular_value(&columns(&a, off..off + ni)) >= MIN_BLOCK_SV;
            off += ni;
        }
        if pair {
            ok &= min_singular_value(&columns(&a, 0..dims[0] + dims[1])) >= MIN_BLOCK_SV;
        }
        if ok {
            return a;
        }
    }
    panic!("no draw of a {}x{} matrix separated its column blocks", l, n);
}

fn symmetrize(p: &Matrix) -> Matrix {
    p.add(&p.transpose()).expect("square").scaled(0.5)
}

/// Draws an `m`-block instance of the requested family with free sets.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, m: usize, family: Family) -> Problem {
    assert!(m >= 3, "families need m >= 3");
    let mut dims: Vec<usize> = (0..m).map(|_| rng.gen_range(1..=MAX_BLOCK_DIM)).collect();
    let (l, strong_from, mu_lo, mu_hi, pair) = match family {
        Family::StrongTail { mu_lo, mu_hi } => {
            let lo = (dims[0] + dims[1]).max(*dims.iter().max().unwrap());
            let hi: usize = dims.iter().sum();
            (rng.gen_range(lo..=hi), 2, mu_lo, mu_hi, true)
        }
        Family::LinearRate { mu_lo, mu_hi } => {
            let j = rng.gen_range(1..m);
            let l = *dims.iter().max().unwrap();
            dims[j] = l;
            (l, 1, mu_lo, mu_hi, false)
        }
    };
    let a_full = separated_matrix(rng, l, &dims, pair);
    let mut offset = 0;
    let blocks: Vec<Block> = dims
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let a = columns(&a_full, offset..offset + n);
            offset += n;
            let obj = if i >= strong_from {
                let mu = rng.gen_range(mu_lo..=mu_hi);
                strong_quadratic(rng, n, mu)
            } else {
                convex_quadratic(rng, n)
            };
            Block::new(a, obj, ConstraintSet::Free)
        })
        .collect();
    let b = gaussian_vec(rng, l);
    Problem::new(blocks, b).expect("generated instance is well formed")
}
