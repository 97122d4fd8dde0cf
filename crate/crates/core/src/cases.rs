//! Embedded divergence examples with their expected spectral radii.

use sha2::{Digest, Sha256};

use crate::linalg::Matrix;

/// Tolerance for comparing computed radii with the expected four-digit values.
pub const EXPECTED_TOL: f64 = 1e-3;

/// Core 3×3 constraint matrix shared by all three cases; columns are `A_1, A_2, A_3`.
pub const CORE_A: [[f64; 3]; 3] = [[1.0, 1.0, 1.0], [1.0, 1.0, 2.0], [1.0, 2.0, 2.0]];

/// Radius of the null-objective map on [`CORE_A`].
pub const CORE_RHO: f64 = 1.0278;

/// `σ_4` of the four-block case: objective `0.05·x_4²`.
pub const FOUR_ONE_STRONG_SIGMA: f64 = 0.1;

pub const FOUR_ONE_STRONG_BETAS: [f64; 3] = [0.01, 1.0, 100.0];

/// `σ_3` of the three-block case: objective `0.025·x_3²`.
pub const THREE_STRONG_SIGMA: f64 = 0.05;

/// `(β, expected radius)`; `None` where no value is recorded.
pub const THREE_STRONG_SWEEP: [(f64, Option<f64>); 3] = [(1.0, Some(1.0259)), (0.1, None), (0.0066, Some(0.9586))];

/// Stated guaranteed range for the three-block case, `(0, 0.05/7.5)`.
pub const THREE_STRONG_STATED_UPPER: f64 = 0.05 / 7.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    EqFour,
    FourOneStrong,
    ThreeStrongBeta,
}

impl Case {
    pub const ALL: [Case; 3] = [Case::EqFour, Case::FourOneStrong, Case::ThreeStrongBeta];

    pub fn name(&self) -> &'static str {
        match self {
            Case::EqFour => "eq-four",
            Case::FourOneStrong => "four-one-strong",
            Case::ThreeStrongBeta => "three-strong-beta",
        }
    }

    pub fn from_name(name: &str) -> Option<Case> {
        Case::ALL.into_iter().find(|c| c.name() == name)
    }
}

pub fn core_matrix() -> Matrix {
    Matrix::from_rows(&CORE_A).expect("finite literal")
}

/// Whether `computed` matches an expected four-digit value.
pub fn matches_expected(computed: f64, expected: f64) -> bool {
    (computed - expected).abs() <= EXPECTED_TOL
}

/// SHA-256 over the little-endian bytes of every embedded number, in
/// declaration order.
pub fn embedded_checksum() -> String {
    let mut h = Sha256::new();
    let mut feed = |v: f64| h.update(v.to_le_bytes());
    CORE_A.iter().flatten().for_each(|&v| feed(v));
    feed(CORE_RHO);
    feed(FOUR_ONE_STRONG_SIGMA);
    FOUR_ONE_STRONG_BETAS.iter().for_each(|&v| feed(v));
    feed(THREE_STRONG_SIGMA);
    for (beta, expected) in THREE_STRONG_SWEEP {
        feed(beta);
        feed(expected.unwrap_or(f64::NAN));
    }
    feed(THREE_STRONG_STATED_UPPER);
    h.finalize().iter().map(|b| format!("{:02x}", b)).collect()
}
