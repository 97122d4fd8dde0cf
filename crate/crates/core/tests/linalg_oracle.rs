use mbadmm::linalg::{self, Cholesky, Lu, Matrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn matrix_strategy(max: usize) -> impl Strategy<Value = Matrix> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap())
    })
}

fn square_strategy(max: usize) -> impl Strategy<Value = Matrix> {
    (1..=max).prop_flat_map(|n| prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |d| Matrix::new(n, n, d).unwrap()))
}

/// Real roots of `λ³ + c2 λ² + c1 λ + c0` for a symmetric 3×3 characteristic
/// polynomial (trigonometric form).
fn symmetric_cubic_roots(m: &Matrix) -> [f64; 3] {
    let a = |i, j| m[(i, j)];
    let tr = a(0, 0) + a(1, 1) + a(2, 2);
    let minors = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0) + a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0) + a(1, 1) * a(2, 2)
        - a(1, 2) * a(2, 1);
    let det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
        + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
    // λ = t + tr/3 reduces to t³ + pt + q = 0
    let p = minors - tr * tr / 3.0;
    let q = -2.0 * tr.powi(3) / 27.0 + tr * minors / 3.0 - det;
    let r = 2.0 * (-p / 3.0).sqrt();
    let phi = (3.0 * q / (p * r)).clamp(-1.0, 1.0).acos() / 3.0;
    let mut roots = [0.0; 3];
    for (k, root) in roots.iter_mut().enumerate() {
        *root = r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + tr / 3.0;
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots
}

#[test]
fn gram_of_core_matrix_against_cubic() {
    let a = Matrix::from_rows(&[[1.0, 1.0, 1.0], [1.0, 1.0, 2.0], [1.0, 2.0, 2.0]]).unwrap();
    let g = a.gram();
    let roots = symmetric_cubic_roots(&g);
    let eig = linalg::symmetric_eigenvalues(&g).unwrap();
    for (r, e) in roots.iter().zip(&eig) {
        assert!((r - e).abs() < 1e-10 * roots[2], "{} vs {}", r, e);
    }
    assert!((linalg::lambda_min_spd(&g).unwrap() - roots[0]).abs() < 1e-10);
    assert!((linalg::two_norm(&a).unwrap() - roots[2].sqrt()).abs() < 1e-10);
}

#[test]
fn eigenvalues_of_companion_matrix() {
    // roots 1, 2, 3, 4
    let c = Matrix::from_rows(&[
        [10.0, -35.0, 50.0, -24.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    .unwrap();
    let mut re: Vec<f64> = linalg::eigenvalues(&c).unwrap().iter().map(|z| z.re).collect();
    re.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (got, want) in re.iter().zip([1.0, 2.0, 3.0, 4.0]) {
        assert!((got - want).abs() < 1e-9, "{:?}", re);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn two_norm_matches_nalgebra(m in matrix_strategy(8)) {
        let ours = linalg::two_norm(&m).unwrap();
        let theirs = to_na(&m).singular_values().max();
        prop_assert!((ours - theirs).abs() <= 1e-10 * theirs.max(1.0), "{} vs {}", ours, theirs);
    }

    #[test]
    fn two_norm_transpose_invariant(m in matrix_strategy(8)) {
        let a = linalg::two_norm(&m).unwrap();
        let b = linalg::two_norm(&m.transpose()).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn spectral_radius_matches_nalgebra(m in square_strategy(9)) {
        let ours = linalg::spectral_radius(&m).unwrap();
        let theirs = to_na(&m).complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!((ours - theirs).abs() <= 1e-8 * theirs.max(1.0), "{} vs {}", ours, theirs);
    }

    #[test]
    fn spectral_radius_below_two_norm(m in square_strategy(9)) {
        let rho = linalg::spectral_radius(&m).unwrap();
        let nrm = linalg::two_norm(&m).unwrap();
        prop_assert!(rho <= nrm * (1.0 + 1e-10) + 1e-14);
    }

    #[test]
    fn gelfand_power_agrees(m in square_strategy(6)) {
        let rho = linalg::spectral_radius(&m).unwrap();
        prop_assume!(rho > 1e-3);
        // rescale so the 64th power neither overflows nor underflows
        let unit = m.scaled(1.0 / rho);
        let p = unit.pow(64).unwrap();
        let rho64 = linalg::spectral_radius(&p).unwrap();
        prop_assume!(rho64 > 0.0);
        let est = rho * rho64.powf(1.0 / 64.0);
        prop_assert!((est - rho).abs() <= 0.02 * rho, "{} vs {}", est, rho);
    }

    #[test]
    fn symmetric_eigenvalues_match_nalgebra(m in square_strategy(9)) {
        let s = m.add(&m.transpose()).unwrap();
        let ours = linalg::symmetric_eigenvalues(&s).unwrap();
        let mut theirs: Vec<f64> = to_na(&s).symmetric_eigenvalues().iter().cloned().collect();
        theirs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!((a - b).abs() <= 1e-10 * theirs.iter().fold(1.0f64, |x, y| x.max(y.abs())));
        }
    }

    #[test]
    fn cholesky_solve_residual(m in square_strategy(8), rhs_seed in prop::collection::vec(-1.0f64..1.0, 8)) {
        let n = m.rows();
        let spd = m.gram().add(&Matrix::identity(n).scaled(0.1)).unwrap();
        let rhs = &rhs_seed[..n];
        let x = Cholesky::factor(&spd).unwrap().solve(rhs).unwrap();
        let r = linalg::sub_vec(&spd.matvec(&x).unwrap(), rhs);
        let scale = linalg::two_norm(&spd).unwrap() * linalg::norm2(&x) + linalg::norm2(rhs);
        prop_assert!(linalg::norm2(&r) <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn lu_solve_residual(m in square_strategy(8), rhs_seed in prop::collection::vec(-1.0f64..1.0, 8)) {
        let n = m.rows();
        let lu = match Lu::factor(&m) {
            Ok(lu) => lu,
            Err(_) => return Ok(()),
        };
        let rhs = &rhs_seed[..n];
        let x = lu.solve(rhs).unwrap();
        let r = linalg::sub_vec(&m.matvec(&x).unwrap(), rhs);
        let scale = linalg::two_norm(&m).unwrap() * linalg::norm2(&x) + linalg::norm2(rhs);
        prop_assert!(linalg::norm2(&r) <= 1e-10 * scale.max(1.0));
    }

    #[test]
    fn column_rank_matches_nalgebra(m in matrix_strategy(6), dup in any::<bool>()) {
        // optionally append a duplicated column to force a deficiency
        let m = if dup && m.cols() > 0 {
            let mut rows = m.to_rows();
            for r in rows.iter_mut() { let v = r[0]; r.push(v); }
            Matrix::from_rows(&rows).unwrap()
        } else { m };
        let ours = linalg::column_rank(&m, linalg::DEFAULT_RANK_TOL).unwrap();
        let sv = to_na(&m).singular_values();
        let smax = sv.max();
        let theirs = sv.iter().filter(|s| **s > 1e-8 * smax).count();
        prop_assert_eq!(ours, theirs);
    }
}
