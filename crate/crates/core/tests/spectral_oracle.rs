use mbadmm::cases;
use mbadmm::linalg::{self, Matrix, Vector};
use mbadmm::problem::Problem;
use mbadmm::solver::{self, SolverConfig, SolverState};
use mbadmm::spectral::{self, ExtensionForm, IterationMatrixBundle, Prediction};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEPS: usize = 50;

fn max_rel_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

/// Runs the solver `STEPS` times and the matrix map `STEPS` times from the
/// same start, returning both final state vectors.
fn both_ways(
    p: &Problem,
    bundle: &IterationMatrixBundle,
    beta: f64,
    seed: u64,
    embed: fn(&[Vector], &[f64], f64) -> Vector,
) -> (Vector, Vector) {
    let cfg = SolverConfig::new(beta);
    let mut s = SolverState::random(p, seed);
    let v0 = embed(&s.x, &s.z, beta);
    for _ in 0..STEPS {
        s = solver::step(p, &s, &cfg).unwrap();
    }
    (embed(&s.x, &s.z, beta), bundle.apply(&v0, STEPS).unwrap())
}

#[test]
fn homogeneous_map_matches_solver() {
    let a = cases::core_matrix();
    let p = spectral::homogeneous_problem(&a, &[]).unwrap();
    let bundle = spectral::build_homogeneous(&a).unwrap();
    for (beta, seed) in [(1.0, 1), (0.05, 2), (40.0, 3)] {
        let (got, want) = both_ways(&p, &bundle, beta, seed, spectral::homogeneous_state);
        let gap = max_rel_gap(&got, &want);
        assert!(gap <= 1e-8, "beta {}: gap {:e}", beta, gap);
    }
}

#[test]
fn quadratic_map_matches_solver() {
    let a = cases::core_matrix();
    let sigma = [0.0, cases::THREE_STRONG_SIGMA];
    let p = spectral::homogeneous_problem(&a, &sigma).unwrap();
    for (beta, seed) in [(1.0, 4), (0.0066, 5), (0.1, 6)] {
        let bundle = spectral::build_quadratic_diag(&a, &sigma, beta).unwrap();
        let (got, want) = both_ways(&p, &bundle, beta, seed, spectral::homogeneous_state);
        let gap = max_rel_gap(&got, &want);
        assert!(gap <= 1e-8, "beta {}: gap {:e}", beta, gap);
    }
}

#[test]
fn exact_extension_matches_solver() {
    let a = cases::core_matrix();
    for extra in [vec![0.1], vec![0.1, 2.0, 0.0]] {
        let p = spectral::block_extension_problem(&a, &extra).unwrap();
        for (beta, seed) in [(0.01, 7), (1.0, 8), (100.0, 9)] {
            let bundle = spectral::build_block_extension_with(&a, &extra, beta, ExtensionForm::Exact).unwrap();
            let (got, want) = both_ways(&p, &bundle, beta, seed, spectral::extension_state);
            let gap = max_rel_gap(&got, &want);
            assert!(gap <= 1e-8, "extra {:?} beta {}: gap {:e}", extra, beta, gap);
        }
    }
}

#[test]
fn lagged_extension_trails_multiplier_update() {
    // The lagged form subtracts x_4^k where the scheme subtracts x_4^{k+1}.
    let a = cases::core_matrix();
    let p = spectral::block_extension_problem(&a, &[0.1]).unwrap();
    let beta = 1.0;
    let lagged = spectral::build_block_extension(&a, &[0.1], beta).unwrap();
    let exact = spectral::build_block_extension_with(&a, &[0.1], beta, ExtensionForm::Exact).unwrap();
    let (solver_v, lagged_v) = both_ways(&p, &lagged, beta, 10, spectral::extension_state);
    let exact_v = exact.apply(&{
        let s = SolverState::random(&p, 10);
        spectral::extension_state(&s.x, &s.z, beta)
    }, STEPS).unwrap();
    assert!(max_rel_gap(&solver_v, &exact_v) <= 1e-8);
    assert!(max_rel_gap(&solver_v, &lagged_v) > 1e-3);
    // the core block, and hence the radius, is shared
    assert!((lagged.rho - exact.rho).abs() < 1e-12);
}

#[test]
fn orthogonal_columns_finish_in_two_sweeps() {
    let a = Matrix::identity(3);
    let p = spectral::homogeneous_problem(&a, &[]).unwrap();
    let cfg = SolverConfig::new(0.7);
    let mut s = SolverState::random(&p, 11);
    for _ in 0..2 {
        s = solver::step(&p, &s, &cfg).unwrap();
    }
    assert!(s.norm() < 1e-14, "{:?}", s);
}

#[test]
fn radius_is_continuous_in_beta() {
    let a = cases::core_matrix();
    let sigma = [0.0, cases::THREE_STRONG_SIGMA];
    for beta in [1.0, 0.1, 0.0066] {
        let mid = spectral::build_quadratic_diag(&a, &sigma, beta).unwrap().rho;
        for f in [1.0 - 1e-6, 1.0 + 1e-6] {
            let r = spectral::build_quadratic_diag(&a, &sigma, beta * f).unwrap().rho;
            assert!((r - mid).abs() <= 1e-3, "beta {}: {} vs {}", beta, r, mid);
        }
        for f in [1.0 - 1e-6, 1.0 + 1e-6] {
            let r = spectral::build_block_extension(&a, &[0.1], beta * f).unwrap().rho;
            let base = spectral::build_block_extension(&a, &[0.1], beta).unwrap().rho;
            assert!((r - base).abs() <= 1e-3);
        }
    }
}

#[test]
fn extension_never_below_core() {
    let a = cases::core_matrix();
    let core = spectral::build_homogeneous(&a).unwrap().rho;
    for sigma in [1e-3, 0.1, 1.0, 10.0] {
        for beta in [1e-3, 1e-2, 0.1, 1.0, 10.0, 1e3] {
            for extra in [vec![sigma], vec![sigma, 2.0 * sigma, 0.5 * sigma]] {
                let e = spectral::build_block_extension(&a, &extra, beta).unwrap();
                assert!(e.rho >= core - 1e-12, "sigma {} beta {}", sigma, beta);
                assert!(e.consistency_residual().unwrap() <= 1e-10);
            }
        }
    }
}

#[test]
fn corner_at_unit_damping_is_marginal() {
    let rho = linalg::spectral_radius(&spectral::extension_corner(1.0)).unwrap();
    assert!((rho - 1.0).abs() < 1e-12);
    assert_eq!(spectral::predict_rho(rho), Prediction::Marginal);
}

#[test]
fn perturbation_bound_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let (r, c) = (rng.gen_range(1..=10), rng.gen_range(1..=10));
        let a = Matrix::new(r, c, (0..r * c).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let d = Matrix::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let nd = linalg::two_norm(&d).unwrap();
        let d = d.scaled(rng.gen_range(0.0..0.999) / nd.max(1e-300));
        let check = spectral::perturbation_check(&a, &d).unwrap();
        assert!(check.holds, "lhs {} bound {}", check.lhs, check.bound);
    }
}

fn nonsingular_core() -> impl Strategy<Value = Matrix> {
    (3usize..=5)
        .prop_flat_map(|m| prop::collection::vec(-2.0f64..2.0, m * m).prop_map(move |d| Matrix::new(m, m, d).unwrap()))
        .prop_filter("well conditioned", |a| {
            let g = linalg::symmetric_eigenvalues(&a.gram()).unwrap();
            g[0] > 1e-3 * g[g.len() - 1]
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn l_times_s_is_r(a in nonsingular_core(), beta in 1e-3f64..1e2, sig in prop::collection::vec(0.0f64..2.0, 5)) {
        let m = a.rows();
        for bundle in [
            spectral::build_homogeneous(&a).unwrap(),
            spectral::build_quadratic_diag(&a, &sig[..m - 1], beta).unwrap(),
        ] {
            prop_assert!(bundle.consistency_residual().unwrap() <= 1e-10);
            prop_assert_eq!(bundle.rho, linalg::spectral_radius(&bundle.s).unwrap());
        }
    }

    #[test]
    fn random_quadratic_maps_match_solver(
        a in nonsingular_core(),
        beta in 1e-2f64..1e1,
        sig in prop::collection::vec(0.0f64..2.0, 5),
        seed in any::<u64>(),
    ) {
        let m = a.rows();
        let sigma = &sig[..m - 1];
        let p = spectral::homogeneous_problem(&a, sigma).unwrap();
        let bundle = spectral::build_quadratic_diag(&a, sigma, beta).unwrap();
        let (got, want) = both_ways(&p, &bundle, beta, seed, spectral::homogeneous_state);
        let scale = want.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        let gap = got.iter().zip(&want).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale;
        prop_assert!(gap <= 1e-8, "gap {:e}", gap);
    }

    #[test]
    fn corner_matches_quadratic_formula(sigma in 1e-6f64..1e3, beta in 1e-6f64..1e3) {
        let d = 1.0 / (1.0 + sigma / beta);
        let disc = 1.0 - 4.0 * d;
        let oracle = if disc >= 0.0 { (1.0 + disc.sqrt()) / 2.0 } else { d.sqrt() };
        let rho = linalg::spectral_radius(&spectral::extension_corner(d)).unwrap();
        prop_assert!((rho - oracle).abs() <= 1e-9, "{} vs {}", rho, oracle);
        prop_assert!(oracle <= 1.0);
    }
}
