use mbadmm::linalg::Matrix;
use mbadmm::problem::{self, Block, ConstraintSet, ObjectiveTerm, Problem, ProblemError};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, -1.0f64..1.0, Just(0.0), Just(-0.0), Just(f64::MIN_POSITIVE), Just(1e300)]
}

fn block_strategy(l: usize) -> impl Strategy<Value = Block> {
    (1usize..=4).prop_flat_map(move |n| {
        let a = prop::collection::vec(finite(), l * n).prop_map(move |d| Matrix::new(l, n, d).unwrap());
        let objective = prop_oneof![
            Just(ObjectiveTerm::Zero),
            (prop::collection::vec(-2.0f64..2.0, n * n), prop::collection::vec(finite(), n)).prop_map(move |(c, q)| {
                let c = Matrix::new(n, n, c).unwrap();
                let p = c.matmul(&c.transpose()).unwrap();
                let p = p.add(&p.transpose()).unwrap().scaled(0.5);
                ObjectiveTerm::quadratic(p, q)
            }),
            (0.0f64..100.0).prop_map(|weight| ObjectiveTerm::WeightedL1 { weight }),
        ];
        let set = prop_oneof![
            Just(ConstraintSet::Free),
            Just(ConstraintSet::Nonnegative),
            prop::collection::vec((-5.0f64..5.0, 0.0f64..5.0), n).prop_map(|bounds| {
                let (lo, hi) = bounds.iter().map(|(lo, w)| (*lo, lo + w)).unzip();
                ConstraintSet::Box { lo, hi }
            }),
        ];
        (a, objective, set).prop_map(|(a, o, s)| Block::new(a, o, s))
    })
}

fn problem_strategy() -> impl Strategy<Value = Problem> {
    (1usize..=4, 2usize..=5).prop_flat_map(|(l, m)| {
        (prop::collection::vec(block_strategy(l), m), prop::collection::vec(finite(), l))
            .prop_map(|(blocks, b)| Problem::new(blocks, b).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn serialize_then_load_is_identity(p in problem_strategy()) {
        let text = problem::serialize_problem(&p);
        let back = problem::load_problem(&text).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(problem::serialize_problem(&back), text);
    }

    #[test]
    fn objectives_are_convex(
        p in problem_strategy(),
        t in 0.0f64..1.0,
        seed in prop::collection::vec(-3.0f64..3.0, 40),
    ) {
        for (i, blk) in p.blocks().iter().enumerate() {
            let n = blk.dim();
            let x = &seed[..n];
            let y = &seed[20..20 + n];
            let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            let fx = blk.objective.value(x).unwrap();
            let fy = blk.objective.value(y).unwrap();
            let fm = blk.objective.value(&mid).unwrap();
            let chord = t * fx + (1.0 - t) * fy;
            prop_assert!(fm <= chord + 1e-9 * (1.0 + chord.abs()), "block {}: {} > {}", i + 1, fm, chord);
        }
    }

    #[test]
    fn projection_lands_in_set(p in problem_strategy(), seed in prop::collection::vec(-10.0f64..10.0, 4)) {
        for blk in p.blocks() {
            let mut x = seed[..blk.dim()].to_vec();
            blk.set.project(&mut x);
            prop_assert_eq!(blk.set.violation(&x), 0.0);
        }
    }

    #[test]
    fn loader_never_panics(text in ".{0,200}") {
        let _ = problem::load_problem(&text);
    }
}

#[test]
fn m_must_match_block_count() {
    let text = r#"{"m": 3, "b": [1], "blocks": [
        {"A": [[1]], "objective": {"type": "zero"}, "set": {"type": "free"}},
        {"A": [[1]], "objective": {"type": "zero"}, "set": {"type": "free"}}
    ]}"#;
    assert!(matches!(problem::load_problem(text), Err(ProblemError::Invalid(_))));
}

#[test]
fn unknown_fields_are_rejected_with_path() {
    let text = r#"{"m": 2, "b": [1], "blocks": [
        {"A": [[1]], "objective": {"type": "zero"}, "set": {"type": "free"}},
        {"A": [[1]], "objective": {"type": "quadratic", "P": [[1]], "q": [0], "r": 1}, "set": {"type": "free"}}
    ]}"#;
    match problem::load_problem(text) {
        Err(ProblemError::Parse { path, .. }) => assert!(path.starts_with("blocks[1].objective"), "{}", path),
        other => panic!("unexpected {:?}", other),
    }
}

#[test]
fn ragged_matrix_is_a_dimension_error() {
    let text = r#"{"m": 2, "b": [1, 2], "blocks": [
        {"A": [[1, 0], [0]], "objective": {"type": "zero"}, "set": {"type": "free"}},
        {"A": [[1], [1]], "objective": {"type": "zero"}, "set": {"type": "free"}}
    ]}"#;
    assert!(matches!(problem::load_problem(text), Err(ProblemError::Dimension { block: 1, .. })));
}
