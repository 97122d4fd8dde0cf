#![no_main]

use libfuzzer_sys::fuzz_target;
use mbadmm::grid;

fuzz_target!(|spec: &str| {
    if let Ok(values) = grid::parse_beta_grid(spec) {
        assert!(!values.is_empty() && values.len() <= grid::MAX_GRID_LEN);
        assert!(values.iter().all(|b| b.is_finite() && *b > 0.0));
    }
});
