#![no_main]

use libfuzzer_sys::fuzz_target;
use mbadmm::problem;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Loading may fail; it must not panic, and what loads must validate.
    if let Ok(p) = problem::load_problem(text) {
        let _ = problem::validate(&p);
    }
});
