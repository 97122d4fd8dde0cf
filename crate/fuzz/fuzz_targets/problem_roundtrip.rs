#![no_main]

use libfuzzer_sys::fuzz_target;
use mbadmm::problem;

fuzz_target!(|text: &str| {
    let Ok(p) = problem::load_problem(text) else { return };
    let encoded = problem::serialize_problem(&p);
    let back = problem::load_problem(&encoded).expect("serialized problems load");
    assert_eq!(back, p);
    assert_eq!(problem::serialize_problem(&back), encoded);
});
