#![no_main]

use libfuzzer_sys::fuzz_target;
use softclamp::dissipation::{fit_scaling, parse_scaling_table, write_scaling_table};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(points) = parse_scaling_table(text) {
        let back = parse_scaling_table(&write_scaling_table(&points)).expect("written table parses");
        assert_eq!(back.len(), points.len());
        let _ = fit_scaling(&points);
    }
});
