#![no_main]

use libfuzzer_sys::fuzz_target;
use softclamp::container;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = container::read(text) {
        let again = container::write(&c).expect("parsed container writes");
        container::read(&again).expect("written container parses");
    }
});
