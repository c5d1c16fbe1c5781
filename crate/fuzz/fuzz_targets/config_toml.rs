#![no_main]

use libfuzzer_sys::fuzz_target;
use softclamp_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = RunConfig::from_toml(text) {
        let back = RunConfig::from_toml(&c.to_toml()).expect("serialized configuration parses");
        assert_eq!(back.hash(), c.hash());
    }
});
