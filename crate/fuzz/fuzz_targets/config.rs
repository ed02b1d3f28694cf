#![no_main]

use libfuzzer_sys::fuzz_target;
use magnls::config::RunConfig;

// Accepted configs must re-emit to text that parses back to the same value.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = RunConfig::parse(text) {
        let again = RunConfig::parse(&c.to_toml()).expect("re-emitted config parses");
        assert_eq!(again, c);
    }
});
