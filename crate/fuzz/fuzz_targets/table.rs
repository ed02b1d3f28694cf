#![no_main]

use libfuzzer_sys::fuzz_target;
use magnls::io::{parse_table, table_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = parse_table(text) {
        assert_eq!(parse_table(&table_to_json(&t)).expect("re-emitted table parses"), t);
        let (lo, hi) = t.range();
        let _ = t.energy(0.5 * (lo + hi));
    }
});
