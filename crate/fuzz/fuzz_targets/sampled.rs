#![no_main]

use libfuzzer_sys::fuzz_target;
use magnls::potential::parse_sampled;

// First byte picks the component count, the rest is CSV text.
fuzz_target!(|data: &[u8]| {
    let Some((&k, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let components = 1 + (k % 2) as usize;
    if let Ok(s) = parse_sampled(text, components) {
        let (lo, hi) = (s.lower(), s.upper());
        for t in [0.0, 0.37, 1.0] {
            let x = [lo[0] + t * (hi[0] - lo[0]), lo[1] + t * (hi[1] - lo[1])];
            for c in 0..components {
                assert!(s.eval(c, x).is_some());
            }
        }
    }
});
