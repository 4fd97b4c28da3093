#![no_main]

use libfuzzer_sys::fuzz_target;
use loskit::artifacts::{parse_los_samples, write_los_samples};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(v) = parse_los_samples(text, "fuzz") else { return };
    // whatever parses must survive a write/parse cycle unchanged
    let once = write_los_samples(&v);
    let v = parse_los_samples(&once, "fuzz").expect("written output reparses");
    assert_eq!(once, write_los_samples(&v));
});
