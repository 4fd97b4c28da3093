#![no_main]

use libfuzzer_sys::fuzz_target;
use loskit::geo::io::{parse_streets, write_streets};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(v) = parse_streets(text, "fuzz") else { return };
    // whatever parses must survive a write/parse cycle unchanged
    let once = write_streets(&v);
    let v = parse_streets(&once, "fuzz").expect("written output reparses");
    assert_eq!(once, write_streets(&v));
});
