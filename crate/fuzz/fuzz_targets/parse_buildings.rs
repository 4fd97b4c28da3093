#![no_main]

use libfuzzer_sys::fuzz_target;
use loskit::geo::io::{parse_buildings, write_buildings};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(v) = parse_buildings(text, "fuzz") else { return };
    // whatever parses must survive a write/parse cycle unchanged
    let once = write_buildings(&v);
    let v = parse_buildings(&once, "fuzz").expect("written output reparses");
    assert_eq!(once, write_buildings(&v));
});
