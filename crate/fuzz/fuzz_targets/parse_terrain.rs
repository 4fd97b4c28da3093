#![no_main]

use libfuzzer_sys::fuzz_target;
use loskit::geo::io::{parse_terrain, write_terrain};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(v) = parse_terrain(text, "fuzz") else { return };
    // whatever parses must survive a write/parse cycle unchanged
    let once = write_terrain(&v);
    let v = parse_terrain(&once, "fuzz").expect("written output reparses");
    assert_eq!(once, write_terrain(&v));
});
