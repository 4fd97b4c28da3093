#![no_main]

use libfuzzer_sys::fuzz_target;
use loskit::artifacts::{parse_fits, write_fits};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(v) = parse_fits(text, "fuzz") else { return };
    // whatever parses must survive a write/parse cycle unchanged
    let once = write_fits(&v);
    let v = parse_fits(&once, "fuzz").expect("written output reparses");
    assert_eq!(once, write_fits(&v));
});
