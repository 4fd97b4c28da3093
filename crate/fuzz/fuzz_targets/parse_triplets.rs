#![no_main]

use libfuzzer_sys::fuzz_target;
use loskit::artifacts::{parse_triplets, write_triplets};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(v) = parse_triplets(text, "fuzz") else { return };
    // whatever parses must survive a write/parse cycle unchanged
    let once = write_triplets(&v);
    let v = parse_triplets(&once, "fuzz").expect("written output reparses");
    assert_eq!(once, write_triplets(&v));
});
