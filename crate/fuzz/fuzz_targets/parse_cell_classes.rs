#![no_main]

use libfuzzer_sys::fuzz_target;
use loskit::artifacts::{parse_cell_classes, write_cell_classes};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(v) = parse_cell_classes(text, "fuzz") else { return };
    // whatever parses must survive a write/parse cycle unchanged
    let once = write_cell_classes(&v);
    let v = parse_cell_classes(&once, "fuzz").expect("written output reparses");
    assert_eq!(once, write_cell_classes(&v));
});
