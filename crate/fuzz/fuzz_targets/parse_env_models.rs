#![no_main]

use libfuzzer_sys::fuzz_target;
use loskit::dist::{parse_env_models, write_env_models};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(v) = parse_env_models(text, "fuzz") else { return };
    // whatever parses must survive a write/parse cycle unchanged
    let once = write_env_models(&v);
    let v = parse_env_models(&once, "fuzz").expect("written output reparses");
    assert_eq!(once, write_env_models(&v));
});
