#![no_main]

use libfuzzer_sys::fuzz_target;
use loskit::SyntheticCitySpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = SyntheticCitySpec::from_toml(text, "fuzz") {
        let _ = spec.extent();
    }
});
