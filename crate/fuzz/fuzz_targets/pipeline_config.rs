#![no_main]

use libfuzzer_sys::fuzz_target;
use loskit::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(v) = PipelineConfig::from_toml(text, "fuzz") else { return };
    // whatever parses must survive a write/parse cycle unchanged
    let once = v.to_toml();
    let v = PipelineConfig::from_toml(&once, "fuzz").expect("written output reparses");
    assert_eq!(once, v.to_toml());
});
