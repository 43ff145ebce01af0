#![no_main]

use libfuzzer_sys::fuzz_target;
use statenet::harness::TrainingConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = TrainingConfig::parse(text) {
        assert_eq!(TrainingConfig::parse(&cfg.to_text()).unwrap().to_text(), cfg.to_text());
    }
});
