#![no_main]

use libfuzzer_sys::fuzz_target;
use statenet::harness::TrainingHistory;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(h) = TrainingHistory::from_csv(text) {
        let csv = h.to_csv();
        assert_eq!(TrainingHistory::from_csv(&csv).unwrap().to_csv(), csv);
        let _ = h.best_epoch();
        let _ = h.to_svg();
    }
});
