#![no_main]

use libfuzzer_sys::fuzz_target;
use statenet::harness::{format_misclassified, report_misclassified, EvaluationReport};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = EvaluationReport::decode(text) {
        let encoded = report.encode().expect("decoded report re-encodes");
        assert_eq!(EvaluationReport::decode(&encoded).unwrap().encode().unwrap(), encoded);
        let _ = report.accuracy();
        let _ = format_misclassified(&report_misclassified(&report, 5));
    }
});
