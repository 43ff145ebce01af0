#![no_main]

use libfuzzer_sys::fuzz_target;
use statenet::imgpipe::SplitPlan;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(plan) = SplitPlan::decode(text) {
        let encoded = plan.encode();
        assert_eq!(SplitPlan::decode(&encoded).unwrap().encode(), encoded);
    }
});
