#![no_main]

use libfuzzer_sys::fuzz_target;
use statenet::imgpipe::DatasetManifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = DatasetManifest::decode(text) {
        if let Ok(encoded) = m.encode() {
            assert_eq!(DatasetManifest::decode(&encoded).unwrap(), m);
        }
    }
});
