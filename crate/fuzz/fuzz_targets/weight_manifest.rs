#![no_main]

use libfuzzer_sys::fuzz_target;
use statenet::modelzoo::{Checkpoint, WeightManifest};

fuzz_target!(|data: &[u8]| {
    let Ok(manifest) = WeightManifest::decode(data) else {
        return;
    };
    // compare bytes, not values: NaN payloads are legal tensor contents
    let bytes = manifest.encode().expect("decoded manifest re-encodes");
    let again = WeightManifest::decode(&bytes).expect("re-encoded manifest decodes");
    assert_eq!(again.encode().unwrap(), bytes);
    let _ = Checkpoint::from_manifest(manifest);
});
