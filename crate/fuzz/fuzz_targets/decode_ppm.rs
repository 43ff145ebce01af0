#![no_main]

use libfuzzer_sys::fuzz_target;
use statenet::imgpipe::{decode_ppm, encode_ppm};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_ppm(data) {
        let bytes = encode_ppm(&img).expect("decoded image re-encodes");
        assert_eq!(decode_ppm(&bytes).expect("re-encoded image decodes"), img);
    }
});
