#![no_main]

use dipsqz::tce::checkpoint::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(state) = decode(text) {
        let once = encode(&state);
        let twice = encode(&decode(&once).expect("decode of encoded state"));
        assert_eq!(once, twice);
    }
});
