#![no_main]

use dipsqz::config::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = Config::parse(text) {
        // A validated config must survive a round trip unchanged.
        let again = Config::parse(&cfg.to_toml()).expect("re-parse of rendered config");
        assert_eq!(again.to_toml(), cfg.to_toml());
    }
});
