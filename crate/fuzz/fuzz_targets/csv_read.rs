#![no_main]

use dipsqz::output::Table;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = Table::from_csv(data) {
        let back = Table::from_csv(&t.to_csv().expect("write csv")).expect("re-read of written csv");
        assert_eq!(back.headers, t.headers);
        assert_eq!(back.rows.len(), t.rows.len());
    }
});
