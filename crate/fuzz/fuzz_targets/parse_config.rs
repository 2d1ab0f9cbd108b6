//! The parser must be total: any byte sequence either yields a config or a
//! list of positioned issues, never a panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = janus::config::parse_config(text);
    }
});
