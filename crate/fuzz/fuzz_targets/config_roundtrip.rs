//! Canonical form is a fixed point: whenever hostile input happens to
//! parse, emitting and re-parsing must reproduce the same config, and the
//! emitter must be idempotent.

#![no_main]

use janus::config::{emit, parse_config};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = parse_config(text) else {
        return;
    };
    let canonical = emit(&cfg);
    let reparsed = parse_config(&canonical)
        .unwrap_or_else(|e| panic!("canonical form rejected: {e:?}\n{canonical}"));
    assert_eq!(cfg, reparsed, "canonical form drifted");
    assert_eq!(canonical, emit(&reparsed), "emit is not idempotent");
});
