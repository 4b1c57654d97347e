//! Fuzz the reflection-trace CSV reader: parsing must never panic, and any
//! trace that parses must survive background normalization (or refuse with a
//! typed error). Normalization is only driven on small traces to keep the
//! per-input cost bounded.

#![no_main]

use jpa_core::estimation::normalize_trace;
use jpa_core::io::read_reflection_trace;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(trace) = read_reflection_trace(data) {
        if trace.freq_hz.len() <= 1024 {
            let _ = normalize_trace(&trace);
        }
    }
});
