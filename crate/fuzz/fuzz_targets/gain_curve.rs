//! Fuzz the gain-curve CSV reader: parsing must never panic, and any curve
//! that parses must survive the critical-power fit (or refuse with a typed
//! error). The fit is only driven on small curves to keep the per-input cost
//! bounded.

#![no_main]

use jpa_core::estimation::fit_gain_curve;
use jpa_core::io::read_gain_curve;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(curve) = read_gain_curve(data) {
        if curve.samples.len() <= 1024 {
            let _ = fit_gain_curve(&curve);
        }
    }
});
