//! Fuzz the device-config JSON entry point: parsing must never panic, and
//! any config that parses must either resolve into a calibrated device or
//! fail with a typed error.

#![no_main]

use jpa_core::config::DeviceConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = DeviceConfig::from_json_str(text) {
        let _ = cfg.resolve();
    }
});
