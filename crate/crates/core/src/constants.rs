//! Physical constants and unit conversions.
//!
//! Every constant used anywhere in the toolkit lives here, quoted to full
//! precision exactly once. All *internal* rates and frequencies are angular
//! (rad/s); conversions to and from laboratory units (Hz, dBm, W) happen at
//! the I/O boundary through the helpers below and nowhere else.

use std::f64::consts::PI;

/// Magnetic flux quantum Φ₀ = h/2e (Wb). 2018 CODATA exact value.
pub const PHI0: f64 = 2.067_833_848e-15;

/// Reduced Planck constant ħ (J·s). 2018 CODATA exact value.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant k_B (J/K). 2018 CODATA exact value.
pub const KB: f64 = 1.380_649e-23;

/// Elementary charge e (C). 2018 CODATA exact value.
pub const E_CHARGE: f64 = 1.602_176_634e-19;

/// Convert an ordinary frequency in Hz to an angular frequency in rad/s.
#[inline]
pub fn hz_to_angular(f_hz: f64) -> f64 {
    2.0 * PI * f_hz
}

/// Convert an angular frequency in rad/s to an ordinary frequency in Hz.
#[inline]
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Convert a power in dBm to watts: P_W = 10^((P_dBm − 30)/10).
#[inline]
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// Convert a power in watts to dBm.
#[inline]
pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * p_w.log10() + 30.0
}

/// Convert a power ratio to decibels: 10·log₁₀(ratio).
#[inline]
pub fn ratio_to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Convert decibels to a power ratio: 10^(dB/10).
#[inline]
pub fn db_to_ratio(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flux_quantum_is_h_over_2e() {
        // Φ₀ = h/2e with h = 2πħ; all three constants are CODATA-exact, so
        // the identity must close to floating-point accuracy.
        let h = 2.0 * PI * HBAR;
        let phi0 = h / (2.0 * E_CHARGE);
        let rel = (phi0 - PHI0).abs() / PHI0;
        assert!(rel < 1e-9, "h/2e = {phi0:e} disagrees with PHI0 = {PHI0:e} (rel {rel:e})");
    }

    #[test]
    fn dbm_round_trip() {
        for p in [-140.0, -34.0, 0.0, 17.8] {
            let back = watts_to_dbm(dbm_to_watts(p));
            assert!((back - p).abs() < 1e-12, "dBm→W→dBm round trip drifted: {p} → {back}");
        }
        // -30 dBm is a microwatt by definition.
        assert!((dbm_to_watts(-30.0) - 1e-6).abs() < 1e-21);
    }

    #[test]
    fn db_ratio_round_trip() {
        assert!((db_to_ratio(3.0103) - 2.0).abs() < 1e-4, "3.0103 dB should be a factor of 2");
        assert!((ratio_to_db(100.0) - 20.0).abs() < 1e-12, "a factor of 100 is 20 dB");
    }

    #[test]
    fn angular_round_trip() {
        let f = 8.22e9;
        assert_eq!(angular_to_hz(hz_to_angular(f)), f, "Hz→rad/s→Hz must be exact for this value");
    }
}
