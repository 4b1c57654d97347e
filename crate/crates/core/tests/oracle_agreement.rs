//! End-to-end agreement between the frequency-domain solvers and the
//! time-domain oracle, driven through the full chain: device config →
//! calibrated circuit → flux bias → pump power → parametric rate →
//! operating point. Any unit slip between modules (Hz vs rad/s, amplitude
//! vs power, attenuation plane) shows up here as a gain mismatch.

use jpa_core::amplifier::{epsilon_for_gain, parametric_rate, signal_idler_gain, linear_s11,
    PumpOperatingPoint};
use jpa_core::config::{DeviceConfig, ResolvedDevice};
use jpa_core::constants::{db_to_ratio, dbm_to_watts, ratio_to_db, HBAR};
use jpa_core::oracle::{measure_gain, DriveSchedule};
use jpa_core::spectrum::flux_slope;
use jpa_core::squid::{pump_flux_amplitude, pump_power_for_flux};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DEVICE_JSON: &str = r#"{
  "squid": {"i_c_junction_a": 1.6e-6, "mutual_inductance_h": 5e-12},
  "squid_resonator": {"l_geo_h": 8.6e-9, "omega_b_zero_flux_hz": 6.2e9},
  "cavity": {"omega_dressed_zero_flux_hz": 8.22e9, "kappa_int_hz": 4.2e5, "kappa_ext_hz": 1.1e6},
  "coupling": {"pull_target_hz": 9.0e7},
  "pump": {"attenuation_db": 20.0},
  "kerr": {"kerr_cav_hz": -7.0}
}"#;

fn device() -> ResolvedDevice {
    DeviceConfig::from_json_str(DEVICE_JSON).unwrap().resolve().unwrap()
}

/// A −135 dBm probe tone at the mode frequency, as a photon-flux amplitude.
fn probe(omega: f64) -> Complex64 {
    Complex64::new((dbm_to_watts(-135.0) / (HBAR * omega)).sqrt(), 0.0)
}

#[test]
fn seeded_below_threshold_draws_agree_with_the_oracle() {
    let dev = device();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for draw in 0..10 {
        let phi_dc = rng.gen_range(0.25..0.35);
        let g_db = rng.gen_range(8.0..26.0);
        let mode = dev.mode_at(phi_dc).unwrap();
        let delta_s = rng.gen_range(-0.5..0.5) * mode.kappa_tot();

        // Chain: required ε → flux swing → pump power → realized ε.
        let eps_target = epsilon_for_gain(&mode, db_to_ratio(g_db)).unwrap();
        let slope = flux_slope(&dev.circuit, phi_dc).unwrap();
        let phi_ac = 2.0 * eps_target / slope.abs();
        let pump_dbm = pump_power_for_flux(&dev.circuit.squid, phi_ac);
        let eps = parametric_rate(
            &dev.circuit,
            phi_dc,
            pump_flux_amplitude(&dev.circuit.squid, pump_dbm),
        )
        .unwrap();
        assert!(
            (eps / eps_target - 1.0).abs() < 1e-9,
            "draw {draw}: the power→flux→rate chain must invert exactly, \
             {eps} vs {eps_target} rad/s"
        );

        let op = PumpOperatingPoint::new(mode, eps, 0.0, 0.0).unwrap();
        let static_g = signal_idler_gain(&op, delta_s).unwrap().g_s;
        assert!(
            ratio_to_db(static_g) < 30.0,
            "draws are chosen below 30 dB where the linear model is trustworthy"
        );

        let d = DriveSchedule::new(mode, probe(mode.omega_bare), delta_s, eps, 0.0, 0.0, 1e-6)
            .unwrap();
        let oracle_g = measure_gain(&d).unwrap();
        assert!(
            (oracle_g / static_g - 1.0).abs() < 0.01,
            "draw {draw} (φ = {phi_dc:.4}, {g_db:.1} dB set point, δ/κ = {:.3}): \
             oracle {:.4} dB vs static {:.4} dB",
            delta_s / mode.kappa_tot(),
            ratio_to_db(oracle_g),
            ratio_to_db(static_g)
        );
    }
}

#[test]
fn pump_off_reflection_agrees_with_the_oracle() {
    let dev = device();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let phi_dc = rng.gen_range(0.0..0.4);
        let mode = dev.mode_at(phi_dc).unwrap();
        let delta_s = rng.gen_range(-2.0..2.0) * mode.kappa_tot();
        let d = DriveSchedule::new(mode, probe(mode.omega_bare), delta_s, 0.0, 0.0, 0.0, 1e-6)
            .unwrap();
        let oracle_g = measure_gain(&d).unwrap();
        let s11 = linear_s11(&mode, mode.omega_bare + delta_s).norm_sqr();
        assert!(
            (oracle_g - s11).abs() < 1e-3 * s11.max(1e-2),
            "pump-off gain must be the linear reflection: {oracle_g} vs {s11} at δ/κ = {}",
            delta_s / mode.kappa_tot()
        );
    }
}
