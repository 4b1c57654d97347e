//! JSON device description and its resolution into a calibrated circuit.
//!
//! A device file declares what a cold characterization actually pins down —
//! junction current, mutual, geometric inductance, anchor frequencies,
//! linewidths — and leaves the derived quantities (shunt capacitance, bare
//! cavity frequency, coupling rate, cavity Kerr) to be solved at load time.
//! Two of the knobs accept either a direct value or a measurable target:
//!
//! * `coupling`: give `g_hz` directly, or `pull_target_hz` (the total
//!   dressed-cavity pull from zero flux to the validity-band edge) and let
//!   the loader bisect g.
//! * `kerr`: give `kerr_cav_hz` directly (≤ 0), or `p1db_target_dbm` (the
//!   measured 1 dB compression input power at `p1db_gain_db` small-signal
//!   gain and flux `p1db_phi_dc`) and let the loader solve for the Kerr
//!   coefficient that reproduces it.
//!
//! All calibration decisions are echoed back in a serializable
//! [`DeviceEcho`] so every downstream artifact can carry the numbers it was
//! produced with. Unknown JSON keys are rejected: a typo in a field name is
//! a configuration error, not a silently ignored hint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amplifier::{calibrate_kerr, epsilon_for_gain, AmplifierError, PumpOperatingPoint};
use crate::constants::{angular_to_hz, hz_to_angular};
use crate::spectrum::{
    calibrate_circuit, cavity_dressed_frequency, CalibrationReport, CalibrationTargets,
    CavityMode, CoupledCircuit, SpectrumError, SquidResonator,
};
use crate::squid::{SquidError, SquidParams};

/// Errors from parsing or resolving a device description.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// The JSON failed to deserialize (carries serde's line/column).
    #[error("device config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    /// The JSON parsed but the fields are inconsistent.
    #[error("device config validation: {0}")]
    Validation(String),
    /// SQUID parameter construction failed.
    #[error(transparent)]
    Squid(#[from] SquidError),
    /// Circuit calibration failed.
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    /// Kerr calibration failed.
    #[error(transparent)]
    Amplifier(#[from] AmplifierError),
}

/// SQUID section: the junction and its flux line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquidSection {
    /// Junction critical current I_c (A).
    pub i_c_junction_a: f64,
    /// Flux-line mutual inductance M (H).
    pub mutual_inductance_h: f64,
    /// Validity cutoff on |cos(πφ)|; defaults to the standard floor.
    #[serde(default)]
    pub cos_floor: Option<f64>,
    /// Flux-line impedance (Ω); defaults to 50.
    #[serde(default)]
    pub line_impedance_ohm: Option<f64>,
}

/// SQUID-resonator section: the lumped branch the SQUID terminates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquidResonatorSection {
    /// Geometric (flux-independent) inductance (H).
    pub l_geo_h: f64,
    /// Bare resonator frequency at zero flux, ω_b(0)/2π (Hz); fixes C_b.
    pub omega_b_zero_flux_hz: f64,
}

/// Cavity section: the dressed anchor frequency and the linewidths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    /// Dressed cavity frequency at zero flux (Hz); fixes the bare ω_a.
    pub omega_dressed_zero_flux_hz: f64,
    /// Internal loss rate κ_int/2π (Hz).
    pub kappa_int_hz: f64,
    /// External coupling rate κ_ext/2π (Hz).
    pub kappa_ext_hz: f64,
}

/// Coupling section: exactly one of the two fields must be given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    /// Beam-splitter coupling g/2π (Hz), when known directly.
    #[serde(default)]
    pub g_hz: Option<f64>,
    /// Total dressed-cavity pull to the band edge (Hz), when g is to be
    /// solved from the measured tuning range.
    #[serde(default)]
    pub pull_target_hz: Option<f64>,
}

/// Pump section: the flux-line drive chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PumpSection {
    /// Attenuation between the pump reference plane and the SQUID loop (dB).
    pub attenuation_db: f64,
}

impl Default for PumpSection {
    fn default() -> Self {
        Self { attenuation_db: 0.0 }
    }
}

/// Kerr section: exactly one of `kerr_cav_hz` / `p1db_target_dbm` must be
/// given; the `p1db_*` companions are only meaningful with the latter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KerrSection {
    /// Cavity self-Kerr K/2π (Hz, ≤ 0), when known directly.
    #[serde(default)]
    pub kerr_cav_hz: Option<f64>,
    /// Measured 1 dB compression input power (dBm) to solve K against.
    #[serde(default)]
    pub p1db_target_dbm: Option<f64>,
    /// Small-signal gain (dB) the compression point was measured at;
    /// defaults to 20.
    #[serde(default)]
    pub p1db_gain_db: Option<f64>,
    /// Flux bias (Φ₀) the compression point was measured at; defaults to 0.3.
    #[serde(default)]
    pub p1db_phi_dc: Option<f64>,
}

/// Default small-signal gain for the Kerr compression target (dB).
const DEFAULT_P1DB_GAIN_DB: f64 = 20.0;
/// Default flux bias for the Kerr compression target (Φ₀).
const DEFAULT_P1DB_PHI_DC: f64 = 0.3;

/// The on-disk device description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub squid: SquidSection,
    pub squid_resonator: SquidResonatorSection,
    pub cavity: CavitySection,
    pub coupling: CouplingSection,
    #[serde(default)]
    pub pump: PumpSection,
    pub kerr: KerrSection,
}

/// Calibration provenance echoed into every artifact produced from a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEcho {
    /// Circuit calibration result (C_b, bare ω_a, g, dressed anchor, pull,
    /// hybridization).
    pub calibration: CalibrationReport,
    /// Resolved cavity Kerr K/2π (Hz, ≤ 0).
    pub kerr_cav_hz: f64,
    /// True when the Kerr was solved from a compression target rather than
    /// taken verbatim from the config.
    pub kerr_calibrated: bool,
}

/// A device config resolved into a working model.
#[derive(Debug, Clone)]
pub struct ResolvedDevice {
    /// The calibrated coupled circuit.
    pub circuit: CoupledCircuit,
    /// Cavity self-Kerr K (rad/s, ≤ 0).
    pub kerr_cav: f64,
    /// Serializable provenance for output headers.
    pub echo: DeviceEcho,
}

impl ResolvedDevice {
    /// The dressed cavity as a single-mode resonance at dc flux `phi_dc`,
    /// carrying the configured linewidths.
    pub fn mode_at(&self, phi_dc: f64) -> Result<CavityMode, SpectrumError> {
        let omega = cavity_dressed_frequency(&self.circuit, phi_dc)?;
        CavityMode::new(omega, self.circuit.cavity.kappa_int, self.circuit.cavity.kappa_ext)
    }
}

impl DeviceConfig {
    /// Parse a device description from JSON text.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Resolve the description into a calibrated circuit and Kerr
    /// coefficient, echoing every solved quantity.
    pub fn resolve(&self) -> Result<ResolvedDevice, ConfigError> {
        let squid = SquidParams::with_options(
            self.squid.i_c_junction_a,
            self.squid.mutual_inductance_h,
            self.squid.cos_floor.unwrap_or(SquidParams::DEFAULT_COS_FLOOR),
            self.squid.line_impedance_ohm.unwrap_or(50.0),
            self.pump.attenuation_db,
        )?;
        let kappa_int = hz_to_angular(self.cavity.kappa_int_hz);
        let kappa_ext = hz_to_angular(self.cavity.kappa_ext_hz);

        let (circuit, calibration) = match (self.coupling.g_hz, self.coupling.pull_target_hz) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Validation(
                    "coupling: give either g_hz or pull_target_hz, not both".into(),
                ))
            }
            (None, None) => {
                return Err(ConfigError::Validation(
                    "coupling: one of g_hz or pull_target_hz is required".into(),
                ))
            }
            (None, Some(pull_hz)) => calibrate_circuit(
                CalibrationTargets {
                    omega_b0: hz_to_angular(self.squid_resonator.omega_b_zero_flux_hz),
                    l_geo: self.squid_resonator.l_geo_h,
                    omega_dressed_phi0: hz_to_angular(self.cavity.omega_dressed_zero_flux_hz),
                    pull: hz_to_angular(pull_hz),
                },
                squid,
                kappa_int,
                kappa_ext,
            )?,
            (Some(g_hz), None) => {
                self.build_with_explicit_g(squid, kappa_int, kappa_ext, hz_to_angular(g_hz))?
            }
        };

        let (kerr_cav, kerr_calibrated) = self.resolve_kerr(&circuit)?;
        let echo = DeviceEcho {
            calibration,
            kerr_cav_hz: angular_to_hz(kerr_cav),
            kerr_calibrated,
        };
        Ok(ResolvedDevice { circuit, kerr_cav, echo })
    }

    /// Explicit-g construction: the same closed forms the pull calibration
    /// uses per trial g, without the bisection.
    fn build_with_explicit_g(
        &self,
        squid: SquidParams,
        kappa_int: f64,
        kappa_ext: f64,
        g: f64,
    ) -> Result<(CoupledCircuit, CalibrationReport), ConfigError> {
        let omega_b0 = hz_to_angular(self.squid_resonator.omega_b_zero_flux_hz);
        let t = hz_to_angular(self.cavity.omega_dressed_zero_flux_hz);
        if t <= omega_b0 {
            return Err(ConfigError::Validation(format!(
                "the dressed cavity anchor ({} Hz) must sit above the SQUID mode ({} Hz) \
                 for the upper branch to be cavity-like",
                self.cavity.omega_dressed_zero_flux_hz, self.squid_resonator.omega_b_zero_flux_hz
            )));
        }
        let l_s0 = crate::squid::squid_inductance(&squid, 0.0)?;
        // C_b from the zero-flux anchor: ω_b(0)² = 1/((L_geo + L_S(0))·C_b).
        let c_b = 1.0 / (omega_b0.powi(2) * (self.squid_resonator.l_geo_h + l_s0));
        let squid_res = SquidResonator::new(self.squid_resonator.l_geo_h, c_b)?;
        // Pinning the dressed frequency at φ = 0 to T makes T an eigenvalue
        // of the 2×2 problem: (ω_a − T)(ω_b0 − T) = g².
        let omega_a = t + g * g / (omega_b0 - t);
        let circuit = CoupledCircuit::new(
            CavityMode::new(omega_a, kappa_int, kappa_ext)?,
            squid_res,
            squid,
            g,
        )?;
        let boundary = circuit.squid.cutoff_boundary();
        let report = CalibrationReport {
            c_b,
            omega_a_hz: angular_to_hz(omega_a),
            g_hz: angular_to_hz(g),
            dressed_phi0_hz: angular_to_hz(cavity_dressed_frequency(&circuit, 0.0)?),
            achieved_pull_hz: angular_to_hz(
                cavity_dressed_frequency(&circuit, 0.0)?
                    - cavity_dressed_frequency(&circuit, boundary)?,
            ),
            hybridization_ratio: circuit.hybridization_ratio(),
        };
        Ok((circuit, report))
    }

    /// Resolve the cavity Kerr: verbatim, or solved so the model reproduces
    /// a measured compression point.
    fn resolve_kerr(&self, circuit: &CoupledCircuit) -> Result<(f64, bool), ConfigError> {
        match (self.kerr.kerr_cav_hz, self.kerr.p1db_target_dbm) {
            (Some(_), Some(_)) => Err(ConfigError::Validation(
                "kerr: give either kerr_cav_hz or p1db_target_dbm, not both".into(),
            )),
            (None, None) => Err(ConfigError::Validation(
                "kerr: one of kerr_cav_hz or p1db_target_dbm is required".into(),
            )),
            (Some(k_hz), None) => {
                if self.kerr.p1db_gain_db.is_some() || self.kerr.p1db_phi_dc.is_some() {
                    return Err(ConfigError::Validation(
                        "kerr: p1db_gain_db/p1db_phi_dc only apply with p1db_target_dbm".into(),
                    ));
                }
                if !(k_hz.is_finite() && k_hz <= 0.0) {
                    return Err(ConfigError::Validation(format!(
                        "kerr: the cavity Kerr must be ≤ 0 (softening), got {k_hz} Hz"
                    )));
                }
                Ok((hz_to_angular(k_hz), false))
            }
            (None, Some(p1db_dbm)) => {
                let gain_db = self.kerr.p1db_gain_db.unwrap_or(DEFAULT_P1DB_GAIN_DB);
                let phi_dc = self.kerr.p1db_phi_dc.unwrap_or(DEFAULT_P1DB_PHI_DC);
                let omega = cavity_dressed_frequency(circuit, phi_dc)?;
                let mode =
                    CavityMode::new(omega, circuit.cavity.kappa_int, circuit.cavity.kappa_ext)?;
                let epsilon = epsilon_for_gain(&mode, 10f64.powf(gain_db / 10.0))?;
                let op = PumpOperatingPoint::new(mode, epsilon, 0.0, 0.0)?;
                Ok((calibrate_kerr(&op, p1db_dbm)?, true))
            }
        }
    }
}
