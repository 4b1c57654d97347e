//! Flux-dependent SQUID inductance, flux-drive construction, and quench
//! detection.
//!
//! A symmetric two-junction SQUID threaded by an external flux Φ behaves as a
//! single flux-tunable inductance
//!
//! ```text
//!     L_S(Φ) = Φ₀ / (2π · 2 I_c · |cos(π Φ/Φ₀)|)
//! ```
//!
//! where `I_c` is the critical current of one junction. Junction asymmetry
//! and loop self-inductance are neglected: a single critical current and the
//! bare cosine modulation reproduce the ~0.1 nH zero-flux inductance of a
//! 1.6 µA junction pair and its divergence toward half-integer flux.
//!
//! The external flux is driven through a flux line with mutual inductance `M`
//! to the loop:
//!
//! ```text
//!     Φ_ext(t) = Φ_dc + Φ_ac · cos(ω_p t),
//!     Φ_dc = M · I_dc,            Φ_ac = M · √(2 P_W / Z₀) · 10^(−A/20),
//! ```
//!
//! with `P_W` the pump power referenced at the flux-line input, `Z₀` the line
//! impedance, and `A` the configured line attenuation in dB. The model keeps
//! the reference plane explicit because pump powers quoted for a cryostat
//! drive chain are meaningless without one.
//!
//! Near half-integer flux the inductance diverges and the SQUID is easily
//! driven normal ("quenched") by any appreciable pump swing. Both hazards are
//! modeled by a validity band: fluxes with `|cos(πΦ/Φ₀)| < cos_floor` are
//! rejected, and a pump drive whose flux excursion enters that band is
//! flagged as quenching.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{dbm_to_watts, PHI0};

/// Errors from the SQUID model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SquidError {
    /// The requested flux sits inside the near-half-flux cutoff band where
    /// the modeled inductance diverges and the device is quench-prone.
    #[error(
        "flux {phi} Phi0 is inside the near-half-flux cutoff band: \
         |cos(pi*phi)| = {cos_mag:.4e} < cos_floor = {cos_floor:.4e}"
    )]
    NearHalfFluxQuantum {
        /// Requested dc flux in units of Φ₀.
        phi: f64,
        /// |cos(πφ)| at the requested flux.
        cos_mag: f64,
        /// Configured validity cutoff.
        cos_floor: f64,
    },
    /// Parameter validation failed at construction.
    #[error("invalid SQUID parameters: {0}")]
    InvalidParams(String),
}

/// Junction and flux-line parameters of the SQUID.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquidParams {
    /// Critical current of a single junction (A).
    pub i_c_junction: f64,
    /// Mutual inductance between the flux line and the SQUID loop (H).
    pub mutual_inductance: f64,
    /// Validity cutoff: fluxes with |cos(πφ)| below this are rejected.
    /// Dimensionless, in (0, 1).
    pub cos_floor: f64,
    /// Flux-line characteristic impedance (Ω).
    pub line_impedance: f64,
    /// Attenuation between the flux-line reference plane and the loop (dB).
    pub line_attenuation_db: f64,
}

impl SquidParams {
    /// Default validity cutoff. With a 1.6 µA junction this caps the modeled
    /// inductance at 0.1029 nH / 0.086 ≈ 1.20 nH, i.e. a maximal swing of
    /// ~1.1 nH above the zero-flux baseline.
    pub const DEFAULT_COS_FLOOR: f64 = 0.086;

    /// Construct with the default cutoff, a 50 Ω line, and no attenuation.
    pub fn new(i_c_junction: f64, mutual_inductance: f64) -> Result<Self, SquidError> {
        Self::with_options(
            i_c_junction,
            mutual_inductance,
            Self::DEFAULT_COS_FLOOR,
            50.0,
            0.0,
        )
    }

    /// Construct with every knob explicit.
    pub fn with_options(
        i_c_junction: f64,
        mutual_inductance: f64,
        cos_floor: f64,
        line_impedance: f64,
        line_attenuation_db: f64,
    ) -> Result<Self, SquidError> {
        if !(i_c_junction.is_finite() && i_c_junction > 0.0) {
            return Err(SquidError::InvalidParams(format!(
                "junction critical current must be positive and finite, got {i_c_junction}"
            )));
        }
        if !(mutual_inductance.is_finite() && mutual_inductance > 0.0) {
            return Err(SquidError::InvalidParams(format!(
                "mutual inductance must be positive and finite, got {mutual_inductance}"
            )));
        }
        if !(cos_floor.is_finite() && cos_floor > 0.0 && cos_floor < 1.0) {
            return Err(SquidError::InvalidParams(format!(
                "cos_floor must lie strictly inside (0, 1), got {cos_floor}"
            )));
        }
        if !(line_impedance.is_finite() && line_impedance > 0.0) {
            return Err(SquidError::InvalidParams(format!(
                "line impedance must be positive and finite, got {line_impedance}"
            )));
        }
        if !line_attenuation_db.is_finite() {
            return Err(SquidError::InvalidParams(format!(
                "line attenuation must be finite, got {line_attenuation_db}"
            )));
        }
        Ok(Self {
            i_c_junction,
            mutual_inductance,
            cos_floor,
            line_impedance,
            line_attenuation_db,
        })
    }

    /// Largest |φ| (mod 1, in Φ₀) for which the inductance model is valid:
    /// the edge of the cutoff band, `acos(cos_floor)/π`, nudged inward by one
    /// part in 10¹² so that the boundary itself always passes the precondition
    /// despite rounding in `acos`.
    pub fn cutoff_boundary(&self) -> f64 {
        (self.cos_floor.acos() / std::f64::consts::PI) * (1.0 - 1e-12)
    }
}

/// A dc + single-tone ac flux drive, Φ_ext(t) = Φ_dc + Φ_ac·cos(ω_p t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxDrive {
    /// dc flux bias in units of Φ₀.
    pub phi_dc: f64,
    /// ac flux amplitude in units of Φ₀ (≥ 0).
    pub phi_ac: f64,
    /// Pump angular frequency (rad/s, ≥ 0).
    pub omega_p: f64,
}

impl FluxDrive {
    /// Construct a drive, validating sign conventions.
    pub fn new(phi_dc: f64, phi_ac: f64, omega_p: f64) -> Result<Self, SquidError> {
        if !(phi_ac.is_finite() && phi_ac >= 0.0) {
            return Err(SquidError::InvalidParams(format!(
                "ac flux amplitude must be ≥ 0 and finite, got {phi_ac}"
            )));
        }
        if !(omega_p.is_finite() && omega_p >= 0.0) {
            return Err(SquidError::InvalidParams(format!(
                "pump frequency must be ≥ 0 and finite, got {omega_p}"
            )));
        }
        if !phi_dc.is_finite() {
            return Err(SquidError::InvalidParams(format!(
                "dc flux must be finite, got {phi_dc}"
            )));
        }
        Ok(Self { phi_dc, phi_ac, omega_p })
    }
}

/// Outcome of the quench test for a flux drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuenchFlag {
    /// The pump-cycle flux excursion stays outside the cutoff band.
    Safe,
    /// The excursion enters the near-half-flux band at some pump phase.
    Quenched,
}

/// Reduce a flux to its principal branch φ ∈ [−0.5, 0.5].
///
/// `round` ties away from zero, so the reduction commutes with sign flips and
/// integer shifts exactly; periodicity and evenness of everything downstream
/// hold to the last bit rather than to trig-argument rounding.
#[inline]
fn reduce_flux(phi: f64) -> f64 {
    phi - phi.round()
}

/// |cos(πφ)| evaluated on the principal branch (exactly 1-periodic and even).
#[inline]
pub(crate) fn cos_magnitude(phi: f64) -> f64 {
    (std::f64::consts::PI * reduce_flux(phi)).cos().abs()
}

/// Flux-tunable SQUID inductance L_S(Φ) = Φ₀/(2π·2I_c·|cos(πΦ/Φ₀)|) in henry.
///
/// Errors with [`SquidError::NearHalfFluxQuantum`] when the flux sits inside
/// the configured cutoff band, where the model diverges.
pub fn squid_inductance(p: &SquidParams, phi: f64) -> Result<f64, SquidError> {
    let c = cos_magnitude(phi);
    if c < p.cos_floor {
        return Err(SquidError::NearHalfFluxQuantum {
            phi,
            cos_mag: c,
            cos_floor: p.cos_floor,
        });
    }
    Ok(PHI0 / (2.0 * std::f64::consts::PI * 2.0 * p.i_c_junction * c))
}

/// dc flux (in Φ₀) produced by a bias current through the flux line:
/// Φ_dc = M·I_dc/Φ₀. Linear, zero at zero, sign-symmetric.
pub fn flux_from_bias_current(p: &SquidParams, i_dc: f64) -> f64 {
    p.mutual_inductance * i_dc / PHI0
}

/// ac flux amplitude (in Φ₀) delivered by a pump of the given power (dBm,
/// referenced at the flux-line input).
///
/// The current amplitude on a matched line of impedance Z₀ carrying power P
/// is I = √(2P/Z₀); the line attenuation scales the delivered amplitude by
/// 10^(−A/20). Hence Φ_ac ∝ 10^(P_dBm/20): +6.0206 dB of pump power doubles
/// the flux amplitude.
pub fn pump_flux_amplitude(p: &SquidParams, pump_power_dbm: f64) -> f64 {
    let p_w = dbm_to_watts(pump_power_dbm);
    let i_amp = (2.0 * p_w / p.line_impedance).sqrt();
    let att = 10f64.powf(-p.line_attenuation_db / 20.0);
    p.mutual_inductance * i_amp * att / PHI0
}

/// Pump power (dBm, at the flux-line input) that delivers a given ac flux
/// amplitude — the exact inverse of [`pump_flux_amplitude`].
pub fn pump_power_for_flux(p: &SquidParams, phi_ac: f64) -> f64 {
    let att = 10f64.powf(-p.line_attenuation_db / 20.0);
    let i_amp = phi_ac * PHI0 / (p.mutual_inductance * att);
    crate::constants::watts_to_dbm(i_amp * i_amp * p.line_impedance / 2.0)
}

/// Quench test: does the pump-cycle flux excursion [φ_dc − φ_ac, φ_dc + φ_ac]
/// enter the near-half-flux band |cos(πφ)| < cos_floor at any pump phase?
///
/// |cos(πφ)| attains local minima only at half-integer flux, so over the
/// excursion interval the minimum is zero if the interval contains a
/// half-integer and is attained at an endpoint otherwise. This makes the
/// test analytic: no scan over pump phase is needed.
pub fn quench_check(p: &SquidParams, d: &FluxDrive) -> QuenchFlag {
    let lo = d.phi_dc - d.phi_ac;
    let hi = d.phi_dc + d.phi_ac;
    // Smallest half-integer ≥ lo is ceil(lo − 1/2) + 1/2.
    let first_half_integer = (lo - 0.5).ceil() + 0.5;
    let min_cos = if first_half_integer <= hi {
        0.0 // excursion crosses half-integer flux: |cos| reaches 0
    } else {
        cos_magnitude(lo).min(cos_magnitude(hi))
    };
    if min_cos < p.cos_floor {
        QuenchFlag::Quenched
    } else {
        QuenchFlag::Safe
    }
}
