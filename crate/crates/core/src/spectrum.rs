//! Lumped two-mode circuit spectrum: SQUID-resonator frequency versus flux,
//! dressed cavity frequency, flux slope, and Kerr budget.
//!
//! The device is modeled as two coupled harmonic modes:
//!
//!  * a 3D cavity mode `a` at bare frequency ω_a with external/internal
//!    linewidths κ_ext, κ_int, and
//!  * a lumped SQUID resonator `b` at ω_b(Φ) = 1/√((L_geo + L_S(Φ))·C_b),
//!    whose frequency tunes with flux through the SQUID inductance.
//!
//! Under the rotating-wave (beam-splitter) coupling g the normal-mode
//! frequencies are the 2×2 eigenvalues
//!
//! ```text
//!     ω_± = (ω_a + ω_b)/2 ± √(Δ_ab²/4 + g²),     Δ_ab = ω_a − ω_b,
//!     tan 2θ = 2g/Δ_ab                            (mixing angle),
//! ```
//!
//! and the *cavity-like* branch (the one adiabatically connected to ω_a,
//! selected by the sign of Δ_ab rather than by frequency ordering, so branch
//! tracking survives avoided crossings) is what a reflection measurement off
//! the cavity port sees. Tuning the SQUID drags this dressed frequency: its
//! flux slope is the knob that converts an ac flux drive into a parametric
//! pump.
//!
//! The SQUID resonator inherits a negative Kerr anharmonicity from the
//! junction nonlinearity. With inductive participation p = L_S/(L_S + L_geo),
//!
//! ```text
//!     K_b = −p³ e²/(2ħ C_b)        (SQUID-mode self-Kerr; p → 1 recovers
//!                                   the transmon charging-energy limit),
//!     K_cav = K_b · sin⁴θ          (diluted into the cavity by hybridization).
//! ```
//!
//! Calibration is a documented routine, not hard-coded numbers: given the
//! zero-flux SQUID-mode frequency (fixes C_b for a given L_geo), the target
//! dressed cavity frequency at φ = 0 (fixes the bare ω_a in closed form), and
//! the target total flux pull from φ = 0 to the validity-band edge, the
//! coupling g is solved by bisection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{angular_to_hz, E_CHARGE, HBAR};
use crate::squid::{squid_inductance, SquidError, SquidParams};

/// Errors from the circuit-spectrum model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    /// Propagated from the SQUID inductance validity band.
    #[error(transparent)]
    Squid(#[from] SquidError),
    /// The two bare modes become degenerate (Δ_ab changes sign or vanishes)
    /// somewhere in the configured flux range, so the cavity-like branch is
    /// ill-defined there.
    #[error(
        "bare modes become degenerate over the flux range: Δ_ab/2π = {delta_hz:.3e} Hz at φ = {phi} \
         (cavity-branch tracking requires a non-vanishing detuning of fixed sign)"
    )]
    DispersiveViolation { phi: f64, delta_hz: f64 },
    /// Parameter validation failed at construction.
    #[error("invalid circuit parameters: {0}")]
    InvalidParams(String),
    /// A calibration target cannot be met inside the search bracket.
    #[error("calibration target unreachable: {0}")]
    TargetUnreachable(String),
}

/// A single cavity mode: bare frequency and its two loss channels.
///
/// All three rates are angular (rad/s). `kappa_int = 0` is accepted so the
/// lossless limit — the regime where the gain formulas close algebraically —
/// can be represented directly; `kappa_ext` must be positive for the port to
/// exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityMode {
    /// Mode angular frequency (rad/s). For an operating point built at fixed
    /// flux this carries the *dressed* cavity frequency.
    pub omega_bare: f64,
    /// Internal (unrecoverable) loss rate (rad/s, ≥ 0).
    pub kappa_int: f64,
    /// External coupling rate to the measurement port (rad/s, > 0).
    pub kappa_ext: f64,
}

impl CavityMode {
    /// Construct and validate. The linewidth must be minuscule against the
    /// mode frequency (ratio < 10⁻²) for the single-mode treatment to hold.
    pub fn new(omega_bare: f64, kappa_int: f64, kappa_ext: f64) -> Result<Self, SpectrumError> {
        if !(omega_bare.is_finite() && omega_bare > 0.0) {
            return Err(SpectrumError::InvalidParams(format!(
                "mode frequency must be positive, got {omega_bare}"
            )));
        }
        if !(kappa_int.is_finite() && kappa_int >= 0.0) {
            return Err(SpectrumError::InvalidParams(format!(
                "internal loss rate must be ≥ 0, got {kappa_int}"
            )));
        }
        if !(kappa_ext.is_finite() && kappa_ext > 0.0) {
            return Err(SpectrumError::InvalidParams(format!(
                "external coupling rate must be > 0, got {kappa_ext}"
            )));
        }
        let ratio = (kappa_int + kappa_ext) / omega_bare;
        if ratio >= 1e-2 {
            return Err(SpectrumError::InvalidParams(format!(
                "total linewidth is not small against the mode frequency: κ_tot/ω = {ratio:.3e} ≥ 1e-2"
            )));
        }
        Ok(Self { omega_bare, kappa_int, kappa_ext })
    }

    /// Total linewidth κ_tot = κ_int + κ_ext (rad/s).
    #[inline]
    pub fn kappa_tot(&self) -> f64 {
        self.kappa_int + self.kappa_ext
    }
}

/// The lumped SQUID resonator: geometric inductance in series with the SQUID,
/// shunted by C_b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquidResonator {
    /// Geometric (flux-independent) inductance (H).
    pub l_geo: f64,
    /// Shunt capacitance (F).
    pub c_b: f64,
}

impl SquidResonator {
    /// Construct and validate.
    pub fn new(l_geo: f64, c_b: f64) -> Result<Self, SpectrumError> {
        if !(l_geo.is_finite() && l_geo > 0.0) {
            return Err(SpectrumError::InvalidParams(format!(
                "geometric inductance must be positive, got {l_geo}"
            )));
        }
        if !(c_b.is_finite() && c_b > 0.0) {
            return Err(SpectrumError::InvalidParams(format!(
                "shunt capacitance must be positive, got {c_b}"
            )));
        }
        Ok(Self { l_geo, c_b })
    }
}

/// The two normal modes of the coupled system at one flux point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalModes {
    /// Lower normal-mode angular frequency ω_− (rad/s).
    pub omega_minus: f64,
    /// Upper normal-mode angular frequency ω_+ (rad/s).
    pub omega_plus: f64,
    /// Mixing angle θ = ½·atan2(2g, Δ_ab) ∈ (−π/4, π/2); |θ| < π/4 means the
    /// upper branch is cavity-like (Δ_ab > 0).
    pub mixing_angle: f64,
}

/// Kerr anharmonicities at one flux point (both ≤ 0, rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KerrBudget {
    /// Self-Kerr of the SQUID-resonator mode, K_b = −p³e²/(2ħC_b).
    pub k_squid_mode: f64,
    /// Kerr inherited by the cavity branch, K_cav = K_b·sin⁴θ.
    pub k_cavity: f64,
}

/// The coupled cavity / SQUID-resonator circuit.
///
/// Construction verifies that the two bare modes keep a non-vanishing
/// detuning of fixed sign across the whole flux validity band, so the
/// cavity-like branch is well-defined everywhere. The hybridization ratio
/// g/min|Δ_ab| is computed and stored: values approaching or exceeding 1 mean
/// the "cavity" branch carries substantial SQUID character, and consumers
/// (reports, CLI headers) are expected to surface it rather than hide it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledCircuit {
    /// The bare 3D cavity mode.
    pub cavity: CavityMode,
    /// The lumped SQUID resonator.
    pub squid_res: SquidResonator,
    /// The SQUID itself.
    pub squid: SquidParams,
    /// Beam-splitter coupling rate g (rad/s, ≥ 0).
    pub g: f64,
    /// Largest hybridization ratio g/|Δ_ab(φ)| over the validity band,
    /// recorded at construction for provenance.
    hybridization_ratio: f64,
}

impl CoupledCircuit {
    /// Construct and validate over the full flux validity band
    /// |φ| ≤ cutoff_boundary (one period; everything else follows by
    /// periodicity).
    pub fn new(
        cavity: CavityMode,
        squid_res: SquidResonator,
        squid: SquidParams,
        g: f64,
    ) -> Result<Self, SpectrumError> {
        if !(g.is_finite() && g >= 0.0) {
            return Err(SpectrumError::InvalidParams(format!(
                "coupling rate must be ≥ 0, got {g}"
            )));
        }
        let mut circuit = Self {
            cavity,
            squid_res,
            squid,
            g,
            hybridization_ratio: 0.0,
        };
        // Δ_ab is monotone in |φ| only for ω_a outside the ω_b tuning range;
        // scan the band densely rather than assume.
        let boundary = circuit.squid.cutoff_boundary();
        let n = 201;
        let mut min_abs_delta = f64::INFINITY;
        let mut first_sign = 0.0;
        for i in 0..n {
            let phi = boundary * (i as f64) / ((n - 1) as f64);
            let wb = circuit.squid_mode_frequency_unchecked(phi)?;
            let delta = cavity.omega_bare - wb;
            if delta == 0.0 {
                return Err(SpectrumError::DispersiveViolation { phi, delta_hz: 0.0 });
            }
            if first_sign == 0.0 {
                first_sign = delta.signum();
            } else if delta.signum() != first_sign {
                return Err(SpectrumError::DispersiveViolation {
                    phi,
                    delta_hz: angular_to_hz(delta),
                });
            }
            min_abs_delta = min_abs_delta.min(delta.abs());
        }
        circuit.hybridization_ratio = if g == 0.0 { 0.0 } else { g / min_abs_delta };
        Ok(circuit)
    }

    /// Hybridization ratio g/min|Δ_ab| over the validity band.
    pub fn hybridization_ratio(&self) -> f64 {
        self.hybridization_ratio
    }

    fn squid_mode_frequency_unchecked(&self, phi: f64) -> Result<f64, SpectrumError> {
        let l_s = squid_inductance(&self.squid, phi)?;
        Ok(1.0 / ((self.squid_res.l_geo + l_s) * self.squid_res.c_b).sqrt())
    }
}

/// Bare SQUID-resonator frequency ω_b(φ) = 1/√((L_geo + L_S(φ))·C_b).
///
/// Strictly decreasing in L_S, hence periodic and even in φ and maximal at
/// integer flux. Independent of the coupling g by definition of a bare mode.
pub fn squid_mode_frequency(c: &CoupledCircuit, phi: f64) -> Result<f64, SpectrumError> {
    c.squid_mode_frequency_unchecked(phi)
}

/// Normal modes of the coupled pair at dc flux φ.
pub fn normal_modes(c: &CoupledCircuit, phi: f64) -> Result<NormalModes, SpectrumError> {
    let wa = c.cavity.omega_bare;
    let wb = squid_mode_frequency(c, phi)?;
    let delta = wa - wb;
    let split = (delta * delta / 4.0 + c.g * c.g).sqrt();
    let mean = 0.5 * (wa + wb);
    let theta = 0.5 * (2.0 * c.g).atan2(delta);
    Ok(NormalModes {
        omega_minus: mean - split,
        omega_plus: mean + split,
        mixing_angle: theta,
    })
}

/// Dressed cavity frequency: the normal mode with the larger cavity
/// character, i.e. the branch adiabatically connected to ω_a.
///
/// For Δ_ab > 0 (cavity above the SQUID mode) this is ω_+; for Δ_ab < 0 it is
/// ω_−. Selecting by detuning sign instead of frequency ordering keeps the
/// branch continuous through regions of strong hybridization.
pub fn cavity_dressed_frequency(c: &CoupledCircuit, phi_dc: f64) -> Result<f64, SpectrumError> {
    let wa = c.cavity.omega_bare;
    let wb = squid_mode_frequency(c, phi_dc)?;
    let m = normal_modes(c, phi_dc)?;
    Ok(if wa >= wb { m.omega_plus } else { m.omega_minus })
}

/// Flux slope dω_c/dφ (rad/s per Φ₀) of the dressed cavity frequency, by
/// central finite difference with adaptive step h = max(10⁻⁶, 10⁻⁴·|φ|).
///
/// Vanishes at integer flux (stationary point of an even function). Both
/// φ ± h must lie in the validity band.
pub fn flux_slope(c: &CoupledCircuit, phi_dc: f64) -> Result<f64, SpectrumError> {
    let h = 1e-6f64.max(1e-4 * phi_dc.abs());
    let up = cavity_dressed_frequency(c, phi_dc + h)?;
    let dn = cavity_dressed_frequency(c, phi_dc - h)?;
    Ok((up - dn) / (2.0 * h))
}

/// Kerr budget at dc flux φ: SQUID-mode self-Kerr and its dilution into the
/// cavity branch.
pub fn kerr_budget(c: &CoupledCircuit, phi_dc: f64) -> Result<KerrBudget, SpectrumError> {
    let l_s = squid_inductance(&c.squid, phi_dc)?;
    let p = l_s / (l_s + c.squid_res.l_geo); // inductive participation ∈ (0, 1)
    let k_squid = -p.powi(3) * E_CHARGE * E_CHARGE / (2.0 * HBAR * c.squid_res.c_b);
    let theta = normal_modes(c, phi_dc)?.mixing_angle;
    let s = theta.sin();
    Ok(KerrBudget {
        k_squid_mode: k_squid,
        k_cavity: k_squid * s.powi(4),
    })
}

/// Calibration targets for [`calibrate_circuit`]. Frequencies are angular.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationTargets {
    /// Zero-flux SQUID-resonator frequency ω_b(0) (rad/s); fixes C_b.
    pub omega_b0: f64,
    /// Geometric inductance of the SQUID resonator (H).
    pub l_geo: f64,
    /// Dressed cavity frequency at φ = 0 (rad/s); fixes the bare ω_a.
    pub omega_dressed_phi0: f64,
    /// Total dressed-cavity pull from φ = 0 to the validity-band edge
    /// (rad/s); fixes g by bisection.
    pub pull: f64,
}

/// Result of a circuit calibration, kept for provenance reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// Solved shunt capacitance (F).
    pub c_b: f64,
    /// Solved bare cavity frequency (Hz).
    pub omega_a_hz: f64,
    /// Solved (or supplied) coupling rate (Hz).
    pub g_hz: f64,
    /// Dressed cavity frequency at φ = 0 (Hz), for verification.
    pub dressed_phi0_hz: f64,
    /// Achieved total pull to the validity-band edge (Hz).
    pub achieved_pull_hz: f64,
    /// Hybridization ratio g/min|Δ_ab| over the validity band.
    pub hybridization_ratio: f64,
}

/// Solve the lumped model so that it hits the calibration targets.
///
/// Procedure:
///  1. C_b = 1/(ω_b0²·(L_geo + L_S(0))) — closed form.
///  2. Pinning the dressed frequency at φ = 0 to T means T is an eigenvalue
///     of the 2×2 problem: (ω_a − T)(ω_b0 − T) = g², so
///     ω_a(g) = T + g²/(ω_b0 − T) — closed form for each trial g.
///  3. The total pull to the band edge grows monotonically with g from 0
///     (at g = 0 the cavity decouples and never moves); bisect g until the
///     pull matches the target to 10⁻⁶ relative.
pub fn calibrate_circuit(
    targets: CalibrationTargets,
    squid: SquidParams,
    kappa_int: f64,
    kappa_ext: f64,
) -> Result<(CoupledCircuit, CalibrationReport), SpectrumError> {
    let t = targets.omega_dressed_phi0;
    if !(t.is_finite() && t > 0.0 && targets.omega_b0 > 0.0 && targets.pull >= 0.0) {
        return Err(SpectrumError::InvalidParams(
            "calibration targets must be positive frequencies and a non-negative pull".into(),
        ));
    }
    if t <= targets.omega_b0 {
        return Err(SpectrumError::InvalidParams(format!(
            "the dressed cavity target ({:.4e} rad/s) must sit above the SQUID mode ({:.4e} rad/s) \
             for the upper branch to be cavity-like",
            t, targets.omega_b0
        )));
    }
    let l_s0 = squid_inductance(&squid, 0.0)?;
    let c_b = 1.0 / (targets.omega_b0.powi(2) * (targets.l_geo + l_s0));
    let squid_res = SquidResonator::new(targets.l_geo, c_b)?;

    let build = |g: f64| -> Result<CoupledCircuit, SpectrumError> {
        // ω_a from the eigenvalue pinning; ω_b0 − T < 0 so ω_a < T.
        let omega_a = t + g * g / (targets.omega_b0 - t);
        CoupledCircuit::new(
            CavityMode::new(omega_a, kappa_int, kappa_ext)?,
            squid_res,
            squid.clone(),
            g,
        )
    };
    let boundary = squid.cutoff_boundary();
    let pull_of = |g: f64| -> Result<f64, SpectrumError> {
        let c = build(g)?;
        Ok(cavity_dressed_frequency(&c, 0.0)? - cavity_dressed_frequency(&c, boundary)?)
    };

    let g = if targets.pull == 0.0 {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0f64, crate::constants::hz_to_angular(2.0e9));
        let pull_hi = pull_of(hi)?;
        if pull_hi < targets.pull {
            return Err(SpectrumError::TargetUnreachable(format!(
                "requested pull {:.3e} Hz exceeds the {:.3e} Hz reachable with g/2π ≤ 2 GHz",
                angular_to_hz(targets.pull),
                angular_to_hz(pull_hi)
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if pull_of(mid)? < targets.pull {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo) <= 1e-6 * hi.max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    };

    let circuit = build(g)?;
    let report = CalibrationReport {
        c_b,
        omega_a_hz: angular_to_hz(circuit.cavity.omega_bare),
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

/// One row of a flux map. Rows whose flux (or finite-difference neighborhood)
/// enters the cutoff band are emitted masked, with the physics fields absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxMapRow {
    /// dc flux in Φ₀.
    pub phi_dc: f64,
    /// Dressed cavity frequency (Hz), absent when masked.
    pub omega_c_hz: Option<f64>,
    /// Flux slope (Hz per Φ₀), absent when masked.
    pub slope_hz_per_phi0: Option<f64>,
    /// Cavity Kerr (Hz), absent when masked.
    pub kerr_cav_hz: Option<f64>,
    /// True when the point falls in (or its slope stencil touches) the
    /// near-half-flux cutoff band.
    pub masked: bool,
}

/// Evaluate the flux map on an arbitrary grid. Deterministic: rows come back
/// in grid order; cutoff-band points are masked rather than skipped.
pub fn flux_map(c: &CoupledCircuit, phi_grid: &[f64]) -> Vec<FluxMapRow> {
    phi_grid
        .iter()
        .map(|&phi| {
            let omega = cavity_dressed_frequency(c, phi);
            let slope = flux_slope(c, phi);
            let kerr = kerr_budget(c, phi);
            match (omega, slope, kerr) {
                (Ok(w), Ok(s), Ok(k)) => FluxMapRow {
                    phi_dc: phi,
                    omega_c_hz: Some(angular_to_hz(w)),
                    slope_hz_per_phi0: Some(angular_to_hz(s)),
                    kerr_cav_hz: Some(angular_to_hz(k.k_cavity)),
                    masked: false,
                },
                _ => FluxMapRow {
                    phi_dc: phi,
                    omega_c_hz: None,
                    slope_hz_per_phi0: None,
                    kerr_cav_hz: None,
                    masked: true,
                },
            }
        })
        .collect()
}
