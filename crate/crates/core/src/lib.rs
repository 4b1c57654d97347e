//! Simulation and inference toolkit for a flux-pumped, cavity-based
//! Josephson parametric amplifier.
//!
//! The model chain runs bottom-up:
//!
//! * [`squid`] — the dc-SQUID as a flux-tunable inductance, with quench
//!   masking near half-integer flux and the pump-line flux transfer.
//! * [`spectrum`] — the geometric cavity mode coupled to the SQUID-terminated
//!   resonator branch: normal modes, dressed-frequency flux tuning, Kerr
//!   budget, and calibration of the circuit against measured anchors.
//! * [`amplifier`] — linear reflection, three-wave-mixing gain, threshold,
//!   bandwidth, and Kerr-limited saturation/compression solvers.
//! * [`oracle`] — an independent time-domain integrator (fixed-step RK4 in
//!   the half-pump rotating frame) used to cross-check every frequency-domain
//!   result.
//! * [`estimation`] — the inverse problems: trace normalization, complex
//!   reflection fitting, gain-curve threshold fitting, and SNRI noise
//!   arithmetic with Monte Carlo uncertainty propagation.
//! * [`io`] — CSV readers and writers for traces, gain curves, flux maps,
//!   and trajectories, with line-numbered parse diagnostics.
//! * [`config`] — the JSON device description and its resolution into a
//!   calibrated circuit plus operating defaults.
//!
//! Internally every frequency and rate is angular (rad/s); interfaces that
//! speak to instruments (CSV, CLI, fitted reports) use Hz and dBm. The
//! conversion helpers live in [`constants`].

pub mod amplifier;
pub mod config;
pub mod constants;
pub mod estimation;
pub mod io;
pub mod oracle;
pub mod spectrum;
pub mod squid;
