//! Batch front end for the amplifier toolkit: one JSON device description
//! in, CSV datasets and JSON reports out.
//!
//! # Subcommands
//!
//! - `fluxmap` — dressed cavity frequency and flux slope across a dc-flux
//!   grid (CSV `phi_dc,omega_c_hz,slope_hz_per_phi0,masked`).
//! - `gain-sweep` — small-signal gain versus pump power at fixed flux bias
//!   (CSV), plus a threshold report with the analytic and fitted critical
//!   powers (JSON).
//! - `compression` — saturated gain versus signal power at a fixed
//!   small-signal set point (CSV), plus the 1 dB compression point (JSON).
//! - `noise` — SNRI → T_JPA → quanta arithmetic, deterministic or with
//!   Monte Carlo uncertainty propagation (JSON).
//! - `fit` — inverse problems on measured CSV traces: `s11` reflection
//!   fitting or `gain` critical-power fitting (JSON).
//!
//! # Conventions
//!
//! One `--config` device file serves every device-backed subcommand
//! (`fluxmap`, `gain-sweep`, `compression`); the circuit and Kerr
//! calibrations run once at startup and the resolved values are echoed into
//! every report under `"device"` for provenance. `noise` and `fit` operate
//! on their own inputs and need no config. Dataset-producing subcommands
//! write their CSV to `--out` and their JSON report to stdout; `fluxmap` may
//! omit `--out`, in which case the CSV itself streams to stdout and the
//! report is suppressed. All outputs are UTF-8 with `\n` line endings, and
//! every invocation is deterministic given its inputs and seed: identical
//! invocations produce byte-identical bytes.
//!
//! # Exit codes
//!
//! - `0` — success (including degenerate-but-valid requests, e.g. an
//!   all-masked flux map, which exits 0 with a warning on stderr).
//! - `2` — config, schema, CLI-usage, and input-format errors.
//! - `3` — numeric-domain refusals: above threshold, quench, unphysical
//!   SNRI, threshold inside the data, no resonance found.
//! - `4` — optimizer non-convergence (the best iterate is reported).

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use jpa_core::amplifier::{
    compression_point, critical_pump, epsilon_for_gain, linear_s11, parametric_rate,
    saturated_gain, signal_idler_gain, AmplifierError, Compression, GainCurve, PowerAxis,
    PumpOperatingPoint,
};
use jpa_core::config::{DeviceConfig, DeviceEcho, ResolvedDevice};
use jpa_core::constants::{angular_to_hz, db_to_ratio, hz_to_angular, ratio_to_db, HBAR, KB};
use jpa_core::estimation::{
    fit_gain_curve, fit_s11, gain_fit_sigma, invert_snri, normalize_trace, propagate_budget,
    s11_fit_sigmas, temperature_to_quanta, Baseline, BudgetInputs, EstimationError, NoiseBudget,
    Uncertain,
};
use jpa_core::io::{read_gain_curve, read_reflection_trace, write_gain_curve, IoError};
use jpa_core::spectrum::{flux_map, flux_slope, SpectrumError};
use jpa_core::squid::{pump_flux_amplitude, pump_power_for_flux, SquidError};

/// Config, schema, usage, and input-format errors.
pub const EXIT_CONFIG: i32 = 2;
/// Numeric-domain refusals (threshold, quench, unphysical inputs).
pub const EXIT_DOMAIN: i32 = 3;
/// Optimizer non-convergence.
pub const EXIT_NONCONVERGENCE: i32 = 4;

/// Hard cap on generated grid/sweep lengths, so a typo in a step size fails
/// fast instead of allocating without bound.
const MAX_SWEEP_POINTS: usize = 1_000_001;

#[derive(Parser)]
#[command(
    name = "jpa",
    version,
    about = "Flux-pumped parametric amplifier: forward sweeps and inverse fits",
    long_about = "Predicts a flux-pumped amplifier's tuning, gain, threshold, saturation, and \
                  noise performance from a JSON device description, and fits measured reflection \
                  and gain-curve CSVs. Datasets go to --out as CSV; reports go to stdout as JSON."
)]
pub struct Cli {
    /// Device-description JSON (required by fluxmap, gain-sweep, compression).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dressed cavity frequency and flux slope across a dc-flux grid (CSV).
    Fluxmap(FluxmapArgs),
    /// Gain vs pump power at fixed flux bias (CSV + threshold JSON).
    GainSweep(GainSweepArgs),
    /// Saturated gain vs signal power at a fixed set point (CSV + JSON).
    Compression(CompressionArgs),
    /// Noise budget from SNRI (or noise-rise) arithmetic (JSON).
    Noise(NoiseArgs),
    /// Fit a measured CSV: `s11` reflection trace or `gain` curve (JSON).
    Fit(FitArgs),
}

#[derive(Args)]
struct FluxmapArgs {
    /// Lower edge of the dc-flux grid (units of Φ₀).
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    phi_min: f64,
    /// Upper edge of the dc-flux grid (units of Φ₀).
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    phi_max: f64,
    /// Number of grid points (1 emits the single point --phi-min).
    #[arg(long, default_value_t = 401)]
    points: usize,
    /// Write the CSV here and the JSON report to stdout; without it the CSV
    /// itself streams to stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GainSweepArgs {
    /// dc flux bias (units of Φ₀).
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    phi_dc: f64,
    /// Pump power sweep MIN:MAX:STEP (dBm at the pump-line input).
    #[arg(long, value_name = "MIN:MAX:STEP", allow_hyphen_values = true)]
    pump_dbm_range: String,
    /// Probe detuning from the dressed cavity (Hz).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    delta: f64,
    /// Output CSV path (the JSON threshold report goes to stdout).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct CompressionArgs {
    /// Small-signal gain set point (dB).
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    gain_db: f64,
    /// Signal power sweep MIN:MAX:STEP (dBm).
    #[arg(long, value_name = "MIN:MAX:STEP", allow_hyphen_values = true)]
    signal_dbm_range: String,
    /// dc flux bias (units of Φ₀).
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    phi_dc: f64,
    /// Output CSV path (the JSON compression report goes to stdout).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
#[command(group(
    ArgGroup::new("snri_source").required(true).args(["snri_db", "noise_rise_db"])
))]
struct NoiseArgs {
    /// Directly measured SNR improvement (dB).
    #[arg(long, allow_negative_numbers = true)]
    snri_db: Option<f64>,
    /// Measured noise-floor rise when the pump turns on (dB); the SNRI is
    /// then derived as G − rise.
    #[arg(long, allow_negative_numbers = true)]
    noise_rise_db: Option<f64>,
    /// Amplifier gain (dB).
    #[arg(long, allow_negative_numbers = true)]
    g_db: f64,
    /// Cryogenic system noise temperature (K).
    #[arg(long)]
    t_cryo_k: f64,
    /// 1σ uncertainties G:SNRI:TCRYO (dB, dB, K; the middle σ applies to
    /// whichever of --snri-db/--noise-rise-db was given). Enables Monte
    /// Carlo propagation with 10⁵ draws.
    #[arg(long, value_name = "G:SNRI:TCRYO")]
    sigmas: Option<String>,
    /// PRNG seed for the Monte Carlo propagation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Signal frequency for the quanta conversion (Hz).
    #[arg(long, default_value_t = 8.3e9)]
    freq_hz: f64,
}

#[derive(Args)]
struct FitArgs {
    /// What the input CSV contains.
    #[arg(value_enum)]
    kind: FitKind,
    /// Input CSV path (`freq_hz,re_s11,im_s11` for s11;
    /// `power_dbm,gain_db` for gain).
    input: PathBuf,
}

#[derive(ValueEnum, Clone, Copy)]
enum FitKind {
    /// Complex reflection trace → (f₀, κ_ext, κ_int) with uncertainties.
    S11,
    /// Gain-vs-pump-power curve → critical power P_c with uncertainty.
    Gain,
}

/// A classified failure: the message goes to stderr, the variant picks the
/// exit code, and non-convergence may carry a JSON payload (the best
/// iterate) for stdout.
#[derive(Debug)]
enum Failure {
    Config(String),
    Domain(String),
    NonConvergence { message: String, payload: Option<String> },
}

fn squid_failure(e: SquidError) -> Failure {
    match e {
        SquidError::InvalidParams(_) => Failure::Config(e.to_string()),
        SquidError::NearHalfFluxQuantum { .. } => Failure::Domain(e.to_string()),
    }
}

fn spectrum_failure(e: SpectrumError) -> Failure {
    match e {
        SpectrumError::Squid(inner) => squid_failure(inner),
        SpectrumError::InvalidParams(_) => Failure::Config(e.to_string()),
        SpectrumError::DispersiveViolation { .. } | SpectrumError::TargetUnreachable(_) => {
            Failure::Domain(e.to_string())
        }
    }
}

fn amplifier_failure(e: AmplifierError) -> Failure {
    match e {
        AmplifierError::InvalidParams(_) => Failure::Config(e.to_string()),
        AmplifierError::Spectrum(inner) => spectrum_failure(inner),
        AmplifierError::NoConvergence { .. } => {
            Failure::NonConvergence { message: e.to_string(), payload: None }
        }
        AmplifierError::AboveThreshold { .. }
        | AmplifierError::Quenched { .. }
        | AmplifierError::InsufficientGain { .. }
        | AmplifierError::TargetUnreachable(_) => Failure::Domain(e.to_string()),
    }
}

fn estimation_failure(e: EstimationError) -> Failure {
    match e {
        EstimationError::InvalidTrace(_)
        | EstimationError::InvalidInput(_)
        | EstimationError::AlreadyNormalized
        | EstimationError::UnnormalizedTrace => Failure::Config(e.to_string()),
        EstimationError::NonConvergence { .. } => {
            Failure::NonConvergence { message: e.to_string(), payload: None }
        }
        EstimationError::InsufficientWings { .. }
        | EstimationError::NoResonanceFound { .. }
        | EstimationError::ThresholdInsideData { .. }
        | EstimationError::UnphysicalSNRI { .. }
        | EstimationError::TooManyRejections { .. } => Failure::Domain(e.to_string()),
    }
}

fn io_failure(e: IoError) -> Failure {
    match e {
        IoError::Trace(inner) => estimation_failure(inner),
        IoError::Curve(inner) => amplifier_failure(inner),
        // Io, Header, Parse, Empty: malformed input files.
        other => Failure::Config(other.to_string()),
    }
}

/// Parse `MIN:MAX:STEP` into the inclusive grid MIN, MIN+STEP, … (every
/// value computed as MIN + k·STEP, not accumulated, so grids are exactly
/// reproducible).
fn parse_range(what: &str, spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = |detail: &str| {
        Failure::Config(format!("{what} must be MIN:MAX:STEP with STEP > 0, got `{spec}`{detail}"))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad(""));
    }
    let mut nums = [0.0f64; 3];
    for (slot, part) in nums.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|_| bad(&format!(" (`{part}` is not a number)")))?;
        if !slot.is_finite() {
            return Err(bad(" (non-finite)"));
        }
    }
    let [min, max, step] = nums;
    if step <= 0.0 || max < min {
        return Err(bad(""));
    }
    // Slack of half a step in the count so MAX itself survives rounding.
    let n = ((max - min) / step + 0.5).floor() as usize;
    let n = if min + n as f64 * step > max { n - 1 } else { n };
    if n + 1 > MAX_SWEEP_POINTS {
        return Err(Failure::Config(format!(
            "{what} would generate {} points (limit {MAX_SWEEP_POINTS})",
            n + 1
        )));
    }
    Ok((0..=n).map(|k| min + k as f64 * step).collect())
}

/// Parse the `--sigmas G:SNRI:TCRYO` triple (each ≥ 0).
fn parse_sigmas(spec: &str) -> Result<(f64, f64, f64), Failure> {
    let bad = || {
        Failure::Config(format!(
            "--sigmas must be three colon-separated values ≥ 0 (G:SNRI:TCRYO), got `{spec}`"
        ))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0.0f64; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part.trim().parse::<f64>().map_err(|_| bad())?;
        if !(slot.is_finite() && *slot >= 0.0) {
            return Err(bad());
        }
    }
    Ok((out[0], out[1], out[2]))
}

/// Load and resolve the device config; both calibrations (g from the pull
/// target, Kerr from the compression target) run here, once.
fn load_device(cli: &Cli) -> Result<ResolvedDevice, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| {
        Failure::Config("--config <FILE> is required for this subcommand".into())
    })?;
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = DeviceConfig::from_json_str(&text).map_err(|e| Failure::Config(e.to_string()))?;
    config.resolve().map_err(|e| Failure::Config(e.to_string()))
}

fn write_out(path: &PathBuf, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes)
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(report: &T) -> String {
    serde_json::to_string_pretty(report).expect("reports are plain trees of serializable values")
}

#[derive(Serialize)]
struct FluxmapReport<'a> {
    command: &'static str,
    device: &'a DeviceEcho,
    phi_min: f64,
    phi_max: f64,
    points: usize,
    rows_masked: usize,
    out: String,
}

fn cmd_fluxmap(dev: &ResolvedDevice, a: &FluxmapArgs) -> Result<(), Failure> {
    if a.points == 0 {
        return Err(Failure::Config("--points must be ≥ 1".into()));
    }
    if a.points > MAX_SWEEP_POINTS {
        return Err(Failure::Config(format!("--points exceeds the limit {MAX_SWEEP_POINTS}")));
    }
    if !(a.phi_min.is_finite() && a.phi_max.is_finite()) || a.phi_max < a.phi_min {
        return Err(Failure::Config(format!(
            "flux range [{}, {}] is non-finite or empty",
            a.phi_min, a.phi_max
        )));
    }
    let grid: Vec<f64> = if a.points == 1 {
        vec![a.phi_min]
    } else {
        (0..a.points)
            .map(|i| a.phi_min + (a.phi_max - a.phi_min) * i as f64 / (a.points - 1) as f64)
            .collect()
    };
    let rows = flux_map(&dev.circuit, &grid);
    let masked = rows.iter().filter(|r| r.masked).count();

    let mut csv = String::from("phi_dc,omega_c_hz,slope_hz_per_phi0,masked\n");
    for r in &rows {
        match (r.omega_c_hz, r.slope_hz_per_phi0) {
            (Some(w), Some(s)) => {
                csv.push_str(&format!("{},{},{},false\n", r.phi_dc, w, s));
            }
            _ => csv.push_str(&format!("{},,,true\n", r.phi_dc)),
        }
    }
    if masked == rows.len() {
        eprintln!(
            "warning: all {} grid points fall inside the near-half-flux cutoff band",
            rows.len()
        );
    }
    match &a.out {
        Some(path) => {
            write_out(path, csv.as_bytes())?;
            let report = FluxmapReport {
                command: "fluxmap",
                device: &dev.echo,
                phi_min: a.phi_min,
                phi_max: a.phi_max,
                points: a.points,
                rows_masked: masked,
                out: path.display().to_string(),
            };
            println!("{}", to_json(&report));
        }
        None => print!("{csv}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct GainSweepReport<'a> {
    command: &'static str,
    device: &'a DeviceEcho,
    phi_dc: f64,
    delta_hz: f64,
    reference_plane: &'static str,
    pump_off_reflection_db: f64,
    epsilon_c_hz: f64,
    p_c_dbm_analytic: f64,
    p_c_dbm_fitted: Option<f64>,
    fit_sigma_db: Option<f64>,
    fit_note: Option<String>,
    first_above_threshold_dbm: Option<f64>,
    rows_written: usize,
    out: String,
}

fn cmd_gain_sweep(dev: &ResolvedDevice, a: &GainSweepArgs) -> Result<(), Failure> {
    let powers = parse_range("--pump-dbm-range", &a.pump_dbm_range)?;
    let mode = dev.mode_at(a.phi_dc).map_err(spectrum_failure)?;
    let delta = hz_to_angular(a.delta);
    // Gain is quoted against the pump-off reflection at the same detuning —
    // the plane a network analyzer reports after its pump-off reference
    // sweep. Pump off, the rows would read exactly 0 dB.
    let g_off = linear_s11(&mode, mode.omega_bare + delta).norm_sqr();
    let slope = flux_slope(&dev.circuit, a.phi_dc).map_err(spectrum_failure)?;
    let eps_c = critical_pump(&mode);
    let p_c_analytic = pump_power_for_flux(&dev.circuit.squid, 2.0 * eps_c / slope.abs());

    let mut rows: Vec<(f64, f64)> = Vec::new();
    let mut first_above: Option<f64> = None;
    for &p in &powers {
        let phi_ac = pump_flux_amplitude(&dev.circuit.squid, p);
        let eps = parametric_rate(&dev.circuit, a.phi_dc, phi_ac).map_err(|e| {
            match amplifier_failure(e) {
                Failure::Domain(m) => Failure::Domain(format!("pump {p} dBm: {m}")),
                other => other,
            }
        })?;
        let op =
            PumpOperatingPoint::new(mode, eps, 0.0, dev.kerr_cav).map_err(amplifier_failure)?;
        match signal_idler_gain(&op, delta) {
            Ok(g) => rows.push((p, ratio_to_db(g.g_s / g_off))),
            Err(AmplifierError::AboveThreshold { .. }) => {
                first_above = Some(p);
                break;
            }
            Err(e) => return Err(amplifier_failure(e)),
        }
    }

    let curve = GainCurve::new(PowerAxis::PumpPower, rows, Some(a.phi_dc), 0.0)
        .map_err(amplifier_failure)?;
    let mut csv = Vec::new();
    write_gain_curve(&mut csv, &curve).map_err(io_failure)?;
    write_out(&a.out, &csv)?;

    let span = curve
        .samples
        .iter()
        .map(|&(_, g)| g)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g), hi.max(g)));
    let (fitted, sigma, note) = if curve.samples.len() >= 4 && span.1 - span.0 >= 1.0 {
        match fit_gain_curve(&curve) {
            Ok(fit) => (Some(fit.p_c_dbm), Some(gain_fit_sigma(&curve, &fit)), None),
            Err(e) => (None, None, Some(format!("fit skipped: {e}"))),
        }
    } else {
        (
            None,
            None,
            Some(format!(
                "fit skipped: {} below-threshold rows spanning {:.3} dB (need ≥ 4 rows and ≥ 1 dB)",
                curve.samples.len(),
                if curve.samples.is_empty() { 0.0 } else { span.1 - span.0 },
            )),
        )
    };

    let report = GainSweepReport {
        command: "gain-sweep",
        device: &dev.echo,
        phi_dc: a.phi_dc,
        delta_hz: a.delta,
        reference_plane: "gain referenced to the pump-off reflection |S11(delta)|^2",
        pump_off_reflection_db: ratio_to_db(g_off),
        epsilon_c_hz: angular_to_hz(eps_c),
        p_c_dbm_analytic: p_c_analytic,
        p_c_dbm_fitted: fitted,
        fit_sigma_db: sigma.filter(|s| s.is_finite()),
        fit_note: note,
        first_above_threshold_dbm: first_above,
        rows_written: curve.samples.len(),
        out: a.out.display().to_string(),
    };
    println!("{}", to_json(&report));
    Ok(())
}

#[derive(Serialize)]
struct CompressionReport<'a> {
    command: &'static str,
    device: &'a DeviceEcho,
    phi_dc: f64,
    gain_db_set_point: f64,
    epsilon_hz: f64,
    kerr_cav_hz: f64,
    reference_plane: &'static str,
    p1db_dbm: Option<f64>,
    truncated_at_dbm: Option<f64>,
    rows_written: usize,
    out: String,
}

fn cmd_compression(dev: &ResolvedDevice, a: &CompressionArgs) -> Result<(), Failure> {
    let powers = parse_range("--signal-dbm-range", &a.signal_dbm_range)?;
    let mode = dev.mode_at(a.phi_dc).map_err(spectrum_failure)?;
    let eps = epsilon_for_gain(&mode, db_to_ratio(a.gain_db)).map_err(amplifier_failure)?;
    let op = PumpOperatingPoint::new(mode, eps, 0.0, dev.kerr_cav).map_err(amplifier_failure)?;

    let mut rows: Vec<(f64, f64)> = Vec::new();
    let mut truncated_at: Option<f64> = None;
    for &p in &powers {
        match saturated_gain(&op, p, 0.0) {
            Ok(g) => rows.push((p, ratio_to_db(g.g_s))),
            // Deep saturation (often bistable) is an expected end of the
            // sweep, not a failure of the request: truncate and say so.
            Err(AmplifierError::NoConvergence { .. }) => {
                eprintln!(
                    "warning: harmonic balance stopped converging at {p} dBm; truncating the sweep"
                );
                truncated_at = Some(p);
                break;
            }
            Err(e) => return Err(amplifier_failure(e)),
        }
    }

    let curve = GainCurve::new(PowerAxis::SignalPower, rows, Some(a.phi_dc), 0.0)
        .map_err(amplifier_failure)?;
    let mut csv = Vec::new();
    write_gain_curve(&mut csv, &curve).map_err(io_failure)?;
    write_out(&a.out, &csv)?;

    let p1db = match compression_point(&op).map_err(amplifier_failure)? {
        Compression::Point { p1db_dbm } => Some(p1db_dbm),
        Compression::NoCompression => None,
    };

    let report = CompressionReport {
        command: "compression",
        device: &dev.echo,
        phi_dc: a.phi_dc,
        gain_db_set_point: a.gain_db,
        epsilon_hz: angular_to_hz(eps),
        kerr_cav_hz: angular_to_hz(dev.kerr_cav),
        reference_plane: "absolute reflection gain |s_out/s_in|^2 at delta = 0",
        p1db_dbm: p1db,
        truncated_at_dbm: truncated_at,
        rows_written: curve.samples.len(),
        out: a.out.display().to_string(),
    };
    println!("{}", to_json(&report));
    Ok(())
}

#[derive(Serialize)]
struct NoiseReport {
    command: &'static str,
    budget: NoiseBudget,
    /// Vacuum benchmark ħω/2k_B at the chosen signal frequency (K).
    vacuum_temperature_k: f64,
    /// Added quanta corresponding to the vacuum benchmark (exactly ½ in the
    /// linear convention).
    vacuum_quanta: f64,
}

fn cmd_noise(a: &NoiseArgs) -> Result<(), Failure> {
    if !(a.freq_hz.is_finite() && a.freq_hz > 0.0) {
        return Err(Failure::Config(format!("--freq-hz must be > 0, got {}", a.freq_hz)));
    }
    let omega = hz_to_angular(a.freq_hz);
    let budget = match &a.sigmas {
        // No σ's: the chain is plain arithmetic, no sampling.
        None => {
            let snri_db = match (a.snri_db, a.noise_rise_db) {
                (Some(s), None) => s,
                (None, Some(rise)) => a.g_db - rise,
                // clap's arg group enforces exactly one.
                _ => unreachable!("--snri-db and --noise-rise-db are mutually exclusive"),
            };
            let t_jpa =
                invert_snri(db_to_ratio(snri_db), a.t_cryo_k, db_to_ratio(a.g_db))
                    .map_err(estimation_failure)?;
            NoiseBudget {
                g_jpa_db: Uncertain::exact(a.g_db),
                noise_rise_db: a.noise_rise_db.map(Uncertain::exact),
                snri_db: Uncertain::exact(snri_db),
                snri_derived: a.noise_rise_db.is_some(),
                t_cryo_k: Uncertain::exact(a.t_cryo_k),
                t_jpa_k: Uncertain::exact(t_jpa),
                quanta_added: Uncertain::exact(temperature_to_quanta(t_jpa, omega)),
                omega_signal: omega,
                draws: 0,
                rejected: 0,
                seed: a.seed,
            }
        }
        Some(spec) => {
            let (sig_g, sig_s, sig_t) = parse_sigmas(spec)?;
            let inputs = BudgetInputs {
                g_jpa_db: Uncertain::new(a.g_db, sig_g),
                snri_db: a.snri_db.map(|v| Uncertain::new(v, sig_s)),
                noise_rise_db: a.noise_rise_db.map(|v| Uncertain::new(v, sig_s)),
                t_cryo_k: Uncertain::new(a.t_cryo_k, sig_t),
                omega_signal: omega,
            };
            propagate_budget(&inputs, a.seed).map_err(estimation_failure)?
        }
    };
    let report = NoiseReport {
        command: "noise",
        budget,
        vacuum_temperature_k: HBAR * omega / (2.0 * KB),
        vacuum_quanta: 0.5,
    };
    println!("{}", to_json(&report));
    Ok(())
}

#[derive(Serialize)]
struct BaselineEcho {
    amplitude: f64,
    delay_s: f64,
    phase_rad: f64,
    flat: bool,
}

impl From<&Baseline> for BaselineEcho {
    fn from(b: &Baseline) -> Self {
        Self { amplitude: b.amplitude, delay_s: b.delay_s, phase_rad: b.phase_rad, flat: b.flat }
    }
}

#[derive(Serialize)]
struct S11FitReport {
    command: &'static str,
    kind: &'static str,
    input: String,
    f0_hz: f64,
    kappa_ext_hz: f64,
    kappa_int_hz: f64,
    kappa_tot_hz: f64,
    sigma_f0_hz: f64,
    sigma_kappa_ext_hz: f64,
    sigma_kappa_int_hz: f64,
    over_coupled: bool,
    residual: f64,
    iterations: usize,
    baseline: BaselineEcho,
}

#[derive(Serialize)]
struct S11BestEcho {
    f0_hz: f64,
    kappa_ext_hz: f64,
    kappa_int_hz: f64,
}

#[derive(Serialize)]
struct S11FitFailureReport {
    command: &'static str,
    kind: &'static str,
    input: String,
    error: String,
    iterations: usize,
    residual: f64,
    best: S11BestEcho,
}

#[derive(Serialize)]
struct GainFitReport {
    command: &'static str,
    kind: &'static str,
    input: String,
    axis: PowerAxis,
    n_points: usize,
    p_c_dbm: f64,
    sigma_db: Option<f64>,
    residual: f64,
}

fn cmd_fit(a: &FitArgs) -> Result<(), Failure> {
    let input = a.input.display().to_string();
    let file = fs::File::open(&a.input)
        .map_err(|e| Failure::Config(format!("cannot open {input}: {e}")))?;
    match a.kind {
        FitKind::S11 => {
            let raw = read_reflection_trace(file).map_err(io_failure)?;
            let (trace, baseline) = normalize_trace(&raw).map_err(estimation_failure)?;
            match fit_s11(&trace, None) {
                Ok(fit) => {
                    let sig = s11_fit_sigmas(&trace, &fit).map_err(estimation_failure)?;
                    let report = S11FitReport {
                        command: "fit",
                        kind: "s11",
                        input,
                        f0_hz: angular_to_hz(fit.omega0),
                        kappa_ext_hz: angular_to_hz(fit.kappa_ext),
                        kappa_int_hz: angular_to_hz(fit.kappa_int),
                        kappa_tot_hz: angular_to_hz(fit.kappa_ext + fit.kappa_int),
                        sigma_f0_hz: angular_to_hz(sig.omega0),
                        sigma_kappa_ext_hz: angular_to_hz(sig.kappa_ext),
                        sigma_kappa_int_hz: angular_to_hz(sig.kappa_int),
                        over_coupled: fit.kappa_ext > fit.kappa_int,
                        residual: fit.residual,
                        iterations: fit.iterations,
                        baseline: BaselineEcho::from(&baseline),
                    };
                    println!("{}", to_json(&report));
                    Ok(())
                }
                Err(EstimationError::NonConvergence { iterations, residual, best }) => {
                    let payload = S11FitFailureReport {
                        command: "fit",
                        kind: "s11",
                        input,
                        error: "non-convergence: best iterate attached".into(),
                        iterations,
                        residual,
                        best: S11BestEcho {
                            f0_hz: angular_to_hz(best.omega0),
                            kappa_ext_hz: angular_to_hz(best.kappa_ext),
                            kappa_int_hz: angular_to_hz(best.kappa_int),
                        },
                    };
                    Err(Failure::NonConvergence {
                        message: format!(
                            "s11 fit did not converge in {iterations} iterations \
                             (best residual {residual:.3e})"
                        ),
                        payload: Some(to_json(&payload)),
                    })
                }
                Err(e) => Err(estimation_failure(e)),
            }
        }
        FitKind::Gain => {
            let curve = read_gain_curve(file).map_err(io_failure)?;
            let fit = fit_gain_curve(&curve).map_err(estimation_failure)?;
            let sigma = gain_fit_sigma(&curve, &fit);
            let report = GainFitReport {
                command: "fit",
                kind: "gain",
                input,
                axis: curve.axis,
                n_points: curve.samples.len(),
                p_c_dbm: fit.p_c_dbm,
                sigma_db: Some(sigma).filter(|s| s.is_finite()),
                residual: fit.residual,
            };
            println!("{}", to_json(&report));
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Fluxmap(a) => cmd_fluxmap(&load_device(cli)?, a),
        Command::GainSweep(a) => cmd_gain_sweep(&load_device(cli)?, a),
        Command::Compression(a) => cmd_compression(&load_device(cli)?, a),
        Command::Noise(a) => cmd_noise(a),
        Command::Fit(a) => cmd_fit(a),
    }
}

/// Parse and execute, returning the process exit code. Factored out of
/// `main` so tests can drive the full command surface in-process.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 0 for --help/--version and 2 for usage errors,
            // matching the config/schema exit class.
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            EXIT_CONFIG
        }
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            EXIT_DOMAIN
        }
        Err(Failure::NonConvergence { message, payload }) => {
            if let Some(p) = payload {
                println!("{p}");
            }
            eprintln!("error: {message}");
            EXIT_NONCONVERGENCE
        }
    }
}
