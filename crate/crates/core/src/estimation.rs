//! Inverse problems on measured traces: complex reflection fitting,
//! gain-curve threshold fitting, and signal-to-noise-ratio-improvement
//! (SNRI) noise arithmetic with Monte Carlo uncertainty propagation.
//!
//! # Reflection fitting
//!
//! A reflection trace from a vector network analyzer carries an instrumental
//! background — overall attenuation and a cable delay that winds the phase
//! linearly in frequency — multiplying the resonance response
//!
//! ```text
//!     S11(ω) = 1 − κ_ext/(i(ω−ω₀) + κ_tot/2).
//! ```
//!
//! [`normalize_trace`] strips the background: an amplitude and a linear
//! phase are fitted on the outer 20% of the grid (the wings), the trace is
//! provisionally normalized, and — when a resonance is detected — the fit
//! alternates: the current resonance estimate is divided out of the raw data,
//! the baseline is refit on the *full* grid, and the resonance is refit on
//! the renormalized trace, until the baseline settles. The resonance tails
//! (|S11| ≈ 1 − κ_ext κ_tot/2δ², phase ≈ κ_ext/δ) never quite vanish in the
//! wings of a narrow window, so a single wing fit is biased by a few percent;
//! each alternation shrinks that leakage geometrically. [`fit_s11`] itself
//! minimizes Σ|S11_model − S11_data|² by damped
//! least squares in (ω₀, ln κ_ext, ln κ_int); the log parameterization keeps
//! the rates positive, and the over/under-coupled branches — identical in
//! |S11| — are disambiguated by the phase winding: an over-coupled trace
//! encircles the origin.
//!
//! # Gain-curve fitting
//!
//! Below threshold the peak gain follows G = 1 + 4X/(1−X)² with
//! X = P_p/P_c, so a measured gain-vs-pump-power curve determines the
//! critical power by a one-parameter least squares over P_c
//! ([`fit_gain_curve`]), searched by golden section above the largest
//! measured power.
//!
//! # Noise arithmetic
//!
//! Switching the pump on multiplies the signal by G and raises the noise
//! floor, improving the signal-to-noise ratio by
//!
//! ```text
//!     SNRI = 1 / (T_JPA/T_cryo + 1/G),
//! ```
//!
//! which inverts to T_JPA = T_cryo·(1/SNRI − 1/G). Temperatures convert to
//! added noise quanta by the linear (classical-equivalent) convention
//! n = k_B·T/(ħω), under which the vacuum benchmark ħω/2k_B ↔ exactly half a
//! quantum. [`propagate_budget`] pushes Gaussian uncertainties through this
//! chain with 10⁵ seeded Monte Carlo draws, counting (never silently
//! dropping) draws that violate SNRI ≤ G or T_cryo > 0.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amplifier::GainCurve;
use crate::constants::{db_to_ratio, ratio_to_db, HBAR, KB};

/// Errors from trace normalization, fitting, and noise propagation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    /// Trace construction violated an invariant.
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    /// The trace was already normalized.
    #[error("trace is already normalized")]
    AlreadyNormalized,
    /// The resonance occupies too much of the grid for wing-based
    /// background estimation.
    #[error(
        "resonance spans a fraction {span_fraction:.2} of the grid (limit 0.6); \
         too little off-resonant baseline to normalize against"
    )]
    InsufficientWings { span_fraction: f64 },
    /// The S11 fit needs a normalized trace.
    #[error("fit requires a normalized trace; call normalize_trace first")]
    UnnormalizedTrace,
    /// No dip deep enough to fit was found.
    #[error("no resonance found: dip depth {depth:.4} below detection floor {floor:.4}")]
    NoResonanceFound { depth: f64, floor: f64 },
    /// The optimizer exhausted its iteration budget; the best iterate is
    /// attached.
    #[error("fit did not converge in {iterations} iterations (best residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64, best: Box<S11Fit> },
    /// The gain-curve fit pushed the threshold onto the data: some measured
    /// powers are at or above the fitted critical power.
    #[error(
        "fitted critical power {p_c_dbm:.2} dBm sits against the data edge \
         (max measured power {max_power_dbm:.2} dBm); points lie at or above threshold"
    )]
    ThresholdInsideData { p_c_dbm: f64, max_power_dbm: f64 },
    /// SNRI above the noiseless-amplifier bound.
    #[error("SNRI {snri:.4} exceeds the gain {gain:.4}; no temperature can produce it")]
    UnphysicalSNRI { snri: f64, gain: f64 },
    /// More than 1% of Monte Carlo draws violated physical preconditions;
    /// the statistics over the accepted draws are attached, not asserted.
    #[error(
        "{rejected} of {draws} Monte Carlo draws were unphysical (> 1%); \
         the uncertainty model is too wide for Gaussian propagation"
    )]
    TooManyRejections { rejected: u64, draws: u64, budget: Box<NoiseBudget> },
    /// Invalid scalar input.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// A complex reflection trace on a strictly increasing frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionTrace {
    /// Frequency grid (Hz), strictly increasing.
    pub freq_hz: Vec<f64>,
    /// Complex S11 samples, one per grid point.
    pub s11: Vec<Complex64>,
    /// Set once the instrumental background has been removed.
    #[serde(default)]
    pub normalized: bool,
}

impl ReflectionTrace {
    /// Minimum number of points for a fittable trace.
    pub const MIN_POINTS: usize = 16;

    /// Build a raw (unnormalized) trace, enforcing the grid invariants.
    pub fn new(freq_hz: Vec<f64>, s11: Vec<Complex64>) -> Result<Self, EstimationError> {
        if freq_hz.len() != s11.len() {
            return Err(EstimationError::InvalidTrace(format!(
                "{} frequencies vs {} samples",
                freq_hz.len(),
                s11.len()
            )));
        }
        if freq_hz.len() < Self::MIN_POINTS {
            return Err(EstimationError::InvalidTrace(format!(
                "{} points; at least {} required",
                freq_hz.len(),
                Self::MIN_POINTS
            )));
        }
        for w in freq_hz.windows(2) {
            if !(w[1] > w[0]) {
                return Err(EstimationError::InvalidTrace(format!(
                    "grid must be strictly increasing; {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if !freq_hz.iter().all(|f| f.is_finite())
            || !s11.iter().all(|s| s.re.is_finite() && s.im.is_finite())
        {
            return Err(EstimationError::InvalidTrace("non-finite values".into()));
        }
        Ok(Self { freq_hz, s11, normalized: false })
    }
}

/// Fitted instrumental background a·e^{i(φ₀ − 2πτ(f − f_ref))}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    /// Background amplitude a.
    pub amplitude: f64,
    /// Cable delay τ (s).
    pub delay_s: f64,
    /// Background phase at the reference frequency (rad).
    pub phase_rad: f64,
    /// Reference frequency for the phase intercept (Hz).
    pub f_ref_hz: f64,
    /// True when no resonance dip was detected and the whole trace was
    /// treated as background.
    pub flat: bool,
}

impl Baseline {
    /// Evaluate the background at a frequency.
    pub fn eval(&self, f_hz: f64) -> Complex64 {
        let phase = self.phase_rad
            - 2.0 * std::f64::consts::PI * self.delay_s * (f_hz - self.f_ref_hz);
        Complex64::from_polar(self.amplitude, phase)
    }
}

/// Unwrap a phase sequence (shift successive samples by 2π to keep steps
/// within ±π).
fn unwrap_phases(raw: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut offset = 0.0;
    let mut prev = f64::NAN;
    for p in raw {
        if prev.is_finite() {
            let mut step = p + offset - prev;
            while step > std::f64::consts::PI {
                offset -= 2.0 * std::f64::consts::PI;
                step -= 2.0 * std::f64::consts::PI;
            }
            while step < -std::f64::consts::PI {
                offset += 2.0 * std::f64::consts::PI;
                step += 2.0 * std::f64::consts::PI;
            }
        }
        let v = p + offset;
        out.push(v);
        prev = v;
    }
    out
}

/// Least-squares line y = slope·x + intercept.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Fit the background on an index subset: amplitude from mean |S11|, phase
/// slope and intercept from a linear fit of the locally unwrapped phase.
fn baseline_on(trace: &ReflectionTrace, idx: &[usize], f_ref: f64) -> Baseline {
    let amp = idx.iter().map(|&i| trace.s11[i].norm()).sum::<f64>() / idx.len() as f64;
    let x: Vec<f64> = idx.iter().map(|&i| trace.freq_hz[i] - f_ref).collect();
    let ph = unwrap_phases(idx.iter().map(|&i| trace.s11[i].arg()));
    let (slope, intercept) = linear_fit(&x, &ph);
    Baseline {
        amplitude: amp,
        delay_s: -slope / (2.0 * std::f64::consts::PI),
        phase_rad: intercept,
        f_ref_hz: f_ref,
        flat: false,
    }
}

/// Divide a trace by a background.
fn apply_baseline(trace: &ReflectionTrace, b: &Baseline) -> ReflectionTrace {
    ReflectionTrace {
        freq_hz: trace.freq_hz.clone(),
        s11: trace
            .freq_hz
            .iter()
            .zip(&trace.s11)
            .map(|(&f, &s)| s / b.eval(f))
            .collect(),
        normalized: true,
    }
}

/// Fraction of the wing-fit scatter and dip depth below which the trace is
/// declared resonance-free.
const DIP_FLOOR: f64 = 0.05;

/// Cap on the alternating background/resonance refinement passes.
const NORMALIZE_MAX_PASSES: usize = 40;

/// Relative baseline step below which the alternation has settled.
const NORMALIZE_TOL: f64 = 1e-7;

/// Remove the instrumental background (amplitude and cable delay) from a raw
/// trace, returning the normalized trace and the fitted [`Baseline`].
///
/// The background is first fitted on the outer 20% of the grid (10% per
/// side). If a resonance is detected, background and resonance are then
/// refit alternately — divide the fitted resonance out of the raw data,
/// refit the background on the full grid, renormalize, refit the resonance —
/// until the background stops moving. The alternation removes the bias the
/// resonance's tails leave in a wings-only fit, which on a window a few
/// linewidths wide reaches percent level in amplitude and several percent in
/// the recovered rates. Traces with no detectable dip are returned
/// flat-flagged; resonances spanning more than 60% of the grid (at quarter
/// depth) are refused, since the wings then measure resonance, not
/// background.
pub fn normalize_trace(
    trace: &ReflectionTrace,
) -> Result<(ReflectionTrace, Baseline), EstimationError> {
    if trace.normalized {
        return Err(EstimationError::AlreadyNormalized);
    }
    let n = trace.freq_hz.len();
    let w = (n / 10).max(2);
    let wings: Vec<usize> = (0..w).chain(n - w..n).collect();
    let f_ref = trace.freq_hz[n / 2];

    // Pass 1: wings only, each side unwrapped separately (the resonance sits
    // between them and may wind the phase by a full turn).
    let left = baseline_on(trace, &wings[..w], f_ref);
    let right = baseline_on(trace, &wings[w..], f_ref);
    let amp = wings.iter().map(|&i| trace.s11[i].norm()).sum::<f64>() / wings.len() as f64;
    // Align the intercepts modulo 2π (the resonance winding is invisible in
    // the complex data) and average; the resonance's asymptotic phases are
    // odd in detuning and cancel here.
    let mut p_right = right.phase_rad;
    let turns = ((p_right - left.phase_rad) / (2.0 * std::f64::consts::PI)).round();
    p_right -= turns * 2.0 * std::f64::consts::PI;
    let mut base = Baseline {
        amplitude: amp,
        delay_s: (left.delay_s + right.delay_s) / 2.0,
        phase_rad: (left.phase_rad + p_right) / 2.0,
        f_ref_hz: f_ref,
        flat: false,
    };
    if !(base.amplitude > 0.0 && base.amplitude.is_finite() && base.delay_s.is_finite()) {
        return Err(EstimationError::InvalidTrace(
            "background fit produced a non-finite or non-positive baseline".into(),
        ));
    }
    let provisional = apply_baseline(trace, &base);

    // Dip detection against the wing scatter.
    let mags: Vec<f64> = provisional.s11.iter().map(|s| s.norm()).collect();
    let min_mag = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    let depth = 1.0 - min_mag;
    let wing_scatter = {
        let vals: Vec<f64> = wings.iter().map(|&i| mags[i]).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64).sqrt()
    };
    if depth < (5.0 * wing_scatter).max(DIP_FLOOR) {
        base.flat = true;
        return Ok((provisional, base));
    }

    // Resonance extent at quarter depth; beyond 60% the wings are not wings.
    let over: Vec<usize> = (0..n).filter(|&i| 1.0 - mags[i] > depth / 4.0).collect();
    let span_fraction = (over[over.len() - 1] - over[0]) as f64 / n as f64;
    if span_fraction > 0.6 {
        return Err(EstimationError::InsufficientWings { span_fraction });
    }

    // Alternate resonance and background fits: divide the current resonance
    // estimate out of the raw data, refit the background on every point,
    // renormalize, refit the resonance. The exact (background, resonance)
    // pair is a fixed point, and each pass shrinks the tail leakage
    // geometrically, so the loop settles in a handful of passes.
    let all: Vec<usize> = (0..n).collect();
    let span_hz = trace.freq_hz[n - 1] - trace.freq_hz[0];
    let mut normalized = provisional;
    for _ in 0..NORMALIZE_MAX_PASSES {
        let Ok(fit) = fit_s11(&normalized, None) else { break };
        let model_free = ReflectionTrace {
            freq_hz: trace.freq_hz.clone(),
            s11: trace
                .freq_hz
                .iter()
                .zip(&trace.s11)
                .map(|(&f, &s)| s / s11_model(f, fit.omega0, fit.kappa_ext, fit.kappa_int))
                .collect(),
            normalized: false,
        };
        let refined = baseline_on(&model_free, &all, f_ref);
        if !(refined.amplitude > 0.0
            && refined.amplitude.is_finite()
            && refined.delay_s.is_finite())
        {
            break;
        }
        // Step size as seen by the data: relative amplitude change plus the
        // phase the delay change winds across the window.
        let step = ((refined.amplitude - base.amplitude) / base.amplitude).abs()
            + ((refined.delay_s - base.delay_s) * span_hz).abs();
        base = refined;
        normalized = apply_baseline(trace, &base);
        if step < NORMALIZE_TOL {
            break;
        }
    }
    Ok((normalized, base))
}

/// Fitted resonance parameters and fit diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S11Fit {
    /// Resonance frequency ω₀ (rad/s).
    pub omega0: f64,
    /// External coupling rate κ_ext (rad/s).
    pub kappa_ext: f64,
    /// Internal loss rate κ_int (rad/s).
    pub kappa_int: f64,
    /// Final objective Σ|model − data|².
    pub residual: f64,
    /// Damped-least-squares iterations used.
    pub iterations: usize,
}

/// The reflection model 1 − κ_ext/(i(ω−ω₀) + κ_tot/2) at a grid frequency
/// in Hz, with ω₀ and the rates angular.
fn s11_model(f_hz: f64, omega0: f64, kappa_ext: f64, kappa_int: f64) -> Complex64 {
    let den = Complex64::new(
        (kappa_ext + kappa_int) / 2.0,
        2.0 * std::f64::consts::PI * f_hz - omega0,
    );
    1.0 - kappa_ext / den
}

/// Initialization from the data: ω₀ at the |S11| minimum, κ_tot from the
/// |S11|² full width at half depth, split by the on-resonance depth with the
/// over/under-coupled branch chosen by the phase winding (an over-coupled
/// trace encircles the origin).
fn init_from_trace(t: &ReflectionTrace) -> Result<(f64, f64, f64), EstimationError> {
    let mags: Vec<f64> = t.s11.iter().map(|s| s.norm()).collect();
    let (i0, min_mag) = mags
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, m)| (i, *m))
        .expect("traces are non-empty by construction");
    let depth = 1.0 - min_mag;
    if depth < DIP_FLOOR {
        return Err(EstimationError::NoResonanceFound { depth, floor: DIP_FLOOR });
    }
    let half_level = (1.0 + min_mag * min_mag) / 2.0;
    let mut li = i0;
    while li > 0 && mags[li] * mags[li] < half_level {
        li -= 1;
    }
    let mut ri = i0;
    while ri < mags.len() - 1 && mags[ri] * mags[ri] < half_level {
        ri += 1;
    }
    // For this dip shape the |S11|² half-depth width equals κ_tot exactly.
    let kappa_tot = 2.0 * std::f64::consts::PI * (t.freq_hz[ri] - t.freq_hz[li]).max(
        t.freq_hz[1] - t.freq_hz[0],
    );
    let winding: f64 = t
        .s11
        .windows(2)
        .map(|w| (w[1] / w[0]).arg())
        .sum();
    let over_coupled = winding.abs() > std::f64::consts::PI;
    let kappa_ext = if over_coupled {
        kappa_tot * (1.0 + min_mag) / 2.0
    } else {
        kappa_tot * (1.0 - min_mag) / 2.0
    };
    Ok((
        2.0 * std::f64::consts::PI * t.freq_hz[i0],
        kappa_ext,
        (kappa_tot - kappa_ext).max(kappa_tot * 1e-6),
    ))
}

/// Relative objective decrease below which the fit is converged.
const FIT_TOL: f64 = 1e-12;
/// Iteration budget for the damped least squares.
const FIT_MAX_ITERS: usize = 500;

/// Fit the resonance model to a normalized trace by damped least squares
/// over (ω₀, ln κ_ext, ln κ_int), with an analytic Jacobian.
///
/// `init` overrides the data-driven initialization with
/// (ω₀, κ_ext, κ_int) in rad/s. On iteration exhaustion the best iterate is
/// returned inside [`EstimationError::NonConvergence`].
pub fn fit_s11(
    trace: &ReflectionTrace,
    init: Option<(f64, f64, f64)>,
) -> Result<S11Fit, EstimationError> {
    if !trace.normalized {
        return Err(EstimationError::UnnormalizedTrace);
    }
    let (omega0_0, ke_0, ki_0) = match init {
        Some((w0, ke, ki)) => {
            if !(ke > 0.0 && ki > 0.0 && w0 > 0.0) {
                return Err(EstimationError::InvalidInput(
                    "initialization requires positive ω₀, κ_ext, κ_int".into(),
                ));
            }
            (w0, ke, ki)
        }
        None => init_from_trace(trace)?,
    };
    // Parameters p = (ω₀, ln κ_ext, ln κ_int).
    let mut p = [omega0_0, ke_0.ln(), ki_0.ln()];
    let objective = |p: &[f64; 3]| -> f64 {
        trace
            .freq_hz
            .iter()
            .zip(&trace.s11)
            .map(|(&f, &s)| (s11_model(f, p[0], p[1].exp(), p[2].exp()) - s).norm_sqr())
            .sum()
    };
    let mut cur = objective(&p);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < FIT_MAX_ITERS {
        iterations += 1;
        let (ke, ki) = (p[1].exp(), p[2].exp());
        // Normal equations from the stacked real/imag residuals.
        let mut a = [[0.0f64; 3]; 3];
        let mut g = [0.0f64; 3];
        for (&f, &s) in trace.freq_hz.iter().zip(&trace.s11) {
            let den = Complex64::new((ke + ki) / 2.0, 2.0 * std::f64::consts::PI * f - p[0]);
            let den2 = den * den;
            let r = (1.0 - ke / den) - s;
            // S = 1 − κe/den ⇒ dS = (κe/den²)·d(den); d(den)/dω₀ = −i,
            // d(den)/dκe = d(den)/dκi = 1/2; extra −1/den from the κe in the
            // numerator; ×κ for the log parameters.
            let j = [
                ke / den2 * Complex64::new(0.0, -1.0),
                (-1.0 / den + ke / (2.0 * den2)) * ke,
                ke / (2.0 * den2) * ki,
            ];
            for r_i in 0..3 {
                g[r_i] += j[r_i].re * r.re + j[r_i].im * r.im;
                for c_i in r_i..3 {
                    a[r_i][c_i] += j[r_i].re * j[c_i].re + j[r_i].im * j[c_i].im;
                }
            }
        }
        for r_i in 0..3 {
            for c_i in 0..r_i {
                a[r_i][c_i] = a[c_i][r_i];
            }
        }
        // Damped step: solve (A + λ·diag A)·δ = −g, growing λ until the
        // objective decreases.
        let mut improved = false;
        let mut rel = 0.0;
        for _ in 0..40 {
            let mut m = a;
            for (r_i, row) in m.iter_mut().enumerate() {
                row[r_i] += lambda * a[r_i][r_i].max(1e-300);
            }
            if let Some(dp) = solve3(&m, &[-g[0], -g[1], -g[2]]) {
                let pn = [p[0] + dp[0], p[1] + dp[1], p[2] + dp[2]];
                let on = objective(&pn);
                if on.is_finite() && on < cur {
                    rel = (cur - on) / cur.max(f64::MIN_POSITIVE);
                    p = pn;
                    cur = on;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            // The damping saturated: no direction decreases the objective —
            // the iterate is at the (numerical) minimum.
            converged = true;
            break;
        }
        if rel < FIT_TOL {
            converged = true;
            break;
        }
    }
    let fit = S11Fit {
        omega0: p[0],
        kappa_ext: p[1].exp(),
        kappa_int: p[2].exp(),
        residual: cur,
        iterations,
    };
    if converged {
        Ok(fit)
    } else {
        Err(EstimationError::NonConvergence {
            iterations,
            residual: cur,
            best: Box::new(fit),
        })
    }
}

/// Solve a 3×3 linear system by Gaussian elimination with partial pivoting.
fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&r, &s| m[r][col].abs().total_cmp(&m[s][col].abs()))?;
        m.swap(col, piv);
        if m[col][col].abs() < 1e-300 {
            return None;
        }
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let mut s = m[row][3];
        for k in row + 1..3 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}

/// Linearized 1σ uncertainties of a converged reflection fit (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S11FitSigmas {
    /// 1σ on ω₀ (rad/s).
    pub omega0: f64,
    /// 1σ on κ_ext (rad/s).
    pub kappa_ext: f64,
    /// 1σ on κ_int (rad/s).
    pub kappa_int: f64,
}

/// Linearized parameter uncertainties at a fitted point.
///
/// The per-point noise is estimated from the fit itself,
/// σ_noise² = residual/(2N − 3) (N complex samples stack into 2N real
/// residuals, minus 3 parameters), and propagated through the normal matrix
/// of the *linear* parameters: Cov = σ_noise²·(JᵀJ)⁻¹. A noiseless trace has
/// numerically zero residual and therefore (correctly) near-zero σ.
pub fn s11_fit_sigmas(
    trace: &ReflectionTrace,
    fit: &S11Fit,
) -> Result<S11FitSigmas, EstimationError> {
    let (w0, ke, ki) = (fit.omega0, fit.kappa_ext, fit.kappa_int);
    let mut a = [[0.0f64; 3]; 3];
    for &f in &trace.freq_hz {
        let den = Complex64::new((ke + ki) / 2.0, 2.0 * std::f64::consts::PI * f - w0);
        let den2 = den * den;
        // Same derivatives as the fit loop, without the log-parameter
        // chain-rule factors: these are ∂S/∂(ω₀, κ_ext, κ_int) directly.
        let j = [
            ke / den2 * Complex64::new(0.0, -1.0),
            -1.0 / den + ke / (2.0 * den2),
            ke / (2.0 * den2),
        ];
        for r_i in 0..3 {
            for c_i in r_i..3 {
                a[r_i][c_i] += j[r_i].re * j[c_i].re + j[r_i].im * j[c_i].im;
            }
        }
    }
    for r_i in 0..3 {
        for c_i in 0..r_i {
            a[r_i][c_i] = a[c_i][r_i];
        }
    }
    let dof = (2 * trace.freq_hz.len()).saturating_sub(3) as f64;
    let noise_var = fit.residual / dof.max(1.0);
    let mut sig = [0.0f64; 3];
    for k in 0..3 {
        let mut e = [0.0f64; 3];
        e[k] = 1.0;
        let col = solve3(&a, &e).ok_or_else(|| {
            EstimationError::InvalidInput(
                "singular normal matrix: the trace does not constrain the resonance".into(),
            )
        })?;
        sig[k] = (noise_var * col[k].max(0.0)).sqrt();
    }
    Ok(S11FitSigmas { omega0: sig[0], kappa_ext: sig[1], kappa_int: sig[2] })
}

/// Fitted critical pump power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainCurveFit {
    /// Critical power P_c (dBm, at the same reference plane as the data).
    pub p_c_dbm: f64,
    /// Final objective Σ(model_dB − data_dB)².
    pub residual: f64,
}

/// Golden-section half-width at which the P_c search stops (dB).
const PC_SEARCH_TOL: f64 = 1e-4;

/// Fit the below-threshold gain law G(P) = 1 + 4X/(1−X)², X = 10^((P−P_c)/10),
/// to a measured gain curve by least squares in dB over the single parameter
/// P_c, searched by golden section on [P_max + 0.01 dB, P_max + 30 dB]. The
/// floor sits a hair above the largest measured power so that curves sampled
/// arbitrarily close to threshold (40 dB of gain is only 0.087 dB below P_c)
/// remain representable.
///
/// A fit that presses against the lower search edge means the optimizer
/// wants the threshold inside the data, which the model cannot represent;
/// that is reported as [`EstimationError::ThresholdInsideData`].
pub fn fit_gain_curve(curve: &GainCurve) -> Result<GainCurveFit, EstimationError> {
    let pts = &curve.samples;
    if pts.len() < 4 {
        return Err(EstimationError::InvalidInput(format!(
            "gain-curve fit needs at least 4 points, got {}",
            pts.len()
        )));
    }
    if !pts.iter().all(|(p, g)| p.is_finite() && g.is_finite()) {
        return Err(EstimationError::InvalidInput("non-finite gain-curve samples".into()));
    }
    let p_max = pts.iter().map(|(p, _)| *p).fold(f64::NEG_INFINITY, f64::max);
    let sse = |p_c: f64| -> f64 {
        pts.iter()
            .map(|&(p, g_db)| {
                let x = db_to_ratio(p - p_c);
                let model = ratio_to_db(1.0 + 4.0 * x / ((1.0 - x) * (1.0 - x)));
                (model - g_db) * (model - g_db)
            })
            .sum()
    };
    let (mut lo, mut hi) = (p_max + 0.01, p_max + 30.0);
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (sse(c), sse(d));
    while hi - lo > PC_SEARCH_TOL {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = sse(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = sse(d);
        }
    }
    let p_c = (lo + hi) / 2.0;
    if p_c - (p_max + 0.01) < 2.0 * PC_SEARCH_TOL {
        return Err(EstimationError::ThresholdInsideData { p_c_dbm: p_c, max_power_dbm: p_max });
    }
    Ok(GainCurveFit { p_c_dbm: p_c, residual: sse(p_c) })
}

/// Linearized 1σ uncertainty of a fitted critical power (dB).
///
/// The per-point noise is σ_noise² = residual/(N − 1), propagated through the
/// one-parameter normal equation σ² = σ_noise²/Σ(∂model_dB/∂P_c)². The
/// sensitivity is taken by central difference (the model is smooth in P_c and
/// the converged P_c sits at least 0.01 dB above the data, so a 10⁻⁴ dB step
/// stays inside the valid domain). Returns infinity for a curve so flat the
/// threshold leaves no imprint (Σ(∂model/∂P_c)² = 0).
pub fn gain_fit_sigma(curve: &GainCurve, fit: &GainCurveFit) -> f64 {
    let model = |p: f64, p_c: f64| -> f64 {
        let x = db_to_ratio(p - p_c);
        ratio_to_db(1.0 + 4.0 * x / ((1.0 - x) * (1.0 - x)))
    };
    let h = 1e-4; // dB
    let jtj: f64 = curve
        .samples
        .iter()
        .map(|&(p, _)| {
            let d = (model(p, fit.p_c_dbm + h) - model(p, fit.p_c_dbm - h)) / (2.0 * h);
            d * d
        })
        .sum();
    if jtj == 0.0 {
        return f64::INFINITY;
    }
    let dof = (curve.samples.len().saturating_sub(1)).max(1) as f64;
    (fit.residual / dof / jtj).sqrt()
}

/// Signal-to-noise-ratio improvement 1/(T_JPA/T_cryo + 1/G) as a power
/// ratio; `g_jpa` is the JPA gain as a ratio (not dB).
pub fn snri(t_jpa_k: f64, t_cryo_k: f64, g_jpa: f64) -> f64 {
    assert!(t_jpa_k >= 0.0, "JPA noise temperature must be ≥ 0, got {t_jpa_k}");
    assert!(t_cryo_k > 0.0, "cryogenic noise temperature must be > 0, got {t_cryo_k}");
    assert!(g_jpa > 0.0, "gain ratio must be > 0, got {g_jpa}");
    1.0 / (t_jpa_k / t_cryo_k + 1.0 / g_jpa)
}

/// Invert the SNRI relation to the amplifier noise temperature
/// T_JPA = T_cryo·(1/SNRI − 1/G); both `snri` and `g_jpa` are power ratios.
///
/// SNRI = G is the noiseless amplifier (0 K exactly); SNRI > G is
/// unphysical.
pub fn invert_snri(snri: f64, t_cryo_k: f64, g_jpa: f64) -> Result<f64, EstimationError> {
    if !(snri > 0.0 && t_cryo_k > 0.0 && g_jpa > 0.0) {
        return Err(EstimationError::InvalidInput(format!(
            "snri, t_cryo, gain must be positive: {snri}, {t_cryo_k}, {g_jpa}"
        )));
    }
    if snri > g_jpa {
        return Err(EstimationError::UnphysicalSNRI { snri, gain: g_jpa });
    }
    Ok(t_cryo_k * (1.0 / snri - 1.0 / g_jpa))
}

/// Noise temperature → added quanta, n = k_B·T/(ħω), in the linear
/// (classical-equivalent) convention under which the half-quantum vacuum
/// benchmark corresponds to exactly ħω/2k_B.
pub fn temperature_to_quanta(t_k: f64, omega: f64) -> f64 {
    assert!(t_k >= 0.0, "temperature must be ≥ 0, got {t_k}");
    assert!(omega > 0.0, "frequency must be > 0, got {omega}");
    KB * t_k / (HBAR * omega)
}

/// A value with a 1σ Gaussian uncertainty, in the units it is quoted in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uncertain {
    pub value: f64,
    pub sigma: f64,
}

impl Uncertain {
    /// A value with uncertainty.
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    /// A value known exactly.
    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }
}

/// Measured inputs to the noise budget. Exactly one of `snri_db` (direct
/// measurement) or `noise_rise_db` (from which SNRI_dB = G_dB − rise_dB is
/// derived) must be given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetInputs {
    /// JPA gain (dB).
    pub g_jpa_db: Uncertain,
    /// Directly measured SNR improvement (dB), if available.
    pub snri_db: Option<Uncertain>,
    /// Measured noise-floor rise when the pump turns on (dB), if available.
    pub noise_rise_db: Option<Uncertain>,
    /// Cryogenic system noise temperature (K).
    pub t_cryo_k: Uncertain,
    /// Signal frequency for the quanta conversion (rad/s).
    pub omega_signal: f64,
}

/// A propagated noise budget: inputs echoed, derived quantities with Monte
/// Carlo uncertainties, and the draw bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    /// JPA gain (dB), echoed input.
    pub g_jpa_db: Uncertain,
    /// Noise-floor rise (dB), echoed input when given.
    pub noise_rise_db: Option<Uncertain>,
    /// SNR improvement (dB): echoed input, or sample statistics when derived
    /// from the noise rise.
    pub snri_db: Uncertain,
    /// True when `snri_db` was derived rather than measured.
    pub snri_derived: bool,
    /// Cryogenic noise temperature (K), echoed input.
    pub t_cryo_k: Uncertain,
    /// Derived JPA noise temperature (K), sample mean ± std.
    pub t_jpa_k: Uncertain,
    /// Derived added noise quanta, sample mean ± std.
    pub quanta_added: Uncertain,
    /// Signal frequency (rad/s).
    pub omega_signal: f64,
    /// Monte Carlo draws attempted.
    pub draws: u64,
    /// Draws rejected as unphysical (SNRI > G or T_cryo ≤ 0 or G ≤ 0 dB).
    pub rejected: u64,
    /// PRNG seed.
    pub seed: u64,
}

/// Monte Carlo draw count used by [`propagate_budget`].
pub const BUDGET_DRAWS: usize = 100_000;
/// Rejected-draw fraction beyond which propagation refuses.
const REJECTION_LIMIT: f64 = 0.01;

/// Sample mean and (n−1)-normalized standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Propagate the measured uncertainties through the SNRI → T_JPA → quanta
/// chain with 10⁵ seeded Gaussian draws (see [`propagate_budget_draws`]).
pub fn propagate_budget(inputs: &BudgetInputs, seed: u64) -> Result<NoiseBudget, EstimationError> {
    propagate_budget_draws(inputs, seed, BUDGET_DRAWS)
}

/// [`propagate_budget`] with an explicit draw count (exposed for convergence
/// checks).
///
/// Each input variable draws from its own PRNG stream
/// (`ChaCha8Rng::set_stream`), so the result is reproducible bit-for-bit and
/// independent of evaluation order. Draws with SNRI > G, T_cryo ≤ 0, or
/// G ≤ 0 dB are counted as rejected; above 1% rejection the statistics over
/// the accepted draws are returned inside
/// [`EstimationError::TooManyRejections`] rather than presented as a valid
/// Gaussian budget.
pub fn propagate_budget_draws(
    inputs: &BudgetInputs,
    seed: u64,
    draws: usize,
) -> Result<NoiseBudget, EstimationError> {
    if draws < 2 {
        return Err(EstimationError::InvalidInput("need at least 2 draws".into()));
    }
    if !(inputs.omega_signal > 0.0) {
        return Err(EstimationError::InvalidInput(format!(
            "signal frequency must be > 0, got {}",
            inputs.omega_signal
        )));
    }
    if !(inputs.t_cryo_k.value > 0.0) {
        return Err(EstimationError::InvalidInput(format!(
            "cryogenic temperature must be > 0, got {}",
            inputs.t_cryo_k.value
        )));
    }
    let (snri_in, derived) = match (inputs.snri_db, inputs.noise_rise_db) {
        (Some(s), None) => (s, false),
        (None, Some(r)) => (r, true), // drawn as noise rise, converted per draw
        (Some(_), Some(_)) => {
            return Err(EstimationError::InvalidInput(
                "give either snri_db or noise_rise_db, not both".into(),
            ))
        }
        (None, None) => {
            return Err(EstimationError::InvalidInput(
                "one of snri_db or noise_rise_db is required".into(),
            ))
        }
    };
    for (name, u) in [
        ("g_jpa_db", inputs.g_jpa_db),
        ("snri/noise-rise", snri_in),
        ("t_cryo_k", inputs.t_cryo_k),
    ] {
        if !(u.sigma >= 0.0 && u.sigma.is_finite() && u.value.is_finite()) {
            return Err(EstimationError::InvalidInput(format!(
                "{name} must be finite with σ ≥ 0: {} ± {}",
                u.value, u.sigma
            )));
        }
    }

    // One PRNG stream per variable keeps the draws independent of the order
    // in which variables are evaluated (or parallelized).
    let gauss = |stream: u64, u: Uncertain| -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let normal = Normal::new(0.0, 1.0).expect("unit normal is well-formed");
        (0..draws).map(|_| u.value + u.sigma * normal.sample(&mut rng)).collect()
    };
    let g_draws = gauss(0, inputs.g_jpa_db);
    let second = gauss(1, snri_in);
    let t_draws = gauss(2, inputs.t_cryo_k);

    let mut t_jpa = Vec::with_capacity(draws);
    let mut quanta = Vec::with_capacity(draws);
    let mut snri_samples = Vec::with_capacity(draws);
    let mut rejected = 0u64;
    for i in 0..draws {
        let g_db = g_draws[i];
        let snri_db = if derived { g_db - second[i] } else { second[i] };
        let t_cryo = t_draws[i];
        let g = db_to_ratio(g_db);
        let s = db_to_ratio(snri_db);
        if !(g_db > 0.0) || !(t_cryo > 0.0) || s > g {
            rejected += 1;
            continue;
        }
        let t = t_cryo * (1.0 / s - 1.0 / g);
        t_jpa.push(t);
        quanta.push(KB * t / (HBAR * inputs.omega_signal));
        snri_samples.push(snri_db);
    }
    if t_jpa.is_empty() {
        return Err(EstimationError::InvalidInput(
            "every Monte Carlo draw was unphysical; check the inputs".into(),
        ));
    }
    let (tm, ts) = mean_std(&t_jpa);
    let (qm, qs) = mean_std(&quanta);
    let snri_out = if derived {
        let (sm, ss) = mean_std(&snri_samples);
        Uncertain::new(sm, ss)
    } else {
        snri_in
    };
    let budget = NoiseBudget {
        g_jpa_db: inputs.g_jpa_db,
        noise_rise_db: if derived { Some(snri_in) } else { inputs.noise_rise_db },
        snri_db: snri_out,
        snri_derived: derived,
        t_cryo_k: inputs.t_cryo_k,
        t_jpa_k: Uncertain::new(tm, ts),
        quanta_added: Uncertain::new(qm, qs),
        omega_signal: inputs.omega_signal,
        draws: draws as u64,
        rejected,
        seed,
    };
    if rejected as f64 > REJECTION_LIMIT * draws as f64 {
        return Err(EstimationError::TooManyRejections {
            rejected,
            draws: draws as u64,
            budget: Box::new(budget),
        });
    }
    Ok(budget)
}
