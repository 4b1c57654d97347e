//! CSV interfaces: reflection traces and gain curves in, flux maps, gain
//! curves, and trajectories out.
//!
//! Formats (all UTF-8, `\n` line endings, one header row):
//!
//! * reflection trace (in/out): `freq_hz,re_s11,im_s11`
//! * gain curve (in): `power_dbm,gain_db` — the exported headers
//!   `pump_power_dbm,gain_db` / `signal_power_dbm,gain_db` are also
//!   accepted, so exported sweeps feed straight back into the fitter
//! * gain curve (out): `pump_power_dbm,gain_db` or `signal_power_dbm,gain_db`
//!   depending on the swept axis
//! * flux map (out): `phi_dc,omega_c_hz,slope_hz_per_phi0,kerr_cav_hz`,
//!   masked rows carrying empty value cells
//! * trajectory (out): `t_s,re_alpha,im_alpha`
//!
//! Readers report failures with 1-based line numbers; writers format floats
//! with Rust's shortest-round-trip representation, so written files parse
//! back to bit-identical values and identical inputs produce byte-identical
//! outputs.

use std::io::{Read, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::amplifier::{AmplifierError, GainCurve, PowerAxis};
use crate::estimation::{EstimationError, ReflectionTrace};
use crate::oracle::Trajectory;
use crate::spectrum::FluxMapRow;

/// Errors from reading or writing the CSV interfaces.
#[derive(Debug, Error)]
pub enum IoError {
    /// Underlying stream failure.
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    /// The header row does not match the contract.
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    /// A data row failed to parse.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    /// The parsed trace violates a trace invariant.
    #[error("invalid trace: {0}")]
    Trace(#[from] EstimationError),
    /// The parsed gain curve violates a curve invariant.
    #[error("invalid gain curve: {0}")]
    Curve(#[from] AmplifierError),
    /// The file parsed but holds no data rows.
    #[error("no data rows in {what}")]
    Empty { what: String },
}

/// Build a CSV reader over the raw bytes, tolerating a UTF-8 byte-order
/// mark and CRLF line endings on input.
fn csv_reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    let bytes = bytes.strip_prefix(b"\xef\xbb\xbf").unwrap_or(bytes);
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(bytes)
}

/// Check the header row against the accepted variants, returning the index
/// of the matching variant.
fn match_header(
    rdr: &mut csv::Reader<&[u8]>,
    accepted: &[&[&str]],
) -> Result<usize, IoError> {
    let headers = rdr.headers().map_err(|e| IoError::Parse {
        line: 1,
        message: format!("unreadable header: {e}"),
    })?;
    let found: Vec<&str> = headers.iter().collect();
    for (i, variant) in accepted.iter().enumerate() {
        if found == *variant {
            return Ok(i);
        }
    }
    Err(IoError::Header {
        expected: accepted
            .iter()
            .map(|v| v.join(","))
            .collect::<Vec<_>>()
            .join("` or `"),
        found: found.join(","),
    })
}

/// Line number of a record (1-based, counting the header row).
fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Parse one float field with a line-and-field diagnostic.
fn parse_field(record: &csv::StringRecord, idx: usize, name: &str) -> Result<f64, IoError> {
    let raw = record.get(idx).ok_or_else(|| IoError::Parse {
        line: record_line(record),
        message: format!("missing field `{name}`"),
    })?;
    let v: f64 = raw.parse().map_err(|_| IoError::Parse {
        line: record_line(record),
        message: format!("field `{name}` is not a number: `{raw}`"),
    })?;
    if !v.is_finite() {
        return Err(IoError::Parse {
            line: record_line(record),
            message: format!("field `{name}` must be finite, got `{raw}`"),
        });
    }
    Ok(v)
}

/// Read a reflection trace from `freq_hz,re_s11,im_s11` CSV. The grid and
/// sample invariants (≥ 16 points, strictly increasing, finite) are enforced
/// by [`ReflectionTrace::new`].
pub fn read_reflection_trace<R: Read>(mut r: R) -> Result<ReflectionTrace, IoError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut rdr = csv_reader(&bytes);
    match_header(&mut rdr, &[&["freq_hz", "re_s11", "im_s11"]])?;
    let mut freq = Vec::new();
    let mut s11 = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| IoError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        freq.push(parse_field(&record, 0, "freq_hz")?);
        s11.push(Complex64::new(
            parse_field(&record, 1, "re_s11")?,
            parse_field(&record, 2, "im_s11")?,
        ));
    }
    if freq.is_empty() {
        return Err(IoError::Empty { what: "reflection trace".into() });
    }
    Ok(ReflectionTrace::new(freq, s11)?)
}

/// Write a reflection trace as `freq_hz,re_s11,im_s11` CSV.
pub fn write_reflection_trace<W: Write>(mut w: W, t: &ReflectionTrace) -> Result<(), IoError> {
    writeln!(w, "freq_hz,re_s11,im_s11")?;
    for (f, s) in t.freq_hz.iter().zip(&t.s11) {
        writeln!(w, "{},{},{}", f, s.re, s.im)?;
    }
    Ok(())
}

/// Read a gain curve from `power_dbm,gain_db` CSV. The exported axis-named
/// headers are accepted too and set the curve's [`PowerAxis`] accordingly.
pub fn read_gain_curve<R: Read>(mut r: R) -> Result<GainCurve, IoError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut rdr = csv_reader(&bytes);
    let variant = match_header(
        &mut rdr,
        &[
            &["power_dbm", "gain_db"],
            &["pump_power_dbm", "gain_db"],
            &["signal_power_dbm", "gain_db"],
        ],
    )?;
    let axis = if variant == 2 { PowerAxis::SignalPower } else { PowerAxis::PumpPower };
    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| IoError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        samples.push((
            parse_field(&record, 0, "power_dbm")?,
            parse_field(&record, 1, "gain_db")?,
        ));
    }
    if samples.is_empty() {
        return Err(IoError::Empty { what: "gain curve".into() });
    }
    Ok(GainCurve::new(axis, samples, None, 0.0)?)
}

/// Write a gain curve with the axis-appropriate header
/// (`pump_power_dbm,gain_db` or `signal_power_dbm,gain_db`).
pub fn write_gain_curve<W: Write>(mut w: W, curve: &GainCurve) -> Result<(), IoError> {
    let power_col = match curve.axis {
        PowerAxis::PumpPower => "pump_power_dbm",
        PowerAxis::SignalPower => "signal_power_dbm",
    };
    writeln!(w, "{power_col},gain_db")?;
    for (p, g) in &curve.samples {
        writeln!(w, "{},{}", p, g)?;
    }
    Ok(())
}

/// Write a flux map as `phi_dc,omega_c_hz,slope_hz_per_phi0,kerr_cav_hz`
/// CSV; masked rows keep their flux but leave the value cells empty.
pub fn write_flux_map<W: Write>(mut w: W, rows: &[FluxMapRow]) -> Result<(), IoError> {
    writeln!(w, "phi_dc,omega_c_hz,slope_hz_per_phi0,kerr_cav_hz")?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in rows {
        writeln!(
            w,
            "{},{},{},{}",
            row.phi_dc,
            cell(row.omega_c_hz),
            cell(row.slope_hz_per_phi0),
            cell(row.kerr_cav_hz)
        )?;
    }
    Ok(())
}

/// Write an integrated trajectory as `t_s,re_alpha,im_alpha` CSV.
pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory) -> Result<(), IoError> {
    writeln!(w, "t_s,re_alpha,im_alpha")?;
    for (t, a) in traj.t.iter().zip(&traj.alpha) {
        writeln!(w, "{},{},{}", t, a.re, a.im)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_trace() -> ReflectionTrace {
        let freq: Vec<f64> = (0..32).map(|i| 8.2e9 + 1e5 * i as f64).collect();
        let s11 = freq
            .iter()
            .map(|&f| Complex64::new((f / 1e10).sin(), (f / 1e10).cos() * 0.5))
            .collect();
        ReflectionTrace::new(freq, s11).unwrap()
    }

    #[test]
    fn trace_round_trips_bit_exactly() {
        let t = sample_trace();
        let mut buf = Vec::new();
        write_reflection_trace(&mut buf, &t).unwrap();
        let back = read_reflection_trace(buf.as_slice()).unwrap();
        assert_eq!(back.freq_hz, t.freq_hz, "grid must survive a write/read round trip");
        assert_eq!(back.s11, t.s11, "samples must survive a write/read round trip");
    }

    #[test]
    fn trace_header_is_enforced() {
        let csv = "frequency,re,im\n8.2e9,1,0\n";
        assert!(
            matches!(
                read_reflection_trace(csv.as_bytes()),
                Err(IoError::Header { .. })
            ),
            "a wrong header must be refused with the expected/found names"
        );
    }

    #[test]
    fn trace_parse_errors_carry_line_numbers() {
        let mut csv = String::from("freq_hz,re_s11,im_s11\n");
        for i in 0..20 {
            csv.push_str(&format!("{},0.5,0.1\n", 8.2e9 + 1e5 * i as f64));
        }
        csv.push_str("not-a-number,0.5,0.1\n"); // line 22
        match read_reflection_trace(csv.as_bytes()) {
            Err(IoError::Parse { line, message }) => {
                assert_eq!(line, 22, "the diagnostic must name the offending line");
                assert!(message.contains("freq_hz"), "and the offending field");
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn trace_invariants_apply_after_parsing() {
        let csv = "freq_hz,re_s11,im_s11\n8.2e9,1,0\n8.1e9,1,0\n"; // decreasing, <16 pts
        assert!(
            matches!(read_reflection_trace(csv.as_bytes()), Err(IoError::Trace(_))),
            "trace invariants must be enforced on parsed data"
        );
    }

    #[test]
    fn trace_tolerates_bom_and_crlf() {
        let mut csv: Vec<u8> = b"\xef\xbb\xbffreq_hz,re_s11,im_s11\r\n".to_vec();
        for i in 0..20 {
            csv.extend_from_slice(format!("{},0.5,0.1\r\n", 8.2e9 + 1e5 * i as f64).as_bytes());
        }
        let t = read_reflection_trace(csv.as_slice()).unwrap();
        assert_eq!(t.freq_hz.len(), 20, "BOM and CRLF input must parse");
    }

    #[test]
    fn gain_curve_round_trips_and_accepts_all_headers() {
        let curve = GainCurve {
            axis: PowerAxis::SignalPower,
            samples: vec![(-140.0, 19.99), (-130.0, 19.5), (-120.0, 17.0)],
            phi_dc: Some(0.3),
            delta_pump: 0.0,
        };
        let mut buf = Vec::new();
        write_gain_curve(&mut buf, &curve).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(
            text.starts_with("signal_power_dbm,gain_db\n"),
            "signal sweeps are labelled by their axis"
        );
        let back = read_gain_curve(buf.as_slice()).unwrap();
        assert_eq!(back.axis, PowerAxis::SignalPower, "axis survives the round trip");
        assert_eq!(back.samples, curve.samples, "samples survive the round trip");
        let generic = "power_dbm,gain_db\n-45,0.5\n-40,1.2\n";
        let g = read_gain_curve(generic.as_bytes()).unwrap();
        assert_eq!(g.samples.len(), 2, "the generic input header must be accepted");
        assert_eq!(g.axis, PowerAxis::PumpPower, "generic power defaults to the pump axis");
    }

    #[test]
    fn flux_map_blanks_masked_rows() {
        let rows = vec![
            FluxMapRow {
                phi_dc: 0.0,
                omega_c_hz: Some(8.22e9),
                slope_hz_per_phi0: Some(-1.0e6),
                kerr_cav_hz: Some(-7.0),
                masked: false,
            },
            FluxMapRow {
                phi_dc: 0.5,
                omega_c_hz: None,
                slope_hz_per_phi0: None,
                kerr_cav_hz: None,
                masked: true,
            },
        ];
        let mut buf = Vec::new();
        write_flux_map(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "phi_dc,omega_c_hz,slope_hz_per_phi0,kerr_cav_hz");
        assert_eq!(lines[2], "0.5,,,", "masked rows keep the flux and blank the values");
    }

    #[test]
    fn trajectory_header_and_rows() {
        let traj = Trajectory {
            t: vec![0.0, 1e-9],
            alpha: vec![Complex64::new(1.0, 0.0), Complex64::new(0.9, -0.1)],
        };
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t_s,re_alpha,im_alpha\n0,1,0\n0.000000001,0.9,-0.1\n");
    }
}
