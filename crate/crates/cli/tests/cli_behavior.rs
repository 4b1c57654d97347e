//! End-to-end behavior of the `jpa` binary: output routing, JSON report
//! contents, exit-code classes, and byte-level determinism. Every test runs
//! the real executable via `CARGO_BIN_EXE_jpa`.

use std::path::PathBuf;
use std::process::{Command, Output};

use jpa_core::amplifier::linear_s11;
use jpa_core::constants::hz_to_angular;
use jpa_core::estimation::ReflectionTrace;
use jpa_core::io::write_reflection_trace;
use jpa_core::spectrum::CavityMode;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn config_path() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/device.json").to_string()
}

fn jpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jpa"))
        .args(args)
        .output()
        .expect("the jpa binary must spawn")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout must be JSON: {e}\n--- stdout ---\n{}", String::from_utf8_lossy(&out.stdout))
    })
}

#[test]
fn fluxmap_streams_csv_to_stdout_without_out() {
    let out = jpa(&["--config", &config_path(), "fluxmap", "--points", "5"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).expect("CSV must be UTF-8");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "phi_dc,omega_c_hz,slope_hz_per_phi0,masked");
    assert_eq!(lines.len(), 6, "header plus one row per grid point");
    assert!(text.ends_with('\n') && !text.contains('\r'), "plain \\n line endings");
}

#[test]
fn fluxmap_single_point_and_file_routing() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("map.csv");
    let out = jpa(&[
        "--config",
        &config_path(),
        "fluxmap",
        "--phi-min",
        "0.3",
        "--points",
        "1",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv.lines().count(), 2, "--points 1 writes a single data row");
    assert!(csv.lines().nth(1).unwrap().starts_with("0.3,"));
    // With --out, stdout carries the provenance report instead of the CSV.
    let v = stdout_json(&out);
    assert_eq!(v["command"], "fluxmap");
    assert_eq!(v["points"], 1);
    assert!(
        v["device"]["calibration"]["g_hz"].as_f64().unwrap() > 0.0,
        "the resolved coupling must be echoed for provenance"
    );
}

#[test]
fn all_masked_fluxmap_warns_but_succeeds() {
    let out = jpa(&[
        "--config",
        &config_path(),
        "fluxmap",
        "--phi-min",
        "0.49",
        "--phi-max",
        "0.51",
        "--points",
        "3",
    ]);
    assert!(out.status.success(), "an all-masked request is degenerate, not an error");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("warning") && err.contains("cutoff"), "stderr: {err}");
    for line in String::from_utf8_lossy(&out.stdout).lines().skip(1) {
        assert!(line.ends_with(",,,true"), "every row must be masked: {line}");
    }
}

#[test]
fn noise_reproduces_the_reference_budget() {
    let out = jpa(&["noise", "--snri-db", "13", "--g-db", "17.8", "--t-cryo-k", "4.4"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    let t_jpa = v["budget"]["t_jpa_k"]["value"].as_f64().unwrap();
    assert!((t_jpa - 0.1475).abs() < 1e-3, "T_JPA must be 0.1475 K, got {t_jpa}");
    let quanta = v["budget"]["quanta_added"]["value"].as_f64().unwrap();
    assert!((quanta - 0.370).abs() < 2e-3, "0.370 quanta at 8.3 GHz, got {quanta}");
    let vac = v["vacuum_temperature_k"].as_f64().unwrap();
    assert!((vac - 0.1992).abs() < 1e-3, "vacuum benchmark 0.1992 K, got {vac}");
    assert_eq!(v["budget"]["draws"], 0, "no sigmas → plain arithmetic, no sampling");
}

#[test]
fn noise_rise_input_derives_the_same_budget() {
    // rise = G − SNRI = 17.8 − 13 = 4.8 dB must invert identically.
    let out =
        jpa(&["noise", "--noise-rise-db", "4.8", "--g-db", "17.8", "--t-cryo-k", "4.4"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["budget"]["snri_derived"], true);
    let snri = v["budget"]["snri_db"]["value"].as_f64().unwrap();
    assert!((snri - 13.0).abs() < 1e-12, "derived SNRI must be exactly G − rise");
    let t_jpa = v["budget"]["t_jpa_k"]["value"].as_f64().unwrap();
    assert!((t_jpa - 0.1475).abs() < 1e-3);
}

#[test]
fn unphysical_snri_is_a_domain_error() {
    let out = jpa(&["noise", "--snri-db", "19", "--g-db", "17.8", "--t-cryo-k", "4.4"]);
    assert_eq!(out.status.code(), Some(3), "SNRI > G has no temperature solution");
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds the gain"));
}

#[test]
fn config_and_usage_problems_exit_2() {
    // Missing --config for a device-backed subcommand.
    let out = jpa(&["fluxmap"]);
    assert_eq!(out.status.code(), Some(2));
    // Unreadable config path.
    let out = jpa(&["--config", "/nonexistent/device.json", "fluxmap"]);
    assert_eq!(out.status.code(), Some(2));
    // Unknown config field (schema violation).
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        std::fs::read_to_string(config_path()).unwrap().replace("attenuation_db", "atenuation_db"),
    )
    .unwrap();
    let out = jpa(&["--config", bad.to_str().unwrap(), "fluxmap"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("atenuation_db"),
        "schema errors must name the offending field"
    );
    // Malformed sweep range.
    let out = jpa(&[
        "--config",
        &config_path(),
        "gain-sweep",
        "--pump-dbm-range",
        "5:4:1",
        "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    // Mutually exclusive noise inputs (clap-level usage error).
    let out = jpa(&[
        "noise",
        "--snri-db",
        "13",
        "--noise-rise-db",
        "4.8",
        "--g-db",
        "17.8",
        "--t-cryo-k",
        "4.4",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // Gain-curve CSV with a wrong header.
    let wrong = dir.path().join("wrong.csv");
    std::fs::write(&wrong, "pump,gain\n-40,1\n-39,2\n-38,3\n-37,4\n").unwrap();
    let out = jpa(&["fit", "gain", wrong.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    // Too few points to fit.
    let short = dir.path().join("short.csv");
    std::fs::write(&short, "power_dbm,gain_db\n-40,1\n-39,2\n-38,3\n").unwrap();
    let out = jpa(&["fit", "gain", short.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn domain_refusals_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    // Gain data continuing to rise above the fitted threshold cannot be
    // represented by the below-threshold law.
    let inside = dir.path().join("inside.csv");
    let mut text = String::from("power_dbm,gain_db\n");
    for i in 0..10 {
        let p = -40.0 + i as f64;
        let x = 10f64.powf((p + 30.0) / 10.0);
        text.push_str(&format!("{},{}\n", p, 10.0 * (1.0 + 4.0 * x / ((1.0 - x) * (1.0 - x))).log10()));
    }
    text.push_str("-30,60\n-29,65\n");
    std::fs::write(&inside, text).unwrap();
    let out = jpa(&["fit", "gain", inside.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "threshold inside the data is a domain refusal");

    // A dipless reflection trace has no resonance to fit.
    let flat = dir.path().join("flat.csv");
    let mut text = String::from("freq_hz,re_s11,im_s11\n");
    for i in 0..64 {
        text.push_str(&format!("{},1,0\n", 8.2e9 + 1e5 * i as f64));
    }
    std::fs::write(&flat, text).unwrap();
    let out = jpa(&["fit", "s11", flat.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "no resonance found is a domain refusal");
}

#[test]
fn s11_fit_round_trips_through_the_binary() {
    // Trace from the linear reflection model plus seeded complex noise
    // (σ = 0.01 per quadrature): the binary must recover the rates within 2%.
    let (f0, ke, ki) = (8.22e9, 1.1e6, 0.42e6);
    let mode =
        CavityMode::new(hz_to_angular(f0), hz_to_angular(ki), hz_to_angular(ke)).unwrap();
    let freq: Vec<f64> =
        (0..501).map(|i| f0 - 10e6 + 20e6 * i as f64 / 500.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 0.01).unwrap();
    let s11: Vec<Complex64> = freq
        .iter()
        .map(|&f| {
            linear_s11(&mode, hz_to_angular(f))
                + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))
        })
        .collect();
    let trace = ReflectionTrace::new(freq, s11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_reflection_trace(std::fs::File::create(&path).unwrap(), &trace).unwrap();

    let out = jpa(&["fit", "s11", path.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    let ke_fit = v["kappa_ext_hz"].as_f64().unwrap();
    let ki_fit = v["kappa_int_hz"].as_f64().unwrap();
    assert!((ke_fit - ke).abs() / ke < 0.02, "κ_ext within 2%: got {ke_fit}");
    assert!((ki_fit - ki).abs() / ki < 0.02, "κ_int within 2%: got {ki_fit}");
    assert_eq!(v["over_coupled"], true);
    assert!(
        v["sigma_kappa_ext_hz"].as_f64().unwrap() > 0.0,
        "noisy data must report a nonzero uncertainty"
    );
}

#[test]
fn gain_sweep_below_any_gain_is_flat_and_unfitted() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("flat.csv");
    let out = jpa(&[
        "--config",
        &config_path(),
        "gain-sweep",
        "--pump-dbm-range",
        "-80:-70:2.5",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert!(v["p_c_dbm_fitted"].is_null(), "a flat curve pins no threshold");
    assert!(v["fit_note"].as_str().unwrap().contains("fit skipped"));
    assert!(v["first_above_threshold_dbm"].is_null());
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    for line in csv.lines().skip(1) {
        let gain: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(gain.abs() < 0.05, "40+ dB below threshold the gain is 0 dB: {line}");
    }
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let csv_path = dir.path().join(format!("sweep-{tag}.csv"));
        let out = jpa(&[
            "--config",
            &config_path(),
            "gain-sweep",
            "--pump-dbm-range",
            "-44:-34:0.5",
            "--out",
            csv_path.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        // The report echoes its own --out path; normalize before comparison.
        let stdout = String::from_utf8(out.stdout)
            .unwrap()
            .replace(csv_path.to_str().unwrap(), "OUT");
        (stdout.into_bytes(), std::fs::read(&csv_path).unwrap())
    };
    let (json_a, csv_a) = run("a");
    let (json_b, csv_b) = run("b");
    assert_eq!(json_a, json_b, "threshold reports must be byte-identical");
    assert_eq!(csv_a, csv_b, "sweep datasets must be byte-identical");

    let noise_args = [
        "noise",
        "--noise-rise-db",
        "4.8",
        "--g-db",
        "17.8",
        "--t-cryo-k",
        "4.4",
        "--sigmas",
        "0.5:0.25:0.3",
        "--seed",
        "42",
    ];
    let a = jpa(&noise_args);
    let b = jpa(&noise_args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout, "Monte Carlo output must be seed-deterministic");
}

#[test]
fn help_and_version_do_not_fail() {
    assert_eq!(jpa(&["--help"]).status.code(), Some(0));
    assert_eq!(jpa(&["--version"]).status.code(), Some(0));
    assert_eq!(jpa(&["fit", "--help"]).status.code(), Some(0));
    // An unknown subcommand is a usage error.
    assert_eq!(jpa(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn compression_report_hits_its_calibration_target() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("comp.csv");
    let out = jpa(&[
        "--config",
        &config_path(),
        "compression",
        "--signal-dbm-range",
        "-140:-110:5",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["device"]["kerr_calibrated"], true);
    let p1db = v["p1db_dbm"].as_f64().unwrap();
    assert!(
        (p1db + 115.0).abs() < 0.25,
        "the config's compression target must be echoed back: got {p1db}"
    );
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("signal_power_dbm,gain_db\n"));
    let first_gain: f64 =
        csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((first_gain - 20.0).abs() < 0.01, "deep small-signal gain sits at the set point");
}

#[test]
fn shipped_example_config_resolves() {
    // Guards the manifest-relative config path used by every test above.
    assert!(PathBuf::from(config_path()).exists(), "shipped example config must exist");
}
