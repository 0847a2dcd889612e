use std::path::Path;
use std::process::{Command, Output};

use nearfield_secrecy::harness::SystemConfig;

fn nfsec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfsec"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let config = SystemConfig {
        m_tx: 16,
        m_u: 4,
        m_e: 4,
        trials: 3,
        ..SystemConfig::desk()
    };
    let path = dir.join("small.toml");
    std::fs::write(&path, config.to_toml_string().unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn run_writes_summary_and_trials() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().to_str().unwrap();
    let o = nfsec(&["run", "--config", &config, "--out", out, "--tag", "t"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = read(dir.path(), "run_t.csv");
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "variant,mean_c_s_bits,std_c_s_bits,mean_c_u_bits,mean_c_e_bits,max_power_watts,nonconverged,trials"
    );
    assert!(lines.next().unwrap().starts_with("fully_digital,"));
    assert!(lines.next().unwrap().starts_with("hybrid,"));
    assert_eq!(read(dir.path(), "run_t_trials.csv").lines().count(), 4);
}

#[test]
fn same_seed_gives_identical_bytes_and_seed_changes_tag() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().to_str().unwrap();
    for tag in ["a", "b"] {
        let o = nfsec(&["trace", "--config", &config, "--out", out, "--tag", tag]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for suffix in ["", "_bcd", "_w_fd", "_p", "_w"] {
        assert_eq!(
            read(dir.path(), &format!("trace_a{suffix}.csv")),
            read(dir.path(), &format!("trace_b{suffix}.csv"))
        );
    }
    let o = nfsec(&["trace", "--config", &config, "--out", out, "--seed", "9"]);
    assert!(o.status.success());
    assert!(dir.path().join("trace_seed9.csv").exists());
}

#[test]
fn trace_exports_beamformers_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().to_str().unwrap();
    let o = nfsec(&["trace", "--config", &config, "--out", out, "--tag", "x", "--svg"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = read(dir.path(), "trace_x.csv");
    assert_eq!(trace.lines().next().unwrap(), "stage,iteration,c_s_bits,beam_similarity");
    assert!(trace.lines().any(|l| l.starts_with("bcd,0,")));
    assert!(trace.lines().any(|l| l.starts_with("ao,0,")));
    assert_eq!(
        read(dir.path(), "trace_x_bcd.csv").lines().next().unwrap(),
        "iteration,c_s_bits,surrogate_nats,mu,power_watts"
    );
    // 16 x 4 analog precoder, one line per entry plus header
    assert_eq!(read(dir.path(), "trace_x_p.csv").lines().count(), 65);
    let meta = read(dir.path(), "trace_x_hybrid.json");
    assert!(meta.contains("\"tx_antennas\": 16") && meta.contains("\"rf_chains\": 4"), "{meta}");
    assert!(read(dir.path(), "trace_x_bcd.svg").contains("<polyline"));
    assert!(read(dir.path(), "trace_x_ao.svg").contains("<polyline"));
}

#[test]
fn sweeps_and_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().to_str().unwrap();
    let o = nfsec(&[
        "sweep-pmax", "--config", &config, "--out", out, "--tag", "s", "--pmax-dbm", "-20,-10", "--svg",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep = read(dir.path(), "sweep-pmax_s.csv");
    assert_eq!(sweep.lines().count(), 3);
    assert!(sweep.lines().nth(1).unwrap().starts_with("-20,"));
    assert!(dir.path().join("sweep-pmax_s.svg").exists());

    let o = nfsec(&[
        "sweep-eve", "--config", &config, "--out", out, "--tag", "s", "--model", "far", "--distances", "5:15:3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eve = read(dir.path(), "sweep-eve_s.csv");
    assert_eq!(eve.lines().count(), 4);
    assert!(eve.lines().skip(1).all(|l| l.starts_with("far,")));

    let o = nfsec(&[
        "spectrum", "--config", &config, "--out", out, "--tag", "s", "--distances", "2:20:10", "--angles-deg",
        "-60:60:13", "--svg",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let spectrum = read(dir.path(), "spectrum_s.csv");
    assert_eq!(spectrum.lines().next().unwrap(), "distance_m,angle_deg,normalized_power");
    let values: Vec<f64> = spectrum.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 130);
    assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(values.iter().filter(|&&v| v == 1.0).count(), 1);
    assert!(read(dir.path(), "spectrum_s.svg").contains("<rect"));
}

fn assert_error_line(o: &Output, kind: &str) {
    assert!(!o.status.success());
    let stderr = String::from_utf8_lossy(&o.stderr);
    let line = stderr.lines().last().expect("an error line");
    let parsed: serde_json::Value = serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {line}"));
    assert_eq!(parsed["error"], kind, "{line}");
    assert!(parsed["message"].as_str().unwrap().len() > 5);
}

#[test]
fn invalid_config_fails_with_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let text = SystemConfig::desk()
        .to_toml_string()
        .unwrap()
        .replace("k_streams = 2", "k_streams = 9")
        .replace("trials = 20", "trials = 0");
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let o = nfsec(&["run", "--config", path.to_str().unwrap(), "--out", out]);
    assert_error_line(&o, "config");
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("k_streams") && stderr.contains("trials"), "{stderr}");

    std::fs::write(&path, "f_hz = \"fast\"").unwrap();
    let o = nfsec(&["run", "--config", path.to_str().unwrap(), "--out", out]);
    assert_error_line(&o, "config_parse");

    let o = nfsec(&["run", "--config", dir.path().join("missing.toml").to_str().unwrap(), "--out", out]);
    assert_error_line(&o, "io");

    let o = nfsec(&["run", "--preset", "huge", "--out", out]);
    assert_error_line(&o, "argument");
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paper.toml");
    let config = SystemConfig::paper();
    std::fs::write(&path, config.to_toml_string().unwrap()).unwrap();
    assert_eq!(SystemConfig::load(&path).unwrap(), config);
}
