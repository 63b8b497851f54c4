use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sps_core::ScenarioConfig;

const SCENARIO: &str = "preset=augmented_reality\nnum_ues=20\nscheduler_kind=SSPS\nsim_time_s=0.2s\n";

fn spsim(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spsim")).args(args).env("SPSIM_OUT_DIR", out_dir).output().expect("spawn spsim")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn presets_lists_both_use_cases() {
    let dir = tempfile::tempdir().unwrap();
    let out = spsim(&["presets"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("augmented_reality: 4 lines x 4 machines"));
    assert!(text.contains("remote_access_maintenance"));
}

#[test]
fn missing_config_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = spsim(&["run", "/nonexistent/scenario.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("config not found"));
}

#[test]
fn invalid_override_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", SCENARIO);
    let out = spsim(&["run", &cfg, "--set", "aperiodic_tmin_s=9ms"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = spsim(&["run", &cfg, "--set", "no_equals_sign"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = spsim(&["run"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", SCENARIO);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = spsim(&["run", &cfg, "--seed", "7", "--out-dir", d.to_str().unwrap()], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8(out.stdout).unwrap().contains("mean latency"));
    }
    for f in ["run_SSPS_seed7.csv", "run_SSPS_seed7.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let csv = fs::read_to_string(a.join("run_SSPS_seed7.csv")).unwrap();
    let lines = data_lines(&csv);
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("SSPS,augmented_reality,20,60.0,2.75,5,8.0,2.0,0.0,false,7,"));
}

#[test]
fn output_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", SCENARIO);
    let out = spsim(&["run", &cfg], dir.path());
    assert!(out.status.success());
    assert!(dir.path().join("run_SSPS_seed1.csv").exists());
}

#[test]
fn sweep_header_matches_golden_schema() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.cfg", SCENARIO);
    let spec = write(
        dir.path(),
        "sweep.toml",
        "base = \"s.cfg\"\nreplicas = 2\n[axes]\nN = [10, 20]\nscheduler_kind = [\"SSPS\", \"BSPS\"]\n",
    );
    let out = spsim(&["sweep", &spec, "--jobs", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let golden = include_str!("golden/header.csv");
    let lines = data_lines(&csv);
    assert_eq!(lines[0], golden.trim_end());
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    // point-major, replica-minor
    let keys: Vec<(String, String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[2].to_string(), f[10].to_string())
        })
        .collect();
    let expect = [
        ("SSPS", "10", "1"),
        ("SSPS", "10", "2"),
        ("SSPS", "20", "1"),
        ("SSPS", "20", "2"),
        ("BSPS", "10", "1"),
        ("BSPS", "10", "2"),
        ("BSPS", "20", "1"),
        ("BSPS", "20", "2"),
    ];
    for (got, want) in keys.iter().zip(expect) {
        assert_eq!((got.0.as_str(), got.1.as_str(), got.2.as_str()), want);
    }
    assert!(csv.contains("# replicas = 2"));
}

#[test]
fn sweep_output_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.cfg", SCENARIO);
    let spec = write(
        dir.path(),
        "sweep.toml",
        "base = \"s.cfg\"\nreplicas = 3\n[axes]\nscheduler_kind = [\"SSPS\", \"ASPS\"]\n",
    );
    let one = dir.path().join("one.csv");
    let many = dir.path().join("many.csv");
    for (jobs, path) in [("1", &one), ("4", &many)] {
        let out = spsim(&["sweep", &spec, "--jobs", jobs, "--out", path.to_str().unwrap()], dir.path());
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&one).unwrap(), fs::read(&many).unwrap());
}

#[test]
fn sweep_json_and_error_rows() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.cfg", SCENARIO);
    let spec = write(dir.path(), "sweep.toml", "base = \"s.cfg\"\nreplicas = 1\n[axes]\nt_min_ms = [2, 7]\n");
    let out = spsim(&["sweep", &spec, "--format", "json"], dir.path());
    assert!(out.status.success());
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["error"].is_null());
    assert!(rows[1]["error"].as_str().unwrap().contains("t_min"));
    assert!(doc["base_config"].as_str().unwrap().contains("num_ues=20"));
}

#[test]
fn bad_sweep_spec_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "sweep.toml", "[axes]\nwidth = [1]\n");
    assert_eq!(spsim(&["sweep", &spec], dir.path()).status.code(), Some(1));
    assert_eq!(spsim(&["sweep", "/nonexistent.toml"], dir.path()).status.code(), Some(1));
}

#[test]
fn bundled_sweeps_expand_to_expected_grids() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (name, points) in
        [("schedulers_vs_n.toml", 15), ("activations_vs_bandwidth.toml", 20), ("aperiodic_vs_tmin.toml", 16)]
    {
        let spec = sps_core::sweep::SweepSpec::parse(&fs::read_to_string(root.join(name)).unwrap()).unwrap();
        assert_eq!(spec.point_count(), points, "{name}");
        let base = ScenarioConfig::load(&fs::read_to_string(root.join(spec.base.as_deref().unwrap())).unwrap()).unwrap();
        for p in spec.points() {
            let (_, res) = sps_core::sweep::point_config(&base.config, &p);
            assert_eq!(res, Ok(()), "{name}: {p:?}");
        }
    }
}
