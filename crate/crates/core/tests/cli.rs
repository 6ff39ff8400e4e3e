use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_data_file(path: &Path, header: &str) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(header));
    let mut rows = 0;
    for line in lines {
        assert!(
            line.split(',')
                .all(|f| f.parse::<f64>().is_ok_and(f64::is_finite)),
            "{line}"
        );
        rows += 1;
    }
    assert!(rows > 0);
}

const REFERENCE_GAINS: [&str; 8] = ["--m", "1", "--eta", "0.5", "--g1", "0.75", "--g2", "-0.25"];

#[test]
fn certify_exit_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let o = qfc(&[
        &["--out", out, "certify"],
        &REFERENCE_GAINS[..],
        &["--c", "4", "--d", "2"],
    ]
    .concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("certified=true"));
    assert!(dir.path().join("certificate.json").exists());
    assert!(dir.path().join("manifest.json").exists());

    let o = qfc(&[
        "--out", out, "certify", "--m", "1", "--eta", "0.5", "--g1", "0.75", "--g2", "0.1", "--c",
        "4", "--d", "2",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("necessary_conditions=false"));

    let o = qfc(&[
        &["--out", out, "certify"],
        &REFERENCE_GAINS[..],
        &["--c", "0.5", "--d", "2"],
    ]
    .concat());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("c > 1"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(qfc(&[]).status.code(), Some(1));
    assert_eq!(qfc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(qfc(&["certify", "--m", "abc"]).status.code(), Some(1));
    assert_eq!(qfc(&["--help"]).status.code(), Some(0));
    assert_eq!(qfc(&["--version"]).status.code(), Some(0));

    let o = qfc(&[
        &["ensemble"],
        &REFERENCE_GAINS[..],
        &["--lambda0", "0", "--nu0", "1"],
    ]
    .concat());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--seed"));

    let o = qfc(&["--manifest", "/definitely/missing/manifest.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/definitely/missing/manifest.json"));
}

#[test]
fn spectrum_prints_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let o = qfc(&[
        "--out",
        dir.path().to_str().unwrap(),
        "spectrum",
        "--m",
        "1",
        "--g1",
        "1",
        "--g2",
        "-0.5",
        "--n-max",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("lambda=2,6,12"), "{}", stdout(&o));
    assert_data_file(
        &dir.path().join("spectrum.csv"),
        "n,eigenvalue,physical_rate",
    );
    assert_data_file(&dir.path().join("coefficients.csv"), "n,k,a_k");
}

#[test]
fn integration_blow_up_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = qfc(&[
        "--out",
        dir.path().to_str().unwrap(),
        "simulate",
        "--m",
        "1",
        "--eta",
        "1",
        "--g1",
        "1e308",
        "--g2",
        "1e308",
        "--lambda0",
        "0.3",
        "--nu0",
        "0.5",
        "--seed",
        "3",
        "--dt",
        "10",
        "--t-max",
        "100",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("path 0"), "{}", stderr(&o));
}

/// Runs `args` into one directory, replays the manifest into another, and
/// compares the data file byte for byte.
fn assert_replay(args: &[&str], data_file: &str, header: &str) {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let o = qfc(&[&["--out", first.path().to_str().unwrap()], args].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_data_file(&first.path().join(data_file), header);

    let manifest = first.path().join("manifest.json");
    let o = qfc(&[
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        second.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read(first.path().join(data_file)).unwrap(),
        fs::read(second.path().join(data_file)).unwrap()
    );
}

#[test]
fn simulate_replays_from_manifest() {
    assert_replay(
        &[
            &["simulate"],
            &REFERENCE_GAINS[..],
            &[
                "--lambda0",
                "0",
                "--nu0",
                "1",
                "--seed",
                "5",
                "--t-max",
                "3",
            ],
        ]
        .concat(),
        "trajectory.csv",
        "t,lambda,nu,V",
    );
}

#[test]
fn ensemble_replays_from_manifest() {
    assert_replay(
        &[
            &["ensemble"],
            &REFERENCE_GAINS[..],
            &[
                "--lambda0",
                "0",
                "--nu0",
                "1",
                "--n-paths",
                "64",
                "--t-max",
                "5",
                "--seed",
                "42",
            ],
        ]
        .concat(),
        "summary.csv",
        "t,mean_nu,mean_V,unconverged_fraction",
    );
}

#[test]
fn exit_time_replays_from_manifest() {
    assert_replay(
        &[
            "exit-time",
            "--m",
            "1",
            "--g1",
            "1",
            "--g2",
            "-0.5",
            "--theta0",
            "0.1",
            "--n-paths",
            "200",
            "--t-max",
            "4",
            "--seed",
            "7",
        ],
        "exit_time.csv",
        "t,mean_nu,mean_V,unconverged_fraction",
    );
}

#[test]
fn manifest_records_resolved_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = qfc(&[
        &["--out", dir.path().to_str().unwrap(), "ensemble"],
        &REFERENCE_GAINS[..],
        &[
            "--lambda0",
            "0",
            "--nu0",
            "1",
            "--n-paths",
            "8",
            "--t-max",
            "1",
            "--seed",
            "9",
        ],
    ]
    .concat());
    assert_eq!(o.status.code(), Some(0));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["subcommand"], "ensemble");
    assert_eq!(m["seed"], 9);
    assert_eq!(m["sim"]["dt"], 1e-3);
    assert_eq!(m["sim"]["record_stride"], 100);
    assert_eq!(m["sim"]["convergence_radius"], 1e-2);
    assert_eq!(m["lyapunov"]["c"], 4.0);
    assert!(m["artifact_version"].is_string());
    assert!(m["timestamp"].is_string());
}
