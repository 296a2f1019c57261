use std::path::Path;
use std::process::{Command, Output};

use qubit_variance::io::{read_table, DataTable};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qubit-variance"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn table(dir: &Path, name: &str) -> DataTable {
    read_table(&dir.join(name)).unwrap()
}

#[test]
fn zeno_window_measured_and_analytic() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["zeno", "--format", "json"]);
    let t = table(dir.path(), "zeno_schedule.json");
    let dtm = t.meta["delta_tau_min"];
    assert!((dtm - 250.0).abs() < 0.05, "{dtm}");

    ok(dir.path(), &["zeno", "--analytic-window"]);
    let t = table(dir.path(), "zeno_schedule.csv");
    assert_eq!(t.meta["delta_tau_min"], 250.0);
}

#[test]
fn fig2_jump_at_gap_center() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["figure", "fig2"]);
    let jumps = table(dir.path(), "fig2_jumps.csv");
    let taus = jumps.column("tau_jump").unwrap();
    let center = 3.0 * std::f64::consts::PI / 8e-3;
    assert!(taus.iter().any(|t| (t - center).abs() < 1e-3), "{taus:?}");
    // open segments carry NaN
    for h in jumps.column("h_band_at_jump").unwrap().into_iter().filter(|h| !h.is_nan()) {
        assert!(h.abs() < 1e-6);
    }
}

#[test]
fn fig3_peak_near_quarter_period() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["figure", "fig3"]);
    let t = table(dir.path(), "fig3.csv");
    assert!((t.meta["delta_h_argmax_local"] - 393.0).abs() < 2.0, "{}", t.meta["delta_h_argmax_local"]);
    assert!((t.meta["delta_h_max"] - 4e-3).abs() < 4e-5);
    let stars = t.column("star").unwrap();
    assert_eq!(stars.iter().filter(|&&s| s == 1.0).count(), 1);
}

#[test]
fn fig1_zero_drive_eigenstate_has_no_width() {
    let dir = tempfile::tempdir().unwrap();
    // alpha = 0, delta = 0 is the K-eigenstate with H = 1
    ok(dir.path(), &["figure", "fig1", "--drive", "zero", "--tau-span", "50"]);
    let t = table(dir.path(), "fig1.csv");
    for s in t.column("sigma_q").unwrap() {
        assert!(s.abs() < 1e-6, "{s}");
    }
    for h in t.column("h").unwrap() {
        assert!((h - 1.0).abs() < 1e-10);
    }
}

#[test]
fn fig4_with_and_without_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let overlay = dir.path().join("overlay.csv");
    std::fs::write(&overlay, "# T_Rabi_us=50\ntime_us,population\n0,0.0\n5,0.4\n10,0.9\n").unwrap();
    ok(dir.path(), &["figure", "fig4", "--overlay", overlay.to_str().unwrap()]);
    let pts = table(dir.path(), "fig4_overlay.csv");
    let tau = pts.column("tau").unwrap();
    assert!((tau[2] - 10.0 / 50.0 * 2.0 * std::f64::consts::TAU / 8e-3).abs() < 1e-6, "{tau:?}");
    let m = table(dir.path(), "fig4_markers.csv");
    assert!((m.column("delta_t_us").unwrap()[0] - 7.9577).abs() < 0.01);

    let missing = dir.path().join("nope.csv");
    let out = run(dir.path(), &["figure", "fig4", "--overlay", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(run(p, &["simulate", "--alpha0", "1.5"]).status.code(), Some(2));
    assert_eq!(run(p, &["simulate", "--rtol", "-1"]).status.code(), Some(2));
    assert_eq!(run(p, &["simulate", "--tau-span", "10,5"]).status.code(), Some(2));
    assert_eq!(run(p, &["bogus"]).status.code(), Some(2));

    let cfg = p.join("bad.toml");
    std::fs::write(&cfg, "amplitude = 8e-3\nrtol = \"tight\"\n").unwrap();
    let out = run(p, &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"), "{}", String::from_utf8_lossy(&out.stderr));

    assert_eq!(run(p, &["simulate", "--alpha0", "1"]).status.code(), Some(3));
    assert_eq!(run(p, &["check", "--rtol", "1e-2"]).status.code(), Some(1));
}

#[test]
fn outputs_are_deterministic() {
    // the embedded config records the output directory, so rerun into the same one
    let dir = tempfile::tempdir().unwrap();
    let snapshot = |d: &Path| {
        ok(d, &["simulate", "--oracle", "--seed", "7"]);
        ok(d, &["figure", "all"]);
        ok(d, &["check", "--seed", "7"]);
        let mut files: Vec<_> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let first = snapshot(dir.path());
    assert!(first.iter().any(|(n, _)| n == "suite_report.json"));
    let second = snapshot(dir.path());
    assert_eq!(first.len(), second.len());
    for ((n, x), (_, y)) in first.iter().zip(&second) {
        assert!(x == y, "{n:?} differs");
    }
}
