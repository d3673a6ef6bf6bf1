//! End-to-end checks of the `cardioflow` binary surface.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cardioflow"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cardioflow_cli_{name}"));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const RUN0D_CONFIG: &str = r#"
[circulation]
initial = "em"

[standalone]
period = 0.8
beats = 2
dt = 1e-3
output_stride = 4
out_csv = "run0d.csv"

[standalone.volumes]
rest = [110.0, 115.0, 50.0, 48.0]
amplitude = [40.0, 42.0, 12.0, 12.0]
phase = [0.0, 0.0, 1.2, 1.2]
"#;

#[test]
fn run_0d_writes_csv_with_expected_header() {
    let dir = workdir("run0d");
    let config = dir.join("run0d.toml");
    write(&config, RUN0D_CONFIG);
    let output = bin().arg("run-0d").arg(&config).output().unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = std::fs::read_to_string(dir.join("run0d.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,p_AR_SYS,p_VEN_SYS,p_AR_PUL,p_VEN_PUL,Q_AR_SYS,Q_AR_PUL"));
    // 2 beats at 1 ms, strided by 4
    assert_eq!(csv.lines().count() - 1, 400);
}

const COUPLED_CONFIG: &str = r#"
[mesh]
kind = "box"
extents = [0.004, 0.002]
resolution = [12, 6]
depth = 1.0
rename = [["x0", "in"], ["x1", "out"]]
merge = [{ tags = ["y0", "y1"], into = "wall" }]

[timeline]
kind = "oscillating-channel"
moving_tags = ["wall", "wall"]

[coupling]
dt = 5e-4
t_end = 1e-2
period = 0.8
walls = ["wall"]

[coupling.ports]
out = "out-lh"

[coupling.neumann]
in = 11511.0

[output]
dir = "out"
stride = 2
snapshot_stride = 5

[[output.probes]]
name = "center"
center = [0.002, 0.001, 0.0]
radius = 0.0008
"#;

#[test]
fn coupled_run_emits_records_snapshots_and_manifest() {
    let dir = workdir("coupled");
    let config = dir.join("run.toml");
    // oscillating-channel timeline needs two distinct moving tags
    let cfg = COUPLED_CONFIG.replace(
        r#"merge = [{ tags = ["y0", "y1"], into = "wall" }]"#,
        "",
    );
    let cfg = cfg
        .replace(r#"moving_tags = ["wall", "wall"]"#, r#"moving_tags = ["y0", "y1"]
amplitude = 5e-5"#)
        .replace(r#"walls = ["wall"]"#, r#"walls = ["y0", "y1"]"#);
    write(&config, &cfg);
    let output = bin().arg("run").arg(&config).output().unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let out = dir.join("out");
    let records = std::fs::read_to_string(out.join("records.csv")).unwrap();
    let header = records.lines().next().unwrap();
    assert!(header.starts_with("t,p_in_RH,p_out_RH,p_in_LH,p_out_LH"));
    assert!(header.contains("p3d_out"));
    assert!(header.contains("Q3d_out"));
    assert!(header.contains("probe_center_speed"));
    assert_eq!(records.lines().count() - 1, 10); // 20 steps, stride 2
    assert!(out.join("run.toml").exists());
    assert!(out.join("step_000005.vtk").exists());
    assert!(out.join("step_000020.vtk").exists());
}

#[test]
fn postproc_wss_produces_tawss_field() {
    let dir = workdir("wss");
    let config = dir.join("run.toml");
    let cfg = COUPLED_CONFIG
        .replace(r#"moving_tags = ["wall", "wall"]"#, r#"moving_tags = ["y0", "y1"]
amplitude = 5e-5"#)
        .replace(
            r#"merge = [{ tags = ["y0", "y1"], into = "wall" }]"#,
            "",
        )
        .replace(r#"walls = ["wall"]"#, r#"walls = ["y0", "y1"]"#);
    write(&config, &cfg);
    let output = bin().arg("run").arg(&config).output().unwrap();
    assert!(output.status.success());
    let tawss = dir.join("tawss.vtk");
    let output = bin()
        .args(["postproc", "wss"])
        .arg("--config")
        .arg(&config)
        .arg("--snapshots")
        .arg(dir.join("out"))
        .args(["--wall-tag", "y0"])
        .arg("--out")
        .arg(&tawss)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = std::fs::read_to_string(&tawss).unwrap();
    assert!(text.contains("SCALARS TAWSS double 1"));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("TAWSS on `y0`"));
}

#[test]
fn postproc_biomarkers_reports_against_ranges() {
    let dir = workdir("biomarkers");
    // synthetic series hitting the tabulated extremes
    let mut csv = String::from("t,V,Q,p\n");
    let n = 200;
    for i in 0..n {
        let t = 0.8 * i as f64 / n as f64;
        let s = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * t / 0.8).cos();
        let v = 151.0 - (151.0 - 66.4) * s;
        let q = 400.0 * (std::f64::consts::PI * t / 0.8).sin();
        let p = 90.0 + 30.0 * (2.0 * std::f64::consts::PI * t / 0.8).sin();
        csv.push_str(&format!("{t},{v},{q},{p}\n"));
    }
    let series = dir.join("series.csv");
    write(&series, &csv);
    let report = dir.join("report.csv");
    let output = bin()
        .args(["postproc", "biomarkers"])
        .arg("--series")
        .arg(&series)
        .arg("--out")
        .arg(&report)
        .args(["--volume-col", "V", "--flow-col", "Q", "--pressure-col", "p"])
        .args(["--suffix", "LV", "--qmax-name", "Q_AV_max", "--pmax-name", "p_LV_max"])
        .args(["--beat-start", "0.0", "--period", "0.8"])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = std::fs::read_to_string(&report).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "name,value,units,normalized,in_range,citation");
    // SV = 84.6 and EF = 56.0% both in range
    let sv_line = text.lines().find(|l| l.starts_with("SV_LV,")).unwrap();
    assert!(sv_line.contains("true"), "{sv_line}");
    let ef_line = text.lines().find(|l| l.starts_with("EF_LV,")).unwrap();
    assert!(ef_line.contains("true"), "{ef_line}");
    assert!(ef_line.contains("Clay et al., 2006"));
}

#[test]
fn biomarkers_accepts_si_unit_columns() {
    let dir = workdir("biomarkers_si");
    let mut csv = String::from("t,V,Q,p\n");
    for i in 0..100 {
        let t = 0.8 * i as f64 / 100.0;
        // flow in m^3/s, pressure in Pa
        csv.push_str(&format!(
            "{t},{},{},{}\n",
            120.0 - 40.0 * (7.85 * t).sin().abs(),
            3.0e-4 * (3.9 * t).sin(),
            90.0 * 133.322
        ));
    }
    let series = dir.join("series.csv");
    write(&series, &csv);
    let report = dir.join("report.csv");
    let output = bin()
        .args(["postproc", "biomarkers"])
        .arg("--series")
        .arg(&series)
        .arg("--out")
        .arg(&report)
        .args(["--volume-col", "V", "--flow-col", "Q", "--pressure-col", "p"])
        .args(["--flow-units", "m3s", "--pressure-units", "pa"])
        .args(["--pmax-name", "p_LV_max"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = std::fs::read_to_string(&report).unwrap();
    // p_max converts to 90 mmHg
    let p_line = text.lines().find(|l| l.starts_with("p_LV_max,")).unwrap();
    let value: f64 = p_line.split(',').nth(1).unwrap().parse().unwrap();
    assert!((value - 90.0).abs() < 1e-6, "{p_line}");
}

#[test]
fn missing_column_is_a_clear_error() {
    let dir = workdir("badcol");
    let series = dir.join("series.csv");
    write(&series, "t,V\n0.0,1.0\n");
    let output = bin()
        .args(["postproc", "biomarkers"])
        .arg("--series")
        .arg(&series)
        .arg("--out")
        .arg(dir.join("r.csv"))
        .args(["--volume-col", "V", "--flow-col", "Q", "--pressure-col", "p"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("column `Q` not found"), "{stderr}");
}
