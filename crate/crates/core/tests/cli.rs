use std::fs;
use std::path::Path;
use std::process::Command;

use stirap::cli::{eval_expr, preset, RunConfig, WindowRecord, PRESETS};

fn stirap(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_stirap")).current_dir(dir).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn expressions() {
    let pi = std::f64::consts::PI;
    assert_eq!(eval_expr("2*pi").unwrap(), 2.0 * pi);
    assert_eq!(eval_expr("acos(sqrt(1/3))").unwrap(), (1.0f64 / 3.0).sqrt().acos());
    assert_eq!(eval_expr("-2^2").unwrap(), -4.0);
    assert_eq!(eval_expr("2^3^2").unwrap(), 512.0);
    assert_eq!(eval_expr("1e-3 + 2.5E2").unwrap(), 250.001);
    assert_eq!(eval_expr(" ( 1 + 2 ) * -3 ").unwrap(), -9.0);
    assert_eq!(eval_expr("arctan(1)*4").unwrap(), pi);
    assert_eq!(eval_expr("ln(exp(2))").unwrap(), 2.0);
    assert_eq!(eval_expr("6.283185307179586").unwrap(), 2.0 * pi);
    for bad in ["", "1+", "foo", "sqrt 2", "(1", "1/0", "2 3"] {
        assert!(eval_expr(bad).is_err(), "{bad}");
    }
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    let mut c = RunConfig::default();
    assert!(c.set("omega", "1").is_err());
    assert!(c.set("system", "5").is_err());
    assert!(c.set("format", "xml").is_err());
    assert!(c.set("steps", "2.5").is_err());
    assert!(c.apply_text("tau 4").is_err());
    c.set("beta", "pi/4").unwrap();
    assert_eq!(c.alpha, std::f64::consts::FRAC_PI_4);
}

#[test]
fn every_preset_parses_and_round_trips() {
    for name in PRESETS {
        let mut c = RunConfig::default();
        c.apply_text(&preset(name).unwrap()).unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d, "{name}");
        c.model().unwrap();
    }
    assert!(preset("fig7").is_none());
}

#[test]
fn simulate_writes_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = stirap(dir.path(), &["simulate", "--preset", "fig2-optimized", "-o", "a.csv"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("infidelity"));
    let (header, rows) = read_csv(&dir.path().join("a.csv"));
    assert_eq!(header, ["s", "t_us", "P1", "P2", "P3", "norm"]);
    let last = rows.last().unwrap();
    assert_eq!(last[0], 1.0);
    assert_eq!(last[1], 4.0);
    assert!(last[4] >= 0.98, "P3 = {}", last[4]);
    // every float carries 17 significant digits
    let text = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let field = text.lines().nth(2).unwrap().split(',').nth(2).unwrap();
    assert_eq!(field.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
}

#[test]
fn simulate_json_mirrors_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = stirap(dir.path(), &["simulate", "--set", "steps=6000", "--format", "json", "-o", "a.json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
    assert_eq!(v["columns"], serde_json::json!(["s", "t_us", "P1", "P2", "P3", "norm"]));
    assert_eq!(v["rows"].as_array().unwrap().len(), 6001);
}

#[test]
fn zero_pulse_leaves_populations_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = stirap(dir.path(), &["simulate", "--set", "frozen_p=0", "--set", "delta=3", "-o", "z.csv"]);
    assert_eq!(code, 0);
    let (_, rows) = read_csv(&dir.path().join("z.csv"));
    assert_eq!(rows.first().unwrap()[2..], rows.last().unwrap()[2..]);
}

// Figure-anchored numbers are checked under the rad/us reading first and,
// failing that, with every frequency multiplied by 2 pi.
fn cycles_args(omega0: &str, delta: &str) -> Vec<String> {
    vec!["--set".into(), format!("omega0=2*pi*({omega0})"), "--set".into(), format!("delta=2*pi*({delta})")]
}

#[test]
fn fig12_gaussian_keeps_most_population_in_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = Vec::new();
    for extra in [vec![], cycles_args("22.13", "58.1")] {
        let mut args = vec!["simulate", "--preset", "fig12-gaussian", "-o", "g.csv"];
        args.extend(extra.iter().map(String::as_str));
        assert_eq!(stirap(dir.path(), &args).0, 0);
        let (_, rows) = read_csv(&dir.path().join("g.csv"));
        seen.push(rows.last().unwrap()[2]);
    }
    assert!(seen.iter().any(|&p1| p1 > 0.5), "P1 under rad/us and 2 pi readings: {seen:?}");
}

#[test]
fn dump_config_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = stirap(
        dir.path(),
        &["simulate", "--preset", "fig8", "--set", "eta=0.1/3", "--set", "delta=2*pi/7", "--dump-config", "run.cfg", "-o", "a.csv"],
    );
    assert_eq!(code, 0);
    let (code, _, _) = stirap(dir.path(), &["simulate", "--config", "run.cfg", "-o", "b.csv"]);
    assert_eq!(code, 0);
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap());
}

#[test]
fn sweep_with_two_points() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = stirap(dir.path(), &["sweep", "--preset", "fig4a", "--points", "2", "-o", "p.csv"]);
    assert_eq!(code, 0);
    let (header, rows) = read_csv(&dir.path().join("p.csv"));
    assert_eq!(header, ["tau", "infidelity_optimized", "infidelity_gaussian"]);
    assert_eq!(rows.len(), 2);
    let w: Vec<WindowRecord> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("p.windows.json")).unwrap()).unwrap();
    for r in &w {
        assert!(r.lo <= r.hi && r.min_value <= 1e-3);
    }
}

#[test]
fn fig4a_window_covers_3_7_us() {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = Vec::new();
    for extra in [vec![], cycles_args("35", "0")] {
        let mut args = vec!["sweep", "--preset", "fig4a", "--set", "schemes=optimized", "-o", "s.csv"];
        args.extend(extra.iter().map(String::as_str));
        assert_eq!(stirap(dir.path(), &args).0, 0);
        let w: Vec<WindowRecord> =
            serde_json::from_str(&fs::read_to_string(dir.path().join("s.windows.json")).unwrap()).unwrap();
        seen.push(w.iter().any(|r| r.scheme == "optimized" && r.lo <= 3.7 && 3.7 <= r.hi));
    }
    assert!(seen.iter().any(|&b| b), "window covering 3.7 us under rad/us and 2 pi readings: {seen:?}");
}

#[test]
fn fig13_populations_follow_chi() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = stirap(dir.path(), &["sweep", "--preset", "fig13", "--points", "21", "-o", "c.csv"]);
    assert_eq!(code, 0);
    let (header, rows) = read_csv(&dir.path().join("c.csv"));
    let p3 = header.iter().position(|h| h == "P3_optimized").unwrap();
    for r in &rows {
        assert!((r[p3] - r[0].cos().powi(2)).abs() < 0.02, "chi {} P3 {}", r[0], r[p3]);
    }
}

#[test]
fn sweep_thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sweep", "--preset", "fig5a", "--points", "24"];
    let (c1, _, _) = stirap(dir.path(), &[&args[..], &["--threads", "1", "-o", "a.csv"]].concat());
    let (c2, _, _) = stirap(dir.path(), &[&args[..], &["--threads", "4", "-o", "b.csv"]].concat());
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a.windows.json")).unwrap(),
        fs::read(dir.path().join("b.windows.json")).unwrap()
    );
}

#[test]
fn geometry_reports_constant_rate() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = stirap(dir.path(), &["geometry", "--set", "omega0=35", "--set", "s=0.3"]);
    assert_eq!(code, 0);
    let value = |key: &str| -> f64 {
        let line = out.lines().find(|l| l.starts_with(key)).unwrap();
        line.split('=').nth(1).unwrap().trim().parse().unwrap()
    };
    assert!((value("rate metric") - std::f64::consts::PI / 35.0).abs() < 1e-9);
    assert!(value("rate relative discrepancy") < 1e-6);
}

#[test]
fn geometry_frozen_pulses() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) =
        stirap(dir.path(), &["geometry", "--set", "frozen_p=1", "--set", "frozen_s=1", "--set", "omega0=1"]);
    assert_eq!(code, 0);
    let line = out.lines().find(|l| l.trim().starts_with("D_PP")).unwrap();
    let v: f64 = line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!((v - 0.5).abs() < 1e-9);

    let (code, out, _) = stirap(
        dir.path(),
        &["geometry", "--set", "system=4", "--set", "frozen_p=1", "--set", "frozen_s=1", "--set", "delta=2"],
    );
    assert_eq!(code, 0);
    for l in out.lines().filter(|l| l.trim().starts_with("D_") && l.contains('Q')) {
        let v: f64 = l.split('=').nth(1).unwrap().trim().parse().unwrap();
        assert_eq!(v, 0.0, "{l}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(stirap(dir.path(), &["simulate", "--set", "bogus=1"]).0, 2);
    assert_eq!(stirap(dir.path(), &["simulate", "--set", "tau=-1"]).0, 2);
    assert_eq!(stirap(dir.path(), &["simulate", "--preset", "nope"]).0, 2);
    assert_eq!(stirap(dir.path(), &["frobnicate"]).0, 2);
    assert_eq!(stirap(dir.path(), &["sweep", "--set", "parameter=eta", "--lo", "-2"]).0, 2);
    // too few steps trips the norm check
    assert_eq!(stirap(dir.path(), &["simulate", "--set", "steps=20", "-o", "x.csv"]).0, 3);
    // both pulses off: the excited level meets the dark states
    assert_eq!(stirap(dir.path(), &["geometry", "--set", "frozen_p=0"]).0, 3);
    assert_eq!(stirap(dir.path(), &["presets"]).0, 0);
}
