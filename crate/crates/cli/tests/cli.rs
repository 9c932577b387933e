use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn recipe(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    let o = Command::new(env!("CARGO_BIN_EXE_biphoton"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    if !o.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&o.stderr));
    }
    o
}

fn ok(args: &[&str], out: &Path) {
    let o = run(args, out);
    assert!(o.status.success(), "{args:?} exited with {:?}", o.status.code());
}

/// Header and rows of a CSV with `#` metadata lines.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let k = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

fn report(path: &Path) -> std::collections::HashMap<String, String> {
    let (_, rows) = read_csv(path);
    rows.into_iter().map(|r| (r[0].clone(), r[1].clone())).collect()
}

fn body(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn resonant_linewidths_are_equal() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["dressed"], dir.path());
    let r = report(&dir.path().join("dressed.csv"));
    let plus: f64 = r["fwhm_plus"].parse().unwrap();
    let minus: f64 = r["fwhm_minus"].parse().unwrap();
    assert!((plus - 1.084).abs() < 1e-12 && (minus - 1.084).abs() < 1e-12);
}

#[test]
fn large_detuning_linewidth() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["dressed", "--set", "system.delta_c=45"], dir.path());
    let w: f64 = report(&dir.path().join("dressed.csv"))["fwhm_minus"].parse().unwrap();
    assert!((w - 0.21).abs() < 0.01, "{w}");
}

#[test]
fn linewidth_sweep_shape() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["sweep", "-c", recipe("linewidth_vs_detuning.toml").to_str().unwrap()],
        dir.path(),
    );
    let csv = dir.path().join("sweep.csv");
    let dc = column(&csv, "delta_c");
    let narrow = column(&csv, "fwhm_minus");
    let broad = column(&csv, "fwhm_plus");
    assert_eq!(dc.len(), 121);
    assert!(narrow.windows(2).all(|w| w[1] < w[0]));
    assert!(broad.windows(2).all(|w| w[1] > w[0]));
    for (n, b) in narrow.iter().zip(&broad) {
        assert!((n + b - 2.168).abs() < 1e-9);
    }
}

#[test]
fn sweep_beat_periods() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["sweep", "-c", recipe("beat_periods.toml").to_str().unwrap()],
        dir.path(),
    );
    let periods = column(&dir.path().join("sweep.csv"), "beat_period_ns");
    for (t, expect) in periods.iter().zip([22.5, 14.9, 10.4, 7.0]) {
        assert!((t - expect).abs() < 0.05, "{t} vs {expect}");
    }
}

#[test]
fn budget_recovers_generated_rate() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["budget", "-c", recipe("loss_budget.toml").to_str().unwrap()],
        dir.path(),
    );
    let text = std::fs::read_to_string(dir.path().join("budget.txt")).unwrap();
    let rate: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("generated_rate_per_s = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((rate / 10_368.0 - 1.0).abs() < 0.01, "{rate}");
}

#[test]
fn wavepacket_overlay_agrees() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["wavepacket", "-c", recipe("wavepacket_dc28p3.toml").to_str().unwrap()],
        dir.path(),
    );
    let csv = dir.path().join("wavepacket.csv");
    let a = column(&csv, "g2_analytic");
    let n = column(&csv, "g2_numeric");
    let peak = a.iter().copied().fold(0.0, f64::max);
    let dev = a.iter().zip(&n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / peak;
    assert!(dev < 1e-3, "{dev}");
    assert!(dir.path().join("spectrum.csv").exists());
}

#[test]
fn filter_removes_beating() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["filter", "-c", recipe("narrowband_filter.toml").to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    let value = |key: &str| -> f64 {
        stdout
            .lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert!(value("depth_before") > 0.9);
    assert!(value("depth_after") < 0.2);
}

#[test]
fn montecarlo_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = recipe("coincidence_round_trip.toml");
    let cfg = cfg.to_str().unwrap();
    ok(&["montecarlo", "-c", cfg], dir.path());
    ok(&["fit", "-c", cfg, "--set", "output.format=\"csv\""], dir.path());
    let csv = dir.path().join("fit.csv");
    let (_, rows) = read_csv(&csv);
    let get = |name: &str| -> f64 { rows.iter().find(|r| r[0] == name).unwrap()[1].parse().unwrap() };
    // Δc = 28.3, Ωc = 14.8
    for (name, truth) in [
        ("gamma_minus", 0.136_138),
        ("gamma_plus", 0.947_862),
        ("omega_e", 31.9133),
    ] {
        assert!((get(name) / truth - 1.0).abs() < 0.05, "{name}: {}", get(name));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "montecarlo",
        "--set",
        "detection.measurement_time=20",
        "--set",
        "detection.rng_seed=9",
    ];
    ok(&args, a.path());
    let first = std::fs::read(a.path().join("histogram.csv")).unwrap();
    ok(&args, a.path());
    assert_eq!(first, std::fs::read(a.path().join("histogram.csv")).unwrap());
    // the header echoes output.dir, the body must not depend on it
    ok(&args, b.path());
    assert_eq!(
        body(&a.path().join("histogram.csv")),
        body(&b.path().join("histogram.csv"))
    );

    ok(&["sweep"], a.path());
    ok(&["sweep"], b.path());
    assert_eq!(body(&a.path().join("sweep.csv")), body(&b.path().join("sweep.csv")));

    let c = tempfile::tempdir().unwrap();
    ok(
        &[
            "montecarlo",
            "--set",
            "detection.measurement_time=20",
            "--set",
            "detection.rng_seed=10",
        ],
        c.path(),
    );
    assert_ne!(
        body(&a.path().join("histogram.csv")),
        body(&c.path().join("histogram.csv"))
    );
}

#[test]
fn headers_echo_config_without_timestamps() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["sweep", "--set", "system.omega_c=20"], dir.path());
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(text.starts_with("# biphoton "));
    assert!(text.contains("#   omega_c = 20.0"));
    assert!(!text.contains("unix_time"));

    ok(&["sweep", "--timestamps"], dir.path());
    assert!(std::fs::read_to_string(dir.path().join("sweep.csv"))
        .unwrap()
        .contains("# unix_time: "));
}

#[test]
fn modulation_recipe_applies_fiber_delay() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["modulate", "-c", recipe("heralded_shaping.toml").to_str().unwrap()],
        dir.path(),
    );
    let csv = dir.path().join("modulated.csv");
    let tau = column(&csv, "tau_ns");
    let out = column(&csv, "g2_out");
    let input = column(&csv, "g2_in");
    let first = out.iter().position(|v| *v > 0.0).unwrap();
    assert!((tau[first] - 171.4).abs() < 0.2, "{}", tau[first]);
    assert!(out.iter().zip(&input).all(|(o, i)| o <= i));
}

#[test]
fn mask_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("mask.csv");
    let mut text = String::from("# ramp\nt_ns,value\n");
    for k in 0..=100 {
        text.push_str(&format!("{},{}\n", 200.0 + k as f64, k as f64 / 100.0));
    }
    std::fs::write(&samples, text).unwrap();
    let set = format!("modulate.mask_csv={:?}", samples.display().to_string());
    ok(&["modulate", "--set", "system.delta_c=28.3", "--set", &set], dir.path());
    let csv = dir.path().join("modulated.csv");
    let mask = column(&csv, "mask");
    let tau = column(&csv, "tau_ns");
    let at = |t: f64| mask[tau.iter().position(|x| (x - t).abs() < 1e-9).unwrap()];
    assert!((at(250.0) - 0.5).abs() < 1e-9);
    assert_eq!(at(100.0), 0.0);
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for set in [
        "system.gamma12=-0.1",
        "grid.n_points=3",
        "detection.qe_stokes=1.5",
        "system.nonsense=1",
    ] {
        let o = run(&["dressed", "--set", set], dir.path());
        assert_eq!(o.status.code(), Some(2), "{set}");
    }
    // nothing was computed or written
    assert!(!dir.path().join("dressed.csv").exists());
}

#[test]
fn non_convergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "montecarlo",
            "--set",
            "system.delta_c=28.3",
            "--set",
            "detection.measurement_time=60",
        ],
        dir.path(),
    );
    let o = run(&["fit", "--set", "fit.max_iterations=1"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn missing_input_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["fit", "--histogram", "/nonexistent/histogram.csv"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    let o = run(&["dressed", "-c", "/nonexistent/run.toml"], dir.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn every_recipe_runs_quickly() {
    for (cmd, name) in [
        ("sweep", "linewidth_vs_detuning.toml"),
        ("sweep", "beat_periods.toml"),
        ("wavepacket", "wavepacket_dc0.toml"),
        ("wavepacket", "wavepacket_dc16p7.toml"),
        ("wavepacket", "wavepacket_dc28p3.toml"),
        ("wavepacket", "wavepacket_dc45.toml"),
        ("filter", "narrowband_filter.toml"),
        ("wavepacket", "narrowband_filter.toml"),
        ("montecarlo", "coincidence_round_trip.toml"),
        ("fit", "coincidence_round_trip.toml"),
        ("budget", "loss_budget.toml"),
        ("modulate", "heralded_shaping.toml"),
        ("wavepacket", "pulse_train.toml"),
        ("dressed", "pulse_train.toml"),
    ] {
        let dir = tempfile::tempdir().unwrap();
        if cmd == "fit" {
            ok(&["montecarlo", "-c", recipe(name).to_str().unwrap()], dir.path());
        }
        let start = Instant::now();
        ok(&[cmd, "-c", recipe(name).to_str().unwrap()], dir.path());
        let secs = start.elapsed().as_secs_f64();
        assert!(secs < 60.0, "{cmd} {name}: {secs:.1} s");
    }
}
