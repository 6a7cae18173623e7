use std::path::{Path, PathBuf};
use std::process::Command;

use nlpm::barriers::FormulaVariant;
use nlpm::operators::Regime;
use nlpm::theorems::Status;
use nlpm_cli::commands::{cmd_run, cmd_sweep, sweep_names, RunReport, CSV_FILE, REPORT_FILE};
use nlpm_cli::config::{GridConfig, InitialConfig, ModelConfig};
use nlpm_cli::output::{csv_header, read_snapshot, SnapshotMeta};
use nlpm_cli::RunConfig;
use proptest::prelude::*;

const MINIMAL: &str = r#"
t_end = 0.05

[model]
d = 1
s = 0.5
m = 0.5
regime = "clogged"

[grid]
n = 32

[initial]
shape = "constant"
"#;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn nlpm(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nlpm")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn minimal_config_fills_defaults() {
    let c = RunConfig::from_toml(MINIMAL).unwrap();
    assert_eq!(c.seed, 0);
    assert_eq!(c.model.epsilon, 1e-3);
    assert_eq!(c.initial, InitialConfig::Constant { target_mass: 1.0 });
    assert_eq!(c.formula_variant, FormulaVariant::PlusMd);
    assert!(c.snapshot_times.is_empty() && c.p_list.is_empty());
    assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
}

#[test]
fn config_errors_name_the_key() {
    let bad_s = MINIMAL.replace("s = 0.5", "s = 1.0");
    let err = RunConfig::from_toml(&bad_s).unwrap_err().to_string();
    assert!(err.contains("model.s") && err.contains("(d-2)_+ < s < d"), "{err}");

    let typo = MINIMAL.replace("m = 0.5", "m = 0.5\nepsilonn = 1e-3");
    let err = RunConfig::from_toml(&typo).unwrap_err().to_string();
    assert!(err.contains("epsilonn"), "{err}");

    let shape = MINIMAL.replace("\"constant\"", "\"constant\"\nwidth = 2");
    assert!(RunConfig::from_toml(&shape).unwrap_err().to_string().contains("width"));

    let grid = MINIMAL.replace("n = 32", "n = 12");
    assert!(RunConfig::from_toml(&grid).unwrap_err().to_string().contains("grid.n"));

    let snaps = MINIMAL.replace("t_end = 0.05", "t_end = 0.05\nsnapshot_times = [0.75]");
    assert!(RunConfig::from_toml(&snaps).unwrap_err().to_string().contains("snapshot_times"));

    let fd = MINIMAL.replace("m = 0.5", "m = 1.5").replace("clogged", "fast-diffusion");
    assert!(RunConfig::from_toml(&fd).unwrap_err().to_string().contains("model.m"));
}

#[test]
fn shipped_configs_parse() {
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let c = RunConfig::from_path(&path).unwrap_or_else(|e| panic!("{e}"));
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c, "{}", path.display());
    }
}

fn arb_config() -> impl Strategy<Value = RunConfig> {
    let initial = prop_oneof![
        (0.1f64..5.0).prop_map(|target_mass| InitialConfig::Constant { target_mass }),
        (0.0f64..1.0, 1i64..3, 0.1f64..5.0).prop_map(|(amplitude, k, target_mass)| InitialConfig::CosineBump {
            amplitude,
            wavevector: [k, 0],
            target_mass
        }),
        (0.01f64..0.2, -0.5f64..0.5, 0.1f64..5.0).prop_map(|(spectral_width, c, target_mass)| {
            InitialConfig::ApproxDirac { spectral_width, center: [c, 0.0], target_mass }
        }),
        (1i64..4, 0.0f64..0.9, 0.1f64..5.0).prop_map(|(max_mode, floor, target_mass)| InitialConfig::Random {
            max_mode,
            floor,
            target_mass
        }),
    ];
    (any::<u64>(), 0.01f64..10.0, 0.05f64..0.95, 0.05f64..0.95, any::<bool>(), 0.0f64..0.1, initial, 0usize..3)
        .prop_map(|(seed, t_end, s, m, clogged, epsilon, initial, extra)| RunConfig {
            seed,
            t_end,
            snapshot_times: vec![0.0, t_end / 3.0, t_end],
            p_list: [1.5, 4.0, f64::INFINITY][..extra].to_vec(),
            formula_variant: if clogged { FormulaVariant::MinusMd } else { FormulaVariant::PlusMd },
            model: ModelConfig {
                d: 1,
                s,
                m,
                regime: if clogged { Regime::Clogged } else { Regime::FastDiffusion },
                epsilon: epsilon + 1e-6,
            },
            grid: GridConfig { n: 16 },
            initial,
            step: Default::default(),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn configs_round_trip_losslessly(c in arb_config()) {
        let text = c.to_toml();
        prop_assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }
}

/// Compares a CSV against a golden file: identical header, values equal to
/// a relative `1e-12`, so that the test survives last-bit libm differences.
fn assert_matches_golden(csv: &str, golden: &Path) {
    let expected = std::fs::read_to_string(golden).unwrap();
    let (mut a, mut b) = (csv.lines(), expected.lines());
    assert_eq!(a.next(), b.next(), "header");
    let (rows, golden_rows): (Vec<&str>, Vec<&str>) = (a.collect(), b.collect());
    assert_eq!(rows.len(), golden_rows.len());
    for (row, want) in rows.iter().zip(&golden_rows) {
        for (x, y) in row.split(',').zip(want.split(',')) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300), "{x} vs {y}");
        }
    }
}

#[test]
fn constant_run_matches_golden_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let report = cmd_run(&RunConfig::from_toml(MINIMAL).unwrap(), tmp.path()).unwrap();
    assert!(report.succeeded());
    let csv = std::fs::read_to_string(tmp.path().join(CSV_FILE)).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/constant.csv");
    if std::env::var_os("NLPM_BLESS").is_some() {
        std::fs::write(&golden, &csv).unwrap();
    }
    assert_matches_golden(&csv, &golden);
    // Every row of a steady state carries the same functionals: mass and
    // norms equal to 1 + ε, no energy.
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    for row in csv.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[1..11], first[1..11]);
        for v in &cols[1..7] {
            assert!((v.parse::<f64>().unwrap() - 1.001).abs() < 1e-15);
        }
        assert_eq!(cols[7], "0e0");
    }
}

#[test]
fn csv_header_is_pinned() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = RunConfig::from_toml(MINIMAL).unwrap();
    c.p_list = vec![4.0, 1.25];
    cmd_run(&c, tmp.path()).unwrap();
    let csv = std::fs::read_to_string(tmp.path().join(CSV_FILE)).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "time,mass,l1,l2,lp_1.25,lp_1.5,lp_3,lp_4,linf,energy,min,max,spectral_tail,dt,\
         dp_2,dp_slack_2,sv_2,sv_slack_2,dp_3,dp_slack_3,sv_3,sv_slack_3,dp_1.5,dp_slack_1.5,sv_1.5,sv_slack_1.5,\
         energy_dissipation,energy_dissipation_slack"
    );
    let report: RunReport = serde_json::from_str(&std::fs::read_to_string(tmp.path().join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report.config, c);
    assert_eq!(csv_header(&nlpm::diagnostics::DiagnosticsRecord {
        time: 0.0,
        mass: 1.0,
        lp_norms: vec![(f64::INFINITY, 1.0), (1.0, 1.0)],
        energy: 0.0,
        min_value: 1.0,
        max_value: 1.0,
        argmin: 0,
        argmax: 0,
        spectral_tail: 0.0,
        dt: 0.0,
        ledger: Default::default(),
    })[..5], ["time", "mass", "l1", "linf", "energy"]);
}

#[test]
fn same_config_and_seed_give_identical_csv() {
    let text = MINIMAL.replace("t_end = 0.05", "seed = 11\nt_end = 0.05").replace(
        "shape = \"constant\"",
        "shape = \"random\"\nmax_mode = 2",
    );
    let c = RunConfig::from_toml(&text).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let read = |name: &str| std::fs::read(tmp.path().join(name).join(CSV_FILE)).unwrap();
    cmd_run(&c, &tmp.path().join("a")).unwrap();
    cmd_run(&c, &tmp.path().join("b")).unwrap();
    cmd_run(&RunConfig { seed: 12, ..c.clone() }, &tmp.path().join("c")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn snapshots_replay_bit_exactly() {
    let text = MINIMAL.replace("t_end = 0.05", "t_end = 0.05\nsnapshot_times = [0.0, 0.005]").replace(
        "shape = \"constant\"",
        "shape = \"cosine-bump\"\namplitude = 0.4",
    );
    let c = RunConfig::from_toml(&text).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let report = cmd_run(&c, tmp.path()).unwrap();
    assert_eq!(report.snapshots.len(), 2);
    let (t0, f0) = read_snapshot(&tmp.path().join(&report.snapshots[0].file)).unwrap();
    assert_eq!(t0, 0.0);
    let initial = c.initial_field().unwrap();
    assert!(f0.values().iter().zip(initial.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    let (t1, _) = read_snapshot(&tmp.path().join(&report.snapshots[1].file)).unwrap();
    assert_eq!(t1, 0.005);
    let sidecar = tmp.path().join(&report.snapshots[1].file).with_extension("toml");
    let meta: SnapshotMeta = toml::from_str(&std::fs::read_to_string(sidecar).unwrap()).unwrap();
    assert_eq!((meta.time, meta.d, meta.n), (0.005, 1, 32));
    assert_eq!(meta.config, c);
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let good = write(dir, "good.toml", MINIMAL);
    let out = nlpm(&["run", "--config", good.to_str().unwrap(), "--out", dir.join("good").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let bad = write(dir, "bad.toml", &MINIMAL.replace("s = 0.5", "s = 1.0"));
    let out = nlpm(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.s"));

    // An unresolved peak stops the run; the partial outputs stay behind.
    let peak = MINIMAL
        .replace("clogged", "fast-diffusion")
        .replace("n = 32", "n = 64")
        .replace("shape = \"constant\"", "shape = \"approx-dirac\"\nspectral_width = 0.015");
    let peak = write(dir, "peak.toml", &peak);
    let out_dir = dir.join("peak");
    let out = nlpm(&["run", "--config", peak.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report: RunReport = serde_json::from_str(&std::fs::read_to_string(out_dir.join(REPORT_FILE)).unwrap()).unwrap();
    assert!(report.run_error.is_some());
    assert!(report.verdicts.iter().any(|v| v.status == Status::Skipped));
    assert!(std::fs::read_to_string(out_dir.join(CSV_FILE)).unwrap().lines().count() > 2);
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "steady.toml", MINIMAL);
    let root = tmp.path().join("root");
    let out = Command::new(env!("CARGO_BIN_EXE_nlpm"))
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env(nlpm_cli::OUTPUT_ROOT_ENV, &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(root.join("steady").join(CSV_FILE).exists());
}

#[test]
fn sweep_runs_into_separate_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write(tmp.path(), "a.toml", MINIMAL);
    let b = write(tmp.path(), "b.toml", &MINIMAL.replace("regime = \"clogged\"", "regime = \"fast-diffusion\""));
    let names = sweep_names(&[a.clone(), b.clone(), a.clone()]);
    assert_eq!(names, ["a-0", "b", "a-2"]);
    let configs: Vec<(String, RunConfig)> =
        names.into_iter().zip([&a, &b, &a]).map(|(n, p)| (n, RunConfig::from_path(p).unwrap())).collect();
    let results = cmd_sweep(&configs, &tmp.path().join("sweep"));
    for (name, r) in &results {
        assert!(r.as_ref().unwrap().succeeded(), "{name}");
        assert!(tmp.path().join("sweep").join(name).join(REPORT_FILE).exists());
    }
    let out = nlpm(&[
        "sweep",
        "--config",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--out",
        tmp.path().join("cli").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(tmp.path().join("cli/b").join(CSV_FILE).exists());
}

#[test]
fn check_exponents_and_barrier_tables() {
    let out = nlpm(&["check", "--seed", "7", "--suite", "stroock-varopoulos"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    let row = text.lines().find(|l| l.starts_with("stroock-varopoulos")).unwrap();
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!((cols[1], cols[2], cols[4]), ("500", "500", "PASS"));

    let out = nlpm(&["exponents", "--d", "1", "--s", "0.5", "--m", "0.5", "--p", "1"]);
    let text = String::from_utf8_lossy(&out.stdout);
    let cols: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(cols[..4], ["1", "0.3333", "1.0000", "1.5000"]);

    let out = nlpm(&["exponents", "--d", "1", "--s", "0.5", "--m", "0.5", "--formula-variant", "minus-md"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().nth(1).unwrap().split_whitespace().last(), Some("1.0000"));

    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("barrier.csv");
    let out = nlpm(&[
        "barrier",
        "--d",
        "1",
        "--s",
        "0.5",
        "--m",
        "0.5",
        "--regime",
        "fast-diffusion",
        "--points",
        "5",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().next(), Some("time,barrier,envelope"));
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.windows(2).all(|w| w[1][1] >= w[0][1]));
    assert!(rows.iter().all(|r| r[2] <= r[1] && r[1] <= 1.0));

    let out = nlpm(&["check", "--suite", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}
