use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chemokin::snapshot::{read_binary, read_csv, SolverKind};

fn chemokin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chemokin"))
        .args(args)
        .env_remove("CHEMOKIN_OUT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL_MC: [&str; 14] = [
    "--set",
    "B",
    "--k",
    "0.1",
    "--length",
    "5",
    "--sites",
    "100",
    "-m",
    "40",
    "--t-end",
    "2",
    "--snapshot-every",
    "0.5",
];

#[test]
fn classify_table_and_single_set() {
    let o = chemokin(&["classify", "--table"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 7);
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f[4], f[5], "{r}");
    }
    let o = chemokin(&["classify", "--set", "C", "--k", "2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("unstable = false"));
    let o = chemokin(&[
        "classify", "--k", "1", "--d", "1", "--chi", "0.5", "--delta", "0.05",
    ]);
    assert!(stdout(&o).contains("unstable = true"));
}

#[test]
fn validation_errors_exit_1() {
    assert_eq!(code(&chemokin(&["classify", "--set", "Z", "--k", "1"])), 1);
    assert_eq!(code(&chemokin(&["classify", "--set", "A"])), 1);
    assert_eq!(
        code(&chemokin(&[
            "classify", "--set", "A", "--k", "1", "--d", "2"
        ])),
        1
    );
    assert_eq!(code(&chemokin(&["frobnicate"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        code(&chemokin(&[
            "mc-run", "--set", "B", "--k", "0.1", "--dt", "0.5", "--out", out
        ])),
        1
    );
    assert_eq!(
        code(&chemokin(&[
            "ks-run", "--set", "B", "--k", "0.1", "--ks-dt", "50", "--out", out
        ])),
        1
    );
    assert!(
        fs::read_dir(dir.path()).unwrap().next().is_none(),
        "nothing written before validation"
    );
    assert_eq!(code(&chemokin(&["--help"])), 0);
}

#[test]
fn io_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let mut args = vec!["mc-run"];
    args.extend(SMALL_MC);
    args.extend(["--out", out.to_str().unwrap()]);
    assert_eq!(code(&chemokin(&args)), 2);
}

#[test]
fn verify_passes_and_catches_mutation() {
    let o = chemokin(&["verify", "--draws", "100"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("table-classification,pass,\"7/7 match\""));
    let o = chemokin(&["verify", "--draws", "10", "--diffusion", "0.3"]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("continuum-dispersion,fail"));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn mc_run_is_reproducible_and_self_describing() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    // same relative output path, so the embedded configs agree
    for d in [&a, &b] {
        let mut args = vec!["mc-run", "--seed", "9"];
        args.extend(SMALL_MC);
        args.extend(["--out", "run"]);
        let o = Command::new(env!("CARGO_BIN_EXE_chemokin"))
            .args(&args)
            .current_dir(d.path())
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("solver = \"mc\""));
    }
    let (a, b) = (a.path().join("run"), b.path().join("run"));
    let fa = files(&a);
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(
        names,
        [
            "config.toml",
            "density.csv",
            "metrics.csv",
            "spectrum.csv",
            "summary.toml"
        ]
    );
    assert!(fa == files(&b), "same seed must give identical bytes");

    let csv = String::from_utf8(fa[1].1.clone()).unwrap();
    assert!(csv.starts_with("# chemokin "));
    assert!(csv.contains("# seed = 9"));
    assert!(csv.contains("# threads = "));
    let (kind, snaps) = read_csv(csv.as_bytes()).unwrap();
    assert_eq!(kind, SolverKind::Mc);
    assert_eq!(snaps.len(), 5);
    assert!(snaps.iter().all(|s| s.rho.len() == 100));
    let embedded = chemokin::cli::embedded_config(&a.join("density.csv"))
        .unwrap()
        .unwrap();
    assert_eq!(embedded.numerics.seed, 9);
    assert_eq!(embedded.params.set.as_deref(), Some("B"));
    for (name, bytes) in &fa[2..] {
        assert!(
            String::from_utf8_lossy(bytes).contains("# seed = 9"),
            "{name} lacks header"
        );
    }
}

#[test]
fn binary_output_and_spectrum_subcommand() {
    let run = tempfile::tempdir().unwrap();
    let mut args = vec!["mc-run", "--format", "binary"];
    args.extend(SMALL_MC);
    args.extend(["--out", run.path().to_str().unwrap()]);
    assert_eq!(code(&chemokin(&args)), 0);
    let bin = run.path().join("density.bin");
    let (h, snaps) = read_binary(fs::File::open(&bin).unwrap()).unwrap();
    assert_eq!((h.sites, h.count, h.kind), (100, 5, SolverKind::Mc));
    assert_eq!(snaps.last().unwrap().t, 2.0);

    let out = tempfile::tempdir().unwrap();
    let o = chemokin(&[
        "spectrum",
        "--input",
        bin.to_str().unwrap(),
        "--spacetime",
        "--window-start",
        "1",
        "--window-interval",
        "0.5",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("window = [1.0, 2.0, 0.5]"));
    let st = fs::read_to_string(out.path().join("spacetime.csv")).unwrap();
    let rows = st.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 5 * 100);
    let spec = fs::read_to_string(out.path().join("spectrum.csv")).unwrap();
    assert_eq!(spec.lines().filter(|l| !l.starts_with('#')).count(), 1 + 51);
}

#[test]
fn config_file_with_flag_override_and_env_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "mode = \"ks-run\"\n[params]\nset = \"B\"\nk = 0.1\n[numerics]\nt_end = 8.0\nsites = 400\nsnapshot_every = 2.0\n",
    )
    .unwrap();
    let out = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_chemokin"))
        .args(["run", "--config", cfg.to_str().unwrap(), "--t-end", "4"])
        .env("CHEMOKIN_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("solver = \"ks\""));
    assert!(text.contains("clamped = 0"));
    let (_, snaps) = read_csv(fs::read(out.join("density.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(snaps.len(), 3);
    assert!((snaps.last().unwrap().t - 4.0).abs() < 1e-9);
    let saved = chemokin::config::RunConfig::load(&out.join("config.toml")).unwrap();
    assert_eq!(saved.numerics.t_end, 4.0);
}

#[test]
fn stability_diagram_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let o = chemokin(&[
        "stability-diagram",
        "--points",
        "9",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let parse = |name: &str| -> Vec<Vec<f64>> {
        fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
            .collect()
    };
    let curve = parse("critical_curve.csv");
    let cont = parse("continuum_threshold.csv");
    assert_eq!(curve.len(), 4 * 9);
    assert_eq!(cont.len(), 9);
    for j in 0..9 {
        let by_k: Vec<f64> = (0..4).map(|i| curve[i * 9 + j][4]).collect();
        assert!(
            by_k.windows(2).all(|w| w[0] < w[1]),
            "smaller k must give a lower line: {by_k:?}"
        );
        assert!(cont[j][1] < by_k[0]);
    }
    let one = tempfile::tempdir().unwrap();
    let o = chemokin(&[
        "stability-diagram",
        "--k",
        "1",
        "--d-over-k-min",
        "1",
        "--d-over-k-max",
        "1",
        "--points",
        "1",
        "--out",
        one.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(one.path().join("critical_curve.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn dispersion_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = chemokin(&[
        "dispersion",
        "--set",
        "B",
        "--k",
        "0.1",
        "--points",
        "50",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("dispersion.csv")).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    assert_eq!(rows.len(), 50);
    assert!(rows.iter().any(|r| r.split(',').nth(2) == Some("true")));
    assert!(rows.iter().any(|r| r.split(',').nth(2) == Some("false")));
}
