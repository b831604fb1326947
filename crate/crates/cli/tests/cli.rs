use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_frontalize"));
    cmd.env_remove("FF_SEED");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn frontalize")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Keys for an 8×8 model that trains in well under a second.
const TINY: &[&str] = &[
    "--set", "latent_dim=4", "--set", "base_size=2", "--set", "channels=3", "--set", "stages=2",
    "--set", "batch_size=4", "--set", "identities=4",
];

fn train_tiny(out: &Path, steps: &str, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--out", s(out), "--steps", steps];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    run(&args)
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn synth_writes_files_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("faces");
    let r = run(&["synth", "--count", "10", "--seed", "1", "--out-dir", s(&out)]);
    assert_eq!(code(&r), 0, "{r:?}");
    let pgm = std::fs::read_dir(&out).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm")
    });
    assert_eq!(pgm.count(), 10);
    let manifest = std::fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().next(), Some("path,seed,pose_deg"));
    assert_eq!(manifest.lines().count(), 11);
    for row in manifest.lines().skip(1) {
        let pose: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((20.0..=60.0).contains(&pose), "{pose}");
        assert!(out.join(row.split(',').next().unwrap()).exists());
    }
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let r = run(&["synth", "--count", "6", "--seed", "9", "--angles", "-30:30", "--out-dir", s(d)]);
        assert_eq!(code(&r), 0);
    }
    assert_eq!(dir_contents(&a), dir_contents(&b));
}

#[test]
fn synth_several_sizes_use_subdirectories() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run(&["synth", "--count", "2", "--sizes", "8,16", "--out-dir", s(tmp.path())]);
    assert_eq!(code(&r), 0);
    assert_eq!(std::fs::metadata(tmp.path().join("8/face_0000.pgm")).unwrap().len(), 11 + 64);
    assert_eq!(std::fs::metadata(tmp.path().join("16/face_0001.pgm")).unwrap().len(), 13 + 256);
}

#[test]
fn synth_unwritable_directory_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("blocker");
    std::fs::write(&blocker, b"").unwrap();
    let r = run(&["synth", "--count", "1", "--out-dir", s(&blocker.join("faces"))]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("error:"));
}

#[test]
fn train_missing_config_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let r = run(&["train", "--config", s(&tmp.path().join("nope.cfg")), "--out", s(tmp.path())]);
    assert_eq!(code(&r), 2);
}

#[test]
fn train_unknown_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "steps = 2\nlearning_rate = 0.1\n").unwrap();
    let r = run(&["train", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("learning_rate"));
}

#[test]
fn train_smoke_run_writes_metrics_and_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let r = train_tiny(tmp.path(), "10", &[]);
    assert_eq!(code(&r), 0, "{r:?}");
    let metrics = std::fs::read_to_string(tmp.path().join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("step,l_real,l_fake,l_d,l_g,k,m"));
    assert_eq!(metrics.lines().count(), 11);
    assert!(tmp.path().join("checkpoint.bin").exists());
}

#[test]
fn train_divergence_exits_with_numeric_code() {
    let tmp = tempfile::tempdir().unwrap();
    let r = train_tiny(tmp.path(), "20", &["--set", "lr=1e250"]);
    assert_eq!(code(&r), 3, "{r:?}");
    assert!(tmp.path().join("checkpoint.bin").exists());
}

#[test]
fn seed_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let metrics = |name: &str, env_seed: Option<&str>, extra: &[&str]| {
        let out = tmp.path().join(name);
        let mut args = vec!["train", "--out", s(&out), "--steps", "3"];
        args.extend_from_slice(TINY);
        args.extend_from_slice(extra);
        let mut cmd = bin();
        cmd.args(&args);
        if let Some(v) = env_seed {
            cmd.env("FF_SEED", v);
        }
        assert_eq!(code(&cmd.output().unwrap()), 0);
        std::fs::read(out.join("metrics.csv")).unwrap()
    };
    let cfg = tmp.path().join("seed7.cfg");
    std::fs::write(&cfg, "seed = 7\n").unwrap();
    let plain5 = metrics("p5", None, &["--seed", "5"]);
    let plain7 = metrics("p7", None, &["--seed", "7"]);
    assert_ne!(plain5, plain7);
    assert_eq!(metrics("env", Some("5"), &[]), plain5);
    assert_eq!(metrics("file", Some("5"), &["--config", s(&cfg)]), plain7);
    assert_eq!(metrics("flag", Some("7"), &["--config", s(&cfg), "--seed", "5"]), plain5);
}

fn tiny_checkpoint(dir: &Path) -> PathBuf {
    let r = train_tiny(dir, "5", &[]);
    assert_eq!(code(&r), 0, "{r:?}");
    dir.join("checkpoint.bin")
}

#[test]
fn frontalize_synthetic_strip() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = tiny_checkpoint(tmp.path());
    let out = tmp.path().join("f10");
    let r = run(&[
        "frontalize", "--checkpoint", s(&ck), "--synthetic", "7,45", "--n", "10", "--out-dir", s(&out),
        "--set", "inversion_steps=10",
    ]);
    assert_eq!(code(&r), 0, "{r:?}");
    for i in 0..10 {
        assert!(out.join(format!("strip_{i:02}.pgm")).exists());
    }
    assert_eq!(std::fs::read(out.join("median_a.pgm")).unwrap(), std::fs::read(out.join("strip_04.pgm")).unwrap());
    assert_eq!(std::fs::read(out.join("median_b.pgm")).unwrap(), std::fs::read(out.join("strip_05.pgm")).unwrap());
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().next(), Some("kind,index,t,angle_deg,asymmetry,l1_to_frontal"));
    assert!(report.lines().filter(|l| l.starts_with("strip,")).all(|l| !l.ends_with(',')));
    assert!(report.contains("\nmedian_a,4,") && report.contains("\nmedian_b,5,"));

    let again = tmp.path().join("again");
    let r = run(&[
        "frontalize", "--checkpoint", s(&ck), "--synthetic", "7,45", "--n", "10", "--out-dir", s(&again),
        "--set", "inversion_steps=10",
    ]);
    assert_eq!(code(&r), 0);
    assert_eq!(dir_contents(&out), dir_contents(&again));
}

#[test]
fn frontalize_two_point_strip_is_the_endpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = tiny_checkpoint(tmp.path());
    let faces = tmp.path().join("faces");
    assert_eq!(code(&run(&["synth", "--count", "1", "--sizes", "8", "--out-dir", s(&faces)])), 0);
    let out = tmp.path().join("f2");
    let r = run(&[
        "frontalize", "--checkpoint", s(&ck), "--input", s(&faces.join("face_0000.pgm")), "--n", "2",
        "--out-dir", s(&out), "--set", "inversion_steps=5",
    ]);
    assert_eq!(code(&r), 0, "{r:?}");
    let strips = dir_contents(&out).into_iter().filter(|(n, _)| n.starts_with("strip_")).count();
    assert_eq!(strips, 2);
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.contains("\nmedian_a,0,") && report.contains("\nmedian_b,1,"));
}

#[test]
fn frontalize_incompatible_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = tiny_checkpoint(tmp.path());
    let out = tmp.path().join("x");
    let r = run(&[
        "frontalize", "--checkpoint", s(&ck), "--synthetic", "1,30", "--out-dir", s(&out), "--set", "latent_dim=5",
    ]);
    assert_eq!(code(&r), 4, "{r:?}");

    let faces = tmp.path().join("faces16");
    assert_eq!(code(&run(&["synth", "--count", "1", "--out-dir", s(&faces)])), 0);
    let r = run(&["frontalize", "--checkpoint", s(&ck), "--input", s(&faces.join("face_0000.pgm")), "--out-dir", s(&out)]);
    assert_eq!(code(&r), 4, "{r:?}");

    let r = run(&["frontalize", "--checkpoint", s(&tmp.path().join("missing.bin")), "--synthetic", "1,30"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn invert_writes_one_embedding_line() {
    let tmp = tempfile::tempdir().unwrap();
    let ck = tiny_checkpoint(tmp.path());
    let faces = tmp.path().join("faces");
    assert_eq!(code(&run(&["synth", "--count", "1", "--sizes", "8", "--out-dir", s(&faces)])), 0);
    let emb = tmp.path().join("z.txt");
    let rec = tmp.path().join("rec.pgm");
    let r = run(&[
        "invert", "--checkpoint", s(&ck), "--input", s(&faces.join("face_0000.pgm")), "--out", s(&emb),
        "--reconstruction", s(&rec), "--set", "inversion_steps=5", "--set", "inversion_init=encoder",
    ]);
    assert_eq!(code(&r), 0, "{r:?}");
    let text = std::fs::read_to_string(&emb).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(text.split_whitespace().count(), 4);
    assert!(rec.exists());
}

#[test]
fn verify_slerp_passes_and_mutation_fails() {
    let ok = run(&["verify", "--suite", "slerp"]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    let text = stdout(&ok);
    assert!(text.lines().filter(|l| l.starts_with("check ")).all(|l| l.contains("status=pass")));
    assert!(text.contains("name=endpoint_exact"));

    let bad = run(&["verify", "--suite", "slerp", "--mutate"]);
    assert_eq!(code(&bad), 1);
    assert!(stdout(&bad).contains("status=fail"));
}

#[test]
fn verify_grad_reports_every_layer() {
    let r = run(&["verify", "--suite", "grad", "--points", "2"]);
    assert_eq!(code(&r), 0, "{}", stdout(&r));
    let text = stdout(&r);
    for layer in ["linear", "conv2d", "deconv2d", "upsample2x", "elu", "tanh", "discriminator_loss", "generator_loss"] {
        let line = text.lines().find(|l| l.contains(&format!("name={layer} "))).unwrap();
        let value: f64 = line.split("value=").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
        assert!(value < 1e-5, "{line}");
    }
}

#[test]
fn verify_equilibrium_short_run() {
    let r = run(&["verify", "--suite", "equilibrium", "--steps", "50"]);
    assert_eq!(code(&r), 0, "{}", stdout(&r));
    assert!(stdout(&r).contains("summary checks=3 failed=0"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&run(&["synth", "--angles", "60"])), 2);
    assert_eq!(code(&run(&["frontalize", "--checkpoint", "x.bin"])), 2);
    assert_eq!(code(&run(&["verify", "--suite", "everything"])), 2);
}

#[test]
fn help_snapshots() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots");
    let update = std::env::var_os("UPDATE_SNAPSHOTS").is_some();
    for cmd in ["", "synth", "train", "invert", "frontalize", "verify"] {
        let mut args: Vec<&str> = cmd.split_whitespace().collect();
        args.push("--help");
        let out = run(&args);
        assert_eq!(code(&out), 0);
        let name = if cmd.is_empty() { "root.txt".to_string() } else { format!("{cmd}.txt") };
        let path = dir.join(name);
        let text = stdout(&out);
        if update {
            std::fs::write(&path, &text).unwrap();
        } else {
            let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing snapshot {path:?}"));
            assert_eq!(text, expected, "help for `{cmd}` changed; rerun with UPDATE_SNAPSHOTS=1 after review");
        }
    }
}
