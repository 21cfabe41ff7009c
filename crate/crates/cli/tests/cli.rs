//! Black-box tests of the binary: argument handling, config files, exit
//! codes and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn prach() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prach"))
}

fn run(args: &[&str]) -> Output {
    prach().args(args).output().expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_cleanly() {
    assert_code(&run(&["--help"]), 0);
    assert_code(&run(&["--version"]), 0);
    assert_code(&run(&["eval", "--help"]), 0);
}

#[test]
fn full_loop_generate_train_eval_capture_detect_explain() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl.gz");
    let model = dir.path().join("model.json");
    let csv = dir.path().join("eval.csv");
    let gp = dir.path().join("eval.gp");
    let cap = dir.path().join("occ.csv");
    let det = dir.path().join("det.csv");
    let phi = dir.path().join("phi.csv");

    assert_code(
        &run(&[
            "generate", "--output", path_str(&data),
            "--snr", "5,15", "--instances-per-snr", "300", "--seed", "1",
        ]),
        0,
    );
    assert!(data.exists());
    assert!(dir.path().join("data.jsonl.gz.meta.json").exists());

    assert_code(
        &run(&[
            "train", "--data", path_str(&data), "--output", path_str(&model),
            "--hidden", "24,12", "--max-epochs", "25", "--seed", "2",
        ]),
        0,
    );

    assert_code(
        &run(&[
            "eval", "--model", path_str(&model),
            "--channels", "awgn", "--num-rx", "1", "--snr", "10",
            "--trials", "50", "--target-fa", "0.01", "--cal-occasions", "500",
            "--output", path_str(&csv), "--gnuplot", path_str(&gp), "--seed", "3",
        ]),
        0,
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.contains("channel,num_rx,snr_db,receiver,"));
    assert!(gp.exists());

    assert_code(
        &run(&[
            "capture", "--output", path_str(&cap),
            "--rapid", "17", "--snr", "10", "--delay-bins", "3", "--seed", "4",
        ]),
        0,
    );
    let out = run(&[
        "detect", "--capture", path_str(&cap), "--model", path_str(&model),
        "--output", path_str(&det),
    ]);
    assert_code(&out, 0);
    let det_text = std::fs::read_to_string(&det).unwrap();
    assert!(det_text.lines().any(|l| l.starts_with("17,")), "{}", det_text);

    assert_code(
        &run(&[
            "explain", "--data", path_str(&data), "--model", path_str(&model),
            "--output", path_str(&phi), "--max-instances", "8",
        ]),
        0,
    );
    let phi_text = std::fs::read_to_string(&phi).unwrap();
    assert!(phi_text.contains("phi_12"));
}

#[test]
fn byte_identical_outputs_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for p in [&a, &b] {
        assert_code(
            &run(&[
                "generate", "--output", path_str(p),
                "--snr", "0", "--instances-per-snr", "50", "--seed", "7",
            ]),
            0,
        );
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let c = dir.path().join("c.jsonl");
    assert_code(
        &run(&[
            "generate", "--output", path_str(&c),
            "--snr", "0", "--instances-per-snr", "50", "--seed", "8",
        ]),
        0,
    );
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn seed_comes_from_environment_when_flags_are_silent() {
    let dir = tempfile::tempdir().unwrap();
    let via_env = dir.path().join("env.jsonl");
    let via_flag = dir.path().join("flag.jsonl");
    let out = prach()
        .args([
            "generate", "--output", path_str(&via_env),
            "--snr", "0", "--instances-per-snr", "20",
        ])
        .env("PRACH_SEED", "99")
        .output()
        .unwrap();
    assert_code(&out, 0);
    assert_code(
        &run(&[
            "generate", "--output", path_str(&via_flag),
            "--snr", "0", "--instances-per-snr", "20", "--seed", "99",
        ]),
        0,
    );
    assert_eq!(
        std::fs::read(&via_env).unwrap(),
        std::fs::read(&via_flag).unwrap()
    );

    let out = prach()
        .args(["generate", "--output", path_str(&via_env), "--snr", "0"])
        .env("PRACH_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_code(&out, 2);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out1 = dir.path().join("one.jsonl");
    let out2 = dir.path().join("two.jsonl");
    std::fs::write(
        &cfg,
        "# defaults for this run\nsnr = 0\ninstances-per-snr = 30\nseed = 5\nunused-knob = 1\n",
    )
    .unwrap();
    let out = run(&[
        "generate", "--config", path_str(&cfg), "--output", path_str(&out1),
    ]);
    assert_code(&out, 0);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("unused-knob"),
        "unused config keys should warn"
    );
    let n = std::fs::read_to_string(&out1).unwrap().lines().count();
    assert_eq!(n, 30);

    // explicit flag beats the config value
    assert_code(
        &run(&[
            "generate", "--config", path_str(&cfg), "--output", path_str(&out2),
            "--instances-per-snr", "10",
        ]),
        0,
    );
    let n = std::fs::read_to_string(&out2).unwrap().lines().count();
    assert_eq!(n, 10);
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    // unknown channel value
    assert_code(
        &run(&[
            "generate", "--output", path_str(&out), "--channel", "rayleigh",
            "--snr", "0", "--instances-per-snr", "4",
        ]),
        2,
    );
    // missing required option
    assert_code(&run(&["generate", "--snr", "0"]), 2);
    // hybrid receiver without a model
    let csv = dir.path().join("e.csv");
    assert_code(
        &run(&[
            "eval", "--receivers", "hybrid", "--snr", "0", "--trials", "5",
            "--output", path_str(&csv),
        ]),
        2,
    );
    // malformed config file line
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "this line has no equals\n").unwrap();
    assert_code(
        &run(&["generate", "--config", path_str(&cfg), "--output", path_str(&out)]),
        3,
    );
}

#[test]
fn unreadable_or_corrupt_inputs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    // nonexistent dataset
    assert_code(
        &run(&[
            "train", "--data", path_str(&dir.path().join("missing.jsonl")),
            "--output", path_str(&model),
        ]),
        3,
    );
    // corrupt dataset line
    let data = dir.path().join("bad.jsonl");
    std::fs::write(&data, "{broken\n").unwrap();
    assert_code(
        &run(&["train", "--data", path_str(&data), "--output", path_str(&model)]),
        3,
    );
    // corrupt model file
    std::fs::write(&model, "{}").unwrap();
    let cap = dir.path().join("c.csv");
    assert_code(
        &run(&["capture", "--output", path_str(&cap), "--rapid", "0", "--seed", "1"]),
        0,
    );
    assert_code(
        &run(&["detect", "--capture", path_str(&cap), "--model", path_str(&model)]),
        3,
    );
}

#[test]
fn runtime_failures_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("onesided.jsonl");
    let model = dir.path().join("m.json");
    // a single-class dataset cannot train a classifier
    assert_code(
        &run(&[
            "generate", "--output", path_str(&data),
            "--snr", "0", "--instances-per-snr", "20", "--present-ratio", "1",
            "--seed", "1",
        ]),
        0,
    );
    assert_code(
        &run(&["train", "--data", path_str(&data), "--output", path_str(&model)]),
        4,
    );
}

#[test]
fn detect_reports_absence_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let model = dir.path().join("m.json");
    let cap = dir.path().join("empty.csv");
    assert_code(
        &run(&[
            "generate", "--output", path_str(&data), "--snr", "0,10",
            "--instances-per-snr", "400", "--seed", "3",
        ]),
        0,
    );
    assert_code(
        &run(&[
            "train", "--data", path_str(&data), "--output", path_str(&model),
            "--hidden", "24,12", "--max-epochs", "40", "--seed", "4",
        ]),
        0,
    );
    assert_code(
        &run(&["capture", "--output", path_str(&cap), "--absent", "--seed", "5"]),
        0,
    );
    let out = run(&["detect", "--capture", path_str(&cap), "--model", path_str(&model)]);
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("no preambles detected"));
}
