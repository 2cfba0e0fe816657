//! End-to-end checks of the `ddib` binary: flag handling, exit codes,
//! determinism of file outputs, and the shape of every artifact the
//! subcommands write.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ddib() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ddib"))
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Runs the command and asserts success, surfacing stderr on failure.
fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn ddib");
    assert!(
        out.status.success(),
        "command failed with {:?}\nstderr:\n{}",
        out.status.code(),
        stderr_of(&out)
    );
    out
}

/// Runs the command and asserts the expected failure exit code.
fn run_err(cmd: &mut Command, code: i32) -> Output {
    let out = cmd.output().expect("spawn ddib");
    assert_eq!(
        out.status.code(),
        Some(code),
        "expected exit {code}\nstdout:\n{}\nstderr:\n{}",
        stdout_of(&out),
        stderr_of(&out)
    );
    out
}

/// A config small enough that training and solving finish in seconds.
fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    fs::write(
        &path,
        "[schedule]\n\
         steps = 50\n\
         [network]\n\
         hidden = [32, 32]\n\
         time_embed_dim = 16\n\
         [training]\n\
         iterations = 300\n\
         batch_size = 32\n\
         seed = 11\n\
         [solve]\n\
         n_steps = 25\n\
         [datasets]\n\
         n = 64\n\
         seed = 3\n",
    )
    .unwrap();
    path
}

fn csv_rows(path: &Path) -> usize {
    let text = fs::read_to_string(path).unwrap();
    assert!(text.starts_with("x0,"), "missing header in {text:?}");
    text.lines().count() - 1
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

#[test]
fn gen_is_deterministic_and_reports_the_count() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    for out in [&out_a, &out_b] {
        let run = run_ok(ddib().args([
            "gen",
            "--kind",
            "moons",
            "--n",
            "128",
            "--seed",
            "5",
            "--out",
        ])
        .arg(out));
        assert!(stdout_of(&run).contains("128"));
    }
    assert_eq!(fs::read(&out_a).unwrap(), fs::read(&out_b).unwrap());
    assert_eq!(csv_rows(&out_a), 128);
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    run_err(ddib().arg("no-such-command"), 1);
    run_err(ddib().args(["gen", "--kind", "moons", "--bogus-flag"]), 1);
    run_ok(ddib().arg("--help"));
}

#[test]
fn missing_input_files_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_err(
        ddib().args([
            "encode",
            "--model",
            "/nonexistent/model.json",
            "--points",
            "/nonexistent/points.csv",
            "--out",
        ])
        .arg(dir.path().join("x.csv")),
        2,
    );
    assert!(stderr_of(&out).starts_with("error:"));
}

#[test]
fn malformed_points_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x0,x1,tag\n0.1,not-a-number,0\n").unwrap();
    let out = run_err(
        ddib()
            .args(["ot", "emd", "--source"])
            .arg(&bad)
            .arg("--target")
            .arg(&bad)
            .arg("--out")
            .arg(dir.path().join("plan.json")),
        2,
    );
    assert!(stderr_of(&out).contains("line 2"), "{}", stderr_of(&out));
}

#[test]
fn solver_divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src.csv");
    let tgt = dir.path().join("tgt.csv");
    run_ok(ddib().args(["gen", "--kind", "moons", "--n", "40", "--seed", "1", "--out"]).arg(&src));
    run_ok(ddib().args(["gen", "--kind", "parallel-rings", "--n", "40", "--seed", "2", "--out"]).arg(&tgt));
    let out = run_err(
        ddib()
            .args(["ot", "sinkhorn", "--source"])
            .arg(&src)
            .arg("--target")
            .arg(&tgt)
            .args(["--epsilon", "1e-9", "--max-iters", "3", "--tol", "1e-12", "--out"])
            .arg(dir.path().join("plan.json")),
        3,
    );
    assert!(stderr_of(&out).contains("no convergence"), "{}", stderr_of(&out));
}

#[test]
fn train_demands_exactly_one_data_source() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_err(
        ddib().args(["train", "--out"]).arg(dir.path().join("m.json")),
        1,
    );
    assert!(stderr_of(&out).contains("--domain"), "{}", stderr_of(&out));
    // --domain and --data conflict at the parser level.
    run_err(
        ddib()
            .args(["train", "--domain", "moons", "--data", "x.csv", "--out"])
            .arg(dir.path().join("m.json")),
        1,
    );
}

#[test]
fn config_file_overrides_generation_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out_csv = dir.path().join("c.csv");
    run_ok(
        ddib()
            .arg("--config")
            .arg(&cfg)
            .args(["gen", "--kind", "concentric-rings", "--out"])
            .arg(&out_csv),
    );
    assert_eq!(csv_rows(&out_csv), 64);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[schedule]\nstep_count = 10\n").unwrap();
    let out = run_err(
        ddib()
            .arg("--config")
            .arg(&cfg)
            .args(["gen", "--kind", "moons", "--out"])
            .arg(dir.path().join("x.csv")),
        1,
    );
    assert!(stderr_of(&out).contains("bad.toml"), "{}", stderr_of(&out));
}

#[test]
fn cycle_table_names_the_missing_models() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_err(
        ddib()
            .args(["cycle-table", "--models-dir"])
            .arg(dir.path())
            .args(["--domains", "moons,checkerboards", "--out"])
            .arg(dir.path().join("table.csv")),
        2,
    );
    let err = stderr_of(&out);
    assert!(err.contains("ddib train --domain moons"), "{err}");
    assert!(err.contains("ddib train --domain checkerboards"), "{err}");
}

#[test]
fn plot_writes_a_self_contained_svg() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pts.csv");
    run_ok(ddib().args(["gen", "--kind", "concentric-squares", "--n", "200", "--seed", "4", "--out"]).arg(&csv));
    let svg_path = dir.path().join("pts.svg");
    run_ok(ddib().arg("plot").arg(&csv).arg("--out").arg(&svg_path));
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert!(svg.starts_with("<svg"), "unexpected prefix: {}", &svg[..40.min(svg.len())]);
    assert!(svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<circle").count(), 200);
    assert!(svg.len() < 5 * 1024 * 1024);
}

#[test]
fn mse_prints_a_bare_number() {
    let autumn = fixture("autumn.ppm");
    let winter = fixture("winter.ppm");
    let same = run_ok(ddib().arg("mse").arg("--a").arg(&autumn).arg("--b").arg(&autumn));
    assert_eq!(stdout_of(&same).trim(), "0");
    let diff = run_ok(ddib().arg("mse").arg("--a").arg(&autumn).arg("--b").arg(&winter));
    let value: f64 = stdout_of(&diff).trim().parse().unwrap();
    assert!(value > 0.0);
}

/// Trains one tiny model per domain, then drives encode, decode, translate,
/// and cycle through their file interfaces.
#[test]
fn tiny_models_round_trip_through_the_file_interfaces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let moons = dir.path().join("moons.model.json");
    let circles = dir.path().join("checkerboards.model.json");
    for (kind, path) in [("moons", &moons), ("checkerboards", &circles)] {
        run_ok(
            ddib()
                .arg("--config")
                .arg(&cfg)
                .args(["train", "--domain", kind, "--out"])
                .arg(path),
        );
        let text = fs::read_to_string(path).unwrap();
        serde_json::from_str::<serde_json::Value>(&text).unwrap();
    }

    let pts = dir.path().join("pts.csv");
    run_ok(
        ddib()
            .arg("--config")
            .arg(&cfg)
            .args(["gen", "--kind", "moons", "--standardize", "--out"])
            .arg(&pts),
    );

    // encode twice: identical bytes, a trace, and the right shapes.
    let latent_a = dir.path().join("latent_a.csv");
    let latent_b = dir.path().join("latent_b.csv");
    let trace = dir.path().join("trace.csv");
    run_ok(
        ddib()
            .arg("--config")
            .arg(&cfg)
            .args(["encode", "--model"])
            .arg(&moons)
            .arg("--points")
            .arg(&pts)
            .arg("--out")
            .arg(&latent_a)
            .arg("--trace")
            .arg(&trace),
    );
    run_ok(
        ddib()
            .arg("--config")
            .arg(&cfg)
            .args(["encode", "--model"])
            .arg(&moons)
            .arg("--points")
            .arg(&pts)
            .arg("--out")
            .arg(&latent_b),
    );
    assert_eq!(fs::read(&latent_a).unwrap(), fs::read(&latent_b).unwrap());
    assert_eq!(csv_rows(&latent_a), 64);
    let trace_text = fs::read_to_string(&trace).unwrap();
    assert!(trace_text.starts_with("step,x0,x1,tag\n"), "{}", &trace_text[..30]);
    // initial state plus one snapshot per solver step, 64 points each
    assert_eq!(trace_text.lines().count() - 1, 26 * 64);

    let decoded = dir.path().join("decoded.csv");
    run_ok(
        ddib()
            .arg("--config")
            .arg(&cfg)
            .args(["decode", "--model"])
            .arg(&moons)
            .arg("--points")
            .arg(&latent_a)
            .arg("--out")
            .arg(&decoded),
    );
    assert_eq!(csv_rows(&decoded), 64);

    // translate with latents and a report
    let translated = dir.path().join("translated.csv");
    let latents = dir.path().join("latents.csv");
    let report = dir.path().join("translate.json");
    run_ok(
        ddib()
            .arg("--config")
            .arg(&cfg)
            .args(["translate", "--src-model"])
            .arg(&moons)
            .arg("--tgt-model")
            .arg(&circles)
            .arg("--points")
            .arg(&pts)
            .arg("--out")
            .arg(&translated)
            .arg("--latents")
            .arg(&latents)
            .arg("--report")
            .arg(&report),
    );
    assert_eq!(csv_rows(&translated), 64);
    assert_eq!(csv_rows(&latents), 64);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 64);
    assert!(report["mean_roundtrip_l2"].is_null());

    // cycle: report with a finite roundtrip error
    let cycle_report = dir.path().join("cycle.json");
    let run = run_ok(
        ddib()
            .arg("--config")
            .arg(&cfg)
            .args(["cycle", "--model-a"])
            .arg(&moons)
            .arg("--model-b")
            .arg(&circles)
            .arg("--points")
            .arg(&pts)
            .arg("--report")
            .arg(&cycle_report),
    );
    assert!(stdout_of(&run).contains("mean roundtrip L2"));
    let cycle: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&cycle_report).unwrap()).unwrap();
    let l2 = cycle["mean_roundtrip_l2"].as_f64().unwrap();
    assert!(l2.is_finite() && l2 >= 0.0, "roundtrip {l2}");
}

/// The bridge method caches models under DDIB_CACHE_DIR and reports pixel
/// MSE against every baseline.
#[test]
fn color_transfer_bridge_reports_against_all_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out_ppm = dir.path().join("out.ppm");
    let report_path = dir.path().join("report.json");
    let cache = dir.path().join("cache");

    let mut first = ddib();
    first
        .env("DDIB_CACHE_DIR", &cache)
        .arg("--config")
        .arg(&cfg)
        .args(["color-transfer", "--reference"])
        .arg(fixture("autumn.ppm"))
        .arg("--subject")
        .arg(fixture("winter.ppm"))
        .args(["--method", "ddib", "--train", "--out"])
        .arg(&out_ppm)
        .arg("--report")
        .arg(&report_path);
    run_ok(&mut first);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["method"], "ddib");
    for key in ["sinkhorn", "emd", "linear"] {
        let mse = report["pixel_mse_vs"][key].as_f64().unwrap();
        assert!(mse.is_finite() && mse >= 0.0, "{key}: {mse}");
    }

    // second run hits the cache, so --train is no longer needed
    let mut second = ddib();
    second
        .env("DDIB_CACHE_DIR", &cache)
        .arg("--config")
        .arg(&cfg)
        .args(["color-transfer", "--reference"])
        .arg(fixture("autumn.ppm"))
        .arg("--subject")
        .arg(fixture("winter.ppm"))
        .args(["--method", "ddib", "--out"])
        .arg(dir.path().join("out2.ppm"));
    run_ok(&mut second);
    assert_eq!(
        fs::read(&out_ppm).unwrap(),
        fs::read(dir.path().join("out2.ppm")).unwrap()
    );
}
