//! End-to-end tests of the cpalab binary: the exit-code contract, report
//! shapes, and the determinism acceptance criterion.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cpalab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cpalab"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    cpalab()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn cpalab")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const KEY_222: &str = "de000102030405060708090a0b0c0d0e";

fn simulate(dir: &Path, design: &str, traces: &str, out: &str, extra: &[&str]) {
    let mut args = vec![
        "simulate",
        "--design",
        design,
        "--key",
        KEY_222,
        "--num-traces",
        traces,
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    let res = run(&args, dir);
    assert_eq!(exit_code(&res), 0, "simulate failed: {}", stderr(&res));
}

#[test]
fn criterion_8_simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    // Noise values are addressed by (seed, trace, sample) counters rather
    // than drawn from shared sequential state, so the byte-identical
    // guarantee holds regardless of scheduling or thread count.
    simulate(dir.path(), "tmr-opt", "200", "a.sctr", &["--seed", "9"]);
    simulate(dir.path(), "tmr-opt", "200", "b.sctr", &["--seed", "9"]);
    let a = std::fs::read(dir.path().join("a.sctr")).unwrap();
    let b = std::fs::read(dir.path().join("b.sctr")).unwrap();
    assert_eq!(a, b, "same flags and seed must produce identical bytes");

    simulate(dir.path(), "tmr-opt", "200", "c.sctr", &["--seed", "10"]);
    let c = std::fs::read(dir.path().join("c.sctr")).unwrap();
    assert_ne!(a, c, "different seeds must not collide");
    println!(
        "PASS criterion 8: byte-identical SCTR files across repeated runs ({} bytes)",
        a.len()
    );
}

#[test]
fn attack_discloses_zero_noise_single() {
    let dir = tempfile::tempdir().unwrap();
    simulate(
        dir.path(),
        "single",
        "1000",
        "zn.sctr",
        &["--sigma-el", "0", "--seed", "1"],
    );
    let res = run(
        &["attack", "--traces", "zn.sctr", "--report", "pcc.csv"],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 0, "stderr: {}", stderr(&res));
    let text = stdout(&res);
    assert!(text.contains("guessed=0xDE (222)"), "stdout: {text}");

    let csv = std::fs::read_to_string(dir.path().join("pcc.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 257);
    assert_eq!(lines[0], "guess,pcc,is_guessed,is_true");
    let flagged: Vec<&&str> = lines[1..]
        .iter()
        .filter(|l| l.ends_with("true,true"))
        .collect();
    assert_eq!(flagged.len(), 1);
    assert!(flagged[0].starts_with("222,"));
}

#[test]
fn attack_fails_on_diversified_tmr() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "tmr-dif", "2000", "dif.sctr", &["--seed", "1"]);
    let res = run(
        &["attack", "--traces", "dif.sctr", "--report", "dif.csv"],
        dir.path(),
    );
    assert_eq!(
        exit_code(&res),
        1,
        "diversified design should not disclose: {}",
        stdout(&res)
    );
}

#[test]
fn attack_io_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(
        &["attack", "--traces", "missing.sctr", "--report", "r.csv"],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 3);

    let mut junk = vec![0u8; 128];
    junk[..4].copy_from_slice(b"XCTR");
    std::fs::write(dir.path().join("junk.sctr"), junk).unwrap();
    let res = run(
        &["attack", "--traces", "junk.sctr", "--report", "r.csv"],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 3);
    assert!(stderr(&res).contains("not a trace file"));

    simulate(dir.path(), "single", "10", "t.sctr", &[]);
    let res = run(
        &[
            "attack",
            "--traces",
            "t.sctr",
            "--byte-index",
            "16",
            "--report",
            "r.csv",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 2);
}

#[test]
fn simulate_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(
        &[
            "simulate",
            "--design",
            "single",
            "--key",
            KEY_222,
            "--num-traces",
            "0",
            "--out",
            "x.sctr",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 2);

    let res = run(
        &[
            "simulate",
            "--design",
            "single",
            "--key",
            "00ff",
            "--num-traces",
            "5",
            "--out",
            "x.sctr",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 2);

    let res = run(
        &[
            "simulate",
            "--design",
            "nope",
            "--key",
            KEY_222,
            "--num-traces",
            "5",
            "--out",
            "x.sctr",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 2, "clap rejects unknown designs with 2");
}

#[test]
fn simulate_config_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("tweak.cfg"),
        "# double the leakage\ninstance.0.leak_coeff = 0.02\nlabel = tweaked\n",
    )
    .unwrap();
    simulate(
        dir.path(),
        "single",
        "16",
        "tweaked.sctr",
        &["--config", "tweak.cfg"],
    );

    std::fs::write(dir.path().join("bad.cfg"), "instance.5.leak_coeff = 1\n").unwrap();
    let res = run(
        &[
            "simulate",
            "--design",
            "single",
            "--key",
            KEY_222,
            "--num-traces",
            "16",
            "--out",
            "x.sctr",
            "--config",
            "bad.cfg",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 2);
    assert!(stderr(&res).contains("instance 5"));
}

#[test]
fn mtd_sweep_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    simulate(
        dir.path(),
        "single",
        "200",
        "zn.sctr",
        &["--sigma-el", "0", "--seed", "5"],
    );

    let res = run(&["mtd", "--traces", "zn.sctr", "--step", "10"], dir.path());
    assert_eq!(exit_code(&res), 0, "stderr: {}", stderr(&res));
    let text = stdout(&res);
    assert!(text.contains("key_index,key_byte,disclosed,n_required"));
    assert!(text.contains("disclosed at n="), "stdout: {text}");

    // Stable mode also discloses on a noiseless set.
    let res = run(
        &["mtd", "--traces", "zn.sctr", "--step", "10", "--stable"],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 0);

    // Step beyond the trace count is a usage error.
    let res = run(&["mtd", "--traces", "zn.sctr", "--step", "201"], dir.path());
    assert_eq!(exit_code(&res), 2);
}

#[test]
fn experiment_reports_single_and_diversified() {
    let dir = tempfile::tempdir().unwrap();

    // Every key of the unprotected design is recovered within 1000 traces.
    let res = run(
        &[
            "experiment",
            "--design",
            "single",
            "--num-keys",
            "10",
            "--num-traces",
            "1000",
            "--out",
            "exp_single",
            "--seed",
            "26",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 0, "stderr: {}", stderr(&res));
    let text = stdout(&res);
    assert!(text.contains("disclosed=10/10"), "stdout: {text}");
    assert!(text.contains("mean="), "stdout: {text}");
    let table =
        std::fs::read_to_string(dir.path().join("exp_single").join("mtd_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 11);
    assert!(dir
        .path()
        .join("exp_single")
        .join("normal_fit.csv")
        .exists());

    // The diversified design stays undisclosed at 2000 traces.
    let res = run(
        &[
            "experiment",
            "--design",
            "tmr-dif",
            "--num-keys",
            "10",
            "--num-traces",
            "2000",
            "--out",
            "exp_dif",
            "--seed",
            "26",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 1, "stdout: {}", stdout(&res));
    let text = stdout(&res);
    assert!(text.contains("disclosed=0/10"), "stdout: {text}");
    assert!(text.contains("fit omitted"), "stdout: {text}");
    assert!(!dir.path().join("exp_dif").join("normal_fit.csv").exists());

    // Step larger than the trace budget is a usage error.
    let res = run(
        &[
            "experiment",
            "--design",
            "single",
            "--num-keys",
            "2",
            "--num-traces",
            "50",
            "--step",
            "51",
            "--out",
            "exp_bad",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 2);
}

fn write_vcd_fixture(path: &PathBuf, toggle_time: u32) {
    let text = format!(
        "$timescale 1ns $end\n\
         $scope module top $end\n\
         $var wire 4 ! bus $end\n\
         $upscope $end\n\
         $enddefinitions $end\n\
         #0\n$dumpvars\nb0000 !\n$end\n\
         #{toggle_time}\nb1111 !\n"
    );
    std::fs::write(path, text).unwrap();
}

#[test]
fn vcd2trace_builds_trace_files() {
    let dir = tempfile::tempdir().unwrap();
    write_vcd_fixture(&dir.path().join("a.vcd"), 2);
    write_vcd_fixture(&dir.path().join("b.vcd"), 5);
    std::fs::write(
        dir.path().join("manifest.csv"),
        "a.vcd,de0102030405060708090a0b0c0d0e0f\nb.vcd,00112233445566778899aabbccddeeff\n",
    )
    .unwrap();

    let res = run(
        &[
            "vcd2trace",
            "--manifest",
            "manifest.csv",
            "--window-ns",
            "1",
            "--t-start",
            "0",
            "--t-end",
            "8",
            "--coeff",
            "0.25",
            "--out",
            "waves.sctr",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 0, "stderr: {}", stderr(&res));
    assert!(stdout(&res).contains("wrote 2 traces x 8 samples"));

    // The resulting file is attackable (key unknown: exit 0, no rank line).
    let res = run(
        &["attack", "--traces", "waves.sctr", "--report", "w.csv"],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 0);
    assert!(!stdout(&res).contains("rank="));
}

#[test]
fn vcd2trace_error_diagnostics() {
    let dir = tempfile::tempdir().unwrap();

    // Malformed VCD: the diagnostic names the file and the offending line.
    std::fs::write(
        dir.path().join("broken.vcd"),
        "$timescale 1ns $end\n$var wire 1 ! a $end\n$enddefinitions $end\n#5\n0!\n#3\n1!\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("manifest.csv"),
        "broken.vcd,de0102030405060708090a0b0c0d0e0f\n",
    )
    .unwrap();
    let res = run(
        &[
            "vcd2trace",
            "--manifest",
            "manifest.csv",
            "--window-ns",
            "1",
            "--t-start",
            "0",
            "--t-end",
            "8",
            "--coeff",
            "1",
            "--out",
            "x.sctr",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 3);
    let err = stderr(&res);
    assert!(err.contains("broken.vcd"), "stderr: {err}");
    assert!(err.contains("line 6"), "stderr: {err}");

    // Manifest with a short plaintext is rejected with its line number.
    std::fs::write(dir.path().join("manifest.csv"), "broken.vcd,00ff\n").unwrap();
    let res = run(
        &[
            "vcd2trace",
            "--manifest",
            "manifest.csv",
            "--window-ns",
            "1",
            "--t-start",
            "0",
            "--t-end",
            "8",
            "--coeff",
            "1",
            "--out",
            "x.sctr",
        ],
        dir.path(),
    );
    assert_eq!(exit_code(&res), 3);
    assert!(stderr(&res).contains("line 1"));
}
