//! End-to-end checks of the command-line interface: argument handling, file
//! output in both formats, the self-check command, and error exits.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_doublecv"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn toy_run_writes_the_expected_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy.csv");
    let status = bin()
        .args(["toy", "--dim", "5", "--steps", "200", "--probe-every", "50"])
        .args(["--probe-reps", "10", "--estimator", "rloo", "--seed", "3"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let text = read(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,objective,grad_variance,alpha,mean_sigma_eta,wall_secs"
    );
    // Probes fire at step 1 and at every multiple of 50.
    let steps: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(steps, ["1", "50", "100", "150", "200"]);
    // Wall time is zeroed by default so equal seeds give equal bytes.
    for line in text.lines().skip(1) {
        let wall: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(wall, 0.0, "unexpected wall column in {line}");
    }
}

#[test]
fn jsonl_output_is_one_valid_object_per_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy.jsonl");
    let status = bin()
        .args(["toy", "--dim", "4", "--steps", "60", "--probe-every", "30"])
        .args(["--probe-reps", "5", "--format", "jsonl"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let text = read(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3); // steps 1, 30, 60
    for line in lines {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["step", "objective", "grad_variance", "alpha", "mean_sigma_eta", "wall_secs"] {
            assert!(value.get(key).is_some(), "missing {key} in {line}");
        }
    }
}

#[test]
fn vae_run_accepts_idx_input() {
    let dir = tempfile::tempdir().unwrap();

    // A minimal IDX image file: magic 0x00000803, 4 images of 2x2 pixels.
    let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 2];
    bytes.extend((0..16u8).map(|i| i * 16));
    let images = dir.path().join("images.idx3-ubyte");
    std::fs::write(&images, &bytes).unwrap();

    let out = dir.path().join("vae.csv");
    let status = bin()
        .args(["vae", "--latent", "2", "--hidden", "3", "--batch", "2"])
        .args(["--steps", "10", "--probe-every", "5", "--probe-reps", "3", "--k", "2"])
        .arg("--dataset")
        .arg(format!("idx:{}", images.display()))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(read(&out).lines().count(), 4); // header + steps 1, 5, 10
}

#[test]
fn self_check_passes_and_prints_one_line_per_check() {
    let output = bin().arg("check").output().unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(!lines.is_empty());
    for line in &lines {
        assert!(line.starts_with("PASS"), "unexpected check line: {line}");
    }
}

#[test]
fn bad_arguments_exit_nonzero() {
    // Unknown estimator name.
    let status = bin()
        .args(["toy", "--estimator", "nonsense", "--out", "/dev/null"])
        .status()
        .unwrap();
    assert!(!status.success());

    // Sample count below the estimator's minimum.
    let status = bin()
        .args(["toy", "--estimator", "rloo", "--k", "1", "--out", "/dev/null"])
        .status()
        .unwrap();
    assert!(!status.success());

    // Missing IDX file.
    let status = bin()
        .args(["vae", "--dataset", "idx:/no/such/file", "--out", "/dev/null"])
        .status()
        .unwrap();
    assert!(!status.success());

    // The exact-mean baseline has no closed form for the autoencoder.
    let status = bin()
        .args(["vae", "--estimator", "rstar", "--steps", "5", "--out", "/dev/null"])
        .status()
        .unwrap();
    assert!(!status.success());
}

#[test]
fn wall_clock_flag_records_elapsed_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("toy.csv");
    let status = bin()
        .args(["toy", "--dim", "4", "--steps", "100", "--probe-every", "50"])
        .args(["--probe-reps", "5", "--wall-clock"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = read(&out);
    let last = text.lines().last().unwrap();
    let wall: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!(wall > 0.0);
}
