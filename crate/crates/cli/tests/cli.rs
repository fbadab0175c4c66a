use std::fs;
use std::path::Path;
use std::process::Command;

fn gmed() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gmed"));
    c.env_remove("GMED_DATA_DIR");
    c
}

fn idx_images(n: usize, seed: u32) -> Vec<u8> {
    let mut v = Vec::new();
    for word in [0x0803u32, n as u32, 28, 28] {
        v.extend(word.to_be_bytes());
    }
    // cheap deterministic noise, brighter in a band that depends on the class
    let mut s = seed;
    for i in 0..n {
        let class = i % 10;
        for p in 0..784 {
            s = s.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
            let band = (p / 28) / 3 == class;
            v.push(if band { 200 } else { (s >> 27) as u8 });
        }
    }
    v
}

fn idx_labels(n: usize) -> Vec<u8> {
    let mut v = Vec::new();
    for word in [0x0801u32, n as u32] {
        v.extend(word.to_be_bytes());
    }
    v.extend((0..n).map(|i| (i % 10) as u8));
    v
}

fn write_mnist(dir: &Path) {
    fs::write(dir.join("train-images-idx3-ubyte"), idx_images(1000, 1)).unwrap();
    fs::write(dir.join("train-labels-idx1-ubyte"), idx_labels(1000)).unwrap();
    fs::write(dir.join("t10k-images-idx3-ubyte"), idx_images(200, 2)).unwrap();
    fs::write(dir.join("t10k-labels-idx1-ubyte"), idx_labels(200)).unwrap();
}

#[test]
fn missing_data_dir_is_reported() {
    let out = gmed().args(["--variant", "er", "--seeds", "1"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset path"));
}

#[test]
fn malformed_set_is_rejected() {
    let out = gmed().args(["--set", "alpha"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("KEY=VALUE"));
}

#[test]
fn unknown_variant_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_mnist(dir.path());
    let out = gmed()
        .arg("--data-dir")
        .arg(dir.path())
        .args(["--variant", "nope"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn runs_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_mnist(dir.path());
    let out_dir = dir.path().join("out");
    let out = gmed()
        .env("GMED_DATA_DIR", dir.path())
        .args(["--variant", "er,er_gmed", "--seeds", "2", "--cosine-trace"])
        .args(["--set", "examples_per_task=60", "--set", "hidden=32"])
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("er_gmed"));

    let runs = fs::read_to_string(out_dir.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 4);
    let summary = fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"er_gmed\""));
    assert!(out_dir.join("cosine.csv").is_file());
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    write_mnist(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nvariant = finetune\nexamples_per_task = 40\nhidden = 16\nseeds = 1\n").unwrap();
    let out_dir = dir.path().join("o");
    let out = gmed()
        .arg("--config")
        .arg(&cfg)
        .arg("--data-dir")
        .arg(dir.path())
        .args(["--mem-size", "50,100", "--variant", "er"])
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let runs = fs::read_to_string(out_dir.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 2);
    assert!(runs.lines().skip(1).all(|l| l.contains(",er,")));
}
