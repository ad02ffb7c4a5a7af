use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};

/// A fresh directory under the system temp dir, removed on drop.
struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        static COUNTER: AtomicUsize = AtomicUsize::new(0);
        let n = COUNTER.fetch_add(1, Ordering::Relaxed);
        let dir = std::env::temp_dir().join(format!("modulon-cli-{tag}-{}-{n}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        Scratch(dir)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

fn modulon(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_modulon"));
    cmd.args(args).env_remove("MODULON_OUT");
    cmd
}

fn run(args: &[&str]) -> Output {
    modulon(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn bbm_wave_speed_follows_the_expansion() {
    let s = Scratch::new("bbm");
    let out_dir = s.path("out");
    let out = run(&["--out", out_dir.to_str().unwrap(), "wave", "model=bbm", "m=2", "a=0.05"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let side = json(&out_dir.join("wave.json"));
    let c = side["c"].as_f64().unwrap();
    let predicted = 0.2 - 0.05f64.powi(2) * 5.0 / 24.0;
    assert!((c - predicted).abs() < 1e-5, "c = {c}");
    assert!(side["provenance"]["config_sha256"].as_str().unwrap().len() == 64);
    assert!(out_dir.join("wave.bin").exists());
    let modes = fs::read_to_string(out_dir.join("wave_modes.csv")).unwrap();
    assert!(modes.starts_with("# command: wave\n"));
}

#[test]
fn whitham_zero_amplitude_moves_at_the_linear_speed() {
    let s = Scratch::new("whitham");
    let out_dir = s.path("out");
    let out = run(&["--out", out_dir.to_str().unwrap(), "wave", "model=whitham", "kappa=1.3", "a=0", "b=0"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let c = json(&out_dir.join("wave.json"))["c"].as_f64().unwrap();
    assert!((c - (1.3f64.tanh() / 1.3).sqrt()).abs() < 1e-12);
}

#[test]
fn malformed_key_exits_64_and_writes_nothing() {
    let s = Scratch::new("badkey");
    let out_dir = s.path("out");
    for args in [vec!["wave", "bogus=1"], vec!["wave", "a"], vec!["wave", "wave.n=7"], vec!["spectrum", "k_max=2"]] {
        let mut full = vec!["--out", out_dir.to_str().unwrap()];
        full.extend(args.iter());
        let out = run(&full);
        assert_eq!(code(&out), 64, "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("modulon: "));
        assert!(!out_dir.exists(), "{args:?} created the output directory");
    }
}

#[test]
fn usage_errors_from_the_argument_parser() {
    assert_eq!(code(&run(&[])), 64);
    assert_eq!(code(&run(&["frobnicate"])), 64);
    assert_eq!(code(&run(&["wave", "--no-such-flag"])), 64);
    assert_eq!(code(&run(&["--jobs", "0", "wave", "--out", "/nonexistent/x"])), 64);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn config_file_is_read_and_overridden_inline() {
    let s = Scratch::new("config");
    let cfg = s.path("run.cfg");
    fs::write(&cfg, "# a BBM wave\n[model]\nname = bbm\nm = 2\n[wave] a=0.04 n=32\n").unwrap();
    let out_dir = s.path("out");
    let args = ["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "wave"];
    assert_eq!(code(&run(&args)), 0);
    let a = json(&out_dir.join("wave.json"))["amplitude"].as_f64().unwrap();
    assert_eq!(a, 0.04);

    let mut inline = args.to_vec();
    inline.push("wave.a=0.03");
    assert_eq!(code(&run(&inline)), 0);
    assert_eq!(json(&out_dir.join("wave.json"))["amplitude"].as_f64().unwrap(), 0.03);

    fs::write(&cfg, "[model]\nname = bbm\n[nowhere]\nx = 1\n").unwrap();
    assert_eq!(code(&run(&args)), 64);
    let missing = s.path("missing.cfg");
    assert_eq!(code(&run(&["--config", missing.to_str().unwrap(), "wave"])), 65);
}

#[test]
fn reruns_are_byte_identical() {
    let s = Scratch::new("determinism");
    let (a, b) = (s.path("a"), s.path("b"));
    let pairs = ["model=bbm", "m=2", "a=0.05", "n=32", "k_count=16"];
    let mut first = vec!["--jobs", "1", "--out", a.to_str().unwrap(), "spectrum"];
    first.extend(pairs);
    let mut second = vec!["--out", b.to_str().unwrap(), "spectrum"];
    second.extend(pairs);
    assert_eq!(code(&run(&first)), 0);
    assert_eq!(code(&run(&second)), 0);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?} differs");
    }
}

#[test]
fn environment_sets_the_output_directory() {
    let s = Scratch::new("env");
    let dir = s.path("from-env");
    let out = modulon(&["wave", "model=bbm", "m=2", "n=16"]).env("MODULON_OUT", &dir).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.join("wave.json").exists());
    // The flag wins over the environment.
    let flag = s.path("from-flag");
    let out = modulon(&["--out", flag.to_str().unwrap(), "wave", "model=bbm", "m=2", "n=16"])
        .env("MODULON_OUT", s.path("unused"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(flag.join("wave.json").exists() && !s.path("unused").exists());
}

#[test]
fn saved_wave_feeds_later_commands() {
    let s = Scratch::new("reload");
    let out_dir = s.path("out");
    let o = out_dir.to_str().unwrap();
    assert_eq!(code(&run(&["--out", o, "wave", "model=bbm", "m=2", "n=32"])), 0);
    let bin = out_dir.join("wave.bin");
    let spec_dir = s.path("spec");
    let out = run(&[
        "--out",
        spec_dir.to_str().unwrap(),
        "spectrum",
        "--wave",
        bin.to_str().unwrap(),
        "model=bbm",
        "m=2",
        "n=32",
        "k_count=16",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let spec = json(&spec_dir.join("spectrum.json"));
    assert!(spec["lambda0"].as_f64().unwrap() > 0.0);
    let inputs = spec["provenance"]["inputs"].as_array().unwrap();
    assert!(!inputs.is_empty());

    // Model mismatch and a corrupt snapshot are data errors.
    let mismatch =
        run(&["--out", spec_dir.to_str().unwrap(), "spectrum", "--wave", bin.to_str().unwrap(), "model=whitham"]);
    assert_eq!(code(&mismatch), 65);
    let junk = s.path("junk.bin");
    fs::write(&junk, b"not a snapshot").unwrap();
    let corrupt =
        run(&["--out", spec_dir.to_str().unwrap(), "spectrum", "--wave", junk.to_str().unwrap(), "model=bbm", "m=2"]);
    assert_eq!(code(&corrupt), 65);
}

#[test]
fn report_needs_well_formed_inputs() {
    let s = Scratch::new("report");
    let empty = s.path("empty");
    fs::create_dir_all(&empty).unwrap();
    assert_eq!(code(&run(&["--out", empty.to_str().unwrap(), "report"])), 65);

    let out_dir = s.path("out");
    let o = out_dir.to_str().unwrap();
    assert_eq!(code(&run(&["--out", o, "wave", "model=bbm", "m=2", "n=16"])), 0);
    assert_eq!(code(&run(&["--out", o, "spectrum", "model=bbm", "m=2", "n=16", "k_count=16"])), 0);
    assert_eq!(code(&run(&["--out", o, "report"])), 0);
    let text = fs::read_to_string(out_dir.join("report.md")).unwrap();
    assert!(text.starts_with('#'));

    fs::write(out_dir.join("spectrum.json"), "{ broken").unwrap();
    assert_eq!(code(&run(&["--out", o, "report"])), 65);
}

#[test]
fn stable_wave_is_a_numeric_failure_for_experiments() {
    let s = Scratch::new("stable");
    let out_dir = s.path("out");
    let out =
        run(&["--out", out_dir.to_str().unwrap(), "experiment", "model=whitham", "kappa=0.8", "n=32", "k_count=16"]);
    assert_eq!(code(&out), 2);
    assert!(!out_dir.exists());
}
