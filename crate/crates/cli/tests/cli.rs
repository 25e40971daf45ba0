use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tiny_conf() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.conf")
}

fn shotsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shotsum")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn params_at_default_dims() {
    let o = shotsum(&["params"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let total: usize = text
        .lines()
        .find(|l| l.starts_with("total"))
        .and_then(|l| l.split_whitespace().nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!((120_000_000..=150_000_000).contains(&total), "{text}");
    assert!(text.contains("fusion.audio") && text.contains("layer3") && text.contains("head"));
}

#[test]
fn gradcheck_on_tiny_config() {
    let dir = tempfile::tempdir().unwrap();
    let conf = tiny_conf();
    let o = shotsum(&["gradcheck", "--config", s(&conf), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("overall: PASS"));
    assert!(dir.path().join("gradcheck.txt").exists());

    let o = shotsum(&["gradcheck", "--config", s(&conf), "--set", "caption_mode=mean", "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("ZERO-GRADIENT"));
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let conf = tiny_conf();
    assert_eq!(code(&shotsum(&["params", "--bogus"])), 2);
    assert_eq!(code(&shotsum(&["frobnicate"])), 2);
    assert_eq!(code(&shotsum(&["train", "--config", s(&conf)])), 2);
    assert_eq!(code(&shotsum(&["params", "--set", "no_such_key=1"])), 3);
    assert_eq!(code(&shotsum(&["params", "--set", "pad_ratio=1.5"])), 3);
    let missing = dir.path().join("missing.h5");
    assert_eq!(code(&shotsum(&["train", "--config", s(&conf), "--data", s(&missing)])), 4);
    assert_eq!(code(&shotsum(&["params", "--config", s(&missing)])), 4);
    let junk = dir.path().join("junk.h5");
    std::fs::write(&junk, b"not hdf5").unwrap();
    let o = shotsum(&["train", "--config", s(&conf), "--data", s(&junk), "--out", s(dir.path())]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn trace_marks_sources_and_influence() {
    let dir = tempfile::tempdir().unwrap();
    let conf = tiny_conf();
    let o = shotsum(&["trace", "--config", s(&conf), "--sources", "0,5", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    let json: String = std::fs::read_to_string(dir.path().join("trace.json")).unwrap();
    assert!(json.contains("influenced_frames"));
    assert!(stdout(&o).contains('S'));
}

fn run_pipeline(root: &Path) {
    let conf = tiny_conf();
    let c = s(&conf);
    let synth = root.join("synth");
    assert_eq!(code(&shotsum(&["synth", "--config", c, "--out", s(&synth)])), 0);
    let data = synth.join("synthetic.h5");
    let train = root.join("train");
    let o = shotsum(&["train", "--config", c, "--data", s(&data), "--set", "epochs=3", "--out", s(&train)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = train.join("model.ckpt");
    let summ = root.join("summ");
    let o = shotsum(&["summarize", "--config", c, "--data", s(&data), "--checkpoint", s(&ckpt), "--out", s(&summ)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ev = root.join("eval");
    let o = shotsum(&["eval", "--config", c, "--data", s(&data), "--set", "epochs=2", "--workers", "2", "--out", s(&ev)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("published reference"));
}

#[test]
fn pipeline_outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(a.path());
    run_pipeline(b.path());
    for rel in [
        "synth/synthetic.h5",
        "train/model.ckpt",
        "train/history.csv",
        "train/config.txt",
        "summ/summaries.csv",
        "summ/summaries/video_1.json",
        "eval/eval.csv",
        "eval/splits.txt",
        "eval/report.txt",
    ] {
        let x = std::fs::read(a.path().join(rel)).unwrap();
        let y = std::fs::read(b.path().join(rel)).unwrap();
        assert!(x == y, "{rel} differs between identical runs");
    }
    let history = std::fs::read_to_string(a.path().join("train/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);
}
