#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

/// Run the CLI in-process and return its exit status.
pub fn xb<S: AsRef<str>>(args: &[S]) -> i32 {
    let mut argv = vec!["xbiscope".to_string()];
    argv.extend(args.iter().map(|a| a.as_ref().to_string()));
    xbiscope_cli::run_with_args(argv)
}

pub fn fixtures_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/fixtures.toml")
}

pub fn p(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

/// Generate the 12-site corpus and capture it offline with the shipped
/// fixture config.
pub fn gen_and_capture(root: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let tree = root.join("tree");
    let run = root.join("run");
    assert_eq!(
        xb(&["fixtures", "gen", "--out", &p(&tree), "--seed", &seed.to_string()]),
        0
    );
    let cfg = p(&fixtures_config());
    let code = xb(&[
        "--config",
        &cfg,
        "capture",
        "--session",
        "offline",
        "--corpus",
        &p(&tree),
        "--out",
        &p(&run),
    ]);
    assert_eq!(code, 0, "capture");
    (tree, run)
}

pub fn mockmap(tree: &Path, run: &Path, adversarial: bool) {
    let mut args = vec![
        "fixtures".to_string(),
        "mockmap".into(),
        "--tree".into(),
        p(tree),
        "--run".into(),
        p(run),
    ];
    if adversarial {
        args.push("--adversarial".into());
    }
    assert_eq!(xb(&args), 0, "mockmap");
}

/// `analyze` with the shipped config plus extra flags.
pub fn analyze(run: &Path, extra: &[&str]) -> i32 {
    let cfg = p(&fixtures_config());
    let mut args = vec!["--config", cfg.as_str(), "analyze", ""];
    let run_s = p(run);
    args[3] = &run_s;
    args.extend_from_slice(extra);
    xb(&args)
}

pub fn evaluate(run: &Path, tree: &Path) -> Value {
    let out = run.join("eval.json");
    assert_eq!(
        xb(&[
            "evaluate",
            "--report",
            &p(run),
            "--truth",
            &p(&tree.join("truth.csv")),
            "--out",
            &p(&out)
        ]),
        0
    );
    read_json(&out)
}
