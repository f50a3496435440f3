//! The `crowdnote` binary: exit codes, the output lock, config precedence
//! and the manifest.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn crowdnote(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_crowdnote"));
    cmd.args(args).env_remove("CROWDNOTE_CONFIG");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn crowdnote")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn missing_input_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("no-such-notes.tsv");
    let out = tmp.path().join("out");
    let o = crowdnote(
        &[
            "score",
            "--notes",
            missing.to_str().unwrap(),
            "--ratings",
            "ratings.tsv",
            "--raters",
            "raters.tsv",
            "-o",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no-such-notes.tsv"), "{}", stderr(&o));
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn held_lock_blocks_a_second_run() {
    let tmp = tempfile::tempdir().unwrap();
    let lock = tmp.path().join(".crowdnote.lock");
    fs::write(&lock, "").unwrap();
    let o = crowdnote(
        &["simulate", "--n-tweets", "5", "-o", tmp.path().to_str().unwrap()],
        &[],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains(".crowdnote.lock"), "{}", stderr(&o));
    assert!(lock.exists(), "a blocked run must not remove another run's lock");
    assert!(!tmp.path().join("manifest.json").exists());
}

#[test]
fn flags_override_file_which_overrides_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        "seed = 3\n\n[simulation]\nn_tweets = 7\nn_raters = 80\n\n[scoring]\nlambda_factor = 0.05\n",
    )
    .unwrap();

    let flagged = tmp.path().join("flagged");
    let o = crowdnote(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--n-tweets",
            "9",
            "-o",
            flagged.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let c = &manifest(&flagged)["effective_config"];
    assert_eq!(c["simulation"]["n_tweets"], 9);
    assert_eq!(c["simulation"]["n_raters"], 80);
    assert_eq!(c["simulation"]["seed"], 3);
    assert_eq!(c["scoring"]["lambda_factor"], 0.05);
    assert_eq!(c["scoring"]["lambda_intercept"], 0.15);

    // The environment variable stands in for --config.
    let from_env = tmp.path().join("env");
    let o = crowdnote(
        &["simulate", "-o", from_env.to_str().unwrap()],
        &[("CROWDNOTE_CONFIG", &cfg)],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(manifest(&from_env)["effective_config"]["simulation"]["n_tweets"], 7);
}

#[test]
fn manifest_checksums_match_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = crowdnote(
        &[
            "simulate",
            "--n-tweets",
            "6",
            "--n-raters",
            "60",
            "-o",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!tmp.path().join(".crowdnote.lock").exists());
    let m = manifest(tmp.path());
    let outputs = m["outputs"].as_array().unwrap();
    assert!(outputs.iter().any(|f| f["path"] == "report.json"));
    for f in outputs {
        let bytes = fs::read(tmp.path().join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"], bytes.len());
        assert_eq!(f["sha256"], hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn bad_flag_value_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = crowdnote(
        &[
            "score",
            "--normalization",
            "squared",
            "-o",
            tmp.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("squared"), "{}", stderr(&o));
}
