//! Drives the exported functions the way a C caller would: files on disk,
//! handles, status codes and the thread-local error message.

use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use crowdnote::data::NoteStatus;
use crowdnote::scoring::{fit_bridging, ScoringConfig};
use crowdnote::simulator::{simulate, SimConfig};
use crowdnote_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn cpath(p: &Path) -> CString {
    c(p.to_str().unwrap())
}

fn last_error() -> String {
    let p = cn_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn load_score_and_query_from_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, _) = simulate(&SimConfig {
        seed: 11,
        n_tweets: 15,
        ..SimConfig::default()
    })
    .unwrap();
    let paths = d.write_tsv(tmp.path()).unwrap();

    unsafe {
        let mut h = ptr::null_mut();
        let st = cn_dataset_load(
            cpath(&paths.notes).as_ptr(),
            cpath(&paths.ratings).as_ptr(),
            cpath(&paths.raters).as_ptr(),
            ptr::null(),
            &mut h,
        );
        assert_eq!(st, CnStatus::Ok);
        assert_eq!(cn_dataset_note_count(h), d.notes.len());
        assert_eq!(cn_dataset_rating_count(h), d.ratings.len());

        let mut cfg = cn_scoring_config_default();
        cfg.n_inits = 1;
        cfg.lambda_intercept = 0.2;
        let mut s = ptr::null_mut();
        assert_eq!(cn_score(h, &cfg, &mut s), CnStatus::Ok);
        assert!(cn_scores_converged(s));

        let direct = fit_bridging(
            &d,
            &ScoringConfig {
                n_inits: 1,
                lambda_intercept: 0.2,
                ..ScoringConfig::default()
            },
        )
        .unwrap();
        for (id, p) in &direct.note_params {
            let (mut score, mut status) = (f64::NAN, CnNoteStatus::NeedsMoreRatings);
            assert_eq!(
                cn_scores_note(s, c(id.as_str()).as_ptr(), &mut score, &mut status),
                CnStatus::Ok
            );
            assert!((score - p.helpfulness_score).abs() < 1e-12, "{id}");
            let expected = match direct.status(id) {
                Some(NoteStatus::Crh) => CnNoteStatus::Crh,
                Some(NoteStatus::Crnh) => CnNoteStatus::Crnh,
                _ => CnNoteStatus::NeedsMoreRatings,
            };
            assert_eq!(status, expected, "{id}");
        }
        cn_scores_free(s);
        cn_dataset_free(h);
    }
}

#[test]
fn malformed_table_is_a_parse_error() {
    let tmp = tempfile::tempdir().unwrap();
    let notes = tmp.path().join("notes.tsv");
    std::fs::write(&notes, "noteId\tsomething\nn1\tx\n").unwrap();
    let mut h = ptr::null_mut();
    let st = unsafe {
        cn_dataset_load(
            cpath(&notes).as_ptr(),
            cpath(&notes).as_ptr(),
            cpath(&notes).as_ptr(),
            ptr::null(),
            &mut h,
        )
    };
    assert_eq!(st, CnStatus::Parse);
    assert!(h.is_null());
    assert!(last_error().contains("notes.tsv"), "{}", last_error());
}

#[test]
fn invalid_scoring_config_is_reported() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(cn_dataset_simulate(1, 5, &mut h), CnStatus::Ok);
        let mut cfg = cn_scoring_config_default();
        cfg.factor_dim = 0;
        let mut s = ptr::null_mut();
        assert_eq!(cn_score(h, &cfg, &mut s), CnStatus::InvalidConfig);
        assert!(s.is_null());
        assert!(last_error().contains("factor_dim"));
        cn_dataset_free(h);
    }
}

#[test]
fn run_json_writes_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "command": "simulate",
        "out_dir": tmp.path(),
        "simulation": { "n_tweets": 6, "n_raters": 60 },
    });
    let st = unsafe { cn_run_json(c(&cfg.to_string()).as_ptr()) };
    assert_eq!(st, CnStatus::Ok);
    assert!(tmp.path().join("manifest.json").exists());
    assert!(tmp.path().join("report.json").exists());

    let st = unsafe { cn_run_json(c("{\"command\": \"no-such-command\"}").as_ptr()) };
    assert_eq!(st, CnStatus::InvalidConfig);
    assert!(last_error().contains("no-such-command"), "{}", last_error());
}

#[test]
fn errors_are_per_thread() {
    let st = unsafe { cn_score(ptr::null(), ptr::null(), ptr::null_mut()) };
    assert_eq!(st, CnStatus::NullArgument);
    let here = last_error();
    let other = std::thread::spawn(|| cn_last_error().is_null()).join().unwrap();
    assert!(other, "another thread must not see this thread's error");
    assert_eq!(last_error(), here);
}
