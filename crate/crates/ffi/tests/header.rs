//! The checked-in header matches the exported symbols.

const HEADER: &str = include_str!("../include/crowdnote.h");

#[test]
fn header_declares_every_export() {
    for sym in [
        "cn_last_error",
        "cn_string_free",
        "cn_dataset_load",
        "cn_dataset_simulate",
        "cn_dataset_free",
        "cn_dataset_note_count",
        "cn_dataset_rating_count",
        "cn_scoring_config_default",
        "cn_score",
        "cn_scores_free",
        "cn_scores_converged",
        "cn_scores_note",
        "cn_scores_to_json",
        "cn_run_json",
    ] {
        assert!(HEADER.contains(&format!("{sym}(")), "{sym} missing from header");
    }
    for ty in [
        "typedef struct CnDataset CnDataset;",
        "typedef struct CnScores CnScores;",
        "CN_STATUS_OK = 0",
    ] {
        assert!(HEADER.contains(ty), "{ty} missing from header");
    }
}
