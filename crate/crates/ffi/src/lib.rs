//! C ABI over the crowdnote library.
//!
//! Datasets and scoring results cross the boundary as opaque handles that
//! the caller frees with the matching `*_free` function. Every fallible call
//! returns a `CnStatus`; on failure, `cn_last_error` holds a message for the
//! calling thread until its next failing call. Strings returned through out
//! parameters are owned by the caller and released with `cn_string_free`.
//! Panics never unwind into C; they surface as `CN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use crowdnote::data::{load_dataset, load_status_history, Dataset, NoteId, NoteStatus};
use crowdnote::report::{run, RunConfig};
use crowdnote::scoring::{fit_bridging, Normalization, ScoringConfig, ScoringResult};
use crowdnote::simulator::{simulate, SimConfig};
use crowdnote::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    /// Malformed input table: missing column, duplicate key or bad row.
    Parse = 4,
    InvalidConfig = 5,
    NoRatings = 6,
    NotFound = 7,
    /// The data cannot support the requested analysis.
    DataLimited = 8,
    Numerical = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CnNoteStatus {
    Crh = 0,
    Crnh = 1,
    NeedsMoreRatings = 2,
}

/// Opaque loaded or simulated dataset.
pub struct CnDataset(Dataset);

/// Opaque result of a bridging fit.
pub struct CnScores(ScoringResult);

/// Scorer settings. Obtain defaults from `cn_scoring_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnScoringConfig {
    pub factor_dim: usize,
    pub lambda_intercept: f64,
    pub lambda_factor: f64,
    pub crh_threshold: f64,
    pub crnh_threshold: f64,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub seed: u64,
    /// Mean-squared normalization of loss and penalties when true, sums
    /// when false.
    pub per_rating_normalization: bool,
    /// Factor initializations tried; the lowest objective is kept.
    pub n_inits: usize,
}

impl From<&ScoringConfig> for CnScoringConfig {
    fn from(c: &ScoringConfig) -> Self {
        CnScoringConfig {
            factor_dim: c.factor_dim,
            lambda_intercept: c.lambda_intercept,
            lambda_factor: c.lambda_factor,
            crh_threshold: c.crh_threshold,
            crnh_threshold: c.crnh_threshold,
            max_iterations: c.max_iterations,
            convergence_tol: c.convergence_tol,
            seed: c.seed,
            per_rating_normalization: c.normalization == Normalization::PerRating,
            n_inits: c.n_inits,
        }
    }
}

impl From<&CnScoringConfig> for ScoringConfig {
    fn from(c: &CnScoringConfig) -> Self {
        ScoringConfig {
            factor_dim: c.factor_dim,
            lambda_intercept: c.lambda_intercept,
            lambda_factor: c.lambda_factor,
            crh_threshold: c.crh_threshold,
            crnh_threshold: c.crnh_threshold,
            max_iterations: c.max_iterations,
            convergence_tol: c.convergence_tol,
            seed: c.seed,
            normalization: if c.per_rating_normalization {
                Normalization::PerRating
            } else {
                Normalization::Sum
            },
            n_inits: c.n_inits,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Fail = (CnStatus, String);

fn core_status(e: &Error) -> CnStatus {
    match e {
        Error::Io { .. } => CnStatus::Io,
        Error::MissingColumn { .. } | Error::DuplicateKey { .. } | Error::MalformedRow { .. } => CnStatus::Parse,
        Error::NoRatings => CnStatus::NoRatings,
        Error::InvalidConfig(_) | Error::InvalidSpec(_) | Error::Serialize(_) => CnStatus::InvalidConfig,
        Error::RankDeficientDesign { .. }
        | Error::SubsetTooSmall { .. }
        | Error::UnlabeledTweet(_)
        | Error::NoPairs
        | Error::AllTies(_)
        | Error::EmptySample
        | Error::DegenerateSample(_) => CnStatus::DataLimited,
        Error::NonConvergence(_) | Error::Numerical(_) => CnStatus::Numerical,
    }
}

fn core(e: Error) -> Fail {
    (core_status(&e), e.to_string())
}

/// Runs `f`, records any failure for `cn_last_error` and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CnStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return CnStatus::Ok,
        Ok(Err(fail)) => fail,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            (CnStatus::Panic, format!("panic: {msg}"))
        }
    };
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
    status
}

fn null(what: &str) -> Fail {
    (CnStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CnStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn owned_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (CnStatus::InvalidUtf8, "string contains NUL".into()))
}

/// Message of the calling thread's most recent failure, or null. The
/// pointer stays valid until the thread's next failing call.
#[no_mangle]
pub extern "C" fn cn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` is null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads notes, ratings and rater profiles from TSV files. `status_history`
/// may be null.
///
/// # Safety
/// Path arguments are null or NUL-terminated strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cn_dataset_load(
    notes: *const c_char,
    ratings: *const c_char,
    raters: *const c_char,
    status_history: *const c_char,
    out: *mut *mut CnDataset,
) -> CnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let n = PathBuf::from(str_arg(notes, "notes")?);
        let r = PathBuf::from(str_arg(ratings, "ratings")?);
        let p = PathBuf::from(str_arg(raters, "raters")?);
        let (mut d, _) = load_dataset(&n, &r, &p).map_err(core)?;
        if !status_history.is_null() {
            let h = PathBuf::from(str_arg(status_history, "status_history")?);
            load_status_history(&mut d, &h).map_err(core)?;
        }
        *out = Box::into_raw(Box::new(CnDataset(d)));
        Ok(())
    })
}

/// Simulates a corpus with the default simulator settings, `seed` and
/// `n_tweets` posts.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cn_dataset_simulate(seed: u64, n_tweets: usize, out: *mut *mut CnDataset) -> CnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = SimConfig {
            seed,
            n_tweets,
            ..SimConfig::default()
        };
        let (d, _) = simulate(&cfg).map_err(core)?;
        *out = Box::into_raw(Box::new(CnDataset(d)));
        Ok(())
    })
}

/// # Safety
/// `d` is null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cn_dataset_free(d: *mut CnDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Zero for a null handle.
///
/// # Safety
/// `d` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cn_dataset_note_count(d: *const CnDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.notes.len())
}

/// Zero for a null handle.
///
/// # Safety
/// `d` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cn_dataset_rating_count(d: *const CnDataset) -> usize {
    d.as_ref().map_or(0, |d| d.0.ratings.len())
}

#[no_mangle]
pub extern "C" fn cn_scoring_config_default() -> CnScoringConfig {
    CnScoringConfig::from(&ScoringConfig::default())
}

/// Fits the bridging model. A null `cfg` uses the defaults. A fit that hits
/// the iteration cap still succeeds; check `cn_scores_converged`.
///
/// # Safety
/// `d` is a live dataset handle; `cfg` is null or readable; `out` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cn_score(
    d: *const CnDataset,
    cfg: *const CnScoringConfig,
    out: *mut *mut CnScores,
) -> CnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let d = ref_arg(d, "dataset")?;
        let cfg = cfg.as_ref().map_or_else(ScoringConfig::default, ScoringConfig::from);
        let s = fit_bridging(&d.0, &cfg).map_err(core)?;
        *out = Box::into_raw(Box::new(CnScores(s)));
        Ok(())
    })
}

/// # Safety
/// `s` is null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cn_scores_free(s: *mut CnScores) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// False for a null handle.
///
/// # Safety
/// `s` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cn_scores_converged(s: *const CnScores) -> bool {
    s.as_ref().is_some_and(|s| s.0.converged)
}

/// Helpfulness score and status of one note. `CN_STATUS_NOT_FOUND` when the
/// note has no ratings in the fit.
///
/// # Safety
/// `s` is a live handle; `note_id` is a NUL-terminated string; the out
/// pointers are writable.
#[no_mangle]
pub unsafe extern "C" fn cn_scores_note(
    s: *const CnScores,
    note_id: *const c_char,
    score: *mut f64,
    status: *mut CnNoteStatus,
) -> CnStatus {
    guard(|| {
        let s = ref_arg(s, "scores")?;
        let id = NoteId(str_arg(note_id, "note_id")?.to_string());
        let (score, status) = (out_arg(score, "score")?, out_arg(status, "status")?);
        match (s.0.score(&id), s.0.status(&id)) {
            (Some(x), Some(st)) => {
                *score = x;
                *status = match st {
                    NoteStatus::Crh => CnNoteStatus::Crh,
                    NoteStatus::Crnh => CnNoteStatus::Crnh,
                    NoteStatus::Nmr => CnNoteStatus::NeedsMoreRatings,
                };
                Ok(())
            }
            _ => Err((CnStatus::NotFound, format!("note `{id}` is not in the fit"))),
        }
    })
}

/// All fitted parameters and statuses as JSON. Free with `cn_string_free`.
///
/// # Safety
/// `s` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn cn_scores_to_json(s: *const CnScores, out: *mut *mut c_char) -> CnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = ref_arg(s, "scores")?;
        let json = serde_json::to_string(&s.0).map_err(|e| core(e.into()))?;
        *out = owned_c_string(json)?;
        Ok(())
    })
}

/// Executes one batch run described by a JSON run config (same keys as the
/// TOML config file plus `command` and `out_dir`).
///
/// # Safety
/// `config_json` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cn_run_json(config_json: *const c_char) -> CnStatus {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| (CnStatus::InvalidConfig, format!("run config: {e}")))?;
        run(&cfg).map_err(core)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(cn_last_error()) }
            .to_string_lossy()
            .into_owned()
    }

    #[test]
    fn null_arguments_are_rejected() {
        let mut d = ptr::null_mut();
        let st = unsafe { cn_dataset_load(ptr::null(), ptr::null(), ptr::null(), ptr::null(), &mut d) };
        assert_eq!(st, CnStatus::NullArgument);
        assert!(last_error().contains("notes"));
        assert!(d.is_null());
        assert_eq!(unsafe { cn_dataset_note_count(ptr::null()) }, 0);
    }

    #[test]
    fn missing_file_reports_path() {
        let p = CString::new("/nonexistent/notes.tsv").unwrap();
        let mut d = ptr::null_mut();
        let st = unsafe { cn_dataset_load(p.as_ptr(), p.as_ptr(), p.as_ptr(), ptr::null(), &mut d) };
        assert_eq!(st, CnStatus::Io);
        assert!(last_error().contains("/nonexistent/notes.tsv"));
    }

    #[test]
    fn config_round_trips() {
        let c = cn_scoring_config_default();
        assert_eq!(ScoringConfig::from(&c), ScoringConfig::default());
    }

    #[test]
    fn score_matches_library() {
        unsafe {
            let mut d = ptr::null_mut();
            assert_eq!(cn_dataset_simulate(3, 20, &mut d), CnStatus::Ok);
            assert!(cn_dataset_rating_count(d) > 0);
            let mut s = ptr::null_mut();
            assert_eq!(cn_score(d, ptr::null(), &mut s), CnStatus::Ok);
            let direct = fit_bridging(&(*d).0, &ScoringConfig::default()).unwrap();
            assert_eq!((*s).0, direct);

            let (id, p) = direct.note_params.iter().next().unwrap();
            let cid = CString::new(id.as_str()).unwrap();
            let (mut x, mut st) = (0.0, CnNoteStatus::Crh);
            assert_eq!(cn_scores_note(s, cid.as_ptr(), &mut x, &mut st), CnStatus::Ok);
            assert_eq!(x, p.helpfulness_score);

            let missing = CString::new("no-such-note").unwrap();
            assert_eq!(cn_scores_note(s, missing.as_ptr(), &mut x, &mut st), CnStatus::NotFound);

            let mut json = ptr::null_mut();
            assert_eq!(cn_scores_to_json(s, &mut json), CnStatus::Ok);
            let back: ScoringResult = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
            assert_eq!(back.note_params.len(), direct.note_params.len());
            cn_string_free(json);
            cn_scores_free(s);
            cn_dataset_free(d);
        }
    }

    #[test]
    fn invalid_scoring_config_is_reported() {
        unsafe {
            let mut d = ptr::null_mut();
            assert_eq!(cn_dataset_simulate(1, 5, &mut d), CnStatus::Ok);
            let mut c = cn_scoring_config_default();
            c.factor_dim = 0;
            let mut s = ptr::null_mut();
            assert_eq!(cn_score(d, &c, &mut s), CnStatus::InvalidConfig);
            assert!(s.is_null());
            cn_dataset_free(d);
        }
    }
}
