//! Domain records, tab-separated ingest, and dataset filters.
//!
//! Input files follow the column names of the public Community Notes data
//! release (`noteId`, `tweetId`, `raterParticipantId`, `helpfulnessLevel`,
//! `createdAtMillis`, `coreRaterFactor1`, `coreRaterIntercept`), so exports
//! load unchanged. Extra columns are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

string_id!(
    /// Identifier of a fact-checking note.
    NoteId
);
string_id!(
    /// Identifier of the post a note is attached to.
    TweetId
);
string_id!(
    /// Identifier of a rater (`raterParticipantId`).
    RaterId
);

/// Milliseconds since the Unix epoch.
pub type Millis = i64;

pub const MILLIS_PER_HOUR: f64 = 3_600_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub note_id: NoteId,
    pub tweet_id: TweetId,
    /// Written by the LLM writer (the `AI` regressor).
    pub is_ai: bool,
    pub created_at: Millis,
    pub text: String,
    pub is_media_note: bool,
    /// `noteAuthorParticipantId`, when the export carries it.
    pub writer_id: Option<String>,
}

/// A rater's answer, coded 1.0 / 0.5 / 0.0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HelpfulnessLevel {
    NotHelpful,
    SomewhatHelpful,
    Helpful,
}

impl HelpfulnessLevel {
    pub fn value(self) -> f64 {
        match self {
            HelpfulnessLevel::NotHelpful => 0.0,
            HelpfulnessLevel::SomewhatHelpful => 0.5,
            HelpfulnessLevel::Helpful => 1.0,
        }
    }

    pub fn from_value(v: f64) -> Option<Self> {
        if v == 1.0 {
            Some(HelpfulnessLevel::Helpful)
        } else if v == 0.5 {
            Some(HelpfulnessLevel::SomewhatHelpful)
        } else if v == 0.0 {
            Some(HelpfulnessLevel::NotHelpful)
        } else {
            None
        }
    }

    pub fn as_export_str(self) -> &'static str {
        match self {
            HelpfulnessLevel::NotHelpful => "NOT_HELPFUL",
            HelpfulnessLevel::SomewhatHelpful => "SOMEWHAT_HELPFUL",
            HelpfulnessLevel::Helpful => "HELPFUL",
        }
    }
}

impl FromStr for HelpfulnessLevel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "HELPFUL" => Ok(HelpfulnessLevel::Helpful),
            "SOMEWHAT_HELPFUL" => Ok(HelpfulnessLevel::SomewhatHelpful),
            "NOT_HELPFUL" => Ok(HelpfulnessLevel::NotHelpful),
            other => other
                .parse::<f64>()
                .ok()
                .and_then(HelpfulnessLevel::from_value)
                .ok_or_else(|| format!("helpfulnessLevel `{other}` is not one of HELPFUL, SOMEWHAT_HELPFUL, NOT_HELPFUL, 1.0, 0.5, 0.0")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub rater_id: RaterId,
    pub note_id: NoteId,
    pub value: HelpfulnessLevel,
    pub created_at: Millis,
}

impl Rating {
    pub fn score(&self) -> f64 {
        self.value.value()
    }
}

/// Platform-provided rater position and leniency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterProfile {
    pub rater_id: RaterId,
    /// `coreRaterFactor1`; negative is left-leaning.
    pub factor: f64,
    /// `coreRaterIntercept`; baseline leniency.
    pub intercept: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IdeologyBucket {
    Left,
    Neutral,
    Right,
}

impl IdeologyBucket {
    pub const ALL: [IdeologyBucket; 3] = [IdeologyBucket::Left, IdeologyBucket::Neutral, IdeologyBucket::Right];

    pub fn name(self) -> &'static str {
        match self {
            IdeologyBucket::Left => "left",
            IdeologyBucket::Neutral => "neutral",
            IdeologyBucket::Right => "right",
        }
    }
}

/// Cut points for [`bucket_rater`]. The neutral band is closed on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BucketConfig {
    pub left_cut: f64,
    pub right_cut: f64,
}

impl Default for BucketConfig {
    fn default() -> Self {
        BucketConfig {
            left_cut: -0.15,
            right_cut: 0.15,
        }
    }
}

impl BucketConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.left_cut.is_finite() && self.right_cut.is_finite()) || self.left_cut > self.right_cut {
            return Err(Error::InvalidConfig(format!(
                "bucket cuts must be finite with left_cut <= right_cut (got {}, {})",
                self.left_cut, self.right_cut
            )));
        }
        Ok(())
    }

    pub fn bucket(&self, factor: f64) -> IdeologyBucket {
        if factor < self.left_cut {
            IdeologyBucket::Left
        } else if factor > self.right_cut {
            IdeologyBucket::Right
        } else {
            IdeologyBucket::Neutral
        }
    }
}

pub fn bucket_rater(profile: &RaterProfile, cfg: &BucketConfig) -> IdeologyBucket {
    cfg.bucket(profile.factor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NoteStatus {
    /// Currently Rated Helpful.
    #[serde(rename = "CRH")]
    Crh,
    /// Currently Rated Not Helpful.
    #[serde(rename = "CRNH")]
    Crnh,
    /// Needs More Ratings.
    #[serde(rename = "NMR")]
    Nmr,
}

impl NoteStatus {
    pub fn code(self) -> &'static str {
        match self {
            NoteStatus::Crh => "CRH",
            NoteStatus::Crnh => "CRNH",
            NoteStatus::Nmr => "NMR",
        }
    }
}

impl FromStr for NoteStatus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "CRH" | "CURRENTLY_RATED_HELPFUL" => Ok(NoteStatus::Crh),
            "CRNH" | "CURRENTLY_RATED_NOT_HELPFUL" => Ok(NoteStatus::Crnh),
            "NMR" | "NEEDS_MORE_RATINGS" => Ok(NoteStatus::Nmr),
            other => Err(format!("unknown note status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteStatusRecord {
    pub note_id: NoteId,
    pub status: NoteStatus,
    /// Set only for notes that reached CRH at some point.
    pub first_crh_at: Option<Millis>,
}

/// Closed list of post topics used for subgroup analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Topic {
    PoliticsElections,
    Geopolitics,
    HealthMedicine,
    SocialCultural,
    EconomyFinance,
    ScienceTechnology,
    ConspiracyPseudoscience,
    CelebrityEntertainment,
    Sports,
    AiGeneratedContent,
    Other,
}

impl Topic {
    pub const ALL: [Topic; 11] = [
        Topic::PoliticsElections,
        Topic::Geopolitics,
        Topic::HealthMedicine,
        Topic::SocialCultural,
        Topic::EconomyFinance,
        Topic::ScienceTechnology,
        Topic::ConspiracyPseudoscience,
        Topic::CelebrityEntertainment,
        Topic::Sports,
        Topic::AiGeneratedContent,
        Topic::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topic::PoliticsElections => "Politics & Elections",
            Topic::Geopolitics => "Geopolitics & International Conflicts",
            Topic::HealthMedicine => "Health & Medicine",
            Topic::SocialCultural => "Social/Cultural Issues",
            Topic::EconomyFinance => "Economy & Finance",
            Topic::ScienceTechnology => "Science & Technology",
            Topic::ConspiracyPseudoscience => "Conspiracy & Pseudoscience",
            Topic::CelebrityEntertainment => "Celebrity / Entertainment / Viral",
            Topic::Sports => "Sports",
            Topic::AiGeneratedContent => "AI generated content",
            Topic::Other => "Other / Miscellaneous",
        }
    }
}

impl FromStr for Topic {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        Topic::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("`{s}` is not a known topic category"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    TextOnly,
    Image,
    Video,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::TextOnly, Modality::Image, Modality::Video];

    pub fn name(self) -> &'static str {
        match self {
            Modality::TextOnly => "text-only",
            Modality::Image => "image",
            Modality::Video => "video",
        }
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "text-only" | "textonly" | "text" => Ok(Modality::TextOnly),
            "image" => Ok(Modality::Image),
            "video" => Ok(Modality::Video),
            other => Err(format!("`{other}` is not one of text-only, image, video")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicLabel {
    pub tweet_id: TweetId,
    pub topic: Topic,
    pub modality: Modality,
}

/// Notes, ratings and rater profiles for one analysis.
///
/// Ratings are kept in canonical `(note_id, rater_id)` order so that equal
/// datasets compare equal regardless of file row order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub notes: BTreeMap<NoteId, Note>,
    pub ratings: Vec<Rating>,
    pub raters: BTreeMap<RaterId, RaterProfile>,
    pub status_history: BTreeMap<NoteId, NoteStatusRecord>,
}

/// Row accounting from [`load_dataset`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub note_rows: usize,
    pub rating_rows: usize,
    pub rater_rows: usize,
    /// Ratings whose note is absent from the notes file; dropped.
    pub orphan_ratings: usize,
    /// Rater rows with an empty or non-finite factor or intercept; dropped.
    pub invalid_profiles: usize,
    pub status_rows: usize,
}

/// Counts removed by [`apply_analysis_filters`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub media_notes_removed: usize,
    pub ratings_on_removed_notes: usize,
    pub ratings_without_profile: usize,
    pub notes_after: usize,
    pub ratings_after: usize,
    pub raters_after: usize,
}

impl Dataset {
    /// Builds a dataset from loose collections, enforcing key uniqueness.
    pub fn from_parts(notes: Vec<Note>, ratings: Vec<Rating>, raters: Vec<RaterProfile>) -> Result<Dataset> {
        let mut d = Dataset::default();
        for n in notes {
            if d.notes.contains_key(&n.note_id) {
                return Err(dup("<memory>", 0, n.note_id.as_str()));
            }
            d.notes.insert(n.note_id.clone(), n);
        }
        for p in raters {
            if !(p.factor.is_finite() && p.intercept.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "rater {} has a non-finite profile",
                    p.rater_id
                )));
            }
            if d.raters.contains_key(&p.rater_id) {
                return Err(dup("<memory>", 0, p.rater_id.as_str()));
            }
            d.raters.insert(p.rater_id.clone(), p);
        }
        d.ratings = ratings;
        d.canonicalize_ratings()?;
        Ok(d)
    }

    fn canonicalize_ratings(&mut self) -> Result<()> {
        self.ratings
            .sort_by(|a, b| (&a.note_id, &a.rater_id).cmp(&(&b.note_id, &b.rater_id)));
        for w in self.ratings.windows(2) {
            if w[0].note_id == w[1].note_id && w[0].rater_id == w[1].rater_id {
                return Err(dup("<memory>", 0, &format!("{}/{}", w[0].rater_id, w[0].note_id)));
            }
        }
        Ok(())
    }

    /// Distinct raters with at least one rating.
    pub fn active_raters(&self) -> BTreeSet<&RaterId> {
        self.ratings.iter().map(|r| &r.rater_id).collect()
    }

    pub fn ratings_by_note(&self) -> BTreeMap<&NoteId, Vec<&Rating>> {
        let mut m: BTreeMap<&NoteId, Vec<&Rating>> = BTreeMap::new();
        for r in &self.ratings {
            m.entry(&r.note_id).or_default().push(r);
        }
        m
    }

    pub fn rating_counts(&self) -> BTreeMap<&NoteId, usize> {
        let mut m: BTreeMap<&NoteId, usize> = self.notes.keys().map(|k| (k, 0)).collect();
        for r in &self.ratings {
            if let Some(c) = m.get_mut(&r.note_id) {
                *c += 1;
            }
        }
        m
    }

    pub fn notes_by_tweet(&self) -> BTreeMap<&TweetId, Vec<&Note>> {
        let mut m: BTreeMap<&TweetId, Vec<&Note>> = BTreeMap::new();
        for n in self.notes.values() {
            m.entry(&n.tweet_id).or_default().push(n);
        }
        m
    }

    /// Keeps only the given notes and the ratings that reference them.
    pub fn restrict_to_notes(&self, keep: &BTreeSet<NoteId>) -> Dataset {
        Dataset {
            notes: self
                .notes
                .iter()
                .filter(|(k, _)| keep.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            ratings: self
                .ratings
                .iter()
                .filter(|r| keep.contains(&r.note_id))
                .cloned()
                .collect(),
            raters: self.raters.clone(),
            status_history: self
                .status_history
                .iter()
                .filter(|(k, _)| keep.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Same notes and profiles with a replacement rating set.
    pub fn with_ratings(&self, mut ratings: Vec<Rating>) -> Dataset {
        ratings.sort_by(|a, b| (&a.note_id, &a.rater_id).cmp(&(&b.note_id, &b.rater_id)));
        Dataset {
            notes: self.notes.clone(),
            ratings,
            raters: self.raters.clone(),
            status_history: self.status_history.clone(),
        }
    }

    /// Writes `notes.tsv`, `ratings.tsv`, `raters.tsv` (and
    /// `status_history.tsv` when present) into `dir`.
    pub fn write_tsv(&self, dir: &Path) -> Result<DatasetPaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = DatasetPaths {
            notes: dir.join("notes.tsv"),
            ratings: dir.join("ratings.tsv"),
            raters: dir.join("raters.tsv"),
            status_history: if self.status_history.is_empty() {
                None
            } else {
                Some(dir.join("status_history.tsv"))
            },
        };

        let mut w = tsv_writer(&paths.notes)?;
        w.write_record([
            "noteId",
            "tweetId",
            "createdAtMillis",
            "isAi",
            "isMediaNote",
            "noteAuthorParticipantId",
            "summary",
        ])?;
        for n in self.notes.values() {
            w.write_record([
                n.note_id.as_str(),
                n.tweet_id.as_str(),
                &n.created_at.to_string(),
                if n.is_ai { "1" } else { "0" },
                if n.is_media_note { "1" } else { "0" },
                n.writer_id.as_deref().unwrap_or(""),
                &n.text,
            ])?;
        }
        w.flush().map_err(|e| Error::io(&paths.notes, e))?;

        let mut w = tsv_writer(&paths.ratings)?;
        w.write_record(["noteId", "raterParticipantId", "createdAtMillis", "helpfulnessLevel"])?;
        for r in &self.ratings {
            w.write_record([
                r.note_id.as_str(),
                r.rater_id.as_str(),
                &r.created_at.to_string(),
                r.value.as_export_str(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&paths.ratings, e))?;

        let mut w = tsv_writer(&paths.raters)?;
        w.write_record(["raterParticipantId", "coreRaterFactor1", "coreRaterIntercept"])?;
        for p in self.raters.values() {
            w.write_record([p.rater_id.as_str(), &p.factor.to_string(), &p.intercept.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&paths.raters, e))?;

        if let Some(path) = &paths.status_history {
            let mut w = tsv_writer(path)?;
            w.write_record(["noteId", "status", "firstCrhAtMillis"])?;
            for s in self.status_history.values() {
                w.write_record([
                    s.note_id.as_str(),
                    s.status.code(),
                    &s.first_crh_at.map(|t| t.to_string()).unwrap_or_default(),
                ])?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        Ok(paths)
    }
}

/// Locations of the dataset files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub notes: PathBuf,
    pub ratings: PathBuf,
    pub raters: PathBuf,
    pub status_history: Option<PathBuf>,
}

fn tsv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(f))
}

fn dup(path: impl Into<PathBuf>, line: u64, key: &str) -> Error {
    Error::DuplicateKey {
        path: path.into(),
        line,
        key: key.to_owned(),
    }
}

/// Header-indexed TSV reader that reports file and line on every failure.
struct TsvTable {
    path: PathBuf,
    columns: BTreeMap<String, usize>,
    reader: csv::Reader<File>,
}

struct TsvRow<'a> {
    path: &'a Path,
    line: u64,
    columns: &'a BTreeMap<String, usize>,
    record: &'a csv::StringRecord,
}

impl TsvTable {
    fn open(path: &Path, required: &[&str]) -> Result<TsvTable> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .has_headers(true)
            .flexible(false)
            .from_reader(f);
        let headers = reader.headers().map_err(|e| Error::MalformedRow {
            path: path.to_owned(),
            line: 1,
            reason: e.to_string(),
        })?;
        let columns: BTreeMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_owned(), i))
            .collect();
        for c in required {
            if !columns.contains_key(*c) {
                return Err(Error::MissingColumn {
                    path: path.to_owned(),
                    column: (*c).to_owned(),
                });
            }
        }
        Ok(TsvTable {
            path: path.to_owned(),
            columns,
            reader,
        })
    }

    fn for_each(&mut self, mut f: impl FnMut(&TsvRow<'_>) -> Result<()>) -> Result<usize> {
        let mut record = csv::StringRecord::new();
        let mut n = 0;
        loop {
            let more = self.reader.read_record(&mut record).map_err(|e| Error::MalformedRow {
                path: self.path.clone(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                reason: e.to_string(),
            })?;
            if !more {
                break;
            }
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            f(&TsvRow {
                path: &self.path,
                line,
                columns: &self.columns,
                record: &record,
            })?;
            n += 1;
        }
        Ok(n)
    }
}

impl TsvRow<'_> {
    fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::MalformedRow {
            path: self.path.to_owned(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn get(&self, column: &str) -> Option<&str> {
        self.columns
            .get(column)
            .and_then(|&i| self.record.get(i))
            .map(str::trim)
    }

    fn req(&self, column: &str) -> Result<&str> {
        match self.get(column) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(self.malformed(format!("empty `{column}`"))),
        }
    }

    fn parse<T: FromStr>(&self, column: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.req(column)?;
        raw.parse::<T>()
            .map_err(|e| self.malformed(format!("`{column}` = `{raw}`: {e}")))
    }

    fn flag(&self, column: &str) -> Result<bool> {
        match self.get(column) {
            None | Some("") => Ok(false),
            Some(v) => parse_flag(v).ok_or_else(|| self.malformed(format!("`{column}` = `{v}` is not a boolean"))),
        }
    }

    fn optional_f64(&self, column: &str) -> Result<Option<f64>> {
        match self.get(column) {
            None | Some("") => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|e| self.malformed(format!("`{column}` = `{v}`: {e}"))),
        }
    }
}

fn parse_flag(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" => Some(true),
        "0" | "false" | "f" | "no" => Some(false),
        _ => None,
    }
}

fn parse_created_at(row: &TsvRow<'_>) -> Result<Millis> {
    let t: Millis = row.parse("createdAtMillis")?;
    if t <= 0 {
        return Err(row.malformed(format!("createdAtMillis must be positive, got {t}")));
    }
    Ok(t)
}

/// Reads the three dataset files. Ratings that point at notes absent from
/// the notes file are dropped and counted, as are rater rows with an empty
/// or non-finite factor or intercept.
pub fn load_dataset(notes_path: &Path, ratings_path: &Path, raters_path: &Path) -> Result<(Dataset, LoadReport)> {
    let mut d = Dataset::default();
    let mut report = LoadReport::default();

    let mut t = TsvTable::open(notes_path, &["noteId", "tweetId", "createdAtMillis", "isAi"])?;
    report.note_rows = t.for_each(|row| {
        let note_id = NoteId::from(row.req("noteId")?);
        let note = Note {
            tweet_id: TweetId::from(row.req("tweetId")?),
            is_ai: row.flag("isAi")?,
            created_at: parse_created_at(row)?,
            text: row.get("summary").unwrap_or("").to_owned(),
            is_media_note: row.flag("isMediaNote")?,
            writer_id: row
                .get("noteAuthorParticipantId")
                .filter(|s| !s.is_empty())
                .map(str::to_owned),
            note_id: note_id.clone(),
        };
        if d.notes.insert(note_id.clone(), note).is_some() {
            return Err(dup(row.path, row.line, note_id.as_str()));
        }
        Ok(())
    })?;

    let mut t = TsvTable::open(
        raters_path,
        &["raterParticipantId", "coreRaterFactor1", "coreRaterIntercept"],
    )?;
    let mut seen_raters = BTreeSet::new();
    report.rater_rows = t.for_each(|row| {
        let rater_id = RaterId::from(row.req("raterParticipantId")?);
        if !seen_raters.insert(rater_id.clone()) {
            return Err(dup(row.path, row.line, rater_id.as_str()));
        }
        let factor = row.optional_f64("coreRaterFactor1")?;
        let intercept = row.optional_f64("coreRaterIntercept")?;
        match (factor, intercept) {
            (Some(f), Some(i)) if f.is_finite() && i.is_finite() => {
                d.raters.insert(
                    rater_id.clone(),
                    RaterProfile {
                        rater_id,
                        factor: f,
                        intercept: i,
                    },
                );
            }
            _ => report.invalid_profiles += 1,
        }
        Ok(())
    })?;

    let mut t = TsvTable::open(
        ratings_path,
        &["noteId", "raterParticipantId", "createdAtMillis", "helpfulnessLevel"],
    )?;
    let mut seen_pairs: BTreeSet<(RaterId, NoteId)> = BTreeSet::new();
    let mut ratings = Vec::new();
    let mut orphans = 0usize;
    report.rating_rows = t.for_each(|row| {
        let rating = Rating {
            note_id: NoteId::from(row.req("noteId")?),
            rater_id: RaterId::from(row.req("raterParticipantId")?),
            value: row.parse("helpfulnessLevel")?,
            created_at: parse_created_at(row)?,
        };
        if !seen_pairs.insert((rating.rater_id.clone(), rating.note_id.clone())) {
            return Err(dup(
                row.path,
                row.line,
                &format!("{}/{}", rating.rater_id, rating.note_id),
            ));
        }
        if d.notes.contains_key(&rating.note_id) {
            ratings.push(rating);
        } else {
            orphans += 1;
        }
        Ok(())
    })?;
    report.orphan_ratings = orphans;
    d.ratings = ratings;
    d.canonicalize_ratings()?;
    Ok((d, report))
}

/// Reads an optional status history file (`noteId`, `status`,
/// `firstCrhAtMillis`) into the dataset. Rows for unknown notes are ignored.
pub fn load_status_history(d: &mut Dataset, path: &Path) -> Result<usize> {
    let mut t = TsvTable::open(path, &["noteId", "status"])?;
    let mut history = BTreeMap::new();
    let n = t.for_each(|row| {
        let note_id = NoteId::from(row.req("noteId")?);
        let status: NoteStatus = row.parse("status")?;
        let first_crh_at = match row.get("firstCrhAtMillis") {
            None | Some("") => None,
            Some(_) => Some(row.parse::<Millis>("firstCrhAtMillis")?),
        };
        let rec = NoteStatusRecord {
            note_id: note_id.clone(),
            status,
            first_crh_at,
        };
        if history.insert(note_id.clone(), rec).is_some() {
            return Err(dup(row.path, row.line, note_id.as_str()));
        }
        Ok(())
    })?;
    history.retain(|k, _| d.notes.contains_key(k));
    d.status_history = history;
    Ok(n)
}

/// Reads a topic label file (`tweetId`, `topic`, `modality`).
pub fn load_topic_labels(path: &Path) -> Result<Vec<TopicLabel>> {
    let mut t = TsvTable::open(path, &["tweetId", "topic", "modality"])?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    t.for_each(|row| {
        let tweet_id = TweetId::from(row.req("tweetId")?);
        if !seen.insert(tweet_id.clone()) {
            return Err(dup(row.path, row.line, tweet_id.as_str()));
        }
        out.push(TopicLabel {
            tweet_id,
            topic: row.parse("topic")?,
            modality: row.parse("modality")?,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn write_topic_labels(labels: &[TopicLabel], path: &Path) -> Result<()> {
    let mut w = tsv_writer(path)?;
    w.write_record(["tweetId", "topic", "modality"])?;
    for l in labels {
        w.write_record([l.tweet_id.as_str(), l.topic.name(), l.modality.name()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Drops media notes (and their ratings) and every rating whose rater has no
/// valid profile. Notes left without ratings stay in the dataset.
pub fn apply_analysis_filters(d: &Dataset) -> Dataset {
    let notes: BTreeMap<NoteId, Note> = d
        .notes
        .iter()
        .filter(|(_, n)| !n.is_media_note)
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let ratings = d
        .ratings
        .iter()
        .filter(|r| notes.contains_key(&r.note_id))
        .filter(|r| d.raters.get(&r.rater_id).is_some_and(|p| p.factor.is_finite()))
        .cloned()
        .collect();
    let status_history = d
        .status_history
        .iter()
        .filter(|(k, _)| notes.contains_key(*k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Dataset {
        notes,
        ratings,
        raters: d.raters.clone(),
        status_history,
    }
}

pub fn filter_report(before: &Dataset, after: &Dataset) -> FilterReport {
    let media: BTreeSet<&NoteId> = before
        .notes
        .values()
        .filter(|n| n.is_media_note)
        .map(|n| &n.note_id)
        .collect();
    let on_removed = before.ratings.iter().filter(|r| media.contains(&r.note_id)).count();
    FilterReport {
        media_notes_removed: media.len(),
        ratings_on_removed_notes: on_removed,
        ratings_without_profile: before.ratings.len() - on_removed - after.ratings.len(),
        notes_after: after.notes.len(),
        ratings_after: after.ratings.len(),
        raters_after: after.active_raters().len(),
    }
}

/// Audit record for an ingest run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub notes_path: String,
    pub ratings_path: String,
    pub raters_path: String,
    pub load: LoadReport,
    pub filters: FilterReport,
    pub ai_notes: usize,
    pub human_notes: usize,
    pub tweets: usize,
}

impl DatasetManifest {
    pub fn new(paths: &DatasetPaths, load: LoadReport, filtered: &Dataset, filters: FilterReport) -> Self {
        let ai_notes = filtered.notes.values().filter(|n| n.is_ai).count();
        DatasetManifest {
            notes_path: paths.notes.display().to_string(),
            ratings_path: paths.ratings.display().to_string(),
            raters_path: paths.raters.display().to_string(),
            load,
            filters,
            ai_notes,
            human_notes: filtered.notes.len() - ai_notes,
            tweets: filtered.notes_by_tweet().len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    const NOTES: &str = "noteId\ttweetId\tcreatedAtMillis\tisAi\tisMediaNote\tsummary\n\
        n1\tt1\t1000\t1\t0\tFirst note https://reuters.com/a\n\
        n2\tt1\t2000\t0\t0\tSecond note\n\
        n3\tt2\t3000\t0\t1\tMedia note\n";
    const RATINGS: &str = "noteId\traterParticipantId\tcreatedAtMillis\thelpfulnessLevel\n\
        n1\tr1\t1500\tHELPFUL\n\
        n2\tr1\t2500\t0.5\n\
        n3\tr2\t3500\tNOT_HELPFUL\n\
        n2\tr3\t2600\t0.0\n";
    const RATERS: &str = "raterParticipantId\tcoreRaterFactor1\tcoreRaterIntercept\n\
        r1\t-0.2\t0.1\n\
        r2\t0.3\t0.0\n\
        r3\t\t0.2\n";

    fn fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
        (
            write(dir, "notes.tsv", NOTES),
            write(dir, "ratings.tsv", RATINGS),
            write(dir, "raters.tsv", RATERS),
        )
    }

    #[test]
    fn loads_fixture_fields() {
        let dir = tempfile::tempdir().unwrap();
        let (n, r, p) = fixture(dir.path());
        let (d, report) = load_dataset(&n, &r, &p).unwrap();
        assert_eq!(d.notes.len(), 3);
        let n1 = &d.notes[&NoteId::from("n1")];
        assert!(n1.is_ai);
        assert_eq!(n1.tweet_id, TweetId::from("t1"));
        assert_eq!(n1.created_at, 1000);
        assert_eq!(n1.text, "First note https://reuters.com/a");
        assert!(d.notes[&NoteId::from("n3")].is_media_note);
        assert_eq!(d.ratings.len(), 4);
        assert_eq!(d.ratings[0].value, HelpfulnessLevel::Helpful);
        assert_eq!(report.invalid_profiles, 1);
        assert_eq!(d.raters.len(), 2);
    }

    #[test]
    fn duplicate_note_id_is_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let (_, r, p) = fixture(dir.path());
        let n = write(
            dir.path(),
            "dup.tsv",
            "noteId\ttweetId\tcreatedAtMillis\tisAi\nn1\tt1\t1\t0\nn1\tt1\t2\t1\n",
        );
        match load_dataset(&n, &r, &p) {
            Err(Error::DuplicateKey { line, key, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(key, "n1");
            }
            other => panic!("expected DuplicateKey, got {other:?}"),
        }
    }

    #[test]
    fn off_grid_rating_value_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let (n, _, p) = fixture(dir.path());
        let r = write(
            dir.path(),
            "bad.tsv",
            "noteId\traterParticipantId\tcreatedAtMillis\thelpfulnessLevel\nn1\tr1\t5\t0.7\n",
        );
        match load_dataset(&n, &r, &p) {
            Err(Error::MalformedRow { line, path, .. }) => {
                assert_eq!(line, 2);
                assert!(path.ends_with("bad.tsv"));
            }
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let (n, r, _) = fixture(dir.path());
        let p = write(
            dir.path(),
            "raters2.tsv",
            "raterParticipantId\tcoreRaterFactor1\nr1\t0.1\n",
        );
        match load_dataset(&n, &r, &p) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "coreRaterIntercept"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn filters_media_and_profileless_ratings() {
        let dir = tempfile::tempdir().unwrap();
        let (n, r, p) = fixture(dir.path());
        let (d, _) = load_dataset(&n, &r, &p).unwrap();
        let f = apply_analysis_filters(&d);
        assert_eq!(f.notes.len(), 2);
        // r3 has no usable factor; n3 is a media note.
        assert_eq!(f.ratings.len(), 2);
        assert!(f.ratings.iter().all(|r| r.rater_id.as_str() == "r1"));
        let rep = filter_report(&d, &f);
        assert_eq!(rep.media_notes_removed, 1);
        assert_eq!(rep.ratings_on_removed_notes, 1);
        assert_eq!(rep.ratings_without_profile, 1);
        assert_eq!(apply_analysis_filters(&f), f);
    }

    #[test]
    fn unrated_notes_survive_filtering() {
        let notes = vec![Note {
            note_id: "a".into(),
            tweet_id: "t".into(),
            is_ai: false,
            created_at: 1,
            text: String::new(),
            is_media_note: false,
            writer_id: None,
        }];
        let d = Dataset::from_parts(notes, vec![], vec![]).unwrap();
        assert_eq!(apply_analysis_filters(&d).notes.len(), 1);
    }

    #[test]
    fn bucket_thresholds() {
        let cfg = BucketConfig::default();
        let p = |f| RaterProfile {
            rater_id: "x".into(),
            factor: f,
            intercept: 0.0,
        };
        assert_eq!(bucket_rater(&p(-0.20), &cfg), IdeologyBucket::Left);
        assert_eq!(bucket_rater(&p(0.0), &cfg), IdeologyBucket::Neutral);
        assert_eq!(bucket_rater(&p(0.15), &cfg), IdeologyBucket::Neutral);
        assert_eq!(bucket_rater(&p(-0.15), &cfg), IdeologyBucket::Neutral);
        assert_eq!(bucket_rater(&p(0.1500001), &cfg), IdeologyBucket::Right);
    }

    #[test]
    fn status_and_topic_parsing() {
        assert_eq!(
            "CURRENTLY_RATED_HELPFUL".parse::<NoteStatus>().unwrap(),
            NoteStatus::Crh
        );
        assert_eq!("health & medicine".parse::<Topic>().unwrap(), Topic::HealthMedicine);
        assert!("Weather".parse::<Topic>().is_err());
        assert_eq!("Text only".parse::<Modality>().unwrap(), Modality::TextOnly);
    }
}
