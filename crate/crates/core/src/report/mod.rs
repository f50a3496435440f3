//! Batch runs: one command, one output directory.
//!
//! A run writes `report.json` (versioned by `schema_version`), TSV tables,
//! plot-ready CSVs and `manifest.json`. Everything except the manifest is a
//! pure function of the inputs and the effective config, so repeated runs
//! produce byte-identical files. Paths and checksums live only in the
//! manifest.

mod manifest;
mod sections;

pub use manifest::{DirLock, FileRecord, Manifest, LOCK_FILE, MANIFEST_FILE};

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    apply_analysis_filters, filter_report, load_dataset, load_status_history, load_topic_labels, BucketConfig, Dataset,
    FilterReport, LoadReport, TopicLabel,
};
use crate::error::{Error, Result};
use crate::exposure::{build_complete_blocks, rescore_equal_exposure, CompleteBlock};
use crate::inference::DEFAULT_SUBGROUP_MIN_RATINGS;
use crate::scoring::{fit_bridging, ScoringConfig, ScoringResult};
use crate::simulator::SimConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";
/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "CROWDNOTE_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Ingest,
    Score,
    EqualExposure,
    Table1,
    Eq2,
    Subgroups,
    Pairwise,
    Descriptives,
    Robustness,
    Simulate,
    Confound,
    #[default]
    ReportAll,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Score => "score",
            Command::EqualExposure => "equal-exposure",
            Command::Table1 => "table1",
            Command::Eq2 => "eq2",
            Command::Subgroups => "subgroups",
            Command::Pairwise => "pairwise",
            Command::Descriptives => "descriptives",
            Command::Robustness => "robustness",
            Command::Simulate => "simulate",
            Command::Confound => "confound",
            Command::ReportAll => "report-all",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputPaths {
    pub notes: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    pub raters: Option<PathBuf>,
    pub status_history: Option<PathBuf>,
    pub topic_labels: Option<PathBuf>,
}

impl InputPaths {
    fn dataset(&self) -> Option<(&Path, &Path, &Path)> {
        match (&self.notes, &self.ratings, &self.raters) {
            (Some(n), Some(r), Some(p)) => Some((n, r, p)),
            _ => None,
        }
    }

    fn any_dataset_file(&self) -> bool {
        self.notes.is_some() || self.ratings.is_some() || self.raters.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub subgroup_min_ratings: usize,
    pub percentile_min_notes: usize,
    /// Writer benchmarked by the percentile table; defaults to the single
    /// writer of the LLM notes when there is one.
    pub subject_writer: Option<String>,
    pub confound_runs: usize,
    /// Drop media notes and ratings by raters without a profile.
    pub apply_filters: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            subgroup_min_ratings: DEFAULT_SUBGROUP_MIN_RATINGS,
            percentile_min_notes: 30,
            subject_writer: None,
            confound_runs: 1,
            apply_filters: true,
        }
    }
}

/// Effective configuration of one run. Built-in defaults, overridden by a
/// TOML file, overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: Command,
    pub inputs: InputPaths,
    pub out_dir: PathBuf,
    /// When set, replaces both the scoring and the simulation seed.
    pub seed: Option<u64>,
    pub scoring: ScoringConfig,
    pub buckets: BucketConfig,
    pub simulation: SimConfig,
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    /// Applies `seed` to the scoring and simulation configs.
    pub fn effective(&self) -> RunConfig {
        let mut c = self.clone();
        if let Some(s) = c.seed {
            c.scoring.seed = s;
            c.simulation.seed = s;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.scoring.validate()?;
        self.buckets.validate()?;
        if matches!(self.command, Command::Simulate | Command::Confound | Command::ReportAll) {
            self.simulation.validate()?;
        }
        if self.command == Command::Confound && self.analysis.confound_runs == 0 {
            return Err(Error::InvalidConfig("confound_runs must be at least 1".into()));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::InvalidConfig("an output directory is required".into()));
        }
        Ok(())
    }
}

/// Files written by a run, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub outputs: Vec<String>,
    pub notices: Vec<String>,
}

/// Output side of a run: files, report sections, notices.
struct Out {
    dir: PathBuf,
    outputs: Vec<String>,
    inputs: Vec<FileRecord>,
    rows: BTreeMap<String, usize>,
    sections: BTreeMap<String, serde_json::Value>,
    notices: Vec<String>,
}

impl Out {
    fn write(&mut self, rel: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        self.record(rel);
        Ok(())
    }

    fn record(&mut self, rel: &str) {
        if !self.outputs.iter().any(|o| o == rel) {
            self.outputs.push(rel.to_string());
        }
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.write(rel, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w).map_err(|e| Error::Serialize(e.to_string()))
        })
    }

    fn section<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.sections.insert(name.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    fn notice(&mut self, msg: String) {
        self.notices.push(msg);
    }
}

/// Lazily computed shared inputs of the analyses.
#[derive(Default)]
struct State {
    data: Option<Dataset>,
    labels: Option<Vec<TopicLabel>>,
    scores: Option<ScoringResult>,
    blocks: Option<Vec<CompleteBlock>>,
    ee_scores: Option<ScoringResult>,
}

#[derive(Serialize)]
struct IngestSection {
    load: LoadReport,
    filters: Option<FilterReport>,
    notes: usize,
    llm_notes: usize,
    human_notes: usize,
    tweets: usize,
    ratings: usize,
    raters_with_ratings: usize,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    out: Out,
    st: State,
}

impl Run<'_> {
    fn ensure_data(&mut self) -> Result<()> {
        if self.st.data.is_some() {
            return Ok(());
        }
        let inputs = &self.cfg.inputs;
        let d = match inputs.dataset() {
            Some((n, r, p)) => {
                let (mut d, load) = load_dataset(n, r, p)?;
                for (label, path) in [("notes", n), ("ratings", r), ("raters", p)] {
                    self.out
                        .inputs
                        .push(FileRecord::of(format!("{label}: {}", path.display()), path)?);
                }
                if let Some(h) = &inputs.status_history {
                    load_status_history(&mut d, h)?;
                    self.out
                        .inputs
                        .push(FileRecord::of(format!("status_history: {}", h.display()), h)?);
                }
                let (filtered, filters) = if self.cfg.analysis.apply_filters {
                    let f = apply_analysis_filters(&d);
                    let rep = filter_report(&d, &f);
                    (f, Some(rep))
                } else {
                    (d, None)
                };
                let ai = filtered.notes.values().filter(|n| n.is_ai).count();
                let sec = IngestSection {
                    load,
                    filters,
                    notes: filtered.notes.len(),
                    llm_notes: ai,
                    human_notes: filtered.notes.len() - ai,
                    tweets: filtered.notes_by_tweet().len(),
                    ratings: filtered.ratings.len(),
                    raters_with_ratings: filtered.active_raters().len(),
                };
                self.out.section("ingest", &sec)?;
                filtered
            }
            None if inputs.any_dataset_file() => {
                return Err(Error::InvalidConfig(
                    "--notes, --ratings and --raters must be given together".into(),
                ))
            }
            None if matches!(self.cfg.command, Command::ReportAll | Command::Simulate) => {
                sections::simulate_corpus(self)?;
                return Ok(());
            }
            None => {
                return Err(Error::InvalidConfig(format!(
                    "`{}` needs --notes, --ratings and --raters",
                    self.cfg.command.name()
                )))
            }
        };
        self.out.rows.insert("notes".into(), d.notes.len());
        self.out.rows.insert("ratings".into(), d.ratings.len());
        self.out.rows.insert("raters".into(), d.raters.len());
        self.st.data = Some(d);
        Ok(())
    }

    fn ensure_labels(&mut self) -> Result<()> {
        if self.st.labels.is_some() {
            return Ok(());
        }
        let labels = match &self.cfg.inputs.topic_labels {
            Some(p) => {
                let l = load_topic_labels(p)?;
                self.out
                    .inputs
                    .push(FileRecord::of(format!("topic_labels: {}", p.display()), p)?);
                l
            }
            None => {
                return Err(Error::InvalidConfig(
                    "subgroup fits need --topic-labels (tweetId, topic, modality)".into(),
                ))
            }
        };
        self.st.labels = Some(labels);
        Ok(())
    }

    fn ensure_scores(&mut self) -> Result<()> {
        self.ensure_data()?;
        if self.st.scores.is_none() {
            let d = self.st.data.as_ref().expect("ensured");
            self.st.scores = Some(fit_bridging(d, &self.cfg.scoring)?);
        }
        Ok(())
    }

    fn ensure_blocks(&mut self) -> Result<()> {
        self.ensure_data()?;
        if self.st.blocks.is_none() {
            let blocks = build_complete_blocks(self.st.data.as_ref().expect("ensured"));
            self.out.rows.insert("complete_blocks".into(), blocks.len());
            self.out
                .rows
                .insert("block_ratings".into(), blocks.iter().map(|b| b.ratings.len()).sum());
            self.st.blocks = Some(blocks);
        }
        Ok(())
    }

    fn ensure_ee_scores(&mut self) -> Result<()> {
        self.ensure_blocks()?;
        if self.st.ee_scores.is_none() {
            let blocks = self.st.blocks.as_ref().expect("ensured");
            self.st.ee_scores = Some(rescore_equal_exposure(blocks, &self.cfg.scoring)?);
        }
        Ok(())
    }

    fn step(&mut self, cmd: Command) -> Result<()> {
        match cmd {
            Command::Ingest => sections::ingest(self),
            Command::Score => sections::score(self),
            Command::EqualExposure => sections::equal_exposure(self),
            Command::Table1 => sections::table1(self),
            Command::Eq2 => sections::eq2(self),
            Command::Subgroups => sections::subgroups(self),
            Command::Pairwise => sections::pairwise(self),
            Command::Descriptives => sections::descriptives(self),
            Command::Robustness => sections::robustness(self),
            Command::Simulate => sections::simulate_corpus(self),
            Command::Confound => sections::confound(self),
            Command::ReportAll => unreachable!("expanded by run"),
        }
    }
}

/// Errors that reflect what the data allow rather than a broken run.
fn data_limited(e: &Error) -> bool {
    matches!(
        e,
        Error::NoPairs
            | Error::AllTies(_)
            | Error::SubsetTooSmall { .. }
            | Error::DegenerateSample(_)
            | Error::NoRatings
            | Error::EmptySample
            | Error::RankDeficientDesign { .. }
            | Error::UnlabeledTweet(_)
    )
}

const REPORT_ALL_STEPS: [Command; 10] = [
    Command::Ingest,
    Command::Score,
    Command::EqualExposure,
    Command::Table1,
    Command::Eq2,
    Command::Subgroups,
    Command::Pairwise,
    Command::Descriptives,
    Command::Robustness,
    Command::Confound,
];

#[derive(Serialize)]
struct Report<'a> {
    schema_version: u32,
    command: &'a str,
    notices: &'a [String],
    sections: &'a BTreeMap<String, serde_json::Value>,
}

/// Executes one run and writes its files under `cfg.out_dir`.
///
/// In `report-all`, a step the data cannot support (no LLM/human pairs, no
/// complete blocks, a missing label file) is skipped with a notice; every
/// other error aborts the run.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let cfg = cfg.effective();
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    let mut r = Run {
        cfg: &cfg,
        out: Out {
            dir: cfg.out_dir.clone(),
            outputs: Vec::new(),
            inputs: Vec::new(),
            rows: BTreeMap::new(),
            sections: BTreeMap::new(),
            notices: Vec::new(),
        },
        st: State::default(),
    };
    if cfg.command == Command::ReportAll {
        r.ensure_data()?;
        for step in REPORT_ALL_STEPS {
            if step == Command::Ingest && cfg.inputs.dataset().is_none() {
                continue;
            }
            if step == Command::Confound && cfg.inputs.dataset().is_some() {
                continue;
            }
            match r.step(step) {
                Ok(()) => {}
                Err(e) if data_limited(&e) || (step == Command::Subgroups && r.st.labels.is_none()) => {
                    r.out.notice(format!("{} skipped: {e}", step.name()));
                }
                Err(e) => return Err(e),
            }
        }
    } else {
        r.step(cfg.command)?;
    }

    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: cfg.command.name(),
        notices: &r.out.notices,
        sections: &r.out.sections,
    };
    let value = serde_json::to_value(&report)?;
    r.out.json(REPORT_FILE, &value)?;

    let mut outputs = Vec::with_capacity(r.out.outputs.len());
    for rel in &r.out.outputs {
        outputs.push(FileRecord::of(rel.clone(), &cfg.out_dir.join(rel))?);
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: cfg.command.name().into(),
        effective_config: serde_json::to_value(&cfg)?,
        inputs: r.out.inputs.clone(),
        outputs,
        row_counts: r.out.rows.clone(),
        notices: r.out.notices.clone(),
    };
    let path = cfg.out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(RunOutcome {
        outputs: r.out.outputs,
        notices: r.out.notices,
    })
}
