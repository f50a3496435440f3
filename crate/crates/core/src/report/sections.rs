//! One function per command. Each writes its tables and adds a section to
//! the JSON report.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::Serialize;

use super::{Command, Run};
use crate::data::{Dataset, NoteId, NoteStatus, TopicLabel};
use crate::descriptives::{
    bucket_table, compare_notes, robustness_subsets, text_profile, timing_asymmetry, writer_percentiles, writer_stats,
    Group, GroupMetrics, NoteLevelComparison, PercentileReport, TextProfileReport, TimingAsymmetry,
};
use crate::error::{Error, Result};
use crate::exposure::{
    equal_exposure_dataset, representativeness_report, summarize_blocks, write_blocks_tsv, BlockSummary,
    DistributionComparison,
};
use crate::inference::{
    pairwise_bradley_terry, run_eq2_outcomes, run_table1, subgroup_fits, write_coefficient_csv, write_table1_tsv,
    FitResult, Outcome, SubgroupAxis, Term,
};
use crate::scoring::ScoringResult;
use crate::simulator::{confound_experiment, simulate, simulate_labels, SimConfig};

fn csv_err(e: std::io::Error) -> Error {
    Error::Serialize(e.to_string())
}

fn f6(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        "NA".into()
    }
}

#[derive(Debug, Clone, Default, Serialize)]
struct GroupStatus {
    n_notes: usize,
    n_scored: usize,
    crh: usize,
    crnh: usize,
    nmr: usize,
    crh_pct: f64,
    crnh_pct: f64,
    mean_score: Option<f64>,
    mean_ratings: f64,
}

#[derive(Debug, Serialize)]
struct ScoreSection {
    global_intercept: f64,
    objective: f64,
    iterations_used: usize,
    converged: bool,
    groups: BTreeMap<Group, GroupStatus>,
}

fn status_summary(d: &Dataset, s: &ScoringResult) -> ScoreSection {
    let counts = d.rating_counts();
    let mut groups: BTreeMap<Group, (GroupStatus, f64, usize)> = BTreeMap::new();
    for (id, n) in &d.notes {
        let (g, score_sum, ratings) = groups.entry(Group::of(n.is_ai)).or_default();
        g.n_notes += 1;
        *ratings += counts.get(id).copied().unwrap_or(0);
        if let Some(x) = s.score(id) {
            g.n_scored += 1;
            *score_sum += x;
        }
        match s.status(id) {
            Some(NoteStatus::Crh) => g.crh += 1,
            Some(NoteStatus::Crnh) => g.crnh += 1,
            _ => g.nmr += 1,
        }
    }
    ScoreSection {
        global_intercept: s.global_intercept,
        objective: s.objective,
        iterations_used: s.iterations_used,
        converged: s.converged,
        groups: groups
            .into_iter()
            .map(|(k, (mut g, sum, ratings))| {
                let n = g.n_notes as f64;
                g.crh_pct = 100.0 * g.crh as f64 / n;
                g.crnh_pct = 100.0 * g.crnh as f64 / n;
                g.mean_score = (g.n_scored > 0).then(|| sum / g.n_scored as f64);
                g.mean_ratings = ratings as f64 / n;
                (k, g)
            })
            .collect(),
    }
}

pub(super) fn write_labels<W: Write>(labels: &[TopicLabel], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    w.write_record(["tweetId", "topic", "modality"])?;
    for l in labels {
        w.write_record([l.tweet_id.as_str(), l.topic.name(), l.modality.name()])?;
    }
    w.flush().map_err(csv_err)
}

#[derive(Serialize)]
struct SimulationSection<'a> {
    config: &'a SimConfig,
    notes: usize,
    tweets: usize,
    ratings: usize,
    raters_with_ratings: usize,
    mean_ratings: BTreeMap<Group, f64>,
    mean_true_quality: BTreeMap<Group, f64>,
    timing: TimingAsymmetry,
}

/// Simulates the configured corpus and makes it the run's dataset.
pub(super) fn simulate_corpus(r: &mut Run) -> Result<()> {
    if r.st.data.is_some() {
        return Ok(());
    }
    let cfg = &r.cfg.simulation;
    let (d, truth) = simulate(cfg)?;
    let dir = r.out.dir.join("simulated");
    let paths = d.write_tsv(&dir)?;
    for p in [
        Some(&paths.notes),
        Some(&paths.ratings),
        Some(&paths.raters),
        paths.status_history.as_ref(),
    ]
    .into_iter()
    .flatten()
    {
        let name = p.file_name().expect("file path").to_string_lossy();
        r.out.record(&format!("simulated/{name}"));
    }
    r.out.json("simulated/truth.json", &truth)?;
    if r.cfg.inputs.topic_labels.is_none() {
        let labels = simulate_labels(&d, cfg.seed);
        r.out.write("simulated/labels.tsv", |w| write_labels(&labels, w))?;
        r.st.labels = Some(labels);
    }

    let counts = d.rating_counts();
    let mut acc: BTreeMap<Group, (usize, usize, f64)> = BTreeMap::new();
    for n in &truth.notes {
        let e = acc.entry(Group::of(n.is_ai)).or_default();
        e.0 += 1;
        e.1 += counts.get(&n.note_id).copied().unwrap_or(0);
        e.2 += n.quality;
    }
    let section = SimulationSection {
        config: cfg,
        notes: d.notes.len(),
        tweets: d.notes_by_tweet().len(),
        ratings: d.ratings.len(),
        raters_with_ratings: d.active_raters().len(),
        mean_ratings: acc.iter().map(|(g, e)| (*g, e.1 as f64 / e.0 as f64)).collect(),
        mean_true_quality: acc.iter().map(|(g, e)| (*g, e.2 / e.0 as f64)).collect(),
        timing: timing_asymmetry(&d),
    };
    r.out.section("simulation", &section)?;
    r.out.rows.insert("notes".into(), d.notes.len());
    r.out.rows.insert("ratings".into(), d.ratings.len());
    r.out.rows.insert("raters".into(), d.raters.len());
    r.st.data = Some(d);
    Ok(())
}

pub(super) fn ingest(r: &mut Run) -> Result<()> {
    r.ensure_data()?;
    let d = r.st.data.as_ref().expect("ensured");
    let paths = d.write_tsv(&r.out.dir.join("dataset"))?;
    for p in [
        Some(&paths.notes),
        Some(&paths.ratings),
        Some(&paths.raters),
        paths.status_history.as_ref(),
    ]
    .into_iter()
    .flatten()
    {
        let name = p.file_name().expect("file path").to_string_lossy();
        r.out.record(&format!("dataset/{name}"));
    }
    Ok(())
}

pub(super) fn score(r: &mut Run) -> Result<()> {
    r.ensure_scores()?;
    let (d, s) = (
        r.st.data.as_ref().expect("ensured"),
        r.st.scores.as_ref().expect("ensured"),
    );
    r.out.write("scores.tsv", |w| s.write_tsv(w))?;
    r.out.section("score", &status_summary(d, s))
}

#[derive(Serialize)]
struct EqualExposureSection {
    blocks: BlockSummary,
    representativeness: DistributionComparison,
    score: ScoreSection,
}

pub(super) fn equal_exposure(r: &mut Run) -> Result<()> {
    r.ensure_ee_scores()?;
    let d = r.st.data.as_ref().expect("ensured");
    let blocks = r.st.blocks.as_ref().expect("ensured");
    let s = r.st.ee_scores.as_ref().expect("ensured");
    let ee = equal_exposure_dataset(d, blocks);
    let rep = representativeness_report(d, blocks);
    r.out
        .write("equal_exposure/blocks.tsv", |w| write_blocks_tsv(blocks, w))?;
    r.out.write("equal_exposure/scores.tsv", |w| s.write_tsv(w))?;
    r.out
        .write("equal_exposure/representativeness.csv", |w| rep.write_histogram_csv(w))?;
    let section = EqualExposureSection {
        blocks: summarize_blocks(d, blocks),
        representativeness: rep,
        score: status_summary(&ee, s),
    };
    r.out.section("equal_exposure", &section)
}

pub(super) fn table1(r: &mut Run) -> Result<()> {
    r.ensure_data()?;
    let fits = run_table1(r.st.data.as_ref().expect("ensured"), &r.cfg.buckets)?;
    r.out.write("table1.tsv", |w| write_table1_tsv(&fits, w))?;
    r.out.section("table1", &fits)
}

fn write_eq2_rows<W: Write>(rows: &[(&str, &FitResult)], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    w.write_record([
        "sample",
        "outcome",
        "estimate",
        "se",
        "z",
        "p_value",
        "adj_p_value",
        "n_obs",
        "singular",
    ])?;
    for (sample, f) in rows {
        let Some(c) = f.coef(Term::Ai) else { continue };
        w.write_record([
            *sample,
            f.outcome.as_str(),
            &f6(c.estimate),
            &f6(c.se),
            &f6(c.statistic),
            &f6(c.p_value),
            &c.adj_p_value.map_or_else(|| "NA".into(), f6),
            &f.n_obs.to_string(),
            &f.singular.to_string(),
        ])?;
    }
    w.flush().map_err(csv_err)
}

#[derive(Serialize)]
struct Eq2Section {
    full_sample: Vec<FitResult>,
    equal_exposure: Option<Vec<FitResult>>,
}

pub(super) fn eq2(r: &mut Run) -> Result<()> {
    r.ensure_scores()?;
    let ee_ready = match r.ensure_ee_scores() {
        Ok(()) => true,
        Err(e) if super::data_limited(&e) => {
            r.out.notice(format!("eq2: equal-exposure sample unavailable: {e}"));
            false
        }
        Err(e) => return Err(e),
    };
    let d = r.st.data.as_ref().expect("ensured");
    let full = run_eq2_outcomes(r.st.scores.as_ref().expect("ensured"), d)?;
    let ee = if ee_ready {
        let ee_d = equal_exposure_dataset(d, r.st.blocks.as_ref().expect("ensured"));
        Some(run_eq2_outcomes(r.st.ee_scores.as_ref().expect("ensured"), &ee_d)?)
    } else {
        None
    };
    let mut rows: Vec<(&str, &FitResult)> = full.iter().map(|f| ("full_sample", f)).collect();
    if let Some(ee) = &ee {
        rows.extend(ee.iter().map(|f| ("equal_exposure", f)));
    }
    r.out.write("eq2.tsv", |w| write_eq2_rows(&rows, w))?;
    r.out.section(
        "eq2",
        &Eq2Section {
            full_sample: full,
            equal_exposure: ee,
        },
    )
}

pub(super) fn subgroups(r: &mut Run) -> Result<()> {
    r.ensure_data()?;
    r.ensure_labels()?;
    let d = r.st.data.as_ref().expect("ensured");
    let labels = r.st.labels.as_ref().expect("ensured");
    let mut section = BTreeMap::new();
    for (axis, name) in [(SubgroupAxis::Topic, "topic"), (SubgroupAxis::Modality, "modality")] {
        let rep = subgroup_fits(d, labels, axis, &r.cfg.buckets, r.cfg.analysis.subgroup_min_ratings)?;
        for s in &rep.skipped {
            r.out.notice(format!(
                "subgroups: {name} `{}` skipped ({} ratings): {}",
                s.label, s.n_ratings, s.reason
            ));
        }
        let rows = rep.ai_effects();
        r.out
            .write(&format!("subgroups/{name}.csv"), |w| write_coefficient_csv(&rows, w))?;
        section.insert(name, rep);
    }
    r.out.section("subgroups", &section)
}

pub(super) fn pairwise(r: &mut Run) -> Result<()> {
    r.ensure_data()?;
    let rep = pairwise_bradley_terry(r.st.data.as_ref().expect("ensured"))?;
    r.out.section("pairwise", &rep)
}

#[derive(Serialize)]
struct DescriptivesSection {
    bucket_table: Vec<crate::descriptives::BucketCell>,
    text_profile: TextProfileReport,
    timing: TimingAsymmetry,
    full_sample_comparison: NoteLevelComparison,
    writer_percentiles: Option<PercentileReport>,
}

pub(super) fn descriptives(r: &mut Run) -> Result<()> {
    r.ensure_scores()?;
    let d = r.st.data.as_ref().expect("ensured");
    let s = r.st.scores.as_ref().expect("ensured");
    let table = bucket_table(d, &r.cfg.buckets)?;
    r.out.write("descriptives/bucket_table.tsv", |w| table.write_tsv(w))?;
    r.out
        .write("descriptives/bucket_plot.csv", |w| table.write_plot_csv(w))?;

    let notes: Vec<_> = d.notes.values().cloned().collect();
    let text = text_profile(&notes);
    r.out.write("descriptives/domains.tsv", |w| {
        let mut t = csv::WriterBuilder::new().delimiter(b'\t').from_writer(w);
        t.write_record(["group", "rank", "domain", "n_notes", "pct_notes"])?;
        for (g, stats) in &text.groups {
            for (i, dom) in stats.top(10).iter().enumerate() {
                t.write_record([
                    g.name(),
                    &(i + 1).to_string(),
                    &dom.domain,
                    &dom.n_notes.to_string(),
                    &f6(dom.pct_notes),
                ])?;
            }
        }
        t.flush().map_err(csv_err)
    })?;

    let statuses: BTreeMap<NoteId, NoteStatus> = s.statuses.iter().map(|(k, v)| (k.clone(), v.status)).collect();
    let writers = writer_stats(d, &statuses);
    let subject_id = r.cfg.analysis.subject_writer.clone().or_else(|| {
        let ids: BTreeSet<&str> = d
            .notes
            .values()
            .filter(|n| n.is_ai)
            .filter_map(|n| n.writer_id.as_deref())
            .collect();
        (ids.len() == 1).then(|| ids.into_iter().next().expect("one id").to_string())
    });
    let percentiles = match subject_id
        .as_deref()
        .and_then(|id| writers.iter().find(|w| w.writer_id == id))
    {
        Some(subject) => {
            let others: Vec<_> = writers
                .iter()
                .filter(|w| w.writer_id != subject.writer_id)
                .cloned()
                .collect();
            match writer_percentiles(&others, subject, r.cfg.analysis.percentile_min_notes) {
                Ok(p) => Some(p),
                Err(e) => {
                    r.out.notice(format!("descriptives: writer percentiles skipped: {e}"));
                    None
                }
            }
        }
        None => {
            r.out
                .notice("descriptives: writer percentiles skipped: no subject writer id".into());
            None
        }
    };

    let section = DescriptivesSection {
        bucket_table: table.cells,
        text_profile: text,
        timing: timing_asymmetry(d),
        full_sample_comparison: compare_notes(d, s),
        writer_percentiles: percentiles,
    };
    r.out.section("descriptives", &section)
}

pub(super) fn robustness(r: &mut Run) -> Result<()> {
    r.ensure_scores()?;
    let subsets = robustness_subsets(
        r.st.data.as_ref().expect("ensured"),
        r.st.scores.as_ref().expect("ensured"),
    );
    r.out.write("robustness.tsv", |w| {
        let mut t = csv::WriterBuilder::new().delimiter(b'\t').from_writer(w);
        t.write_record([
            "subset",
            "n_notes",
            "n_llm",
            "n_human",
            "match_rate",
            "crh_pct_llm",
            "crh_pct_human",
            "mean_score_llm",
            "mean_score_human",
            "ai_score_estimate",
            "ai_score_p_value",
        ])?;
        for s in &subsets {
            let g = |grp: Group, f: fn(&GroupMetrics) -> f64| {
                s.comparison.groups.get(&grp).map_or("NA".into(), |m| f6(f(m)))
            };
            let ai = s
                .comparison
                .models
                .iter()
                .find(|m| m.outcome == Outcome::HelpfulnessScore.name())
                .and_then(|m| m.coef(Term::Ai));
            t.write_record([
                s.name.as_str(),
                &s.n_notes.to_string(),
                &s.n_llm.to_string(),
                &s.n_human.to_string(),
                &s.match_rate.map_or("NA".into(), f6),
                &g(Group::Llm, |m| m.crh_pct),
                &g(Group::Human, |m| m.crh_pct),
                &g(Group::Llm, |m| m.mean_score),
                &g(Group::Human, |m| m.mean_score),
                &ai.map_or("NA".into(), |c| f6(c.estimate)),
                &ai.map_or("NA".into(), |c| f6(c.p_value)),
            ])?;
        }
        t.flush().map_err(csv_err)
    })?;
    r.out.section("robustness", &subsets)
}

#[derive(Serialize)]
struct ConfoundSummary {
    runs: usize,
    ee_gap_exceeds_full: usize,
    mean_full_score_gap: f64,
    mean_equal_exposure_score_gap: f64,
    mean_crh_gap_shift_pp: f64,
    pattern_holds: usize,
}

pub(super) fn confound(r: &mut Run) -> Result<()> {
    let base = &r.cfg.simulation;
    let n = r.cfg.analysis.confound_runs.max(1);
    let reports = (0..n as u64)
        .map(|i| {
            let cfg = SimConfig {
                seed: base.seed.wrapping_add(i),
                ..base.clone()
            };
            confound_experiment(&cfg, &r.cfg.scoring)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = |f: &dyn Fn(&crate::simulator::ConfoundReport) -> f64| {
        reports.iter().map(f).sum::<f64>() / reports.len() as f64
    };
    let summary = ConfoundSummary {
        runs: reports.len(),
        ee_gap_exceeds_full: reports.iter().filter(|x| x.ee_gap_exceeds_full).count(),
        mean_full_score_gap: mean(&|x| x.arms.full.score_gap),
        mean_equal_exposure_score_gap: mean(&|x| x.arms.equal_exposure.as_ref().map_or(f64::NAN, |e| e.score_gap)),
        mean_crh_gap_shift_pp: mean(&|x| x.crh_gap_shift_pp),
        pattern_holds: reports.iter().filter(|x| x.pattern_holds).count(),
    };
    r.out.write("confound.tsv", |w| {
        let mut t = csv::WriterBuilder::new().delimiter(b'\t').from_writer(w);
        t.write_record([
            "seed",
            "full_score_gap",
            "ee_score_gap",
            "full_crh_gap_pp",
            "neutral_crh_gap_pp",
            "crh_gap_shift_pp",
            "ee_gap_exceeds_full",
            "pattern_holds",
        ])?;
        for x in &reports {
            t.write_record([
                &x.seed.to_string(),
                &f6(x.arms.full.score_gap),
                &x.arms.equal_exposure.as_ref().map_or("NA".into(), |e| f6(e.score_gap)),
                &f6(x.arms.full.crh_gap_pp),
                &f6(x.timing_neutral.crh_gap_pp),
                &f6(x.crh_gap_shift_pp),
                &x.ee_gap_exceeds_full.to_string(),
                &x.pattern_holds.to_string(),
            ])?;
        }
        t.flush().map_err(csv_err)
    })?;
    #[derive(Serialize)]
    struct Section<'a> {
        summary: ConfoundSummary,
        runs: &'a [crate::simulator::ConfoundReport],
    }
    r.out.section(
        Command::Confound.name(),
        &Section {
            summary,
            runs: &reports,
        },
    )
}
