use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crowdnote::report::{run, Command, RunConfig, CONFIG_ENV, REPORT_FILE};
use crowdnote::scoring::Normalization;
use crowdnote::simulator::LagDist;

/// Bridging-score evaluation of community notes: scoring, equal-exposure
/// comparisons, regressions, descriptives and simulation.
#[derive(Parser, Debug)]
#[command(name = "crowdnote", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Load and filter the input tables.
    Ingest,
    /// Fit the bridging model and export note scores.
    Score,
    /// Build complete rater blocks and re-score on them.
    EqualExposure,
    /// Rating-level mixed models by rater ideology bucket.
    Table1,
    /// Note-level outcomes on the full and equal-exposure samples.
    Eq2,
    /// Topic and modality subgroup fits (needs --topic-labels).
    Subgroups,
    /// Head-to-head comparison of co-rated LLM and human notes.
    Pairwise,
    /// Ideology-bucket table, text profile, timing and writer percentiles.
    Descriptives,
    /// Note-level comparison on rating-count and timing-matched subsets.
    Robustness,
    /// Generate a synthetic corpus with known parameters.
    Simulate,
    /// Run the exposure-confound experiment on simulated corpora.
    Confound,
    /// Every analysis the inputs support; simulates a corpus without inputs.
    ReportAll,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Command {
        match c {
            Cmd::Ingest => Command::Ingest,
            Cmd::Score => Command::Score,
            Cmd::EqualExposure => Command::EqualExposure,
            Cmd::Table1 => Command::Table1,
            Cmd::Eq2 => Command::Eq2,
            Cmd::Subgroups => Command::Subgroups,
            Cmd::Pairwise => Command::Pairwise,
            Cmd::Descriptives => Command::Descriptives,
            Cmd::Robustness => Command::Robustness,
            Cmd::Simulate => Command::Simulate,
            Cmd::Confound => Command::Confound,
            Cmd::ReportAll => Command::ReportAll,
        }
    }
}

#[derive(Args, Debug)]
struct Opts {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    notes: Option<PathBuf>,
    #[arg(long, global = true)]
    ratings: Option<PathBuf>,
    #[arg(long, global = true)]
    raters: Option<PathBuf>,
    #[arg(long, global = true)]
    status_history: Option<PathBuf>,
    /// TSV with tweetId, topic and modality columns.
    #[arg(long, global = true)]
    topic_labels: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Seed for the scorer initialization and the simulator.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    factor_dim: Option<usize>,
    #[arg(long, global = true)]
    lambda_intercept: Option<f64>,
    #[arg(long, global = true)]
    lambda_factor: Option<f64>,
    #[arg(long, global = true)]
    crh_threshold: Option<f64>,
    #[arg(long, global = true)]
    crnh_threshold: Option<f64>,
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    #[arg(long, global = true)]
    convergence_tol: Option<f64>,
    /// Factor initializations tried by the scorer; the best fit is kept.
    #[arg(long, global = true)]
    n_inits: Option<usize>,
    #[arg(long, global = true, value_parser = ["sum", "per-rating"])]
    normalization: Option<String>,

    /// Rater factors below this are left-leaning.
    #[arg(long, global = true, allow_negative_numbers = true)]
    left_cut: Option<f64>,
    /// Rater factors above this are right-leaning.
    #[arg(long, global = true, allow_negative_numbers = true)]
    right_cut: Option<f64>,

    #[arg(long, global = true)]
    n_tweets: Option<usize>,
    #[arg(long, global = true)]
    n_raters: Option<usize>,
    #[arg(long, global = true)]
    notes_per_tweet: Option<usize>,
    /// Fixed delay between a post and its LLM note.
    #[arg(long, global = true)]
    llm_lag_hours: Option<f64>,
    #[arg(long, global = true)]
    horizon_hours: Option<f64>,
    /// Number of simulated corpora (consecutive seeds) in `confound`.
    #[arg(long, global = true)]
    confound_runs: Option<usize>,

    #[arg(long, global = true)]
    subgroup_min_ratings: Option<usize>,
    #[arg(long, global = true)]
    percentile_min_notes: Option<usize>,
    #[arg(long, global = true)]
    subject_writer: Option<String>,
    /// Keep media notes and ratings by raters without a profile.
    #[arg(long, global = true)]
    no_filters: bool,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn build_config(cli: Cli) -> crowdnote::Result<RunConfig> {
    let o = cli.opts;
    let mut c = match &o.config {
        Some(p) => RunConfig::from_toml_file(p)?,
        None => RunConfig::default(),
    };
    c.command = cli.command.into();
    let i = &mut c.inputs;
    for (slot, v) in [
        (&mut i.notes, o.notes),
        (&mut i.ratings, o.ratings),
        (&mut i.raters, o.raters),
        (&mut i.status_history, o.status_history),
        (&mut i.topic_labels, o.topic_labels),
    ] {
        if v.is_some() {
            *slot = v;
        }
    }
    set(&mut c.out_dir, o.out);
    if o.seed.is_some() {
        c.seed = o.seed;
    }

    let s = &mut c.scoring;
    set(&mut s.factor_dim, o.factor_dim);
    set(&mut s.lambda_intercept, o.lambda_intercept);
    set(&mut s.lambda_factor, o.lambda_factor);
    set(&mut s.crh_threshold, o.crh_threshold);
    set(&mut s.crnh_threshold, o.crnh_threshold);
    set(&mut s.max_iterations, o.max_iterations);
    set(&mut s.convergence_tol, o.convergence_tol);
    set(&mut s.n_inits, o.n_inits);
    set(
        &mut s.normalization,
        o.normalization.map(|n| match n.as_str() {
            "sum" => Normalization::Sum,
            _ => Normalization::PerRating,
        }),
    );

    set(&mut c.buckets.left_cut, o.left_cut);
    set(&mut c.buckets.right_cut, o.right_cut);

    let m = &mut c.simulation;
    set(&mut m.n_tweets, o.n_tweets);
    set(&mut m.n_raters, o.n_raters);
    set(&mut m.notes_per_tweet, o.notes_per_tweet);
    set(&mut m.llm_lag, o.llm_lag_hours.map(|hours| LagDist::Fixed { hours }));
    set(&mut m.horizon_hours, o.horizon_hours);

    let a = &mut c.analysis;
    set(&mut a.confound_runs, o.confound_runs);
    set(&mut a.subgroup_min_ratings, o.subgroup_min_ratings);
    set(&mut a.percentile_min_notes, o.percentile_min_notes);
    if o.subject_writer.is_some() {
        a.subject_writer = o.subject_writer;
    }
    if o.no_filters {
        a.apply_filters = false;
    }
    Ok(c)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build_config(cli).and_then(|cfg| run(&cfg).map(|o| (cfg, o)));
    match result {
        Ok((cfg, outcome)) => {
            for n in &outcome.notices {
                eprintln!("notice: {n}");
            }
            println!(
                "wrote {} files to {} (see {REPORT_FILE})",
                outcome.outputs.len() + 1,
                cfg.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("crowdnote: error: {e}");
            ExitCode::FAILURE
        }
    }
}
