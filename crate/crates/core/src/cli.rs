//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors. Output
//! files are written to a temporary file next to the target and renamed into
//! place. Reports are byte-identical for a given input regardless of the
//! number of worker threads.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::ingest;
use crate::metaeval::{self, ScoreSource};
use crate::metrics::{self, Metric, SentenceIndex, TokenCounter};
use crate::model::{
    attach_metric, validate_ratings, EvalItem, ParagraphInstance, RatingRecord, ScoreTable,
    SimConfig, UnitKey,
};
use crate::parabuild::{build_eval_items, build_paragraphs, group_units};
use crate::sampling;
use crate::sim;

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "PARAEVAL_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "paraeval",
    version,
    about = "Paragraph-level MT evaluation toolkit"
)]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a ratings file for duplicate keys, bad scores, and mixed score types.
    Validate {
        #[arg(long)]
        ratings: PathBuf,
    },
    /// Build k-sentence paragraph files from sentence ratings.
    BuildParagraphs {
        #[arg(long)]
        ratings: PathBuf,
        /// Paragraph sizes, e.g. `1-10` or `1,2,5`.
        #[arg(long, default_value = "1-10")]
        k: String,
        /// Output directory; one `paragraphs_kNN.jsonl` per k.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a training set from paragraph files.
    ExportTraining {
        #[arg(long, num_args = 1.., required = true)]
        paragraphs: Vec<PathBuf>,
        #[arg(long, value_enum)]
        strategy: Strategy,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value = "1-10")]
        ks: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score paragraphs with a built-in metric.
    Score {
        #[arg(long, num_args = 1.., required = true)]
        paragraphs: Vec<PathBuf>,
        #[arg(long, default_value = "bleu")]
        metric: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Direct)]
        mode: ModeArg,
        /// Sentence ratings, needed to recover aligned sentences.
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// Metric name written to the scores file (default `<metric>.<mode>`).
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Meta-evaluate metrics against the human paragraph scores.
    Metaeval(MetaevalArgs),
    /// Tie rates of human and metric scores.
    Ties {
        #[command(flatten)]
        inputs: MetricInputs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Token-length percentiles and truncation counts.
    Stats {
        #[arg(long, num_args = 1.., required = true)]
        paragraphs: Vec<PathBuf>,
        #[arg(long)]
        lengths: bool,
        #[arg(long, value_delimiter = ',', default_value = "25,50,75")]
        percentiles: Vec<f64>,
        #[arg(long)]
        truncation: bool,
        #[arg(long, default_value_t = 1024)]
        budget: usize,
        #[arg(long, value_enum, default_value_t = CounterArg::Whitespace)]
        counter: CounterArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correlation between direct and aligned-average scores.
    CompareModes {
        #[arg(long, num_args = 1.., required = true)]
        paragraphs: Vec<PathBuf>,
        /// Built-in metric to score both ways.
        #[arg(long, default_value = "bleu")]
        metric: String,
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// Precomputed direct scores (with --aligned, replaces built-in scoring).
        #[arg(long, requires = "aligned")]
        direct: Option<PathBuf>,
        #[arg(long, requires = "direct")]
        aligned: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the rater/metric noise simulator.
    Simulate {
        /// TOML file with the simulator parameters.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "1,2,5,10")]
        ks: String,
        #[arg(long, default_value_t = 50)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct MetricInputs {
    #[arg(long, num_args = 1.., required = true)]
    paragraphs: Vec<PathBuf>,
    /// External score files.
    #[arg(long, num_args = 1..)]
    scores: Vec<PathBuf>,
    /// Built-in metrics to score in-process.
    #[arg(long, num_args = 1..)]
    metric: Vec<String>,
    #[arg(long, value_enum, default_value_t = ModeArg::Direct)]
    mode: ModeArg,
    #[arg(long)]
    ratings: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct MetaevalArgs {
    #[command(flatten)]
    inputs: MetricInputs,
    #[arg(long, value_enum, default_value_t = Level::All)]
    level: Level,
    /// Also report segment accuracy at the optimized tie threshold.
    #[arg(long)]
    tau_opt: bool,
    /// Calibrate the threshold on this fraction of items and report on the rest.
    #[arg(long, requires = "tau_opt")]
    tau_heldout: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    pearson: bool,
    #[arg(long)]
    ties: bool,
    /// Report path prefix; writes `<prefix>.tsv` and `<prefix>.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Strategy {
    Uniform,
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Direct,
    Aligned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Level {
    System,
    Segment,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CounterArg {
    Whitespace,
    Chars,
}

impl From<CounterArg> for TokenCounter {
    fn from(c: CounterArg) -> Self {
        match c {
            CounterArg::Whitespace => TokenCounter::Whitespace,
            CounterArg::Chars => TokenCounter::Chars,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `a-b`, `a..b`, and comma lists of either into sorted distinct ks.
pub fn parse_k_list(list: &str) -> std::result::Result<Vec<usize>, String> {
    let mut ks = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let range = part.split_once("..").or_else(|| part.split_once('-'));
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid k {s:?} in {list:?}"))
        };
        match range {
            Some((a, b)) => {
                let (a, b) = (parse(a)?, parse(b)?);
                if a > b {
                    return Err(format!("empty k range {part:?}"));
                }
                ks.extend(a..=b);
            }
            None => ks.push(parse(part)?),
        }
    }
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 {
        return Err(format!("k list {list:?} must contain positive values"));
    }
    Ok(ks)
}

/// Runs the CLI with `argv` (program name first). Summaries go to `out`,
/// diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    0
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    1
                }
            };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker threads: {e}");
            return 2;
        }
    };
    // Output is buffered so the command can run on the pool's threads.
    let mut buf = Vec::new();
    let result = pool.install(|| dispatch(cli.command, &mut buf));
    let _ = out.write_all(&buf);
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "usage error: {msg}");
            1
        }
        Err(CliError::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Validate { ratings } => cmd_validate(&ratings, out),
        Command::BuildParagraphs {
            ratings,
            k,
            out: dir,
        } => {
            let ks = parse_k_list(&k).map_err(usage)?;
            cmd_build(&ratings, &ks, &dir, out)
        }
        Command::ExportTraining {
            paragraphs,
            strategy,
            size,
            ks,
            seed,
            out: path,
        } => {
            let ks = parse_k_list(&ks).map_err(usage)?;
            cmd_export(&paragraphs, strategy, size, &ks, seed, &path, out)
        }
        Command::Score {
            paragraphs,
            metric,
            mode,
            ratings,
            name,
            out: path,
        } => cmd_score(
            &paragraphs,
            &metric,
            mode,
            ratings.as_deref(),
            name,
            &path,
            out,
        ),
        Command::Metaeval(args) => cmd_metaeval(&args, out),
        Command::Ties { inputs, out: path } => {
            let args = MetaevalArgs {
                inputs,
                level: Level::All,
                tau_opt: false,
                tau_heldout: None,
                seed: 0,
                pearson: false,
                ties: true,
                out: path,
            };
            run_metaeval(&args, false, out)
        }
        Command::Stats {
            paragraphs,
            lengths,
            percentiles,
            truncation,
            budget,
            counter,
            out: path,
        } => cmd_stats(
            &paragraphs,
            lengths,
            &percentiles,
            truncation,
            budget,
            counter.into(),
            path.as_deref(),
            out,
        ),
        Command::CompareModes {
            paragraphs,
            metric,
            ratings,
            direct,
            aligned,
            out: path,
        } => cmd_compare(
            &paragraphs,
            &metric,
            ratings.as_deref(),
            direct.zip(aligned),
            path.as_deref(),
            out,
        ),
        Command::Simulate {
            config,
            ks,
            seeds,
            out: path,
        } => {
            let ks = parse_k_list(&ks).map_err(usage)?;
            cmd_simulate(&config, &ks, seeds, path.as_deref(), out)
        }
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(
    path: &Path,
    write: impl FnOnce(&mut dyn Write) -> crate::Result<()>,
) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let file_err = |source| {
        CliError::Data(Error::File {
            path: path.to_path_buf(),
            source,
        })
    };
    let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(file_err)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| file_err(e.error))?;
    Ok(())
}

fn load_ratings(path: &Path) -> CliResult<Vec<RatingRecord>> {
    Ok(ingest::parse_ratings(ingest::open_input(path)?)?)
}

/// Paragraph files; a directory stands for its `*.jsonl[.gz]` files.
fn paragraph_files(paths: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|source| Error::File {
                    path: p.clone(),
                    source,
                })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let name = f.to_string_lossy();
                    name.ends_with(".jsonl") || name.ends_with(".jsonl.gz")
                })
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn load_paragraphs(paths: &[PathBuf]) -> CliResult<Vec<ParagraphInstance>> {
    let mut all = Vec::new();
    for f in paragraph_files(paths)? {
        let ps = ingest::read_paragraphs(ingest::open_input(&f)?).map_err(|e| Error::File {
            path: f.clone(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
        })?;
        all.extend(ps);
    }
    Ok(all)
}

fn load_scores(paths: &[PathBuf]) -> CliResult<Vec<ScoreTable>> {
    let mut tables = Vec::new();
    for p in paths {
        let ts =
            ingest::parse_external_scores(ingest::open_input(p)?).map_err(|e| Error::File {
                path: p.clone(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
            })?;
        tables.extend(ts);
    }
    Ok(tables)
}

fn cmd_validate(path: &Path, out: &mut dyn Write) -> CliResult<()> {
    let records = ingest::read_ratings(ingest::open_input(path)?)?;
    let report = validate_ratings(&records);
    writeln!(
        out,
        "{} records, {} errors, {} warnings",
        records.len(),
        report.errors.len(),
        report.warnings.len()
    )?;
    for e in &report.errors {
        writeln!(out, "error: {e}")?;
    }
    for w in &report.warnings {
        writeln!(out, "warning: {w}")?;
    }
    if report.is_ok() {
        Ok(())
    } else {
        Err(Error::Validation(report).into())
    }
}

fn cmd_build(ratings: &Path, ks: &[usize], dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let records = load_ratings(ratings)?;
    fs::create_dir_all(dir).map_err(|source| Error::File {
        path: dir.to_path_buf(),
        source,
    })?;
    for &k in ks {
        let paragraphs = build_paragraphs(&records, k)?;
        let path = dir.join(format!("paragraphs_k{k:02}.jsonl"));
        write_atomic(&path, |w| ingest::write_paragraphs(w, &paragraphs))?;
        let units = group_units(&paragraphs);
        if units.is_empty() {
            writeln!(out, "k={k}\t0 paragraphs")?;
        }
        for (unit, ps) in &units {
            writeln!(
                out,
                "{}\t{}\tk={}\t{} paragraphs",
                unit.dataset_id,
                unit.lang_pair,
                unit.k,
                ps.len()
            )?;
        }
    }
    Ok(())
}

fn cmd_export(
    paths: &[PathBuf],
    strategy: Strategy,
    size: usize,
    ks: &[usize],
    seed: u64,
    dest: &Path,
    out: &mut dyn Write,
) -> CliResult<()> {
    let pool: Vec<ParagraphInstance> = load_paragraphs(paths)?
        .into_iter()
        .filter(|p| ks.contains(&p.k))
        .collect();
    let picked = match strategy {
        Strategy::Uniform => sampling::sample_uniform(&pool, size, seed)?,
        Strategy::Stratified => sampling::sample_stratified(&pool, size, ks, seed)?,
    };
    write_atomic(dest, |w| ingest::write_paragraphs(w, &picked))?;
    let mut per_k: BTreeMap<usize, usize> = BTreeMap::new();
    for p in &picked {
        *per_k.entry(p.k).or_default() += 1;
    }
    for (k, n) in per_k {
        writeln!(out, "k={k}\t{n} paragraphs")?;
    }
    Ok(())
}

fn builtin_metric(name: &str) -> CliResult<Metric> {
    match Metric::parse(name) {
        Metric::External(n) => Err(usage(format!(
            "unknown built-in metric {n:?} (expected bleu or sentbleu; load external metrics with --scores)"
        ))),
        m => Ok(m),
    }
}

fn score_unit(
    metric: &Metric,
    mode: ModeArg,
    paragraphs: &[ParagraphInstance],
    sentences: Option<&SentenceIndex<'_>>,
) -> CliResult<ScoreTable> {
    match mode {
        ModeArg::Direct => Ok(metrics::score_direct(metric, paragraphs)?),
        ModeArg::Aligned => {
            let index = sentences.ok_or_else(|| usage("--mode aligned needs --ratings"))?;
            Ok(metrics::score_aligned_avg(metric, paragraphs, index)?)
        }
    }
}

fn mode_suffix(mode: ModeArg) -> &'static str {
    match mode {
        ModeArg::Direct => "direct",
        ModeArg::Aligned => "aligned",
    }
}

fn cmd_score(
    paths: &[PathBuf],
    metric: &str,
    mode: ModeArg,
    ratings: Option<&Path>,
    name: Option<String>,
    dest: &Path,
    out: &mut dyn Write,
) -> CliResult<()> {
    let metric = builtin_metric(metric)?;
    if mode == ModeArg::Aligned && ratings.is_none() {
        return Err(usage("--mode aligned needs --ratings"));
    }
    let records = ratings.map(load_ratings).transpose()?.unwrap_or_default();
    let index = SentenceIndex::new(&records);
    let paragraphs = load_paragraphs(paths)?;
    let name = name.unwrap_or_else(|| format!("{}.{}", metric.name(), mode_suffix(mode)));

    // Score files carry no dataset column, so (lang_pair, k) must be unique.
    let mut tables: BTreeMap<(String, usize), ScoreTable> = BTreeMap::new();
    for (unit, ps) in group_units(&paragraphs) {
        let mut table = score_unit(&metric, mode, &ps, Some(&index))?;
        table.metric_name = name.clone();
        writeln!(out, "{unit}\t{} paragraphs scored", table.len())?;
        if tables
            .insert((unit.lang_pair.clone(), unit.k), table)
            .is_some()
        {
            return Err(usage(format!(
                "several datasets share {} k={}; score them separately",
                unit.lang_pair, unit.k
            )));
        }
    }
    let tables: Vec<ScoreTable> = tables.into_values().collect();
    write_atomic(dest, |w| ingest::write_scores(w, &tables))?;
    Ok(())
}

/// One report row.
#[derive(Debug, Clone, Serialize)]
struct Row {
    dataset: String,
    lang_pair: String,
    k: usize,
    metric: String,
    mode: String,
    statistic: String,
    value: Option<f64>,
    epsilon: Option<f64>,
}

impl Row {
    fn new(unit: &UnitKey, metric: &str, mode: &str, statistic: &str, value: Option<f64>) -> Self {
        Row {
            dataset: unit.dataset_id.clone(),
            lang_pair: unit.lang_pair.clone(),
            k: unit.k,
            metric: metric.to_string(),
            mode: mode.to_string(),
            statistic: statistic.to_string(),
            value,
            epsilon: None,
        }
    }

    fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }
}

const REPORT_HEADER: &str = "dataset\tlang_pair\tk\tmetric\tmode\tstatistic\tvalue\tepsilon";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

fn write_tsv(w: &mut dyn Write, rows: &[Row]) -> crate::Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.dataset,
            r.lang_pair,
            r.k,
            r.metric,
            r.mode,
            r.statistic,
            fmt_opt(r.value),
            r.epsilon.map(|e| e.to_string()).unwrap_or_default()
        )?;
    }
    Ok(())
}

fn write_jsonl(w: &mut dyn Write, rows: &[Row]) -> crate::Result<()> {
    for r in rows {
        serde_json::to_writer(&mut *w, r).map_err(std::io::Error::from)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Writes `<prefix>.tsv` and `<prefix>.jsonl` and prints the per-unit
/// summaries, or prints only the TSV when no prefix is given.
fn emit_report(
    rows: &[Row],
    summaries: &[String],
    prefix: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    match prefix {
        Some(prefix) => {
            for line in summaries {
                writeln!(out, "{line}")?;
            }
            let with_ext = |ext: &str| {
                let mut s = prefix.as_os_str().to_owned();
                s.push(ext);
                PathBuf::from(s)
            };
            write_atomic(&with_ext(".tsv"), |w| write_tsv(w, rows))?;
            write_atomic(&with_ext(".jsonl"), |w| write_jsonl(w, rows))?;
            Ok(())
        }
        None => Ok(write_tsv(out, rows)?),
    }
}

fn stat_value(result: crate::Result<f64>) -> Option<f64> {
    result.ok()
}

/// Metric tables for one unit: external tables matching its language pair
/// and k, then the requested built-in metrics.
fn unit_tables(
    unit: &UnitKey,
    paragraphs: &[ParagraphInstance],
    external: &[ScoreTable],
    builtins: &[Metric],
    mode: ModeArg,
    sentences: Option<&SentenceIndex<'_>>,
) -> CliResult<Vec<ScoreTable>> {
    let mut tables: Vec<ScoreTable> = external
        .iter()
        .filter(|t| t.lang_pair == unit.lang_pair && t.k == unit.k)
        .cloned()
        .collect();
    for m in builtins {
        let mut table = score_unit(m, mode, paragraphs, sentences)?;
        table.metric_name = format!("{}.{}", m.name(), mode_suffix(mode));
        tables.push(table);
    }
    Ok(tables)
}

fn cmd_metaeval(args: &MetaevalArgs, out: &mut dyn Write) -> CliResult<()> {
    if let Some(f) = args.tau_heldout {
        if !(f > 0.0 && f < 1.0) {
            return Err(usage("--tau-heldout must be in (0, 1)"));
        }
    }
    run_metaeval(args, true, out)
}

fn run_metaeval(args: &MetaevalArgs, accuracies: bool, out: &mut dyn Write) -> CliResult<()> {
    let inputs = &args.inputs;
    let builtins: Vec<Metric> = inputs
        .metric
        .iter()
        .map(|m| builtin_metric(m))
        .collect::<CliResult<_>>()?;
    if inputs.mode == ModeArg::Aligned && !builtins.is_empty() && inputs.ratings.is_none() {
        return Err(usage("--mode aligned needs --ratings"));
    }
    let records = inputs
        .ratings
        .as_deref()
        .map(load_ratings)
        .transpose()?
        .unwrap_or_default();
    let index = SentenceIndex::new(&records);
    let paragraphs = load_paragraphs(&inputs.paragraphs)?;
    let external = load_scores(&inputs.scores)?;

    let system_level = accuracies && args.level != Level::Segment;
    let segment_level = accuracies && args.level != Level::System;
    let (mut rows, mut summaries) = (Vec::new(), Vec::new());
    for (unit, ps) in group_units(&paragraphs) {
        let human = ScoreTable::from_human(&ps)?;
        let items = build_eval_items(&ps, unit.k)?;
        let mut unit_rows = Vec::new();
        if args.ties {
            unit_rows.push(Row::new(
                &unit,
                "human",
                "human",
                "tie_rate",
                metaeval::tie_rate(&items, ScoreSource::Human),
            ));
        }
        for table in unit_tables(&unit, &ps, &external, &builtins, inputs.mode, Some(&index))? {
            let (name, mode) = (table.metric_name.clone(), table.mode.to_string());
            let row = |stat: &str, v: Option<f64>| Row::new(&unit, &name, &mode, stat, v);
            let covered = table.filtered(|s, i| human.contains(s, i));
            let scored = attach_metric(&items, &covered);
            if system_level {
                let v = metaeval::system_scores(&covered).and_then(|m| {
                    let h =
                        metaeval::system_scores(&human.filtered(|s, i| covered.contains(s, i)))?;
                    metaeval::system_pairwise_accuracy(&m, &h)
                });
                unit_rows.push(row("system_accuracy", stat_value(v)));
            }
            if segment_level {
                unit_rows.push(
                    row(
                        "segment_accuracy",
                        stat_value(metaeval::segment_accuracy(&scored, 0.0)),
                    )
                    .with_epsilon(0.0),
                );
                if args.tau_opt {
                    unit_rows.push(tau_row(&scored, args, &row)?);
                }
            }
            if args.pearson {
                unit_rows.push(row(
                    "pearson_no_grouping",
                    stat_value(metaeval::pearson_no_grouping(&covered, &human)),
                ));
            }
            if args.ties {
                unit_rows.push(row(
                    "tie_rate",
                    metaeval::tie_rate(&scored, ScoreSource::Metric),
                ));
            }
        }
        let summary: Vec<String> = unit_rows
            .iter()
            .map(|r| {
                format!(
                    "{}/{} {}={}",
                    r.metric,
                    r.mode,
                    r.statistic,
                    fmt_opt(r.value)
                )
            })
            .collect();
        summaries.push(format!(
            "{unit}: {} items; {}",
            items.len(),
            summary.join(", ")
        ));
        rows.extend(unit_rows);
    }
    emit_report(&rows, &summaries, args.out.as_deref(), out)
}

fn tau_row(
    scored: &[EvalItem],
    args: &MetaevalArgs,
    row: &dyn Fn(&str, Option<f64>) -> Row,
) -> CliResult<Row> {
    let r = match args.tau_heldout {
        None => match metaeval::tau_optimize(scored) {
            Ok(cal) => {
                row("segment_accuracy_tau", Some(cal.accuracy_at_epsilon)).with_epsilon(cal.epsilon)
            }
            Err(_) => row("segment_accuracy_tau", None),
        },
        Some(frac) => {
            let (calib, eval) = metaeval::split_items(scored, frac, args.seed)?;
            match metaeval::tau_optimize(&calib) {
                Ok(cal) => row(
                    "segment_accuracy_tau_heldout",
                    stat_value(metaeval::segment_accuracy(&eval, cal.epsilon)),
                )
                .with_epsilon(cal.epsilon),
                Err(_) => row("segment_accuracy_tau_heldout", None),
            }
        }
    };
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
fn cmd_stats(
    paths: &[PathBuf],
    lengths: bool,
    percentiles: &[f64],
    truncation: bool,
    budget: usize,
    counter: TokenCounter,
    prefix: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    if !lengths && !truncation {
        return Err(usage("choose at least one of --lengths and --truncation"));
    }
    if let Some(p) = percentiles.iter().find(|p| !(**p > 0.0 && **p < 100.0)) {
        return Err(usage(format!("percentile {p} is outside (0, 100)")));
    }
    if budget == 0 {
        return Err(usage("--budget must be at least 1"));
    }
    let counter_name = match counter {
        TokenCounter::Whitespace => "whitespace",
        TokenCounter::Chars => "chars",
    };
    let paragraphs = load_paragraphs(paths)?;
    let (mut rows, mut summaries) = (Vec::new(), Vec::new());
    for (unit, ps) in group_units(&paragraphs) {
        let row = |stat: String, v: f64| Row::new(&unit, "tokens", counter_name, &stat, Some(v));
        rows.push(row("n_paragraphs".into(), ps.len() as f64));
        if lengths {
            let table = metrics::length_percentiles(&ps, counter, percentiles)?;
            for (p, v) in percentiles.iter().zip(&table[&unit.k]) {
                rows.push(row(format!("hyp_length_p{p}"), *v as f64));
            }
        }
        if truncation {
            let t = metrics::truncation_stats(&ps, counter, budget)?[&unit.k];
            rows.push(row(format!("truncated_count@{budget}"), t.truncated as f64));
            rows.push(row(format!("truncated_fraction@{budget}"), t.fraction));
            summaries.push(format!(
                "{unit}: {} of {} paragraphs exceed {budget} tokens",
                t.truncated, t.total
            ));
        } else {
            summaries.push(format!("{unit}: {} paragraphs", ps.len()));
        }
    }
    emit_report(&rows, &summaries, prefix, out)
}

fn cmd_compare(
    paths: &[PathBuf],
    metric: &str,
    ratings: Option<&Path>,
    precomputed: Option<(PathBuf, PathBuf)>,
    prefix: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let paragraphs = load_paragraphs(paths)?;
    let (mut rows, mut summaries) = (Vec::new(), Vec::new());
    match precomputed {
        Some((direct, aligned)) => {
            let direct = load_scores(&[direct])?;
            let aligned = load_scores(&[aligned])?;
            for (unit, _) in group_units(&paragraphs) {
                let pick = |ts: &[ScoreTable]| {
                    ts.iter()
                        .find(|t| t.lang_pair == unit.lang_pair && t.k == unit.k)
                        .cloned()
                };
                if let (Some(d), Some(a)) = (pick(&direct), pick(&aligned)) {
                    let v = metaeval::mode_correlation(&d, &a)?;
                    summaries.push(format!(
                        "{unit}: {} vs {} pearson={v}",
                        d.metric_name, a.metric_name
                    ));
                    rows.push(Row::new(
                        &unit,
                        &d.metric_name,
                        "direct_vs_aligned",
                        "mode_correlation",
                        Some(v),
                    ));
                }
            }
        }
        None => {
            let metric = builtin_metric(metric)?;
            let ratings = ratings
                .ok_or_else(|| usage("compare-modes needs --ratings or --direct/--aligned"))?;
            let records = load_ratings(ratings)?;
            let index = SentenceIndex::new(&records);
            for (unit, ps) in group_units(&paragraphs) {
                let d = metrics::score_direct(&metric, &ps)?;
                let a = metrics::score_aligned_avg(&metric, &ps, &index)?;
                let v = stat_value(metaeval::mode_correlation(&d, &a));
                summaries.push(format!("{unit}: {} pearson={}", metric.name(), fmt_opt(v)));
                rows.push(Row::new(
                    &unit,
                    metric.name(),
                    "direct_vs_aligned",
                    "mode_correlation",
                    v,
                ));
            }
        }
    }
    emit_report(&rows, &summaries, prefix, out)
}

fn cmd_simulate(
    config: &Path,
    ks: &[usize],
    seeds: usize,
    prefix: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let text = fs::read_to_string(config).map_err(|source| Error::File {
        path: config.to_path_buf(),
        source,
    })?;
    let cfg: SimConfig = toml::from_str(&text).map_err(|e| {
        CliError::Data(Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            reason: e.message().to_string(),
        })
    })?;
    let curve = sim::noise_curve(&cfg, ks, seeds)?;
    let (mut rows, mut summaries) = (Vec::new(), Vec::new());
    for p in &curve {
        let unit = UnitKey {
            dataset_id: "simulated".into(),
            lang_pair: "-".into(),
            k: p.k,
        };
        summaries.push(format!("k={}\tmean={}\tstd={}", p.k, p.mean, p.std_dev));
        rows.push(
            Row::new(
                &unit,
                "simulated",
                "-",
                "segment_accuracy_mean",
                Some(p.mean),
            )
            .with_epsilon(0.0),
        );
        rows.push(
            Row::new(
                &unit,
                "simulated",
                "-",
                "segment_accuracy_std",
                Some(p.std_dev),
            )
            .with_epsilon(0.0),
        );
    }
    emit_report(&rows, &summaries, prefix, out)
}
