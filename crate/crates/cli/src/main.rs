mod config;
mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use zipfvocab::bias::{bias_report, unigram_performance, write_performance_tsv};
use zipfvocab::bpe::io::{load_vocabulary, write_encoded_ids, write_encoded_text, write_merges, write_vocab};
use zipfvocab::bpe::{char_vocab, encode_corpus, learn_bpe, recount, word_vocab, WordCounts};
use zipfvocab::corpus::{clean, load_corpus, load_monolingual, read_sentences, CleanConfig, TextEncoding};
use zipfvocab::metrics::{class_distribution, imbalance_stats, ClassDistribution, StatsRecord, DEFAULT_PERCENTILE};
use zipfvocab::sweep::{
    default_schedule, plan_sweep, read_sweep_csv, recommend, render_svg, run_sweep, write_sweep_csv, ScheduleEntry,
    SweepConfig, DEFAULT_THRESHOLD,
};
use zipfvocab::{KConvention, Mode, Scheme, Sentence, Vocabulary};

use output::Sink;

/// Subword vocabularies and the class-imbalance statistics that guide their size.
#[derive(Parser, Debug)]
#[command(name = "zipfvocab", version, propagate_version = true)]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "ZIPFVOCAB_THREADS")]
    threads: Option<usize>,

    /// JSON object of flag values; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Text encoding of every input corpus.
    #[arg(long, global = true, value_enum, default_value_t = EncodingArg::Utf8)]
    encoding: EncodingArg,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Drop empty, URL-bearing and length-mismatched sentence pairs.
    Clean(CleanArgs),
    /// Build a char, word or BPE vocabulary from a corpus.
    Learn(LearnArgs),
    /// Encode a corpus with an existing vocabulary.
    Apply(ApplyArgs),
    /// Class-imbalance statistics (K, N, D, F_P, mu) of one encoding.
    Stats(StatsArgs),
    /// Statistics across a grid of vocabulary sizes.
    Sweep(SweepArgs),
    /// Pick a vocabulary size from a sweep CSV.
    Recommend(RecommendArgs),
    /// Per-class precision/recall of translations and their correlation with frequency rank.
    Bias(BiasArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EncodingArg {
    Utf8,
    Latin1,
}

impl From<EncodingArg> for TextEncoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::Utf8 => TextEncoding::Utf8,
            EncodingArg::Latin1 => TextEncoding::Latin1,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    /// Longest vocabulary match from the left of each word.
    GreedyLongest,
    /// Replay the learned merges in rank order.
    MergeOrder,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::GreedyLongest => Mode::GreedyLongest,
            ModeArg::MergeOrder => Mode::MergeOrder,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Char,
    Word,
    Bpe,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StatsFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EncodedFormat {
    /// Space-separated surfaces, one sentence per line.
    Text,
    /// Little-endian u32 ids; 0xFFFFFFFF ends each sentence.
    Ids,
}

#[derive(Args, Debug)]
struct CleanArgs {
    /// Source side, one sentence per line.
    #[arg(long)]
    source: PathBuf,
    /// Target side, line-aligned with the source.
    #[arg(long)]
    target: PathBuf,
    /// Where the kept source sentences go.
    #[arg(long)]
    out_source: PathBuf,
    /// Where the kept target sentences go.
    #[arg(long)]
    out_target: PathBuf,
    /// Drop pairs whose longer side has more than this many times the other's
    /// words.
    #[arg(long, default_value_t = zipfvocab::corpus::DEFAULT_MAX_RATIO)]
    max_ratio: f64,
    /// Keep pairs containing URLs (dropped by default).
    #[arg(long)]
    keep_urls: bool,
    /// Where to write the JSON removal report; stdout by default.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LearnArgs {
    /// Training corpus, one sentence per line.
    #[arg(long)]
    input: PathBuf,
    /// Characters, whole words, or BPE subwords.
    #[arg(long, value_enum, default_value_t = SchemeArg::Bpe)]
    scheme: SchemeArg,
    /// Number of BPE merge operations.
    #[arg(long, conflicts_with = "vocab_size")]
    merge_ops: Option<usize>,
    /// Target class count; the merge count is solved for.
    #[arg(long)]
    vocab_size: Option<usize>,
    /// Vocabulary TSV (id, surface, frequency, kind).
    #[arg(long)]
    vocab_out: PathBuf,
    /// Merges file, one rule per line in rank order.
    #[arg(long)]
    merges_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VocabArgs {
    /// Vocabulary TSV written by `learn`.
    #[arg(long)]
    vocab: PathBuf,
    /// Merges file written by `learn`; needed for BPE in merge-order mode.
    #[arg(long)]
    merges: Option<PathBuf>,
}

impl VocabArgs {
    fn load(&self) -> Result<Vocabulary> {
        Ok(load_vocabulary(&self.vocab, self.merges.as_deref())?)
    }
}

#[derive(Args, Debug)]
struct ApplyArgs {
    /// Corpus to encode.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    vocab: VocabArgs,
    /// How words are segmented into vocabulary entries.
    #[arg(long, value_enum, default_value_t = ModeArg::GreedyLongest)]
    mode: ModeArg,
    /// Surface text or binary class ids.
    #[arg(long, value_enum, default_value_t = EncodedFormat::Text)]
    format: EncodedFormat,
    /// Output path; stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StatArgs {
    /// Percentile P for F_P.
    #[arg(long, default_value_t = DEFAULT_PERCENTILE)]
    percentile: f64,
    /// Count only classes that occur; by default every vocabulary entry is a class.
    #[arg(long)]
    observed_only: bool,
    /// How words are segmented into vocabulary entries.
    #[arg(long, value_enum, default_value_t = ModeArg::GreedyLongest)]
    mode: ModeArg,
}

impl StatArgs {
    fn convention(&self) -> KConvention {
        if self.observed_only {
            KConvention::Observed
        } else {
            KConvention::Vocabulary
        }
    }
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Target-side corpus whose encoding is measured.
    #[arg(long)]
    target: PathBuf,
    /// Scheme to build from the corpus when no vocabulary is given.
    #[arg(long, value_enum, default_value_t = SchemeArg::Bpe)]
    scheme: SchemeArg,
    /// Merge operations when learning BPE on the fly.
    #[arg(long)]
    merge_ops: Option<usize>,
    /// Use an existing vocabulary instead of building one.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Merges file to go with `--vocab`.
    #[arg(long, requires = "vocab")]
    merges: Option<PathBuf>,
    #[command(flatten)]
    stat: StatArgs,
    /// One CSV row with a header, or a JSON object.
    #[arg(long, value_enum, default_value_t = StatsFormat::Csv)]
    format: StatsFormat,
    /// Output path; stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Target-side corpus.
    #[arg(long)]
    target: PathBuf,
    /// Comma-separated grid: `char`, `word`, `m<N>` for N merges, or a
    /// vocabulary size such as `8000` or `8k`. Defaults to
    /// char, 500, 1k, 2k, 4k, 8k, 16k, 32k, 64k.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<ScheduleEntry>,
    #[command(flatten)]
    stat: StatArgs,
    /// Also emit a recommendation.
    #[arg(long)]
    recommend: bool,
    /// Minimum F_P for a size to qualify.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u64,
    /// CSV output; stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Recommendation JSON; stdout by default.
    #[arg(long, requires = "recommend")]
    recommend_out: Option<PathBuf>,
    /// Also draw mu, D and log10 F_P against K as SVG.
    #[arg(long)]
    chart: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RecommendArgs {
    /// CSV written by `sweep` or `stats`.
    #[arg(long)]
    points: PathBuf,
    /// Minimum F_P for a size to qualify.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u64,
    /// Percentile the points were computed at.
    #[arg(long, default_value_t = DEFAULT_PERCENTILE)]
    percentile: f64,
    /// Recommendation JSON; stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BiasArgs {
    /// System translations, one per line.
    #[arg(long)]
    hyp: PathBuf,
    /// References, line-aligned with the hypotheses.
    #[arg(long = "ref")]
    reference: PathBuf,
    #[command(flatten)]
    vocab: VocabArgs,
    /// Training corpus to rank classes by; defaults to the vocabulary's frequency column.
    #[arg(long)]
    train: Option<PathBuf>,
    /// How words are segmented into vocabulary entries.
    #[arg(long, value_enum, default_value_t = ModeArg::GreedyLongest)]
    mode: ModeArg,
    /// Minimum number of sentences a class must appear in to enter a correlation.
    #[arg(long, default_value_t = 1)]
    min_support: usize,
    /// Count only classes that occur in training when computing D.
    #[arg(long)]
    observed_only: bool,
    /// Per-class TSV; stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary; stdout by default.
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

/// Bad flag values or combinations; exit status 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<OsString> = std::env::args_os().collect();
    let args = match config::expand(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

/// A closed stdout (e.g. piping into `head`) is not worth reporting.
fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let kind = match (c.downcast_ref::<std::io::Error>(), c.downcast_ref::<serde_json::Error>()) {
            (Some(io), _) => Some(io.kind()),
            (_, Some(json)) => json.io_error_kind(),
            _ => None,
        };
        kind == Some(std::io::ErrorKind::BrokenPipe)
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the worker pool")?;
    }
    let encoding = TextEncoding::from(cli.encoding);
    match cli.command {
        Command::Clean(a) => cmd_clean(a, encoding),
        Command::Learn(a) => cmd_learn(a, encoding),
        Command::Apply(a) => cmd_apply(a, encoding),
        Command::Stats(a) => cmd_stats(a, encoding),
        Command::Sweep(a) => cmd_sweep(a, encoding),
        Command::Recommend(a) => cmd_recommend(a),
        Command::Bias(a) => cmd_bias(a, encoding),
    }
}

fn write_json<T: Serialize>(sink: &Sink, value: &T) -> Result<()> {
    sink.write(|w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

fn write_lines(path: &Path, sentences: impl Iterator<Item = String>) -> Result<()> {
    output::write_atomic(path, |w| {
        for s in sentences {
            writeln!(w, "{s}")?;
        }
        Ok(())
    })
}

fn check_percentile(p: f64) -> Result<()> {
    if p > 0.0 && p <= 100.0 {
        Ok(())
    } else {
        Err(usage(format!("--percentile must be in (0, 100], got {p}")))
    }
}

fn cmd_clean(a: CleanArgs, encoding: TextEncoding) -> Result<()> {
    if a.max_ratio.is_nan() || a.max_ratio < 1.0 {
        return Err(usage(format!("--max-ratio must be at least 1, got {}", a.max_ratio)));
    }
    let corpus = load_corpus(&a.source, &a.target, encoding)?;
    let config = CleanConfig { max_ratio: a.max_ratio, drop_urls: !a.keep_urls };
    let (kept, report) = clean(&corpus, &config)?;
    write_lines(&a.out_source, kept.pairs.iter().map(|p| p.source.text()))?;
    write_lines(&a.out_target, kept.pairs.iter().map(|p| p.target.text()))?;
    log::info!("kept {} of {} pairs", report.kept, report.input);
    write_json(&Sink::from_arg(a.report.as_deref()), &report)
}

fn build_vocab(
    corpus: &[Sentence],
    scheme: SchemeArg,
    merge_ops: Option<usize>,
    vocab_size: Option<usize>,
) -> Result<Vocabulary> {
    match scheme {
        SchemeArg::Char => Ok(char_vocab(corpus)?),
        SchemeArg::Word => Ok(word_vocab(corpus)?),
        SchemeArg::Bpe => match (merge_ops, vocab_size) {
            (Some(m), _) => Ok(learn_bpe(corpus, m)?),
            (None, Some(k)) => {
                let entry = ScheduleEntry::VocabSize(k);
                let planned = plan_sweep(corpus, &[entry])?.remove(0);
                for w in &planned.warnings {
                    log::warn!("{w}");
                }
                Ok(recount(planned.vocab, &WordCounts::from_sentences(corpus)))
            }
            (None, None) => Err(usage("BPE needs --merge-ops or --vocab-size")),
        },
    }
}

fn cmd_learn(a: LearnArgs, encoding: TextEncoding) -> Result<()> {
    if a.scheme != SchemeArg::Bpe && (a.merge_ops.is_some() || a.vocab_size.is_some()) {
        return Err(usage("--merge-ops and --vocab-size apply to --scheme bpe only"));
    }
    let corpus = load_monolingual(&a.input, encoding)?;
    let vocab = build_vocab(&corpus, a.scheme, a.merge_ops, a.vocab_size)?;
    eprintln!("{} vocabulary: {} classes, {} merges", vocab.scheme(), vocab.num_classes(), vocab.merges().len());
    output::write_atomic(&a.vocab_out, |w| Ok(write_vocab(&vocab, w)?))?;
    if let Some(path) = &a.merges_out {
        output::write_atomic(path, |w| Ok(write_merges(&vocab, w)?))?;
    }
    Ok(())
}

fn cmd_apply(a: ApplyArgs, encoding: TextEncoding) -> Result<()> {
    let vocab = a.vocab.load()?;
    let corpus = read_sentences(&a.input, encoding)?;
    let encoded = encode_corpus(&corpus, &vocab, a.mode.into());
    Sink::from_arg(a.out.as_deref()).write(|w| {
        match a.format {
            EncodedFormat::Text => write_encoded_text(&encoded, &vocab, w)?,
            EncodedFormat::Ids => write_encoded_ids(&encoded, w)?,
        }
        Ok(())
    })
}

fn cmd_stats(a: StatsArgs, encoding: TextEncoding) -> Result<()> {
    check_percentile(a.stat.percentile)?;
    let corpus = load_monolingual(&a.target, encoding)?;
    let vocab = match &a.vocab {
        Some(path) => load_vocabulary(path, a.merges.as_deref())?,
        None => build_vocab(&corpus, a.scheme, a.merge_ops, None)?,
    };
    let encoded = encode_corpus(&corpus, &vocab, a.stat.mode.into());
    let stats = imbalance_stats(&encoded, &vocab, a.stat.percentile, a.stat.convention(), None)?;
    let merge_ops = (vocab.scheme() == Scheme::Bpe).then(|| vocab.merges().len());
    let record = StatsRecord::new(vocab.scheme(), merge_ops, &stats);
    let sink = Sink::from_arg(a.out.as_deref());
    match a.format {
        StatsFormat::Csv => sink.write(|w| Ok(record.write_csv(w)?)),
        StatsFormat::Json => write_json(&sink, &record),
    }
}

fn cmd_sweep(a: SweepArgs, encoding: TextEncoding) -> Result<()> {
    check_percentile(a.stat.percentile)?;
    let corpus = load_monolingual(&a.target, encoding)?;
    let schedule = if a.sizes.is_empty() { default_schedule() } else { a.sizes.clone() };
    let config =
        SweepConfig { mode: a.stat.mode.into(), percentile: a.stat.percentile, convention: a.stat.convention() };
    let points = run_sweep(&corpus, &schedule, &config)?;
    for p in &points {
        for w in &p.warnings {
            log::warn!("{} {:?}: {w}", p.scheme, p.merge_ops);
        }
    }

    let csv_sink = Sink::from_arg(a.out.as_deref());
    csv_sink.write(|w| Ok(write_sweep_csv(&points, w)?))?;
    if a.recommend {
        let rec = recommend(&points, a.threshold, a.stat.percentile)?;
        let json_sink = Sink::from_arg(a.recommend_out.as_deref());
        if csv_sink.is_stdout() && json_sink.is_stdout() {
            println!();
        }
        write_json(&json_sink, &rec)?;
    }
    if let Some(path) = &a.chart {
        // the chart is a convenience; failing to write it is not an error
        if let Err(e) = output::write_atomic(path, |w| Ok(w.write_all(render_svg(&points).as_bytes())?)) {
            log::warn!("chart not written: {e:#}");
        }
    }
    Ok(())
}

fn cmd_recommend(a: RecommendArgs) -> Result<()> {
    check_percentile(a.percentile)?;
    let file = fs::File::open(&a.points).with_context(|| format!("opening {}", a.points.display()))?;
    let points = read_sweep_csv(file, &a.points)?;
    let rec = recommend(&points, a.threshold, a.percentile)?;
    write_json(&Sink::from_arg(a.out.as_deref()), &rec)
}

fn cmd_bias(a: BiasArgs, encoding: TextEncoding) -> Result<()> {
    let vocab = a.vocab.load()?;
    let mode = Mode::from(a.mode);
    let convention = if a.observed_only { KConvention::Observed } else { KConvention::Vocabulary };
    let train = match &a.train {
        Some(path) => {
            let corpus = load_monolingual(path, encoding)?;
            class_distribution(&encode_corpus(&corpus, &vocab, mode), &vocab, convention)?
        }
        None => ClassDistribution::from_vocab_frequencies(&vocab, convention),
    };
    let hyps = read_sentences(&a.hyp, encoding)?;
    let refs = read_sentences(&a.reference, encoding)?;
    let perf = unigram_performance(&encode_corpus(&hyps, &vocab, mode), &encode_corpus(&refs, &vocab, mode), &train)?;
    let report = bias_report(&perf, &train, a.min_support)?;

    let tsv_sink = Sink::from_arg(a.out.as_deref());
    tsv_sink.write(|w| Ok(write_performance_tsv(&perf, &vocab, w)?))?;
    let json_sink = Sink::from_arg(a.summary_out.as_deref());
    if tsv_sink.is_stdout() && json_sink.is_stdout() {
        println!();
    }
    write_json(&json_sink, &report)
}
