//! Statistics across a grid of vocabulary sizes, and the size heuristic:
//! the largest vocabulary whose `F_P` still reaches the threshold.

mod chart;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpe::{char_vocab, learn_bpe_from_counts, word_vocab, Mode, Scheme, Vocabulary, WordCounts};
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::metrics::{imbalance_stats, ImbalanceStats, KConvention, StatsRecord, DEFAULT_PERCENTILE, STATS_COLUMNS};

pub use chart::render_svg;

pub const DEFAULT_THRESHOLD: u64 = 100;
/// Relative tolerance when resolving a target vocabulary size.
pub const TARGET_TOLERANCE: f64 = 0.01;

/// One requested configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScheduleEntry {
    Char,
    Word,
    /// A fixed number of merge operations.
    Merges(usize),
    /// A target class count; the merge count is solved for.
    VocabSize(usize),
}

impl fmt::Display for ScheduleEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleEntry::Char => f.write_str("char"),
            ScheduleEntry::Word => f.write_str("word"),
            ScheduleEntry::Merges(n) => write!(f, "m{n}"),
            ScheduleEntry::VocabSize(k) => write!(f, "{k}"),
        }
    }
}

/// `char`, `word`, `m<N>` (merge count), or a vocabulary size such as
/// `8000` or `8k`.
impl FromStr for ScheduleEntry {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let number = |digits: &str| -> std::result::Result<usize, String> {
            let lower = digits.to_ascii_lowercase();
            let (digits, scale) = match lower.strip_suffix('k') {
                Some(d) => (d, 1000),
                None => (lower.as_str(), 1),
            };
            digits.parse::<usize>().map(|n| n * scale).map_err(|_| format!("invalid schedule entry {s:?}"))
        };
        match s.to_ascii_lowercase().as_str() {
            "char" => Ok(ScheduleEntry::Char),
            "word" => Ok(ScheduleEntry::Word),
            lower => match lower.strip_prefix('m') {
                Some(rest) => number(rest).map(ScheduleEntry::Merges),
                None => match number(s)? {
                    0 => Err("vocabulary size must be positive".into()),
                    k => Ok(ScheduleEntry::VocabSize(k)),
                },
            },
        }
    }
}

/// Characters plus target sizes from 500 to 64K.
pub fn default_schedule() -> Vec<ScheduleEntry> {
    let mut schedule = vec![ScheduleEntry::Char];
    schedule.extend([500, 1000, 2000, 4000, 8000, 16000, 32000, 64000].map(ScheduleEntry::VocabSize));
    schedule
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointWarning {
    /// Fewer merges were learnable than requested.
    MergesExhausted { requested: usize, learned: usize },
    /// No merge prefix lands within tolerance of the target size.
    TargetUnreached { target: usize, reached: usize },
    /// Mean length rose relative to a point with fewer merges.
    MuIncrease,
}

impl fmt::Display for PointWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointWarning::MergesExhausted { requested, learned } => {
                write!(f, "merges_exhausted(requested={requested},learned={learned})")
            }
            PointWarning::TargetUnreached { target, reached } => {
                write!(f, "target_unreached(target={target},reached={reached})")
            }
            PointWarning::MuIncrease => f.write_str("mu_increase"),
        }
    }
}

impl FromStr for PointWarning {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let bad = || format!("invalid warning {s:?}");
        if s == "mu_increase" {
            return Ok(PointWarning::MuIncrease);
        }
        let (name, args) = s.strip_suffix(')').and_then(|s| s.split_once('(')).ok_or_else(bad)?;
        let mut fields = BTreeMap::new();
        for arg in args.split(',') {
            let (k, v) = arg.split_once('=').ok_or_else(bad)?;
            fields.insert(k, v.parse::<usize>().map_err(|_| bad())?);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(bad);
        match name {
            "merges_exhausted" => {
                Ok(PointWarning::MergesExhausted { requested: get("requested")?, learned: get("learned")? })
            }
            "target_unreached" => {
                Ok(PointWarning::TargetUnreached { target: get("target")?, reached: get("reached")? })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub scheme: Scheme,
    /// Merge operations; `None` for the char and word baselines.
    pub merge_ops: Option<usize>,
    pub stats: ImbalanceStats,
    #[serde(default)]
    pub warnings: Vec<PointWarning>,
}

impl SweepPoint {
    fn key(&self) -> (Scheme, Option<usize>) {
        (self.scheme, self.merge_ops)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub mode: Mode,
    pub percentile: f64,
    pub convention: KConvention,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { mode: Mode::default(), percentile: DEFAULT_PERCENTILE, convention: KConvention::default() }
    }
}

/// A resolved schedule entry: the vocabulary to evaluate and any warnings
/// raised while resolving it.
#[derive(Debug, Clone)]
pub struct PlannedPoint {
    pub scheme: Scheme,
    pub merge_ops: Option<usize>,
    pub vocab: Vocabulary,
    pub warnings: Vec<PointWarning>,
}

/// Resolves a schedule into vocabularies. BPE is learned once, for the
/// largest merge count any entry needs, and smaller entries take a prefix of
/// its merge table. Entries resolving to the same configuration are merged.
pub fn plan_sweep(corpus: &[Sentence], schedule: &[ScheduleEntry]) -> Result<Vec<PlannedPoint>> {
    if schedule.is_empty() {
        return Err(Error::EmptySchedule);
    }
    let words = WordCounts::from_sentences(corpus);
    if words.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let chars = char_vocab(corpus)?;
    let base_k = chars.num_classes();

    let wanted_merges = schedule
        .iter()
        .map(|e| match *e {
            ScheduleEntry::Merges(n) => n,
            // each merge adds at most one class
            ScheduleEntry::VocabSize(k) => k.saturating_sub(base_k),
            _ => 0,
        })
        .max()
        .unwrap_or(0);
    let needs_bpe = schedule.iter().any(|e| matches!(e, ScheduleEntry::Merges(_) | ScheduleEntry::VocabSize(_)));
    let learned = if needs_bpe { Some(learn_bpe_from_counts(&words, wanted_merges)?) } else { None };
    // prefix_k[m]: class count after the first m merges
    let prefix_k: Vec<usize> = learned.as_ref().map_or_else(Vec::new, |v| {
        let mut seen = HashSet::new();
        let mut ks = vec![base_k];
        for rule in v.merges() {
            let added = seen.insert(rule.result.as_str()) as usize;
            ks.push(ks.last().copied().unwrap_or(base_k) + added);
        }
        ks
    });

    let mut resolved: BTreeMap<(Scheme, Option<usize>), Vec<PointWarning>> = BTreeMap::new();
    for entry in schedule {
        let (key, warning) = match *entry {
            ScheduleEntry::Char => ((Scheme::Char, None), None),
            ScheduleEntry::Word => ((Scheme::Word, None), None),
            ScheduleEntry::Merges(n) => {
                let learned = prefix_k.len() - 1;
                let warning = (n > learned).then_some(PointWarning::MergesExhausted { requested: n, learned });
                ((Scheme::Bpe, Some(n.min(learned))), warning)
            }
            ScheduleEntry::VocabSize(target) => {
                let (m, reached) = resolve_target(&prefix_k, target);
                let off = (reached as f64 - target as f64).abs() > TARGET_TOLERANCE * target as f64;
                let warning = off.then_some(PointWarning::TargetUnreached { target, reached });
                ((Scheme::Bpe, Some(m)), warning)
            }
        };
        let warnings = resolved.entry(key).or_default();
        if let Some(w) = warning {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
    }

    let words_v = if resolved.keys().any(|(s, _)| *s == Scheme::Word) { Some(word_vocab(corpus)?) } else { None };
    Ok(resolved
        .into_iter()
        .map(|((scheme, merge_ops), warnings)| {
            let vocab = match (scheme, merge_ops) {
                (Scheme::Char, _) => chars.clone(),
                (Scheme::Word, _) => words_v.clone().expect("word vocabulary built"),
                (Scheme::Bpe, m) => learned.as_ref().expect("bpe learned").truncated(m.unwrap_or(0)),
            };
            PlannedPoint { scheme, merge_ops, vocab, warnings }
        })
        .collect())
}

/// Merge count whose class count is closest to `target`, preferring the
/// smaller count on ties. `prefix_k` is non-decreasing.
fn resolve_target(prefix_k: &[usize], target: usize) -> (usize, usize) {
    let above = prefix_k.partition_point(|&k| k < target);
    let mut best = None::<(usize, usize)>;
    for m in [above.checked_sub(1), Some(above)].into_iter().flatten() {
        if let Some(&k) = prefix_k.get(m) {
            // earliest prefix with this class count
            let first = prefix_k.partition_point(|&x| x < k);
            let better = match best {
                None => true,
                Some((_, bk)) => k.abs_diff(target) < bk.abs_diff(target),
            };
            if better {
                best = Some((first, k));
            }
        }
    }
    best.unwrap_or((0, prefix_k.first().copied().unwrap_or(0)))
}

/// Evaluates every schedule entry on `corpus`. Points come back sorted by
/// class count, then scheme and merge count.
pub fn run_sweep(corpus: &[Sentence], schedule: &[ScheduleEntry], config: &SweepConfig) -> Result<Vec<SweepPoint>> {
    let planned = plan_sweep(corpus, schedule)?;
    let mut points = planned
        .into_par_iter()
        .map(|p| {
            let encoded = crate::bpe::encode_corpus(corpus, &p.vocab, config.mode);
            let stats = imbalance_stats(&encoded, &p.vocab, config.percentile, config.convention, None)?;
            Ok(SweepPoint { scheme: p.scheme, merge_ops: p.merge_ops, stats, warnings: p.warnings })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.stats.k.cmp(&b.stats.k).then_with(|| a.key().cmp(&b.key())));
    if config.mode == Mode::MergeOrder {
        flag_mu_increases(&mut points);
    }
    Ok(points)
}

/// In merge-order mode more merges can only shorten sentences; a violation
/// is flagged on the offending point.
fn flag_mu_increases(points: &mut [SweepPoint]) {
    let mut order: Vec<usize> =
        (0..points.len()).filter(|&i| matches!(points[i].scheme, Scheme::Char | Scheme::Bpe)).collect();
    order.sort_by_key(|&i| points[i].merge_ops.unwrap_or(0));
    let mut best = f64::INFINITY;
    for i in order {
        let p = &mut points[i];
        if p.stats.mu > best {
            log::warn!("mean length rose to {} at {} merges", p.stats.mu, p.merge_ops.unwrap_or(0));
            p.warnings.push(PointWarning::MuIncrease);
        }
        best = best.min(p.stats.mu);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    /// `F_P` fell short of the threshold.
    BelowThreshold,
    /// Admissible, but a larger vocabulary was too.
    SmallerVocabulary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub scheme: Scheme,
    pub merge_ops: Option<usize>,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "F_P")]
    pub f_p: u64,
    pub reason: RejectionReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub chosen: SweepPoint,
    pub threshold: u64,
    pub percentile: f64,
    /// No point met the threshold; `chosen` is the one with the largest `F_P`.
    pub fallback: bool,
    pub rejected: Vec<Rejection>,
}

/// Total order used to pick among candidates: larger K wins, then shorter
/// sequences, then scheme and merge count.
fn preference(a: &SweepPoint, b: &SweepPoint) -> Ordering {
    a.stats
        .k
        .cmp(&b.stats.k)
        .then_with(|| b.stats.mu.total_cmp(&a.stats.mu))
        .then_with(|| b.key().cmp(&a.key()))
        .then_with(|| b.stats.d.total_cmp(&a.stats.d))
        .then_with(|| a.stats.f_p.cmp(&b.stats.f_p))
}

/// The largest vocabulary whose `F_P >= threshold`. With no such point the
/// point with the largest `F_P` is returned and flagged.
pub fn recommend(points: &[SweepPoint], threshold: u64, percentile: f64) -> Result<Recommendation> {
    if points.is_empty() {
        return Err(Error::NoPoints);
    }
    if let Some(p) = points.iter().find(|p| p.stats.p != percentile) {
        return Err(Error::PercentileMismatch { label: label(p), found: p.stats.p, expected: percentile });
    }
    let admissible = |p: &&SweepPoint| p.stats.f_p >= threshold;
    let (chosen, fallback) = match points.iter().filter(admissible).max_by(|a, b| preference(a, b)) {
        Some(p) => (p, false),
        None => {
            let best = points
                .iter()
                .max_by(|a, b| a.stats.f_p.cmp(&b.stats.f_p).then_with(|| preference(a, b)))
                .expect("points is non-empty");
            (best, true)
        }
    };
    let mut rejected: Vec<Rejection> = points
        .iter()
        .filter(|p| !std::ptr::eq(*p, chosen))
        .map(|p| Rejection {
            scheme: p.scheme,
            merge_ops: p.merge_ops,
            k: p.stats.k,
            f_p: p.stats.f_p,
            reason: if p.stats.f_p >= threshold {
                RejectionReason::SmallerVocabulary
            } else {
                RejectionReason::BelowThreshold
            },
        })
        .collect();
    rejected.sort_by(|a, b| {
        (a.k, a.scheme, a.merge_ops, a.f_p, a.reason as u8).cmp(&(b.k, b.scheme, b.merge_ops, b.f_p, b.reason as u8))
    });
    Ok(Recommendation { chosen: chosen.clone(), threshold, percentile, fallback, rejected })
}

fn label(p: &SweepPoint) -> String {
    match p.merge_ops {
        Some(m) => format!("{} {m}", p.scheme),
        None => p.scheme.to_string(),
    }
}

pub const SWEEP_COLUMNS: [&str; 9] = ["scheme", "merge_ops", "K", "N", "D", "F_P", "mu", "P", "warnings"];

/// One row per point: the stats columns plus `;`-separated warnings.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for p in points {
        let mut fields = StatsRecord::new(p.scheme, p.merge_ops, &p.stats).csv_fields();
        fields.push(p.warnings.iter().map(ToString::to_string).collect::<Vec<_>>().join(";"));
        w.write_record(fields)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[derive(Deserialize)]
struct SweepRow {
    scheme: Scheme,
    merge_ops: Option<usize>,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "F_P")]
    f_p: u64,
    mu: f64,
    #[serde(rename = "P")]
    p: f64,
    #[serde(default)]
    warnings: String,
}

/// Reads a sweep CSV (or a `stats` CSV, which lacks the warnings column).
pub fn read_sweep_csv<R: Read>(input: R, path: &Path) -> Result<Vec<SweepPoint>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if let Some(missing) = STATS_COLUMNS.iter().find(|c| !headers.iter().any(|h| h == **c)) {
        return Err(Error::Parse { path: path.to_path_buf(), line: 1, message: format!("missing column {missing:?}") });
    }
    let mut points = Vec::new();
    for (i, row) in reader.deserialize::<SweepRow>().enumerate() {
        let line = i + 2;
        let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line, message };
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        let warnings = row
            .warnings
            .split(';')
            .filter(|w| !w.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(parse_err)?;
        points.push(SweepPoint {
            scheme: row.scheme,
            merge_ops: row.merge_ops,
            stats: ImbalanceStats { d: row.d, f_p: row.f_p, mu: row.mu, k: row.k, n: row.n, p: row.p },
            warnings,
        });
    }
    Ok(points)
}
