//! Class-imbalance statistics of an encoded corpus: divergence from uniform
//! `D`, frequency at percentile `F_P%`, and mean sequence length `mu`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bpe::{ClassId, EncodedCorpus, EntryKind, Scheme, Vocabulary};
use crate::error::{Error, Result};

pub const DEFAULT_PERCENTILE: f64 = 95.0;

/// Which vocabulary entries count as classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KConvention {
    /// Every non-reserved entry, including those never seen in the corpus.
    #[default]
    Vocabulary,
    /// Only entries with a positive count.
    Observed,
}

impl KConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            KConvention::Vocabulary => "vocabulary",
            KConvention::Observed => "observed",
        }
    }
}

/// Per-class counts over an encoded corpus.
///
/// Reserved classes take part only when they actually occur, so the
/// probabilities always sum to one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    classes: Vec<ClassId>,
    counts: Vec<u64>,
    total: u64,
    convention: KConvention,
}

impl ClassDistribution {
    /// Classes `0..counts.len()`, all included.
    pub fn from_counts(counts: Vec<u64>) -> Self {
        ClassDistribution {
            classes: (0..counts.len() as ClassId).collect(),
            total: counts.iter().sum(),
            counts,
            convention: KConvention::Vocabulary,
        }
    }

    /// Distribution given per-id counts aligned with `vocab`.
    pub fn from_vocab_counts(vocab: &Vocabulary, per_id: &[u64], convention: KConvention) -> Self {
        let mut classes = Vec::new();
        let mut counts = Vec::new();
        for (entry, &count) in vocab.entries().iter().zip(per_id) {
            let include = match (entry.kind, convention) {
                (EntryKind::Reserved, _) => count > 0,
                (_, KConvention::Vocabulary) => true,
                (_, KConvention::Observed) => count > 0,
            };
            if include {
                classes.push(entry.id);
                counts.push(count);
            }
        }
        ClassDistribution { classes, total: counts.iter().sum(), counts, convention }
    }

    /// The training distribution recorded in a vocabulary's frequency column.
    pub fn from_vocab_frequencies(vocab: &Vocabulary, convention: KConvention) -> Self {
        let per_id: Vec<u64> = vocab.entries().iter().map(|e| e.frequency).collect();
        Self::from_vocab_counts(vocab, &per_id, convention)
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn convention(&self) -> KConvention {
        self.convention
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassId, u64)> + '_ {
        self.classes.iter().copied().zip(self.counts.iter().copied())
    }

    pub fn count_of(&self, class: ClassId) -> Option<u64> {
        self.classes.binary_search(&class).ok().map(|i| self.counts[i])
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }
}

/// Counts every class occurrence in `encoded`.
pub fn class_distribution(
    encoded: &EncodedCorpus,
    vocab: &Vocabulary,
    convention: KConvention,
) -> Result<ClassDistribution> {
    if encoded.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut per_id = vec![0u64; vocab.len()];
    for &id in encoded.iter().flatten() {
        *per_id.get_mut(id as usize).ok_or(Error::UnknownId(id))? += 1;
    }
    Ok(ClassDistribution::from_vocab_counts(vocab, &per_id, convention))
}

/// `D = 1/2 * sum_i |p_i - 1/K|`.
///
/// Evaluated as `sum_i |K c_i - T| / (2 K T)` in integers, so the only
/// rounding is the final division.
pub fn divergence(dist: &ClassDistribution) -> Result<f64> {
    if dist.k() == 0 {
        return Err(Error::NoClasses);
    }
    if dist.total == 0 {
        return Err(Error::ZeroTotal);
    }
    let k = dist.k() as u128;
    let t = dist.total as u128;
    let moved: u128 = dist.counts.iter().map(|&c| (k * c as u128).abs_diff(t)).sum();
    Ok(moved as f64 / (2 * k * t) as f64)
}

/// Number of top classes covered by percentile `p`: `ceil(p/100 * K)`.
pub fn percentile_rank(p: f64, k: usize) -> usize {
    ((p * k as f64 / 100.0).ceil() as usize).clamp(1, k.max(1))
}

/// Least count among the `ceil(p/100 * K)` most frequent classes.
pub fn freq_at_percentile(dist: &ClassDistribution, p: f64) -> Result<u64> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::InvalidPercentile(p));
    }
    if dist.k() == 0 {
        return Err(Error::NoClasses);
    }
    if dist.total == 0 {
        return Err(Error::ZeroTotal);
    }
    let m = percentile_rank(p, dist.k());
    let mut counts = dist.counts.clone();
    let (_, nth, _) = counts.select_nth_unstable_by(m - 1, |a, b| b.cmp(a));
    Ok(*nth)
}

/// Mean encoded length over sentences; no end-of-sentence token is added.
pub fn mean_seq_len(encoded: &EncodedCorpus) -> Result<f64> {
    if encoded.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let tokens: usize = encoded.iter().map(Vec::len).sum();
    Ok(tokens as f64 / encoded.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceStats {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "F_P")]
    pub f_p: u64,
    pub mu: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "P")]
    pub p: f64,
}

/// All three statistics for one encoded corpus. `mu_side`, when given,
/// replaces the corpus used for `mu` (e.g. the source side).
pub fn imbalance_stats(
    encoded: &EncodedCorpus,
    vocab: &Vocabulary,
    p: f64,
    convention: KConvention,
    mu_side: Option<&EncodedCorpus>,
) -> Result<ImbalanceStats> {
    let dist = class_distribution(encoded, vocab, convention)?;
    let mu_corpus = mu_side.unwrap_or(encoded);
    Ok(ImbalanceStats {
        d: divergence(&dist)?,
        f_p: freq_at_percentile(&dist, p)?,
        mu: mean_seq_len(mu_corpus)?,
        k: dist.k(),
        n: mu_corpus.len(),
        p,
    })
}

/// One labelled row of statistics, as written by `stats` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub scheme: Scheme,
    pub merge_ops: Option<usize>,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "F_P")]
    pub f_p: u64,
    pub mu: f64,
    #[serde(rename = "P")]
    pub p: f64,
}

pub const STATS_COLUMNS: [&str; 8] = ["scheme", "merge_ops", "K", "N", "D", "F_P", "mu", "P"];

impl StatsRecord {
    pub fn new(scheme: Scheme, merge_ops: Option<usize>, stats: &ImbalanceStats) -> Self {
        StatsRecord { scheme, merge_ops, k: stats.k, n: stats.n, d: stats.d, f_p: stats.f_p, mu: stats.mu, p: stats.p }
    }

    pub fn stats(&self) -> ImbalanceStats {
        ImbalanceStats { d: self.d, f_p: self.f_p, mu: self.mu, k: self.k, n: self.n, p: self.p }
    }

    pub(crate) fn csv_fields(&self) -> Vec<String> {
        vec![
            self.scheme.to_string(),
            self.merge_ops.map(|m| m.to_string()).unwrap_or_default(),
            self.k.to_string(),
            self.n.to_string(),
            self.d.to_string(),
            self.f_p.to_string(),
            self.mu.to_string(),
            self.p.to_string(),
        ]
    }

    /// Header plus one row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(STATS_COLUMNS)?;
        w.write_record(self.csv_fields())?;
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}
