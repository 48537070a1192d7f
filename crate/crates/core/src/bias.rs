//! Frequency bias of a translation system: per-class unigram precision and
//! recall on a test set, correlated with the class's training-frequency rank.
//!
//! For class `k` and test record `i`, with `match = min(count_k(ref),
//! count_k(hyp))`, precision is `match / count_k(hyp)` (defined when `k`
//! occurs in the hypothesis) and recall is `match / count_k(ref)` (defined
//! when `k` occurs in the reference). `P_k` and `R_k` average these over the
//! records where they are defined.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bpe::{ClassId, EncodedCorpus, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{divergence, ClassDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPerformance {
    pub class_id: ClassId,
    /// 1-based position in descending training frequency; `None` for classes
    /// never seen in training.
    pub rank: Option<usize>,
    pub train_freq: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Records whose hypothesis contains the class.
    pub hyp_support: usize,
    /// Records whose reference contains the class.
    pub ref_support: usize,
    /// Clipped matches summed over records.
    pub matched: u64,
    pub hyp_tokens: u64,
    pub ref_tokens: u64,
}

/// Ranks classes by descending count, ties by ascending id. Zero-count
/// classes get no rank.
pub fn rank_classes(train: &ClassDistribution) -> Result<BTreeMap<ClassId, usize>> {
    let mut ranked: Vec<(ClassId, u64)> = train.iter().filter(|&(_, c)| c > 0).collect();
    if ranked.is_empty() {
        return Err(Error::AllZeroCounts);
    }
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(ranked.into_iter().enumerate().map(|(i, (id, _))| (id, i + 1)).collect())
}

#[derive(Default)]
struct Accumulator {
    precision_sum: f64,
    recall_sum: f64,
    hyp_support: usize,
    ref_support: usize,
    matched: u64,
    hyp_tokens: u64,
    ref_tokens: u64,
}

/// Per-record `(class, hyp count, ref count)`, sorted by class.
fn record_counts(hyp: &[ClassId], reference: &[ClassId]) -> Vec<(ClassId, u64, u64)> {
    let mut counts: HashMap<ClassId, (u64, u64)> = HashMap::new();
    for &c in hyp {
        counts.entry(c).or_default().0 += 1;
    }
    for &c in reference {
        counts.entry(c).or_default().1 += 1;
    }
    let mut rows: Vec<_> = counts.into_iter().map(|(c, (h, r))| (c, h, r)).collect();
    rows.sort_unstable_by_key(|r| r.0);
    rows
}

/// `P_k` and `R_k` for every training class and every class seen in the
/// test data, ordered by class id.
pub fn unigram_performance(
    hyps: &EncodedCorpus,
    refs: &EncodedCorpus,
    train: &ClassDistribution,
) -> Result<Vec<ClassPerformance>> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch { hyps: hyps.len(), refs: refs.len() });
    }
    if hyps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let ranks = if train.total() > 0 { rank_classes(train)? } else { BTreeMap::new() };
    let per_record: Vec<Vec<(ClassId, u64, u64)>> =
        hyps.par_iter().zip(refs.par_iter()).map(|(h, r)| record_counts(h, r)).collect();

    // summed in record order so the result does not depend on scheduling
    let mut acc: BTreeMap<ClassId, Accumulator> =
        train.classes().iter().map(|&c| (c, Accumulator::default())).collect();
    for record in &per_record {
        for &(class, h, r) in record {
            let a = acc.entry(class).or_default();
            let m = h.min(r);
            a.matched += m;
            a.hyp_tokens += h;
            a.ref_tokens += r;
            if h > 0 {
                a.hyp_support += 1;
                a.precision_sum += m as f64 / h as f64;
            }
            if r > 0 {
                a.ref_support += 1;
                a.recall_sum += m as f64 / r as f64;
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|(class_id, a)| ClassPerformance {
            class_id,
            rank: ranks.get(&class_id).copied(),
            train_freq: train.count_of(class_id).unwrap_or(0),
            precision: (a.hyp_support > 0).then(|| a.precision_sum / a.hyp_support as f64),
            recall: (a.ref_support > 0).then(|| a.recall_sum / a.ref_support as f64),
            hyp_support: a.hyp_support,
            ref_support: a.ref_support,
            matched: a.matched,
            hyp_tokens: a.hyp_tokens,
            ref_tokens: a.ref_tokens,
        })
        .collect())
}

/// Sample Pearson correlation, accumulated in one pass with Welford-style
/// co-moment updates.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::PearsonInput { xs: xs.len(), ys: ys.len() });
    }
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let n = (i + 1) as f64;
        let dx = x - mx;
        let dy = y - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    if sxx <= 0.0 {
        return Err(Error::ZeroVariance("xs"));
    }
    if syy <= 0.0 {
        return Err(Error::ZeroVariance("ys"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    #[serde(rename = "rho_FP")]
    pub rho_fp: f64,
    #[serde(rename = "rho_FR")]
    pub rho_fr: f64,
    #[serde(rename = "n_P")]
    pub n_p: usize,
    #[serde(rename = "n_R")]
    pub n_r: usize,
    /// Divergence of the training distribution.
    #[serde(rename = "D")]
    pub d: f64,
}

/// Correlates rank with precision and with recall over ranked classes whose
/// measure is defined and whose support reaches `min_support`. Each
/// coefficient drops undefined classes independently.
pub fn bias_report(perf: &[ClassPerformance], train: &ClassDistribution, min_support: usize) -> Result<BiasReport> {
    let mut sorted: Vec<&ClassPerformance> = perf.iter().collect();
    sorted.sort_by_key(|p| p.class_id);
    let min_support = min_support.max(1);

    let collect = |value: fn(&ClassPerformance) -> Option<f64>, support: fn(&ClassPerformance) -> usize| {
        sorted
            .iter()
            .filter(|p| support(p) >= min_support)
            .filter_map(|p| Some((p.rank? as f64, value(p)?)))
            .unzip::<f64, f64, Vec<f64>, Vec<f64>>()
    };
    let coefficient = |name: &'static str, (xs, ys): (Vec<f64>, Vec<f64>)| -> Result<(f64, usize)> {
        if xs.len() < 2 {
            return Err(Error::InsufficientClasses { coefficient: name, found: xs.len() });
        }
        let rho = pearson(&xs, &ys).map_err(|e| match e {
            Error::ZeroVariance("xs") => {
                Error::ZeroVariance(if name == "rho_FP" { "rho_FP ranks" } else { "rho_FR ranks" })
            }
            Error::ZeroVariance(_) => Error::ZeroVariance(if name == "rho_FP" { "precision" } else { "recall" }),
            e => e,
        })?;
        Ok((rho, xs.len()))
    };
    let (rho_fp, n_p) = coefficient("rho_FP", collect(|p| p.precision, |p| p.hyp_support))?;
    let (rho_fr, n_r) = coefficient("rho_FR", collect(|p| p.recall, |p| p.ref_support))?;
    Ok(BiasReport { rho_fp, rho_fr, n_p, n_r, d: divergence(train)? })
}

pub const PERFORMANCE_HEADER: &str = "class_id\tsurface\trank\ttrain_freq\tprecision\trecall\thyp_support\tref_support";

/// Per-class TSV; undefined ranks and measures are left empty.
pub fn write_performance_tsv<W: Write>(
    perf: &[ClassPerformance],
    vocab: &Vocabulary,
    mut out: W,
) -> std::io::Result<()> {
    fn opt<T: ToString>(v: Option<T>) -> String {
        v.map(|v| v.to_string()).unwrap_or_default()
    }
    writeln!(out, "{PERFORMANCE_HEADER}")?;
    for p in perf {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.class_id,
            vocab.surface(p.class_id).unwrap_or(""),
            opt(p.rank),
            p.train_freq,
            opt(p.precision),
            opt(p.recall),
            p.hyp_support,
            p.ref_support
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn dist(counts: &[u64]) -> ClassDistribution {
        ClassDistribution::from_counts(counts.to_vec())
    }

    fn perf_of(perf: &[ClassPerformance], id: ClassId) -> &ClassPerformance {
        perf.iter().find(|p| p.class_id == id).unwrap()
    }

    #[test]
    fn worked_example() {
        // a = 0, b = 1; hyp "a a b", ref "a b b"
        let perf = unigram_performance(&vec![vec![0, 0, 1]], &vec![vec![0, 1, 1]], &dist(&[3, 2])).unwrap();
        let (a, b) = (perf_of(&perf, 0), perf_of(&perf, 1));
        assert_eq!((a.precision, a.recall), (Some(0.5), Some(1.0)));
        assert_eq!((b.precision, b.recall), (Some(1.0), Some(0.5)));
        assert_eq!((a.matched, a.hyp_tokens, a.ref_tokens), (1, 2, 1));
    }

    #[test]
    fn identity_and_reference_only() {
        let h = vec![vec![0, 1, 1], vec![2]];
        let perf = unigram_performance(&h, &h, &dist(&[5, 4, 3, 2])).unwrap();
        for p in perf.iter().take(3) {
            assert_eq!((p.precision, p.recall), (Some(1.0), Some(1.0)));
        }
        assert_eq!((perf[3].precision, perf[3].recall), (None, None));
        assert!(matches!(bias_report(&perf, &dist(&[5, 4, 3, 2]), 1), Err(Error::ZeroVariance(_))));

        let perf = unigram_performance(&vec![vec![0]], &vec![vec![0, 1]], &dist(&[1, 1])).unwrap();
        assert_eq!((perf[1].precision, perf[1].recall), (None, Some(0.0)));
    }

    #[test]
    fn unseen_test_classes_are_unranked() {
        let perf = unigram_performance(&vec![vec![9]], &vec![vec![9]], &dist(&[1, 1])).unwrap();
        assert_eq!(perf.len(), 3);
        assert_eq!(perf[2].class_id, 9);
        assert_eq!(perf[2].rank, None);
        assert_eq!(perf[2].train_freq, 0);
    }

    #[test]
    fn input_errors() {
        assert!(matches!(
            unigram_performance(&vec![vec![0]], &vec![], &dist(&[1])),
            Err(Error::LengthMismatch { hyps: 1, refs: 0 })
        ));
        assert!(matches!(unigram_performance(&vec![], &vec![], &dist(&[1])), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn ranking() {
        // a:10, b:3, c:3
        let r = rank_classes(&dist(&[10, 3, 3])).unwrap();
        assert_eq!(r.into_iter().collect::<Vec<_>>(), [(0, 1), (1, 2), (2, 3)]);
        let r = rank_classes(&dist(&[5, 5])).unwrap();
        assert_eq!(r[&0], 1);
        assert_eq!(r[&1], 2);
        assert_eq!(rank_classes(&dist(&[0, 4])).unwrap().into_iter().collect::<Vec<_>>(), [(1, 1)]);
        assert!(matches!(rank_classes(&dist(&[0, 0])), Err(Error::AllZeroCounts)));
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), Err(Error::ZeroVariance("ys"))));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(Error::PearsonInput { .. })));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(Error::PearsonInput { .. })));
    }

    fn perf_row(id: ClassId, rank: usize, p: f64, r: f64) -> ClassPerformance {
        ClassPerformance {
            class_id: id,
            rank: Some(rank),
            train_freq: 100 - rank as u64,
            precision: Some(p),
            recall: Some(r),
            hyp_support: 1,
            ref_support: 1,
            matched: 0,
            hyp_tokens: 0,
            ref_tokens: 0,
        }
    }

    #[test]
    fn report_signs_and_support_filter() {
        let d = dist(&[99, 98, 97, 96]);
        let perf: Vec<_> = (0..4).map(|i| perf_row(i, i as usize + 1, 0.1 * i as f64, 1.0 - 0.1 * i as f64)).collect();
        let r = bias_report(&perf, &d, 1).unwrap();
        assert!((r.rho_fp - 1.0).abs() < 1e-12);
        assert!((r.rho_fr + 1.0).abs() < 1e-12);
        assert_eq!((r.n_p, r.n_r), (4, 4));
        let mut reversed = perf.clone();
        reversed.reverse();
        assert_eq!(bias_report(&reversed, &d, 1).unwrap(), r);
        assert!(matches!(
            bias_report(&perf, &d, 2),
            Err(Error::InsufficientClasses { coefficient: "rho_FP", found: 0 })
        ));
        let json = serde_json::to_value(r).unwrap();
        for key in ["rho_FP", "rho_FR", "n_P", "n_R", "D"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn tsv_layout() {
        let v = crate::bpe::word_vocab(&[crate::corpus::Sentence::parse("a b")]).unwrap();
        let perf = unigram_performance(&vec![vec![1]], &vec![vec![2]], &dist(&[0, 2, 1])).unwrap();
        let mut buf = Vec::new();
        write_performance_tsv(&perf, &v, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], PERFORMANCE_HEADER);
        assert_eq!(lines[1], "0\t<unk>\t\t0\t\t\t0\t0");
        assert_eq!(lines[2], "1\ta\t1\t2\t0\t\t1\t0");
        assert_eq!(lines[3], "2\tb\t2\t1\t\t0\t0\t1");
    }

    proptest! {
        #[test]
        fn measures_in_unit_interval_and_clipped(
            pairs in prop::collection::vec(
                (prop::collection::vec(0u32..6, 0..8), prop::collection::vec(0u32..6, 0..8)), 1..20)
        ) {
            let (h, r): (EncodedCorpus, EncodedCorpus) = pairs.into_iter().unzip();
            let perf = unigram_performance(&h, &r, &dist(&[1; 6])).unwrap();
            for p in &perf {
                for v in [p.precision, p.recall].into_iter().flatten() {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                prop_assert_eq!(p.precision.is_some(), p.hyp_support > 0);
                prop_assert_eq!(p.recall.is_some(), p.ref_support > 0);
            }
            let matched: u64 = perf.iter().map(|p| p.matched).sum();
            let bound: usize = h.iter().zip(&r).map(|(a, b)| a.len().min(b.len())).sum();
            prop_assert!(matched <= bound as u64);
        }

        #[test]
        fn pearson_affine_invariant(
            data in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..50),
            a in 0.01f64..50.0,
            b in -100.0f64..100.0,
        ) {
            let (xs, ys): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
            if let Ok(rho) = pearson(&xs, &ys) {
                let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
                prop_assert!((pearson(&scaled, &ys).unwrap() - rho).abs() <= 1e-12);
                prop_assert!((-1.0..=1.0).contains(&rho));
            }
        }
    }
}
