//! Segmentation of words into vocabulary classes and the inverse mapping.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};

use super::learn::WordCounts;
use super::vocab::{char_surface, ClassId, EntryKind, Scheme, Vocabulary, JOINER, UNK_ID};

/// One encoded sentence per input sentence.
pub type EncodedCorpus = Vec<Vec<ClassId>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Consume the longest vocabulary surface at each position.
    #[default]
    GreedyLongest,
    /// Explode to characters and replay the merge table by rank.
    MergeOrder,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::GreedyLongest => "greedy-longest",
            Mode::MergeOrder => "merge-order",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy-longest" => Ok(Mode::GreedyLongest),
            "merge-order" => Ok(Mode::MergeOrder),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// Segments words against one vocabulary. Build once, reuse for many words.
pub struct Segmenter<'v> {
    vocab: &'v Vocabulary,
    mode: Mode,
    /// (left, right) -> (rank, result)
    merge_table: HashMap<(ClassId, ClassId), (usize, ClassId)>,
    max_piece: usize,
}

impl<'v> Segmenter<'v> {
    pub fn new(vocab: &'v Vocabulary, mode: Mode) -> Self {
        let merge_table = match mode {
            Mode::MergeOrder => vocab
                .merges()
                .iter()
                .filter_map(|m| {
                    let key = (vocab.id(&m.left)?, vocab.id(&m.right)?);
                    Some((key, (m.rank, vocab.id(&m.result)?)))
                })
                // a later rule with the same key can never fire
                .fold(HashMap::new(), |mut table, (key, value)| {
                    table.entry(key).or_insert(value);
                    table
                }),
            Mode::GreedyLongest => HashMap::new(),
        };
        Segmenter { vocab, mode, merge_table, max_piece: vocab.max_piece_chars() }
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.vocab
    }

    pub fn segment(&self, word: &str) -> Vec<ClassId> {
        if word.is_empty() {
            return Vec::new();
        }
        if self.vocab.scheme() == Scheme::Word {
            return vec![self.vocab.id(word).unwrap_or(UNK_ID)];
        }
        match self.mode {
            Mode::GreedyLongest => self.greedy_longest(word),
            Mode::MergeOrder => self.merge_order(word),
        }
    }

    fn greedy_longest(&self, word: &str) -> Vec<ClassId> {
        let bounds: Vec<usize> = word.char_indices().map(|(i, _)| i).chain(std::iter::once(word.len())).collect();
        let n = bounds.len() - 1;
        let mut out = Vec::new();
        let mut buf = String::new();
        let mut i = 0;
        while i < n {
            let longest = (i + 1..=n.min(i + self.max_piece.max(1))).rev().find_map(|j| {
                buf.clear();
                buf.push_str(&word[bounds[i]..bounds[j]]);
                if j < n {
                    buf.push_str(JOINER);
                }
                self.vocab.id(&buf).map(|id| (j, id))
            });
            match longest {
                Some((j, id)) => {
                    out.push(id);
                    i = j;
                }
                None => {
                    out.push(UNK_ID);
                    i += 1;
                }
            }
        }
        out
    }

    fn merge_order(&self, word: &str) -> Vec<ClassId> {
        let n = word.chars().count();
        let mut symbols: Vec<ClassId> = word
            .chars()
            .enumerate()
            .map(|(i, c)| self.vocab.id(&char_surface(c, i + 1 == n)).unwrap_or(UNK_ID))
            .collect();
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|p| self.merge_table.get(&(p[0], p[1])).map(|&(rank, _)| (rank, (p[0], p[1]))))
                .min();
            let Some((rank, pair)) = best else { break };
            let result = self.merge_table[&pair].1;
            debug_assert_eq!(self.merge_table[&pair].0, rank);
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && (symbols[i], symbols[i + 1]) == pair {
                    merged.push(result);
                    i += 2;
                } else {
                    merged.push(symbols[i]);
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    /// Encodes a corpus, segmenting each distinct word once.
    pub fn encode_corpus(&self, corpus: &[Sentence]) -> EncodedCorpus {
        let words = WordCounts::from_sentences(corpus);
        let table: HashMap<&str, Vec<ClassId>> =
            words.iter().collect::<Vec<_>>().into_par_iter().map(|(w, _)| (w, self.segment(w))).collect();
        corpus.par_iter().map(|s| s.tokens().iter().flat_map(|t| table[t.as_str()].iter().copied()).collect()).collect()
    }

    /// Frequencies of every class when the given word counts are encoded.
    pub fn class_frequencies(&self, words: &WordCounts) -> Vec<u64> {
        let mut freq = vec![0u64; self.vocab.len()];
        let segmented: Vec<(Vec<ClassId>, u64)> =
            words.iter().collect::<Vec<_>>().into_par_iter().map(|(w, c)| (self.segment(w), c)).collect();
        for (ids, count) in segmented {
            for id in ids {
                freq[id as usize] += count;
            }
        }
        freq
    }
}

pub fn segment_word(word: &str, vocab: &Vocabulary, mode: Mode) -> Vec<ClassId> {
    Segmenter::new(vocab, mode).segment(word)
}

pub fn encode_corpus(corpus: &[Sentence], vocab: &Vocabulary, mode: Mode) -> EncodedCorpus {
    Segmenter::new(vocab, mode).encode_corpus(corpus)
}

/// Replaces the vocabulary's frequencies with the counts obtained by
/// replaying its merge table over `words`.
pub fn recount(vocab: Vocabulary, words: &WordCounts) -> Vocabulary {
    let freq = Segmenter::new(&vocab, Mode::MergeOrder).class_frequencies(words);
    vocab.with_frequencies(&freq)
}

/// Maps class ids back to text. Non-final pieces lose their joiner and attach
/// to the next piece; everything else ends a word.
pub fn decode(sequence: &[ClassId], vocab: &Vocabulary) -> Result<String> {
    let mut out = String::new();
    let mut pending_space = false;
    for &id in sequence {
        let entry = vocab.entry(id).ok_or(Error::UnknownId(id))?;
        if pending_space {
            out.push(' ');
        }
        let stem = match entry.kind {
            EntryKind::Char | EntryKind::Subword => entry.surface.strip_suffix(JOINER),
            EntryKind::Word | EntryKind::Reserved => None,
        };
        match stem {
            Some(stem) => {
                out.push_str(stem);
                pending_space = false;
            }
            None => {
                out.push_str(&entry.surface);
                pending_space = true;
            }
        }
    }
    Ok(out)
}

/// Space-separated surfaces, the human-readable encoded form.
pub fn surfaces(sequence: &[ClassId], vocab: &Vocabulary) -> Result<String> {
    let mut out = String::new();
    for (i, &id) in sequence.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(vocab.surface(id).ok_or(Error::UnknownId(id))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::super::learn::{char_vocab, learn_bpe, word_vocab};
    use super::super::vocab::{Entry, MergeRule, UNK};
    use super::*;

    /// A bpe vocabulary with the given surfaces and no merges.
    fn surfaces_vocab(surfaces: &[&str]) -> Vocabulary {
        let mut entries = vec![Entry { id: 0, surface: UNK.into(), frequency: 0, kind: EntryKind::Reserved }];
        for s in surfaces {
            let kind =
                if s.trim_end_matches(JOINER).chars().count() == 1 { EntryKind::Char } else { EntryKind::Subword };
            entries.push(Entry { id: entries.len() as ClassId, surface: (*s).into(), frequency: 0, kind });
        }
        Vocabulary::from_parts(Scheme::Bpe, entries, Vec::<MergeRule>::new()).unwrap()
    }

    fn show(ids: &[ClassId], v: &Vocabulary) -> Vec<String> {
        ids.iter().map(|&i| v.surface(i).unwrap().to_owned()).collect()
    }

    fn lines(text: &[&str]) -> Vec<Sentence> {
        text.iter().map(|l| Sentence::parse(l)).collect()
    }

    #[test]
    fn greedy_takes_whole_word() {
        let v = surfaces_vocab(&["a@@", "b@@", "c", "ab@@", "abc"]);
        assert_eq!(show(&segment_word("abc", &v, Mode::GreedyLongest), &v), ["abc"]);
    }

    #[test]
    fn greedy_longest_prefix_first() {
        let v = surfaces_vocab(&["a@@", "b@@", "b", "ab@@"]);
        assert_eq!(show(&segment_word("abb", &v, Mode::GreedyLongest), &v), ["ab@@", "b"]);
    }

    #[test]
    fn unknown_character() {
        let v = surfaces_vocab(&["a", "b"]);
        for mode in [Mode::GreedyLongest, Mode::MergeOrder] {
            assert_eq!(segment_word("z", &v, mode), [UNK_ID]);
        }
        let w = word_vocab(&lines(&["a b"])).unwrap();
        assert_eq!(segment_word("zz", &w, Mode::GreedyLongest), [UNK_ID]);
    }

    #[test]
    fn merge_order_replays_ranks() {
        let c = lines(&["low low low low low", "lower lower"]);
        let v = learn_bpe(&c, 2).unwrap();
        assert_eq!(show(&segment_word("lower", &v, Mode::MergeOrder), &v), ["lo@@", "w@@", "e@@", "r"]);
        assert_eq!(show(&segment_word("low", &v, Mode::MergeOrder), &v), ["low"]);
        // greedy may use the compound "low" only at word end
        assert_eq!(show(&segment_word("lowlow", &v, Mode::GreedyLongest), &v), ["lo@@", "w@@", "low"]);
    }

    #[test]
    fn encode_examples() {
        let c = lines(&["low low"]);
        let w = word_vocab(&c).unwrap();
        let enc = encode_corpus(&c, &w, Mode::GreedyLongest);
        assert_eq!(enc[0].len(), 2);
        assert_eq!(show(&enc[0], &w), ["low", "low"]);

        let c = lines(&["ab cd"]);
        let ch = char_vocab(&c).unwrap();
        let enc = encode_corpus(&c, &ch, Mode::GreedyLongest);
        assert_eq!(show(&enc[0], &ch), ["a@@", "b", "c@@", "d"]);
        assert_eq!(encode_corpus(&c, &word_vocab(&c).unwrap(), Mode::MergeOrder)[0].len(), 2);
    }

    #[test]
    fn decode_cases() {
        let c = lines(&["low lower"]);
        let v = learn_bpe(&c, 3).unwrap();
        for mode in [Mode::GreedyLongest, Mode::MergeOrder] {
            let enc = encode_corpus(&c, &v, mode);
            assert_eq!(decode(&enc[0], &v).unwrap(), "low lower");
        }
        assert_eq!(decode(&[], &v).unwrap(), "");
        let a = v.id("l@@").unwrap();
        assert_eq!(decode(&[a, UNK_ID], &v).unwrap(), "l<unk>");
        assert_eq!(decode(&[UNK_ID, UNK_ID], &v).unwrap(), "<unk> <unk>");
        assert!(matches!(decode(&[999], &v), Err(Error::UnknownId(999))));
    }

    #[test]
    fn surfaces_render() {
        let c = lines(&["lower"]);
        let v = learn_bpe(&c, 0).unwrap();
        let enc = encode_corpus(&c, &v, Mode::GreedyLongest);
        assert_eq!(surfaces(&enc[0], &v).unwrap(), "l@@ o@@ w@@ e@@ r");
    }

    #[test]
    fn learned_frequencies_match_replay() {
        let c = lines(&["the cat sat on the mat", "the hat", "that cat"]);
        let words = WordCounts::from_sentences(&c);
        for m in [0, 1, 5, 20, 100] {
            let v = learn_bpe(&c, m).unwrap();
            assert_eq!(recount(v.clone(), &words), v, "merges={m}");
        }
    }

    fn arb_corpus() -> impl Strategy<Value = Vec<Sentence>> {
        prop::collection::vec("[a-dé]{1,6}( [a-dé]{1,6}){0,4}", 1..15)
            .prop_map(|ls| ls.iter().map(|l| Sentence::parse(l)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn roundtrip_and_length_sandwich(c in arb_corpus(), m in 0usize..40) {
            let bpe = learn_bpe(&c, m).unwrap();
            let word = word_vocab(&c).unwrap();
            let chars = char_vocab(&c).unwrap();
            let by_word = encode_corpus(&c, &word, Mode::GreedyLongest);
            let by_char = encode_corpus(&c, &chars, Mode::GreedyLongest);
            for mode in [Mode::GreedyLongest, Mode::MergeOrder] {
                let enc = encode_corpus(&c, &bpe, mode);
                for (i, s) in c.iter().enumerate() {
                    prop_assert_eq!(decode(&enc[i], &bpe).unwrap(), s.text());
                    prop_assert!(by_word[i].len() <= enc[i].len());
                    prop_assert!(enc[i].len() <= by_char[i].len());
                }
            }
            for (i, s) in c.iter().enumerate() {
                prop_assert_eq!(decode(&by_word[i], &word).unwrap(), s.text());
                prop_assert_eq!(decode(&by_char[i], &chars).unwrap(), s.text());
            }
        }

        #[test]
        fn merge_prefix_monotone(c in arb_corpus(), m in 0usize..30) {
            let full = learn_bpe(&c, m + 1).unwrap();
            let shorter = encode_corpus(&c, &full.truncated(m), Mode::MergeOrder);
            let longer = encode_corpus(&c, &full, Mode::MergeOrder);
            for (a, b) in longer.iter().zip(&shorter) {
                prop_assert!(a.len() <= b.len());
            }
        }

        #[test]
        fn replay_reproduces_learned_frequencies(c in arb_corpus(), m in 0usize..40) {
            let v = learn_bpe(&c, m).unwrap();
            prop_assert_eq!(recount(v.clone(), &WordCounts::from_sentences(&c)), v);
        }

        #[test]
        fn truncation_equals_learning_less(c in arb_corpus(), m in 0usize..30, extra in 0usize..10) {
            let words = WordCounts::from_sentences(&c);
            let long = learn_bpe(&c, m + extra).unwrap();
            prop_assert_eq!(recount(long.truncated(m), &words), learn_bpe(&c, m).unwrap());
        }
    }
}
