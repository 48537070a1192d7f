//! Merge-table learning and the character / word baseline inventories.
//!
//! Learning runs over the distinct words of the corpus weighted by their
//! counts. Each word starts as its marked characters (`l@@ o@@ w`). At every
//! step the adjacent pair with the highest weighted count is merged
//! everywhere; ties go to the lexicographically smallest `(left, right)`
//! surface pair, compared bytewise.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use std::sync::Arc;

use crate::corpus::Sentence;
use crate::error::{Error, Result};

use super::vocab::{char_surface, join_surfaces, ClassId, Entry, EntryKind, MergeRule, Scheme, Vocabulary, UNK};

/// Distinct words of a corpus with their occurrence counts, sorted by word.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WordCounts {
    words: Vec<(String, u64)>,
}

impl WordCounts {
    pub fn from_sentences<'a, I>(sentences: I) -> Self
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for sentence in sentences {
            for token in sentence.tokens() {
                *counts.entry(token).or_default() += 1;
            }
        }
        WordCounts { words: counts.into_iter().map(|(w, c)| (w.to_owned(), c)).collect() }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.words.iter().map(|(w, c)| (w.as_str(), *c))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.words.iter().map(|(_, c)| c).sum()
    }
}

fn reserved_entries() -> Vec<Entry> {
    vec![Entry { id: 0, surface: UNK.to_owned(), frequency: 0, kind: EntryKind::Reserved }]
}

fn char_counts(words: &WordCounts) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for (word, count) in words.iter() {
        let n = word.chars().count();
        for (i, c) in word.chars().enumerate() {
            *counts.entry(char_surface(c, i + 1 == n)).or_default() += count;
        }
    }
    counts
}

/// One class per distinct word token.
pub fn word_vocab(corpus: &[Sentence]) -> Result<Vocabulary> {
    let words = WordCounts::from_sentences(corpus);
    if words.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut entries = reserved_entries();
    for (word, count) in words.iter() {
        entries.push(Entry {
            id: entries.len() as ClassId,
            surface: word.to_owned(),
            frequency: count,
            kind: EntryKind::Word,
        });
    }
    Vocabulary::from_parts(Scheme::Word, entries, Vec::new())
}

/// One class per distinct marked character.
pub fn char_vocab(corpus: &[Sentence]) -> Result<Vocabulary> {
    let words = WordCounts::from_sentences(corpus);
    if words.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut entries = reserved_entries();
    for (surface, frequency) in char_counts(&words) {
        entries.push(Entry { id: entries.len() as ClassId, surface, frequency, kind: EntryKind::Char });
    }
    Vocabulary::from_parts(Scheme::Char, entries, Vec::new())
}

/// Learns up to `merge_ops` merges. Learning stops early once no adjacent
/// pair is left; `vocab.merges().len()` is the number actually executed.
pub fn learn_bpe(corpus: &[Sentence], merge_ops: usize) -> Result<Vocabulary> {
    learn_bpe_from_counts(&WordCounts::from_sentences(corpus), merge_ops)
}

pub fn learn_bpe_from_counts(words: &WordCounts, merge_ops: usize) -> Result<Vocabulary> {
    if words.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut learner = Learner::new(words);
    let mut merges = Vec::new();
    while merges.len() < merge_ops {
        let Some(pair) = learner.best_pair() else {
            log::debug!("pairs exhausted after {} merges", merges.len());
            break;
        };
        let result = learner.merge(pair);
        merges.push(MergeRule {
            left: learner.surface(pair.0).to_owned(),
            right: learner.surface(pair.1).to_owned(),
            result: learner.surface(result).to_owned(),
            rank: merges.len(),
        });
    }
    learner.into_vocabulary(merges)
}

type Pair = (u32, u32);

/// Heap entry ordered so that the max-heap pops the highest count first and,
/// among equal counts, the smallest `(left, right)` surfaces.
#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: Arc<str>,
    right: Arc<str>,
    pair: Pair,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count.cmp(&other.count).then_with(|| other.left.cmp(&self.left)).then_with(|| other.right.cmp(&self.right))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Learner {
    symbols: Vec<Arc<str>>,
    lookup: HashMap<Arc<str>, u32>,
    /// Number of leading symbols that are single characters.
    n_chars: usize,
    words: Vec<Vec<u32>>,
    counts: Vec<u64>,
    pair_counts: HashMap<Pair, i64>,
    /// Words that contained the pair at some point; entries may be stale.
    occurrences: HashMap<Pair, HashSet<usize>>,
    heap: BinaryHeap<Candidate>,
}

impl Learner {
    fn new(words: &WordCounts) -> Self {
        let mut learner = Learner {
            symbols: Vec::new(),
            lookup: HashMap::new(),
            n_chars: 0,
            words: Vec::with_capacity(words.len()),
            counts: Vec::with_capacity(words.len()),
            pair_counts: HashMap::new(),
            occurrences: HashMap::new(),
            heap: BinaryHeap::new(),
        };
        // Characters are interned in sorted order so that symbol ids below
        // n_chars line up with the vocabulary's character entries.
        for surface in char_counts(words).into_keys() {
            learner.intern(&surface);
        }
        learner.n_chars = learner.symbols.len();

        for (word, count) in words.iter() {
            let n = word.chars().count();
            let symbols: Vec<u32> =
                word.chars().enumerate().map(|(i, c)| learner.lookup[char_surface(c, i + 1 == n).as_str()]).collect();
            let w = learner.words.len();
            for pair in symbols.windows(2).map(|p| (p[0], p[1])) {
                *learner.pair_counts.entry(pair).or_default() += count as i64;
                learner.occurrences.entry(pair).or_default().insert(w);
            }
            learner.words.push(symbols);
            learner.counts.push(count);
        }
        let initial: Vec<(Pair, i64)> = learner.pair_counts.iter().map(|(&p, &c)| (p, c)).collect();
        for (pair, count) in initial {
            learner.push(pair, count as u64);
        }
        learner
    }

    fn intern(&mut self, surface: &str) -> u32 {
        if let Some(&id) = self.lookup.get(surface) {
            return id;
        }
        let id = self.symbols.len() as u32;
        let surface: Arc<str> = Arc::from(surface);
        self.symbols.push(surface.clone());
        self.lookup.insert(surface, id);
        id
    }

    fn surface(&self, id: u32) -> &str {
        &self.symbols[id as usize]
    }

    fn push(&mut self, pair: Pair, count: u64) {
        self.heap.push(Candidate {
            count,
            left: self.symbols[pair.0 as usize].clone(),
            right: self.symbols[pair.1 as usize].clone(),
            pair,
        });
    }

    fn current(&self, pair: Pair) -> u64 {
        self.pair_counts.get(&pair).copied().unwrap_or(0).max(0) as u64
    }

    /// Pops the best pair. Stored heap counts never fall below the live
    /// count, so an entry whose stored count is still current is the maximum.
    fn best_pair(&mut self) -> Option<Pair> {
        while let Some(top) = self.heap.pop() {
            let live = self.current(top.pair);
            if live == 0 {
                continue;
            }
            if live == top.count {
                return Some(top.pair);
            }
            self.push(top.pair, live);
        }
        None
    }

    fn merge(&mut self, pair: Pair) -> u32 {
        let merged = join_surfaces(self.surface(pair.0), self.surface(pair.1));
        let new_id = self.intern(&merged);
        let mut affected: Vec<usize> = self.occurrences.remove(&pair).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();

        let mut fresh: BTreeSet<Pair> = BTreeSet::new();
        for w in affected {
            let word = &self.words[w];
            if !word.windows(2).any(|p| (p[0], p[1]) == pair) {
                continue;
            }
            let count = self.counts[w] as i64;
            let mut next = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && (word[i], word[i + 1]) == pair {
                    next.push(new_id);
                    i += 2;
                } else {
                    next.push(word[i]);
                    i += 1;
                }
            }
            for p in word.windows(2) {
                *self.pair_counts.entry((p[0], p[1])).or_default() -= count;
            }
            for p in next.windows(2) {
                let p = (p[0], p[1]);
                *self.pair_counts.entry(p).or_default() += count;
                self.occurrences.entry(p).or_default().insert(w);
                if p.0 == new_id || p.1 == new_id {
                    fresh.insert(p);
                }
            }
            self.words[w] = next;
        }
        self.pair_counts.retain(|_, c| *c > 0);
        for p in fresh {
            let count = self.current(p);
            if count > 0 {
                self.push(p, count);
            }
        }
        new_id
    }

    fn into_vocabulary(self, merges: Vec<MergeRule>) -> Result<Vocabulary> {
        let mut freq = vec![0u64; self.symbols.len()];
        for (word, &count) in self.words.iter().zip(&self.counts) {
            for &s in word {
                freq[s as usize] += count;
            }
        }
        let mut entries = reserved_entries();
        for (s, surface) in self.symbols.iter().enumerate() {
            entries.push(Entry {
                id: entries.len() as ClassId,
                surface: surface.to_string(),
                frequency: freq[s],
                kind: if s < self.n_chars { EntryKind::Char } else { EntryKind::Subword },
            });
        }
        Vocabulary::from_parts(Scheme::Bpe, entries, merges)
    }
}
