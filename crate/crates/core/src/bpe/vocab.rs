use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ClassId = u32;

/// Suffix carried by every non-final piece of a word: `lower` -> `low@@ er`.
pub const JOINER: &str = "@@";
pub const UNK: &str = "<unk>";
pub const UNK_ID: ClassId = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Reserved,
    Char,
    Subword,
    Word,
}

impl EntryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::Reserved => "reserved",
            EntryKind::Char => "char",
            EntryKind::Subword => "subword",
            EntryKind::Word => "word",
        }
    }
}

impl FromStr for EntryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reserved" => Ok(EntryKind::Reserved),
            "char" => Ok(EntryKind::Char),
            "subword" => Ok(EntryKind::Subword),
            "word" => Ok(EntryKind::Word),
            other => Err(format!("unknown entry kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Char,
    Word,
    Bpe,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Char => "char",
            Scheme::Word => "word",
            Scheme::Bpe => "bpe",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "char" => Ok(Scheme::Char),
            "word" => Ok(Scheme::Word),
            "bpe" => Ok(Scheme::Bpe),
            other => Err(format!("unknown scheme {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub id: ClassId,
    pub surface: String,
    pub frequency: u64,
    pub kind: EntryKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeRule {
    pub left: String,
    pub right: String,
    pub result: String,
    pub rank: usize,
}

/// Surface of the compound formed by `left` followed by `right`. `left` is a
/// non-final piece, so its joiner is dropped and `right` decides whether the
/// compound is final.
pub fn join_surfaces(left: &str, right: &str) -> String {
    let stem = left.strip_suffix(JOINER).unwrap_or(left);
    let mut out = String::with_capacity(stem.len() + right.len());
    out.push_str(stem);
    out.push_str(right);
    out
}

/// Marked surface of a single character: non-final characters carry the joiner.
pub fn char_surface(c: char, is_final: bool) -> String {
    let mut s = String::with_capacity(c.len_utf8() + JOINER.len());
    s.push(c);
    if !is_final {
        s.push_str(JOINER);
    }
    s
}

/// The class inventory for one encoding scheme together with the merge table
/// that produced it.
///
/// Ids are dense, reserved entries come first (`<unk>` is always id 0), and
/// surfaces are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    scheme: Scheme,
    entries: Vec<Entry>,
    merges: Vec<MergeRule>,
    index: HashMap<String, ClassId>,
}

impl Vocabulary {
    /// Assembles a vocabulary and checks its structural invariants.
    pub fn from_parts(scheme: Scheme, entries: Vec<Entry>, merges: Vec<MergeRule>) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidVocabulary(msg));

        match entries.first() {
            Some(e) if e.surface == UNK && e.kind == EntryKind::Reserved => {}
            _ => return invalid(format!("entry 0 must be the reserved {UNK} class")),
        }
        let mut index = HashMap::with_capacity(entries.len());
        let mut seen_regular = false;
        for (i, entry) in entries.iter().enumerate() {
            if entry.id as usize != i {
                return invalid(format!("id {} found at position {i}", entry.id));
            }
            if entry.surface.is_empty() || entry.surface.chars().any(char::is_whitespace) {
                return invalid(format!("entry {i} has an empty or whitespace surface"));
            }
            match entry.kind {
                EntryKind::Reserved if seen_regular => {
                    return invalid(format!("reserved entry {i} follows a regular entry"));
                }
                EntryKind::Reserved => {}
                EntryKind::Word if scheme != Scheme::Word => {
                    return invalid(format!("word entry {i} in a {scheme} vocabulary"));
                }
                EntryKind::Char | EntryKind::Subword if scheme == Scheme::Word => {
                    return invalid(format!("{} entry {i} in a word vocabulary", entry.kind.as_str()));
                }
                _ => seen_regular = true,
            }
            if index.insert(entry.surface.clone(), entry.id).is_some() {
                return invalid(format!("duplicate surface {:?}", entry.surface));
            }
        }
        if scheme != Scheme::Bpe && !merges.is_empty() {
            return invalid(format!("{scheme} vocabulary cannot carry merges"));
        }
        for (rank, rule) in merges.iter().enumerate() {
            if rule.rank != rank {
                return invalid(format!("merge ranks are not contiguous at {rank}"));
            }
            if !rule.left.ends_with(JOINER) {
                return invalid(format!("merge {rank}: left side {:?} is not a non-final piece", rule.left));
            }
            if rule.result != join_surfaces(&rule.left, &rule.right) {
                return invalid(format!("merge {rank}: {:?} is not {:?} + {:?}", rule.result, rule.left, rule.right));
            }
            for side in [&rule.left, &rule.right, &rule.result] {
                if !index.contains_key(side.as_str()) {
                    return invalid(format!("merge {rank}: {side:?} is not in the vocabulary"));
                }
            }
        }
        Ok(Vocabulary { scheme, entries, merges, index })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    /// Total number of entries, reserved ones included.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of non-reserved classes; the `K` of the imbalance statistics.
    pub fn num_classes(&self) -> usize {
        self.entries.iter().filter(|e| e.kind != EntryKind::Reserved).count()
    }

    pub fn id(&self, surface: &str) -> Option<ClassId> {
        self.index.get(surface).copied()
    }

    pub fn entry(&self, id: ClassId) -> Option<&Entry> {
        self.entries.get(id as usize)
    }

    pub fn surface(&self, id: ClassId) -> Option<&str> {
        self.entry(id).map(|e| e.surface.as_str())
    }

    pub fn is_reserved(&self, id: ClassId) -> bool {
        self.entry(id).is_some_and(|e| e.kind == EntryKind::Reserved)
    }

    /// Longest surface in characters, joiner excluded.
    pub(crate) fn max_piece_chars(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind != EntryKind::Reserved)
            .map(|e| e.surface.strip_suffix(JOINER).unwrap_or(&e.surface).chars().count())
            .max()
            .unwrap_or(0)
    }

    /// Same vocabulary with frequencies replaced, indexed by class id.
    pub(crate) fn with_frequencies(mut self, freqs: &[u64]) -> Self {
        for (entry, &f) in self.entries.iter_mut().zip(freqs) {
            entry.frequency = f;
        }
        self
    }

    /// The vocabulary that the first `merges` rules alone would have produced:
    /// reserved and character entries plus the compounds of the kept rules.
    /// Frequencies are left untouched; see [`crate::bpe::recount`].
    pub fn truncated(&self, merges: usize) -> Vocabulary {
        let kept: Vec<MergeRule> = self.merges.iter().take(merges).cloned().collect();
        let mut wanted: std::collections::HashSet<&str> = kept.iter().map(|m| m.result.as_str()).collect();
        let mut entries = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let keep = match e.kind {
                EntryKind::Subword => wanted.remove(e.surface.as_str()),
                _ => true,
            };
            if keep {
                entries.push(Entry { id: entries.len() as ClassId, ..e.clone() });
            }
        }
        Vocabulary::from_parts(self.scheme, entries, kept).expect("a merge prefix of a valid vocabulary is valid")
    }
}
