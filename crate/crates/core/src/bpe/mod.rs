//! Byte-pair-encoding vocabularies plus the character and word baselines.

mod apply;
pub mod io;
mod learn;
mod vocab;

pub use apply::{decode, encode_corpus, recount, segment_word, surfaces, EncodedCorpus, Mode, Segmenter};
pub use learn::{char_vocab, learn_bpe, learn_bpe_from_counts, word_vocab, WordCounts};
pub use vocab::{
    char_surface, join_surfaces, ClassId, Entry, EntryKind, MergeRule, Scheme, Vocabulary, JOINER, UNK, UNK_ID,
};
