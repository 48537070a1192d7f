//! Fixtures shared by the benchmarks in `benches/`.

use std::path::Path;

use zipfvocab::corpus::{load_monolingual, TextEncoding};
use zipfvocab::Sentence;

/// The first `lines` sentences of the bundled English corpus.
pub fn sample_corpus(lines: usize) -> Vec<Sentence> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/canterbury-en.txt");
    let mut corpus = load_monolingual(&path, TextEncoding::Utf8).expect("bundled corpus");
    corpus.truncate(lines);
    corpus
}
