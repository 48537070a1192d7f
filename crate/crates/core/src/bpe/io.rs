//! Merges file, vocabulary TSV and encoded-corpus formats.
//!
//! * merges: a `#version: 0.2 scheme=<scheme> joiner=@@` header, then one
//!   `left right` rule per line in rank order.
//! * vocabulary: TSV with a `id surface frequency kind` header row.
//! * encoded corpus: space-separated surfaces per line, or a binary stream of
//!   little-endian `u32` ids where [`SENTENCE_END`] closes every sentence.

use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::apply::{surfaces, EncodedCorpus};
use super::vocab::{join_surfaces, ClassId, Entry, EntryKind, MergeRule, Scheme, Vocabulary, JOINER};

pub const MERGES_VERSION: &str = "#version: 0.2";
pub const VOCAB_HEADER: &str = "id\tsurface\tfrequency\tkind";
/// Sentence delimiter in the binary id stream; never a valid class id.
pub const SENTENCE_END: ClassId = u32::MAX;

pub fn write_merges<W: Write>(vocab: &Vocabulary, mut out: W) -> io::Result<()> {
    writeln!(out, "{MERGES_VERSION} scheme={} joiner={JOINER}", vocab.scheme())?;
    for rule in vocab.merges() {
        writeln!(out, "{} {}", rule.left, rule.right)?;
    }
    Ok(())
}

pub fn write_vocab<W: Write>(vocab: &Vocabulary, mut out: W) -> io::Result<()> {
    writeln!(out, "{VOCAB_HEADER}")?;
    for e in vocab.entries() {
        writeln!(out, "{}\t{}\t{}\t{}", e.id, e.surface, e.frequency, e.kind.as_str())?;
    }
    Ok(())
}

/// Parsed merges file: the scheme named in the header, if any, and the rules.
#[derive(Debug, Clone, PartialEq)]
pub struct MergesFile {
    pub scheme: Option<Scheme>,
    pub rules: Vec<MergeRule>,
}

pub fn read_merges<R: Read>(input: R, path: &Path) -> Result<MergesFile> {
    let parse_err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let mut scheme = None;
    let mut rules = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if line.starts_with('#') {
            if i == 0 {
                for field in line.split_whitespace() {
                    if let Some(value) = field.strip_prefix("scheme=") {
                        scheme = Some(value.parse().map_err(|m| parse_err(lineno, m))?);
                    }
                    if let Some(value) = field.strip_prefix("joiner=") {
                        if value != JOINER {
                            return Err(parse_err(lineno, format!("unsupported joiner {value:?}")));
                        }
                    }
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(left), Some(right), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(lineno, "expected `left right`".into()));
        };
        rules.push(MergeRule {
            left: left.to_owned(),
            right: right.to_owned(),
            result: join_surfaces(left, right),
            rank: rules.len(),
        });
    }
    Ok(MergesFile { scheme, rules })
}

pub fn read_vocab_entries<R: Read>(input: R, path: &Path) -> Result<Vec<Entry>> {
    let parse_err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if i == 0 {
            if line != VOCAB_HEADER {
                return Err(parse_err(lineno, format!("expected header {VOCAB_HEADER:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [id, surface, frequency, kind] = cols[..] else {
            return Err(parse_err(lineno, format!("expected 4 columns, found {}", cols.len())));
        };
        entries.push(Entry {
            id: id.parse().map_err(|e| parse_err(lineno, format!("bad id: {e}")))?,
            surface: surface.to_owned(),
            frequency: frequency.parse().map_err(|e| parse_err(lineno, format!("bad frequency: {e}")))?,
            kind: kind.parse().map_err(|m| parse_err(lineno, m))?,
        });
    }
    Ok(entries)
}

/// Rebuilds a vocabulary from its TSV and merges files. Without a scheme in
/// the merges header, the scheme is inferred from the entry kinds.
pub fn load_vocabulary(vocab_path: impl AsRef<Path>, merges_path: Option<&Path>) -> Result<Vocabulary> {
    let vocab_path = vocab_path.as_ref();
    let file = fs::File::open(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
    let entries = read_vocab_entries(file, vocab_path)?;
    let merges = match merges_path {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            read_merges(file, path)?
        }
        None => MergesFile { scheme: None, rules: Vec::new() },
    };
    let scheme = merges.scheme.unwrap_or_else(|| {
        if entries.iter().any(|e| e.kind == EntryKind::Word) {
            Scheme::Word
        } else if merges.rules.is_empty() && entries.iter().all(|e| e.kind != EntryKind::Subword) {
            Scheme::Char
        } else {
            Scheme::Bpe
        }
    });
    Vocabulary::from_parts(scheme, entries, merges.rules)
}

pub fn write_encoded_text<W: Write>(encoded: &EncodedCorpus, vocab: &Vocabulary, mut out: W) -> Result<()> {
    for sentence in encoded {
        let line = surfaces(sentence, vocab)?;
        writeln!(out, "{line}").map_err(|e| Error::io("<encoded output>", e))?;
    }
    Ok(())
}

pub fn write_encoded_ids<W: Write>(encoded: &EncodedCorpus, mut out: W) -> io::Result<()> {
    for sentence in encoded {
        for &id in sentence {
            out.write_all(&id.to_le_bytes())?;
        }
        out.write_all(&SENTENCE_END.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_encoded_ids(bytes: &[u8], path: &Path) -> Result<EncodedCorpus> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("id stream length {} is not a multiple of 4", bytes.len()),
        });
    }
    let mut corpus = Vec::new();
    let mut current = Vec::new();
    for chunk in bytes.chunks_exact(4) {
        let id = ClassId::from_le_bytes(chunk.try_into().expect("chunk of 4"));
        if id == SENTENCE_END {
            corpus.push(std::mem::take(&mut current));
        } else {
            current.push(id);
        }
    }
    if !current.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: corpus.len() + 1,
            message: "id stream ends without a sentence delimiter".into(),
        });
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::super::apply::{encode_corpus, Mode};
    use super::super::learn::{char_vocab, learn_bpe, word_vocab};
    use super::*;
    use crate::corpus::Sentence;

    fn roundtrip(v: &Vocabulary) -> Vocabulary {
        let dir = tempfile::tempdir().unwrap();
        let vp = dir.path().join("v.tsv");
        let mp = dir.path().join("m.txt");
        write_vocab(v, fs::File::create(&vp).unwrap()).unwrap();
        write_merges(v, fs::File::create(&mp).unwrap()).unwrap();
        load_vocabulary(&vp, Some(&mp)).unwrap()
    }

    fn corpus() -> Vec<Sentence> {
        ["low lower lowest", "newer wider \"quoted\" a,b"].iter().map(|l| Sentence::parse(l)).collect()
    }

    #[test]
    fn merges_file_layout() {
        let v = learn_bpe(&corpus(), 2).unwrap();
        let mut buf = Vec::new();
        write_merges(&v, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "#version: 0.2 scheme=bpe joiner=@@");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], format!("{} {}", v.merges()[0].left, v.merges()[0].right));
    }

    #[test]
    fn files_roundtrip_every_scheme() {
        let c = corpus();
        for v in [learn_bpe(&c, 6).unwrap(), char_vocab(&c).unwrap(), word_vocab(&c).unwrap()] {
            assert_eq!(roundtrip(&v), v);
        }
    }

    #[test]
    fn scheme_inferred_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let vp = dir.path().join("v.tsv");
        let w = word_vocab(&corpus()).unwrap();
        write_vocab(&w, fs::File::create(&vp).unwrap()).unwrap();
        assert_eq!(load_vocabulary(&vp, None).unwrap().scheme(), Scheme::Word);

        let b = learn_bpe(&corpus(), 3).unwrap();
        write_vocab(&b, fs::File::create(&vp).unwrap()).unwrap();
        let mp = dir.path().join("m.txt");
        fs::write(&mp, b.merges().iter().map(|m| format!("{} {}\n", m.left, m.right)).collect::<String>()).unwrap();
        assert_eq!(load_vocabulary(&vp, Some(&mp)).unwrap(), b);
    }

    #[test]
    fn malformed_inputs_name_the_line() {
        let p = Path::new("m.txt");
        match read_merges("#version: 0.2\na@@ b\nonly\n".as_bytes(), p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e:?}"),
        }
        assert!(read_merges("#version: 0.2 joiner=</w>\n".as_bytes(), p).is_err());
        match read_vocab_entries("id\tsurface\tfrequency\tkind\n0\t<unk>\tx\treserved\n".as_bytes(), p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e:?}"),
        }
        assert!(read_vocab_entries("nope\n".as_bytes(), p).is_err());
    }

    #[test]
    fn encoded_text_is_surfaces() {
        let c = vec![Sentence::parse("lower")];
        let v = learn_bpe(&c, 0).unwrap();
        let mut buf = Vec::new();
        write_encoded_text(&encode_corpus(&c, &v, Mode::GreedyLongest), &v, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "l@@ o@@ w@@ e@@ r\n");
    }

    #[test]
    fn id_stream_layout() {
        let mut buf = Vec::new();
        write_encoded_ids(&vec![vec![1, 2], vec![]], &mut buf).unwrap();
        assert_eq!(buf, [1, 0, 0, 0, 2, 0, 0, 0, 255, 255, 255, 255, 255, 255, 255, 255]);
        assert!(read_encoded_ids(&buf[..4], Path::new("x")).is_err());
        assert!(read_encoded_ids(&buf[..3], Path::new("x")).is_err());
    }

    proptest! {
        #[test]
        fn id_stream_roundtrip(corpus in prop::collection::vec(prop::collection::vec(0u32..1000, 0..8), 0..10)) {
            let mut buf = Vec::new();
            write_encoded_ids(&corpus, &mut buf).unwrap();
            prop_assert_eq!(read_encoded_ids(&buf, Path::new("x")).unwrap(), corpus);
        }
    }
}
