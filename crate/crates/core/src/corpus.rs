//! Sentence-aligned text ingestion and the length-ratio / URL cleaning filters.
//!
//! Input is pre-tokenized text, one sentence per line. Lines are split on
//! unicode whitespace only; any language-specific tokenization has to happen
//! upstream.

use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on `max(|src|, |tgt|) / min(|src|, |tgt|)`.
pub const DEFAULT_MAX_RATIO: f64 = 5.0;

const URL_PREFIXES: [&str; 4] = ["http://", "https://", "ftp://", "www."];

/// A whitespace-tokenized sentence. Tokens are never empty and never contain
/// whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Sentence {
    tokens: Vec<String>,
}

impl Sentence {
    pub fn parse(line: &str) -> Self {
        Sentence { tokens: line.split_whitespace().map(str::to_owned).collect() }
    }

    /// Builds a sentence from already split tokens, rejecting empty tokens and
    /// tokens with embedded whitespace.
    pub fn from_tokens<I, S>(tokens: I) -> Option<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let valid = tokens.iter().all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace));
        valid.then_some(Sentence { tokens })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn contains_url(&self) -> bool {
        self.tokens.iter().any(|t| is_url(t))
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, token) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(token)?;
        }
        Ok(())
    }
}

/// True when the token starts with `http://`, `https://`, `ftp://` or `www.`,
/// compared case-insensitively.
pub fn is_url(token: &str) -> bool {
    URL_PREFIXES.iter().any(|prefix| {
        token.as_bytes().get(..prefix.len()).is_some_and(|head| head.eq_ignore_ascii_case(prefix.as_bytes()))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Sentence,
    pub target: Sentence,
}

impl SentencePair {
    pub fn new(source: Sentence, target: Sentence) -> Self {
        SentencePair { source, target }
    }

    pub fn lengths(&self) -> (usize, usize) {
        (self.source.len(), self.target.len())
    }
}

/// Line-aligned sentence pairs. A freshly loaded corpus may contain empty
/// sides; every pair that survives [`clean`] has two non-empty sides.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
    pub source_lang: Option<String>,
    pub target_lang: Option<String>,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<SentencePair>) -> Self {
        ParallelCorpus { pairs, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> Vec<Sentence> {
        self.pairs.iter().map(|p| p.source.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Sentence> {
        self.pairs.iter().map(|p| p.target.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextEncoding {
    #[default]
    Utf8,
    Latin1,
}

impl TextEncoding {
    fn name(self) -> &'static str {
        match self {
            TextEncoding::Utf8 => "UTF-8",
            TextEncoding::Latin1 => "Latin-1",
        }
    }

    fn decode<'a>(self, bytes: &'a [u8]) -> Option<std::borrow::Cow<'a, str>> {
        match self {
            TextEncoding::Utf8 => std::str::from_utf8(bytes).ok().map(Into::into),
            TextEncoding::Latin1 => Some(bytes.iter().map(|&b| b as char).collect::<String>().into()),
        }
    }
}

/// Reads one sentence per line. Blank lines are kept as empty sentences so
/// line numbers stay aligned with the file.
pub fn read_sentences(path: impl AsRef<Path>, encoding: TextEncoding) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() {
        return Ok(Vec::new());
    }
    let body = bytes.strip_suffix(b"\n").unwrap_or(&bytes);
    body.split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, raw)| {
            encoding.decode(raw).map(|line| Sentence::parse(&line)).ok_or(Error::Encoding {
                path: path.to_path_buf(),
                line: i + 1,
                encoding: encoding.name(),
            })
        })
        .collect()
}

/// Loads a sentence-aligned corpus from two files with equal line counts.
pub fn load_corpus(
    source: impl AsRef<Path>,
    target: impl AsRef<Path>,
    encoding: TextEncoding,
) -> Result<ParallelCorpus> {
    let (source, target) = (source.as_ref(), target.as_ref());
    let src = read_sentences(source, encoding)?;
    let tgt = read_sentences(target, encoding)?;
    if src.len() != tgt.len() {
        return Err(Error::Alignment {
            source_path: source.to_path_buf(),
            source_lines: src.len(),
            target_path: target.to_path_buf(),
            target_lines: tgt.len(),
        });
    }
    Ok(ParallelCorpus::new(src.into_iter().zip(tgt).map(|(s, t)| SentencePair::new(s, t)).collect()))
}

/// Loads a monolingual corpus, dropping blank lines.
pub fn load_monolingual(path: impl AsRef<Path>, encoding: TextEncoding) -> Result<Vec<Sentence>> {
    let mut sentences = read_sentences(path, encoding)?;
    sentences.retain(|s| !s.is_empty());
    Ok(sentences)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleanConfig {
    pub max_ratio: f64,
    pub drop_urls: bool,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig { max_ratio: DEFAULT_MAX_RATIO, drop_urls: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    EmptySide,
    Url,
    LengthRatio,
}

/// Counts per removal reason. A pair is attributed to the first failing rule
/// in the order empty side, URL, length ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CleanReport {
    pub input: usize,
    pub kept: usize,
    pub removed_empty: usize,
    pub removed_url: usize,
    pub removed_ratio: usize,
}

impl CleanReport {
    pub fn removed(&self) -> usize {
        self.removed_empty + self.removed_url + self.removed_ratio
    }
}

/// Which rule, if any, rejects a pair.
pub fn rejection(pair: &SentencePair, config: &CleanConfig) -> Option<RemovalReason> {
    let (a, b) = pair.lengths();
    if a == 0 || b == 0 {
        return Some(RemovalReason::EmptySide);
    }
    if config.drop_urls && (pair.source.contains_url() || pair.target.contains_url()) {
        return Some(RemovalReason::Url);
    }
    let (long, short) = (a.max(b) as f64, a.min(b) as f64);
    if long > config.max_ratio * short {
        return Some(RemovalReason::LengthRatio);
    }
    None
}

/// Drops degenerate, URL-bearing and length-mismatched pairs. Surviving pairs
/// keep their original order.
pub fn clean(corpus: &ParallelCorpus, config: &CleanConfig) -> Result<(ParallelCorpus, CleanReport)> {
    if config.max_ratio.is_nan() || config.max_ratio < 1.0 {
        return Err(Error::InvalidRatio(config.max_ratio));
    }
    let verdicts: Vec<Option<RemovalReason>> = corpus.pairs.par_iter().map(|pair| rejection(pair, config)).collect();

    let mut report = CleanReport { input: corpus.len(), ..Default::default() };
    let mut pairs = Vec::with_capacity(corpus.len());
    for (pair, verdict) in corpus.pairs.iter().zip(verdicts) {
        match verdict {
            None => pairs.push(pair.clone()),
            Some(RemovalReason::EmptySide) => report.removed_empty += 1,
            Some(RemovalReason::Url) => report.removed_url += 1,
            Some(RemovalReason::LengthRatio) => report.removed_ratio += 1,
        }
    }
    report.kept = pairs.len();
    let cleaned =
        ParallelCorpus { pairs, source_lang: corpus.source_lang.clone(), target_lang: corpus.target_lang.clone() };
    Ok((cleaned, report))
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use proptest::prelude::*;

    use super::*;

    fn sentence(n: usize) -> Sentence {
        Sentence::from_tokens((0..n).map(|i| format!("w{i}"))).unwrap()
    }

    fn pair(a: usize, b: usize) -> SentencePair {
        SentencePair::new(sentence(a), sentence(b))
    }

    fn write(dir: &tempfile::TempDir, name: &str, body: &[u8]) -> std::path::PathBuf {
        let path = dir.path().join(name);
        fs::File::create(&path).unwrap().write_all(body).unwrap();
        path
    }

    #[test]
    fn loads_aligned_pair() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(&dir, "s", b"a b\n");
        let t = write(&dir, "t", b"x y z\n");
        let corpus = load_corpus(&s, &t, TextEncoding::Utf8).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.pairs[0].lengths(), (2, 3));
    }

    #[test]
    fn unequal_line_counts_fail() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(&dir, "s", b"a\nb\nc\n");
        let t = write(&dir, "t", b"x\ny\n");
        let err = load_corpus(&s, &t, TextEncoding::Utf8).unwrap_err();
        assert!(matches!(err, Error::Alignment { source_lines: 3, target_lines: 2, .. }));
    }

    #[test]
    fn empty_files_give_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(&dir, "s", b"");
        let t = write(&dir, "t", b"");
        assert!(load_corpus(&s, &t, TextEncoding::Utf8).unwrap().is_empty());
    }

    #[test]
    fn bad_utf8_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(&dir, "s", b"ok\nfine\nbad \xff byte\n");
        match read_sentences(&s, TextEncoding::Utf8).unwrap_err() {
            Error::Encoding { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let latin = read_sentences(&s, TextEncoding::Latin1).unwrap();
        assert_eq!(latin[2].tokens()[1], "\u{ff}");
    }

    #[test]
    fn splits_on_unicode_whitespace() {
        let s = Sentence::parse("a\u{3000}b\tc  d\r");
        assert_eq!(s.tokens(), ["a", "b", "c", "d"]);
        assert!(Sentence::from_tokens(["a b"]).is_none());
        assert!(Sentence::from_tokens([""]).is_none());
    }

    #[test]
    fn url_pattern() {
        for url in ["http://example.com", "HTTPS://x", "ftp://h", "www.a.org", "WWW.b"] {
            assert!(is_url(url), "{url}");
        }
        for word in ["http", "wwwx", "the", "mailto:a@b", "ww.", "é"] {
            assert!(!is_url(word), "{word}");
        }
    }

    #[test]
    fn ratio_filter() {
        let config = CleanConfig::default();
        assert_eq!(rejection(&pair(12, 2), &config), Some(RemovalReason::LengthRatio));
        assert_eq!(rejection(&pair(2, 12), &config), Some(RemovalReason::LengthRatio));
        assert_eq!(rejection(&pair(10, 2), &config), None);
        assert_eq!(rejection(&pair(5, 5), &config), None);
        assert_eq!(rejection(&pair(0, 3), &config), Some(RemovalReason::EmptySide));
    }

    #[test]
    fn url_pairs_dropped_only_when_asked() {
        let p = SentencePair::new(Sentence::parse("see http://example.com now"), Sentence::parse("sieh"));
        let on = CleanConfig::default();
        let off = CleanConfig { drop_urls: false, ..on };
        assert_eq!(rejection(&p, &on), Some(RemovalReason::Url));
        assert_eq!(rejection(&p, &off), None);
    }

    #[test]
    fn rejects_ratio_below_one() {
        let config = CleanConfig { max_ratio: 0.5, drop_urls: true };
        assert!(matches!(clean(&ParallelCorpus::default(), &config), Err(Error::InvalidRatio(_))));
        let nan = CleanConfig { max_ratio: f64::NAN, drop_urls: true };
        assert!(clean(&ParallelCorpus::default(), &nan).is_err());
    }

    fn arb_corpus() -> impl Strategy<Value = ParallelCorpus> {
        let side = prop_oneof![
            4 => (0usize..15).prop_map(sentence),
            1 => Just(Sentence::parse("go to www.example.org")),
        ];
        prop::collection::vec((side.clone(), side), 0..40)
            .prop_map(|pairs| ParallelCorpus::new(pairs.into_iter().map(|(s, t)| SentencePair::new(s, t)).collect()))
    }

    proptest! {
        #[test]
        fn clean_is_idempotent_and_order_preserving(corpus in arb_corpus(), ratio in 1.0f64..8.0) {
            let config = CleanConfig { max_ratio: ratio, drop_urls: true };
            let (once, report) = clean(&corpus, &config).unwrap();
            let (twice, again) = clean(&once, &config).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(again.removed(), 0);
            prop_assert_eq!(report.kept + report.removed(), corpus.len());

            // survivors form a subsequence of the input
            let mut it = corpus.pairs.iter();
            for kept in &once.pairs {
                prop_assert!(it.any(|p| p == kept));
            }
            for p in &once.pairs {
                let (a, b) = p.lengths();
                prop_assert!(a > 0 && b > 0);
                prop_assert!(a.max(b) as f64 <= ratio * a.min(b) as f64);
            }
        }

        #[test]
        fn token_count_survives_text_roundtrip(words in prop::collection::vec("[a-z]{1,6}", 0..12)) {
            let s = Sentence::from_tokens(words).unwrap();
            prop_assert_eq!(Sentence::parse(&s.text()).len(), s.len());
            prop_assert_eq!(s.to_string(), s.text());
        }
    }
}
