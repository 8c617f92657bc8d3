//! Text preprocessing: cleaning, tokenization, stopword removal, suffix
//! stemming and vocabulary indexing.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};

/// Reserved id for out-of-vocabulary tokens.
pub const UNK: usize = 0;

/// One labelled input document.
#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub id: String,
    pub raw_text: String,
    pub label: usize,
    pub modality_refs: Vec<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, raw_text: impl Into<String>, label: usize) -> Self {
        Document {
            id: id.into(),
            raw_text: raw_text.into(),
            label,
            modality_refs: Vec::new(),
        }
    }
}

const DEFAULT_STOPWORDS: [&str; 50] = [
    "a", "about", "above", "after", "again", "all", "am", "an", "and", "any", "are", "as", "at",
    "be", "been", "but", "by", "can", "did", "do", "for", "from", "had", "has", "have", "he",
    "her", "his", "i", "if", "in", "into", "is", "it", "its", "me", "my", "of", "on", "or",
    "our", "she", "so", "that", "the", "their", "they", "this", "to", "was",
];

/// Set of lowercase tokens dropped before stemming.
#[derive(Clone, Debug, PartialEq)]
pub struct StopwordList {
    words: BTreeSet<String>,
}

impl Default for StopwordList {
    fn default() -> Self {
        StopwordList {
            words: DEFAULT_STOPWORDS.iter().map(|w| w.to_string()).collect(),
        }
    }
}

impl StopwordList {
    pub fn empty() -> Self {
        StopwordList {
            words: BTreeSet::new(),
        }
    }

    /// Lowercases entries and drops empty ones.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        StopwordList {
            words: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    /// One token per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        StopwordList::from_words(text.lines().map(|l| l.split('#').next().unwrap_or("")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(StopwordList::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

/// Lowercases, strips `<...>` tags, replaces anything outside
/// `[a-z0-9']` and whitespace by a space, and collapses whitespace.
pub fn clean(raw: &str) -> String {
    let lowered = raw.to_lowercase();
    let mut kept = String::with_capacity(lowered.len());
    let mut rest = lowered.as_str();
    while let Some(ch) = rest.chars().next() {
        if ch == '<' {
            if let Some(close) = rest.find('>') {
                kept.push(' ');
                rest = &rest[close + 1..];
                continue;
            }
        }
        match ch {
            'a'..='z' | '0'..='9' | '\'' => kept.push(ch),
            _ => kept.push(' '),
        }
        rest = &rest[ch.len_utf8()..];
    }
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn tokenize(cleaned: &str) -> Vec<String> {
    cleaned.split_whitespace().map(str::to_owned).collect()
}

pub fn remove_stopwords(tokens: Vec<String>, stoplist: &StopwordList) -> Vec<String> {
    tokens.into_iter().filter(|t| !stoplist.contains(t)).collect()
}

fn is_vowel(b: u8) -> bool {
    matches!(b, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn strip_verbal(token: &str, suffix: &str) -> Option<String> {
    let stem = token.strip_suffix(suffix)?;
    if !stem.bytes().any(is_vowel) {
        return None;
    }
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 2 && b[n - 1] == b[n - 2] && b[n - 1].is_ascii_alphabetic() && !is_vowel(b[n - 1]) {
        Some(stem[..n - 1].to_owned())
    } else {
        Some(stem.to_owned())
    }
}

/// Single-pass suffix stripper; the first matching rule wins.
pub fn stem(token: &str) -> String {
    if let Some(s) = token.strip_suffix("sses") {
        return format!("{s}ss");
    }
    if let Some(s) = token.strip_suffix("ies") {
        return format!("{s}i");
    }
    if token.ends_with('s') && !token.ends_with("ss") && token.len() > 1 {
        return token[..token.len() - 1].to_owned();
    }
    if let Some(s) = strip_verbal(token, "ing") {
        return s;
    }
    if let Some(s) = strip_verbal(token, "ed") {
        return s;
    }
    token.to_owned()
}

/// The full cleaning pipeline for one document.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Preprocessor {
    pub stopwords: StopwordList,
}

impl Preprocessor {
    pub fn new(stopwords: StopwordList) -> Self {
        Preprocessor { stopwords }
    }

    pub fn process(&self, raw: &str) -> Vec<String> {
        remove_stopwords(tokenize(&clean(raw)), &self.stopwords)
            .iter()
            .map(|t| stem(t))
            .collect()
    }
}

/// Token ↔ id mapping with document frequencies. Id 0 is [`UNK`].
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
    doc_freq: Vec<usize>,
    total_docs: usize,
}

impl Vocabulary {
    /// Assigns ids to tokens found in at least `min_count` documents, most
    /// frequent first, ties lexicographic.
    pub fn from_token_docs<'a, I>(docs: I, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut df: HashMap<&str, usize> = HashMap::new();
        let mut total_docs = 0;
        let mut surviving = 0;
        for doc in docs {
            total_docs += 1;
            if !doc.is_empty() {
                surviving += 1;
            }
            let distinct: HashSet<&str> = doc.iter().map(String::as_str).collect();
            for t in distinct {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        if surviving == 0 {
            return Err(Error::EmptyCorpus);
        }
        let mut ranked: Vec<(&str, usize)> = df.into_iter().filter(|&(_, c)| c >= min_count).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Ok(Vocabulary::from_ranked(
            ranked.into_iter().map(|(t, c)| (t.to_owned(), c)),
            total_docs,
        ))
    }

    pub fn build(corpus: &[Document], pre: &Preprocessor, min_count: usize) -> Result<Self> {
        let token_docs: Vec<Vec<String>> = corpus.iter().map(|d| pre.process(&d.raw_text)).collect();
        Vocabulary::from_token_docs(token_docs.iter().map(Vec::as_slice), min_count)
    }

    /// Rebuilds a vocabulary from `(token, doc_freq)` pairs in id order.
    pub fn from_ranked(entries: impl IntoIterator<Item = (String, usize)>, total_docs: usize) -> Self {
        let mut tokens = vec![String::new()];
        let mut doc_freq = vec![0];
        let mut ids = HashMap::new();
        for (tok, c) in entries {
            ids.insert(tok.clone(), tokens.len());
            tokens.push(tok);
            doc_freq.push(c);
        }
        Vocabulary {
            tokens,
            ids,
            doc_freq,
            total_docs,
        }
    }

    /// Number of real tokens, excluding UNK.
    pub fn len(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        if id == UNK {
            return None;
        }
        self.tokens.get(id).map(String::as_str)
    }

    pub fn doc_freq(&self, id: usize) -> usize {
        self.doc_freq.get(id).copied().unwrap_or(0)
    }

    pub fn total_docs(&self) -> usize {
        self.total_docs
    }

    /// `(token, doc_freq)` in id order, UNK excluded.
    pub fn entries(&self) -> impl Iterator<Item = (&str, usize)> {
        self.tokens[1..]
            .iter()
            .map(String::as_str)
            .zip(self.doc_freq[1..].iter().copied())
    }
}

pub fn encode(tokens: &[String], vocab: &Vocabulary) -> Vec<usize> {
    tokens.iter().map(|t| vocab.id(t).unwrap_or(UNK)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn clean_examples() {
        assert_eq!(clean("Hello, <b>World</b>!"), "hello world");
        assert_eq!(clean(""), "");
        assert_eq!(clean("run run run"), "run run run");
        assert_eq!(clean("  Don't\tSTOP\n"), "don't stop");
        assert_eq!(clean("a<br/>b"), "a b");
        assert_eq!(clean("x < y"), "x y");
        assert_eq!(clean("café 42"), "caf 42");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("the cat sat"), toks(&["the", "cat", "sat"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize(&clean("don't stop")), toks(&["don't", "stop"]));
    }

    #[test]
    fn stopword_examples() {
        let stop = StopwordList::from_words(["the", "and"]);
        assert_eq!(remove_stopwords(toks(&["the", "cat", "and", "dog"]), &stop), toks(&["cat", "dog"]));
        assert_eq!(remove_stopwords(toks(&["cat"]), &StopwordList::empty()), toks(&["cat"]));
        assert!(remove_stopwords(toks(&["the", "the"]), &StopwordList::from_words(["the"])).is_empty());
    }

    #[test]
    fn default_stopwords_are_fifty_lowercase() {
        let s = StopwordList::default();
        assert_eq!(s.len(), 50);
        assert!(s.iter().all(|w| !w.is_empty() && w == w.to_lowercase()));
        assert!(s.contains("and") && s.contains("the"));
    }

    #[test]
    fn stopword_file_parsing() {
        let s = StopwordList::parse("# header\nThe\n\nand # inline\n  \n");
        assert_eq!(s.iter().collect::<Vec<_>>(), vec!["and", "the"]);
    }

    #[test]
    fn stem_examples() {
        assert_eq!(stem("running"), "run");
        assert_eq!(stem("cats"), "cat");
        assert_eq!(stem("caress"), "caress");
        assert_eq!(stem("caresses"), "caress");
        assert_eq!(stem("ponies"), "poni");
        assert_eq!(stem("hopped"), "hop");
        assert_eq!(stem("sing"), "sing");
        assert_eq!(stem("falling"), "fal");
        assert_eq!(stem("s"), "s");
        assert_eq!(stem("ran"), "ran");
    }

    #[test]
    fn build_vocab_examples() {
        let pre = Preprocessor::new(StopwordList::empty());
        let corpus = vec![Document::new("1", "cat dog", 0), Document::new("2", "cat", 0)];
        let v = Vocabulary::build(&corpus, &pre, 1).unwrap();
        assert_eq!((v.id("cat"), v.id("dog")), (Some(1), Some(2)));
        assert_eq!(v.doc_freq(1), 2);

        let v = Vocabulary::build(&corpus, &pre, 3).unwrap();
        assert_eq!(v.len(), 0);
        assert_eq!(encode(&toks(&["cat"]), &v), vec![UNK]);

        let v = Vocabulary::build(&[Document::new("1", "a a a", 0)], &pre, 1).unwrap();
        assert_eq!(v.id("a"), Some(1));
        assert_eq!(v.doc_freq(1), 1);

        let all_stop = vec![Document::new("1", "the and", 0)];
        assert!(matches!(
            Vocabulary::build(&all_stop, &Preprocessor::default(), 1),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(Vocabulary::build(&[], &pre, 1), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn vocab_ties_are_lexicographic() {
        let docs = [toks(&["zeta", "alpha"]), toks(&["mid"])];
        let v = Vocabulary::from_token_docs(docs.iter().map(Vec::as_slice), 1).unwrap();
        let order: Vec<_> = v.entries().map(|(t, _)| t).collect();
        assert_eq!(order, vec!["alpha", "mid", "zeta"]);
    }

    #[test]
    fn encode_examples() {
        let v = Vocabulary::from_ranked([("cat".to_string(), 1), ("dog".to_string(), 1)], 1);
        assert_eq!(encode(&toks(&["cat", "dog"]), &v), vec![1, 2]);
        let v = Vocabulary::from_ranked([("cat".to_string(), 1)], 1);
        assert_eq!(encode(&toks(&["zebra"]), &v), vec![0]);
        assert!(encode(&[], &v).is_empty());
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(s in "\\PC{0,60}") {
            let once = clean(&s);
            prop_assert_eq!(clean(&once), once.clone());
            prop_assert!(tokenize(&once).iter().all(|t| !t.is_empty()));
        }

        #[test]
        fn stopword_removal_shrinks_and_is_idempotent(words in proptest::collection::vec("[a-e]{1,3}", 0..20)) {
            let stop = StopwordList::from_words(["a", "bb", "cde"]);
            let once = remove_stopwords(words.clone(), &stop);
            prop_assert!(once.len() <= words.len());
            prop_assert!(once.iter().all(|t| !stop.contains(t)));
            prop_assert_eq!(remove_stopwords(once.clone(), &stop), once);
        }

        #[test]
        fn stem_never_grows(tok in "[a-z']{1,12}") {
            prop_assert!(stem(&tok).len() <= tok.len());
        }

        #[test]
        fn vocab_is_deterministic_and_bounded(docs in proptest::collection::vec(
            proptest::collection::vec("[a-f]{1,2}", 1..8), 1..8)) {
            let v1 = Vocabulary::from_token_docs(docs.iter().map(Vec::as_slice), 1).unwrap();
            let v2 = Vocabulary::from_token_docs(docs.iter().map(Vec::as_slice), 1).unwrap();
            prop_assert_eq!(&v1, &v2);
            for (i, (tok, df)) in v1.entries().enumerate() {
                prop_assert_eq!(v1.id(tok), Some(i + 1));
                prop_assert_eq!(v1.token(i + 1), Some(tok));
                prop_assert!(df <= v1.total_docs());
            }
            for d in &docs {
                prop_assert!(encode(d, &v1).iter().all(|&id| id < v1.len() + 1));
            }
        }
    }
}
