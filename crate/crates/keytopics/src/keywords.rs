use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use ndarray::Array2;
use serde::de::{Deserializer, MapAccess, Visitor};
use serde::Deserialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// One keyword topic: a label and the corpus ids of its seed words.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordTopic {
    pub label: String,
    /// Sorted, deduplicated word ids.
    pub ids: Vec<usize>,
}

/// Ordered keyword topics bound to a corpus, plus `k_extra` unconstrained
/// topics appended after them. The same word may seed several topics.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordDictionary {
    pub topics: Vec<KeywordTopic>,
    pub k_extra: usize,
    /// Keywords that were dropped because they never occur in the corpus,
    /// as (topic label, surface form) pairs.
    pub dropped: Vec<(String, String)>,
    vocab_size: usize,
    membership: Vec<bool>,
    topics_of_word: Vec<Vec<usize>>,
}

impl KeywordDictionary {
    pub fn new(topics: Vec<KeywordTopic>, k_extra: usize, corpus: &Corpus) -> Result<Self> {
        Self::with_dropped(topics, k_extra, corpus, Vec::new())
    }

    fn with_dropped(
        topics: Vec<KeywordTopic>,
        k_extra: usize,
        corpus: &Corpus,
        dropped: Vec<(String, String)>,
    ) -> Result<Self> {
        let vocab_size = corpus.vocab_size();
        let mut seen = HashMap::new();
        for (k, topic) in topics.iter().enumerate() {
            if topic.ids.is_empty() {
                return Err(Error::schema(format!(
                    "keyword topic '{}' has no keywords present in the corpus",
                    topic.label
                )));
            }
            if let Some(prev) = seen.insert(topic.label.clone(), k) {
                return Err(Error::schema(format!(
                    "duplicate topic label '{}' (positions {prev} and {k})",
                    topic.label
                )));
            }
            if topic.ids.iter().any(|&v| v >= vocab_size) {
                return Err(Error::schema(format!(
                    "keyword topic '{}' references a word id outside the vocabulary",
                    topic.label
                )));
            }
        }
        let k_tilde = topics.len();
        let mut membership = vec![false; vocab_size * k_tilde];
        let mut topics_of_word = vec![Vec::new(); vocab_size];
        for (k, topic) in topics.iter().enumerate() {
            for &v in &topic.ids {
                membership[v * k_tilde + k] = true;
                topics_of_word[v].push(k);
            }
        }
        Ok(KeywordDictionary {
            topics,
            k_extra,
            dropped,
            vocab_size,
            membership,
            topics_of_word,
        })
    }

    /// A dictionary with no keyword topics (plain weighted LDA setups).
    pub fn without_keywords(k_total: usize, corpus: &Corpus) -> Self {
        KeywordDictionary {
            topics: Vec::new(),
            k_extra: k_total,
            dropped: Vec::new(),
            vocab_size: corpus.vocab_size(),
            membership: Vec::new(),
            topics_of_word: vec![Vec::new(); corpus.vocab_size()],
        }
    }

    pub fn k_keyword(&self) -> usize {
        self.topics.len()
    }

    pub fn k_total(&self) -> usize {
        self.topics.len() + self.k_extra
    }

    /// Number of keywords of topic k.
    pub fn num_keywords(&self, k: usize) -> usize {
        self.topics[k].ids.len()
    }

    #[inline]
    pub fn contains(&self, k: usize, v: usize) -> bool {
        k < self.k_keyword() && self.membership[v * self.k_keyword() + k]
    }

    /// Keyword topics that list word v.
    pub fn topics_of_word(&self, v: usize) -> &[usize] {
        &self.topics_of_word[v]
    }

    /// Whether word v is a keyword of any topic.
    pub fn is_any_keyword(&self, v: usize) -> bool {
        !self.topics_of_word[v].is_empty()
    }

    pub fn label(&self, k: usize) -> String {
        if k < self.k_keyword() {
            self.topics[k].label.clone()
        } else {
            format!("extra_{}", k - self.k_keyword() + 1)
        }
    }
}

/// Keyword file contents in file order, duplicates preserved for detection.
struct KeywordFile(Vec<(String, Vec<String>)>);

impl<'de> Deserialize<'de> for KeywordFile {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = KeywordFile;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a JSON object mapping topic labels to keyword lists")
            }
            fn visit_map<A: MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some((label, words)) = map.next_entry::<String, Vec<String>>()? {
                    entries.push((label, words));
                }
                Ok(KeywordFile(entries))
            }
        }
        deserializer.deserialize_map(V)
    }
}

/// Load a keyword file and resolve surface forms against the corpus
/// vocabulary. Words absent from the corpus are dropped with a warning (they
/// could never receive keyword probability mass); a topic losing all of its
/// keywords is an error.
pub fn load_keywords(
    path: impl AsRef<Path>,
    corpus: &Corpus,
    k_extra: usize,
) -> Result<KeywordDictionary> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_keywords(&text, corpus, k_extra)
}

pub fn parse_keywords(text: &str, corpus: &Corpus, k_extra: usize) -> Result<KeywordDictionary> {
    let file: KeywordFile =
        serde_json::from_str(text).map_err(|e| Error::schema(format!("keyword file: {e}")))?;
    let lookup: HashMap<&str, usize> = corpus
        .vocab
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    let mut topics = Vec::new();
    let mut dropped = Vec::new();
    for (label, words) in file.0 {
        let mut ids = Vec::new();
        for word in &words {
            match lookup.get(word.as_str()) {
                Some(&id) => ids.push(id),
                None => {
                    log::warn!("keyword '{word}' of topic '{label}' not in corpus; dropped");
                    dropped.push((label.clone(), word.clone()));
                }
            }
        }
        ids.sort_unstable();
        ids.dedup();
        topics.push(KeywordTopic { label, ids });
    }
    KeywordDictionary::with_dropped(topics, k_extra, corpus, dropped)
}

/// Corpus-level keyword quality diagnostics.
#[derive(Debug, Clone)]
pub struct KeywordDiagnostics {
    /// Share of each document's tokens that are keywords of any topic.
    pub doc_proportion: Vec<f64>,
    /// Distinct keywords of each topic present per document (D x K_tilde).
    pub doc_unique_counts: Array2<usize>,
    /// Corpus frequency of every keyword, per topic.
    pub keyword_frequencies: Vec<Vec<(String, usize)>>,
}

pub fn keyword_diagnostics(corpus: &Corpus, dict: &KeywordDictionary) -> KeywordDiagnostics {
    let d_total = corpus.num_docs();
    let k_tilde = dict.k_keyword();
    let mut doc_proportion = vec![0.0; d_total];
    let mut doc_unique_counts = Array2::zeros((d_total, k_tilde));
    for (d, doc) in corpus.documents.iter().enumerate() {
        let mut keyword_tokens = 0usize;
        let mut seen: Vec<usize> = doc.to_vec();
        for &v in doc {
            if dict.is_any_keyword(v) {
                keyword_tokens += 1;
            }
        }
        seen.sort_unstable();
        seen.dedup();
        for &v in &seen {
            for &k in dict.topics_of_word(v) {
                doc_unique_counts[[d, k]] += 1;
            }
        }
        doc_proportion[d] = keyword_tokens as f64 / doc.len() as f64;
    }
    let mut counts = vec![0usize; corpus.vocab_size()];
    for doc in &corpus.documents {
        for &v in doc {
            counts[v] += 1;
        }
    }
    let keyword_frequencies = dict
        .topics
        .iter()
        .map(|t| {
            t.ids
                .iter()
                .map(|&v| (corpus.vocab[v].clone(), counts[v]))
                .collect()
        })
        .collect();
    KeywordDiagnostics {
        doc_proportion,
        doc_unique_counts,
        keyword_frequencies,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_xyz() -> Corpus {
        // vocab: x=0, y=1, z=2
        Corpus::from_token_ids(vec![vec![0, 0, 1], vec![1, 2]], 3)
    }

    fn corpus_named(words: &[&str]) -> Corpus {
        let mut c = Corpus::from_token_ids(vec![(0..words.len()).collect()], words.len());
        c.vocab = words.iter().map(|w| w.to_string()).collect();
        c
    }

    #[test]
    fn resolves_and_counts_topics() {
        let corpus = corpus_named(&["x", "y", "z"]);
        let dict = parse_keywords(r#"{"A":["x","y"]}"#, &corpus, 1).unwrap();
        assert_eq!(dict.k_keyword(), 1);
        assert_eq!(dict.k_total(), 2);
        assert_eq!(dict.topics[0].ids, vec![0, 1]);
        assert!(dict.dropped.is_empty());
    }

    #[test]
    fn out_of_vocabulary_keywords_dropped_with_record() {
        let corpus = corpus_named(&["x", "y"]);
        let dict = parse_keywords(r#"{"A":["x","zzz"]}"#, &corpus, 0).unwrap();
        assert_eq!(dict.topics[0].ids, vec![0]);
        assert_eq!(dict.dropped, vec![("A".to_string(), "zzz".to_string())]);
    }

    #[test]
    fn topic_with_no_resolvable_keywords_errors() {
        let corpus = corpus_named(&["x"]);
        let err = parse_keywords(r#"{"A":["zzz"]}"#, &corpus, 0).unwrap_err();
        assert!(err.to_string().contains("'A'"), "{err}");
    }

    #[test]
    fn duplicate_label_errors() {
        let corpus = corpus_named(&["x", "y"]);
        let err = parse_keywords(r#"{"A":["x"],"A":["y"]}"#, &corpus, 0).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn file_order_preserved() {
        let corpus = corpus_named(&["x", "y", "z"]);
        let dict = parse_keywords(r#"{"B":["y"],"A":["x"],"C":["z"]}"#, &corpus, 0).unwrap();
        let labels: Vec<_> = dict.topics.iter().map(|t| t.label.clone()).collect();
        assert_eq!(labels, vec!["B", "A", "C"]);
    }

    #[test]
    fn shared_keywords_allowed() {
        let corpus = corpus_named(&["x", "y"]);
        let dict = parse_keywords(r#"{"A":["x","y"],"B":["y"]}"#, &corpus, 0).unwrap();
        assert!(dict.contains(0, 1));
        assert!(dict.contains(1, 1));
        assert_eq!(dict.topics_of_word(1), &[0, 1]);
    }

    #[test]
    fn diagnostics_proportion_and_unique() {
        // doc0 = [x, x, y], topic A = {x}: proportion 2/3, unique 1
        let corpus = corpus_xyz();
        let dict = KeywordDictionary::new(
            vec![KeywordTopic {
                label: "A".into(),
                ids: vec![0],
            }],
            0,
            &corpus,
        )
        .unwrap();
        let diag = keyword_diagnostics(&corpus, &dict);
        assert!((diag.doc_proportion[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(diag.doc_unique_counts[[0, 0]], 1);
        // doc1 = [y, z] has no keywords of A
        assert_eq!(diag.doc_proportion[1], 0.0);
        assert_eq!(diag.doc_unique_counts[[1, 0]], 0);
    }

    #[test]
    fn diagnostics_full_coverage_multi_topic() {
        // doc [x, y]; A = {x, y}, B = {y}: proportion 1.0, counts (2, 1)
        let corpus = Corpus::from_token_ids(vec![vec![0, 1]], 2);
        let dict = KeywordDictionary::new(
            vec![
                KeywordTopic { label: "A".into(), ids: vec![0, 1] },
                KeywordTopic { label: "B".into(), ids: vec![1] },
            ],
            0,
            &corpus,
        )
        .unwrap();
        let diag = keyword_diagnostics(&corpus, &dict);
        assert_eq!(diag.doc_proportion[0], 1.0);
        assert_eq!(diag.doc_unique_counts[[0, 0]], 2);
        assert_eq!(diag.doc_unique_counts[[0, 1]], 1);
    }

    #[test]
    fn keyword_resolution_survives_document_permutation() {
        let lines_a = r#"{"id":"d1","tokens":["a","b"]}
{"id":"d2","tokens":["c","b"]}"#;
        let lines_b = r#"{"id":"d2","tokens":["c","b"]}
{"id":"d1","tokens":["a","b"]}"#;
        let opts = crate::corpus::CorpusOptions::default();
        let ca =
            crate::corpus::load_corpus_from_reader(std::io::Cursor::new(lines_a), &opts).unwrap();
        let cb =
            crate::corpus::load_corpus_from_reader(std::io::Cursor::new(lines_b), &opts).unwrap();
        let da = parse_keywords(r#"{"A":["b","c"]}"#, &ca, 0).unwrap();
        let db = parse_keywords(r#"{"A":["b","c"]}"#, &cb, 0).unwrap();
        let surf = |c: &Corpus, d: &KeywordDictionary| {
            let mut s: Vec<String> = d.topics[0].ids.iter().map(|&v| c.vocab[v].clone()).collect();
            s.sort();
            s
        };
        assert_eq!(surf(&ca, &da), surf(&cb, &db));
    }
}
