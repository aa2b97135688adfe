use std::io::Write;
use std::path::Path;

use crate::corpus::Corpus;
use crate::error::Result;

/// Per-word information weights: m(v) = -log2 of the word's relative corpus
/// frequency. A word that makes up the entire corpus gets weight zero; rare
/// words get large weights. No flooring or capping is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct TermWeights {
    pub m: Vec<f64>,
    pub total_tokens: usize,
    pub counts: Vec<usize>,
}

pub fn compute_term_weights(corpus: &Corpus, enabled: bool) -> TermWeights {
    let mut counts = vec![0usize; corpus.vocab_size()];
    for doc in &corpus.documents {
        for &v in doc {
            counts[v] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let m = if enabled {
        counts
            .iter()
            .map(|&c| -(c as f64 / total as f64).log2())
            .collect()
    } else {
        vec![1.0; corpus.vocab_size()]
    };
    TermWeights {
        m,
        total_tokens: total,
        counts,
    }
}

impl TermWeights {
    /// Uniform weights for synthetic corpora built directly from ids.
    pub fn unweighted(vocab_size: usize) -> TermWeights {
        TermWeights {
            m: vec![1.0; vocab_size],
            total_tokens: 0,
            counts: vec![0; vocab_size],
        }
    }
}

/// Write `word,count,weight` rows.
pub fn export_weights(weights: &TermWeights, corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(out, "word,count,weight")?;
    for v in 0..corpus.vocab_size() {
        writeln!(out, "{},{},{}", corpus.vocab[v], weights.counts[v], weights.m[v])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rare_word_weight() {
        // 8 tokens total, "x" occurs once: -log2(1/8) = 3.
        let corpus = Corpus::from_token_ids(vec![vec![0, 1, 1, 1], vec![1, 1, 1, 1]], 2);
        let w = compute_term_weights(&corpus, true);
        assert_eq!(w.total_tokens, 8);
        assert_eq!(w.m[0], 3.0);
    }

    #[test]
    fn single_word_corpus_weight_zero() {
        let corpus = Corpus::from_token_ids(vec![vec![0, 0, 0]], 1);
        let w = compute_term_weights(&corpus, true);
        assert_eq!(w.m[0], 0.0);
    }

    #[test]
    fn two_balanced_words() {
        let corpus = Corpus::from_token_ids(vec![vec![0, 0, 0, 0], vec![1, 1, 1, 1]], 2);
        let w = compute_term_weights(&corpus, true);
        assert_eq!(w.m, vec![1.0, 1.0]);
    }

    #[test]
    fn disabled_weights_are_one() {
        let corpus = Corpus::from_token_ids(vec![vec![0, 1, 1]], 2);
        let w = compute_term_weights(&corpus, false);
        assert_eq!(w.m, vec![1.0, 1.0]);
        assert_eq!(w.counts, vec![1, 2]);
    }

    #[test]
    fn implied_frequencies_sum_to_one() {
        // 2^(-m(v)) recovers each word's relative frequency.
        let corpus = Corpus::from_token_ids(vec![vec![0, 1, 2, 1, 0, 0], vec![2, 2, 2]], 3);
        let w = compute_term_weights(&corpus, true);
        let total: f64 = w.m.iter().map(|&m| 2f64.powf(-m)).sum();
        assert!((total - 1.0).abs() < 1e-12, "total = {total}");
    }
}
