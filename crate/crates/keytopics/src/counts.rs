use ndarray::{Array1, Array2};

use crate::corpus::Corpus;
use crate::weights::TermWeights;

/// Running sum stored as an error-free double pair (hi, lo).
///
/// Additions and subtractions stay exact while the running value and its
/// increments span fewer than ~100 significand bits, which weighted token
/// counts do at any realistic corpus size. Exactness buys two things the
/// sampler relies on: removing a token and putting it back restores the
/// tables bitwise, and an incremental table always equals one rebuilt from
/// scratch, so snapshot/resume cannot drift.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExactSum {
    hi: f64,
    lo: f64,
}

impl ExactSum {
    pub fn value(self) -> f64 {
        self.hi
    }

    pub fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        let (hi, lo) = two_sum(s, self.lo + e);
        self.hi = hi;
        self.lo = lo;
    }

    pub fn sub(&mut self, x: f64) {
        self.add(-x);
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// Weighted count tables shared by every sampler variant.
///
/// Per-cell assignment counts are kept as integers; the weighted values the
/// conditionals consume are derived from them (products for the per-word
/// cells, `ExactSum` accumulators for the marginals). Topic indices below
/// `k_keyword` are the keyword topics.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTables {
    num_docs: usize,
    k_total: usize,
    k_keyword: usize,
    vocab: usize,
    m: Vec<f64>,
    c_kv: Array2<u32>,
    c_tilde_kv: Array2<u32>,
    n_k: Vec<ExactSum>,
    n_tilde_k: Vec<ExactSum>,
    n_dk: Vec<ExactSum>,
}

impl CountTables {
    pub fn empty(
        num_docs: usize,
        k_total: usize,
        k_keyword: usize,
        weights: &TermWeights,
    ) -> Self {
        let vocab = weights.m.len();
        CountTables {
            num_docs,
            k_total,
            k_keyword,
            vocab,
            m: weights.m.clone(),
            c_kv: Array2::zeros((k_total, vocab)),
            c_tilde_kv: Array2::zeros((k_keyword, vocab)),
            n_k: vec![ExactSum::default(); k_total],
            n_tilde_k: vec![ExactSum::default(); k_keyword],
            n_dk: vec![ExactSum::default(); num_docs * k_total],
        }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn k_total(&self) -> usize {
        self.k_total
    }

    pub fn k_keyword(&self) -> usize {
        self.k_keyword
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn weight(&self, v: usize) -> f64 {
        self.m[v]
    }

    /// Weighted non-keyword count of word v in topic k.
    #[inline]
    pub fn n_kv(&self, k: usize, v: usize) -> f64 {
        self.c_kv[[k, v]] as f64 * self.m[v]
    }

    /// Weighted keyword count of word v in keyword topic k.
    #[inline]
    pub fn n_tilde_kv(&self, k: usize, v: usize) -> f64 {
        self.c_tilde_kv[[k, v]] as f64 * self.m[v]
    }

    #[inline]
    pub fn n_k(&self, k: usize) -> f64 {
        self.n_k[k].value()
    }

    /// Zero for no-keyword topics, which have no keyword table row.
    #[inline]
    pub fn n_tilde_k(&self, k: usize) -> f64 {
        if k < self.k_keyword {
            self.n_tilde_k[k].value()
        } else {
            0.0
        }
    }

    #[inline]
    pub fn n_dk(&self, d: usize, k: usize) -> f64 {
        self.n_dk[d * self.k_total + k].value()
    }

    /// Weighted length of document d (row sum of n_dk).
    pub fn doc_total(&self, d: usize) -> f64 {
        let mut acc = ExactSum::default();
        for k in 0..self.k_total {
            acc.add(self.n_dk(d, k));
        }
        acc.value()
    }

    pub fn add_token(&mut self, d: usize, v: usize, k: usize, keyword: bool, m: f64) {
        if keyword {
            debug_assert!(k < self.k_keyword);
            self.c_tilde_kv[[k, v]] += 1;
            self.n_tilde_k[k].add(m);
        } else {
            self.c_kv[[k, v]] += 1;
            self.n_k[k].add(m);
        }
        self.n_dk[d * self.k_total + k].add(m);
    }

    pub fn remove_token(&mut self, d: usize, v: usize, k: usize, keyword: bool, m: f64) {
        if keyword {
            let cell = &mut self.c_tilde_kv[[k, v]];
            *cell = cell.checked_sub(1).expect("keyword count underflow");
            self.n_tilde_k[k].sub(m);
        } else {
            let cell = &mut self.c_kv[[k, v]];
            *cell = cell.checked_sub(1).expect("count underflow");
            self.n_k[k].sub(m);
        }
        self.n_dk[d * self.k_total + k].sub(m);
        debug_assert!(self.n_dk[d * self.k_total + k].value() >= -1e-12);
    }

    /// Plain f64 snapshots of the five weighted tables, in the order
    /// (n_kv, n_tilde_kv, n_dk, n_k, n_tilde_k).
    pub fn dense(&self) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array1<f64>, Array1<f64>) {
        let n_kv = Array2::from_shape_fn((self.k_total, self.vocab), |(k, v)| self.n_kv(k, v));
        let n_tilde_kv =
            Array2::from_shape_fn((self.k_keyword, self.vocab), |(k, v)| self.n_tilde_kv(k, v));
        let n_dk = Array2::from_shape_fn((self.num_docs, self.k_total), |(d, k)| self.n_dk(d, k));
        let n_k = Array1::from_shape_fn(self.k_total, |k| self.n_k(k));
        let n_tilde_k = Array1::from_shape_fn(self.k_keyword, |k| self.n_tilde_k(k));
        (n_kv, n_tilde_kv, n_dk, n_k, n_tilde_k)
    }
}

/// Build count tables from scratch out of the assignments.
///
/// n_kv and n_tilde_kv collect tokens with s = 0 and s = 1 respectively,
/// each scaled by the term weight of its word; n_dk sums token weights per
/// document and topic.
pub fn rebuild_counts(
    z: &[Vec<usize>],
    s: &[Vec<u8>],
    corpus: &Corpus,
    weights: &TermWeights,
    k_total: usize,
    k_keyword: usize,
) -> CountTables {
    let mut tables = CountTables::empty(corpus.num_docs(), k_total, k_keyword, weights);
    for (d, doc) in corpus.documents.iter().enumerate() {
        for (i, &v) in doc.iter().enumerate() {
            tables.add_token(d, v, z[d][i], s[d][i] == 1, weights.m[v]);
        }
    }
    tables
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use proptest::prelude::*;

    fn weights_of(m: Vec<f64>) -> TermWeights {
        TermWeights {
            m,
            total_tokens: 0,
            counts: vec![],
        }
    }

    #[test]
    fn rebuild_single_token_nonkeyword() {
        let corpus = Corpus::from_token_ids(vec![vec![0]], 1);
        let w = weights_of(vec![2.0]);
        let t = rebuild_counts(&[vec![0]], &[vec![0]], &corpus, &w, 2, 1);
        assert_eq!(t.n_kv(0, 0), 2.0);
        assert_eq!(t.n_dk(0, 0), 2.0);
        assert_eq!(t.n_tilde_kv(0, 0), 0.0);
        assert_eq!(t.n_k(0), 2.0);
    }

    #[test]
    fn rebuild_single_token_keyword() {
        let corpus = Corpus::from_token_ids(vec![vec![0]], 1);
        let w = weights_of(vec![2.0]);
        let t = rebuild_counts(&[vec![0]], &[vec![1]], &corpus, &w, 2, 1);
        assert_eq!(t.n_tilde_kv(0, 0), 2.0);
        assert_eq!(t.n_kv(0, 0), 0.0);
        assert_eq!(t.n_dk(0, 0), 2.0);
        assert_eq!(t.n_tilde_k(0), 2.0);
    }

    #[test]
    fn unweighted_tables_are_raw_counts() {
        let corpus = Corpus::from_token_ids(vec![vec![0, 1, 0], vec![1]], 2);
        let w = weights_of(vec![1.0, 1.0]);
        let z = vec![vec![0, 1, 0], vec![1]];
        let s = vec![vec![0, 0, 0], vec![0]];
        let t = rebuild_counts(&z, &s, &corpus, &w, 2, 0);
        assert_eq!(t.n_kv(0, 0), 2.0);
        assert_eq!(t.n_kv(1, 1), 2.0);
        assert_eq!(t.n_dk(0, 0), 2.0);
        assert_eq!(t.n_dk(0, 1), 1.0);
        assert_eq!(t.n_k(0), 2.0);
        assert_eq!(t.n_k(1), 2.0);
    }

    #[test]
    fn marginals_match_cell_sums() {
        let corpus = Corpus::from_token_ids(vec![vec![0, 1, 2, 1], vec![2, 2, 0]], 3);
        let w = weights_of(vec![0.1, 0.3, 1.7]);
        let z = vec![vec![0, 1, 0, 1], vec![0, 1, 1]];
        let s = vec![vec![0, 0, 1, 0], vec![0, 1, 0]];
        let t = rebuild_counts(&z, &s, &corpus, &w, 2, 2);
        for k in 0..2 {
            let sum: f64 = (0..3).map(|v| t.n_kv(k, v)).sum();
            assert!((t.n_k(k) - sum).abs() <= 1e-9 * sum.max(1.0));
            let tsum: f64 = (0..3).map(|v| t.n_tilde_kv(k, v)).sum();
            assert!((t.n_tilde_k(k) - tsum).abs() <= 1e-9 * tsum.max(1.0));
        }
    }

    proptest! {
        // Removing a token and putting it back (and vice versa) restores the
        // tables exactly, including the cached marginals.
        #[test]
        fn add_remove_is_exact(
            ops in prop::collection::vec((0usize..3, 0usize..4, 0usize..3, prop::bool::ANY), 1..40),
            m in prop::collection::vec(0.01f64..20.0, 4),
        ) {
            let w = weights_of(m.clone());
            let mut t = CountTables::empty(3, 3, 2, &w);
            // Seed some occupancy so removals have something to act on.
            for (d, v, k, s) in &ops {
                let k = if *s { k % 2 } else { *k };
                t.add_token(*d, *v, k, *s, m[*v]);
            }
            let before = t.clone();
            for (d, v, k, s) in &ops {
                let k = if *s { k % 2 } else { *k };
                t.add_token(*d, *v, k, *s, m[*v]);
                t.remove_token(*d, *v, k, *s, m[*v]);
                prop_assert_eq!(&t, &before);
                t.remove_token(*d, *v, k, *s, m[*v]);
                t.add_token(*d, *v, k, *s, m[*v]);
                prop_assert_eq!(&t, &before);
            }
        }

        // Incremental accumulation equals a from-scratch rebuild no matter
        // the order tokens were applied in.
        #[test]
        fn order_independent(
            zs in prop::collection::vec((0usize..3, prop::bool::ANY), 6),
            m in prop::collection::vec(0.01f64..20.0, 3),
        ) {
            let docs = vec![vec![0usize, 1, 2], vec![2, 1, 0]];
            let corpus = Corpus::from_token_ids(docs.clone(), 3);
            let w = weights_of(m);
            let z: Vec<Vec<usize>> = vec![
                zs[..3].iter().map(|(k, _)| *k).collect(),
                zs[3..].iter().map(|(k, _)| *k).collect(),
            ];
            let s: Vec<Vec<u8>> = vec![
                zs[..3].iter().map(|(_, b)| u8::from(*b)).collect(),
                zs[3..].iter().map(|(_, b)| u8::from(*b)).collect(),
            ];
            // Keyword flag only allowed on keyword topics; normalize.
            let s: Vec<Vec<u8>> = z
                .iter()
                .zip(s)
                .map(|(zr, sr)| {
                    zr.iter().zip(sr).map(|(k, s)| if *k < 2 { s } else { 0 }).collect()
                })
                .collect();
            let built = rebuild_counts(&z, &s, &corpus, &w, 3, 2);
            // Apply in reverse order.
            let mut rev = CountTables::empty(2, 3, 2, &w);
            for d in (0..2).rev() {
                for i in (0..3).rev() {
                    rev.add_token(d, docs[d][i], z[d][i], s[d][i] == 1, w.m[docs[d][i]]);
                }
            }
            prop_assert_eq!(&built, &rev);
        }
    }
}
