use statrs::function::gamma::ln_gamma;

use crate::corpus::Corpus;
use crate::counts::{rebuild_counts, CountTables};
use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::keywords::KeywordDictionary;
use crate::rng::{draw_categorical, RandomStream};
use crate::slice::{slice_sample_positive, SliceOptions};
use crate::weights::TermWeights;

/// Sampler flavor: the keyword-seeded model, or the plain weighted-LDA
/// baseline that drops the keyword layer entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Keyword,
    Wlda,
}

impl Mode {
    /// Keyword topics visible to the conditionals: zero in wLDA mode.
    pub fn effective_k_keyword(self, dict: &KeywordDictionary) -> usize {
        match self {
            Mode::Keyword => dict.k_keyword(),
            Mode::Wlda => 0,
        }
    }
}

/// Document-topic Dirichlet parameters as seen by the token pass, one row
/// per document: a shared vector (base), a per-document matrix (covariate),
/// or a per-state matrix indexed through the document's time period
/// (dynamic).
pub(crate) enum DocPriors<'a> {
    Shared(&'a [f64]),
    PerDoc { flat: &'a [f64], k: usize },
    PerState {
        alpha_flat: &'a [f64],
        k: usize,
        states: &'a [usize],
        time: &'a [usize],
    },
}

impl<'a> DocPriors<'a> {
    #[inline]
    pub(crate) fn row(&self, d: usize) -> &'a [f64] {
        match self {
            DocPriors::Shared(a) => a,
            DocPriors::PerDoc { flat, k } => &flat[d * k..(d + 1) * k],
            DocPriors::PerState { alpha_flat, k, states, time } => {
                let r = states[time[d]];
                &alpha_flat[r * k..(r + 1) * k]
            }
        }
    }
}

/// Unnormalized topic weights for one token, with the token already removed
/// from the tables.
///
/// Given s = 0 the weight of topic k is the smoothed word probability times
/// the non-keyword share of the topic times the document factor
/// (n_dk + prior_k); given s = 1 only keyword topics listing the word get
/// mass, through the keyword word distribution and the keyword share. In
/// wLDA mode the share factor disappears and only the s = 0 branch exists.
#[allow(clippy::too_many_arguments)]
pub fn conditional_z(
    counts: &CountTables,
    hp: &HyperParams,
    dict: &KeywordDictionary,
    mode: Mode,
    d: usize,
    v: usize,
    s: u8,
    prior: &[f64],
    out: &mut Vec<f64>,
) {
    let k_total = counts.k_total();
    let k_keyword = mode.effective_k_keyword(dict);
    let v_total = counts.vocab() as f64;
    out.clear();
    for k in 0..k_total {
        let doc_factor = counts.n_dk(d, k) + prior[k];
        let w = if s == 1 {
            if k >= k_keyword || !dict.contains(k, v) {
                0.0
            } else {
                let nt_k = counts.n_tilde_k(k);
                let n_k = counts.n_k(k);
                let l_k = dict.num_keywords(k) as f64;
                (hp.beta_tilde + counts.n_tilde_kv(k, v)) / (l_k * hp.beta_tilde + nt_k)
                    * (nt_k + hp.gamma1)
                    / (nt_k + hp.gamma1 + n_k + hp.gamma2)
                    * doc_factor
            }
        } else {
            let n_k = counts.n_k(k);
            let word = (hp.beta + counts.n_kv(k, v)) / (v_total * hp.beta + n_k);
            let share = match mode {
                Mode::Wlda => 1.0,
                Mode::Keyword => {
                    let nt_k = counts.n_tilde_k(k);
                    (n_k + hp.gamma2) / (nt_k + hp.gamma1 + n_k + hp.gamma2)
                }
            };
            word * share * doc_factor
        };
        out.push(w);
    }
}

/// Unnormalized weights for the keyword indicator of one token, with the
/// token removed and its topic already fixed at k. The s = 1 weight is zero
/// unless k is a keyword topic listing the word.
pub fn conditional_s(
    counts: &CountTables,
    hp: &HyperParams,
    dict: &KeywordDictionary,
    v: usize,
    k: usize,
) -> [f64; 2] {
    let v_total = counts.vocab() as f64;
    let n_k = counts.n_k(k);
    let w0 = (hp.beta + counts.n_kv(k, v)) / (v_total * hp.beta + n_k) * (n_k + hp.gamma2);
    let w1 = if k < counts.k_keyword() && dict.contains(k, v) {
        let nt_k = counts.n_tilde_k(k);
        let l_k = dict.num_keywords(k) as f64;
        (hp.beta_tilde + counts.n_tilde_kv(k, v)) / (l_k * hp.beta_tilde + nt_k)
            * (nt_k + hp.gamma1)
    } else {
        0.0
    };
    [w0, w1]
}

/// One full pass over every token: remove, redraw the topic given the
/// current indicator, redraw the indicator given the new topic, put back.
#[allow(clippy::too_many_arguments)]
pub(crate) fn token_sweep(
    z: &mut [Vec<usize>],
    s: &mut [Vec<u8>],
    counts: &mut CountTables,
    corpus: &Corpus,
    dict: &KeywordDictionary,
    weights: &TermWeights,
    hp: &HyperParams,
    mode: Mode,
    priors: &DocPriors<'_>,
    rng: &mut RandomStream,
) -> Result<()> {
    let k_keyword = mode.effective_k_keyword(dict);
    let mut buf = Vec::with_capacity(counts.k_total());
    for (d, doc) in corpus.documents.iter().enumerate() {
        let prior = priors.row(d);
        for (i, &v) in doc.iter().enumerate() {
            let m = weights.m[v];
            counts.remove_token(d, v, z[d][i], s[d][i] == 1, m);

            conditional_z(counts, hp, dict, mode, d, v, s[d][i], prior, &mut buf);
            let k = draw_categorical(&buf, rng)
                .map_err(|e| Error::fault(format!("token (doc {d}, idx {i}): {e}")))?;

            let s_new = if mode == Mode::Keyword && k < k_keyword && dict.contains(k, v) {
                let w = conditional_s(counts, hp, dict, v, k);
                draw_categorical(&w, rng)
                    .map_err(|e| Error::fault(format!("indicator (doc {d}, idx {i}): {e}")))?
                    as u8
            } else {
                0
            };

            z[d][i] = k;
            s[d][i] = s_new;
            counts.add_token(d, v, k, s_new == 1, m);
        }
    }
    Ok(())
}

/// One slice transition for a single concentration component.
///
/// The target is the component's Gamma prior times the document
/// Dirichlet-multinomial terms that involve it: per document,
/// Gamma(sum alpha) Gamma(n_dk + alpha_k) / (Gamma(alpha_k)
/// Gamma(doc_total + sum alpha)).
#[allow(clippy::too_many_arguments)]
pub(crate) fn slice_alpha_component(
    current: f64,
    shape: f64,
    rate: f64,
    alpha_others: f64,
    ndk_col: &[f64],
    doc_totals: &[f64],
    opts: &SliceOptions,
    rng: &mut RandomStream,
) -> Result<f64> {
    debug_assert_eq!(ndk_col.len(), doc_totals.len());
    let n_docs = ndk_col.len() as f64;
    let target = |a: f64| {
        let total = alpha_others + a;
        let mut lp = (shape - 1.0) * a.ln() - rate * a;
        lp += n_docs * (ln_gamma(total) - ln_gamma(a));
        for (ndk, tot) in ndk_col.iter().zip(doc_totals) {
            lp += ln_gamma(ndk + a) - ln_gamma(tot + total);
        }
        lp
    };
    slice_sample_positive(target, current, opts, rng)
}

/// Update every concentration component in place with one slice transition
/// each, keyword topics under their own Gamma prior.
pub fn sample_alpha(
    alpha: &mut [f64],
    counts: &CountTables,
    hp: &HyperParams,
    k_keyword: usize,
    opts: &SliceOptions,
    rng: &mut RandomStream,
) -> Result<()> {
    let d_total = counts.num_docs();
    let doc_totals: Vec<f64> = (0..d_total).map(|d| counts.doc_total(d)).collect();
    let mut col = vec![0.0; d_total];
    for k in 0..alpha.len() {
        let others: f64 = alpha.iter().sum::<f64>() - alpha[k];
        for d in 0..d_total {
            col[d] = counts.n_dk(d, k);
        }
        let (shape, rate) = hp.alpha_prior(k, k_keyword);
        alpha[k] =
            slice_alpha_component(alpha[k], shape, rate, others, &col, &doc_totals, opts, rng)
                .map_err(|e| Error::fault(format!("alpha component {k}: {e}")))?;
    }
    Ok(())
}

/// Markov chain state of the base sampler (and of its wLDA baseline mode).
#[derive(Debug, Clone)]
pub struct BaseChainState {
    pub z: Vec<Vec<usize>>,
    pub s: Vec<Vec<u8>>,
    pub counts: CountTables,
    pub alpha: Vec<f64>,
    pub iteration: u64,
    pub mode: Mode,
}

/// Random starting assignments. Tokens whose word seeds some topic start in
/// a uniformly chosen topic among those listing it (indicator a fair coin);
/// all other tokens start uniform over every topic. Starting keyword tokens
/// inside their topics is what lets the seeding bite: from a fully uniform
/// start the general channels consolidate before the keyword counts can
/// accumulate, and the topic labels end up permuted arbitrarily.
pub(crate) fn init_assignments(
    corpus: &Corpus,
    dict: &KeywordDictionary,
    mode: Mode,
    rng: &mut RandomStream,
) -> (Vec<Vec<usize>>, Vec<Vec<u8>>) {
    let k_total = dict.k_total();
    let k_keyword = mode.effective_k_keyword(dict);
    let mut z = Vec::with_capacity(corpus.num_docs());
    let mut s = Vec::with_capacity(corpus.num_docs());
    for doc in &corpus.documents {
        let mut zd = Vec::with_capacity(doc.len());
        let mut sd = Vec::with_capacity(doc.len());
        for &v in doc {
            let seeded = if mode == Mode::Keyword { dict.topics_of_word(v) } else { &[] };
            let k = if seeded.is_empty() {
                rng.uniform_usize(k_total)
            } else {
                seeded[rng.uniform_usize(seeded.len())]
            };
            let eligible = mode == Mode::Keyword && k < k_keyword && dict.contains(k, v);
            let s_di = u8::from(eligible && rng.bernoulli(0.5));
            zd.push(k);
            sd.push(s_di);
        }
        z.push(zd);
        s.push(sd);
    }
    (z, s)
}

/// Random starting state: concentrations from their Gamma priors,
/// assignments via `init_assignments`.
pub fn init_state(
    corpus: &Corpus,
    dict: &KeywordDictionary,
    hp: &HyperParams,
    weights: &TermWeights,
    mode: Mode,
    rng: &mut RandomStream,
) -> Result<BaseChainState> {
    hp.validate()?;
    let k_total = dict.k_total();
    if k_total == 0 {
        return Err(Error::config("model must have at least one topic"));
    }
    let k_keyword = mode.effective_k_keyword(dict);
    let alpha: Vec<f64> = (0..k_total)
        .map(|k| {
            let (shape, rate) = hp.alpha_prior(k, k_keyword);
            rng.gamma(shape, rate)
        })
        .collect();
    let (z, s) = init_assignments(corpus, dict, mode, rng);
    let counts = rebuild_counts(&z, &s, corpus, weights, k_total, k_keyword);
    Ok(BaseChainState {
        z,
        s,
        counts,
        alpha,
        iteration: 0,
        mode,
    })
}

impl BaseChainState {
    /// One Gibbs sweep: every token, then the concentration vector.
    pub fn sweep(
        &mut self,
        corpus: &Corpus,
        dict: &KeywordDictionary,
        weights: &TermWeights,
        hp: &HyperParams,
        opts: &SliceOptions,
        rng: &mut RandomStream,
    ) -> Result<()> {
        self.sweep_tokens_only(corpus, dict, weights, hp, rng)?;
        let k_keyword = self.mode.effective_k_keyword(dict);
        sample_alpha(&mut self.alpha, &self.counts, hp, k_keyword, opts, rng)?;
        self.iteration += 1;
        #[cfg(debug_assertions)]
        if self.iteration % 97 == 0 {
            self.debug_check_counts(corpus, dict, weights);
        }
        Ok(())
    }

    /// Token pass alone, with the concentrations held fixed. Used by tests
    /// that compare against exact enumeration.
    pub fn sweep_tokens_only(
        &mut self,
        corpus: &Corpus,
        dict: &KeywordDictionary,
        weights: &TermWeights,
        hp: &HyperParams,
        rng: &mut RandomStream,
    ) -> Result<()> {
        let priors = DocPriors::Shared(&self.alpha);
        token_sweep(
            &mut self.z,
            &mut self.s,
            &mut self.counts,
            corpus,
            dict,
            weights,
            hp,
            self.mode,
            &priors,
            rng,
        )
    }

    /// The indicator support invariant: s = 1 only on keyword topics that
    /// list the token's word.
    pub fn s_support_ok_with(&self, corpus: &Corpus, dict: &KeywordDictionary) -> bool {
        let k_keyword = self.mode.effective_k_keyword(dict);
        corpus.documents.iter().enumerate().all(|(d, doc)| {
            doc.iter().enumerate().all(|(i, &v)| {
                self.s[d][i] == 0
                    || (self.z[d][i] < k_keyword && dict.contains(self.z[d][i], v))
            })
        })
    }

    #[cfg(debug_assertions)]
    fn debug_check_counts(&self, corpus: &Corpus, dict: &KeywordDictionary, weights: &TermWeights) {
        let rebuilt = rebuild_counts(
            &self.z,
            &self.s,
            corpus,
            weights,
            self.counts.k_total(),
            self.mode.effective_k_keyword(dict),
        );
        debug_assert!(rebuilt == self.counts, "incremental tables drifted from rebuild");
    }
}
