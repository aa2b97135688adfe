use ndarray::Array2;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use keytopics::corpus::CorpusOptions;
use keytopics::error::Error;
use keytopics::estimators;
use keytopics::evaluation::{self, MatchMode};
use keytopics::hyper::HyperParams;
use keytopics::rng::RandomStream;
use keytopics::runner::{AnyState, RunInputs};
use keytopics::slice::SliceOptions;
use keytopics::trace::{ChainTrace, DrawParams, ModelKind, TraceDraw, TraceMeta};
use keytopics::weights::compute_term_weights;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A loaded corpus of tokenized documents.
#[pyclass]
struct Corpus {
    inner: keytopics::corpus::Corpus,
}

#[pymethods]
impl Corpus {
    #[getter]
    fn num_docs(&self) -> usize {
        self.inner.num_docs()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    #[getter]
    fn doc_ids(&self) -> Vec<String> {
        self.inner.doc_ids.clone()
    }

    #[getter]
    fn vocab(&self) -> Vec<String> {
        self.inner.vocab.clone()
    }

    #[getter]
    fn time_index(&self) -> Option<Vec<usize>> {
        self.inner.time_index.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(docs={}, vocab={}, tokens={})",
            self.inner.num_docs(),
            self.inner.vocab_size(),
            self.inner.total_tokens()
        )
    }
}

/// Keyword topics bound to a corpus.
#[pyclass]
struct Keywords {
    inner: keytopics::keywords::KeywordDictionary,
}

#[pymethods]
impl Keywords {
    #[getter]
    fn labels(&self) -> Vec<String> {
        (0..self.inner.k_total()).map(|k| self.inner.label(k)).collect()
    }

    #[getter]
    fn k_keyword(&self) -> usize {
        self.inner.k_keyword()
    }

    #[getter]
    fn k_total(&self) -> usize {
        self.inner.k_total()
    }

    /// Keywords dropped during resolution, as (label, word) pairs.
    #[getter]
    fn dropped(&self) -> Vec<(String, String)> {
        self.inner.dropped.clone()
    }

    fn __repr__(&self) -> String {
        format!("Keywords(topics={}, extra={})", self.inner.k_keyword(), self.inner.k_extra)
    }
}

#[pyfunction]
#[pyo3(signature = (path, covariate_columns=None))]
fn load_corpus(path: &str, covariate_columns: Option<Vec<String>>) -> PyResult<Corpus> {
    let opts = CorpusOptions { covariate_columns };
    let inner = keytopics::corpus::load_corpus(path, &opts).map_err(to_py_err)?;
    Ok(Corpus { inner })
}

#[pyfunction]
#[pyo3(signature = (path, corpus, k_extra=0))]
fn load_keywords(path: &str, corpus: &Corpus, k_extra: usize) -> PyResult<Keywords> {
    let inner =
        keytopics::keywords::load_keywords(path, &corpus.inner, k_extra).map_err(to_py_err)?;
    Ok(Keywords { inner })
}

/// Per-word information weights as (word, count, weight) triples.
#[pyfunction]
#[pyo3(signature = (corpus, weighted=true))]
fn term_weights(corpus: &Corpus, weighted: bool) -> Vec<(String, usize, f64)> {
    let w = compute_term_weights(&corpus.inner, weighted);
    corpus
        .inner
        .vocab
        .iter()
        .enumerate()
        .map(|(v, word)| (word.clone(), w.counts[v], w.m[v]))
        .collect()
}

/// Keyword quality diagnostics: per-document keyword proportion and
/// per-document unique-keyword counts per topic.
#[pyfunction]
fn keyword_diagnostics(corpus: &Corpus, keywords: &Keywords) -> (Vec<f64>, Vec<Vec<usize>>) {
    let diag = keytopics::keywords::keyword_diagnostics(&corpus.inner, &keywords.inner);
    let counts = (0..corpus.inner.num_docs())
        .map(|d| diag.doc_unique_counts.row(d).to_vec())
        .collect();
    (diag.doc_proportion, counts)
}

/// Posterior summaries of one fitted chain.
#[pyclass]
struct FitResult {
    trace: ChainTrace,
    summary: estimators::PosteriorSummary,
    dict: keytopics::keywords::KeywordDictionary,
    vocab: Vec<String>,
    corpus: keytopics::corpus::Corpus,
}

#[pymethods]
impl FitResult {
    /// K x V topic-word probabilities.
    fn phi(&self) -> Vec<Vec<f64>> {
        rows(&self.summary.phi)
    }

    /// D x K document-topic proportions.
    fn theta(&self) -> Vec<Vec<f64>> {
        rows(&self.summary.theta)
    }

    /// Stored (iteration, log joint density) pairs.
    fn log_posterior(&self) -> Vec<(u64, f64)> {
        self.trace.draws.iter().map(|d| (d.iteration, d.log_posterior)).collect()
    }

    /// The n top words per topic as (word, probability, mark) with mark in
    /// {"own_keyword", "other_topic_keyword", "plain"}.
    #[pyo3(signature = (n=10))]
    fn top_words(&self, n: usize) -> Vec<Vec<(String, f64, String)>> {
        estimators::top_words(&self.summary.phi, n, &self.dict, &self.vocab)
            .into_iter()
            .map(|topic| {
                topic
                    .into_iter()
                    .map(|w| {
                        let mark = match w.mark {
                            estimators::WordMark::OwnKeyword => "own_keyword",
                            estimators::WordMark::OtherKeyword => "other_topic_keyword",
                            estimators::WordMark::Plain => "plain",
                        };
                        (w.surface, w.probability, mark.to_string())
                    })
                    .collect()
            })
            .collect()
    }

    /// In-sample plug-in perplexity of the summaries.
    fn perplexity(&self) -> f64 {
        estimators::perplexity(&self.summary.phi, &self.summary.theta, &self.corpus)
    }

    /// Per-period topic means and their standardized versions (dynamic
    /// fits only).
    fn time_trend(&self) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let time = self
            .corpus
            .time_index
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("corpus has no time index"))?;
        let trend = estimators::time_trend(&self.summary.theta, time).map_err(to_py_err)?;
        Ok((rows(&trend.mean), rows(&trend.standardized)))
    }
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).to_vec()).collect()
}

/// Fit one chain and return its posterior summaries.
#[pyfunction]
#[pyo3(signature = (corpus, keywords, model="base", iterations=1000, thin=10,
                    burn_in_fraction=0.5, seed=1, states=5, weighted=true))]
#[allow(clippy::too_many_arguments)]
fn fit(
    corpus: &Corpus,
    keywords: &Keywords,
    model: &str,
    iterations: u64,
    thin: u64,
    burn_in_fraction: f64,
    seed: u64,
    states: usize,
    weighted: bool,
) -> PyResult<FitResult> {
    let model: ModelKind = model.parse().map_err(to_py_err)?;
    if thin == 0 || iterations < thin {
        return Err(PyValueError::new_err("need iterations >= thin >= 1"));
    }
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(PyValueError::new_err("burn_in_fraction must lie in [0, 1)"));
    }
    let hp = HyperParams::default();
    let inputs = RunInputs {
        corpus: corpus.inner.clone(),
        dict: keywords.inner.clone(),
        weights: compute_term_weights(&corpus.inner, weighted),
    };
    let mut rng = RandomStream::new(seed);
    let mut state = AnyState::init(model, &inputs, &hp, states, &mut rng).map_err(to_py_err)?;
    let opts = SliceOptions::default();
    let (x_std, standardizer) = match &state {
        AnyState::Covariate(s) => (Some(s.x_std.clone()), Some(s.standardizer.clone())),
        _ => (None, None),
    };
    let meta = TraceMeta {
        model,
        thin,
        burn_in: (iterations as f64 * burn_in_fraction).floor() as u64,
        doc_ids: corpus.inner.doc_ids.clone(),
        time_index: corpus.inner.time_index.clone(),
        x_std,
        standardizer,
    };
    let mut trace = ChainTrace { meta, draws: Vec::new() };
    for it in 1..=iterations {
        state.sweep(&inputs, &hp, &opts, &mut rng).map_err(to_py_err)?;
        if it % thin == 0 {
            let params = match &state {
                AnyState::Base(s) => DrawParams::Base { alpha: s.alpha.clone() },
                AnyState::Covariate(s) => {
                    DrawParams::Covariate { lambda_std: s.lambda_std.clone() }
                }
                AnyState::Dynamic(s) => DrawParams::Dynamic {
                    h: s.h.clone(),
                    alpha_mat: s.alpha_mat.clone(),
                    p_stay: s.p_stay.clone(),
                },
            };
            let log_posterior = match &state {
                AnyState::Base(s) => {
                    estimators::collapsed_log_posterior_base(s, &hp, &inputs.dict)
                }
                AnyState::Covariate(s) => {
                    estimators::collapsed_log_posterior_cov(s, &hp, &inputs.dict)
                }
                AnyState::Dynamic(s) => estimators::collapsed_log_posterior_dyn(
                    s,
                    &hp,
                    &inputs.dict,
                    inputs.corpus.time_index.as_ref().expect("dynamic corpus has time"),
                ),
            };
            trace.draws.push(TraceDraw {
                iteration: it,
                counts: state.counts().into(),
                params,
                log_posterior,
            });
        }
    }
    let summary = estimators::summarize(&trace, &inputs.dict, &hp).map_err(to_py_err)?;
    Ok(FitResult {
        trace,
        summary,
        dict: keywords.inner.clone(),
        vocab: corpus.inner.vocab.clone(),
        corpus: corpus.inner.clone(),
    })
}

/// ROC area and curve points for scores against binary labels.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<(f64, Vec<(f64, f64)>)> {
    let r = evaluation::roc(&scores, &labels).map_err(to_py_err)?;
    Ok((r.auroc, r.points))
}

/// Maximizing topic-to-label assignment: (per-topic label or None, value).
#[pyfunction]
fn hungarian(objective: Vec<Vec<f64>>) -> PyResult<(Vec<Option<usize>>, f64)> {
    let k = objective.len();
    let l = objective.first().map_or(0, Vec::len);
    if objective.iter().any(|row| row.len() != l) {
        return Err(PyValueError::new_err("objective rows differ in length"));
    }
    let m = Array2::from_shape_fn((k, l), |(i, j)| objective[i][j]);
    let a = evaluation::hungarian_match(&m).map_err(to_py_err)?;
    Ok((a.assignment, a.objective))
}

/// One-vs-rest evaluation of theta rows against integer gold labels.
/// Returns (per-topic AUROC or None, matched label per topic, aggregate).
#[pyfunction]
#[pyo3(signature = (theta, gold, num_labels, match_mode="hungarian"))]
fn evaluate(
    theta: Vec<Vec<f64>>,
    gold: Vec<usize>,
    num_labels: usize,
    match_mode: &str,
) -> PyResult<(Vec<Option<f64>>, Vec<Option<usize>>, Option<f64>)> {
    let mode = match match_mode {
        "fixed" => MatchMode::Fixed,
        "hungarian" => MatchMode::Hungarian,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown match mode '{other}' (expected fixed or hungarian)"
            )))
        }
    };
    let d = theta.len();
    let k = theta.first().map_or(0, Vec::len);
    let m = Array2::from_shape_fn((d, k), |(i, j)| theta[i][j]);
    let report = evaluation::evaluate_against_labels(&m, &gold, num_labels, mode)
        .map_err(to_py_err)?;
    let aurocs = report.per_topic.iter().map(|t| t.auroc).collect();
    let matched = report.per_topic.iter().map(|t| t.matched_label).collect();
    Ok((aurocs, matched, report.aggregate))
}

#[pymodule]
fn keytopics_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<Keywords>()?;
    m.add_class::<FitResult>()?;
    m.add_function(wrap_pyfunction!(load_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(load_keywords, m)?)?;
    m.add_function(wrap_pyfunction!(term_weights, m)?)?;
    m.add_function(wrap_pyfunction!(keyword_diagnostics, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
