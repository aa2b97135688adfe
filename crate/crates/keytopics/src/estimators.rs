use ndarray::Array2;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::base::{BaseChainState, Mode};
use crate::corpus::Corpus;
use crate::counts::CountTables;
use crate::covariate::CovChainState;
use crate::dynamic::DynChainState;
use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::keywords::KeywordDictionary;
use crate::trace::{ChainTrace, CountSnapshot, DrawParams, TraceDraw};

/// Posterior mean summaries of one chain.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    /// K x V topic-word probabilities.
    pub phi: Array2<f64>,
    /// D x K document-topic proportions.
    pub theta: Array2<f64>,
    /// Average pre-normalization row mass of the topic-word mixture; a
    /// diagnostic for how much renormalization moved each topic.
    pub phi_row_mass: Vec<f64>,
}

pub fn summarize(trace: &ChainTrace, dict: &KeywordDictionary, hp: &HyperParams) -> Result<PosteriorSummary> {
    let (phi, phi_row_mass) = estimate_phi(trace, dict, hp)?;
    let theta = estimate_theta(trace)?;
    Ok(PosteriorSummary { phi, theta, phi_row_mass })
}

/// Topic-word distribution for one stored draw.
///
/// Keyword topics mix the smoothed general distribution and the keyword
/// distribution with the topic's posterior keyword share; no-keyword topics
/// only carry the general branch and its share weight. Mixture rows are
/// renormalized to sum to one and the pre-normalization mass is returned
/// alongside. In wLDA mode rows are the plain smoothed word frequencies and
/// are left untouched.
pub fn phi_single_draw(
    counts: &CountSnapshot,
    dict: &KeywordDictionary,
    hp: &HyperParams,
    wlda: bool,
) -> (Array2<f64>, Vec<f64>) {
    let k_total = counts.k_total();
    let k_keyword = if wlda { 0 } else { counts.k_keyword() };
    let v_total = counts.vocab();
    let v_f = v_total as f64;
    let mut phi = Array2::zeros((k_total, v_total));
    let mut mass = vec![0.0; k_total];
    for k in 0..k_total {
        let n_k = counts.n_k[k];
        if wlda {
            for v in 0..v_total {
                phi[[k, v]] = (hp.beta + counts.n_kv[[k, v]]) / (v_f * hp.beta + n_k);
            }
            mass[k] = phi.row(k).sum();
            continue;
        }
        let nt_k = if k < k_keyword { counts.n_tilde_k[k] } else { 0.0 };
        let denom = nt_k + hp.gamma1 + n_k + hp.gamma2;
        let w_general = (n_k + hp.gamma2) / denom;
        for v in 0..v_total {
            phi[[k, v]] = w_general * (hp.beta + counts.n_kv[[k, v]]) / (v_f * hp.beta + n_k);
        }
        if k < k_keyword {
            let w_keyword = (nt_k + hp.gamma1) / denom;
            let l_k = dict.num_keywords(k) as f64;
            for &v in &dict.topics[k].ids {
                phi[[k, v]] += w_keyword * (hp.beta_tilde + counts.n_tilde_kv[[k, v]])
                    / (l_k * hp.beta_tilde + nt_k);
            }
        }
        let row_mass: f64 = phi.row(k).sum();
        mass[k] = row_mass;
        for v in 0..v_total {
            phi[[k, v]] /= row_mass;
        }
    }
    (phi, mass)
}

/// Average the per-draw topic-word distributions over the post-burn-in
/// trace.
pub fn estimate_phi(
    trace: &ChainTrace,
    dict: &KeywordDictionary,
    hp: &HyperParams,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let draws = trace.post_burn_in();
    let first = draws
        .first()
        .ok_or_else(|| Error::config("trace has no post-burn-in draws"))?;
    let wlda = trace.meta.model.is_wlda();
    let mut phi = Array2::zeros((first.counts.k_total(), first.counts.vocab()));
    let mut mass = vec![0.0; first.counts.k_total()];
    for draw in &draws {
        let (p, m) = phi_single_draw(&draw.counts, dict, hp, wlda);
        phi += &p;
        for (acc, v) in mass.iter_mut().zip(m) {
            *acc += v;
        }
    }
    let n = draws.len() as f64;
    phi.mapv_inplace(|x| x / n);
    for v in &mut mass {
        *v /= n;
    }
    Ok((phi, mass))
}

/// Document-topic proportions for one stored draw:
/// (a_dk + n_dk) / sum_k'(a_dk' + n_dk') with a the draw's concentration
/// vector, exp(lambda^T x_d), or the concentration row of the document's
/// current state.
pub fn theta_single_draw(draw: &TraceDraw, trace: &ChainTrace) -> Result<Array2<f64>> {
    let d_total = draw.counts.num_docs();
    let k_total = draw.counts.k_total();
    let mut theta = Array2::zeros((d_total, k_total));
    match &draw.params {
        DrawParams::Base { alpha } => {
            for d in 0..d_total {
                for k in 0..k_total {
                    theta[[d, k]] = alpha[k] + draw.counts.n_dk[[d, k]];
                }
            }
        }
        DrawParams::Covariate { lambda_std } => {
            let x_std = trace
                .meta
                .x_std
                .as_ref()
                .ok_or_else(|| Error::config("covariate trace is missing the design matrix"))?;
            let dots = x_std.dot(lambda_std);
            for d in 0..d_total {
                for k in 0..k_total {
                    theta[[d, k]] = dots[[d, k]].exp() + draw.counts.n_dk[[d, k]];
                }
            }
        }
        DrawParams::Dynamic { h, alpha_mat, .. } => {
            let time = trace
                .meta
                .time_index
                .as_ref()
                .ok_or_else(|| Error::config("dynamic trace is missing the time index"))?;
            for d in 0..d_total {
                let r = h[time[d]];
                for k in 0..k_total {
                    theta[[d, k]] = alpha_mat[[r, k]] + draw.counts.n_dk[[d, k]];
                }
            }
        }
    }
    for d in 0..d_total {
        let total: f64 = theta.row(d).sum();
        for k in 0..k_total {
            theta[[d, k]] /= total;
        }
    }
    Ok(theta)
}

pub fn estimate_theta(trace: &ChainTrace) -> Result<Array2<f64>> {
    let draws = trace.post_burn_in();
    let first = draws
        .first()
        .ok_or_else(|| Error::config("trace has no post-burn-in draws"))?;
    let mut theta = Array2::zeros((first.counts.num_docs(), first.counts.k_total()));
    for draw in &draws {
        theta += &theta_single_draw(draw, trace)?;
    }
    theta.mapv_inplace(|x| x / draws.len() as f64);
    Ok(theta)
}

/// Per-period averages of document-topic proportions, with a standardized
/// variant for comparing relative trends.
#[derive(Debug, Clone)]
pub struct TimeTrend {
    /// T x K per-period means.
    pub mean: Array2<f64>,
    /// Columns demeaned and scaled to unit standard deviation over time;
    /// all-zero for topics with no variation.
    pub standardized: Array2<f64>,
    /// Topics whose trend had zero standard deviation.
    pub zero_sd_topics: Vec<usize>,
}

pub fn time_trend(theta: &Array2<f64>, time_index: &[usize]) -> Result<TimeTrend> {
    if time_index.len() != theta.nrows() {
        return Err(Error::config("time index length does not match theta rows"));
    }
    let t_total = time_index.iter().copied().max().map_or(0, |m| m + 1);
    let k_total = theta.ncols();
    let mut mean: Array2<f64> = Array2::zeros((t_total, k_total));
    let mut counts = vec![0usize; t_total];
    for (d, &t) in time_index.iter().enumerate() {
        counts[t] += 1;
        for k in 0..k_total {
            mean[[t, k]] += theta[[d, k]];
        }
    }
    for t in 0..t_total {
        if counts[t] == 0 {
            return Err(Error::config(format!("time period {t} has no documents")));
        }
        for k in 0..k_total {
            mean[[t, k]] /= counts[t] as f64;
        }
    }
    let mut standardized = Array2::zeros((t_total, k_total));
    let mut zero_sd_topics = Vec::new();
    for k in 0..k_total {
        let mu = mean.column(k).sum() / t_total as f64;
        let var = mean.column(k).iter().map(|&x| (x - mu).powi(2)).sum::<f64>() / t_total as f64;
        if var == 0.0 {
            zero_sd_topics.push(k);
            continue;
        }
        let sd = var.sqrt();
        for t in 0..t_total {
            standardized[[t, k]] = (mean[[t, k]] - mu) / sd;
        }
    }
    if !zero_sd_topics.is_empty() {
        log::warn!("time trend: topics {zero_sd_topics:?} have zero variance; standardized trend set to zero");
    }
    Ok(TimeTrend { mean, standardized, zero_sd_topics })
}

fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

fn normal_logpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Topic-word and keyword-share terms of the collapsed joint, common to all
/// variants. The share (Beta) terms exist only when the keyword layer does.
fn topic_terms(counts: &CountTables, hp: &HyperParams, dict: &KeywordDictionary, mode: Mode) -> f64 {
    let k_total = counts.k_total();
    let k_keyword = mode.effective_k_keyword(dict);
    let v_f = counts.vocab() as f64;
    let mut lp = 0.0;
    for k in 0..k_total {
        lp += ln_gamma(v_f * hp.beta) - v_f * ln_gamma(hp.beta);
        for v in 0..counts.vocab() {
            lp += ln_gamma(hp.beta + counts.n_kv(k, v));
        }
        lp -= ln_gamma(v_f * hp.beta + counts.n_k(k));
    }
    for k in 0..k_keyword {
        let l_k = dict.num_keywords(k) as f64;
        lp += ln_gamma(l_k * hp.beta_tilde) - l_k * ln_gamma(hp.beta_tilde);
        for &v in &dict.topics[k].ids {
            lp += ln_gamma(hp.beta_tilde + counts.n_tilde_kv(k, v));
        }
        lp -= ln_gamma(l_k * hp.beta_tilde + counts.n_tilde_k(k));
    }
    if mode == Mode::Keyword {
        lp += k_total as f64
            * (ln_gamma(hp.gamma1 + hp.gamma2) - ln_gamma(hp.gamma1) - ln_gamma(hp.gamma2));
        for k in 0..k_total {
            let nt = counts.n_tilde_k(k);
            let n = counts.n_k(k);
            lp += ln_gamma(nt + hp.gamma1) + ln_gamma(n + hp.gamma2)
                - ln_gamma(nt + hp.gamma1 + n + hp.gamma2);
        }
    }
    lp
}

/// Document-level Dirichlet-multinomial terms for arbitrary per-document
/// concentration rows.
fn doc_terms(counts: &CountTables, prior_row: impl Fn(usize) -> Vec<f64>) -> f64 {
    let k_total = counts.k_total();
    let mut lp = 0.0;
    for d in 0..counts.num_docs() {
        let a = prior_row(d);
        let a_sum: f64 = a.iter().sum();
        lp += ln_gamma(a_sum);
        for k in 0..k_total {
            lp += ln_gamma(counts.n_dk(d, k) + a[k]) - ln_gamma(a[k]);
        }
        lp -= ln_gamma(counts.doc_total(d) + a_sum);
    }
    lp
}

/// Log of the collapsed joint density of the base chain state: topic-word
/// Dirichlet-multinomial terms, keyword-share Beta terms, document
/// Dirichlet-multinomial terms, and the Gamma priors on the concentrations.
/// Used for chain diagnostics and as the conditional-ratio oracle.
pub fn collapsed_log_posterior_base(
    state: &BaseChainState,
    hp: &HyperParams,
    dict: &KeywordDictionary,
) -> f64 {
    let mut lp = topic_terms(&state.counts, hp, dict, state.mode);
    lp += doc_terms(&state.counts, |_| state.alpha.clone());
    let k_keyword = state.mode.effective_k_keyword(dict);
    for (k, &a) in state.alpha.iter().enumerate() {
        let (shape, rate) = hp.alpha_prior(k, k_keyword);
        lp += gamma_logpdf(a, shape, rate);
    }
    lp
}

/// Collapsed joint of the covariate chain state, with exp(lambda^T x_d) as
/// each document's concentration row and Normal priors on the coefficients.
pub fn collapsed_log_posterior_cov(
    state: &CovChainState,
    hp: &HyperParams,
    dict: &KeywordDictionary,
) -> f64 {
    let mut lp = topic_terms(&state.counts, hp, dict, state.mode);
    let priors = state.doc_priors_flat();
    let k_total = state.counts.k_total();
    lp += doc_terms(&state.counts, |d| priors[d * k_total..(d + 1) * k_total].to_vec());
    for &l in state.lambda_std.iter() {
        lp += normal_logpdf(l, hp.mu, hp.sigma);
    }
    lp
}

/// Collapsed joint of the dynamic chain state, with the state-specific
/// concentration rows and Gamma priors on every component.
pub fn collapsed_log_posterior_dyn(
    state: &DynChainState,
    hp: &HyperParams,
    dict: &KeywordDictionary,
    time_index: &[usize],
) -> f64 {
    let mut lp = topic_terms(&state.counts, hp, dict, state.mode);
    lp += doc_terms(&state.counts, |d| {
        state.alpha_mat.row(state.h[time_index[d]]).to_vec()
    });
    let k_keyword = state.mode.effective_k_keyword(dict);
    for ((_, k), &a) in state.alpha_mat.indexed_iter() {
        let (shape, rate) = hp.alpha_prior(k, k_keyword);
        lp += gamma_logpdf(a, shape, rate);
    }
    lp
}

/// In-sample plug-in perplexity of the summaries on the fitted corpus.
pub fn perplexity(phi: &Array2<f64>, theta: &Array2<f64>, corpus: &Corpus) -> f64 {
    let k_total = phi.nrows();
    let mut log_lik = 0.0;
    let mut tokens = 0usize;
    for (d, doc) in corpus.documents.iter().enumerate() {
        for &v in doc {
            let p: f64 = (0..k_total).map(|k| theta[[d, k]] * phi[[k, v]]).sum();
            log_lik += p.ln();
            tokens += 1;
        }
    }
    (-log_lik / tokens as f64).exp()
}

/// How a ranked word relates to the keyword lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WordMark {
    OwnKeyword,
    OtherKeyword,
    Plain,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopWord {
    pub word_id: usize,
    pub surface: String,
    pub probability: f64,
    pub mark: WordMark,
}

/// The n highest-probability words of every topic, ties broken by word id.
pub fn top_words(
    phi: &Array2<f64>,
    n: usize,
    dict: &KeywordDictionary,
    vocab: &[String],
) -> Vec<Vec<TopWord>> {
    let (k_total, v_total) = phi.dim();
    let n = n.min(v_total);
    let mut out = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let mut order: Vec<usize> = (0..v_total).collect();
        order.sort_by(|&a, &b| {
            phi[[k, b]]
                .partial_cmp(&phi[[k, a]])
                .unwrap()
                .then(a.cmp(&b))
        });
        let ranked = order
            .into_iter()
            .take(n)
            .map(|v| {
                let mark = if dict.contains(k, v) {
                    WordMark::OwnKeyword
                } else if dict.is_any_keyword(v) {
                    WordMark::OtherKeyword
                } else {
                    WordMark::Plain
                };
                TopWord {
                    word_id: v,
                    surface: vocab[v].clone(),
                    probability: phi[[k, v]],
                    mark,
                }
            })
            .collect();
        out.push(ranked);
    }
    out
}
