use ndarray::Array2;
use statrs::function::gamma::ln_gamma;

use crate::base::{slice_alpha_component, token_sweep, DocPriors, Mode};
use crate::corpus::Corpus;
use crate::counts::{rebuild_counts, CountTables};
use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::keywords::KeywordDictionary;
use crate::rng::{draw_categorical, RandomStream};
use crate::slice::SliceOptions;
use crate::weights::TermWeights;

/// Chain state of the dynamic sampler. Time periods carry latent states
/// that only hold or advance by one: h_0 = 0, h_{T-1} = R-1, and each
/// state r has its own concentration row alpha_mat[r].
#[derive(Debug, Clone)]
pub struct DynChainState {
    pub z: Vec<Vec<usize>>,
    pub s: Vec<Vec<u8>>,
    pub counts: CountTables,
    /// Latent state per time period, non-decreasing with unit steps.
    pub h: Vec<usize>,
    /// Diagonal transition probabilities; the final state is absorbing
    /// with probability one.
    pub p_stay: Vec<f64>,
    /// R x K concentrations.
    pub alpha_mat: Array2<f64>,
    pub iteration: u64,
    pub mode: Mode,
}

pub fn init_state_dyn(
    corpus: &Corpus,
    dict: &KeywordDictionary,
    hp: &HyperParams,
    weights: &TermWeights,
    r_states: usize,
    mode: Mode,
    rng: &mut RandomStream,
) -> Result<DynChainState> {
    hp.validate()?;
    let time = corpus
        .time_index
        .as_ref()
        .ok_or_else(|| Error::config("dynamic model requires a per-document time index"))?;
    let t_total = corpus.num_time_periods().unwrap();
    if r_states == 0 {
        return Err(Error::config("dynamic model needs at least one state"));
    }
    if r_states > t_total {
        return Err(Error::config(format!(
            "number of states R={r_states} exceeds time periods T={t_total}; no monotone state path exists"
        )));
    }
    let k_total = dict.k_total();
    if k_total == 0 {
        return Err(Error::config("model must have at least one topic"));
    }
    let k_keyword = mode.effective_k_keyword(dict);

    // Evenly spread monotone path with the required endpoints.
    let h: Vec<usize> = (0..t_total).map(|t| t * r_states / t_total).collect();
    let mut p_stay: Vec<f64> = (0..r_states).map(|_| rng.uniform()).collect();
    p_stay[r_states - 1] = 1.0;
    let alpha_mat = Array2::from_shape_fn((r_states, k_total), |(_, k)| {
        let (shape, rate) = hp.alpha_prior(k, k_keyword);
        rng.gamma(shape, rate)
    });

    let (z, s) = crate::base::init_assignments(corpus, dict, mode, rng);
    let counts = rebuild_counts(&z, &s, corpus, weights, k_total, k_keyword);
    let _ = time;
    Ok(DynChainState {
        z,
        s,
        counts,
        h,
        p_stay,
        alpha_mat,
        iteration: 0,
        mode,
    })
}

/// Log Dirichlet-multinomial likelihood of document d under state r's
/// concentrations, the multinomial coefficient (constant in r) omitted.
pub fn doc_state_loglik(counts: &CountTables, alpha_mat: &Array2<f64>, d: usize, r: usize) -> f64 {
    let k_total = counts.k_total();
    let alpha_sum: f64 = alpha_mat.row(r).sum();
    let mut lp = ln_gamma(alpha_sum) - ln_gamma(counts.doc_total(d) + alpha_sum);
    for k in 0..k_total {
        lp += ln_gamma(counts.n_dk(d, k) + alpha_mat[[r, k]]) - ln_gamma(alpha_mat[[r, k]]);
    }
    lp
}

/// Feasible state window at time t: states reachable from 0 by unit steps
/// that can still reach R-1 by T-1.
#[inline]
fn band(t: usize, t_total: usize, r_total: usize) -> (usize, usize) {
    let slack = t_total - r_total;
    let lo = t.saturating_sub(slack);
    let hi = t.min(r_total - 1);
    (lo, hi)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Filtered state probabilities, one row per time period.
///
/// Each row applies the two-branch predict step (stay or advance), then the
/// period's document likelihoods, and normalizes; everything runs in log
/// space. Entries outside the feasible window are structurally zero.
pub fn forward_filter(
    counts: &CountTables,
    alpha_mat: &Array2<f64>,
    p_stay: &[f64],
    docs_by_time: &[Vec<usize>],
    r_total: usize,
) -> Result<Array2<f64>> {
    let t_total = docs_by_time.len();
    if r_total > t_total {
        return Err(Error::config(format!(
            "number of states R={r_total} exceeds time periods T={t_total}; no monotone state path exists"
        )));
    }

    // Per-period log likelihood under each state.
    let mut loglik = Array2::from_elem((t_total, r_total), 0.0);
    for (t, docs) in docs_by_time.iter().enumerate() {
        let (lo, hi) = band(t, t_total, r_total);
        for r in lo..=hi {
            loglik[[t, r]] = docs
                .iter()
                .map(|&d| doc_state_loglik(counts, alpha_mat, d, r))
                .sum();
        }
    }

    let mut log_filtered = Array2::from_elem((t_total, r_total), f64::NEG_INFINITY);
    log_filtered[[0, 0]] = 0.0;
    for t in 1..t_total {
        let (lo, hi) = band(t, t_total, r_total);
        let (prev_lo, prev_hi) = band(t - 1, t_total, r_total);
        let mut row = vec![f64::NEG_INFINITY; r_total];
        for r in lo..=hi {
            let mut terms = Vec::with_capacity(2);
            // stay in r
            if r >= prev_lo && r <= prev_hi {
                terms.push(p_stay[r].ln() + log_filtered[[t - 1, r]]);
            }
            // advance from r-1
            if r >= 1 && r - 1 >= prev_lo && r - 1 <= prev_hi {
                terms.push((1.0 - p_stay[r - 1]).ln() + log_filtered[[t - 1, r - 1]]);
            }
            let predict = log_sum_exp(&terms);
            row[r] = predict + loglik[[t, r]];
        }
        let norm = log_sum_exp(&row);
        if norm == f64::NEG_INFINITY {
            return Err(Error::fault(format!("forward filter lost all mass at period {t}")));
        }
        for r in 0..r_total {
            log_filtered[[t, r]] = row[r] - norm;
        }
    }

    Ok(log_filtered.mapv(f64::exp))
}

/// Draw a state path backwards through the filtered probabilities, final
/// state pinned at R-1; each step chooses between holding and having just
/// advanced.
pub fn backward_sample_states(
    filtered: &Array2<f64>,
    p_stay: &[f64],
    rng: &mut RandomStream,
) -> Result<Vec<usize>> {
    let (t_total, r_total) = filtered.dim();
    let mut h = vec![0usize; t_total];
    h[t_total - 1] = r_total - 1;
    for t in (0..t_total - 1).rev() {
        let next = h[t + 1];
        let mut candidates = Vec::with_capacity(2);
        let mut weights = Vec::with_capacity(2);
        if next > 0 {
            candidates.push(next - 1);
            weights.push(filtered[[t, next - 1]] * (1.0 - p_stay[next - 1]));
        }
        candidates.push(next);
        weights.push(filtered[[t, next]] * p_stay[next]);
        let pick = draw_categorical(&weights, rng)
            .map_err(|e| Error::fault(format!("state draw at period {t}: {e}")))?;
        h[t] = candidates[pick];
    }
    debug_assert_eq!(h[0], 0);
    Ok(h)
}

/// Conjugate update of the diagonal transition probabilities: each visited
/// non-final state r gets Beta(1 + n_rr, 2), since the single forward step
/// out of r occurs exactly once. The final state stays absorbing.
pub fn sample_transition(h: &[usize], r_total: usize, rng: &mut RandomStream) -> Vec<f64> {
    let mut self_transitions = vec![0u32; r_total];
    for pair in h.windows(2) {
        if pair[0] == pair[1] {
            self_transitions[pair[0]] += 1;
        }
    }
    let mut p = Vec::with_capacity(r_total);
    for r in 0..r_total {
        if r + 1 == r_total {
            p.push(1.0);
        } else {
            p.push(rng.beta(1.0 + self_transitions[r] as f64, 2.0));
        }
    }
    p
}

/// Slice-update every state-specific concentration, using only the
/// documents whose period currently sits in that state.
#[allow(clippy::too_many_arguments)]
pub fn sample_alpha_dynamic(
    alpha_mat: &mut Array2<f64>,
    counts: &CountTables,
    hp: &HyperParams,
    k_keyword: usize,
    h: &[usize],
    time_index: &[usize],
    opts: &SliceOptions,
    rng: &mut RandomStream,
) -> Result<()> {
    let (r_total, k_total) = alpha_mat.dim();
    let mut docs_in_state = vec![Vec::new(); r_total];
    for (d, &t) in time_index.iter().enumerate() {
        docs_in_state[h[t]].push(d);
    }
    for r in 0..r_total {
        let docs = &docs_in_state[r];
        let doc_totals: Vec<f64> = docs.iter().map(|&d| counts.doc_total(d)).collect();
        for k in 0..k_total {
            let col: Vec<f64> = docs.iter().map(|&d| counts.n_dk(d, k)).collect();
            let others: f64 = alpha_mat.row(r).sum() - alpha_mat[[r, k]];
            let (shape, rate) = hp.alpha_prior(k, k_keyword);
            alpha_mat[[r, k]] = slice_alpha_component(
                alpha_mat[[r, k]],
                shape,
                rate,
                others,
                &col,
                &doc_totals,
                opts,
                rng,
            )
            .map_err(|e| Error::fault(format!("alpha[{r},{k}]: {e}")))?;
        }
    }
    Ok(())
}

impl DynChainState {
    /// One sweep: tokens under the current state assignment, then states,
    /// transitions, and concentrations.
    pub fn sweep(
        &mut self,
        corpus: &Corpus,
        dict: &KeywordDictionary,
        weights: &TermWeights,
        hp: &HyperParams,
        opts: &SliceOptions,
        rng: &mut RandomStream,
    ) -> Result<()> {
        let time = corpus.time_index.as_ref().expect("dynamic state requires time index");
        let k_total = self.counts.k_total();
        {
            let priors = DocPriors::PerState {
                alpha_flat: self.alpha_mat.as_slice().expect("alpha_mat is contiguous"),
                k: k_total,
                states: &self.h,
                time,
            };
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
            )?;
        }
        let docs_by_time = corpus.docs_by_time().unwrap();
        let filtered = forward_filter(
            &self.counts,
            &self.alpha_mat,
            &self.p_stay,
            &docs_by_time,
            self.p_stay.len(),
        )?;
        self.h = backward_sample_states(&filtered, &self.p_stay, rng)?;
        self.p_stay = sample_transition(&self.h, self.p_stay.len(), rng);
        sample_alpha_dynamic(
            &mut self.alpha_mat,
            &self.counts,
            hp,
            self.mode.effective_k_keyword(dict),
            &self.h,
            time,
            opts,
            rng,
        )?;
        self.iteration += 1;
        Ok(())
    }

    /// Path invariant: starts at 0, ends at R-1, steps in {0, 1}.
    pub fn path_ok(&self) -> bool {
        let r_total = self.p_stay.len();
        !self.h.is_empty()
            && self.h[0] == 0
            && *self.h.last().unwrap() == r_total - 1
            && self.h.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1)
    }
}
