use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::base::{token_sweep, DocPriors, Mode};
use crate::corpus::Corpus;
use crate::counts::{rebuild_counts, CountTables};
use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::keywords::KeywordDictionary;
use crate::rng::RandomStream;
use crate::slice::{slice_sample_real, SliceOptions};
use crate::trace::{ChainTrace, DrawParams};
use crate::weights::TermWeights;

/// Column means and standard deviations used to standardize a design
/// matrix. The intercept column keeps mean 0 and sd 1 so it passes through
/// unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| (v - self.mean[j]) / self.sd[j])
            .collect()
    }
}

/// Demean and scale every non-intercept column by its population standard
/// deviation; column 0 must be the all-ones intercept.
pub fn standardize(x: &Array2<f64>, names: &[String]) -> Result<(Array2<f64>, Standardizer)> {
    let (d, m) = x.dim();
    if m == 0 || names.len() != m {
        return Err(Error::schema("design matrix and names disagree"));
    }
    if x.column(0).iter().any(|&v| v != 1.0) {
        return Err(Error::schema("column 0 must be the intercept (all ones)"));
    }
    let mut mean = vec![0.0; m];
    let mut sd = vec![1.0; m];
    let mut out = x.clone();
    for j in 1..m {
        let col = x.column(j);
        let mu = col.sum() / d as f64;
        let var = col.iter().map(|&v| (v - mu).powi(2)).sum::<f64>() / d as f64;
        if var == 0.0 {
            return Err(Error::schema(format!(
                "covariate '{}' is constant and cannot be standardized",
                names[j]
            )));
        }
        let sigma = var.sqrt();
        mean[j] = mu;
        sd[j] = sigma;
        for i in 0..d {
            out[[i, j]] = (x[[i, j]] - mu) / sigma;
        }
    }
    Ok((out, Standardizer { mean, sd }))
}

/// Chain state of the covariate sampler: document-topic priors are
/// exp(lambda^T x_d) with lambda on the standardized covariate scale.
#[derive(Debug, Clone)]
pub struct CovChainState {
    pub z: Vec<Vec<usize>>,
    pub s: Vec<Vec<u8>>,
    pub counts: CountTables,
    /// M x K coefficients on standardized covariates.
    pub lambda_std: Array2<f64>,
    pub standardizer: Standardizer,
    /// D x M standardized design matrix.
    pub x_std: Array2<f64>,
    pub iteration: u64,
    pub mode: Mode,
}

pub fn init_state_cov(
    corpus: &Corpus,
    dict: &KeywordDictionary,
    hp: &HyperParams,
    weights: &TermWeights,
    mode: Mode,
    rng: &mut RandomStream,
) -> Result<CovChainState> {
    hp.validate()?;
    let cov = corpus
        .covariates
        .as_ref()
        .ok_or_else(|| Error::config("covariate model requires per-document covariates"))?;
    let (x_std, standardizer) = standardize(&cov.rows, &cov.names)?;
    let k_total = dict.k_total();
    if k_total == 0 {
        return Err(Error::config("model must have at least one topic"));
    }
    let k_keyword = mode.effective_k_keyword(dict);
    let m_total = x_std.ncols();
    let lambda_std = Array2::from_shape_fn((m_total, k_total), |_| {
        hp.mu + hp.sigma * normal_draw(rng)
    });
    let (z, s) = crate::base::init_assignments(corpus, dict, mode, rng);
    let counts = rebuild_counts(&z, &s, corpus, weights, k_total, k_keyword);
    Ok(CovChainState {
        z,
        s,
        counts,
        lambda_std,
        standardizer,
        x_std,
        iteration: 0,
        mode,
    })
}

/// Standard normal draw via Box-Muller on the shared stream.
fn normal_draw(rng: &mut RandomStream) -> f64 {
    let u1 = rng.uniform_open();
    let u2 = rng.uniform();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl CovChainState {
    /// exp(X_std lambda) flattened row-major (D x K).
    pub fn doc_priors_flat(&self) -> Vec<f64> {
        let dots = self.x_std.dot(&self.lambda_std);
        dots.iter().map(|&x| x.exp()).collect()
    }

    pub fn sweep(
        &mut self,
        corpus: &Corpus,
        dict: &KeywordDictionary,
        weights: &TermWeights,
        hp: &HyperParams,
        opts: &SliceOptions,
        rng: &mut RandomStream,
    ) -> Result<()> {
        let flat = self.doc_priors_flat();
        let priors = DocPriors::PerDoc {
            flat: &flat,
            k: self.counts.k_total(),
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
        sample_lambda(&mut self.lambda_std, &self.counts, &self.x_std, hp, opts, rng)?;
        self.iteration += 1;
        Ok(())
    }
}

/// Slice-update every coefficient on the real line, one full pass in
/// row-major (covariate, topic) order.
///
/// The target of lambda_mk is the product over documents of
/// Gamma(sum_k a_dk) Gamma(n_dk + a_dk) / (Gamma(a_dk)
/// Gamma(sum_k n_dk + a_dk)) with a_dk = exp(lambda_k^T x_d), times the
/// Normal(mu, sigma^2) prior.
pub fn sample_lambda(
    lambda: &mut Array2<f64>,
    counts: &CountTables,
    x_std: &Array2<f64>,
    hp: &HyperParams,
    opts: &SliceOptions,
    rng: &mut RandomStream,
) -> Result<()> {
    let (m_total, k_total) = lambda.dim();
    let d_total = x_std.nrows();
    debug_assert_eq!(counts.k_total(), k_total);

    // dot[d][k] = lambda_k^T x_d, kept current as coefficients change.
    let mut dot = x_std.dot(lambda);
    // exp(dot) row sums.
    let mut row_sum: Vec<f64> = (0..d_total)
        .map(|d| dot.row(d).iter().map(|&x| x.exp()).sum())
        .collect();
    let doc_totals: Vec<f64> = (0..d_total).map(|d| counts.doc_total(d)).collect();

    for m in 0..m_total {
        for k in 0..k_total {
            let current = lambda[[m, k]];
            let a_old: Vec<f64> = (0..d_total).map(|d| dot[[d, k]].exp()).collect();
            let ndk: Vec<f64> = (0..d_total).map(|d| counts.n_dk(d, k)).collect();
            let target = |c: f64| {
                let delta = c - current;
                let mut lp = -(c - hp.mu).powi(2) / (2.0 * hp.sigma * hp.sigma);
                for d in 0..d_total {
                    let a_new = (dot[[d, k]] + delta * x_std[[d, m]]).exp();
                    let total = row_sum[d] - a_old[d] + a_new;
                    lp += ln_gamma(total) - ln_gamma(a_new) + ln_gamma(ndk[d] + a_new)
                        - ln_gamma(doc_totals[d] + total);
                }
                lp
            };
            let updated = slice_sample_real(target, current, opts, rng)
                .map_err(|e| Error::fault(format!("lambda[{m},{k}]: {e}")))?;
            let delta = updated - current;
            if delta != 0.0 {
                for d in 0..d_total {
                    dot[[d, k]] += delta * x_std[[d, m]];
                    let a_new = dot[[d, k]].exp();
                    row_sum[d] += a_new - a_old[d];
                }
            }
            lambda[[m, k]] = updated;
        }
    }
    Ok(())
}

/// Map coefficients fitted on standardized covariates back to the raw
/// scale: lambda = (X^T X)^{-1} X^T X_std lambda_std, which satisfies
/// X lambda = X_std lambda_std exactly because the standardized columns lie
/// in the column space of X.
pub fn rescale_lambda(
    lambda_std: &Array2<f64>,
    x: &Array2<f64>,
    x_std: &Array2<f64>,
) -> Result<Array2<f64>> {
    let m = x.ncols();
    let xtx = x.t().dot(x);
    let target = x.t().dot(&x_std.dot(lambda_std));
    let k = target.ncols();
    let mut solution = Array2::zeros((m, k));
    for j in 0..k {
        let col = solve_linear(&xtx, &target.column(j).to_owned()).map_err(|_| {
            Error::config(
                "X^T X is singular; inspect covariates for collinear or constant columns",
            )
        })?;
        for i in 0..m {
            solution[[i, j]] = col[i];
        }
    }
    Ok(solution)
}

/// Gaussian elimination with partial pivoting for the small symmetric
/// systems rescaling needs.
fn solve_linear(a: &Array2<f64>, b: &Array1<f64>) -> std::result::Result<Vec<f64>, ()> {
    let n = a.nrows();
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = a.row(i).to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
            .unwrap();
        if aug[pivot][col].abs() < 1e-12 {
            return Err(());
        }
        aug.swap(col, pivot);
        for row in col + 1..n {
            let factor = aug[row][col] / aug[col][col];
            for j in col..=n {
                aug[row][j] -= factor * aug[col][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = aug[i][n];
        for j in i + 1..n {
            acc -= aug[i][j] * x[j];
        }
        x[i] = acc / aug[i][i];
    }
    Ok(x)
}

/// How to turn stored draws into document-topic proportions.
#[derive(Debug, Clone, Copy)]
pub enum PredictMode {
    /// Posterior mean for an existing document: (a_dk + n_dk) / sum.
    WithCounts(usize),
    /// Posterior predictive mean for a new covariate value: a_k / sum.
    Predictive,
}

#[derive(Debug, Clone)]
pub struct PredictedTheta {
    pub mean: Vec<f64>,
    /// One proportion vector per stored draw, for interval computation.
    pub draws: Vec<Vec<f64>>,
}

/// Average document-topic proportions over the stored draws for a raw-scale
/// covariate vector (standardized internally with the fitted standardizer).
pub fn predict_theta(
    trace: &ChainTrace,
    x_star: &[f64],
    mode: PredictMode,
) -> Result<PredictedTheta> {
    let standardizer = trace
        .meta
        .standardizer
        .as_ref()
        .ok_or_else(|| Error::config("trace does not come from a covariate fit"))?;
    if x_star.len() != standardizer.mean.len() {
        return Err(Error::config(format!(
            "covariate vector has length {}, expected {}",
            x_star.len(),
            standardizer.mean.len()
        )));
    }
    let x_tilde = standardizer.apply_row(x_star);
    let kept = trace.post_burn_in();
    if kept.is_empty() {
        return Err(Error::config("trace has no post-burn-in draws"));
    }
    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(kept.len());
    for draw in &kept {
        let DrawParams::Covariate { lambda_std } = &draw.params else {
            return Err(Error::config("trace draw is not from the covariate sampler"));
        };
        let k_total = lambda_std.ncols();
        let mut a: Vec<f64> = (0..k_total)
            .map(|k| {
                let dot: f64 = (0..x_tilde.len()).map(|m| lambda_std[[m, k]] * x_tilde[m]).sum();
                dot.exp()
            })
            .collect();
        if let PredictMode::WithCounts(d) = mode {
            for (k, val) in a.iter_mut().enumerate() {
                *val += draw.counts.n_dk[[d, k]];
            }
        }
        let total: f64 = a.iter().sum();
        draws.push(a.into_iter().map(|v| v / total).collect());
    }
    let k_total = draws[0].len();
    let mut mean = vec![0.0; k_total];
    for row in &draws {
        for (k, v) in row.iter().enumerate() {
            mean[k] += v;
        }
    }
    for v in &mut mean {
        *v /= draws.len() as f64;
    }
    Ok(PredictedTheta { mean, draws })
}
