use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::corpus::Corpus;
use crate::covariate::{rescale_lambda, PredictedTheta};
use crate::error::{Error, Result};
use crate::estimators::{self, TimeTrend, TopWord};
use crate::evaluation::EvaluationReport;
use crate::hyper::HyperParams;
use crate::keywords::{KeywordDiagnostics, KeywordDictionary};
use crate::trace::{ChainTrace, DrawParams};

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Quote a CSV field if it contains separators or quotes.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_phi_csv(path: &Path, phi: &Array2<f64>, vocab: &[String]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "topic,word,probability")?;
    for k in 0..phi.nrows() {
        for v in 0..phi.ncols() {
            writeln!(out, "{k},{},{}", csv_field(&vocab[v]), phi[[k, v]])?;
        }
    }
    Ok(())
}

pub fn write_theta_csv(path: &Path, theta: &Array2<f64>, doc_ids: &[String]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "doc_id,topic,probability")?;
    for d in 0..theta.nrows() {
        for k in 0..theta.ncols() {
            writeln!(out, "{},{k},{}", csv_field(&doc_ids[d]), theta[[d, k]])?;
        }
    }
    Ok(())
}

/// Per-draw chain diagnostics: joint density, in-sample perplexity, and a
/// compact summary of the top-level parameters (the concentration vector,
/// the intercept-implied concentrations, or the state path).
pub fn write_diagnostics_csv(
    path: &Path,
    trace: &ChainTrace,
    corpus: &Corpus,
    dict: &KeywordDictionary,
    hp: &HyperParams,
) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "iteration,log_posterior,perplexity,alpha_or_state_summary")?;
    let wlda = trace.meta.model.is_wlda();
    for draw in &trace.draws {
        let (phi, _) = estimators::phi_single_draw(&draw.counts, dict, hp, wlda);
        let single = ChainTrace {
            meta: trace.meta.clone(),
            draws: vec![draw.clone()],
        };
        let theta = estimators::theta_single_draw(&single.draws[0], &single)?;
        let perp = estimators::perplexity(&phi, &theta, corpus);
        let summary = match &draw.params {
            DrawParams::Base { alpha } => join_floats(alpha),
            DrawParams::Covariate { lambda_std } => {
                let intercept: Vec<f64> =
                    (0..lambda_std.ncols()).map(|k| lambda_std[[0, k]].exp()).collect();
                join_floats(&intercept)
            }
            DrawParams::Dynamic { h, .. } => {
                h.iter().map(|r| (r + 1).to_string()).collect::<Vec<_>>().join(";")
            }
        };
        writeln!(out, "{},{},{},{}", draw.iteration, draw.log_posterior, perp, summary)?;
    }
    Ok(())
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Fitted coefficients per stored draw, on both scales.
pub fn write_lambda_csv(
    path: &Path,
    trace: &ChainTrace,
    x_raw: &Array2<f64>,
    covariate_names: &[String],
) -> Result<()> {
    let x_std = trace
        .meta
        .x_std
        .as_ref()
        .ok_or_else(|| Error::config("trace is missing the standardized design matrix"))?;
    let mut out = create(path)?;
    writeln!(out, "draw,covariate,topic,lambda_std,lambda_raw")?;
    for (idx, draw) in trace.draws.iter().enumerate() {
        let DrawParams::Covariate { lambda_std } = &draw.params else {
            return Err(Error::config("trace draw is not from the covariate sampler"));
        };
        let raw = rescale_lambda(lambda_std, x_raw, x_std)?;
        for m in 0..lambda_std.nrows() {
            for k in 0..lambda_std.ncols() {
                writeln!(
                    out,
                    "{idx},{},{k},{},{}",
                    csv_field(&covariate_names[m]),
                    lambda_std[[m, k]],
                    raw[[m, k]]
                )?;
            }
        }
    }
    Ok(())
}

pub fn write_trend_csv(path: &Path, trend: &TimeTrend) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "time,topic,mean,standardized")?;
    for t in 0..trend.mean.nrows() {
        for k in 0..trend.mean.ncols() {
            writeln!(out, "{t},{k},{},{}", trend.mean[[t, k]], trend.standardized[[t, k]])?;
        }
    }
    Ok(())
}

/// State path per stored draw; states are reported 1-based.
pub fn write_states_csv(path: &Path, trace: &ChainTrace) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "iteration,t,state")?;
    for draw in &trace.draws {
        let DrawParams::Dynamic { h, .. } = &draw.params else {
            return Err(Error::config("trace draw is not from the dynamic sampler"));
        };
        for (t, r) in h.iter().enumerate() {
            writeln!(out, "{},{t},{}", draw.iteration, r + 1)?;
        }
    }
    Ok(())
}

/// Diagonal transition probabilities per stored draw; states 1-based.
pub fn write_transitions_csv(path: &Path, trace: &ChainTrace) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "iteration,r,p_stay")?;
    for draw in &trace.draws {
        let DrawParams::Dynamic { p_stay, .. } = &draw.params else {
            return Err(Error::config("trace draw is not from the dynamic sampler"));
        };
        for (r, p) in p_stay.iter().enumerate() {
            writeln!(out, "{},{},{}", draw.iteration, r + 1, p)?;
        }
    }
    Ok(())
}

pub fn write_topwords_csv(
    path: &Path,
    ranked: &[Vec<TopWord>],
    labels: &[String],
) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "topic,label,rank,word,probability,mark")?;
    for (k, words) in ranked.iter().enumerate() {
        for (rank, w) in words.iter().enumerate() {
            let mark = match w.mark {
                crate::estimators::WordMark::OwnKeyword => "own_keyword",
                crate::estimators::WordMark::OtherKeyword => "other_topic_keyword",
                crate::estimators::WordMark::Plain => "plain",
            };
            writeln!(
                out,
                "{k},{},{},{},{},{mark}",
                csv_field(&labels[k]),
                rank + 1,
                csv_field(&w.surface),
                w.probability
            )?;
        }
    }
    Ok(())
}

pub fn write_predicted_csv(path: &Path, scenarios: &[(String, PredictedTheta)]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "scenario,topic,mean,q05,q95")?;
    for (name, pred) in scenarios {
        let k_total = pred.mean.len();
        for k in 0..k_total {
            let mut vals: Vec<f64> = pred.draws.iter().map(|d| d[k]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            writeln!(
                out,
                "{},{k},{},{},{}",
                csv_field(name),
                pred.mean[k],
                quantile(&vals, 0.05),
                quantile(&vals, 0.95)
            )?;
        }
    }
    Ok(())
}

/// Linear-interpolation quantile of pre-sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

pub fn write_keyword_diagnostics(
    dir: &Path,
    diag: &KeywordDiagnostics,
    corpus: &Corpus,
    dict: &KeywordDictionary,
) -> Result<()> {
    let mut out = create(&dir.join("keyword_doc_stats.csv"))?;
    writeln!(out, "doc_id,keyword_proportion")?;
    for (d, p) in diag.doc_proportion.iter().enumerate() {
        writeln!(out, "{},{p}", csv_field(&corpus.doc_ids[d]))?;
    }
    let mut out = create(&dir.join("keyword_doc_topic_counts.csv"))?;
    writeln!(out, "doc_id,topic,unique_keywords")?;
    for d in 0..corpus.num_docs() {
        for k in 0..dict.k_keyword() {
            writeln!(
                out,
                "{},{},{}",
                csv_field(&corpus.doc_ids[d]),
                csv_field(&dict.label(k)),
                diag.doc_unique_counts[[d, k]]
            )?;
        }
    }
    let mut out = create(&dir.join("keyword_frequencies.csv"))?;
    writeln!(out, "topic,keyword,count")?;
    for (k, words) in diag.keyword_frequencies.iter().enumerate() {
        for (word, count) in words {
            writeln!(out, "{},{},{count}", csv_field(&dict.label(k)), csv_field(word))?;
        }
    }
    Ok(())
}

pub fn write_roc_csv(path: &Path, report: &EvaluationReport) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "topic,fpr,tpr")?;
    for topic in &report.per_topic {
        if let Some(roc) = &topic.roc {
            for (fpr, tpr) in &roc.points {
                writeln!(out, "{},{fpr},{tpr}", topic.topic)?;
            }
        }
    }
    Ok(())
}

pub fn write_auroc_csv(path: &Path, report: &EvaluationReport, labels: &[String]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "topic,auroc,matched_label")?;
    for topic in &report.per_topic {
        let auroc = topic.auroc.map(|a| a.to_string()).unwrap_or_default();
        let label = topic
            .matched_label
            .map(|l| csv_field(&labels[l]))
            .unwrap_or_default();
        writeln!(out, "{},{auroc},{label}", topic.topic)?;
    }
    Ok(())
}

pub fn write_report_json(path: &Path, report: &EvaluationReport, labels: &[String]) -> Result<()> {
    #[derive(serde::Serialize)]
    struct Wrapper<'a> {
        labels: &'a [String],
        report: &'a EvaluationReport,
    }
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &Wrapper { labels, report })
        .map_err(|e| Error::schema(format!("report serialization: {e}")))
}
