use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use keytopics::corpus::{load_corpus, CorpusOptions};
use keytopics::error::{Error, Result};
use keytopics::estimators;
use keytopics::evaluation::{evaluate_against_labels, MatchMode};
use keytopics::export;
use keytopics::keywords::{keyword_diagnostics, load_keywords, parse_keywords};
use keytopics::runner::{self, RunConfig};
use keytopics::trace::ChainTrace;
use keytopics::weights::{compute_term_weights, export_weights};

#[derive(Parser)]
#[command(
    name = "keytopics",
    version,
    about = "Fit and evaluate keyword-seeded topic models from the command line"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model described by a TOML run configuration.
    Fit(FitArgs),
    /// Extend an existing run to a larger iteration count.
    Resume {
        /// Run directory containing manifest.json
        #[arg(long)]
        dir: PathBuf,
        /// New total iteration count
        #[arg(long)]
        iterations: u64,
    },
    /// Recompute summary CSVs from stored traces.
    Summarize {
        #[arg(long)]
        dir: PathBuf,
        /// Override the burn-in fraction recorded in the manifest
        #[arg(long)]
        burn_in_fraction: Option<f64>,
        /// Also write topwords.csv with this many words per topic
        #[arg(long)]
        top_words: Option<usize>,
        /// JSON file of named covariate scenarios for predicted proportions
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
    /// Score fitted document-topic proportions against gold labels.
    Evaluate {
        /// theta.csv produced by fit/summarize
        #[arg(long)]
        theta: PathBuf,
        /// CSV with header doc_id,label
        #[arg(long)]
        labels: PathBuf,
        #[arg(long = "match", value_enum, default_value = "hungarian")]
        match_mode: MatchArg,
        /// Keyword file fixing the label order (required for --match fixed)
        #[arg(long)]
        keywords: Option<PathBuf>,
        /// Output directory for roc.csv, auroc.csv, report.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute and export information weights for every vocabulary word.
    Weights {
        #[arg(long)]
        corpus: PathBuf,
        /// Emit unit weights instead of information weights
        #[arg(long)]
        unweighted: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the highest-probability words per topic with keyword markers.
    Topwords {
        /// phi.csv produced by fit/summarize
        #[arg(long)]
        phi: PathBuf,
        #[arg(long)]
        keywords: PathBuf,
        #[arg(short, long, default_value_t = 10)]
        n: usize,
        /// Output CSV (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keyword quality diagnostics against a corpus.
    DiagnoseKeywords {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        keywords: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchArg {
    Fixed,
    Hungarian,
}

#[derive(clap::Args)]
struct FitArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    // Flag overrides; flags win over the file.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    keywords: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    thin: Option<u64>,
    #[arg(long)]
    burn_in_fraction: Option<f64>,
    /// Comma-separated chain seeds
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    k_extra: Option<usize>,
    /// Number of latent states (dynamic model)
    #[arg(long)]
    states: Option<usize>,
    /// Disable information-based term weighting
    #[arg(long)]
    unweighted: bool,
    #[arg(long)]
    gamma1: Option<f64>,
    #[arg(long)]
    gamma2: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    beta_tilde: Option<f64>,
    #[arg(long)]
    eta1: Option<f64>,
    #[arg(long)]
    eta2: Option<f64>,
    #[arg(long)]
    eta1_tilde: Option<f64>,
    #[arg(long)]
    eta2_tilde: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
}

impl FitArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(model) = self.model {
            config.model = model.parse()?;
        }
        if let Some(v) = self.corpus {
            config.corpus = v;
        }
        if let Some(v) = self.keywords {
            config.keywords = v;
        }
        if let Some(v) = self.output {
            config.output = v;
        }
        if let Some(v) = self.iterations {
            config.iterations = v;
        }
        if let Some(v) = self.thin {
            config.thin = v;
        }
        if let Some(v) = self.burn_in_fraction {
            config.burn_in_fraction = v;
        }
        if let Some(v) = self.seeds {
            config.seeds = v;
        }
        if let Some(v) = self.k_extra {
            config.k_extra = v;
        }
        if let Some(v) = self.states {
            config.states = v;
        }
        if self.unweighted {
            config.weighted = false;
        }
        let hp = &mut config.hyper;
        for (slot, value) in [
            (&mut hp.gamma1, self.gamma1),
            (&mut hp.gamma2, self.gamma2),
            (&mut hp.beta, self.beta),
            (&mut hp.beta_tilde, self.beta_tilde),
            (&mut hp.eta1, self.eta1),
            (&mut hp.eta2, self.eta2),
            (&mut hp.eta1_tilde, self.eta1_tilde),
            (&mut hp.eta2_tilde, self.eta2_tilde),
            (&mut hp.mu, self.mu),
            (&mut hp.sigma, self.sigma),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        Ok(config)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Fault(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Fit(args) => runner::run(&args.into_config()?),
        Command::Resume { dir, iterations } => runner::resume(&dir, iterations),
        Command::Summarize {
            dir,
            burn_in_fraction,
            top_words,
            scenarios,
        } => summarize(&dir, burn_in_fraction, top_words, scenarios.as_deref()),
        Command::Evaluate {
            theta,
            labels,
            match_mode,
            keywords,
            out,
        } => evaluate(&theta, &labels, match_mode, keywords.as_deref(), &out),
        Command::Weights { corpus, unweighted, out } => {
            let corpus = load_corpus(&corpus, &CorpusOptions::default())?;
            let weights = compute_term_weights(&corpus, !unweighted);
            export_weights(&weights, &corpus, out)
        }
        Command::Topwords { phi, keywords, n, out } => topwords(&phi, &keywords, n, out.as_deref()),
        Command::DiagnoseKeywords { corpus, keywords, out } => {
            let corpus = load_corpus(&corpus, &CorpusOptions::default())?;
            let dict = load_keywords(&keywords, &corpus, 0)?;
            let diag = keyword_diagnostics(&corpus, &dict);
            std::fs::create_dir_all(&out)?;
            export::write_keyword_diagnostics(&out, &diag, &corpus, &dict)
        }
    }
}

fn summarize(
    dir: &Path,
    burn_in_fraction: Option<f64>,
    top_words: Option<usize>,
    scenarios: Option<&Path>,
) -> Result<()> {
    runner::summarize_run(dir, burn_in_fraction)?;
    if top_words.is_none() && scenarios.is_none() {
        return Ok(());
    }
    let config = runner::read_manifest(dir)?;
    let inputs = runner::load_inputs(&config)?;
    for idx in 0..config.seeds.len() {
        let chain_dir = dir.join(runner::chain_dir_name(idx));
        let mut trace = ChainTrace::load_jsonl(&chain_dir.join("trace.jsonl"))?;
        if let Some(frac) = burn_in_fraction {
            trace.meta.burn_in = (config.iterations as f64 * frac).floor() as u64;
        }
        if let Some(n) = top_words {
            let (phi, _) = estimators::estimate_phi(&trace, &inputs.dict, &config.hyper)?;
            let ranked = estimators::top_words(&phi, n, &inputs.dict, &inputs.corpus.vocab);
            let labels: Vec<String> =
                (0..inputs.dict.k_total()).map(|k| inputs.dict.label(k)).collect();
            export::write_topwords_csv(&chain_dir.join("topwords.csv"), &ranked, &labels)?;
        }
        if let Some(path) = scenarios {
            let text = std::fs::read_to_string(path)?;
            let parsed: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::schema(format!("scenario file: {e}")))?;
            let obj = parsed
                .as_object()
                .ok_or_else(|| Error::schema("scenario file must be a JSON object"))?;
            let cov = inputs
                .corpus
                .covariates
                .as_ref()
                .ok_or_else(|| Error::config("scenarios need a covariate model"))?;
            let mut rows = Vec::new();
            for (name, values) in obj {
                let values = values
                    .as_object()
                    .ok_or_else(|| Error::schema(format!("scenario '{name}' must be an object")))?;
                let mut x = vec![1.0];
                for cov_name in cov.names.iter().skip(1) {
                    let v = values.get(cov_name).and_then(|v| v.as_f64()).ok_or_else(|| {
                        Error::schema(format!("scenario '{name}' is missing covariate '{cov_name}'"))
                    })?;
                    x.push(v);
                }
                let pred = keytopics::covariate::predict_theta(
                    &trace,
                    &x,
                    keytopics::covariate::PredictMode::Predictive,
                )?;
                rows.push((name.clone(), pred));
            }
            export::write_predicted_csv(&chain_dir.join("predicted.csv"), &rows)?;
        }
    }
    Ok(())
}

/// Read a theta.csv (doc_id,topic,probability) into a dense matrix, doc
/// order by first appearance.
fn read_theta_csv(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::schema(e.to_string()))?;
    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<(usize, usize), f64> = HashMap::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut k_max = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() })?;
        if record.len() != 3 {
            return Err(Error::Parse {
                line: i + 2,
                msg: format!("expected 3 columns, got {}", record.len()),
            });
        }
        let doc_id = record[0].to_string();
        let topic: usize = record[1].parse().map_err(|e| Error::Parse {
            line: i + 2,
            msg: format!("bad topic index: {e}"),
        })?;
        let prob: f64 = record[2].parse().map_err(|e| Error::Parse {
            line: i + 2,
            msg: format!("bad probability: {e}"),
        })?;
        let d = *index.entry(doc_id.clone()).or_insert_with(|| {
            order.push(doc_id);
            order.len() - 1
        });
        k_max = k_max.max(topic + 1);
        cells.insert((d, topic), prob);
    }
    if order.is_empty() {
        return Err(Error::schema("theta file has no rows"));
    }
    let mut theta = Array2::zeros((order.len(), k_max));
    for ((d, k), p) in cells {
        theta[[d, k]] = p;
    }
    Ok((order, theta))
}

fn evaluate(
    theta_path: &Path,
    labels_path: &Path,
    match_mode: MatchArg,
    keywords: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let (doc_ids, theta) = read_theta_csv(theta_path)?;

    let mut label_of_doc: HashMap<String, String> = HashMap::new();
    let mut reader =
        csv::Reader::from_path(labels_path).map_err(|e| Error::schema(e.to_string()))?;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() })?;
        if record.len() < 2 {
            return Err(Error::Parse { line: i + 2, msg: "expected doc_id,label".into() });
        }
        label_of_doc.insert(record[0].to_string(), record[1].to_string());
    }

    // Label universe: keyword-topic order when a keyword file is given,
    // otherwise order of first appearance in the labels file.
    let mut label_names: Vec<String> = Vec::new();
    if let Some(kw_path) = keywords {
        let text = std::fs::read_to_string(kw_path)?;
        let parsed: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::schema(format!("keyword file: {e}")))?;
        let obj = parsed
            .as_object()
            .ok_or_else(|| Error::schema("keyword file must be a JSON object"))?;
        label_names.extend(obj.keys().cloned());
    }
    let mut gold = Vec::with_capacity(doc_ids.len());
    for doc_id in &doc_ids {
        let label = label_of_doc
            .get(doc_id)
            .ok_or_else(|| Error::schema(format!("labels file is missing document '{doc_id}'")))?;
        let idx = match label_names.iter().position(|l| l == label) {
            Some(idx) => idx,
            None => {
                if keywords.is_some() && matches!(match_mode, MatchArg::Fixed) {
                    return Err(Error::schema(format!(
                        "label '{label}' is not a keyword topic; fixed matching requires keyword-topic labels"
                    )));
                }
                label_names.push(label.clone());
                label_names.len() - 1
            }
        };
        gold.push(idx);
    }

    let mode = match match_mode {
        MatchArg::Fixed => MatchMode::Fixed,
        MatchArg::Hungarian => MatchMode::Hungarian,
    };
    let report = evaluate_against_labels(&theta, &gold, label_names.len(), mode)?;
    std::fs::create_dir_all(out)?;
    export::write_roc_csv(&out.join("roc.csv"), &report)?;
    export::write_auroc_csv(&out.join("auroc.csv"), &report, &label_names)?;
    export::write_report_json(&out.join("report.json"), &report, &label_names)?;
    Ok(())
}

fn topwords(phi_path: &Path, keywords_path: &Path, n: usize, out: Option<&Path>) -> Result<()> {
    // phi.csv carries surface strings; rebuild a vocabulary from it.
    let mut reader =
        csv::Reader::from_path(phi_path).map_err(|e| Error::schema(e.to_string()))?;
    let mut vocab: Vec<String> = Vec::new();
    let mut word_ids: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<(usize, usize, f64)> = Vec::new();
    let mut k_max = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() })?;
        let topic: usize = record[0].parse().map_err(|e| Error::Parse {
            line: i + 2,
            msg: format!("bad topic: {e}"),
        })?;
        let word = record[1].to_string();
        let prob: f64 = record[2].parse().map_err(|e| Error::Parse {
            line: i + 2,
            msg: format!("bad probability: {e}"),
        })?;
        let next = vocab.len();
        let v = *word_ids.entry(word.clone()).or_insert_with(|| {
            vocab.push(word);
            next
        });
        k_max = k_max.max(topic + 1);
        rows.push((topic, v, prob));
    }
    let mut phi = Array2::zeros((k_max, vocab.len()));
    for (k, v, p) in rows {
        phi[[k, v]] = p;
    }
    // Bind the keyword file against this vocabulary.
    let synthetic = {
        let mut c = keytopics::corpus::Corpus::from_token_ids(
            vec![(0..vocab.len()).collect()],
            vocab.len(),
        );
        c.vocab = vocab.clone();
        c
    };
    let text = std::fs::read_to_string(keywords_path)?;
    let k_extra = {
        let parsed: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::schema(format!("keyword file: {e}")))?;
        let k_tilde = parsed.as_object().map(|o| o.len()).unwrap_or(0);
        k_max.saturating_sub(k_tilde)
    };
    let dict = parse_keywords(&text, &synthetic, k_extra)?;
    let ranked = estimators::top_words(&phi, n, &dict, &vocab);
    let labels: Vec<String> = (0..dict.k_total().max(k_max)).map(|k| dict.label(k)).collect();
    match out {
        Some(path) => export::write_topwords_csv(path, &ranked, &labels),
        None => {
            let tmp = std::env::temp_dir().join(format!("topwords-{}.csv", std::process::id()));
            export::write_topwords_csv(&tmp, &ranked, &labels)?;
            let text = std::fs::read_to_string(&tmp)?;
            std::fs::remove_file(&tmp).ok();
            print!("{text}");
            Ok(())
        }
    }
}
