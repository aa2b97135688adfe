use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::base::{init_state, BaseChainState, Mode};
use crate::corpus::{load_corpus, Corpus, CorpusOptions};
use crate::counts::CountTables;
use crate::covariate::{init_state_cov, CovChainState};
use crate::dynamic::{init_state_dyn, DynChainState};
use crate::error::{Error, Result};
use crate::estimators;
use crate::export;
use crate::hyper::HyperParams;
use crate::keywords::{load_keywords, KeywordDictionary};
use crate::rng::RandomStream;
use crate::slice::SliceOptions;
use crate::snapshot::StateSnapshot;
use crate::trace::{ChainTrace, DrawParams, ModelKind, TraceDraw, TraceMeta};
use crate::weights::{compute_term_weights, TermWeights};

fn default_thin() -> u64 {
    10
}
fn default_burn_in() -> f64 {
    0.5
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_states() -> usize {
    5
}
fn default_weighted() -> bool {
    true
}

/// A complete description of one fitting run. Loaded from TOML; every
/// field but the model, paths and iteration count has a default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub corpus: PathBuf,
    pub keywords: PathBuf,
    #[serde(default)]
    pub covariate_columns: Option<Vec<String>>,
    pub output: PathBuf,
    #[serde(default)]
    pub k_extra: usize,
    pub iterations: u64,
    #[serde(default = "default_thin")]
    pub thin: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_states")]
    pub states: usize,
    #[serde(default = "default_weighted")]
    pub weighted: bool,
    #[serde(default)]
    pub hyper: HyperParams,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::config(format!("run configuration: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::config("thinning interval must be at least 1"));
        }
        if self.iterations < self.thin {
            return Err(Error::config("iterations must be at least the thinning interval"));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(Error::config("burn-in fraction must lie in [0, 1)"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one chain seed is required"));
        }
        if self.states == 0 {
            return Err(Error::config("the dynamic model needs at least one state"));
        }
        self.hyper.validate()
    }

    pub fn mode(&self) -> Mode {
        if self.model.is_wlda() {
            Mode::Wlda
        } else {
            Mode::Keyword
        }
    }

    fn burn_in(&self, iterations: u64) -> u64 {
        (iterations as f64 * self.burn_in_fraction).floor() as u64
    }
}

/// Inputs shared by every chain of a run.
pub struct RunInputs {
    pub corpus: Corpus,
    pub dict: KeywordDictionary,
    pub weights: TermWeights,
}

pub fn load_inputs(config: &RunConfig) -> Result<RunInputs> {
    let opts = CorpusOptions {
        covariate_columns: config.covariate_columns.clone(),
    };
    let corpus = load_corpus(&config.corpus, &opts)?;
    let dict = load_keywords(&config.keywords, &corpus, config.k_extra)?;
    if dict.k_total() == 0 {
        return Err(Error::config("no topics: keyword file is empty and k_extra is 0"));
    }
    let weights = compute_term_weights(&corpus, config.weighted);
    match config.model {
        ModelKind::Covariate => {
            if corpus.covariates.is_none() {
                return Err(Error::config("covariate model requires covariates in the corpus"));
            }
        }
        ModelKind::Dynamic => {
            let t = corpus.num_time_periods().ok_or_else(|| {
                Error::config("dynamic model requires a per-document time index")
            })?;
            if config.states > t {
                return Err(Error::config(format!(
                    "number of states R={} exceeds time periods T={t}; no monotone state path exists",
                    config.states
                )));
            }
        }
        _ => {}
    }
    Ok(RunInputs {
        corpus,
        dict,
        weights,
    })
}

/// One chain's live state, whatever the variant.
pub enum AnyState {
    Base(BaseChainState),
    Covariate(CovChainState),
    Dynamic(DynChainState),
}

impl AnyState {
    pub fn init(
        model: ModelKind,
        inputs: &RunInputs,
        hp: &HyperParams,
        states: usize,
        rng: &mut RandomStream,
    ) -> Result<AnyState> {
        let mode = if model.is_wlda() { Mode::Wlda } else { Mode::Keyword };
        Ok(match model {
            ModelKind::Base | ModelKind::Wlda => AnyState::Base(init_state(
                &inputs.corpus,
                &inputs.dict,
                hp,
                &inputs.weights,
                mode,
                rng,
            )?),
            ModelKind::Covariate => AnyState::Covariate(init_state_cov(
                &inputs.corpus,
                &inputs.dict,
                hp,
                &inputs.weights,
                mode,
                rng,
            )?),
            ModelKind::Dynamic => AnyState::Dynamic(init_state_dyn(
                &inputs.corpus,
                &inputs.dict,
                hp,
                &inputs.weights,
                states,
                mode,
                rng,
            )?),
        })
    }

    pub fn sweep(
        &mut self,
        inputs: &RunInputs,
        hp: &HyperParams,
        opts: &SliceOptions,
        rng: &mut RandomStream,
    ) -> Result<()> {
        match self {
            AnyState::Base(s) => s.sweep(&inputs.corpus, &inputs.dict, &inputs.weights, hp, opts, rng),
            AnyState::Covariate(s) => {
                s.sweep(&inputs.corpus, &inputs.dict, &inputs.weights, hp, opts, rng)
            }
            AnyState::Dynamic(s) => {
                s.sweep(&inputs.corpus, &inputs.dict, &inputs.weights, hp, opts, rng)
            }
        }
    }

    pub fn iteration(&self) -> u64 {
        match self {
            AnyState::Base(s) => s.iteration,
            AnyState::Covariate(s) => s.iteration,
            AnyState::Dynamic(s) => s.iteration,
        }
    }

    pub fn counts(&self) -> &CountTables {
        match self {
            AnyState::Base(s) => &s.counts,
            AnyState::Covariate(s) => &s.counts,
            AnyState::Dynamic(s) => &s.counts,
        }
    }

    fn draw_params(&self) -> DrawParams {
        match self {
            AnyState::Base(s) => DrawParams::Base { alpha: s.alpha.clone() },
            AnyState::Covariate(s) => DrawParams::Covariate { lambda_std: s.lambda_std.clone() },
            AnyState::Dynamic(s) => DrawParams::Dynamic {
                h: s.h.clone(),
                alpha_mat: s.alpha_mat.clone(),
                p_stay: s.p_stay.clone(),
            },
        }
    }

    fn log_posterior(&self, inputs: &RunInputs, hp: &HyperParams) -> f64 {
        match self {
            AnyState::Base(s) => estimators::collapsed_log_posterior_base(s, hp, &inputs.dict),
            AnyState::Covariate(s) => estimators::collapsed_log_posterior_cov(s, hp, &inputs.dict),
            AnyState::Dynamic(s) => estimators::collapsed_log_posterior_dyn(
                s,
                hp,
                &inputs.dict,
                inputs.corpus.time_index.as_ref().expect("dynamic corpus has time"),
            ),
        }
    }

    fn to_snapshot(&self, model: ModelKind, rng: &RandomStream) -> StateSnapshot {
        match self {
            AnyState::Base(s) => StateSnapshot::of_base(s, model, rng),
            AnyState::Covariate(s) => StateSnapshot::of_covariate(s, rng),
            AnyState::Dynamic(s) => StateSnapshot::of_dynamic(s, rng),
        }
    }

    pub fn restore(
        snap: &StateSnapshot,
        inputs: &RunInputs,
    ) -> Result<(AnyState, RandomStream)> {
        let rng = snap.restore_rng();
        let state = match snap.model {
            ModelKind::Base | ModelKind::Wlda => {
                AnyState::Base(snap.restore_base(&inputs.corpus, &inputs.dict, &inputs.weights)?)
            }
            ModelKind::Covariate => AnyState::Covariate(snap.restore_covariate(
                &inputs.corpus,
                &inputs.dict,
                &inputs.weights,
            )?),
            ModelKind::Dynamic => AnyState::Dynamic(snap.restore_dynamic(
                &inputs.corpus,
                &inputs.dict,
                &inputs.weights,
            )?),
        };
        Ok((state, rng))
    }

    fn trace_meta(&self, config: &RunConfig, inputs: &RunInputs, iterations: u64) -> TraceMeta {
        let (x_std, standardizer) = match self {
            AnyState::Covariate(s) => (Some(s.x_std.clone()), Some(s.standardizer.clone())),
            _ => (None, None),
        };
        TraceMeta {
            model: config.model,
            thin: config.thin,
            burn_in: config.burn_in(iterations),
            doc_ids: inputs.corpus.doc_ids.clone(),
            time_index: inputs.corpus.time_index.clone(),
            x_std,
            standardizer,
        }
    }
}

/// Advance one chain to `target_iterations`, recording thinned draws.
pub fn advance_chain(
    state: &mut AnyState,
    trace: &mut ChainTrace,
    inputs: &RunInputs,
    config: &RunConfig,
    target_iterations: u64,
    rng: &mut RandomStream,
) -> Result<()> {
    let opts = SliceOptions::default();
    while state.iteration() < target_iterations {
        state.sweep(inputs, &config.hyper, &opts, rng).map_err(|e| match e {
            Error::Fault(msg) => Error::Fault(format!(
                "iteration {}: {msg}",
                state.iteration() + 1
            )),
            other => other,
        })?;
        let it = state.iteration();
        if it % config.thin == 0 {
            trace.draws.push(TraceDraw {
                iteration: it,
                counts: (state.counts()).into(),
                params: state.draw_params(),
                log_posterior: state.log_posterior(inputs, &config.hyper),
            });
        }
    }
    trace.meta.burn_in = config.burn_in(target_iterations);
    Ok(())
}

pub fn chain_dir_name(index: usize) -> String {
    format!("chain_{index:02}")
}

/// Fit every chain and write the full artifact tree. Inputs are loaded and
/// validated before anything is created on disk.
pub fn run(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let inputs = load_inputs(config)?;

    std::fs::create_dir_all(&config.output)?;
    write_manifest(config)?;

    let results: Vec<Result<()>> = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .seeds
            .iter()
            .enumerate()
            .map(|(idx, &seed)| {
                let inputs = &inputs;
                scope.spawn(move || -> Result<()> {
                    let with_chain = |e: Error| match e {
                        Error::Fault(msg) => Error::Fault(format!("chain {idx}, {msg}")),
                        other => other,
                    };
                    let mut rng = RandomStream::new(seed);
                    let mut state =
                        AnyState::init(config.model, inputs, &config.hyper, config.states, &mut rng)
                            .map_err(with_chain)?;
                    let meta = state.trace_meta(config, inputs, config.iterations);
                    let mut trace = ChainTrace { meta, draws: Vec::new() };
                    advance_chain(&mut state, &mut trace, inputs, config, config.iterations, &mut rng)
                        .map_err(with_chain)?;
                    let dir = config.output.join(chain_dir_name(idx));
                    std::fs::create_dir_all(&dir)?;
                    write_chain_artifacts(&dir, &state, &trace, inputs, config, &rng)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    for r in results {
        r?;
    }
    Ok(())
}

/// Extend every chain of an existing run directory to a new total
/// iteration count, reproducing exactly what an uninterrupted run would
/// have written.
pub fn resume(run_dir: &Path, new_iterations: u64) -> Result<()> {
    let mut config = read_manifest(run_dir)?;
    if new_iterations < config.iterations {
        return Err(Error::config(format!(
            "cannot resume to {new_iterations} iterations, run already has {}",
            config.iterations
        )));
    }
    config.iterations = new_iterations;
    config.validate()?;
    let inputs = load_inputs(&config)?;
    for idx in 0..config.seeds.len() {
        let dir = run_dir.join(chain_dir_name(idx));
        let snap = StateSnapshot::load(&dir.join("snapshot.json"))?;
        let mut trace = ChainTrace::load_jsonl(&dir.join("trace.jsonl"))?;
        let (mut state, mut rng) = AnyState::restore(&snap, &inputs)?;
        advance_chain(&mut state, &mut trace, &inputs, &config, new_iterations, &mut rng)?;
        write_chain_artifacts(&dir, &state, &trace, &inputs, &config, &rng)?;
    }
    write_manifest(&config)?;
    Ok(())
}

/// Recompute summary CSVs from the stored traces, optionally with a
/// different burn-in fraction.
pub fn summarize_run(run_dir: &Path, burn_in_fraction: Option<f64>) -> Result<()> {
    let mut config = read_manifest(run_dir)?;
    if let Some(frac) = burn_in_fraction {
        if !(0.0..1.0).contains(&frac) {
            return Err(Error::config("burn-in fraction must lie in [0, 1)"));
        }
        config.burn_in_fraction = frac;
    }
    let inputs = load_inputs(&config)?;
    for idx in 0..config.seeds.len() {
        let dir = run_dir.join(chain_dir_name(idx));
        let mut trace = ChainTrace::load_jsonl(&dir.join("trace.jsonl"))?;
        trace.meta.burn_in = config.burn_in(config.iterations);
        write_summaries(&dir, &trace, &inputs, &config)?;
    }
    Ok(())
}

fn write_chain_artifacts(
    dir: &Path,
    state: &AnyState,
    trace: &ChainTrace,
    inputs: &RunInputs,
    config: &RunConfig,
    rng: &RandomStream,
) -> Result<()> {
    state.to_snapshot(config.model, rng).save(dir.join("snapshot.json"))?;
    trace.save_jsonl(dir.join("trace.jsonl"))?;
    write_summaries(dir, trace, inputs, config)
}

fn write_summaries(
    dir: &Path,
    trace: &ChainTrace,
    inputs: &RunInputs,
    config: &RunConfig,
) -> Result<()> {
    let summary = estimators::summarize(trace, &inputs.dict, &config.hyper)?;
    {
        // Topic-word rows are renormalized per draw; record how much mass
        // the raw mixture carried so the adjustment stays visible.
        #[derive(Serialize)]
        struct SummaryMeta<'a> {
            phi_rows_renormalized: bool,
            phi_row_mass: &'a [f64],
            burn_in: u64,
            draws_used: usize,
        }
        let meta = SummaryMeta {
            phi_rows_renormalized: !config.model.is_wlda(),
            phi_row_mass: &summary.phi_row_mass,
            burn_in: trace.meta.burn_in,
            draws_used: trace.post_burn_in().len(),
        };
        let file = std::fs::File::create(dir.join("summary.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &meta)
            .map_err(|e| Error::config(format!("summary serialization: {e}")))?;
    }
    export::write_phi_csv(&dir.join("phi.csv"), &summary.phi, &inputs.corpus.vocab)?;
    export::write_theta_csv(&dir.join("theta.csv"), &summary.theta, &inputs.corpus.doc_ids)?;
    export::write_diagnostics_csv(
        &dir.join("diagnostics.csv"),
        trace,
        &inputs.corpus,
        &inputs.dict,
        &config.hyper,
    )?;
    match config.model {
        ModelKind::Covariate => {
            let cov = inputs.corpus.covariates.as_ref().expect("validated");
            export::write_lambda_csv(&dir.join("lambda.csv"), trace, &cov.rows, &cov.names)?;
        }
        ModelKind::Dynamic => {
            let time = inputs.corpus.time_index.as_ref().expect("validated");
            let trend = estimators::time_trend(&summary.theta, time)?;
            export::write_trend_csv(&dir.join("trend.csv"), &trend)?;
            export::write_states_csv(&dir.join("states.csv"), trace)?;
            export::write_transitions_csv(&dir.join("transitions.csv"), trace)?;
        }
        _ => {}
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: String,
    config_sha256: String,
    config: RunConfig,
    chains: Vec<String>,
}

fn write_manifest(config: &RunConfig) -> Result<()> {
    let config_bytes = serde_json::to_vec(config).map_err(|e| Error::config(e.to_string()))?;
    let digest = Sha256::digest(&config_bytes);
    let config_sha256: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256,
        config: config.clone(),
        chains: (0..config.seeds.len()).map(chain_dir_name).collect(),
    };
    let file = std::fs::File::create(config.output.join("manifest.json"))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &manifest)
        .map_err(|e| Error::config(format!("manifest serialization: {e}")))
}

pub fn read_manifest(run_dir: &Path) -> Result<RunConfig> {
    let file = std::fs::File::open(run_dir.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::config(format!("manifest parse: {e}")))?;
    Ok(manifest.config)
}
