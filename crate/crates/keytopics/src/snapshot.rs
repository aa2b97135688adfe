use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::base::{BaseChainState, Mode};
use crate::corpus::Corpus;
use crate::counts::rebuild_counts;
use crate::covariate::{CovChainState, Standardizer};
use crate::dynamic::DynChainState;
use crate::error::{Error, Result};
use crate::keywords::KeywordDictionary;
use crate::rng::RandomStream;
use crate::trace::ModelKind;
use crate::weights::TermWeights;

pub fn rle_encode<T: PartialEq + Copy>(xs: &[T]) -> Vec<(T, u32)> {
    let mut out: Vec<(T, u32)> = Vec::new();
    for &x in xs {
        match out.last_mut() {
            Some((v, run)) if *v == x => *run += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

pub fn rle_decode<T: Copy>(pairs: &[(T, u32)]) -> Vec<T> {
    let mut out = Vec::new();
    for &(v, run) in pairs {
        out.extend(std::iter::repeat(v).take(run as usize));
    }
    out
}

/// Everything needed to resume a chain bit-exactly: assignments
/// (run-length encoded per document), the variant's top-level parameters,
/// the iteration counter, and the random stream position. Count tables are
/// rebuilt from the assignments on restore and match the live tables
/// exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub model: ModelKind,
    pub iteration: u64,
    pub seed: u64,
    pub rng_pos_hi: u64,
    pub rng_pos_lo: u64,
    pub z: Vec<Vec<(usize, u32)>>,
    pub s: Vec<Vec<(u8, u32)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_std: Option<Array2<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_stay: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_mat: Option<Array2<f64>>,
}

fn split_pos(pos: u128) -> (u64, u64) {
    ((pos >> 64) as u64, pos as u64)
}

fn join_pos(hi: u64, lo: u64) -> u128 {
    ((hi as u128) << 64) | lo as u128
}

impl StateSnapshot {
    fn shell(
        model: ModelKind,
        iteration: u64,
        z: &[Vec<usize>],
        s: &[Vec<u8>],
        rng: &RandomStream,
    ) -> StateSnapshot {
        let (hi, lo) = split_pos(rng.word_pos());
        StateSnapshot {
            model,
            iteration,
            seed: rng.seed(),
            rng_pos_hi: hi,
            rng_pos_lo: lo,
            z: z.iter().map(|d| rle_encode(d)).collect(),
            s: s.iter().map(|d| rle_encode(d)).collect(),
            alpha: None,
            lambda_std: None,
            standardizer: None,
            h: None,
            p_stay: None,
            alpha_mat: None,
        }
    }

    pub fn of_base(state: &BaseChainState, model: ModelKind, rng: &RandomStream) -> StateSnapshot {
        let mut snap = Self::shell(model, state.iteration, &state.z, &state.s, rng);
        snap.alpha = Some(state.alpha.clone());
        snap
    }

    pub fn of_covariate(state: &CovChainState, rng: &RandomStream) -> StateSnapshot {
        let mut snap =
            Self::shell(ModelKind::Covariate, state.iteration, &state.z, &state.s, rng);
        snap.lambda_std = Some(state.lambda_std.clone());
        snap.standardizer = Some(state.standardizer.clone());
        snap
    }

    pub fn of_dynamic(state: &DynChainState, rng: &RandomStream) -> StateSnapshot {
        let mut snap = Self::shell(ModelKind::Dynamic, state.iteration, &state.z, &state.s, rng);
        snap.h = Some(state.h.clone());
        snap.p_stay = Some(state.p_stay.clone());
        snap.alpha_mat = Some(state.alpha_mat.clone());
        snap
    }

    pub fn restore_rng(&self) -> RandomStream {
        RandomStream::restore(self.seed, join_pos(self.rng_pos_hi, self.rng_pos_lo))
    }

    fn decode_assignments(&self, corpus: &Corpus) -> Result<(Vec<Vec<usize>>, Vec<Vec<u8>>)> {
        let z: Vec<Vec<usize>> = self.z.iter().map(|d| rle_decode(d)).collect();
        let s: Vec<Vec<u8>> = self.s.iter().map(|d| rle_decode(d)).collect();
        if z.len() != corpus.num_docs()
            || z.iter().zip(&corpus.documents).any(|(zd, doc)| zd.len() != doc.len())
        {
            return Err(Error::schema("snapshot does not match the corpus shape"));
        }
        if s.len() != z.len() || s.iter().zip(&z).any(|(sd, zd)| sd.len() != zd.len()) {
            return Err(Error::schema("snapshot indicator shape mismatch"));
        }
        Ok((z, s))
    }

    pub fn restore_base(
        &self,
        corpus: &Corpus,
        dict: &KeywordDictionary,
        weights: &TermWeights,
    ) -> Result<BaseChainState> {
        let mode = if self.model.is_wlda() { Mode::Wlda } else { Mode::Keyword };
        let (z, s) = self.decode_assignments(corpus)?;
        let alpha = self
            .alpha
            .clone()
            .ok_or_else(|| Error::schema("snapshot is missing alpha"))?;
        let counts = rebuild_counts(
            &z,
            &s,
            corpus,
            weights,
            dict.k_total(),
            mode.effective_k_keyword(dict),
        );
        Ok(BaseChainState {
            z,
            s,
            counts,
            alpha,
            iteration: self.iteration,
            mode,
        })
    }

    pub fn restore_covariate(
        &self,
        corpus: &Corpus,
        dict: &KeywordDictionary,
        weights: &TermWeights,
    ) -> Result<CovChainState> {
        let (z, s) = self.decode_assignments(corpus)?;
        let lambda_std = self
            .lambda_std
            .clone()
            .ok_or_else(|| Error::schema("snapshot is missing lambda"))?;
        let standardizer = self
            .standardizer
            .clone()
            .ok_or_else(|| Error::schema("snapshot is missing the standardizer"))?;
        let cov = corpus
            .covariates
            .as_ref()
            .ok_or_else(|| Error::schema("corpus has no covariates"))?;
        let (x_std, _) = crate::covariate::standardize(&cov.rows, &cov.names)?;
        let counts = rebuild_counts(&z, &s, corpus, weights, dict.k_total(), dict.k_keyword());
        Ok(CovChainState {
            z,
            s,
            counts,
            lambda_std,
            standardizer,
            x_std,
            iteration: self.iteration,
            mode: Mode::Keyword,
        })
    }

    pub fn restore_dynamic(
        &self,
        corpus: &Corpus,
        dict: &KeywordDictionary,
        weights: &TermWeights,
    ) -> Result<DynChainState> {
        let (z, s) = self.decode_assignments(corpus)?;
        let h = self.h.clone().ok_or_else(|| Error::schema("snapshot is missing states"))?;
        let p_stay = self
            .p_stay
            .clone()
            .ok_or_else(|| Error::schema("snapshot is missing transition probabilities"))?;
        let alpha_mat = self
            .alpha_mat
            .clone()
            .ok_or_else(|| Error::schema("snapshot is missing the concentration matrix"))?;
        let counts = rebuild_counts(&z, &s, corpus, weights, dict.k_total(), dict.k_keyword());
        Ok(DynChainState {
            z,
            s,
            counts,
            h,
            p_stay,
            alpha_mat,
            iteration: self.iteration,
            mode: Mode::Keyword,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)
            .map_err(|e| Error::schema(format!("snapshot serialization: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<StateSnapshot> {
        let file = std::fs::File::open(path.as_ref())?;
        serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| Error::schema(format!("snapshot parse: {e}")))
    }
}
