use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::counts::CountTables;
use crate::covariate::Standardizer;
use crate::error::{Error, Result};

/// Which sampler produced a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Base,
    Wlda,
    Covariate,
    Dynamic,
}

impl ModelKind {
    pub fn is_wlda(self) -> bool {
        matches!(self, ModelKind::Wlda)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(ModelKind::Base),
            "wlda" => Ok(ModelKind::Wlda),
            "covariate" => Ok(ModelKind::Covariate),
            "dynamic" => Ok(ModelKind::Dynamic),
            other => Err(Error::config(format!(
                "unknown model '{other}' (expected base, wlda, covariate or dynamic)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Base => "base",
            ModelKind::Wlda => "wlda",
            ModelKind::Covariate => "covariate",
            ModelKind::Dynamic => "dynamic",
        };
        f.write_str(s)
    }
}

/// Weighted count tables frozen at one stored draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSnapshot {
    pub n_kv: Array2<f64>,
    pub n_tilde_kv: Array2<f64>,
    pub n_dk: Array2<f64>,
    pub n_k: Array1<f64>,
    pub n_tilde_k: Array1<f64>,
}

impl From<&CountTables> for CountSnapshot {
    fn from(tables: &CountTables) -> Self {
        let (n_kv, n_tilde_kv, n_dk, n_k, n_tilde_k) = tables.dense();
        CountSnapshot {
            n_kv,
            n_tilde_kv,
            n_dk,
            n_k,
            n_tilde_k,
        }
    }
}

impl CountSnapshot {
    pub fn k_total(&self) -> usize {
        self.n_kv.nrows()
    }

    pub fn k_keyword(&self) -> usize {
        self.n_tilde_kv.nrows()
    }

    pub fn vocab(&self) -> usize {
        self.n_kv.ncols()
    }

    pub fn num_docs(&self) -> usize {
        self.n_dk.nrows()
    }

    pub fn doc_total(&self, d: usize) -> f64 {
        self.n_dk.row(d).sum()
    }
}

/// Variant-specific top-level parameters stored with each draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DrawParams {
    Base { alpha: Vec<f64> },
    Covariate { lambda_std: Array2<f64> },
    Dynamic {
        h: Vec<usize>,
        alpha_mat: Array2<f64>,
        p_stay: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDraw {
    pub iteration: u64,
    pub counts: CountSnapshot,
    pub params: DrawParams,
    pub log_posterior: f64,
}

/// Run-level facts estimators need alongside the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub model: ModelKind,
    pub thin: u64,
    /// Draws with iteration <= burn_in are excluded from posterior summaries.
    pub burn_in: u64,
    pub doc_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_index: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_std: Option<Array2<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer>,
}

/// Thinned post-initialization draws of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub meta: TraceMeta,
    pub draws: Vec<TraceDraw>,
}

impl ChainTrace {
    pub fn post_burn_in(&self) -> Vec<&TraceDraw> {
        self.draws
            .iter()
            .filter(|d| d.iteration > self.meta.burn_in)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.meta.thin == 0 {
            return Err(Error::schema("trace thinning interval must be at least 1"));
        }
        for pair in self.draws.windows(2) {
            if pair[1].iteration <= pair[0].iteration {
                return Err(Error::schema("trace iterations must be strictly increasing"));
            }
            if pair[1].iteration - pair[0].iteration != self.meta.thin {
                return Err(Error::schema("trace draws must be uniformly thinned"));
            }
        }
        Ok(())
    }

    /// Write as JSON lines: first the meta header, then one draw per line.
    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
        serde_json::to_writer(&mut out, &self.meta).map_err(io_err)?;
        out.write_all(b"\n")?;
        for draw in &self.draws {
            serde_json::to_writer(&mut out, draw).map_err(io_err)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<ChainTrace> {
        let file = std::fs::File::open(path.as_ref())?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::schema("trace file is empty"))??;
        let meta: TraceMeta = serde_json::from_str(&header).map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?;
        let mut draws = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let draw: TraceDraw = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 2,
                msg: e.to_string(),
            })?;
            draws.push(draw);
        }
        let trace = ChainTrace { meta, draws };
        trace.validate()?;
        Ok(trace)
    }
}

fn io_err(e: serde_json::Error) -> Error {
    Error::schema(format!("trace serialization: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_draw(iteration: u64) -> TraceDraw {
        TraceDraw {
            iteration,
            counts: CountSnapshot {
                n_kv: Array2::zeros((2, 3)),
                n_tilde_kv: Array2::zeros((1, 3)),
                n_dk: Array2::zeros((2, 2)),
                n_k: Array1::zeros(2),
                n_tilde_k: Array1::zeros(1),
            },
            params: DrawParams::Base { alpha: vec![0.30000000000000004, 2.0] },
            log_posterior: -12.345678901234567,
        }
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let trace = ChainTrace {
            meta: TraceMeta {
                model: ModelKind::Base,
                thin: 10,
                burn_in: 10,
                doc_ids: vec!["a".into(), "b".into()],
                time_index: None,
                x_std: None,
                standardizer: None,
            },
            draws: vec![tiny_draw(10), tiny_draw(20), tiny_draw(30)],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        trace.save_jsonl(&path).unwrap();
        let loaded = ChainTrace::load_jsonl(&path).unwrap();
        assert_eq!(trace, loaded);
        assert_eq!(loaded.post_burn_in().len(), 2);
    }

    #[test]
    fn validate_rejects_irregular_thinning() {
        let trace = ChainTrace {
            meta: TraceMeta {
                model: ModelKind::Base,
                thin: 10,
                burn_in: 0,
                doc_ids: vec![],
                time_index: None,
                x_std: None,
                standardizer: None,
            },
            draws: vec![tiny_draw(10), tiny_draw(25)],
        };
        assert!(trace.validate().is_err());
    }
}
