use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pre-tokenized corpus with integer word ids.
///
/// Word ids are assigned by first appearance in the input stream, so a given
/// file always produces the same vocabulary. Time indices, when present,
/// must already be contiguous from 0; the loader validates instead of
/// remapping.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Vec<usize>>,
    pub doc_ids: Vec<String>,
    pub vocab: Vec<String>,
    pub time_index: Option<Vec<usize>>,
    pub covariates: Option<Covariates>,
}

/// Per-document design matrix. Column 0 is the intercept and is identically
/// one; the remaining columns keep the order of `names`.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    pub names: Vec<String>,
    pub rows: Array2<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusOptions {
    /// Restrict loaded covariates to these columns (order respected).
    /// `None` loads every covariate present, sorted by name.
    pub covariate_columns: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DocRecord {
    id: String,
    tokens: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    covariates: Option<BTreeMap<String, f64>>,
}

impl Corpus {
    pub fn num_docs(&self) -> usize {
        self.documents.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }

    /// Number of time periods T, when a time index is present.
    pub fn num_time_periods(&self) -> Option<usize> {
        self.time_index
            .as_ref()
            .map(|t| t.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn word_id(&self, surface: &str) -> Option<usize> {
        self.vocab.iter().position(|w| w == surface)
    }

    /// Documents grouped by time period.
    pub fn docs_by_time(&self) -> Option<Vec<Vec<usize>>> {
        let time = self.time_index.as_ref()?;
        let t_total = self.num_time_periods()?;
        let mut groups = vec![Vec::new(); t_total];
        for (d, &t) in time.iter().enumerate() {
            groups[t].push(d);
        }
        Some(groups)
    }

    /// Test and synthetic-data constructor: documents already as id lists.
    pub fn from_token_ids(documents: Vec<Vec<usize>>, vocab_size: usize) -> Corpus {
        let doc_ids = (0..documents.len()).map(|d| format!("doc{d}")).collect();
        let vocab = (0..vocab_size).map(|v| format!("w{v}")).collect();
        Corpus {
            documents,
            doc_ids,
            vocab,
            time_index: None,
            covariates: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.documents.len() != self.doc_ids.len() {
            return Err(Error::schema("documents and doc_ids differ in length"));
        }
        let v = self.vocab.len();
        for (d, doc) in self.documents.iter().enumerate() {
            if doc.is_empty() {
                return Err(Error::schema(format!(
                    "document '{}' is empty",
                    self.doc_ids[d]
                )));
            }
            if doc.iter().any(|&w| w >= v) {
                return Err(Error::schema(format!(
                    "document '{}' has a token id outside the vocabulary",
                    self.doc_ids[d]
                )));
            }
        }
        if let Some(time) = &self.time_index {
            if time.len() != self.documents.len() {
                return Err(Error::schema("time index length mismatch"));
            }
            validate_contiguous(time)?;
        }
        if let Some(cov) = &self.covariates {
            if cov.rows.nrows() != self.documents.len() {
                return Err(Error::schema("covariate row count mismatch"));
            }
            if cov.rows.ncols() != cov.names.len() || cov.names.is_empty() {
                return Err(Error::schema("covariate name/column mismatch"));
            }
            if cov.rows.column(0).iter().any(|&x| x != 1.0) {
                return Err(Error::schema("covariate column 0 must be the intercept (all ones)"));
            }
        }
        Ok(())
    }
}

fn validate_contiguous(time: &[usize]) -> Result<()> {
    let mut seen: Vec<usize> = time.to_vec();
    seen.sort_unstable();
    seen.dedup();
    for (expected, &t) in seen.iter().enumerate() {
        if t != expected {
            return Err(Error::schema(format!(
                "non-contiguous time index: period {expected} has no documents"
            )));
        }
    }
    Ok(())
}

pub fn load_corpus(path: impl AsRef<Path>, opts: &CorpusOptions) -> Result<Corpus> {
    let file = std::fs::File::open(path.as_ref())?;
    load_corpus_from_reader(BufReader::new(file), opts)
}

pub fn load_corpus_from_reader(reader: impl BufRead, opts: &CorpusOptions) -> Result<Corpus> {
    let mut vocab: Vec<String> = Vec::new();
    let mut word_ids: HashMap<String, usize> = HashMap::new();
    let mut documents = Vec::new();
    let mut doc_ids = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    let mut times: Vec<Option<i64>> = Vec::new();
    let mut covariate_maps: Vec<Option<BTreeMap<String, f64>>> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DocRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        if record.tokens.is_empty() {
            return Err(Error::schema(format!("document '{}' has no tokens", record.id)));
        }
        if seen_ids.insert(record.id.clone(), lineno).is_some() {
            return Err(Error::schema(format!("duplicate document id '{}'", record.id)));
        }
        let mut ids = Vec::with_capacity(record.tokens.len());
        for token in &record.tokens {
            let next = vocab.len();
            let id = *word_ids.entry(token.clone()).or_insert_with(|| {
                vocab.push(token.clone());
                next
            });
            ids.push(id);
        }
        documents.push(ids);
        doc_ids.push(record.id);
        times.push(record.time);
        covariate_maps.push(record.covariates);
    }

    if documents.is_empty() {
        return Err(Error::schema("corpus file contains no documents"));
    }

    let time_index = build_time_index(&doc_ids, &times)?;
    let covariates = build_covariates(&doc_ids, &covariate_maps, opts)?;

    let corpus = Corpus {
        documents,
        doc_ids,
        vocab,
        time_index,
        covariates,
    };
    corpus.validate()?;
    Ok(corpus)
}

fn build_time_index(doc_ids: &[String], times: &[Option<i64>]) -> Result<Option<Vec<usize>>> {
    let present = times.iter().filter(|t| t.is_some()).count();
    if present == 0 {
        return Ok(None);
    }
    if present != times.len() {
        let missing = times.iter().position(|t| t.is_none()).unwrap();
        return Err(Error::schema(format!(
            "document '{}' is missing a time field while others have one",
            doc_ids[missing]
        )));
    }
    let mut index = Vec::with_capacity(times.len());
    for (d, t) in times.iter().enumerate() {
        let t = t.unwrap();
        if t < 0 {
            return Err(Error::schema(format!(
                "document '{}' has negative time {t}",
                doc_ids[d]
            )));
        }
        index.push(t as usize);
    }
    validate_contiguous(&index)?;
    Ok(Some(index))
}

fn build_covariates(
    doc_ids: &[String],
    maps: &[Option<BTreeMap<String, f64>>],
    opts: &CorpusOptions,
) -> Result<Option<Covariates>> {
    let present = maps.iter().filter(|m| m.is_some()).count();
    if present == 0 {
        return Ok(None);
    }
    if present != maps.len() {
        let missing = maps.iter().position(|m| m.is_none()).unwrap();
        return Err(Error::schema(format!(
            "document '{}' is missing covariates while others have them",
            doc_ids[missing]
        )));
    }
    let first = maps[0].as_ref().unwrap();
    for (d, map) in maps.iter().enumerate() {
        let map = map.as_ref().unwrap();
        if map.len() != first.len() || !map.keys().eq(first.keys()) {
            return Err(Error::schema(format!(
                "document '{}' has a different covariate set than the first document",
                doc_ids[d]
            )));
        }
    }
    let selected: Vec<String> = match &opts.covariate_columns {
        Some(cols) => {
            for c in cols {
                if !first.contains_key(c) {
                    return Err(Error::schema(format!("requested covariate '{c}' not in corpus")));
                }
            }
            cols.clone()
        }
        None => first.keys().cloned().collect(),
    };
    let m = selected.len() + 1;
    let mut rows = Array2::zeros((maps.len(), m));
    for (d, map) in maps.iter().enumerate() {
        let map = map.as_ref().unwrap();
        rows[[d, 0]] = 1.0;
        for (j, name) in selected.iter().enumerate() {
            rows[[d, j + 1]] = map[name];
        }
    }
    let mut names = vec!["intercept".to_string()];
    names.extend(selected);
    Ok(Some(Covariates { names, rows }))
}

/// Write a corpus back out in the JSONL document format.
pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    for d in 0..corpus.num_docs() {
        let covariates = corpus.covariates.as_ref().map(|cov| {
            cov.names
                .iter()
                .enumerate()
                .skip(1) // intercept is implicit in the file format
                .map(|(j, name)| (name.clone(), cov.rows[[d, j]]))
                .collect::<BTreeMap<_, _>>()
        });
        let record = DocRecord {
            id: corpus.doc_ids[d].clone(),
            tokens: corpus.documents[d]
                .iter()
                .map(|&v| corpus.vocab[v].clone())
                .collect(),
            time: corpus.time_index.as_ref().map(|t| t[d] as i64),
            covariates,
        };
        serde_json::to_writer(&mut out, &record).map_err(|e| Error::schema(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
