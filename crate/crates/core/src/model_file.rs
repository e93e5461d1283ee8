//! Portable model files.
//!
//! Topic matrices are stored as TSV: a header line
//! `#lda-topics K=<K> V=<V> kind=<lambda|phi>` followed by one row per topic
//! holding V tab-separated decimals. Values are printed in shortest
//! round-trip form, so reading a file back reproduces every bit.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::vb::{CorpusTopics, ExpectedLogTopics};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// Variational Dirichlet parameters (both VB trainers).
    Lambda,
    /// Point-estimate topic distributions (Gibbs).
    Phi,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Lambda => "lambda",
            ModelKind::Phi => "phi",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(ModelKind::Lambda),
            "phi" => Ok(ModelKind::Phi),
            other => Err(Error::Format(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopicModel {
    pub kind: ModelKind,
    pub matrix: Matrix,
}

impl TopicModel {
    pub fn topics(&self) -> usize {
        self.matrix.rows()
    }

    pub fn terms(&self) -> usize {
        self.matrix.cols()
    }

    /// Per-topic word distributions: λ rows normalized, or φ as stored.
    pub fn word_distributions(&self) -> Matrix {
        match self.kind {
            ModelKind::Lambda => self.matrix.row_normalized(),
            ModelKind::Phi => self.matrix.clone(),
        }
    }

    /// E[ln φ] used by the held-out bound.
    pub fn expected_log(&self) -> Result<ExpectedLogTopics> {
        match self.kind {
            ModelKind::Lambda => Ok(CorpusTopics::new(self.matrix.clone())?.expected_log()),
            ModelKind::Phi => ExpectedLogTopics::from_point_estimate(&self.matrix),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "#lda-topics K={} V={} kind={}\n",
            self.topics(),
            self.terms(),
            self.kind
        );
        for row in self.matrix.iter_rows() {
            for (i, x) in row.iter().enumerate() {
                if i > 0 {
                    out.push('\t');
                }
                write!(out, "{x}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty model file".into()))?;
        let rest = header
            .strip_prefix("#lda-topics ")
            .ok_or_else(|| Error::Format(format!("bad header {header:?}")))?;
        let (mut k, mut v, mut kind) = (None, None, None);
        for field in rest.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header field {field:?}")))?;
            let bad = || Error::Format(format!("bad header value {field:?}"));
            match key {
                "K" => k = Some(value.parse::<usize>().map_err(|_| bad())?),
                "V" => v = Some(value.parse::<usize>().map_err(|_| bad())?),
                "kind" => kind = Some(value.parse::<ModelKind>()?),
                _ => return Err(Error::Format(format!("unknown header field {key:?}"))),
            }
        }
        let (k, v, kind) = match (k, v, kind) {
            (Some(k), Some(v), Some(kind)) => (k, v, kind),
            _ => return Err(Error::Format("header needs K, V and kind".into())),
        };
        let mut data = Vec::with_capacity(k * v);
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let before = data.len();
            for cell in line.split('\t') {
                let x: f64 = cell
                    .parse()
                    .map_err(|_| Error::Format(format!("row {}: bad value {cell:?}", i + 1)))?;
                data.push(x);
            }
            if data.len() - before != v {
                return Err(Error::Format(format!(
                    "row {} has {} values, expected {v}",
                    i + 1,
                    data.len() - before
                )));
            }
            rows += 1;
        }
        if rows != k {
            return Err(Error::Format(format!("found {rows} rows, header says K={k}")));
        }
        Ok(TopicModel {
            kind,
            matrix: Matrix::from_vec(k, v, data)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopicWords {
    pub topic: usize,
    pub words: Vec<WeightedTerm>,
}

/// The `n` heaviest terms of each topic, heaviest first. Ties keep term-id
/// order.
pub fn top_words(model: &TopicModel, vocab: &Vocabulary, n: usize) -> Result<Vec<TopicWords>> {
    if vocab.len() != model.terms() {
        return Err(Error::Argument(format!(
            "vocabulary has {} terms, model has {}",
            vocab.len(),
            model.terms()
        )));
    }
    let dist = model.word_distributions();
    Ok(dist
        .iter_rows()
        .enumerate()
        .map(|(k, row)| {
            let mut ids: Vec<usize> = (0..row.len()).collect();
            ids.sort_by(|a, b| row[*b].total_cmp(&row[*a]).then(a.cmp(b)));
            TopicWords {
                topic: k,
                words: ids
                    .into_iter()
                    .take(n)
                    .map(|v| WeightedTerm {
                        term: vocab.term(v).expect("id within vocabulary").to_owned(),
                        weight: row[v],
                    })
                    .collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_layout() {
        let model = TopicModel {
            kind: ModelKind::Phi,
            matrix: Matrix::from_rows(&[vec![0.25, 0.75], vec![0.5, 0.5]]).unwrap(),
        };
        assert_eq!(
            model.to_tsv(),
            "#lda-topics K=2 V=2 kind=phi\n0.25\t0.75\n0.5\t0.5\n"
        );
    }

    #[test]
    fn rejects_bad_files() {
        assert!(TopicModel::from_tsv("").is_err());
        assert!(TopicModel::from_tsv("#lda-topics K=1 V=2 kind=lambda\n1\n").is_err());
        assert!(TopicModel::from_tsv("#lda-topics K=2 V=1 kind=lambda\n1\n").is_err());
        assert!(TopicModel::from_tsv("#lda-topics K=1 V=1 kind=beta\n1\n").is_err());
        assert!(TopicModel::from_tsv("K=1 V=1 kind=phi\n1\n").is_err());
    }

    #[test]
    fn top_words_order() {
        let vocab = Vocabulary::from_terms(["a", "b", "c"]).unwrap();
        let model = TopicModel {
            kind: ModelKind::Lambda,
            matrix: Matrix::from_rows(&[vec![1.0, 3.0, 1.0]]).unwrap(),
        };
        let top = top_words(&model, &vocab, 2).unwrap();
        assert_eq!(top[0].words[0].term, "b");
        assert_eq!(top[0].words[0].weight, 0.6);
        assert_eq!(top[0].words[1].term, "a");
    }

    proptest! {
        #[test]
        fn tsv_round_trip_is_exact(
            rows in 1usize..4,
            cols in 1usize..6,
            seed in prop::collection::vec(1e-300f64..1e300, 24),
        ) {
            let data: Vec<f64> = seed.into_iter().take(rows * cols).collect();
            prop_assume!(data.len() == rows * cols);
            let model = TopicModel { kind: ModelKind::Lambda, matrix: Matrix::from_vec(rows, cols, data).unwrap() };
            let back = TopicModel::from_tsv(&model.to_tsv()).unwrap();
            prop_assert_eq!(back, model);
        }
    }
}
