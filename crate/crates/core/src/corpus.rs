//! Vocabulary and sparse bag-of-words corpora.
//!
//! The on-disk format is the UCI bag-of-words layout without its three-line
//! header: one `docId termId count` triple per line, both ids 1-based. Lines
//! starting with `#` are comments.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{sample_categorical, sample_symmetric_dirichlet, Rng};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from unique, non-empty terms; ids follow input order.
    pub fn from_terms<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary::default();
        for (i, term) in terms.into_iter().enumerate() {
            let term = term.into();
            if term.is_empty() {
                return Err(Error::Argument(format!("term {i} is empty")));
            }
            if vocab.index.contains_key(&term) {
                return Err(Error::Argument(format!("duplicate term {term:?}")));
            }
            vocab.index.insert(term.clone(), i);
            vocab.terms.push(term);
        }
        Ok(vocab)
    }

    /// Terms `w0`, `w1`, ... for corpora that have no real vocabulary.
    pub fn placeholder(size: usize) -> Self {
        Self::from_terms((0..size).map(|v| format!("w{v}"))).expect("placeholder terms are unique")
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: usize) -> Option<&str> {
        self.terms.get(id).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// One line per term, line `i` (0-based) becomes id `i`.
pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut vocab = Vocabulary::default();
    let mut lines = text.split('\n').collect::<Vec<_>>();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    for (i, line) in lines.into_iter().enumerate() {
        let term = line.strip_suffix('\r').unwrap_or(line);
        let ingestion = |message: String| Error::Ingestion {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if term.is_empty() {
            return Err(ingestion("empty term".into()));
        }
        if let Some(first) = vocab.index.get(term) {
            return Err(ingestion(format!(
                "duplicate term {term:?} (first seen on line {})",
                first + 1
            )));
        }
        vocab.index.insert(term.to_owned(), vocab.terms.len());
        vocab.terms.push(term.to_owned());
    }
    Ok(vocab)
}

pub fn write_vocabulary(vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for term in &vocab.terms {
        out.push_str(term);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Sparse term counts of one document.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Document {
    entries: Vec<(usize, u32)>,
    token_count: u64,
}

impl Document {
    /// Builds a document from `(term, count)` pairs. Term ids must be strictly
    /// increasing and counts positive.
    pub fn new(entries: Vec<(usize, u32)>) -> Result<Self> {
        for pair in entries.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(Error::Argument(format!(
                    "term ids must be strictly increasing ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        if let Some((v, _)) = entries.iter().find(|(_, c)| *c == 0) {
            return Err(Error::Argument(format!("zero count for term {v}")));
        }
        let token_count = entries.iter().map(|(_, c)| u64::from(*c)).sum();
        Ok(Document {
            entries,
            token_count,
        })
    }

    /// Aggregates a token sequence into counts.
    pub fn from_tokens(tokens: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = BTreeMap::new();
        for v in tokens {
            *counts.entry(v).or_insert(0u32) += 1;
        }
        Document::new(counts.into_iter().collect()).expect("BTreeMap keys are sorted")
    }

    pub fn entries(&self) -> &[(usize, u32)] {
        &self.entries
    }

    /// N_m, the number of tokens.
    pub fn token_count(&self) -> u64 {
        self.token_count
    }

    pub fn is_empty(&self) -> bool {
        self.token_count == 0
    }

    pub fn max_term(&self) -> Option<usize> {
        self.entries.last().map(|(v, _)| *v)
    }

    /// Token sequence in ascending term order with repeats contiguous.
    pub fn tokens(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries
            .iter()
            .flat_map(|&(v, c)| std::iter::repeat_n(v, c as usize))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    vocabulary: Vocabulary,
    documents: Vec<Document>,
}

impl Corpus {
    pub fn new(vocabulary: Vocabulary, documents: Vec<Document>) -> Result<Self> {
        let size = vocabulary.len();
        for (m, doc) in documents.iter().enumerate() {
            if let Some(v) = doc.max_term().filter(|v| *v >= size) {
                return Err(Error::Argument(format!(
                    "document {m} references term {v} but the vocabulary has {size} terms"
                )));
            }
        }
        Ok(Corpus {
            vocabulary,
            documents,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn num_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn total_tokens(&self) -> u64 {
        self.documents.iter().map(Document::token_count).sum()
    }

    /// The first `n` documents (all of them if `n` exceeds the corpus size).
    pub fn prefix(&self, n: usize) -> Corpus {
        Corpus {
            vocabulary: self.vocabulary.clone(),
            documents: self.documents[..n.min(self.documents.len())].to_vec(),
        }
    }

    fn subset(&self, ids: &[usize]) -> Corpus {
        Corpus {
            vocabulary: self.vocabulary.clone(),
            documents: ids.iter().map(|&i| self.documents[i].clone()).collect(),
        }
    }
}

/// Reads a bag-of-words file against `vocab`. Documents are numbered by
/// docId; ids skipped in the file become empty documents.
pub fn load_bow(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut documents: Vec<Document> = Vec::new();
    let mut current: BTreeMap<usize, u32> = BTreeMap::new();
    let mut current_doc = 0usize;

    let flush = |documents: &mut Vec<Document>, doc_id: usize, counts: &mut BTreeMap<usize, u32>| {
        while documents.len() + 1 < doc_id {
            documents.push(Document::default());
        }
        let entries = std::mem::take(counts).into_iter().collect();
        documents.push(Document::new(entries).expect("BTreeMap keys are sorted"));
    };

    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Ingestion {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err(format!("expected `docId termId count`, got {line:?}")));
        }
        let doc_id: usize = fields[0]
            .parse()
            .map_err(|_| err(format!("bad docId {:?}", fields[0])))?;
        let term_id: usize = fields[1]
            .parse()
            .map_err(|_| err(format!("bad termId {:?}", fields[1])))?;
        let count: i64 = fields[2]
            .parse()
            .map_err(|_| err(format!("bad count {:?}", fields[2])))?;
        if doc_id == 0 || term_id == 0 {
            return Err(err("ids are 1-based".into()));
        }
        if term_id > vocab.len() {
            return Err(err(format!(
                "termId {term_id} exceeds vocabulary size {}",
                vocab.len()
            )));
        }
        if count <= 0 {
            return Err(err(format!("count must be positive, got {count}")));
        }
        let count = u32::try_from(count).map_err(|_| err(format!("count {count} too large")))?;
        if doc_id < current_doc {
            return Err(err(format!(
                "docId {doc_id} follows {current_doc}; docIds must be non-decreasing"
            )));
        }
        if doc_id > current_doc {
            if current_doc > 0 {
                flush(&mut documents, current_doc, &mut current);
            }
            current_doc = doc_id;
        }
        let slot = current.entry(term_id - 1).or_insert(0);
        *slot = slot
            .checked_add(count)
            .ok_or_else(|| err("count overflow".into()))?;
    }
    if current_doc > 0 {
        flush(&mut documents, current_doc, &mut current);
    }
    Corpus::new(vocab.clone(), documents)
}

/// Writes `corpus` in the format read by [`load_bow`]. Trailing empty
/// documents cannot be represented and are dropped.
pub fn write_bow(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for (m, doc) in corpus.documents.iter().enumerate() {
        for &(v, c) in doc.entries() {
            writeln!(out, "{} {} {}", m + 1, v + 1, c).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Uniformly random split into `(train, held)` with `held.len() == n_held`.
/// Both halves keep the original document order.
pub fn split_held_out(corpus: &Corpus, n_held: usize, rng: &mut Rng) -> Result<(Corpus, Corpus)> {
    let m = corpus.len();
    if n_held > m {
        return Err(Error::Argument(format!(
            "cannot hold out {n_held} of {m} documents"
        )));
    }
    // partial Fisher-Yates: the first n_held slots are the held-out sample
    let mut ids: Vec<usize> = (0..m).collect();
    for i in 0..n_held {
        let j = i + rng.below(m - i);
        ids.swap(i, j);
    }
    let mut held = ids[..n_held].to_vec();
    let mut train = ids[n_held..].to_vec();
    held.sort_unstable();
    train.sort_unstable();
    Ok((corpus.subset(&train), corpus.subset(&held)))
}

/// Topic and document mixtures used to generate a synthetic corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// K rows over V terms.
    pub phi: Vec<Vec<f64>>,
    /// M rows over K topics.
    pub theta: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub topics: usize,
    pub terms: usize,
    pub documents: usize,
    pub doc_len: usize,
    pub alpha: f64,
    pub beta: f64,
}

/// Samples a corpus from the LDA generative process.
///
/// Each topic is φ_k ~ Dir(β), each document mixture θ_m ~ Dir(α), then every
/// token draws z ~ θ_m and w ~ φ_z.
pub fn generate_synthetic(spec: &SyntheticSpec, rng: &mut Rng) -> Result<(Corpus, GroundTruth)> {
    let SyntheticSpec {
        topics,
        terms,
        documents,
        doc_len,
        alpha,
        beta,
    } = *spec;
    if topics == 0 || terms == 0 || documents == 0 || doc_len == 0 {
        return Err(Error::Argument("synthetic corpus sizes must be at least 1".into()));
    }
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(Error::Argument("alpha and beta must be positive".into()));
    }
    let phi = (0..topics)
        .map(|_| sample_symmetric_dirichlet(terms, beta, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut theta = Vec::with_capacity(documents);
    let mut docs = Vec::with_capacity(documents);
    for _ in 0..documents {
        let mix = sample_symmetric_dirichlet(topics, alpha, rng)?;
        let mut tokens = Vec::with_capacity(doc_len);
        for _ in 0..doc_len {
            let z = sample_categorical(&mix, rng)?;
            tokens.push(sample_categorical(&phi[z], rng)?);
        }
        docs.push(Document::from_tokens(tokens));
        theta.push(mix);
    }
    let corpus = Corpus::new(Vocabulary::placeholder(terms), docs)?;
    Ok((corpus, GroundTruth { phi, theta }))
}
