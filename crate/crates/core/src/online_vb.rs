//! Online (mini-batch) variational Bayes.
//!
//! Documents are consumed once, in order, in batches. For each batch the
//! batch-VB E-step runs against the current λ, the batch statistics are
//! scaled up to a full-corpus surrogate λ̃ = β + (M/|S|)·stats, and λ moves
//! towards it: λ ← (1 − ρ_t)λ + ρ_t λ̃ with ρ_t = (τ₀ + t)^(−κ).

use std::num::NonZeroUsize;

use log::warn;

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::eval::PerplexityMonitor;
use crate::math::Rng;
use crate::matrix::Matrix;
use crate::report::{Algorithm, IterationRecord, Stopwatch, TrainReport};
use crate::vb::{self, accumulate_stats, init_lambda, CorpusTopics, DocTopics, EStepConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineConfig {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub tau0: f64,
    pub kappa: f64,
    /// Total number of documents M in the stream. `None` means the size of
    /// the corpus handed to [`train`].
    pub corpus_size: Option<usize>,
    pub e_step: EStepConfig,
    pub seed: u64,
    pub threads: usize,
    /// Replaces the schedule with a constant step size in [0, 1].
    pub rho_override: Option<f64>,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            topics: 100,
            alpha: 0.01,
            beta: 0.01,
            batch_size: 100,
            tau0: 1024.0,
            kappa: 0.7,
            corpus_size: None,
            e_step: EStepConfig::default(),
            seed: 0,
            threads: 1,
            rho_override: None,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 {
            return Err(Error::Argument("topics must be at least 1".into()));
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::Argument("alpha and beta must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be at least 1".into()));
        }
        if !(self.tau0 >= 0.0) {
            return Err(Error::Argument("tau0 must be non-negative".into()));
        }
        if !(self.kappa > 0.5 && self.kappa <= 1.0) {
            return Err(Error::Argument(format!(
                "kappa must lie in (0.5, 1], got {}",
                self.kappa
            )));
        }
        if self.corpus_size == Some(0) {
            return Err(Error::Argument("corpus_size must be at least 1".into()));
        }
        if let Some(r) = self.rho_override {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Argument("rho override must lie in [0, 1]".into()));
            }
        }
        self.e_step.validate()
    }
}

/// Step size (τ₀ + t)^(−κ).
pub fn rho(t: u64, tau0: f64, kappa: f64) -> Result<f64> {
    let base = tau0 + t as f64;
    if !(base > 0.0) {
        return Err(Error::Domain(format!("rho needs tau0 + t > 0, got {base}")));
    }
    Ok(base.powf(-kappa))
}

/// λ̃_kv = β + (M / batch_count) · stats_kv.
pub fn lambda_tilde(batch_stats: &Matrix, batch_count: NonZeroUsize, corpus_size: usize, beta: f64) -> Matrix {
    let scale = corpus_size as f64 / batch_count.get() as f64;
    let mut out = batch_stats.clone();
    out.as_mut_slice().iter_mut().for_each(|s| *s = beta + scale * *s);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineState {
    pub topics: CorpusTopics,
    /// Number of λ updates (batches) applied so far.
    pub updates: u64,
}

impl OnlineState {
    pub fn new(topics: CorpusTopics) -> Self {
        OnlineState { topics, updates: 0 }
    }

    /// Random λ as in batch VB, seeded by `config.seed`.
    pub fn init(terms: usize, config: &OnlineConfig) -> Result<Self> {
        let topics = init_lambda(config.topics, terms, &mut Rng::new(config.seed))?;
        Ok(OnlineState::new(topics))
    }
}

#[derive(Clone, Debug)]
pub struct BatchOutcome {
    pub doc_topics: Vec<DocTopics>,
    pub rho: f64,
}

/// Processes one batch and applies one λ update.
///
/// `first_doc` is the stream position of `batch[0]`; it keys the per-document
/// random streams used when `e_step.random_init` is set.
pub fn update(
    state: &mut OnlineState,
    batch: &[Document],
    first_doc: u64,
    corpus_size: usize,
    config: &OnlineConfig,
) -> Result<BatchOutcome> {
    if batch.is_empty() {
        return Err(Error::Argument("online update needs a non-empty batch".into()));
    }
    if corpus_size == 0 {
        return Err(Error::Argument("corpus_size must be at least 1".into()));
    }
    let (k_count, v_count) = (state.topics.topics(), state.topics.terms());
    let elog_phi = state.topics.expected_log();
    let base = Rng::new(config.seed);
    let mut stats = Matrix::zeros(k_count, v_count);
    let mut doc_topics = Vec::with_capacity(batch.len());
    vb::e_step_in_order(
        batch,
        &elog_phi,
        config.alpha,
        &config.e_step,
        config.threads,
        |i, doc| {
            let mut rng = base.substream(first_doc + i as u64);
            vb::initial_gamma(doc, k_count, config.alpha, &config.e_step, &mut rng)
        },
        |_, doc, outcome| {
            accumulate_stats(&mut stats, doc, &outcome.responsibilities);
            doc_topics.push(outcome.doc_topics);
            Ok(())
        },
    )?;
    let batch_count = NonZeroUsize::new(batch.len()).expect("batch is non-empty");
    let target = lambda_tilde(&stats, batch_count, corpus_size, config.beta);
    let step = match config.rho_override {
        Some(r) => r,
        None => rho(state.updates + 1, config.tau0, config.kappa)?,
    };
    let mut lambda = state.topics.lambda().clone();
    for (l, t) in lambda.as_mut_slice().iter_mut().zip(target.as_slice()) {
        *l = (1.0 - step) * *l + step * t;
    }
    state.topics = CorpusTopics::new(lambda)?;
    state.updates += 1;
    Ok(BatchOutcome {
        doc_topics,
        rho: step,
    })
}

#[derive(Clone, Debug)]
pub struct OnlineModel {
    pub topics: CorpusTopics,
    pub report: TrainReport,
    pub updates: u64,
}

pub fn train(corpus: &Corpus, config: &OnlineConfig) -> Result<OnlineModel> {
    train_monitored(corpus, config, None)
}

/// Single pass over `corpus` in batches of `batch_size`; the last batch may
/// be partial.
pub fn train_monitored(
    corpus: &Corpus,
    config: &OnlineConfig,
    monitor: Option<&PerplexityMonitor<'_>>,
) -> Result<OnlineModel> {
    config.validate()?;
    if corpus.num_terms() == 0 {
        return Err(Error::Argument("corpus has an empty vocabulary".into()));
    }
    let corpus_size = config.corpus_size.unwrap_or(corpus.len()).max(1);
    let empty = corpus.documents().iter().filter(|d| d.is_empty()).count();
    if empty > 0 {
        warn!("skipping {empty} documents without tokens");
    }
    let mut clock = Stopwatch::start();
    let mut state = OnlineState::init(corpus.num_terms(), config)?;
    let mut report = TrainReport::new(Algorithm::OnlineVb);
    let mut processed = 0u64;
    for (b, batch) in corpus.documents().chunks(config.batch_size).enumerate() {
        let outcome = update(&mut state, batch, processed, corpus_size, config)?;
        let before = processed;
        processed += batch.len() as u64;
        let wall_seconds = clock.seconds();
        let perplexity = match monitor.filter(|m| m.due_documents(before, processed)) {
            Some(m) => {
                clock.pause();
                let p = m.evaluate(&state.topics.expected_log())?;
                clock.resume();
                Some(p)
            }
            None => None,
        };
        report.records.push(IterationRecord {
            index: b + 1,
            documents: processed,
            wall_seconds,
            statistic: outcome.rho,
            perplexity,
        });
    }
    report.converged = true;
    Ok(OnlineModel {
        topics: state.topics,
        report,
        updates: state.updates,
    })
}
