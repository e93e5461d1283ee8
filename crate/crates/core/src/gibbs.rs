//! Collapsed Gibbs sampler.
//!
//! θ and φ are integrated out and only the token assignments `z` are
//! sampled. Each token update draws from
//!
//! ```text
//! p(z = k | rest) ∝ (n_kv[k][v] + β) / (n_k[k] + V·β) · (n_mk[m][k] + α)
//! ```
//!
//! with the token's own assignment removed from every count.

use log::warn;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::eval::PerplexityMonitor;
use crate::math::{draw_from_cumulative, Rng};
use crate::matrix::Matrix;
use crate::report::{Algorithm, IterationRecord, Stopwatch, TrainReport};
use crate::vb::ExpectedLogTopics;

#[derive(Clone, Debug, PartialEq)]
pub struct GibbsConfig {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub max_sweeps: usize,
    /// Stop once fewer than this fraction of tokens change topic in a sweep.
    pub z_change_threshold: f64,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            topics: 100,
            alpha: 0.01,
            beta: 0.01,
            max_sweeps: 1000,
            z_change_threshold: 0.20,
            seed: 0,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 {
            return Err(Error::Argument("topics must be at least 1".into()));
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::Argument("alpha and beta must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Argument("max_sweeps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.z_change_threshold) {
            return Err(Error::Argument("z_change_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Token assignments and the count tables derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsState {
    topics: usize,
    terms: usize,
    alpha: f64,
    beta: f64,
    /// Per document, one topic per token in [`Document::tokens`] order.
    ///
    /// [`Document::tokens`]: crate::corpus::Document::tokens
    z: Vec<Vec<u32>>,
    /// M×K, row-major.
    n_mk: Vec<i64>,
    /// K×V, row-major.
    n_kv: Vec<i64>,
    n_k: Vec<i64>,
}

impl GibbsState {
    /// Draws every token's topic uniformly and builds the count tables.
    pub fn init(corpus: &Corpus, config: &GibbsConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let k = config.topics;
        let z = corpus
            .documents()
            .iter()
            .map(|doc| doc.tokens().map(|_| rng.below(k) as u32).collect())
            .collect();
        Self::from_assignments(corpus, config, z)
    }

    /// Builds a state from explicit assignments.
    pub fn from_assignments(corpus: &Corpus, config: &GibbsConfig, z: Vec<Vec<u32>>) -> Result<Self> {
        config.validate()?;
        let (k, v) = (config.topics, corpus.num_terms());
        if z.len() != corpus.len() {
            return Err(Error::Argument(format!(
                "{} assignment rows for {} documents",
                z.len(),
                corpus.len()
            )));
        }
        let mut state = GibbsState {
            topics: k,
            terms: v,
            alpha: config.alpha,
            beta: config.beta,
            z,
            n_mk: vec![0; corpus.len() * k],
            n_kv: vec![0; k * v],
            n_k: vec![0; k],
        };
        for (m, doc) in corpus.documents().iter().enumerate() {
            if state.z[m].len() as u64 != doc.token_count() {
                return Err(Error::Argument(format!(
                    "document {m} has {} tokens but {} assignments",
                    doc.token_count(),
                    state.z[m].len()
                )));
            }
            for (i, term) in doc.tokens().enumerate() {
                let topic = state.z[m][i] as usize;
                if topic >= k {
                    return Err(Error::Argument(format!("assignment {topic} out of range")));
                }
                state.n_mk[m * k + topic] += 1;
                state.n_kv[topic * v + term] += 1;
                state.n_k[topic] += 1;
            }
        }
        Ok(state)
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn documents(&self) -> usize {
        self.z.len()
    }

    pub fn assignments(&self) -> &[Vec<u32>] {
        &self.z
    }

    pub fn doc_topic_count(&self, m: usize, k: usize) -> i64 {
        self.n_mk[m * self.topics + k]
    }

    pub fn topic_term_count(&self, k: usize, v: usize) -> i64 {
        self.n_kv[k * self.terms + v]
    }

    pub fn topic_count(&self, k: usize) -> i64 {
        self.n_k[k]
    }

    /// Removes one token (document `m`, term `v`, topic `k`) from the tables.
    pub fn decrement(&mut self, m: usize, v: usize, k: usize) {
        self.n_mk[m * self.topics + k] -= 1;
        self.n_kv[k * self.terms + v] -= 1;
        self.n_k[k] -= 1;
    }

    pub fn increment(&mut self, m: usize, v: usize, k: usize) {
        self.n_mk[m * self.topics + k] += 1;
        self.n_kv[k * self.terms + v] += 1;
        self.n_k[k] += 1;
    }

    /// Unnormalized full conditional for a token of term `v` in document `m`.
    /// The token must already be removed from the tables.
    pub fn conditional_weights(&self, m: usize, v: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.topics];
        self.conditional_weights_into(m, v, &mut out)?;
        Ok(out)
    }

    /// Writes the weights into `out` and returns their sum.
    pub fn conditional_weights_into(&self, m: usize, v: usize, out: &mut [f64]) -> Result<f64> {
        let k_count = self.topics;
        let v_beta = self.terms as f64 * self.beta;
        let doc_row = &self.n_mk[m * k_count..(m + 1) * k_count];
        let mut total = 0.0;
        for k in 0..k_count {
            let term_topic = self.n_kv[k * self.terms + v];
            let topic = self.n_k[k];
            let doc_topic = doc_row[k];
            if term_topic < 0 || topic < 0 || doc_topic < 0 {
                return Err(Error::Inconsistent(format!(
                    "negative count at topic {k} (document {m}, term {v})"
                )));
            }
            let w = (term_topic as f64 + self.beta) / (topic as f64 + v_beta)
                * (doc_topic as f64 + self.alpha);
            out[k] = w;
            total += w;
        }
        Ok(total)
    }

    /// One pass over every token in document order. Returns the fraction of
    /// tokens whose topic changed (0 for a corpus without tokens).
    pub fn sweep(&mut self, corpus: &Corpus, rng: &mut Rng) -> Result<f64> {
        let mut weights = vec![0.0; self.topics];
        let mut changed = 0u64;
        let mut total = 0u64;
        for (m, doc) in corpus.documents().iter().enumerate() {
            for (i, v) in doc.tokens().enumerate() {
                let old = self.z[m][i] as usize;
                self.decrement(m, v, old);
                let mass = self.conditional_weights_into(m, v, &mut weights)?;
                let new = draw_from_cumulative(&weights, mass, rng);
                self.increment(m, v, new);
                if new != old {
                    self.z[m][i] = new as u32;
                    changed += 1;
                }
                total += 1;
            }
        }
        Ok(if total == 0 {
            0.0
        } else {
            changed as f64 / total as f64
        })
    }

    /// φ_kv = (n_kv + β) / (n_k + V·β).
    pub fn estimate_phi(&self) -> Matrix {
        let mut phi = Matrix::zeros(self.topics, self.terms);
        let v_beta = self.terms as f64 * self.beta;
        for k in 0..self.topics {
            let denom = self.n_k[k] as f64 + v_beta;
            for (v, out) in phi.row_mut(k).iter_mut().enumerate() {
                *out = (self.n_kv[k * self.terms + v] as f64 + self.beta) / denom;
            }
        }
        phi
    }

    /// θ_mk = (n_mk + α) / (N_m + K·α).
    pub fn estimate_theta(&self) -> Matrix {
        let k_count = self.topics;
        let mut theta = Matrix::zeros(self.z.len(), k_count);
        let k_alpha = k_count as f64 * self.alpha;
        for m in 0..self.z.len() {
            let denom = self.z[m].len() as f64 + k_alpha;
            for (k, out) in theta.row_mut(m).iter_mut().enumerate() {
                *out = (self.n_mk[m * k_count + k] as f64 + self.alpha) / denom;
            }
        }
        theta
    }

    /// Rebuilds every table from `z` and compares with the incremental ones.
    pub fn check_consistency(&self, corpus: &Corpus) -> Result<()> {
        let config = GibbsConfig {
            topics: self.topics,
            alpha: self.alpha,
            beta: self.beta,
            max_sweeps: 1,
            z_change_threshold: 0.0,
            seed: 0,
        };
        let rebuilt = GibbsState::from_assignments(corpus, &config, self.z.clone())?;
        if rebuilt.n_mk != self.n_mk || rebuilt.n_kv != self.n_kv || rebuilt.n_k != self.n_k {
            return Err(Error::Inconsistent("count tables disagree with z".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GibbsModel {
    /// K×V point estimate of the topics.
    pub phi: Matrix,
    /// M×K point estimate of the document mixtures.
    pub theta: Matrix,
    pub report: TrainReport,
    pub state: GibbsState,
}

/// Runs sweeps until the z-change fraction drops below the threshold or
/// `max_sweeps` is reached, then estimates φ and θ from the final state.
pub fn train(corpus: &Corpus, config: &GibbsConfig) -> Result<GibbsModel> {
    train_monitored(corpus, config, None)
}

pub fn train_monitored(
    corpus: &Corpus,
    config: &GibbsConfig,
    monitor: Option<&PerplexityMonitor<'_>>,
) -> Result<GibbsModel> {
    config.validate()?;
    let empty = corpus.documents().iter().filter(|d| d.is_empty()).count();
    if empty > 0 {
        warn!("skipping {empty} documents without tokens");
    }
    let mut rng = Rng::new(config.seed);
    let mut clock = Stopwatch::start();
    let mut state = GibbsState::init(corpus, config, &mut rng)?;
    let mut report = TrainReport::new(Algorithm::Gibbs);
    for sweep in 1..=config.max_sweeps {
        let changed = state.sweep(corpus, &mut rng)?;
        let wall_seconds = clock.seconds();
        let perplexity = match monitor.filter(|m| m.due_iteration(sweep)) {
            Some(m) => {
                clock.pause();
                let elog = ExpectedLogTopics::from_point_estimate(&state.estimate_phi())?;
                let p = m.evaluate(&elog)?;
                clock.resume();
                Some(p)
            }
            None => None,
        };
        report.records.push(IterationRecord {
            index: sweep,
            documents: sweep as u64 * corpus.len() as u64,
            wall_seconds,
            statistic: changed,
            perplexity,
        });
        if changed < config.z_change_threshold {
            report.converged = true;
            break;
        }
    }
    Ok(GibbsModel {
        phi: state.estimate_phi(),
        theta: state.estimate_theta(),
        report,
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Vocabulary};
    use approx::assert_abs_diff_eq;

    fn config(topics: usize, alpha: f64, beta: f64) -> GibbsConfig {
        GibbsConfig {
            topics,
            alpha,
            beta,
            max_sweeps: 10,
            z_change_threshold: 0.0,
            seed: 1,
        }
    }

    fn small_corpus() -> Corpus {
        Corpus::new(
            Vocabulary::placeholder(3),
            vec![
                Document::new(vec![(0, 2), (2, 1)]).unwrap(),
                Document::new(vec![(1, 2), (2, 1)]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_topic_init() {
        let corpus = small_corpus();
        let state = GibbsState::init(&corpus, &config(1, 0.1, 0.1), &mut Rng::new(0)).unwrap();
        assert!(state.assignments().iter().flatten().all(|z| *z == 0));
        assert_eq!(state.doc_topic_count(0, 0), 3);
        assert_eq!(state.doc_topic_count(1, 0), 3);
        assert_eq!(state.topic_count(0), 6);
    }

    #[test]
    fn empty_corpus_init() {
        let corpus = Corpus::new(Vocabulary::placeholder(4), vec![]).unwrap();
        let mut state = GibbsState::init(&corpus, &config(3, 0.1, 0.1), &mut Rng::new(0)).unwrap();
        assert_eq!(state.documents(), 0);
        assert!((0..3).all(|k| state.topic_count(k) == 0));
        assert_eq!(state.sweep(&corpus, &mut Rng::new(0)).unwrap(), 0.0);
    }

    #[test]
    fn conditional_hand_example() {
        // K=2, V=3, α=β=1 with the current token (term 1, document 0) removed.
        // These tables are not reachable from any z (n_mk[0][1] > n_k[1]),
        // so they are written directly.
        let state = GibbsState {
            topics: 2,
            terms: 3,
            alpha: 1.0,
            beta: 1.0,
            z: vec![vec![]],
            n_mk: vec![2, 5],
            n_kv: vec![0, 3, 0, 0, 1, 0],
            n_k: vec![6, 4],
        };
        let w = state.conditional_weights(0, 1).unwrap();
        assert_abs_diff_eq!(w[0], 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 12.0 / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn large_beta_weights_follow_document_counts() {
        let mut state = GibbsState {
            topics: 2,
            terms: 3,
            alpha: 1.0,
            beta: 1e12,
            z: vec![vec![]],
            n_mk: vec![2, 5],
            n_kv: vec![0, 3, 0, 0, 1, 0],
            n_k: vec![6, 4],
        };
        let w = state.conditional_weights(0, 1).unwrap();
        assert_abs_diff_eq!(w[0] / w[1], 3.0 / 6.0, epsilon = 1e-9);
        state.beta = 1.0;
        let w = state.conditional_weights(0, 1).unwrap();
        assert!((w[0] / w[1] - 0.5).abs() > 0.1);
    }

    #[test]
    fn all_zero_counts_give_uniform_weights() {
        let corpus = Corpus::new(Vocabulary::placeholder(4), vec![Document::default()]).unwrap();
        let state = GibbsState::init(&corpus, &config(3, 0.5, 0.2), &mut Rng::new(0)).unwrap();
        for w in state.conditional_weights(0, 2).unwrap() {
            assert_abs_diff_eq!(w, 0.5 / 4.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn negative_count_is_reported() {
        let corpus = small_corpus();
        let mut state = GibbsState::init(&corpus, &config(2, 1.0, 1.0), &mut Rng::new(0)).unwrap();
        let k = state.assignments()[0][0] as usize;
        state.decrement(0, 0, k);
        state.decrement(0, 0, k);
        state.decrement(0, 0, k);
        assert!(matches!(
            state.conditional_weights(0, 0),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn estimates_hand_examples() {
        // "cat cat dog", V=2, K=1, β=1
        let corpus =
            Corpus::new(Vocabulary::placeholder(2), vec![Document::new(vec![(0, 2), (1, 1)]).unwrap()])
                .unwrap();
        let state = GibbsState::init(&corpus, &config(1, 1.0, 1.0), &mut Rng::new(0)).unwrap();
        let phi = state.estimate_phi();
        assert_abs_diff_eq!(phi.get(0, 0), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(phi.get(0, 1), 0.4, epsilon = 1e-15);

        let corpus =
            Corpus::new(Vocabulary::placeholder(2), vec![Document::new(vec![(0, 4)]).unwrap()]).unwrap();
        let state =
            GibbsState::from_assignments(&corpus, &config(3, 0.5, 1.0), vec![vec![2; 4]]).unwrap();
        let theta = state.estimate_theta();
        assert_abs_diff_eq!(theta.get(0, 0), 0.5 / 5.5, epsilon = 1e-15);
        assert_abs_diff_eq!(theta.get(0, 1), 0.5 / 5.5, epsilon = 1e-15);
        assert_abs_diff_eq!(theta.get(0, 2), 4.5 / 5.5, epsilon = 1e-15);
    }

    #[test]
    fn empty_document_theta_is_uniform() {
        let corpus = Corpus::new(Vocabulary::placeholder(2), vec![Document::default()]).unwrap();
        let state = GibbsState::init(&corpus, &config(4, 0.3, 1.0), &mut Rng::new(0)).unwrap();
        for k in 0..4 {
            assert_abs_diff_eq!(state.estimate_theta().get(0, k), 0.25, epsilon = 1e-15);
        }
        for v in 0..2 {
            assert_abs_diff_eq!(state.estimate_phi().get(0, v), 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_topic_never_changes() {
        let corpus = small_corpus();
        let mut cfg = config(1, 0.1, 0.1);
        cfg.z_change_threshold = 0.2;
        let model = train(&corpus, &cfg).unwrap();
        assert_eq!(model.report.records.len(), 1);
        assert_eq!(model.report.records[0].statistic, 0.0);
        assert!(model.report.converged);
    }

    #[test]
    fn one_sweep_recorded() {
        let corpus = small_corpus();
        let mut cfg = config(2, 0.1, 0.1);
        cfg.max_sweeps = 1;
        let model = train(&corpus, &cfg).unwrap();
        assert_eq!(model.report.records.len(), 1);
    }

    #[test]
    fn zero_sweeps_rejected() {
        let mut cfg = config(2, 0.1, 0.1);
        cfg.max_sweeps = 0;
        assert!(train(&small_corpus(), &cfg).is_err());
    }
}
