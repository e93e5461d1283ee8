//! Held-out perplexity and ground-truth topic alignment.
//!
//! log p(w_m | λ) is intractable, so each held-out document contributes its
//! variational lower bound
//!
//! ```text
//! E_q[ln p(w_m, z_m, θ_m | φ)] − E_q[ln q(z_m, θ_m)]
//! ```
//!
//! after an E-step against the fixed topics, and the reported perplexity is
//! exp(−Σ bounds / Σ N_m). This is an upper bound on the true perplexity, so
//! comparisons between models compare bounds.

use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::vb::{self, doc_elbo_local, doc_elbo_words, CorpusTopics, EStepConfig, ExpectedLogTopics};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalResult {
    pub perplexity: f64,
    /// Σ bounds / Σ N_m, in nats per token.
    pub per_word_bound: f64,
    pub total_tokens: u64,
    pub per_doc_bounds: Vec<f64>,
}

/// Perplexity bound of `held` under the variational topics λ.
pub fn held_out_perplexity(
    held: &Corpus,
    topics: &CorpusTopics,
    alpha: f64,
    config: &EStepConfig,
) -> Result<EvalResult> {
    held_out_perplexity_with(held, &topics.expected_log(), alpha, config, 1)
}

/// Perplexity bound of `held` for any E[ln φ] table, e.g. one built from a
/// Gibbs point estimate with [`ExpectedLogTopics::from_point_estimate`].
pub fn held_out_perplexity_with(
    held: &Corpus,
    elog_phi: &ExpectedLogTopics,
    alpha: f64,
    config: &EStepConfig,
    threads: usize,
) -> Result<EvalResult> {
    config.validate()?;
    if !(alpha > 0.0) {
        return Err(Error::Argument("alpha must be positive".into()));
    }
    let total_tokens = held.total_tokens();
    if total_tokens == 0 {
        return Err(Error::Argument("held-out set contains no tokens".into()));
    }
    if held.num_terms() > elog_phi.terms() {
        return Err(Error::Argument(format!(
            "held-out vocabulary has {} terms, model has {}",
            held.num_terms(),
            elog_phi.terms()
        )));
    }
    let base = crate::math::Rng::new(0);
    let mut per_doc_bounds = Vec::with_capacity(held.len());
    vb::e_step_in_order(
        held.documents(),
        elog_phi,
        alpha,
        config,
        threads,
        |i, doc| {
            let mut rng = base.substream(i as u64);
            vb::initial_gamma(doc, elog_phi.topics(), alpha, config, &mut rng)
        },
        |_, doc, outcome| {
            let psi = &outcome.responsibilities;
            let bound = doc_elbo_local(doc, &outcome.doc_topics, psi, alpha)?
                + doc_elbo_words(doc, psi, elog_phi);
            per_doc_bounds.push(bound);
            Ok(())
        },
    )?;
    let per_word_bound = per_doc_bounds.iter().sum::<f64>() / total_tokens as f64;
    Ok(EvalResult {
        perplexity: (-per_word_bound).exp(),
        per_word_bound,
        total_tokens,
        per_doc_bounds,
    })
}

/// Periodic held-out evaluation during training.
#[derive(Clone, Debug)]
pub struct PerplexityMonitor<'a> {
    pub held: &'a Corpus,
    /// Sweeps or outer iterations between checkpoints for the batch
    /// trainers, documents between checkpoints for online VB. 0 disables.
    pub every: usize,
    pub alpha: f64,
    pub e_step: EStepConfig,
    pub threads: usize,
}

impl PerplexityMonitor<'_> {
    pub fn due_iteration(&self, iteration: usize) -> bool {
        self.every > 0 && iteration.is_multiple_of(self.every)
    }

    /// True when the document counter crossed a multiple of `every`.
    pub fn due_documents(&self, before: u64, after: u64) -> bool {
        let every = self.every as u64;
        every > 0 && before / every != after / every
    }

    pub fn evaluate(&self, elog_phi: &ExpectedLogTopics) -> Result<f64> {
        Ok(held_out_perplexity_with(self.held, elog_phi, self.alpha, &self.e_step, self.threads)?.perplexity)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub mean_cosine: f64,
    /// `matching[i]` is the truth row paired with estimated row `i`.
    pub matching: Vec<usize>,
    /// Cosine of each matched pair, indexed like `matching`.
    pub cosines: Vec<f64>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Pairs estimated topics with true topics by cosine similarity.
///
/// Matching is greedy, not optimal: the globally most similar remaining pair
/// is taken first, then its row and column are removed. Ties go to the lower
/// (estimated, truth) index pair.
pub fn align_topics(estimated: &Matrix, truth: &Matrix) -> Result<Alignment> {
    if estimated.rows() != truth.rows() || estimated.cols() != truth.cols() {
        return Err(Error::Argument(format!(
            "shape mismatch: {}x{} vs {}x{}",
            estimated.rows(),
            estimated.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    let k = estimated.rows();
    let mut sims = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            sims[i * k + j] = cosine(estimated.row(i), truth.row(j));
        }
    }
    let mut matching = vec![usize::MAX; k];
    let mut cosines = vec![0.0; k];
    let mut row_used = vec![false; k];
    let mut col_used = vec![false; k];
    for _ in 0..k {
        let mut best: Option<(usize, usize)> = None;
        for i in (0..k).filter(|i| !row_used[*i]) {
            for j in (0..k).filter(|j| !col_used[*j]) {
                if best.is_none_or(|(bi, bj)| sims[i * k + j] > sims[bi * k + bj]) {
                    best = Some((i, j));
                }
            }
        }
        let (i, j) = best.expect("an unmatched pair remains");
        row_used[i] = true;
        col_used[j] = true;
        matching[i] = j;
        cosines[i] = sims[i * k + j];
    }
    let mean_cosine = if k == 0 {
        0.0
    } else {
        cosines.iter().sum::<f64>() / k as f64
    };
    Ok(Alignment {
        mean_cosine,
        matching,
        cosines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Vocabulary};
    use approx::assert_abs_diff_eq;

    #[test]
    fn align_identity_and_permutation() {
        let truth = Matrix::from_rows(&[
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.1, 0.8],
            vec![0.3, 0.4, 0.3],
        ])
        .unwrap();
        let a = align_topics(&truth, &truth).unwrap();
        assert_abs_diff_eq!(a.mean_cosine, 1.0, epsilon = 1e-12);
        assert_eq!(a.matching, vec![0, 1, 2]);

        let permuted = Matrix::from_rows(&[truth.row(2).to_vec(), truth.row(0).to_vec(), truth.row(1).to_vec()])
            .unwrap();
        let a = align_topics(&permuted, &truth).unwrap();
        assert_abs_diff_eq!(a.mean_cosine, 1.0, epsilon = 1e-12);
        assert_eq!(a.matching, vec![2, 0, 1]);
    }

    #[test]
    fn align_disjoint_against_uniform() {
        let est = Matrix::from_rows(&[vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.5, 0.5]]).unwrap();
        let truth = Matrix::filled(2, 4, 0.25);
        let a = align_topics(&est, &truth).unwrap();
        for c in &a.cosines {
            assert_abs_diff_eq!(*c, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(a.mean_cosine, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn align_shape_mismatch() {
        assert!(align_topics(&Matrix::zeros(2, 3), &Matrix::zeros(2, 4)).is_err());
        assert!(align_topics(&Matrix::zeros(3, 3), &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn zero_token_held_out_rejected() {
        let held = Corpus::new(Vocabulary::placeholder(2), vec![Document::default()]).unwrap();
        let topics = CorpusTopics::new(Matrix::filled(1, 2, 1.0)).unwrap();
        assert!(matches!(
            held_out_perplexity(&held, &topics, 0.1, &EStepConfig::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn uniform_single_topic_perplexity_is_vocabulary_size() {
        let v = 20;
        let held = Corpus::new(
            Vocabulary::placeholder(v),
            vec![
                Document::new(vec![(0, 3), (7, 1), (19, 2)]).unwrap(),
                Document::new(vec![(4, 10)]).unwrap(),
            ],
        )
        .unwrap();
        let phi = Matrix::filled(1, v, 1.0 / v as f64);
        let elog = ExpectedLogTopics::from_point_estimate(&phi).unwrap();
        let r = held_out_perplexity_with(&held, &elog, 0.01, &EStepConfig::default(), 1).unwrap();
        assert_abs_diff_eq!(r.perplexity, v as f64, epsilon = 1e-9);
        assert_eq!(r.total_tokens, 16);
    }

    #[test]
    fn monitor_schedules() {
        let held = Corpus::default();
        let m = PerplexityMonitor {
            held: &held,
            every: 250,
            alpha: 0.1,
            e_step: EStepConfig::default(),
            threads: 1,
        };
        assert!(!m.due_iteration(1));
        assert!(m.due_iteration(500));
        assert!(!m.due_documents(0, 100));
        assert!(m.due_documents(200, 300));
        assert!(m.due_documents(400, 500));
        let off = PerplexityMonitor { every: 0, ..m };
        assert!(!off.due_iteration(10));
    }
}
