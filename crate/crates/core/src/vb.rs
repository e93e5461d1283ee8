//! Batch variational Bayes.
//!
//! The posterior is approximated by the fully factorized family
//! q(z_mn = k) = ψ_mvk, q(θ_m) = Dir(γ_m), q(φ_k) = Dir(λ_k). Each outer
//! iteration runs the per-document E-step (ψ and γ to a fixed point with λ
//! held fixed), then the M-step λ_kv = β + Σ_m n_mv ψ_mvk, then evaluates the
//! ELBO.

use log::warn;
use rand_distr::{Distribution, Gamma};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::eval::PerplexityMonitor;
use crate::math::{dirichlet_log_expectation_into, ln_gamma, normalize_exp_in_place, Rng};
use crate::matrix::Matrix;
use crate::report::{Algorithm, IterationRecord, Stopwatch, TrainReport};

/// Variational Dirichlet parameters λ of the topics, K×V, strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusTopics {
    lambda: Matrix,
}

impl CorpusTopics {
    pub fn new(lambda: Matrix) -> Result<Self> {
        if lambda.rows() == 0 || lambda.cols() == 0 {
            return Err(Error::Argument("topic matrix must be non-empty".into()));
        }
        if let Some(bad) = lambda.as_slice().iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
            return Err(Error::Domain(format!("lambda entries must be positive, got {bad}")));
        }
        Ok(CorpusTopics { lambda })
    }

    pub fn lambda(&self) -> &Matrix {
        &self.lambda
    }

    pub fn topics(&self) -> usize {
        self.lambda.rows()
    }

    pub fn terms(&self) -> usize {
        self.lambda.cols()
    }

    /// E_q[φ] = λ_kv / Σ_v λ_kv.
    pub fn mean_topics(&self) -> Matrix {
        self.lambda.row_normalized()
    }

    pub fn expected_log(&self) -> ExpectedLogTopics {
        ExpectedLogTopics::from_lambda(self)
    }

    pub fn into_matrix(self) -> Matrix {
        self.lambda
    }
}

/// Entries i.i.d. Gamma(shape 100, scale 0.01): mean 1, variance 0.01.
pub fn init_lambda(topics: usize, terms: usize, rng: &mut Rng) -> Result<CorpusTopics> {
    if topics == 0 || terms == 0 {
        return Err(Error::Argument("topics and terms must be at least 1".into()));
    }
    let law = Gamma::new(100.0, 0.01).expect("valid Gamma parameters");
    let data = (0..topics * terms).map(|_| law.sample(rng)).collect();
    CorpusTopics::new(Matrix::from_vec(topics, terms, data)?)
}

/// E[ln φ_kv] for every topic and term, stored term-major so the E-step reads
/// one contiguous K-vector per term.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedLogTopics {
    topics: usize,
    terms: usize,
    by_term: Vec<f64>,
}

impl ExpectedLogTopics {
    /// Digamma form ψ(λ_kv) − ψ(Σ_v λ_kv) under q(φ | λ).
    pub fn from_lambda(topics: &CorpusTopics) -> Self {
        let (k_count, v_count) = (topics.topics(), topics.terms());
        let mut by_term = vec![0.0; k_count * v_count];
        let mut row = vec![0.0; v_count];
        for k in 0..k_count {
            dirichlet_log_expectation_into(topics.lambda.row(k), &mut row)
                .expect("CorpusTopics entries are positive");
            for (v, x) in row.iter().enumerate() {
                by_term[v * k_count + k] = *x;
            }
        }
        ExpectedLogTopics {
            topics: k_count,
            terms: v_count,
            by_term,
        }
    }

    /// ln φ_kv of a point estimate (q(φ) collapsed onto φ).
    pub fn from_point_estimate(phi: &Matrix) -> Result<Self> {
        let (k_count, v_count) = (phi.rows(), phi.cols());
        if k_count == 0 || v_count == 0 {
            return Err(Error::Argument("topic matrix must be non-empty".into()));
        }
        let mut by_term = vec![0.0; k_count * v_count];
        for k in 0..k_count {
            for (v, p) in phi.row(k).iter().enumerate() {
                if !(*p > 0.0) {
                    return Err(Error::Domain(format!("phi[{k}][{v}] = {p} is not positive")));
                }
                by_term[v * k_count + k] = p.ln();
            }
        }
        Ok(ExpectedLogTopics {
            topics: k_count,
            terms: v_count,
            by_term,
        })
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    /// The K-vector E[ln φ_{·,v}].
    pub fn term(&self, v: usize) -> &[f64] {
        &self.by_term[v * self.topics..(v + 1) * self.topics]
    }

    pub fn get(&self, k: usize, v: usize) -> f64 {
        self.by_term[v * self.topics + k]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EStepConfig {
    /// Stop when the mean relative change of γ falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Start γ at α + N_m/K times a Gamma(100, 0.01) jitter instead of the
    /// plain symmetric α + N_m/K.
    pub random_init: bool,
}

impl Default for EStepConfig {
    fn default() -> Self {
        EStepConfig {
            tol: 0.001,
            max_iter: 100,
            random_init: false,
        }
    }
}

impl EStepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Argument("E-step tolerance must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Argument("E-step iteration cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Variational Dirichlet parameters γ of one document's topic mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct DocTopics {
    pub gamma: Vec<f64>,
}

/// ψ rows, one per distinct term of a document, aligned with
/// [`Document::entries`].
#[derive(Clone, Debug, PartialEq)]
pub struct TokenResponsibilities {
    topics: usize,
    rows: Vec<f64>,
}

impl TokenResponsibilities {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let topics = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != topics) {
            return Err(Error::Argument("ragged responsibility rows".into()));
        }
        Ok(TokenResponsibilities {
            topics,
            rows: rows.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len().checked_div(self.topics).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.topics..(j + 1) * self.topics]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |j| self.row(j))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EStepOutcome {
    pub doc_topics: DocTopics,
    pub responsibilities: TokenResponsibilities,
    pub converged: bool,
    pub iterations: usize,
}

/// Symmetric starting point γ_k = α + N_m/K.
pub fn symmetric_gamma(doc: &Document, topics: usize, alpha: f64) -> Vec<f64> {
    vec![alpha + doc.token_count() as f64 / topics as f64; topics]
}

pub(crate) fn initial_gamma(doc: &Document, topics: usize, alpha: f64, config: &EStepConfig, rng: &mut Rng) -> Vec<f64> {
    let mut gamma = symmetric_gamma(doc, topics, alpha);
    if config.random_init && !doc.is_empty() {
        let law = Gamma::new(100.0, 0.01).expect("valid Gamma parameters");
        let share = doc.token_count() as f64 / topics as f64;
        for g in gamma.iter_mut() {
            *g = alpha + share * law.sample(rng);
        }
    }
    gamma
}

/// Fits ψ and γ for one document with the topics fixed.
///
/// `rng` is only consumed when `config.random_init` is set.
pub fn e_step_document(
    doc: &Document,
    elog_phi: &ExpectedLogTopics,
    alpha: f64,
    config: &EStepConfig,
    rng: &mut Rng,
) -> Result<EStepOutcome> {
    let gamma = initial_gamma(doc, elog_phi.topics(), alpha, config, rng);
    e_step_from(doc, elog_phi, alpha, config, gamma)
}

/// E-step started from an explicit γ.
pub fn e_step_from(
    doc: &Document,
    elog_phi: &ExpectedLogTopics,
    alpha: f64,
    config: &EStepConfig,
    mut gamma: Vec<f64>,
) -> Result<EStepOutcome> {
    let k_count = elog_phi.topics();
    if let Some(v) = doc.max_term().filter(|v| *v >= elog_phi.terms()) {
        return Err(Error::Argument(format!(
            "document references term {v} but the model has {} terms",
            elog_phi.terms()
        )));
    }
    if gamma.len() != k_count {
        return Err(Error::Argument(format!(
            "initial gamma has {} entries, expected {k_count}",
            gamma.len()
        )));
    }
    let entries = doc.entries();
    if entries.is_empty() {
        return Ok(EStepOutcome {
            doc_topics: DocTopics {
                gamma: vec![alpha; k_count],
            },
            responsibilities: TokenResponsibilities {
                topics: k_count,
                rows: Vec::new(),
            },
            converged: true,
            iterations: 0,
        });
    }

    let mut psi = vec![0.0; entries.len() * k_count];
    let mut elog_theta = vec![0.0; k_count];
    let mut next = vec![0.0; k_count];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        dirichlet_log_expectation_into(&gamma, &mut elog_theta)?;
        next.iter_mut().for_each(|g| *g = alpha);
        for (j, &(v, count)) in entries.iter().enumerate() {
            let row = &mut psi[j * k_count..(j + 1) * k_count];
            for ((r, t), p) in row.iter_mut().zip(&elog_theta).zip(elog_phi.term(v)) {
                *r = t + p;
            }
            normalize_exp_in_place(row)?;
            let n = f64::from(count);
            for (g, r) in next.iter_mut().zip(row.iter()) {
                *g += n * r;
            }
        }
        let change = mean_relative_change(&gamma, &next);
        std::mem::swap(&mut gamma, &mut next);
        if change < config.tol {
            converged = true;
            break;
        }
    }
    Ok(EStepOutcome {
        doc_topics: DocTopics { gamma },
        responsibilities: TokenResponsibilities {
            topics: k_count,
            rows: psi,
        },
        converged,
        iterations,
    })
}

/// mean_k |new_k − old_k| / old_k
pub fn mean_relative_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(o, n)| (n - o).abs() / o)
        .sum::<f64>()
        / old.len() as f64
}

/// λ_kv = β + stats_kv.
pub fn m_step(stats: &Matrix, beta: f64) -> Result<CorpusTopics> {
    let mut lambda = stats.clone();
    lambda.as_mut_slice().iter_mut().for_each(|x| *x += beta);
    CorpusTopics::new(lambda)
}

/// Adds n_mv ψ_mv· into column v of the K×V sufficient statistics.
pub fn accumulate_stats(stats: &mut Matrix, doc: &Document, psi: &TokenResponsibilities) {
    let k_count = stats.rows();
    let v_count = stats.cols();
    let data = stats.as_mut_slice();
    for (&(v, count), row) in doc.entries().iter().zip(psi.iter_rows()) {
        let n = f64::from(count);
        for (k, r) in row.iter().enumerate() {
            data[k * v_count + v] += n * r;
        }
    }
    debug_assert_eq!(data.len(), k_count * v_count);
}

/// Terms of one document's ELBO contribution that do not involve φ:
///
/// E[ln p(z|θ)] − E[ln q(z)] + E[ln p(θ|α)] − E[ln q(θ)].
pub fn doc_elbo_local(doc: &Document, doc_topics: &DocTopics, psi: &TokenResponsibilities, alpha: f64) -> Result<f64> {
    let gamma = &doc_topics.gamma;
    let k_count = gamma.len();
    let mut elog_theta = vec![0.0; k_count];
    dirichlet_log_expectation_into(gamma, &mut elog_theta)?;

    let mut total = 0.0;
    for (&(_, count), row) in doc.entries().iter().zip(psi.iter_rows()) {
        let mut s = 0.0;
        for (p, t) in row.iter().zip(&elog_theta) {
            if *p > 0.0 {
                s += p * (t - p.ln());
            }
        }
        total += f64::from(count) * s;
    }
    let k = k_count as f64;
    let prior = ln_gamma(k * alpha) - k * ln_gamma(alpha)
        + (alpha - 1.0) * elog_theta.iter().sum::<f64>();
    let gamma_sum: f64 = gamma.iter().sum();
    let entropy_part = ln_gamma(gamma_sum)
        - gamma.iter().map(|g| ln_gamma(*g)).sum::<f64>()
        + gamma
            .iter()
            .zip(&elog_theta)
            .map(|(g, t)| (g - 1.0) * t)
            .sum::<f64>();
    Ok(total + prior - entropy_part)
}

fn doc_bound(doc: &Document, out: &EStepOutcome, elog_phi: &ExpectedLogTopics, alpha: f64) -> Result<f64> {
    Ok(doc_elbo_local(doc, &out.doc_topics, &out.responsibilities, alpha)?
        + doc_elbo_words(doc, &out.responsibilities, elog_phi))
}

/// E[ln p(w_m | z_m, φ)] = Σ_v n_mv Σ_k ψ_mvk E[ln φ_kv].
pub fn doc_elbo_words(doc: &Document, psi: &TokenResponsibilities, elog_phi: &ExpectedLogTopics) -> f64 {
    doc.entries()
        .iter()
        .zip(psi.iter_rows())
        .map(|(&(v, count), row)| {
            f64::from(count)
                * row
                    .iter()
                    .zip(elog_phi.term(v))
                    .map(|(p, e)| p * e)
                    .sum::<f64>()
        })
        .sum()
}

/// E[ln p(φ|β)] − E[ln q(φ|λ)], summed over topics.
pub fn topic_elbo(topics: &CorpusTopics, elog_phi: &ExpectedLogTopics, beta: f64) -> f64 {
    let v = topics.terms() as f64;
    let lambda = topics.lambda();
    let mut total = 0.0;
    for k in 0..topics.topics() {
        let row = lambda.row(k);
        let mut elog_sum = 0.0;
        let mut q_part = 0.0;
        let mut lg_sum = 0.0;
        for (vi, l) in row.iter().enumerate() {
            let e = elog_phi.get(k, vi);
            elog_sum += e;
            q_part += (l - 1.0) * e;
            lg_sum += ln_gamma(*l);
        }
        let prior = ln_gamma(v * beta) - v * ln_gamma(beta) + (beta - 1.0) * elog_sum;
        let q = ln_gamma(row.iter().sum()) - lg_sum + q_part;
        total += prior - q;
    }
    total
}

/// Full evidence lower bound for a corpus and its variational parameters.
pub fn elbo(
    corpus: &Corpus,
    docs: &[(DocTopics, TokenResponsibilities)],
    topics: &CorpusTopics,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(Error::Domain("alpha and beta must be positive".into()));
    }
    if docs.len() != corpus.len() {
        return Err(Error::Argument(format!(
            "{} variational documents for a corpus of {}",
            docs.len(),
            corpus.len()
        )));
    }
    let elog_phi = topics.expected_log();
    let mut total = topic_elbo(topics, &elog_phi, beta);
    for (doc, (doc_topics, psi)) in corpus.documents().iter().zip(docs) {
        if psi.len() != doc.entries().len() {
            return Err(Error::Argument("responsibility rows do not match document".into()));
        }
        total += doc_elbo_local(doc, doc_topics, psi, alpha)? + doc_elbo_words(doc, psi, &elog_phi);
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VbConfig {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub e_step: EStepConfig,
    /// Stop when the relative ELBO improvement falls below this.
    pub elbo_rel_tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Concurrent E-step workers; 1 runs inline.
    pub threads: usize,
    /// From the second outer iteration on, fall back to an E-step started at
    /// the document's previous γ whenever the fresh E-step ends with a lower
    /// bound than one update from that γ would give. This keeps the ELBO
    /// non-decreasing even when E-steps stop short of their fixed point.
    pub monotone_guard: bool,
}

impl Default for VbConfig {
    fn default() -> Self {
        VbConfig {
            topics: 100,
            alpha: 0.01,
            beta: 0.01,
            e_step: EStepConfig::default(),
            elbo_rel_tol: 0.001,
            max_iterations: 100,
            seed: 0,
            threads: 1,
            monotone_guard: true,
        }
    }
}

impl VbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 {
            return Err(Error::Argument("topics must be at least 1".into()));
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::Argument("alpha and beta must be positive".into()));
        }
        if !(self.elbo_rel_tol > 0.0) {
            return Err(Error::Argument("ELBO tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Argument("max_iterations must be at least 1".into()));
        }
        self.e_step.validate()
    }
}

/// Runs E-steps over `docs` in chunks, possibly on several threads, and hands
/// each outcome to `sink` in document order.
pub(crate) fn e_step_in_order<I, S>(
    docs: &[Document],
    elog_phi: &ExpectedLogTopics,
    alpha: f64,
    config: &EStepConfig,
    threads: usize,
    init: I,
    sink: S,
) -> Result<()>
where
    I: Fn(usize, &Document) -> Vec<f64> + Sync,
    S: FnMut(usize, &Document, EStepOutcome) -> Result<()>,
{
    map_in_order(
        docs,
        threads,
        |i, doc| e_step_from(doc, elog_phi, alpha, config, init(i, doc)),
        sink,
    )
}

/// Applies `work` to every document, in chunks spread over `threads`
/// workers, and feeds the results to `sink` in document order.
pub(crate) fn map_in_order<T, W, S>(docs: &[Document], threads: usize, work: W, mut sink: S) -> Result<()>
where
    T: Send,
    W: Fn(usize, &Document) -> Result<T> + Sync,
    S: FnMut(usize, &Document, T) -> Result<()>,
{
    let threads = threads.max(1);
    if threads == 1 {
        for (i, doc) in docs.iter().enumerate() {
            let out = work(i, doc)?;
            sink(i, doc, out)?;
        }
        return Ok(());
    }
    const PER_WORKER: usize = 64;
    let chunk = PER_WORKER * threads;
    for (c, block) in docs.chunks(chunk).enumerate() {
        let offset = c * chunk;
        let per = block.len().div_ceil(threads);
        let results: Vec<Result<Vec<T>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = block
                .chunks(per)
                .enumerate()
                .map(|(w, part)| {
                    let work = &work;
                    scope.spawn(move || {
                        part.iter()
                            .enumerate()
                            .map(|(i, doc)| work(offset + w * per + i, doc))
                            .collect()
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("E-step worker panicked"))
                .collect()
        });
        let mut idx = offset;
        for part in results {
            for out in part? {
                sink(idx, &docs[idx], out)?;
                idx += 1;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct VbModel {
    pub topics: CorpusTopics,
    pub doc_topics: Vec<DocTopics>,
    pub report: TrainReport,
}

pub fn train(corpus: &Corpus, config: &VbConfig) -> Result<VbModel> {
    train_monitored(corpus, config, None)
}

/// Alternates full E-steps and M-steps until the relative ELBO improvement
/// drops below `elbo_rel_tol` or `max_iterations` is reached.
pub fn train_monitored(
    corpus: &Corpus,
    config: &VbConfig,
    monitor: Option<&PerplexityMonitor<'_>>,
) -> Result<VbModel> {
    config.validate()?;
    if corpus.num_terms() == 0 {
        return Err(Error::Argument("corpus has an empty vocabulary".into()));
    }
    let empty = corpus.documents().iter().filter(|d| d.is_empty()).count();
    if empty > 0 {
        warn!("skipping {empty} documents without tokens");
    }
    let (k_count, v_count) = (config.topics, corpus.num_terms());
    let alpha = config.alpha;
    let base = Rng::new(config.seed);
    let mut clock = Stopwatch::start();
    let mut topics = init_lambda(k_count, v_count, &mut base.clone())?;
    let mut gammas: Vec<Vec<f64>> = Vec::new();
    let mut report = TrainReport::new(Algorithm::Vb);
    let mut previous: Option<f64> = None;

    for iteration in 1..=config.max_iterations {
        let elog_phi = topics.expected_log();
        let mut stats = Matrix::zeros(k_count, v_count);
        let mut local = 0.0;
        let mut next_gammas = Vec::with_capacity(corpus.len());
        let guard = config.monotone_guard && !gammas.is_empty();
        let prior = &gammas;
        map_in_order(
            corpus.documents(),
            config.threads,
            |i, doc| {
                let mut rng = base.substream(i as u64);
                let start = initial_gamma(doc, k_count, alpha, &config.e_step, &mut rng);
                let fresh = e_step_from(doc, &elog_phi, alpha, &config.e_step, start)?;
                let fresh_bound = doc_bound(doc, &fresh, &elog_phi, alpha)?;
                if !guard || doc.is_empty() {
                    return Ok((fresh, fresh_bound));
                }
                let one = EStepConfig {
                    max_iter: 1,
                    ..config.e_step
                };
                let step = e_step_from(doc, &elog_phi, alpha, &one, prior[i].clone())?;
                let step_bound = doc_bound(doc, &step, &elog_phi, alpha)?;
                if fresh_bound >= step_bound {
                    return Ok((fresh, fresh_bound));
                }
                let resumed = e_step_from(doc, &elog_phi, alpha, &config.e_step, step.doc_topics.gamma.clone())?;
                let resumed_bound = doc_bound(doc, &resumed, &elog_phi, alpha)?;
                Ok(if resumed_bound >= step_bound {
                    (resumed, resumed_bound)
                } else {
                    (step, step_bound)
                })
            },
            |_, doc, (outcome, _)| {
                accumulate_stats(&mut stats, doc, &outcome.responsibilities);
                local += doc_elbo_local(doc, &outcome.doc_topics, &outcome.responsibilities, alpha)?;
                next_gammas.push(outcome.doc_topics.gamma);
                Ok(())
            },
        )?;
        gammas = next_gammas;
        topics = m_step(&stats, config.beta)?;
        let elog_new = topics.expected_log();
        let words: f64 = stats
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, s)| s * elog_new.get(i / v_count, i % v_count))
            .sum();
        let bound = local + words + topic_elbo(&topics, &elog_new, config.beta);
        let wall_seconds = clock.seconds();

        let perplexity = match monitor.filter(|m| m.due_iteration(iteration)) {
            Some(m) => {
                clock.pause();
                let p = m.evaluate(&elog_new)?;
                clock.resume();
                Some(p)
            }
            None => None,
        };
        report.records.push(IterationRecord {
            index: iteration,
            documents: iteration as u64 * corpus.len() as u64,
            wall_seconds,
            statistic: bound,
            perplexity,
        });
        if let Some(prev) = previous {
            if (bound - prev) / prev.abs() < config.elbo_rel_tol {
                report.converged = true;
                break;
            }
        }
        previous = Some(bound);
    }
    Ok(VbModel {
        topics,
        doc_topics: gammas.into_iter().map(|gamma| DocTopics { gamma }).collect(),
        report,
    })
}
