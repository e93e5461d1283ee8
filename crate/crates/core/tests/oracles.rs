//! Implementation-independent reference computations checked against the
//! library: a straight-line Gibbs sweep, a dense VB fixed-point iteration, a
//! term-by-term ELBO and a digamma series. Special functions on the oracle
//! side come from `statrs`.

mod common;

use approx::assert_abs_diff_eq;
use lda_trio::corpus::{Corpus, Document, Vocabulary};
use lda_trio::gibbs::{GibbsConfig, GibbsState};
use lda_trio::math::{digamma, Rng};
use lda_trio::matrix::Matrix;
use lda_trio::online_vb::rho;
use lda_trio::vb::{
    self, e_step_from, elbo, init_lambda, CorpusTopics, DocTopics, EStepConfig, TokenResponsibilities, VbConfig,
};
use statrs::function::gamma::digamma as sr_digamma;

use common::{dense_e_step, elbo_oracle, gibbs_oracle_sweep, tiny_gibbs_corpus};

/// ψ(x) by shifting to x + 20 and summing the Bernoulli asymptotic series.
fn digamma_series(x: f64) -> f64 {
    const B2N: [f64; 10] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
        -3617.0 / 510.0,
        43867.0 / 798.0,
        -174611.0 / 330.0,
    ];
    let mut shift = 0.0;
    for i in 0..20 {
        shift += 1.0 / (x + i as f64);
    }
    let y = x + 20.0;
    let mut s = y.ln() - 1.0 / (2.0 * y);
    for (n, b) in B2N.iter().enumerate() {
        let two_n = 2.0 * (n as f64 + 1.0);
        s -= b / (two_n * y.powf(two_n));
    }
    s - shift
}

#[test]
fn digamma_matches_series_oracle() {
    assert_abs_diff_eq!(digamma_series(1.0), -0.577_215_664_9, epsilon = 1e-10);
    assert_abs_diff_eq!(digamma_series(0.5), -1.963_510_026_0, epsilon = 1e-10);
    let mut x = 1e-6;
    while x < 1e4 {
        let got = digamma(x).unwrap();
        let want = digamma_series(x);
        // the shift sum is dominated by 1/x for tiny x, so compare relative
        // to the magnitude there
        let tol = 1e-10 * want.abs().max(1.0);
        assert!((got - want).abs() <= tol, "x={x}: {got} vs {want}");
        assert!((got - sr_digamma(x)).abs() <= 1e-9 * want.abs().max(1.0), "statrs disagrees at {x}");
        x *= 1.37;
    }
}

#[test]
fn digamma_absolute_accuracy_above_one_millionth() {
    for &x in &[1e-6, 1e-5, 1e-3, 0.1, 0.5, 1.0, 2.5, 9.99, 10.0, 57.3, 1e3, 1e6] {
        let got = digamma(x).unwrap();
        let want = digamma_series(x);
        // absolute error 1e-10, up to one ulp of results near 1e6
        let ulp = f64::EPSILON * want.abs();
        assert!((got - want).abs() <= 1e-10 + 2.0 * ulp, "x={x}: diff {}", got - want);
    }
}

#[test]
fn rho_reference_value() {
    // 1024^-0.7 = 2^-7
    assert_abs_diff_eq!(rho(0, 1024.0, 0.7).unwrap(), 2f64.powi(-7), epsilon = 1e-15);
    assert_abs_diff_eq!(rho(0, 1024.0, 0.7).unwrap(), 0.0078125, epsilon = 1e-12);
    assert_eq!(rho(1, 0.0, 1.0).unwrap(), 1.0);
    assert!(rho(0, 0.0, 0.7).is_err());
}

#[test]
fn gibbs_sweep_matches_straight_line_oracle() {
    let corpus = tiny_gibbs_corpus();
    let config = GibbsConfig {
        topics: 2,
        alpha: 1.0,
        beta: 1.0,
        max_sweeps: 1,
        z_change_threshold: 0.0,
        seed: 17,
    };
    for seed in 0..50 {
        let mut rng = Rng::new(seed);
        let mut state = GibbsState::init(&corpus, &config, &mut rng).unwrap();
        let mut oracle_rng = rng.clone();
        let oracle = gibbs_oracle_sweep(&corpus, state.assignments(), 2, 1.0, 1.0, &mut oracle_rng);
        state.sweep(&corpus, &mut rng).unwrap();
        assert_eq!(state.assignments(), &oracle.z[..], "seed {seed}");
        for m in 0..2 {
            for k in 0..2 {
                assert_eq!(state.doc_topic_count(m, k), oracle.n_mk[m][k]);
            }
        }
        for k in 0..2 {
            for v in 0..3 {
                assert_eq!(state.topic_term_count(k, v), oracle.n_kv[k][v]);
            }
        }
    }
}

fn tight_e_step() -> EStepConfig {
    EStepConfig {
        tol: 1e-15,
        max_iter: 100_000,
        random_init: false,
    }
}

#[test]
fn e_step_matches_dense_oracle_two_by_two() {
    let lambda = vec![vec![3.0, 0.5], vec![0.7, 2.2]];
    let topics = CorpusTopics::new(Matrix::from_rows(&lambda).unwrap()).unwrap();
    let doc = Document::new(vec![(0, 1)]).unwrap();
    let out = e_step_from(
        &doc,
        &topics.expected_log(),
        0.1,
        &tight_e_step(),
        vb::symmetric_gamma(&doc, 2, 0.1),
    )
    .unwrap();
    let (gamma, psi) = dense_e_step(&[(0, 1.0)], &lambda, 0.1);
    for k in 0..2 {
        assert_abs_diff_eq!(out.doc_topics.gamma[k], gamma[k], epsilon = 1e-12);
        assert_abs_diff_eq!(out.responsibilities.row(0)[k], psi[0][k], epsilon = 1e-12);
    }
}

type DenseDocs = Vec<Vec<(usize, f64)>>;

fn tiny_vb_case() -> (Corpus, DenseDocs, Vec<Vec<f64>>) {
    let corpus = Corpus::new(
        Vocabulary::placeholder(3),
        vec![
            Document::new(vec![(0, 2), (2, 1)]).unwrap(),
            Document::new(vec![(1, 3), (2, 2)]).unwrap(),
        ],
    )
    .unwrap();
    let dense = corpus
        .documents()
        .iter()
        .map(|d| d.entries().iter().map(|&(v, c)| (v, f64::from(c))).collect())
        .collect();
    let lambda = vec![vec![2.5, 0.3, 1.1], vec![0.4, 1.9, 0.8]];
    (corpus, dense, lambda)
}

#[test]
fn e_step_fixed_point_and_elbo_match_dense_oracles() {
    let (corpus, dense, lambda) = tiny_vb_case();
    let (alpha, beta) = (0.3, 0.2);
    let topics = CorpusTopics::new(Matrix::from_rows(&lambda).unwrap()).unwrap();
    let elog = topics.expected_log();
    let mut pairs = Vec::new();
    let mut gammas = Vec::new();
    let mut psis = Vec::new();
    for (doc, d) in corpus.documents().iter().zip(&dense) {
        let out = e_step_from(doc, &elog, alpha, &tight_e_step(), vb::symmetric_gamma(doc, 2, alpha)).unwrap();
        let (g, p) = dense_e_step(d, &lambda, alpha);
        for k in 0..2 {
            assert_abs_diff_eq!(out.doc_topics.gamma[k], g[k], epsilon = 1e-8);
            for (j, row) in p.iter().enumerate() {
                assert_abs_diff_eq!(out.responsibilities.row(j)[k], row[k], epsilon = 1e-8);
            }
        }
        gammas.push(g);
        psis.push(p);
        pairs.push((out.doc_topics, out.responsibilities));
    }
    let got = elbo(&corpus, &pairs, &topics, alpha, beta).unwrap();
    let want = elbo_oracle(&dense, &gammas, &psis, &lambda, alpha, beta);
    assert_abs_diff_eq!(got, want, epsilon = 1e-8);
}

#[test]
fn elbo_matches_oracle_off_the_fixed_point() {
    let (corpus, dense, lambda) = tiny_vb_case();
    let topics = CorpusTopics::new(Matrix::from_rows(&lambda).unwrap()).unwrap();
    let gammas = vec![vec![0.9, 2.6], vec![4.1, 1.3]];
    let psis = vec![
        vec![vec![0.2, 0.8], vec![0.65, 0.35]],
        vec![vec![1.0, 0.0], vec![0.5, 0.5]],
    ];
    let pairs: Vec<(DocTopics, TokenResponsibilities)> = gammas
        .iter()
        .zip(&psis)
        .map(|(g, p)| (DocTopics { gamma: g.clone() }, TokenResponsibilities::from_rows(p).unwrap()))
        .collect();
    let got = elbo(&corpus, &pairs, &topics, 0.5, 0.05).unwrap();
    let want = elbo_oracle(&dense, &gammas, &psis, &lambda, 0.5, 0.05);
    assert_abs_diff_eq!(got, want, epsilon = 1e-8);
}

#[test]
fn trainer_elbo_equals_full_elbo_after_one_iteration() {
    let (corpus, _, _) = tiny_vb_case();
    let config = VbConfig {
        topics: 2,
        alpha: 0.3,
        beta: 0.2,
        max_iterations: 1,
        seed: 5,
        ..VbConfig::default()
    };
    let model = vb::train(&corpus, &config).unwrap();

    let topics = init_lambda(2, 3, &mut Rng::new(5)).unwrap();
    let elog = topics.expected_log();
    let mut stats = Matrix::zeros(2, 3);
    let mut pairs = Vec::new();
    for doc in corpus.documents() {
        let out = e_step_from(doc, &elog, 0.3, &config.e_step, vb::symmetric_gamma(doc, 2, 0.3)).unwrap();
        vb::accumulate_stats(&mut stats, doc, &out.responsibilities);
        pairs.push((out.doc_topics, out.responsibilities));
    }
    let lambda = vb::m_step(&stats, 0.2).unwrap();
    assert!(lambda.lambda().max_abs_diff(model.topics.lambda()) < 1e-12);
    let full = elbo(&corpus, &pairs, &lambda, 0.3, 0.2).unwrap();
    assert_abs_diff_eq!(model.report.records[0].statistic, full, epsilon = 1e-9);
}
