//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use lda_trio::corpus::{Corpus, Document, Vocabulary};
use lda_trio::math::Rng;
use statrs::function::gamma::{digamma as sr_digamma, ln_gamma as sr_ln_gamma};

/// Two documents over three terms, six tokens in all.
pub fn tiny_gibbs_corpus() -> Corpus {
    Corpus::new(
        Vocabulary::placeholder(3),
        vec![
            Document::new(vec![(0, 2), (2, 1)]).unwrap(),
            Document::new(vec![(1, 2), (2, 1)]).unwrap(),
        ],
    )
    .unwrap()
}

/// Random corpus with `docs` documents of 0..=max_len tokens over `terms` terms.
pub fn random_corpus(rng: &mut Rng, docs: usize, terms: usize, max_len: usize) -> Corpus {
    let documents = (0..docs)
        .map(|_| {
            let n = rng.below(max_len + 1);
            Document::from_tokens((0..n).map(|_| rng.below(terms)))
        })
        .collect();
    Corpus::new(Vocabulary::placeholder(terms), documents).unwrap()
}

pub struct CountTables {
    pub z: Vec<Vec<u32>>,
    pub n_mk: Vec<Vec<i64>>,
    pub n_kv: Vec<Vec<i64>>,
    pub n_k: Vec<i64>,
}

/// Count tables rebuilt from scratch out of the assignments.
pub fn brute_force_counts(corpus: &Corpus, z: &[Vec<u32>], topics: usize) -> CountTables {
    let mut n_mk = vec![vec![0i64; topics]; corpus.len()];
    let mut n_kv = vec![vec![0i64; corpus.num_terms()]; topics];
    let mut n_k = vec![0i64; topics];
    for (m, doc) in corpus.documents().iter().enumerate() {
        for (i, v) in doc.tokens().enumerate() {
            let k = z[m][i] as usize;
            n_mk[m][k] += 1;
            n_kv[k][v] += 1;
            n_k[k] += 1;
        }
    }
    CountTables {
        z: z.to_vec(),
        n_mk,
        n_kv,
        n_k,
    }
}

/// One collapsed Gibbs sweep written without incremental bookkeeping: the
/// counts excluding the current token are recounted from `z` every time.
pub fn gibbs_oracle_sweep(
    corpus: &Corpus,
    z: &[Vec<u32>],
    topics: usize,
    alpha: f64,
    beta: f64,
    rng: &mut Rng,
) -> CountTables {
    let terms = corpus.num_terms();
    let mut z = z.to_vec();
    for (m, doc) in corpus.documents().iter().enumerate() {
        let tokens: Vec<usize> = doc.tokens().collect();
        for i in 0..tokens.len() {
            let v = tokens[i];
            let mut weights = Vec::with_capacity(topics);
            for k in 0..topics {
                let mut term_topic = 0;
                let mut topic_total = 0;
                let mut doc_topic = 0;
                for (m2, d2) in corpus.documents().iter().enumerate() {
                    for (i2, v2) in d2.tokens().enumerate() {
                        if (m2, i2) == (m, i) || z[m2][i2] as usize != k {
                            continue;
                        }
                        topic_total += 1;
                        if v2 == v {
                            term_topic += 1;
                        }
                        if m2 == m {
                            doc_topic += 1;
                        }
                    }
                }
                weights.push(
                    (term_topic as f64 + beta) / (topic_total as f64 + terms as f64 * beta)
                        * (doc_topic as f64 + alpha),
                );
            }
            let total: f64 = weights.iter().sum();
            let u = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = topics - 1;
            for (k, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            z[m][i] = pick as u32;
        }
    }
    brute_force_counts(corpus, &z, topics)
}

/// Dense fixed point of the ψ/γ updates, iterated until γ moves less than
/// 1e-14.
pub fn dense_e_step(doc: &[(usize, f64)], lambda: &[Vec<f64>], alpha: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = lambda.len();
    let elog_phi: Vec<Vec<f64>> = lambda
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            row.iter().map(|l| sr_digamma(*l) - sr_digamma(s)).collect()
        })
        .collect();
    let n: f64 = doc.iter().map(|(_, c)| c).sum();
    let mut gamma = vec![alpha + n / k as f64; k];
    let mut psi = vec![vec![0.0; k]; doc.len()];
    for _ in 0..100_000 {
        let gs: f64 = gamma.iter().sum();
        for (j, (v, _)) in doc.iter().enumerate() {
            let un: Vec<f64> = (0..k)
                .map(|t| (sr_digamma(gamma[t]) - sr_digamma(gs) + elog_phi[t][*v]).exp())
                .collect();
            let z: f64 = un.iter().sum();
            psi[j] = un.iter().map(|u| u / z).collect();
        }
        let next: Vec<f64> = (0..k)
            .map(|t| alpha + doc.iter().enumerate().map(|(j, (_, c))| c * psi[j][t]).sum::<f64>())
            .collect();
        let delta = next.iter().zip(&gamma).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        gamma = next;
        if delta < 1e-14 {
            break;
        }
    }
    (gamma, psi)
}

/// ELBO with every expectation written out separately.
pub fn elbo_oracle(
    docs: &[Vec<(usize, f64)>],
    gammas: &[Vec<f64>],
    psis: &[Vec<Vec<f64>>],
    lambda: &[Vec<f64>],
    alpha: f64,
    beta: f64,
) -> f64 {
    let k = lambda.len();
    let v = lambda[0].len();
    let elog_dir = |p: &[f64]| -> Vec<f64> {
        let s: f64 = p.iter().sum();
        p.iter().map(|x| sr_digamma(*x) - sr_digamma(s)).collect()
    };
    let log_dir_norm = |p: &[f64]| -> f64 {
        sr_ln_gamma(p.iter().sum()) - p.iter().map(|x| sr_ln_gamma(*x)).sum::<f64>()
    };
    let elog_phi: Vec<Vec<f64>> = lambda.iter().map(|r| elog_dir(r)).collect();

    let mut e_log_p_w = 0.0;
    let mut e_log_p_z = 0.0;
    let mut e_log_q_z = 0.0;
    let mut e_log_p_theta = 0.0;
    let mut e_log_q_theta = 0.0;
    for (m, doc) in docs.iter().enumerate() {
        let elog_theta = elog_dir(&gammas[m]);
        for (j, (term, n)) in doc.iter().enumerate() {
            for t in 0..k {
                let p = psis[m][j][t];
                e_log_p_w += n * p * elog_phi[t][*term];
                e_log_p_z += n * p * elog_theta[t];
                if p > 0.0 {
                    e_log_q_z += n * p * p.ln();
                }
            }
        }
        e_log_p_theta += log_dir_norm(&vec![alpha; k])
            + elog_theta.iter().map(|e| (alpha - 1.0) * e).sum::<f64>();
        e_log_q_theta += log_dir_norm(&gammas[m])
            + gammas[m]
                .iter()
                .zip(&elog_theta)
                .map(|(g, e)| (g - 1.0) * e)
                .sum::<f64>();
    }
    let mut e_log_p_phi = 0.0;
    let mut e_log_q_phi = 0.0;
    for t in 0..k {
        e_log_p_phi += log_dir_norm(&vec![beta; v])
            + elog_phi[t].iter().map(|e| (beta - 1.0) * e).sum::<f64>();
        e_log_q_phi += log_dir_norm(&lambda[t])
            + lambda[t]
                .iter()
                .zip(&elog_phi[t])
                .map(|(l, e)| (l - 1.0) * e)
                .sum::<f64>();
    }
    e_log_p_w + e_log_p_z - e_log_q_z + e_log_p_theta - e_log_q_theta + e_log_p_phi - e_log_q_phi
}

