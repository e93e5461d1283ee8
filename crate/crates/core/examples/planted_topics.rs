//! Generates a corpus from known topics, fits it with all three algorithms
//! and reports how well each recovers the planted topics.
//!
//! cargo run --release --example planted_topics -- [seeds]

use std::time::Instant;

use lda_trio::corpus::{generate_synthetic, SyntheticSpec};
use lda_trio::eval::align_topics;
use lda_trio::gibbs::{self, GibbsConfig};
use lda_trio::math::Rng;
use lda_trio::matrix::Matrix;
use lda_trio::online_vb::{self, OnlineConfig};
use lda_trio::vb::{self, VbConfig};

fn main() -> lda_trio::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let spec = SyntheticSpec {
        topics: 5,
        terms: 50,
        documents: 200,
        doc_len: 100,
        alpha: 0.1,
        beta: 0.05,
    };
    println!("seed  gibbs   vb      online-vb");
    for seed in 0..seeds {
        let (corpus, truth) = generate_synthetic(&spec, &mut Rng::new(seed))?;
        let truth = Matrix::from_rows(&truth.phi)?;

        let t = Instant::now();
        let g = gibbs::train(
            &corpus,
            &GibbsConfig {
                topics: 5,
                max_sweeps: 200,
                z_change_threshold: 0.0,
                seed,
                ..GibbsConfig::default()
            },
        )?;
        let g_time = t.elapsed();
        let v = vb::train(
            &corpus,
            &VbConfig {
                topics: 5,
                seed,
                ..VbConfig::default()
            },
        )?;
        let o = online_vb::train(
            &corpus,
            &OnlineConfig {
                topics: 5,
                batch_size: 20,
                tau0: 64.0,
                seed,
                ..OnlineConfig::default()
            },
        )?;
        let score = |m: &Matrix| align_topics(m, &truth).map(|a| a.mean_cosine);
        println!(
            "{seed:<5} {:.4}  {:.4}  {:.4}   (gibbs {:.2?}, vb {} iterations)",
            score(&g.phi)?,
            score(&v.topics.mean_topics())?,
            score(&o.topics.mean_topics())?,
            g_time,
            v.report.records.len(),
        );
    }
    Ok(())
}
