//! Batch variational Bayes: the ELBO after every outer iteration and the
//! fitted per-document Dirichlet parameters.
//!
//! cargo run --release --example batch_vb

use lda_trio::corpus::{generate_synthetic, SyntheticSpec};
use lda_trio::math::Rng;
use lda_trio::vb::{self, VbConfig};

fn main() -> lda_trio::Result<()> {
    let spec = SyntheticSpec {
        topics: 6,
        terms: 200,
        documents: 500,
        doc_len: 60,
        alpha: 0.1,
        beta: 0.05,
    };
    let (corpus, _) = generate_synthetic(&spec, &mut Rng::new(2))?;
    let config = VbConfig {
        topics: 6,
        seed: 3,
        threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        ..VbConfig::default()
    };
    let model = vb::train(&corpus, &config)?;
    println!("iter  ELBO");
    for r in &model.report.records {
        println!("{:>4}  {:.3}", r.index, r.statistic);
    }
    println!("converged: {}", model.report.converged);
    for (m, d) in model.doc_topics.iter().take(3).enumerate() {
        let g: Vec<String> = d.gamma.iter().map(|x| format!("{x:.1}")).collect();
        println!("γ of document {m}: [{}]", g.join(", "));
    }
    Ok(())
}
