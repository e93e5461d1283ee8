//! Collapsed Gibbs sampling on a planted-topic corpus, with the z-change
//! fraction per sweep and a held-out perplexity checkpoint every 10 sweeps.
//!
//! cargo run --release --example gibbs_sampler

use lda_trio::corpus::{generate_synthetic, split_held_out, SyntheticSpec};
use lda_trio::eval::PerplexityMonitor;
use lda_trio::gibbs::{self, GibbsConfig};
use lda_trio::math::Rng;
use lda_trio::vb::EStepConfig;

fn main() -> lda_trio::Result<()> {
    let spec = SyntheticSpec {
        topics: 8,
        terms: 300,
        documents: 600,
        doc_len: 80,
        alpha: 0.1,
        beta: 0.05,
    };
    let (corpus, _) = generate_synthetic(&spec, &mut Rng::new(1))?;
    let (train, held) = split_held_out(&corpus, 50, &mut Rng::new(1))?;
    let config = GibbsConfig {
        topics: 8,
        max_sweeps: 60,
        z_change_threshold: 0.05,
        seed: 7,
        ..GibbsConfig::default()
    };
    let monitor = PerplexityMonitor {
        held: &held,
        every: 10,
        alpha: config.alpha,
        e_step: EStepConfig::default(),
        threads: 1,
    };
    let model = gibbs::train_monitored(&train, &config, Some(&monitor))?;
    println!("sweep  z-change  perplexity");
    for r in &model.report.records {
        let p = r.perplexity.map(|p| format!("{p:.2}")).unwrap_or_default();
        println!("{:>5}  {:>8.4}  {p}", r.index, r.statistic);
    }
    println!(
        "converged: {} after {} sweeps ({:.2}s)",
        model.report.converged,
        model.report.records.len(),
        model.report.wall_seconds()
    );
    model.state.check_consistency(&train)?;
    let theta0: Vec<String> = model.theta.row(0).iter().map(|x| format!("{x:.2}")).collect();
    println!("θ of document 0: [{}]", theta0.join(", "));
    Ok(())
}
