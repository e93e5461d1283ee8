//! Trains all three algorithms on the same documents and compares their
//! held-out perplexity. The Gibbs point estimate is scored through ln φ.
//!
//! cargo run --release --example held_out_eval

use lda_trio::corpus::{generate_synthetic, split_held_out, SyntheticSpec};
use lda_trio::eval::held_out_perplexity_with;
use lda_trio::gibbs::{self, GibbsConfig};
use lda_trio::math::Rng;
use lda_trio::online_vb::{self, OnlineConfig};
use lda_trio::vb::{self, EStepConfig, ExpectedLogTopics, VbConfig};

fn main() -> lda_trio::Result<()> {
    let spec = SyntheticSpec {
        topics: 8,
        terms: 2000,
        documents: 2100,
        doc_len: 60,
        alpha: 0.1,
        beta: 0.05,
    };
    let (corpus, _) = generate_synthetic(&spec, &mut Rng::new(9))?;
    let (train, held) = split_held_out(&corpus, 100, &mut Rng::new(9))?;
    let e_step = EStepConfig::default();
    let k = spec.topics;

    let g = gibbs::train(&train, &GibbsConfig { topics: k, ..GibbsConfig::default() })?;
    let v = vb::train(&train, &VbConfig { topics: k, ..VbConfig::default() })?;
    let o = online_vb::train(&train, &OnlineConfig { topics: k, ..OnlineConfig::default() })?;

    let scored = [
        ("gibbs", ExpectedLogTopics::from_point_estimate(&g.phi)?, g.report.wall_seconds()),
        ("vb", v.topics.expected_log(), v.report.wall_seconds()),
        ("online-vb", o.topics.expected_log(), o.report.wall_seconds()),
    ];
    println!("algorithm  seconds  perplexity");
    for (name, elog, secs) in &scored {
        let r = held_out_perplexity_with(&held, elog, 0.01, &e_step, 1)?;
        println!("{name:<9}  {secs:>7.2}  {:.2}", r.perplexity);
    }
    println!("vocabulary size {} is the perplexity of a uniform model", spec.terms);
    Ok(())
}
