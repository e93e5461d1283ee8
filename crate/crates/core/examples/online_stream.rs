//! Online variational Bayes driven batch by batch, as for a document stream
//! whose size is declared up front. Shows the step size ρ and the held-out
//! perplexity as documents arrive.
//!
//! cargo run --release --example online_stream

use lda_trio::corpus::{generate_synthetic, split_held_out, SyntheticSpec};
use lda_trio::eval::held_out_perplexity;
use lda_trio::math::Rng;
use lda_trio::online_vb::{self, OnlineConfig, OnlineState};

fn main() -> lda_trio::Result<()> {
    let spec = SyntheticSpec {
        topics: 10,
        terms: 1000,
        documents: 5100,
        doc_len: 60,
        alpha: 0.1,
        beta: 0.05,
    };
    let (corpus, _) = generate_synthetic(&spec, &mut Rng::new(4))?;
    let (stream, held) = split_held_out(&corpus, 100, &mut Rng::new(4))?;
    let config = OnlineConfig {
        topics: 10,
        batch_size: 100,
        tau0: 64.0,
        corpus_size: Some(stream.len()),
        seed: 1,
        ..OnlineConfig::default()
    };
    let mut state = OnlineState::init(stream.num_terms(), &config)?;
    let mut seen = 0u64;
    println!("docs   rho      perplexity");
    for batch in stream.documents().chunks(config.batch_size) {
        let out = online_vb::update(&mut state, batch, seen, stream.len(), &config)?;
        seen += batch.len() as u64;
        if state.updates % 10 == 0 {
            let p = held_out_perplexity(&held, &state.topics, config.alpha, &config.e_step)?;
            println!("{seen:>5}  {:.5}  {:.2}", out.rho, p.perplexity);
        }
    }
    println!("{} updates", state.updates);
    Ok(())
}
