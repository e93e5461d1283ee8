//! Writes a corpus sampled from planted topics as `vocab.txt`, `corpus.bow`
//! and `truth.json`, ready for the `lda-trio` commands.
//!
//! cargo run --release --example synthetic_corpus -- <out-dir> [docs] [topics] [terms] [doc-len] [seed]

use std::fs;
use std::path::PathBuf;

use lda_trio::corpus::{generate_synthetic, write_bow, write_vocabulary, SyntheticSpec};
use lda_trio::math::Rng;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synthetic".into()));
    let spec = SyntheticSpec {
        documents: arg(2, 1000),
        topics: arg(3, 10),
        terms: arg(4, 500),
        doc_len: arg(5, 60),
        alpha: 0.1,
        beta: 0.05,
    };
    let seed: u64 = arg(6, 0);
    let (corpus, truth) = generate_synthetic(&spec, &mut Rng::new(seed))?;
    fs::create_dir_all(&out)?;
    write_vocabulary(corpus.vocabulary(), out.join("vocab.txt"))?;
    write_bow(&corpus, out.join("corpus.bow"))?;
    let json = serde_json::json!({ "phi": truth.phi, "theta": truth.theta });
    fs::write(out.join("truth.json"), serde_json::to_string(&json)?)?;
    println!(
        "{} documents, {} tokens, {} terms, {} topics -> {}",
        corpus.len(),
        corpus.total_tokens(),
        corpus.num_terms(),
        spec.topics,
        out.display()
    );
    Ok(())
}
