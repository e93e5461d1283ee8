//! Held-out perplexity and training time as the training set grows, the
//! same cells the `benchmark` command writes, computed in-process.
//!
//! cargo run --release --example learning_curve

use clap::Parser;
use lda_trio::cli::{benchmark_cell, Cli, Command, RunConfig};
use lda_trio::corpus::{generate_synthetic, split_held_out, SyntheticSpec};
use lda_trio::math::Rng;
use lda_trio::report::Algorithm;

fn main() -> lda_trio::Result<()> {
    let spec = SyntheticSpec {
        topics: 10,
        terms: 3000,
        documents: 4100,
        doc_len: 60,
        alpha: 0.1,
        beta: 0.05,
    };
    let (corpus, _) = generate_synthetic(&spec, &mut Rng::new(4))?;
    let (pool, held) = split_held_out(&corpus, 100, &mut Rng::new(1))?;

    // flag defaults, as the command line would resolve them
    let cli = Cli::parse_from(["lda-trio", "benchmark", "--bow", "-", "--vocab", "-", "--topics", "10"]);
    let Command::Benchmark(args) = cli.command else { unreachable!() };

    println!("algorithm,documents,wall_seconds,perplexity");
    for documents in [500, 1000, 2000, 4000] {
        for algorithm in Algorithm::ALL {
            let config = RunConfig::from_args(algorithm, &args.trainer, 1);
            let row = benchmark_cell(&pool, &held, documents, &config, 1);
            match row.error {
                Some(e) => println!("{algorithm},{documents},,{e}"),
                None => println!(
                    "{algorithm},{documents},{:.3},{:.2}",
                    row.wall_seconds,
                    row.perplexity.unwrap_or(f64::NAN)
                ),
            }
        }
    }
    Ok(())
}
