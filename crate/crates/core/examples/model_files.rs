//! Saves a trained model as TSV, reads it back and lists each topic's
//! heaviest terms, the way `train` writes `topics.json`.
//!
//! cargo run --release --example model_files

use lda_trio::corpus::{generate_synthetic, SyntheticSpec, Vocabulary};
use lda_trio::math::Rng;
use lda_trio::model_file::{top_words, ModelKind, TopicModel};
use lda_trio::vb::{self, VbConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        topics: 4,
        terms: 26,
        documents: 300,
        doc_len: 50,
        alpha: 0.1,
        beta: 0.05,
    };
    let (generated, _) = generate_synthetic(&spec, &mut Rng::new(6))?;
    let letters = Vocabulary::from_terms((b'a'..=b'z').map(|c| (c as char).to_string()))?;
    let corpus = lda_trio::corpus::Corpus::new(letters.clone(), generated.documents().to_vec())?;

    let fit = vb::train(&corpus, &VbConfig { topics: 4, seed: 5, ..VbConfig::default() })?;
    let model = TopicModel {
        kind: ModelKind::Lambda,
        matrix: fit.topics.into_matrix(),
    };
    let dir = std::env::temp_dir().join("lda-trio-model-files");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.lambda.tsv");
    model.save(&path)?;
    let back = TopicModel::load(&path)?;
    assert_eq!(back, model);
    println!("{} round-trips exactly", path.display());

    for topic in top_words(&back, &letters, 5)? {
        let words: Vec<String> = topic.words.iter().map(|w| format!("{}:{:.3}", w.term, w.weight)).collect();
        println!("topic {}: {}", topic.topic, words.join(" "));
    }
    println!("{}", serde_json::to_string(&top_words(&back, &letters, 2)?)?);
    Ok(())
}
