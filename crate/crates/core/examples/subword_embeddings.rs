//! Train CBOW subword embeddings on generated tweets and query neighbours,
//! including a word never seen in training.

use offlang::corpus;
use offlang::embeddings::{self, CbowTrainParams, NgramConfig};
use offlang::synthetic::{self, SyntheticConfig};

fn main() -> offlang::Result<()> {
    let records = synthetic::generate(&SyntheticConfig { n: 1500, seed: 1, ..Default::default() })?;
    let docs: Vec<Vec<String>> = records.iter().map(|r| corpus::tokenize(&r.clean_text)).collect();
    let ngrams = NgramConfig { buckets: 20_000, ..NgramConfig::default() };
    println!("n-grams of \"where\": {} buckets", embeddings::extract_ngrams("where", &ngrams).len());

    let params = CbowTrainParams { dim: 32, epochs: 5, seed: 1, ..Default::default() };
    let model = embeddings::train_cbow(&docs, ngrams, &params)?;
    println!("{} words, {} buckets, d = {}", model.words.len(), model.bucket_input.rows, model.dim);

    let probe = |a: &str, b: &str| -> offlang::Result<()> {
        let s = embeddings::cosine(&model.word_vector(a)?, &model.word_vector(b)?);
        println!("cos({a}, {b}) = {s:.3}");
        Ok(())
    };
    // Unseen inflections share most n-grams with their stem.
    probe("idiots", "idiot")?;
    probe("garbages", "garbage")?;
    probe("idiots", "company")?;
    Ok(())
}
