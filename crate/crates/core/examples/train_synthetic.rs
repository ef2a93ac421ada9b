//! End-to-end run on generated tweets: clean, build a vocabulary, train CBOW
//! subword embeddings, then train the BiLSTM/conv classifier with early
//! stopping.
//!
//! cargo run --release --example train_synthetic

use std::time::Instant;

use offlang::cli::{self, EmbeddingKind, RunConfig};
use offlang::corpus::Task;
use offlang::synthetic::{self, SyntheticConfig};

fn main() -> offlang::Result<()> {
    let dir = std::env::temp_dir().join("offlang_synthetic");
    std::fs::create_dir_all(&dir)?;
    let data = dir.join("tweets.tsv");
    let records = synthetic::generate(&SyntheticConfig { n: 2000, seed: 7, ..Default::default() })?;
    synthetic::write_olid(&records, std::fs::File::create(&data)?)?;

    let mut cfg = RunConfig::default();
    cfg.data.train_path = Some(data);
    cfg.data.task = Task::A;
    cfg.data.seed = 7;
    cfg.output.dir = dir.join("run");
    cfg.embeddings.source = EmbeddingKind::Cbow;
    cfg.embeddings.dim = 32;
    cfg.embeddings.buckets = 20_000;
    cfg.model.seq_len = 24;
    cfg.model.lstm_hidden = 32;
    cfg.model.conv_filters = 32;
    cfg.model.max_epochs = 5;

    let start = Instant::now();
    let run = cli::run_train(&cfg)?;
    for e in &run.outcome.history {
        println!(
            "epoch {}  loss {:.4}  val acc {:.4}  val macro-F1 {:.4}",
            e.epoch, e.train_loss, e.val_accuracy, e.val_macro_f1
        );
    }
    println!("best epoch {}", run.outcome.best_epoch);
    print!("{}", run.val_report.to_table(Task::A.class_names()));
    println!("elapsed {:.1?}; outputs in {}", start.elapsed(), cfg.output.dir.display());
    Ok(())
}
