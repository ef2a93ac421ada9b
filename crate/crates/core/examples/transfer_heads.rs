//! Train a task-A model on generated tweets, then move its trunk under
//! fresh heads for task B (targeted or not) and task C (target type).

use offlang::cli::{self, RunConfig};
use offlang::corpus::Task;
use offlang::model;
use offlang::synthetic::{self, SyntheticConfig};

fn small_config(dir: &std::path::Path, task: Task) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.train_path = Some(dir.join("tweets.tsv"));
    cfg.data.task = task;
    cfg.data.seed = 11;
    cfg.output.dir = dir.join(format!("task_{task}"));
    cfg.embeddings.dim = 32;
    cfg.embeddings.buckets = 20_000;
    cfg.model.seq_len = 24;
    cfg.model.lstm_hidden = 32;
    cfg.model.conv_filters = 32;
    cfg.model.max_epochs = 6;
    cfg
}

fn main() -> offlang::Result<()> {
    let dir = std::env::temp_dir().join("offlang_transfer");
    std::fs::create_dir_all(&dir)?;
    let records = synthetic::generate(&SyntheticConfig { n: 3000, offensive_fraction: 0.6, seed: 11, ..Default::default() })?;
    synthetic::write_olid(&records, std::fs::File::create(dir.join("tweets.tsv"))?)?;

    let a = cli::run_train(&small_config(&dir, Task::A))?;
    println!("task A macro-F1 {:.3}", a.val_report.macro_f1);

    let (c, _) = model::transfer(&a.outcome.params, &a.arch, Task::C, 0)?;
    println!("task C head: {} output-layer parameters; trunk shared: {}", c.dense_out.num_params(), c.trunk() == a.outcome.params.trunk());

    for task in [Task::B, Task::C] {
        let r = cli::run_transfer(&small_config(&dir, task), &a.model_path, None)?;
        println!("task {task} after transfer: macro-F1 {:.3} (best epoch {})", r.val_report.macro_f1, r.outcome.best_epoch);
        print!("{}", r.val_report.to_table(task.class_names()));
    }
    Ok(())
}
