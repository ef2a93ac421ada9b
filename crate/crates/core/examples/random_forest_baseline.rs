//! Bag-of-words random forest on generated tweets, then cross-validated
//! choice of the resampling parameter p_u on an imbalanced variant.

use offlang::baseline::{self, ForestConfig};
use offlang::corpus::{self, Task, Vocabulary};
use offlang::eval;
use offlang::synthetic::{self, SyntheticConfig};

fn main() -> offlang::Result<()> {
    let records = synthetic::generate(&SyntheticConfig { n: 1200, seed: 5, ..Default::default() })?;
    let docs: Vec<Vec<String>> = records.iter().map(|r| corpus::tokenize(&r.clean_text)).collect();
    let y: Vec<usize> = records.iter().map(|r| r.class_for(Task::A).unwrap_or(0)).collect();
    let vocab = Vocabulary::build(&docs[..900]);
    let x = baseline::bow_matrix(&docs, &vocab);
    let train: Vec<usize> = (0..900).collect();
    let test: Vec<usize> = (900..1200).collect();

    let forest = baseline::train_forest(&x.select(&train), &y[..900], &ForestConfig { n_trees: 50, seed: 5, ..Default::default() })?;
    let pred = baseline::predict_forest(&forest, &x.select(&test))?;
    let report = eval::evaluate(&y[900..], &pred, 2)?;
    print!("{}", report.to_table(Task::A.class_names()));

    let skewed = synthetic::generate(&SyntheticConfig { n: 600, offensive_fraction: 0.15, seed: 6, ..Default::default() })?;
    let docs: Vec<Vec<String>> = skewed.iter().map(|r| corpus::tokenize(&r.clean_text)).collect();
    let y: Vec<usize> = skewed.iter().map(|r| r.class_for(Task::A).unwrap_or(0)).collect();
    let x = baseline::bow_matrix(&docs, &Vocabulary::build(&docs));
    let sel = baseline::cv_select_pu(&x, &y, &[0.0, 0.5, 1.0], 3, &ForestConfig { n_trees: 25, seed: 6, ..Default::default() })?;
    sel.write_csv(std::io::stdout())?;
    println!("best p_u = {}", sel.best_p_u);
    Ok(())
}
