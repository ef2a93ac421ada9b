//! Command-line driver: a JSON run configuration, flag overrides, and one
//! function per subcommand. Every command writes its outputs and a
//! `run.json` replay record under the output directory.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baseline::{self, ForestConfig};
use crate::corpus::{self, EncodedExample, Task, TweetRecord, Vocabulary};
use crate::embeddings::{self, CbowTrainParams, EmbeddingSource, NgramConfig};
use crate::error::{Error, Result};
use crate::eval::{self, MetricsReport};
use crate::hpo::{self, BoConfig, BoResult, SearchSpace};
use crate::model::{self, LossKind, ModelArch, TrainConfig, TrainOutcome};
use crate::nn::gradcheck::{self, CheckResult};
use crate::nn::Matrix;
use crate::resample::{self, ClassCounts, ResamplePlan};
use crate::rng::derive_seed;

pub const MODEL_FILE: &str = "model.oflg";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub task: Task,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { train_path: None, test_path: None, task: Task::A, val_fraction: 0.2, seed: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleSection {
    /// `None` picks the per-task default from [`default_p_u`].
    pub p_u: Option<f64>,
}

/// Cross-validated `p_u` for each task on the full OLID training set.
pub fn default_p_u(task: Task) -> f64 {
    match task {
        Task::A => 0.3,
        Task::B => 0.2,
        Task::C => 0.7,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Cbow,
    ExternalFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingsSection {
    pub source: EmbeddingKind,
    /// Text vectors for `external_file`.
    pub path: Option<PathBuf>,
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub buckets: usize,
}

impl Default for EmbeddingsSection {
    fn default() -> Self {
        let p = CbowTrainParams::default();
        let n = NgramConfig::default();
        EmbeddingsSection {
            source: EmbeddingKind::Cbow,
            path: None,
            dim: p.dim,
            window: p.window,
            negatives: p.negatives,
            epochs: p.epochs,
            learning_rate: p.learning_rate,
            subsample: p.subsample,
            n_min: n.n_min,
            n_max: n.n_max,
            buckets: n.buckets,
        }
    }
}

impl EmbeddingsSection {
    pub fn ngrams(&self) -> NgramConfig {
        NgramConfig { n_min: self.n_min, n_max: self.n_max, buckets: self.buckets }
    }

    pub fn cbow(&self, seed: u64) -> CbowTrainParams {
        CbowTrainParams {
            dim: self.dim,
            window: self.window,
            negatives: self.negatives,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            subsample: self.subsample,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub seq_len: usize,
    pub lstm_hidden: usize,
    pub conv_width: usize,
    pub conv_filters: usize,
    pub ffnn_hidden: usize,
    pub use_user_count: bool,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub loss: LossKind,
    pub freeze_trunk: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let a = ModelArch::default();
        let t = TrainConfig::default();
        ModelSection {
            seq_len: a.seq_len,
            lstm_hidden: a.lstm_hidden,
            conv_width: a.conv_width,
            conv_filters: a.conv_filters,
            ffnn_hidden: a.ffnn_hidden,
            use_user_count: a.use_user_count,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            dropout: t.dropout,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            loss: t.loss,
            freeze_trunk: t.freeze_trunk,
        }
    }
}

impl ModelSection {
    pub fn arch(&self, task: Task, vocab_size: usize, embed_dim: usize) -> ModelArch {
        ModelArch {
            seq_len: self.seq_len,
            vocab_size,
            embed_dim,
            lstm_hidden: self.lstm_hidden,
            conv_width: self.conv_width,
            conv_filters: self.conv_filters,
            ffnn_hidden: self.ffnn_hidden,
            output_units: task.output_units(),
            use_user_count: self.use_user_count,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            dropout: self.dropout,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            loss: self.loss,
            freeze_trunk: self.freeze_trunk,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

/// Everything a run needs; missing sections and keys take their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub resample: ResampleSection,
    pub embeddings: EmbeddingsSection,
    pub model: ModelSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let vf = self.data.val_fraction;
        if !(vf > 0.0 && vf < 1.0) {
            return Err(Error::Config(format!("data.val_fraction = {vf} must lie in (0, 1)")));
        }
        if let Some(p) = self.resample.p_u {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("resample.p_u = {p} must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn p_u(&self) -> f64 {
        self.resample.p_u.unwrap_or_else(|| default_p_u(self.data.task))
    }

    pub fn train_path(&self) -> Result<&Path> {
        require(self.data.train_path.as_deref(), "data.train_path")
    }
}

fn require<'a, T: ?Sized>(v: Option<&'a T>, key: &str) -> Result<&'a T> {
    v.ok_or_else(|| Error::Config(format!("missing config key `{key}`")))
}

fn file_error(path: &Path, source: std::io::Error) -> Error {
    Error::File { path: path.display().to_string(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| file_error(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| file_error(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<TweetRecord>> {
    corpus::parse_olid(open(path)?)
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::read(open(path)?)
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.output.dir.as_path();
    fs::create_dir_all(dir).map_err(|e| file_error(dir, e))?;
    Ok(dir)
}

/// Write `run.json`: command, resolved configuration and crate version.
pub fn write_run_record(cfg: &RunConfig, command: &str, threads: usize, deterministic: bool) -> Result<()> {
    #[derive(Serialize)]
    struct RunRecord<'a> {
        command: &'a str,
        version: &'a str,
        seed: u64,
        threads: usize,
        deterministic: bool,
        config: &'a RunConfig,
    }
    let record = RunRecord {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.data.seed,
        threads,
        deterministic,
        config: cfg,
    };
    let path = out_dir(cfg)?.join("run.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &record)?;
    writeln!(w)?;
    Ok(())
}

fn token_lists(records: &[TweetRecord]) -> Vec<Vec<String>> {
    records.iter().map(|r| corpus::tokenize(&r.clean_text)).collect()
}

/// Data ready for the network: vocabulary, initial embeddings, the
/// rebalanced training set and the untouched validation set.
pub struct Prepared {
    pub vocab: Vocabulary,
    pub embedding: Matrix,
    pub train: Vec<EncodedExample>,
    pub val: Vec<EncodedExample>,
    pub arch: ModelArch,
}

/// Split labelled records into train/validation (stratified), rebalance the
/// training portion and encode both.
fn split_and_encode(
    cfg: &RunConfig,
    records: &[TweetRecord],
    vocab: &Vocabulary,
) -> Result<(Vec<TweetRecord>, Vec<EncodedExample>, Vec<EncodedExample>)> {
    let task = cfg.data.task;
    let records = corpus::filter_task(records, task);
    if records.is_empty() {
        return Err(Error::Empty(format!("no records labelled for task {task}")));
    }
    let labels: Vec<usize> = records.iter().filter_map(|r| r.class_for(task)).collect();
    let (train_idx, val_idx) = corpus::stratified_split(&labels, cfg.data.val_fraction, derive_seed(cfg.data.seed, 0))?;
    let train: Vec<TweetRecord> = train_idx.iter().map(|&i| records[i].clone()).collect();
    let val: Vec<TweetRecord> = val_idx.iter().map(|&i| records[i].clone()).collect();
    let balanced = resample::rebalance(&train, |r| r.class_for(task).unwrap_or(0), cfg.p_u(), derive_seed(cfg.data.seed, 1))?;
    let len = cfg.model.seq_len;
    Ok((
        train,
        corpus::encode_records(&balanced, task, vocab, len),
        corpus::encode_records(&val, task, vocab, len),
    ))
}

fn embedding_matrix(cfg: &RunConfig, vocab: &Vocabulary, train_tokens: &[Vec<String>]) -> Result<Matrix> {
    match cfg.embeddings.source {
        EmbeddingKind::Cbow => {
            let params = cfg.embeddings.cbow(derive_seed(cfg.data.seed, 2));
            let ft = embeddings::train_cbow(train_tokens, cfg.embeddings.ngrams(), &params)?;
            embeddings::build_embedding_matrix(vocab, EmbeddingSource::FastText(&ft))
        }
        EmbeddingKind::ExternalFile => {
            let path = require(cfg.embeddings.path.as_deref(), "embeddings.path")?;
            let vectors = embeddings::load_text_embeddings(open(path)?)?;
            embeddings::build_embedding_matrix(vocab, EmbeddingSource::Vectors(&vectors))
        }
    }
}

/// Read, split, rebalance and encode the training file; build the vocabulary
/// from the training portion and the initial embedding matrix.
pub fn prepare(cfg: &RunConfig, records: &[TweetRecord]) -> Result<Prepared> {
    cfg.validate()?;
    let task = cfg.data.task;
    let labelled = corpus::filter_task(records, task);
    let labels: Vec<usize> = labelled.iter().filter_map(|r| r.class_for(task)).collect();
    let (train_idx, _) = corpus::stratified_split(&labels, cfg.data.val_fraction, derive_seed(cfg.data.seed, 0))?;
    let train_tokens: Vec<Vec<String>> = train_idx.iter().map(|&i| corpus::tokenize(&labelled[i].clean_text)).collect();
    let vocab = Vocabulary::build(&train_tokens);
    let embedding = embedding_matrix(cfg, &vocab, &train_tokens)?;
    let (_, train, val) = split_and_encode(cfg, records, &vocab)?;
    let arch = cfg.model.arch(task, vocab.len(), embedding.cols);
    Ok(Prepared { vocab, embedding, train, val, arch })
}

/// Build and train a model on prepared data.
pub fn fit(cfg: &RunConfig, prepared: &Prepared, train_cfg: &TrainConfig) -> Result<TrainOutcome> {
    let params = model::build(&prepared.arch, prepared.embedding.clone(), derive_seed(cfg.data.seed, 3))?;
    model::train(params, &prepared.arch, &prepared.train, &prepared.val, train_cfg)
}

pub struct TrainRun {
    pub outcome: TrainOutcome,
    pub arch: ModelArch,
    pub vocab: Vocabulary,
    pub val_report: MetricsReport,
    pub model_path: PathBuf,
}

fn write_training_outputs(
    cfg: &RunConfig,
    outcome: &TrainOutcome,
    arch: &ModelArch,
    vocab: &Vocabulary,
    val: &[EncodedExample],
) -> Result<(MetricsReport, PathBuf)> {
    let dir = out_dir(cfg)?;
    let model_path = dir.join(MODEL_FILE);
    let mut w = create(&model_path)?;
    model::save(&outcome.params, arch, &vocab.content_hash(), &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join(VOCAB_FILE))?;
    vocab.write(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join(HISTORY_FILE))?;
    model::write_history_csv(&outcome.history, &mut w)?;
    w.flush()?;

    let k = cfg.data.task.num_classes();
    let truth: Vec<usize> = val.iter().map(|e| e.label).collect();
    let preds = model::predict(&outcome.params, arch, val)?;
    let report = eval::evaluate(&truth, &preds, k)?;
    let mut w = create(&dir.join("val_metrics.csv"))?;
    report.write_csv(cfg.data.task.class_names(), &mut w)?;
    w.flush()?;
    Ok((report, model_path))
}

/// `train`: split, rebalance, embed, train, and write the model, vocabulary,
/// history and validation metrics.
pub fn run_train(cfg: &RunConfig) -> Result<TrainRun> {
    let records = read_records(cfg.train_path()?)?;
    let prepared = prepare(cfg, &records)?;
    log::info!(
        "task {}: {} training examples after rebalancing, {} validation, vocabulary {}",
        cfg.data.task,
        prepared.train.len(),
        prepared.val.len(),
        prepared.vocab.len()
    );
    let outcome = fit(cfg, &prepared, &cfg.model.train_config(derive_seed(cfg.data.seed, 4)))?;
    let (val_report, model_path) = write_training_outputs(cfg, &outcome, &prepared.arch, &prepared.vocab, &prepared.val)?;
    Ok(TrainRun { outcome, arch: prepared.arch, vocab: prepared.vocab, val_report, model_path })
}

fn vocab_path(model_path: &Path, vocab: Option<&Path>) -> PathBuf {
    vocab.map_or_else(|| model_path.with_file_name(VOCAB_FILE), Path::to_path_buf)
}

/// Load a model file and the vocabulary it was trained with.
pub fn load_model(model_path: &Path, vocab: Option<&Path>) -> Result<(model::LoadedModel, Vocabulary)> {
    let vocab = read_vocab(&vocab_path(model_path, vocab))?;
    let m = model::load_checked(open(model_path)?, &vocab)?;
    Ok((m, vocab))
}

/// `transfer`: move a task-A trunk under a fresh head for task B or C, then
/// train on that task.
pub fn run_transfer(cfg: &RunConfig, source: &Path, vocab: Option<&Path>) -> Result<TrainRun> {
    cfg.validate()?;
    let (loaded, vocab) = load_model(source, vocab)?;
    let (params, arch) = model::transfer(&loaded.params, &loaded.arch, cfg.data.task, derive_seed(cfg.data.seed, 3))?;
    let mut local = cfg.clone();
    local.model.seq_len = arch.seq_len;
    let records = read_records(cfg.train_path()?)?;
    let (_, train, val) = split_and_encode(&local, &records, &vocab)?;
    let outcome = model::train(params, &arch, &train, &val, &cfg.model.train_config(derive_seed(cfg.data.seed, 4)))?;
    let (val_report, model_path) = write_training_outputs(cfg, &outcome, &arch, &vocab, &val)?;
    Ok(TrainRun { outcome, arch, vocab, val_report, model_path })
}

fn check_task(arch: &ModelArch, task: Task) -> Result<()> {
    if arch.output_units != task.output_units() {
        return Err(Error::Config(format!(
            "model has {} output units but task {task} needs {}",
            arch.output_units,
            task.output_units()
        )));
    }
    Ok(())
}

/// `predict`: label every tweet in `input`; writes `predictions.csv` (`id,label`).
pub fn run_predict(cfg: &RunConfig, model_path: &Path, vocab: Option<&Path>, input: &Path) -> Result<Vec<(String, &'static str)>> {
    let (m, vocab) = load_model(model_path, vocab)?;
    check_task(&m.arch, cfg.data.task)?;
    let records = read_records(input)?;
    let examples = corpus::encode_unlabeled(&records, &vocab, m.arch.seq_len);
    let preds = model::predict(&m.params, &m.arch, &examples)?;
    let names = cfg.data.task.class_names();
    let out: Vec<(String, &'static str)> = records.iter().zip(preds).map(|(r, p)| (r.id.clone(), names[p])).collect();
    let mut w = create(&out_dir(cfg)?.join("predictions.csv"))?;
    writeln!(w, "id,label")?;
    for (id, label) in &out {
        writeln!(w, "{id},{label}")?;
    }
    w.flush()?;
    Ok(out)
}

/// `evaluate`: score a model on a labelled file; writes `metrics.csv`.
pub fn run_evaluate(cfg: &RunConfig, model_path: &Path, vocab: Option<&Path>, input: &Path) -> Result<MetricsReport> {
    let (m, vocab) = load_model(model_path, vocab)?;
    let task = cfg.data.task;
    check_task(&m.arch, task)?;
    let examples = corpus::encode_records(&read_records(input)?, task, &vocab, m.arch.seq_len);
    if examples.is_empty() {
        return Err(Error::Empty(format!("no records labelled for task {task}")));
    }
    let truth: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let report = eval::evaluate(&truth, &model::predict(&m.params, &m.arch, &examples)?, task.num_classes())?;
    let mut w = create(&out_dir(cfg)?.join("metrics.csv"))?;
    report.write_csv(task.class_names(), &mut w)?;
    w.flush()?;
    Ok(report)
}

/// `preprocess`: cleaned TSV and full-corpus vocabulary.
pub fn run_preprocess(cfg: &RunConfig, input: &Path) -> Result<usize> {
    let records = read_records(input)?;
    let dir = out_dir(cfg)?;
    let mut w = create(&dir.join("clean.tsv"))?;
    corpus::write_clean_tsv(&records, &mut w)?;
    w.flush()?;
    let vocab = Vocabulary::build(&token_lists(&records));
    let mut w = create(&dir.join(VOCAB_FILE))?;
    vocab.write(&mut w)?;
    w.flush()?;
    Ok(records.len())
}

/// `stats`: user-count mean and standard deviation per class.
pub fn run_stats(cfg: &RunConfig, input: &Path) -> Result<Vec<corpus::UserCountStats>> {
    let stats = corpus::user_count_stats(&read_records(input)?, cfg.data.task)?;
    let mut w = create(&out_dir(cfg)?.join("user_counts.tsv"))?;
    writeln!(w, "class\tcount\tmean\tstd")?;
    for s in &stats {
        writeln!(w, "{}\t{}\t{:.4}\t{:.4}", s.class, s.count, s.mean, s.std)?;
    }
    w.flush()?;
    Ok(stats)
}

/// `resample-report`: class sizes before and after rebalancing.
pub fn run_resample_report(cfg: &RunConfig, input: &Path) -> Result<ResamplePlan> {
    let task = cfg.data.task;
    let labels: Vec<usize> = read_records(input)?.iter().filter_map(|r| r.class_for(task)).collect();
    let counts = ClassCounts::from_labels(&labels)?;
    let plan = ResamplePlan::new(&counts, cfg.p_u())?;
    let mut w = create(&out_dir(cfg)?.join("resample_report.tsv"))?;
    resample::write_report(&counts, &plan, task.class_names(), &mut w)?;
    w.flush()?;
    Ok(plan)
}

/// `embed-train`: CBOW over every tweet; writes the full subword model and
/// plain word vectors.
pub fn run_embed_train(cfg: &RunConfig, input: &Path) -> Result<embeddings::FastTextModel> {
    let tokens = token_lists(&read_records(input)?);
    let model = embeddings::train_cbow(&tokens, cfg.embeddings.ngrams(), &cfg.embeddings.cbow(derive_seed(cfg.data.seed, 2)))?;
    let dir = out_dir(cfg)?;
    let mut w = create(&dir.join("cbow_model.txt"))?;
    model.save_text(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("vectors.txt"))?;
    for word in &model.words {
        let v = model.word_vector(word)?;
        let vals: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{word} {}", vals.join(" "))?;
    }
    w.flush()?;
    Ok(model)
}

/// `tune-pu`: cross-validated random forest over the `p_u` grid.
pub fn run_tune_pu(cfg: &RunConfig, input: &Path, folds: usize, trees: usize) -> Result<baseline::PuSelection> {
    let task = cfg.data.task;
    let records = corpus::filter_task(&read_records(input)?, task);
    let tokens = token_lists(&records);
    let vocab = Vocabulary::build(&tokens);
    let x = baseline::bow_matrix(&tokens, &vocab);
    let y: Vec<usize> = records.iter().filter_map(|r| r.class_for(task)).collect();
    let forest = ForestConfig { n_trees: trees, max_features: None, seed: cfg.data.seed };
    let sel = baseline::cv_select_pu(&x, &y, &baseline::default_pu_grid(), folds, &forest)?;
    let mut w = create(&out_dir(cfg)?.join("pu_report.csv"))?;
    sel.write_csv(&mut w)?;
    w.flush()?;
    Ok(sel)
}

/// `tune-hparams`: Bayesian optimisation of learning rate and weight decay,
/// scoring each point by `1 − validation accuracy` after one epoch.
pub fn run_tune_hparams(cfg: &RunConfig, n_init: usize, n_iter: usize) -> Result<BoResult> {
    let records = read_records(cfg.train_path()?)?;
    let prepared = prepare(cfg, &records)?;
    let space = SearchSpace::learning_rate_and_decay();
    let base = cfg.model.train_config(derive_seed(cfg.data.seed, 4));
    let result = hpo::bo_loop(
        |x| {
            let tc = TrainConfig { learning_rate: x[0], weight_decay: x[1], max_epochs: 1, ..base };
            let outcome = fit(cfg, &prepared, &tc)?;
            Ok(1.0 - outcome.history[0].val_accuracy)
        },
        &space,
        &BoConfig { n_init, n_iter, candidates: 1000, seed: derive_seed(cfg.data.seed, 5) },
    )?;
    let mut w = create(&out_dir(cfg)?.join("bo_trace.csv"))?;
    hpo::write_trace_csv(&space, &result.trace, &mut w)?;
    w.flush()?;
    Ok(result)
}

/// `gradcheck`: every finite-difference check over `seeds` seeds.
pub fn run_gradcheck(seeds: u64) -> Vec<CheckResult> {
    gradcheck::check_all(0..seeds)
}

#[derive(Debug, Parser)]
#[command(name = "offlang", version, about = "Offensive-language classification on OLID-style tweets")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// OLID subtask: a, b or c.
    #[arg(long, global = true)]
    pub task: Option<Task>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections (forest training, voting).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Force single-threaded execution.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean tweets and write the cleaned TSV and vocabulary.
    Preprocess {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// User-count statistics per class.
    Stats {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Class counts before and after rebalancing.
    ResampleReport {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        p_u: Option<f64>,
    },
    /// Train CBOW subword embeddings.
    EmbedTrain {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train the classifier with early stopping.
    Train {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Reuse a task-A trunk for task B or C.
    Transfer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Write `id,label` predictions.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Precision, recall and macro-F1 on a labelled file.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Cross-validate the random-forest baseline over p_u.
    TunePu {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 100)]
        trees: usize,
    },
    /// Bayesian optimisation of learning rate and weight decay.
    TuneHparams {
        #[arg(long, default_value_t = 3)]
        n_init: usize,
        #[arg(long, default_value_t = 10)]
        n_iter: usize,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Preprocess { .. } => "preprocess",
            Command::Stats { .. } => "stats",
            Command::ResampleReport { .. } => "resample-report",
            Command::EmbedTrain { .. } => "embed-train",
            Command::Train { .. } => "train",
            Command::Transfer { .. } => "transfer",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::TunePu { .. } => "tune-pu",
            Command::TuneHparams { .. } => "tune-hparams",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }
}

/// Config file (or defaults) with command-line overrides applied.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.task {
        cfg.data.task = t;
    }
    if let Some(s) = cli.seed {
        cfg.data.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir.clone_from(o);
    }
    match &cli.command {
        Command::Train { input: Some(p) } | Command::Transfer { input: Some(p), .. } => cfg.data.train_path = Some(p.clone()),
        Command::ResampleReport { p_u: Some(p), .. } => cfg.resample.p_u = Some(*p),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn input_or(input: &Option<PathBuf>, fallback: Option<&Path>, key: &str) -> Result<PathBuf> {
    match input {
        Some(p) => Ok(p.clone()),
        None => require(fallback, key).map(Path::to_path_buf),
    }
}

/// Execute a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let threads = if cli.deterministic { 1 } else { cli.threads.unwrap_or(0) };
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let threads_used = rayon::current_num_threads();
    let train_in = cfg.data.train_path.as_deref();
    let test_in = cfg.data.test_path.as_deref();
    let task = cfg.data.task;
    match &cli.command {
        Command::Preprocess { input } => {
            let n = run_preprocess(&cfg, &input_or(input, train_in, "data.train_path")?)?;
            println!("cleaned {n} tweets");
        }
        Command::Stats { input } => {
            println!("class\tcount\tmean\tstd");
            for s in run_stats(&cfg, &input_or(input, train_in, "data.train_path")?)? {
                println!("{}\t{}\t{:.2}\t{:.2}", s.class, s.count, s.mean, s.std);
            }
        }
        Command::ResampleReport { input, .. } => {
            let plan = run_resample_report(&cfg, &input_or(input, train_in, "data.train_path")?)?;
            println!("p_u = {}: {} examples per class", plan.p_u, plan.target);
        }
        Command::EmbedTrain { input } => {
            let m = run_embed_train(&cfg, &input_or(input, train_in, "data.train_path")?)?;
            println!("trained {} word vectors of dimension {}", m.words.len(), m.dim);
        }
        Command::Train { .. } => {
            let r = run_train(&cfg)?;
            println!("best epoch {}, model written to {}", r.outcome.best_epoch, r.model_path.display());
            print!("{}", r.val_report.to_table(task.class_names()));
        }
        Command::Transfer { model, vocab, .. } => {
            let r = run_transfer(&cfg, model, vocab.as_deref())?;
            println!("best epoch {}, model written to {}", r.outcome.best_epoch, r.model_path.display());
            print!("{}", r.val_report.to_table(task.class_names()));
        }
        Command::Predict { model, vocab, input } => {
            let preds = run_predict(&cfg, model, vocab.as_deref(), &input_or(input, test_in, "data.test_path")?)?;
            println!("wrote {} predictions", preds.len());
        }
        Command::Evaluate { model, vocab, input } => {
            let r = run_evaluate(&cfg, model, vocab.as_deref(), &input_or(input, test_in, "data.test_path")?)?;
            print!("{}", r.to_table(task.class_names()));
        }
        Command::TunePu { input, folds, trees } => {
            let sel = run_tune_pu(&cfg, &input_or(input, train_in, "data.train_path")?, *folds, *trees)?;
            for row in &sel.table {
                println!("p_u {:.1}\tmacro-F1 {:.4}", row.p_u, row.mean_macro_f1);
            }
            println!("best p_u = {}", sel.best_p_u);
        }
        Command::TuneHparams { n_init, n_iter } => {
            let r = run_tune_hparams(&cfg, *n_init, *n_iter)?;
            println!("best lr = {:e}, weight decay = {:e}, objective {:.4}", r.best_point[0], r.best_point[1], r.best_value);
        }
        Command::Gradcheck { seeds } => {
            let results = run_gradcheck(*seeds);
            let failed: Vec<&CheckResult> = results.iter().filter(|r| !r.passed()).collect();
            for r in &failed {
                println!("FAIL {} seed {}: relative error {:e}", r.name, r.seed, r.rel_error);
            }
            let worst = results.iter().map(|r| r.rel_error).fold(0.0, f64::max);
            println!("{} checks, {} failed, worst relative error {worst:e}", results.len(), failed.len());
            write_run_record(&cfg, cli.command.name(), threads_used, cli.deterministic)?;
            if !failed.is_empty() {
                return Err(Error::Numerical(format!("{} gradient checks failed", failed.len())));
            }
            return Ok(());
        }
    }
    write_run_record(&cfg, cli.command.name(), threads_used, cli.deterministic)
}
