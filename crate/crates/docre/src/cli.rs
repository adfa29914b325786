//! Run configuration and the five pipeline commands: vocab, prepare, train,
//! eval, predict.
//!
//! A JSON config file provides defaults; command-line flags override
//! individual keys. All randomness flows from the single `seed` field.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::corpus::{self, NegativePolicy, PairInstance, RelationSchema};
use crate::encoding::{self, EncodedInput};
use crate::error::{DocreError, Result};
use crate::metrics::{self, EpochReport, SplitMetrics};
use crate::model::{self, ModelConfig};
use crate::tokenizer::{self, Vocab};
use crate::training::{self, TrainConfig};

/// Flat run configuration; every key can come from the JSON config file or a
/// matching CLI flag, flags winning.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    // model
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout_p: f64,
    pub layernorm_eps: f64,
    // training
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub freeze_encoder: bool,
    // data handling
    pub data_format: String, // "docred" | "triples"
    pub min_freq: usize,
    /// "all", "none", or "sampled:K"
    pub negative_policy: String,
    // paths
    pub data: Option<PathBuf>,
    pub val_data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub val_cache: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            d_model: 128,
            n_layers: model::DEFAULT_N_LAYERS,
            n_heads: 4,
            d_ff: 512,
            max_len: 512,
            dropout_p: 0.3,
            layernorm_eps: 1e-12,
            batch_size: 32,
            epochs: 3,
            learning_rate: 1e-3,
            grad_clip_norm: 1.0,
            seed: 42,
            freeze_encoder: false,
            data_format: "docred".into(),
            min_freq: 1,
            negative_policy: "sampled:3".into(),
            data: None,
            val_data: None,
            schema: None,
            vocab: None,
            cache: None,
            val_cache: None,
            checkpoint: None,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            DocreError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn model_config(&self, vocab_size: usize, n_relations: usize) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            vocab_size,
            max_len: self.max_len,
            n_segments: 2,
            n_relations,
            dropout_p: self.dropout_p,
            layernorm_eps: self.layernorm_eps,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            grad_clip_norm: self.grad_clip_norm,
            seed: self.seed,
            freeze_encoder: self.freeze_encoder,
            ..TrainConfig::default()
        }
    }

    pub fn parse_negative_policy(&self) -> Result<NegativePolicy> {
        match self.negative_policy.as_str() {
            "all" => Ok(NegativePolicy::All),
            "none" => Ok(NegativePolicy::None),
            s => {
                if let Some(k) = s.strip_prefix("sampled:") {
                    let k = k.parse().map_err(|_| {
                        DocreError::Config(format!("bad negative_policy {s:?}"))
                    })?;
                    Ok(NegativePolicy::Sampled(k))
                } else {
                    Err(DocreError::Config(format!(
                        "negative_policy must be all, none, or sampled:K, got {s:?}"
                    )))
                }
            }
        }
    }

    fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        field
            .as_deref()
            .ok_or_else(|| DocreError::Config(format!("missing required path: {name}")))
    }

    fn require_existing<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        let p = self.require(field, name)?;
        if !p.exists() {
            return Err(DocreError::Config(format!(
                "{name} path does not exist: {}",
                p.display()
            )));
        }
        Ok(p)
    }
}

fn load_documents(config: &RunConfig, path: &Path, schema: &RelationSchema) -> Result<Vec<corpus::Document>> {
    match config.data_format.as_str() {
        "docred" => corpus::load_docred(path, schema),
        "triples" => corpus::load_triples(path, schema),
        other => Err(DocreError::Config(format!(
            "data_format must be docred or triples, got {other:?}"
        ))),
    }
}

/// Builds the vocabulary from the training data and writes the vocab file.
pub fn cmd_vocab(config: &RunConfig) -> Result<()> {
    let data = config.require_existing(&config.data, "data")?;
    let schema = RelationSchema::load(config.require_existing(&config.schema, "schema")?)?;
    let docs = load_documents(config, data, &schema)?;
    let vocab = tokenizer::build_vocab(&docs, config.min_freq)?;
    let out = config.require(&config.vocab, "vocab")?;
    vocab.save(out)?;
    println!("vocab size {}", vocab.len());
    if vocab.len() == tokenizer::SPECIAL_TOKENS.len() {
        eprintln!("warning: vocabulary contains only special tokens (min_freq {} too high?)", config.min_freq);
    }
    Ok(())
}

/// Streams documents through pair enumeration and encoding into the cache
/// file. Instances that cannot fit max_len are skipped and counted.
pub fn cmd_prepare(config: &RunConfig) -> Result<()> {
    let data = config.require_existing(&config.data, "data")?;
    let schema = RelationSchema::load(config.require_existing(&config.schema, "schema")?)?;
    let vocab = Vocab::load(config.require_existing(&config.vocab, "vocab")?)?;
    let policy = config.parse_negative_policy()?;
    let docs = load_documents(config, data, &schema)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut encoded = Vec::new();
    let mut skipped = 0usize;
    let mut truncated = 0usize;
    for doc in &docs {
        for instance in corpus::enumerate_pairs(doc, &schema, policy, &mut rng) {
            let overhead = instance.head_tokens.len() + instance.tail_tokens.len() + 4;
            if config.max_len < overhead + 1 {
                skipped += 1;
                continue;
            }
            if instance.doc_tokens.len() > config.max_len - overhead {
                truncated += 1;
            }
            encoded.push(encoding::assemble(&instance, &vocab, config.max_len)?);
        }
    }
    let out = config.require(&config.cache, "cache")?;
    encoding::write_cache(out, &encoded)?;
    println!("prepared {} instances ({truncated} truncated, {skipped} skipped)", encoded.len());
    Ok(())
}

fn write_train_log(path: &Path, reports: &[EpochReport]) -> Result<()> {
    #[derive(Serialize)]
    struct LogRecord<'a> {
        epoch: usize,
        split: &'a str,
        precision: f64,
        recall: f64,
        f1: f64,
        accuracy: f64,
        loss: f64,
    }
    let mut lines = String::new();
    let mut push = |epoch: usize, split: &str, m: &SplitMetrics| {
        let rec = LogRecord {
            epoch,
            split,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            accuracy: m.accuracy,
            loss: m.loss,
        };
        lines.push_str(&serde_json::to_string(&rec).unwrap());
        lines.push('\n');
    };
    for r in reports {
        push(r.epoch, "train", &r.train);
        if let Some(v) = &r.val {
            push(r.epoch, "val", v);
        }
        if let Some(t) = &r.test {
            push(r.epoch, "test", t);
        }
    }
    fs::write(path, lines)?;
    Ok(())
}

/// Trains from a prepared cache, writing per-epoch logs and checkpoints.
pub fn cmd_train(config: &RunConfig) -> Result<()> {
    let cache = config.require_existing(&config.cache, "cache")?;
    let vocab = Vocab::load(config.require_existing(&config.vocab, "vocab")?)?;
    let schema = RelationSchema::load(config.require_existing(&config.schema, "schema")?)?;
    let instances = encoding::read_cache(cache)?;
    let val_instances = match &config.val_cache {
        Some(p) => encoding::read_cache(p)?,
        None => Vec::new(),
    };
    let out_dir = config.require(&config.output_dir, "output_dir")?;
    fs::create_dir_all(out_dir)?;

    let model_config = config.model_config(vocab.len(), schema.len());
    let train_config = config.train_config();
    let (params, reports) = training::train_with_callback(
        &instances,
        &val_instances,
        &model_config,
        &train_config,
        |epoch, params, _| {
            checkpoint::save(&out_dir.join(format!("epoch_{epoch}.ckpt")), &model_config, params)
        },
    )?;
    checkpoint::save(&out_dir.join("model.ckpt"), &model_config, &params)?;
    write_train_log(&out_dir.join("train_log.jsonl"), &reports)?;
    print!("{}", metrics::format_report(&reports));
    Ok(())
}

/// Evaluates a checkpoint over a prepared cache and prints the report table.
pub fn cmd_eval(config: &RunConfig) -> Result<()> {
    let cache = config.require_existing(&config.cache, "cache")?;
    let ckpt = config.require_existing(&config.checkpoint, "checkpoint")?;
    let (model_config, params) = checkpoint::load(ckpt)?;
    let instances = encoding::read_cache(cache)?;
    let split = training::evaluate(&instances, &params, &model_config)?;
    let report = EpochReport {
        epoch: 0,
        train: split, // single-split eval; shown in the leading columns
        val: None,
        test: None,
    };
    print!("{}", metrics::format_report(std::slice::from_ref(&report)));
    Ok(())
}

/// Classifies one (text, head, tail) triple with a trained checkpoint.
pub fn cmd_predict(config: &RunConfig, text: &str, head: &str, tail: &str) -> Result<()> {
    let ckpt = config.require_existing(&config.checkpoint, "checkpoint")?;
    let vocab = Vocab::load(config.require_existing(&config.vocab, "vocab")?)?;
    let schema = RelationSchema::load(config.require_existing(&config.schema, "schema")?)?;
    let (model_config, params) = checkpoint::load(ckpt)?;
    if model_config.vocab_size != vocab.len() {
        return Err(DocreError::Checkpoint(format!(
            "e_w: checkpoint vocab_size {} does not match vocab file size {}",
            model_config.vocab_size,
            vocab.len()
        )));
    }
    if model_config.n_relations != schema.len() {
        return Err(DocreError::Checkpoint(format!(
            "classifier.w: checkpoint n_relations {} does not match schema size {}",
            model_config.n_relations,
            schema.len()
        )));
    }
    let instance = PairInstance {
        doc_id: "cli".into(),
        head_tokens: tokenizer::tokenize_text(head),
        tail_tokens: tokenizer::tokenize_text(tail),
        doc_tokens: tokenizer::tokenize_text(text),
        relation_id: schema.na_id,
    };
    if instance.head_tokens.is_empty() || instance.tail_tokens.is_empty() || instance.doc_tokens.is_empty() {
        return Err(DocreError::Input("text, head, and tail must be non-empty".into()));
    }
    let encoded = encode_single(&instance, &vocab, model_config.max_len)?;
    let logits = model::forward_eval(&encoded, &params, &model_config)?;
    let (id, probs) = model::predict(&logits)?;
    println!("relation: {}", schema.id_to_label[id]);
    for (label, p) in schema.id_to_label.iter().zip(&probs) {
        println!("  {label}\t{p:.6}");
    }
    Ok(())
}

fn encode_single(instance: &PairInstance, vocab: &Vocab, max_len: usize) -> Result<EncodedInput> {
    encoding::assemble(instance, vocab, max_len)
}

/// Maps an error to the documented process exit code.
pub fn exit_code(err: &DocreError) -> i32 {
    match err {
        DocreError::Checkpoint(_) => 3,
        DocreError::Numeric(_) => 4,
        _ => 2,
    }
}
