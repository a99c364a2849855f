//! Training loop, evaluation and the metric history.

use std::io::Write;
use std::path::Path;

use fragnet_tensor::{adam_step, sigmoid, AdamConfig, AdamState, SplitMix64, Tensor};
use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{resolve_fragmenter, Checkpoint, Standardization, TrainingMetadata};
use crate::data::{prepare, Dataset, Prepared, Record, Split, SplitConfig};
use crate::error::{CoreError, Result};
use crate::features::FeatureConfig;
use crate::hiergraph::HierGraphs;
use crate::metrics::{rmse, roc_auc};
use crate::model::{record, FragNetParams, ModelConfig, Task};

/// The JSON training configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub layers_per_graph: usize,
    pub heads: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub split: SplitConfig,
    pub fragmenter: String,
    pub leaky_slope: f64,
    pub features: FeatureConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            hidden_dim: m.hidden_dim,
            layers_per_graph: m.layers_per_graph,
            heads: m.heads,
            lr: 1e-3,
            // Small batches generalize better on ESOL-sized data.
            batch_size: 8,
            epochs: 300,
            patience: 30,
            seed: 0,
            split: SplitConfig::default(),
            fragmenter: m.fragmenter,
            leaky_slope: m.leaky_slope,
            features: m.features,
        }
    }
}

impl TrainConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CoreError::Config(e.to_string()))
    }

    pub fn model_config(&self, task: Task, n_tasks: usize) -> ModelConfig {
        ModelConfig {
            hidden_dim: self.hidden_dim,
            layers_per_graph: self.layers_per_graph,
            heads: self.heads,
            leaky_slope: self.leaky_slope,
            n_tasks,
            task,
            fragmenter: self.fragmenter.clone(),
            features: self.features,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// RMSE in target units, or mean AUC.
    pub valid_metric: f64,
}

pub fn write_history(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_history_to(file, history)
}

/// Hook run on the freshly initialized parameters before supervised
/// training. Ships empty.
pub trait Pretrainer {
    fn name(&self) -> &str;

    fn pretrain(&self, params: &mut FragNetParams, molecules: &[Prepared]) -> Result<()>;
}

pub struct NoPretraining;

impl Pretrainer for NoPretraining {
    fn name(&self) -> &str {
        "none"
    }

    fn pretrain(&self, _params: &mut FragNetParams, _molecules: &[Prepared]) -> Result<()> {
        Ok(())
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

struct Example {
    graphs: HierGraphs,
    target: Tensor,
    mask: Option<Tensor>,
}

fn examples(dataset: &Dataset, indices: &[usize], config: &ModelConfig, std: &Standardization) -> Result<(Vec<Prepared>, Vec<Example>)> {
    let fragmenter = resolve_fragmenter(&config.fragmenter)?;
    let n = config.n_tasks;
    let prepared = indices
        .par_iter()
        .map(|&i| prepare(&dataset.records[i].smiles, fragmenter.as_ref(), &config.features))
        .collect::<Result<Vec<_>>>()?;
    let ex = prepared
        .iter()
        .zip(indices)
        .map(|(p, &i)| {
            let r = &dataset.records[i];
            let y = match config.task {
                Task::Regression => std.apply(&r.targets),
                Task::BinaryMultitask => r.targets.clone(),
            };
            Ok(Example {
                graphs: p.graphs.clone(),
                target: Tensor::matrix(1, n, y)?,
                mask: r
                    .mask
                    .as_ref()
                    .map(|m| Tensor::matrix(1, n, m.iter().map(|&b| f64::from(u8::from(b))).collect()))
                    .transpose()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((prepared, ex))
}

fn loss_and_grads(ex: &Example, params: &FragNetParams, with_grads: bool) -> Result<(f64, Option<Vec<Tensor>>, Vec<f64>)> {
    let rec = record(&ex.graphs, params, with_grads)?;
    let mut tape = rec.tape;
    let loss = match params.config.task {
        Task::Regression => tape.mse_loss(rec.prediction, ex.target.clone(), ex.mask.clone())?,
        Task::BinaryMultitask => tape.bce_with_logits_loss(rec.prediction, ex.target.clone(), ex.mask.clone())?,
    };
    let value = tape.value(loss).item();
    let pred = tape.value(rec.prediction).data().to_vec();
    if !with_grads {
        return Ok((value, None, pred));
    }
    let mut g = tape.backward(loss)?;
    let grads = rec
        .params
        .iter()
        .zip(&params.tensors)
        .map(|(v, t)| g.take_or_zeros(*v, t))
        .collect();
    Ok((value, Some(grads), pred))
}

/// Mean loss and the validation metric over `set`.
fn score(set: &[Example], params: &FragNetParams, std: &Standardization) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let out = set
        .par_iter()
        .map(|ex| loss_and_grads(ex, params, false))
        .collect::<Result<Vec<_>>>()?;
    let loss = out.iter().map(|o| o.0).sum::<f64>() / set.len() as f64;
    let preds: Vec<Vec<f64>> = out.into_iter().map(|o| o.2).collect();
    let masks: Vec<Option<Vec<bool>>> = set.iter().map(|e| mask_vec(e.mask.as_ref())).collect();
    let (preds, targets): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match params.config.task {
        Task::Regression => (
            preds.iter().map(|p| std.invert(p)).collect(),
            set.iter().map(|e| std.invert(e.target.data())).collect(),
        ),
        Task::BinaryMultitask => (preds, set.iter().map(|e| e.target.data().to_vec()).collect()),
    };
    let metric = task_metrics(params.config.task, &preds, &targets, &masks).1;
    Ok((loss, metric))
}

fn mask_vec(m: Option<&Tensor>) -> Option<Vec<bool>> {
    m.map(|t| t.data().iter().map(|&v| v != 0.0).collect())
}

/// Per-task RMSE or AUC and their mean over defined tasks.
fn task_metrics(task: Task, preds: &[Vec<f64>], targets: &[Vec<f64>], masks: &[Option<Vec<bool>>]) -> (Vec<Option<f64>>, f64) {
    let n_tasks = targets.first().map_or(0, Vec::len);
    let per_task: Vec<Option<f64>> = (0..n_tasks)
        .map(|k| {
            let rows: Vec<usize> = (0..targets.len())
                .filter(|&i| masks[i].as_ref().map_or(true, |m| m[k]))
                .collect();
            let p: Vec<f64> = rows.iter().map(|&i| preds[i][k]).collect();
            let t: Vec<f64> = rows.iter().map(|&i| targets[i][k]).collect();
            match task {
                Task::Regression => (!rows.is_empty()).then(|| rmse(&p, &t)),
                Task::BinaryMultitask => {
                    let labels: Vec<bool> = t.iter().map(|&v| v > 0.5).collect();
                    let scores: Vec<f64> = p.iter().map(|&z| sigmoid(z)).collect();
                    roc_auc(&scores, &labels)
                }
            }
        })
        .collect();
    let defined: Vec<f64> = per_task.iter().flatten().copied().collect();
    let mean = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    (per_task, mean)
}

pub fn train_model(dataset: &Dataset, split: &Split, config: &TrainConfig) -> Result<TrainOutcome> {
    train_model_with(dataset, split, config, &NoPretraining)
}

/// Adam on mini-batches of whole molecules. Per-molecule gradients are
/// computed in parallel and summed in molecule order, so results do not
/// depend on the thread count. Early stopping watches the validation loss
/// (training loss when the validation set is empty) and keeps the best
/// parameters.
pub fn train_model_with(dataset: &Dataset, split: &Split, config: &TrainConfig, pretrainer: &dyn Pretrainer) -> Result<TrainOutcome> {
    if split.train.is_empty() {
        return Err(CoreError::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(CoreError::Config("batch_size must be positive".into()));
    }
    let model_config = config.model_config(dataset.task, dataset.n_tasks());
    let mut params = FragNetParams::init(&model_config, config.seed)?;
    let standardization = match dataset.task {
        Task::Regression => {
            let train_records: Vec<&Record> = split.train.iter().map(|&i| &dataset.records[i]).collect();
            Standardization::fit(&train_records, dataset.n_tasks())
        }
        Task::BinaryMultitask => Standardization::identity(dataset.n_tasks()),
    };
    let (train_prepared, train_set) = examples(dataset, &split.train, &model_config, &standardization)?;
    let (_, valid_set) = examples(dataset, &split.valid, &model_config, &standardization)?;
    pretrainer.pretrain(&mut params, &train_prepared)?;
    drop(train_prepared);

    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::for_params(&params.tensors);
    let mut rng = SplitMix64::new(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let chunk = rayon::current_num_threads().max(1) * 2;

    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, params.tensors.clone());
    let mut waited = 0;
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut sum: Option<Vec<Tensor>> = None;
            for group in batch.chunks(chunk) {
                let results = group
                    .par_iter()
                    .map(|&i| loss_and_grads(&train_set[i], &params, true))
                    .collect::<Result<Vec<_>>>()?;
                for (loss, grads, _) in results {
                    epoch_loss += loss;
                    let grads = grads.expect("gradients requested");
                    match sum.as_mut() {
                        None => sum = Some(grads),
                        Some(acc) => {
                            for (a, g) in acc.iter_mut().zip(&grads) {
                                a.add_assign(g)?;
                            }
                        }
                    }
                }
            }
            let mut grads = sum.expect("non-empty batch");
            for g in &mut grads {
                g.scale_in_place(1.0 / batch.len() as f64);
            }
            adam_step(&mut params.tensors, &grads, &mut state, &adam)?;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let (valid_loss, valid_metric) = score(&valid_set, &params, &standardization)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            valid_loss,
            valid_metric,
        });
        debug!("epoch {epoch}: train {train_loss:.5} valid {valid_loss:.5} metric {valid_metric:.4}");

        let watched = if valid_set.is_empty() { train_loss } else { valid_loss };
        if watched < best.0 {
            best = (watched, epoch, params.tensors.clone());
            waited = 0;
        } else {
            waited += 1;
            if waited >= config.patience {
                info!("early stop at epoch {epoch}, best epoch {}", best.1);
                break;
            }
        }
    }
    if best.1 > 0 {
        params.tensors = best.2;
    }

    let mut metadata = TrainingMetadata {
        dataset: dataset.name.clone(),
        target_names: dataset.target_names.clone(),
        seed: config.seed,
        split: config.split.kind.clone(),
        epochs_run: history.len(),
        best_epoch: best.1,
        ..TrainingMetadata::default()
    };
    if let Some(r) = history.get(best.1.wrapping_sub(1)) {
        metadata.metrics.insert("train_loss".into(), r.train_loss);
        if r.valid_loss.is_finite() {
            metadata.metrics.insert("valid_loss".into(), r.valid_loss);
            metadata.metrics.insert("valid_metric".into(), r.valid_metric);
        }
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(params, standardization, metadata)?,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    /// "rmse" or "auc".
    pub metric: String,
    /// `None` for tasks without enough labels.
    pub per_task: Vec<Option<f64>>,
    pub mean: f64,
    /// Model outputs in target units (logits for classification).
    pub predictions: Vec<Vec<f64>>,
}

/// Predictions for every record, in record order.
pub fn predict_dataset(checkpoint: &Checkpoint, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    dataset
        .records
        .par_iter()
        .map(|r| checkpoint.predict(&r.smiles))
        .collect()
}

pub fn evaluate(checkpoint: &Checkpoint, dataset: &Dataset) -> Result<Evaluation> {
    let cfg = checkpoint.config();
    if cfg.task != dataset.task || cfg.n_tasks != dataset.n_tasks() {
        return Err(CoreError::TaskMismatch {
            checkpoint: format!("{} x{}", cfg.task.as_str(), cfg.n_tasks),
            dataset: format!("{} x{}", dataset.task.as_str(), dataset.n_tasks()),
        });
    }
    let predictions = predict_dataset(checkpoint, dataset)?;
    let targets: Vec<Vec<f64>> = dataset.records.iter().map(|r| r.targets.clone()).collect();
    let masks: Vec<Option<Vec<bool>>> = dataset.records.iter().map(|r| r.mask.clone()).collect();
    let (per_task, mean) = task_metrics(cfg.task, &predictions, &targets, &masks);
    Ok(Evaluation {
        metric: match cfg.task {
            Task::Regression => "rmse",
            Task::BinaryMultitask => "auc",
        }
        .into(),
        per_task,
        mean,
        predictions,
    })
}

/// Writes the history CSV header even for an empty history.
pub fn write_history_to(mut w: impl Write, history: &[EpochRecord]) -> Result<()> {
    writeln!(w, "epoch,train_loss,valid_loss,valid_metric")?;
    for r in history {
        writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.valid_loss, r.valid_metric)?;
    }
    Ok(())
}
