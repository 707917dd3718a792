//! Learning-rate schedule, optimizer, augmentation, training loop and evaluation.

mod augment;
mod optim;

pub use augment::{augment_sample, center_offset, crop_flip, max_offset, CROP_PAD, PADDED_SIDE};
pub use optim::{nesterov_update, sgd_nesterov_step, OptimizerState};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{Mode, ModelGraph};
use crate::data::{normalize_byte, LabeledDataset};
use crate::error::{Error, Result};
use crate::ops::softmax_cross_entropy;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    /// Iterations at which the rate is multiplied by `lr_factor`.
    pub lr_steps: Vec<usize>,
    pub lr_factor: f64,
    pub max_iter: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub momentum: f64,
    /// Seeds batch order and augmentation.
    pub seed: u64,
    /// Skip weight decay on batch-norm gamma and beta.
    pub exempt_bn_decay: bool,
    pub augment: bool,
    /// Log every this many iterations (the last iteration is always logged). 0 disables.
    pub log_interval: usize,
    /// Evaluate on the eval split every this many iterations. 0 disables.
    pub eval_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 0.01,
            lr_steps: vec![32_000, 48_000],
            lr_factor: 0.1,
            max_iter: 65_000,
            weight_decay: 0.0005,
            batch_size: 128,
            momentum: 0.9,
            seed: 0,
            exempt_bn_decay: false,
            augment: true,
            log_interval: 100,
            eval_interval: 0,
        }
    }
}

impl TrainConfig {
    /// Default recipe shortened to `max_iter` iterations; steps past the end are dropped.
    pub fn scaled(max_iter: usize) -> Self {
        let mut cfg = TrainConfig {
            max_iter,
            ..TrainConfig::default()
        };
        cfg.lr_steps.retain(|&s| s < max_iter);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::Config(reason));
        if !(self.base_lr > 0.0 && self.lr_factor > 0.0) {
            return bad("learning rate and factor must be positive".into());
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("weight decay must be non-negative".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.lr_steps.windows(2).any(|w| w[0] >= w[1]) {
            return bad("lr steps must be strictly increasing".into());
        }
        if self.max_iter > 0 && self.lr_steps.last().is_some_and(|&s| s >= self.max_iter) {
            return bad(format!("lr steps must lie below max_iter {}", self.max_iter));
        }
        Ok(())
    }
}

/// `base_lr · factor^k` where `k` counts the steps at or below `iter`.
pub fn multistep_lr(iter: usize, cfg: &TrainConfig) -> Result<f64> {
    if iter >= cfg.max_iter {
        return Err(Error::invalid(
            "multistep_lr",
            format!("iteration {iter} is past max_iter {} (training finished)", cfg.max_iter),
        ));
    }
    let k = cfg.lr_steps.iter().filter(|&&s| s <= iter).count() as i32;
    // dividing by an integral reciprocal keeps 0.01 → 0.001 → 0.0001 exact in binary
    let inv = 1.0 / cfg.lr_factor;
    if (inv - inv.round()).abs() < 1e-9 {
        Ok(cfg.base_lr / inv.round().powi(k))
    } else {
        Ok(cfg.base_lr * cfg.lr_factor.powi(k))
    }
}

/// Stacks crops of the given samples into a normalized batch. Random crops when `rng` is given.
pub fn make_batch(
    ds: &LabeledDataset,
    indices: &[usize],
    side: usize,
    mean: &[f32],
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Tensor<f32>> {
    let plane = side * side;
    let mut data = Vec::with_capacity(indices.len() * 3 * plane);
    let mut rng = rng;
    for &i in indices {
        let crop = match rng.as_deref_mut() {
            Some(r) => augment_sample(ds.image(i), side, r)?,
            None => {
                let o = center_offset(side);
                crop_flip(ds.image(i), side, o, o, false)?
            }
        };
        data.extend(
            crop.iter()
                .enumerate()
                .map(|(k, &b)| normalize_byte(b, mean.get(k / plane).copied().unwrap_or(0.0))),
        );
    }
    Tensor::from_vec(Shape::new(indices.len(), 3, side, side), data)
}

/// Index of the largest score per sample (first wins on ties).
pub fn predictions(scores: &Tensor<f32>) -> Vec<usize> {
    let s = scores.shape();
    (0..s.n)
        .map(|n| {
            let row = scores.sample(n);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

const EVAL_BATCH: usize = 100;

/// Top-1 accuracy on center crops in inference mode.
pub fn evaluate(g: &ModelGraph<f32>, ds: &LabeledDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::invalid("evaluate", "empty dataset"));
    }
    let side = g.input_shape().h;
    let mut correct = 0usize;
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let x = make_batch(ds, chunk, side, g.input_mean(), None)?;
        let scores = g.forward(&x, Mode::Infer)?;
        correct += predictions(&scores)
            .iter()
            .zip(chunk)
            .filter(|&(&p, &i)| p == ds.label(i))
            .count();
    }
    Ok(correct as f64 / ds.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub iter: usize,
    pub lr: f64,
    pub loss: f64,
    /// Accuracy on the training minibatch.
    pub batch_acc: f64,
    /// Accuracy on the eval split, when evaluated at this iteration.
    pub eval_acc: Option<f64>,
}

impl LogEntry {
    pub fn line(&self) -> String {
        let mut s = format!(
            "iter={} lr={} loss={:.6} acc={:.4}",
            self.iter, self.lr, self.loss, self.batch_acc
        );
        if let Some(a) = self.eval_acc {
            s.push_str(&format!(" eval_acc={a:.4}"));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub graph: ModelGraph<f32>,
    pub log: Vec<LogEntry>,
    /// Loss of the last minibatch; `None` when no iteration ran.
    pub final_loss: Option<f64>,
}

/// Endless reshuffled pass over the dataset; each epoch is a fresh permutation.
struct BatchOrder {
    order: Vec<usize>,
    pos: usize,
}

impl BatchOrder {
    fn next(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            let take = (n - out.len()).min(self.order.len() - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        out
    }
}

/// Runs `cfg.max_iter` SGD iterations. `sink` receives every log line as it is produced.
pub fn train_loop(
    graph: ModelGraph<f32>,
    train: &LabeledDataset,
    eval: Option<&LabeledDataset>,
    cfg: &TrainConfig,
    sink: &mut dyn FnMut(&str),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut graph = graph;
    if cfg.max_iter == 0 {
        return Ok(TrainOutcome {
            graph,
            log: Vec::new(),
            final_loss: None,
        });
    }
    if train.is_empty() {
        return Err(Error::invalid("train_loop", "empty training set"));
    }
    let input = graph.input_shape();
    if input.c != 3 || input.h > PADDED_SIDE || input.h != input.w {
        return Err(Error::ShapeMismatch {
            op: "train_loop",
            left: input,
            right: Shape::new(1, 3, input.h.min(PADDED_SIDE), input.h.min(PADDED_SIDE)),
        });
    }
    if graph.num_classes() < train.class_count() {
        return Err(Error::invalid(
            "train_loop",
            format!("{} outputs for {} classes", graph.num_classes(), train.class_count()),
        ));
    }
    let side = input.h;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = BatchOrder {
        order: (0..train.len()).collect(),
        pos: train.len(),
    };
    let mut state = OptimizerState::new(&graph);
    let mut log = Vec::new();
    let mut final_loss = None;

    for iter in 0..cfg.max_iter {
        let lr = multistep_lr(iter, cfg)?;
        let batch = order.next(cfg.batch_size, &mut rng);
        let labels: Vec<usize> = batch.iter().map(|&i| train.label(i)).collect();
        let mean = graph.input_mean().to_vec();
        let x = make_batch(train, &batch, side, &mean, cfg.augment.then_some(&mut rng))?;
        let acts = graph.forward_trace(&x, Mode::Train)?;
        let (loss, grad) = softmax_cross_entropy(acts.scores(), &labels)?;
        let loss = f64::from(loss);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at iteration {iter}")));
        }
        let correct = predictions(acts.scores())
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
        let grads = graph.backward(&acts, &grad)?;
        graph.commit_batch_stats(&acts);
        drop(acts);
        sgd_nesterov_step(&mut graph, &grads.params, &mut state, lr, cfg)?;
        final_loss = Some(loss);

        let last = iter + 1 == cfg.max_iter;
        let eval_now = cfg.eval_interval > 0 && ((iter + 1) % cfg.eval_interval == 0 || last);
        let log_now = cfg.log_interval > 0 && (iter % cfg.log_interval == 0 || last);
        if log_now || eval_now {
            let eval_acc = match (eval_now, eval) {
                (true, Some(ds)) => Some(evaluate(&graph, ds)?),
                _ => None,
            };
            let entry = LogEntry {
                iter,
                lr,
                loss,
                batch_acc: correct as f64 / labels.len() as f64,
                eval_acc,
            };
            sink(&entry.line());
            log.push(entry);
        }
    }
    Ok(TrainOutcome { graph, log, final_loss })
}
