//! Loss, momentum SGD, learning-rate decay and the epoch loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::fusion::predicted_label;
use crate::metrics::MetricsReport;
use crate::model::{Model, ModelParams, Sample, PROB_CLAMP};
use crate::tensor::{ParamSet, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub decay: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Worker threads per batch. Results depend on this value but are
    /// reproducible for a fixed value.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            lr0: 0.01,
            decay: 0.95,
            momentum: 0.9,
            seed: 0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config("decay must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config("lr0 must be a finite non-negative number".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        Ok(())
    }
}

/// `-(1/B) Σ_b log(max(p[b, label_b], 1e-12))`.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(Error::LengthMismatch(probs.rows(), labels.len()));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let k = probs.cols();
    let mut total = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        total -= probs.at(b, label).wide().max(PROB_CLAMP).ln();
    }
    Ok(total / labels.len() as f64)
}

/// `v ← μ v + g; θ ← θ − lr v`, then zeroes `grads`.
pub fn sgd_step<T: Scalar, P: ParamSet<T>>(
    params: &mut P,
    grads: &mut P,
    velocity: &mut P,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let mut ps = params.tensors_mut();
    let mut gs = grads.tensors_mut();
    let mut vs = velocity.tensors_mut();
    if ps.len() != gs.len() || ps.len() != vs.len() {
        return Err(shape_err(format!(
            "sgd_step: {} params, {} grads, {} velocities",
            ps.len(),
            gs.len(),
            vs.len()
        )));
    }
    for ((p, g), v) in ps.iter_mut().zip(gs.iter_mut()).zip(vs.iter_mut()) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(shape_err(format!(
                "sgd_step: {:?} / {:?} / {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            )));
        }
    }
    for ((p, g), v) in ps.into_iter().zip(gs.iter_mut()).zip(vs.into_iter()) {
        for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut().iter_mut()) {
            let nv = momentum * vv.wide() + gv.wide();
            *vv = T::of(nv);
            *pv = T::of(pv.wide() - lr * nv);
        }
        g.fill_zero();
    }
    Ok(())
}

pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.decay.powi(epoch as i32)
}

/// Neighbor-sampling seed for document `index` in `epoch`.
pub fn sample_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    let mut z = seed
        ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (index as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A model plus its optimizer state.
#[derive(Clone, Debug)]
pub struct Trainer<T: Scalar = f32> {
    pub model: Model<T>,
    pub cfg: TrainConfig,
    velocity: ModelParams<T>,
    grads: ModelParams<T>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Model<T>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let velocity = model.params.zeros_like();
        let grads = model.params.zeros_like();
        Ok(Trainer {
            model,
            cfg,
            velocity,
            grads,
        })
    }

    /// One pass over `data`; returns the mean batch loss.
    pub fn train_epoch(&mut self, data: &[Sample], epoch: usize) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.cfg.seed ^ epoch as u64));
        let lr = lr_at(epoch, &self.cfg);
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(self.cfg.batch_size) {
            let loss = self.batch_gradient(data, batch, epoch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(loss));
            }
            sgd_step(
                &mut self.model.params,
                &mut self.grads,
                &mut self.velocity,
                lr,
                self.cfg.momentum,
            )?;
            if !self.model.params.is_finite() {
                return Err(Error::NonFinite("parameters after update"));
            }
            total += loss;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    /// Fills `self.grads` with the batch-averaged gradient and returns the
    /// batch loss. Per-thread partial sums are reduced in chunk order.
    fn batch_gradient(&mut self, data: &[Sample], batch: &[usize], epoch: usize) -> Result<f64> {
        let scale = 1.0 / batch.len() as f64;
        let seed = self.cfg.seed;
        let model = &self.model;
        let run = |idx: &[usize], grads: &mut ModelParams<T>| -> Result<f64> {
            let mut loss = 0.0;
            for &i in idx {
                loss += model.sample_loss_and_grad(&data[i], sample_seed(seed, epoch, i), scale, grads)?;
            }
            Ok(loss)
        };
        let threads = self.cfg.threads.min(batch.len());
        let loss = if threads <= 1 {
            run(batch, &mut self.grads)?
        } else {
            let chunk = batch.len().div_ceil(threads);
            let partials: Vec<Result<(f64, ModelParams<T>)>> = std::thread::scope(|s| {
                let handles: Vec<_> = batch
                    .chunks(chunk)
                    .map(|idx| {
                        s.spawn(move || {
                            let mut g = model.params.zeros_like();
                            run(idx, &mut g).map(|l| (l, g))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training worker panicked"))
                    .collect()
            });
            let mut loss = 0.0;
            for part in partials {
                let (l, g) = part?;
                loss += l;
                for (acc, t) in self.grads.tensors_mut().into_iter().zip(g.named_tensors()) {
                    acc.add_assign(t.1)?;
                }
            }
            loss
        };
        Ok(loss * scale)
    }

    pub fn into_model(self) -> Model<T> {
        self.model
    }
}

/// Seeded split of `0..n` into `(train, held_out)`, each in ascending order.
/// The held-out part has `round(n · fraction)` indices.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((n as f64 * fraction).round() as usize).min(n);
    let mut held = order[..k].to_vec();
    let mut train = order[k..].to_vec();
    held.sort_unstable();
    train.sort_unstable();
    (train, held)
}

/// Predicted class of every sample, using the model's inference seed.
pub fn predict_labels<T: Scalar>(model: &Model<T>, data: &[Sample]) -> Result<Vec<usize>> {
    data.iter().map(|s| model.predict(s).map(|p| predicted_label(&p))).collect()
}

pub fn evaluate<T: Scalar>(model: &Model<T>, data: &[Sample]) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = predict_labels(model, data)?;
    let labels: Vec<usize> = data.iter().map(|s| s.label).collect();
    MetricsReport::evaluate(&preds, &labels, model.cfg.classes)
}
