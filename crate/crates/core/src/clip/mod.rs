//! Desk-scale contrastive dual-encoder trainer over synthetic paired
//! sequences. Plain SGD with a fixed learning rate; deterministic for a
//! fixed seed. The image tower runs non-causal attention and the text
//! tower causal attention, both dispatched over the configured variant.

mod data;
mod loss;
mod model;

pub use data::{SyntheticTask, NOISE_SIGMA};
pub use loss::{batch_retrieval_accuracy, clip_loss};
pub use model::ClipModel;

use alloc::vec::Vec;

use crate::attention::AttentionVariant;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngState;

/// Steps between retrieval-accuracy evaluations.
pub const EVAL_INTERVAL: usize = 25;
/// Eval batches averaged per evaluation; each batch holds one sample per
/// class so the retrieval targets are unambiguous.
pub const EVAL_BATCHES: usize = 8;
/// Accuracy that counts as "trained" for `steps_to_threshold`.
pub const ACCURACY_THRESHOLD: f64 = 0.9;

const EVAL_SEED_SALT: u64 = 0x9D06_A7F1_22C3_55E4;

/// Full configuration of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTrainConfig {
    pub classes: usize,
    pub seq_len_image: usize,
    pub seq_len_text: usize,
    pub width: usize,
    pub heads: usize,
    pub layers: usize,
    pub embed_dim: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub variant: AttentionVariant,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            seq_len_image: 16,
            seq_len_text: 16,
            width: 32,
            heads: 2,
            layers: 2,
            embed_dim: 16,
            temperature: 0.1,
            learning_rate: 0.5,
            batch_size: 8,
            steps: 500,
            seed: 1,
            variant: AttentionVariant::SoftmaxReference,
        }
    }
}

impl ToyTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::InvalidConfig {
                what: "width must be a positive multiple of heads",
            });
        }
        if self.classes < 2 {
            return Err(Error::InvalidConfig {
                what: "at least two classes are required",
            });
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig {
                what: "batch_size must be at least 2",
            });
        }
        if self.seq_len_image == 0 || self.seq_len_text == 0 || self.layers == 0 {
            return Err(Error::InvalidConfig {
                what: "sequence lengths and layers must be at least 1",
            });
        }
        if self.embed_dim == 0 || self.steps == 0 {
            return Err(Error::InvalidConfig {
                what: "embed_dim and steps must be at least 1",
            });
        }
        if !(self.temperature > 0.0) {
            return Err(Error::NonPositive {
                what: "temperature",
                value: self.temperature,
            });
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::NonPositive {
                what: "learning_rate",
                value: self.learning_rate,
            });
        }
        Ok(())
    }
}

/// Trajectory of one run: loss per step, retrieval accuracy at each
/// evaluation step, and the first eval step that cleared
/// [`ACCURACY_THRESHOLD`] (if any).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub accuracies: Vec<(usize, f64)>,
    pub final_loss: f64,
    pub final_accuracy: f64,
    pub steps_to_threshold: Option<usize>,
}

/// Runs SGD over fresh synthetic batches. Identical config and seed give
/// an identical report.
pub fn train(cfg: &ToyTrainConfig) -> Result<TrainReport> {
    train_impl(cfg, None)
}

/// Test hook: run with every attention call forced to `forced`, leaving
/// the rest of the pipeline (seeding, data, order of operations)
/// untouched. Used to check the variants are interchangeable behind the
/// encoder interface.
#[doc(hidden)]
pub fn train_with_variant_override(
    cfg: &ToyTrainConfig,
    forced: AttentionVariant,
) -> Result<TrainReport> {
    train_impl(cfg, Some(forced))
}

fn train_impl(cfg: &ToyTrainConfig, forced: Option<AttentionVariant>) -> Result<TrainReport> {
    cfg.validate()?;
    let variant = forced.unwrap_or(cfg.variant);
    let mut rng = RngState::new(cfg.seed);
    let mut model = ClipModel::init(cfg, &mut rng)?;
    let task = SyntheticTask::new(
        cfg.classes,
        cfg.seq_len_image,
        cfg.seq_len_text,
        cfg.width,
        &mut rng,
    )?;
    let mut eval_rng = RngState::new(cfg.seed ^ EVAL_SEED_SALT);

    let mut losses = Vec::with_capacity(cfg.steps);
    let mut accuracies = Vec::new();
    let mut steps_to_threshold = None;

    for step in 1..=cfg.steps {
        let (images, texts, _) = task.sample_batch(cfg.batch_size, &mut rng);
        let (loss, grads) = batch_loss_and_grads(&model, &images, &texts, variant, cfg.temperature)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        model.apply_gradients(&grads, cfg.learning_rate);
        losses.push(loss);

        if step % EVAL_INTERVAL == 0 {
            let acc = evaluate(&model, &task, variant, &mut eval_rng)?;
            accuracies.push((step, acc));
            if steps_to_threshold.is_none() && acc >= ACCURACY_THRESHOLD {
                steps_to_threshold = Some(step);
            }
        }
    }

    let final_loss = *losses.last().expect("steps >= 1");
    let final_accuracy = accuracies.last().map(|&(_, a)| a).unwrap_or(0.0);
    Ok(TrainReport {
        losses,
        accuracies,
        final_loss,
        final_accuracy,
        steps_to_threshold,
    })
}

/// Loss of one matched batch under the current parameters.
pub fn batch_loss(
    model: &ClipModel,
    images: &[Matrix],
    texts: &[Matrix],
    variant: AttentionVariant,
    temperature: f64,
) -> Result<f64> {
    batch_loss_and_grads(model, images, texts, variant, temperature).map(|(l, _)| l)
}

/// Loss of one matched batch plus parameter gradients, accumulated in a
/// zeros-shaped copy of the model.
pub fn batch_loss_and_grads(
    model: &ClipModel,
    images: &[Matrix],
    texts: &[Matrix],
    variant: AttentionVariant,
    temperature: f64,
) -> Result<(f64, ClipModel)> {
    if images.len() != texts.len() {
        return Err(Error::InvalidConfig {
            what: "image and text batches must have equal size",
        });
    }
    let batch = images.len();
    if batch < 2 {
        return Err(Error::DegenerateBatch { size: batch });
    }

    let mut image_caches = Vec::with_capacity(batch);
    let mut text_caches = Vec::with_capacity(batch);
    let embed_dim = model.image.proj.w.cols();
    let mut z_image = Matrix::zeros(batch, embed_dim)?;
    let mut z_text = Matrix::zeros(batch, embed_dim)?;
    for b in 0..batch {
        let (zi, ci) = model.image.forward(&images[b], model.heads, variant)?;
        let (zt, ct) = model.text.forward(&texts[b], model.heads, variant)?;
        z_image.row_mut(b).copy_from_slice(&zi);
        z_text.row_mut(b).copy_from_slice(&zt);
        image_caches.push(ci);
        text_caches.push(ct);
    }

    let (loss, d_image, d_text) = clip_loss(&z_image, &z_text, temperature)?;

    let mut grads = model.zeros_like();
    for b in 0..batch {
        model.image.backward(
            &image_caches[b],
            d_image.row(b),
            model.heads,
            variant,
            &mut grads.image,
        )?;
        model.text.backward(
            &text_caches[b],
            d_text.row(b),
            model.heads,
            variant,
            &mut grads.text,
        )?;
    }
    Ok((loss, grads))
}

fn evaluate(
    model: &ClipModel,
    task: &SyntheticTask,
    variant: AttentionVariant,
    rng: &mut RngState,
) -> Result<f64> {
    let embed_dim = model.image.proj.w.cols();
    let mut total = 0.0;
    for _ in 0..EVAL_BATCHES {
        let (images, texts, _) = task.sample_batch(task.classes, rng);
        let mut z_image = Matrix::zeros(task.classes, embed_dim)?;
        let mut z_text = Matrix::zeros(task.classes, embed_dim)?;
        for b in 0..task.classes {
            z_image
                .row_mut(b)
                .copy_from_slice(&model.encode_image(&images[b], variant)?);
            z_text
                .row_mut(b)
                .copy_from_slice(&model.encode_text(&texts[b], variant)?);
        }
        total += batch_retrieval_accuracy(&z_image, &z_text)?;
    }
    Ok(total / EVAL_BATCHES as f64)
}
