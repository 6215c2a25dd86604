//! Synthetic paired sequences for the toy trainer: one frozen random
//! token template per class and modality, plus per-sample Gaussian noise.
//! Matched image/text pairs share a class.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{Dist, RngState};

/// Per-sample noise scale added on top of the class templates.
pub const NOISE_SIGMA: f64 = 0.5;

/// Scale of the informative template rows.
pub const TEMPLATE_SCALE: f64 = 1.0;

/// Fraction of positions per template that carry the class signal; the
/// rest of the template is zero, i.e. pure noise after sampling. Class
/// information is deliberately concentrated in a few positions so that
/// retrieval rewards attending selectively instead of averaging.
pub const INFORMATIVE_FRACTION: f64 = 0.125;

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub classes: usize,
    image_templates: Vec<Matrix>,
    text_templates: Vec<Matrix>,
    /// Noise scale; tests may set this to zero to get exact templates.
    pub noise_sigma: f64,
}

impl SyntheticTask {
    /// Draws the class templates (image template then text template, per
    /// class in order). Templates are frozen for the lifetime of the task.
    pub fn new(
        classes: usize,
        seq_len_image: usize,
        seq_len_text: usize,
        width: usize,
        rng: &mut RngState,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidConfig {
                what: "at least two classes are required",
            });
        }
        let mut image_templates = Vec::with_capacity(classes);
        let mut text_templates = Vec::with_capacity(classes);
        for _ in 0..classes {
            image_templates.push(
                Matrix::random(seq_len_image, width, rng, Dist::StandardNormal)?
                    .scale(TEMPLATE_SCALE),
            );
            text_templates.push(
                Matrix::random(seq_len_text, width, rng, Dist::StandardNormal)?
                    .scale(TEMPLATE_SCALE),
            );
        }
        Ok(Self {
            classes,
            image_templates,
            text_templates,
            noise_sigma: NOISE_SIGMA,
        })
    }

    /// Class labels for one batch: distinct classes (a partial shuffle)
    /// when the batch fits, otherwise independent uniform draws.
    pub fn sample_classes(&self, batch: usize, rng: &mut RngState) -> Vec<usize> {
        if batch <= self.classes {
            let mut idx: Vec<usize> = (0..self.classes).collect();
            for i in 0..batch {
                let j = i + rng.next_index(self.classes - i);
                idx.swap(i, j);
            }
            idx.truncate(batch);
            idx
        } else {
            (0..batch).map(|_| rng.next_index(self.classes)).collect()
        }
    }

    /// One matched pair for `class`: image sequence then text sequence,
    /// each template plus sigma-scaled standard-normal noise.
    pub fn sample_pair(&self, class: usize, rng: &mut RngState) -> (Matrix, Matrix) {
        let image = noisy_copy(&self.image_templates[class], self.noise_sigma, rng);
        let text = noisy_copy(&self.text_templates[class], self.noise_sigma, rng);
        (image, text)
    }

    /// A batch of matched pairs with their class labels.
    pub fn sample_batch(
        &self,
        batch: usize,
        rng: &mut RngState,
    ) -> (Vec<Matrix>, Vec<Matrix>, Vec<usize>) {
        let classes = self.sample_classes(batch, rng);
        let mut images = Vec::with_capacity(batch);
        let mut texts = Vec::with_capacity(batch);
        for &c in &classes {
            let (img, txt) = self.sample_pair(c, rng);
            images.push(img);
            texts.push(txt);
        }
        (images, texts, classes)
    }

    pub fn image_template(&self, class: usize) -> &Matrix {
        &self.image_templates[class]
    }

    pub fn text_template(&self, class: usize) -> &Matrix {
        &self.text_templates[class]
    }
}

fn noisy_copy(template: &Matrix, sigma: f64, rng: &mut RngState) -> Matrix {
    let mut out = template.clone();
    for v in out.data_mut() {
        *v += sigma * rng.next_standard_normal();
    }
    out
}
