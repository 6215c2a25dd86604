//! Symmetric contrastive loss over matched embedding batches and the
//! in-batch retrieval metric.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Symmetric cross-entropy over the temperature-scaled similarity matrix:
/// half the mean row-wise cross-entropy against diagonal targets plus the
/// same for the transpose. Returns the loss and analytic gradients with
/// respect to both embedding matrices. Inputs are expected row-normalized.
pub fn clip_loss(
    image_embeddings: &Matrix,
    text_embeddings: &Matrix,
    temperature: f64,
) -> Result<(f64, Matrix, Matrix)> {
    if image_embeddings.shape() != text_embeddings.shape() {
        return Err(Error::ShapeMismatch {
            op: "clip_loss",
            left: image_embeddings.shape(),
            right: text_embeddings.shape(),
        });
    }
    let batch = image_embeddings.rows();
    if batch < 2 {
        return Err(Error::DegenerateBatch { size: batch });
    }
    if !(temperature > 0.0) {
        return Err(Error::NonPositive {
            what: "temperature",
            value: temperature,
        });
    }

    let sim = Matrix::from_fn(batch, batch, |i, j| {
        dot(image_embeddings.row(i), text_embeddings.row(j)) / temperature
    })?;
    let p_row = sim.softmax_rows();
    let p_col = sim.transpose()?.softmax_rows();

    let mut loss = 0.0;
    for i in 0..batch {
        loss += libm::log(p_row.get(i, i)) + libm::log(p_col.get(i, i));
    }
    loss *= -0.5 / batch as f64;

    // dS = ((P_row - I) + (P_col - I)^T) / (2 B); chain through S = Z_i Z_t^T / T.
    let scale = 0.5 / batch as f64;
    let d_sim = Matrix::from_fn(batch, batch, |i, j| {
        let target = if i == j { 1.0 } else { 0.0 };
        ((p_row.get(i, j) - target) + (p_col.get(j, i) - target)) * scale
    })?;
    let d_image = d_sim.matmul(text_embeddings)?.scale(1.0 / temperature);
    let d_text = d_sim
        .transpose()?
        .matmul(image_embeddings)?
        .scale(1.0 / temperature);
    Ok((loss, d_image, d_text))
}

/// Fraction of rows whose most similar text embedding is their matched
/// pair. Ties break toward the lowest index.
pub fn batch_retrieval_accuracy(
    image_embeddings: &Matrix,
    text_embeddings: &Matrix,
) -> Result<f64> {
    if image_embeddings.shape() != text_embeddings.shape() {
        return Err(Error::ShapeMismatch {
            op: "batch_retrieval_accuracy",
            left: image_embeddings.shape(),
            right: text_embeddings.shape(),
        });
    }
    let batch = image_embeddings.rows();
    let mut correct = 0;
    for i in 0..batch {
        let mut best = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for j in 0..batch {
            let sim = dot(image_embeddings.row(i), text_embeddings.row(j));
            if sim > best_sim {
                best_sim = sim;
                best = j;
            }
        }
        if best == i {
            correct += 1;
        }
    }
    Ok(correct as f64 / batch as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{finite_difference_grads, max_relative_error};
    use crate::rng::{Dist, RngState};
    use alloc::vec;

    // -ln(e / (e + 1)) summed symmetrically; computed independently
    const ORTHONORMAL_PAIR_LOSS: f64 = 0.31326168751822286;

    fn unit_rows(m: &Matrix) -> Matrix {
        m.l2_normalize_rows(1e-12)
    }

    #[test]
    fn orthonormal_pairs_frozen_loss() {
        let z = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (loss, _, _) = clip_loss(&z, &z, 1.0).unwrap();
        assert!((loss - ORTHONORMAL_PAIR_LOSS).abs() < 1e-15, "loss {loss}");
    }

    #[test]
    fn loss_is_exactly_symmetric() {
        let mut rng = RngState::new(31);
        let a = unit_rows(&Matrix::random(5, 4, &mut rng, Dist::StandardNormal).unwrap());
        let b = unit_rows(&Matrix::random(5, 4, &mut rng, Dist::StandardNormal).unwrap());
        let (ab, _, _) = clip_loss(&a, &b, 0.07).unwrap();
        let (ba, _, _) = clip_loss(&b, &a, 0.07).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn matched_diagonal_beats_shuffled_pairing() {
        let mut rng = RngState::new(32);
        let z = unit_rows(&Matrix::random(6, 8, &mut rng, Dist::StandardNormal).unwrap());
        let (matched, _, _) = clip_loss(&z, &z, 0.07).unwrap();
        // rotate text rows: every pair is now mismatched
        let shuffled = Matrix::from_fn(6, 8, |r, c| z.get((r + 1) % 6, c)).unwrap();
        let (mismatched, _, _) = clip_loss(&z, &shuffled, 0.07).unwrap();
        assert!(matched < mismatched);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngState::new(33);
        let img = unit_rows(&Matrix::random(4, 3, &mut rng, Dist::StandardNormal).unwrap());
        let txt = unit_rows(&Matrix::random(4, 3, &mut rng, Dist::StandardNormal).unwrap());
        let (_, d_img, d_txt) = clip_loss(&img, &txt, 0.2).unwrap();
        let fd_img = finite_difference_grads(
            |probe| clip_loss(probe, &txt, 0.2).unwrap().0,
            &img,
            1e-5,
        );
        let fd_txt = finite_difference_grads(
            |probe| clip_loss(&img, probe, 0.2).unwrap().0,
            &txt,
            1e-5,
        );
        assert!(max_relative_error(&d_img, &fd_img).unwrap() <= 1e-6);
        assert!(max_relative_error(&d_txt, &fd_txt).unwrap() <= 1e-6);
    }

    #[test]
    fn degenerate_batch_rejected() {
        let z = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            clip_loss(&z, &z, 1.0),
            Err(Error::DegenerateBatch { size: 1 })
        ));
    }

    #[test]
    fn accuracy_identical_embeddings_is_one() {
        let mut rng = RngState::new(34);
        let z = unit_rows(&Matrix::random(5, 6, &mut rng, Dist::StandardNormal).unwrap());
        assert_eq!(batch_retrieval_accuracy(&z, &z).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_anti_aligned_is_zero() {
        let z = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let neg = z.scale(-1.0);
        assert_eq!(batch_retrieval_accuracy(&neg, &z).unwrap(), 0.0);
    }

    #[test]
    fn accuracy_random_embeddings_near_chance() {
        let mut rng = RngState::new(35);
        let mut total = 0.0;
        for _ in 0..200 {
            let img = unit_rows(&Matrix::random(8, 8, &mut rng, Dist::StandardNormal).unwrap());
            let txt = unit_rows(&Matrix::random(8, 8, &mut rng, Dist::StandardNormal).unwrap());
            total += batch_retrieval_accuracy(&img, &txt).unwrap();
        }
        let mean = total / 200.0;
        assert!((0.05..=0.25).contains(&mean), "mean accuracy {mean}");
    }

    #[test]
    fn ties_break_toward_lowest_index() {
        // duplicate text rows: row 1's argmax ties between 0 and 1
        let img = Matrix::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let txt = img.clone();
        // row 0 retrieves 0 (correct), row 1 ties and picks 0 (incorrect)
        assert_eq!(batch_retrieval_accuracy(&img, &txt).unwrap(), 0.5);
    }
}
