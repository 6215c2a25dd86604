//! Randomized invariants of the matrix substrate and attention kernels.

use proptest::prelude::*;

use linatt_core::attention::linear::{self, LinearKind};
use linatt_core::attention::softmax;
use linatt_core::attention::AttentionVariant;
use linatt_core::matrix::NORM_EPS;
use linatt_core::oracle::{kernel_view_reference, max_abs_diff, KernelKind};
use linatt_core::{Dist, Matrix, RngState};

fn random_matrix(n: usize, d: usize, rng: &mut RngState) -> Matrix {
    Matrix::random(n, d, rng, Dist::StandardNormal).unwrap()
}

fn forward(variant: AttentionVariant, q: &Matrix, k: &Matrix, v: &Matrix, causal: bool) -> Matrix {
    match variant {
        AttentionVariant::SoftmaxReference => softmax::forward(q, k, v, causal).unwrap(),
        AttentionVariant::LinearNormalized => linear::forward_normalized(q, k, v, causal).unwrap(),
        AttentionVariant::LinearDenomFree => linear::forward_denomfree(q, k, v, causal).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// (AB)C and A(BC) agree at double precision for small inputs.
    #[test]
    fn matmul_associativity(seed in 0u64..1_000_000) {
        let mut rng = RngState::new(seed);
        let a = Matrix::random(8, 8, &mut rng, Dist::UniformSymmetric).unwrap();
        let b = Matrix::random(8, 8, &mut rng, Dist::UniformSymmetric).unwrap();
        let c = Matrix::random(8, 8, &mut rng, Dist::UniformSymmetric).unwrap();
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(max_abs_diff(&left, &right).unwrap() <= 1e-9);
    }

    /// Softmax rows sum to one and stay in [0, 1].
    #[test]
    fn softmax_rows_stochastic(seed in 0u64..1_000_000, n in 1usize..24, d in 1usize..12) {
        let mut rng = RngState::new(seed);
        let m = random_matrix(n, d, &mut rng).softmax_rows();
        for r in 0..n {
            let sum: f64 = m.row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(m.row(r).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    /// Row normalization twice equals once.
    #[test]
    fn normalize_idempotent(seed in 0u64..1_000_000, n in 1usize..16, d in 1usize..12) {
        let mut rng = RngState::new(seed);
        let m = random_matrix(n, d, &mut rng);
        let once = m.l2_normalize_rows(NORM_EPS);
        let twice = once.l2_normalize_rows(NORM_EPS);
        prop_assert!(max_abs_diff(&once, &twice).unwrap() <= 1e-12);
    }

    /// Attention output is linear in V for every variant.
    #[test]
    fn linearity_in_values(seed in 0u64..1_000_000, causal in any::<bool>()) {
        let mut rng = RngState::new(seed);
        let n = 1 + rng.next_index(16);
        let d = 1 + rng.next_index(8);
        let q = random_matrix(n, d, &mut rng);
        let k = random_matrix(n, d, &mut rng);
        let v1 = random_matrix(n, d, &mut rng);
        let v2 = random_matrix(n, d, &mut rng);
        let (alpha, beta) = (0.7, -1.3);
        let combo = v1.scale(alpha).add(&v2.scale(beta)).unwrap();
        for variant in AttentionVariant::ALL {
            if variant == AttentionVariant::LinearNormalized
                && linear::forward_normalized(&q, &k, &combo, causal).is_err()
            {
                // degenerate denominator draw (possible at d = 1)
                continue;
            }
            let lhs = forward(variant, &q, &k, &combo, causal);
            let rhs = forward(variant, &q, &k, &v1, causal)
                .scale(alpha)
                .add(&forward(variant, &q, &k, &v2, causal).scale(beta))
                .unwrap();
            prop_assert!(max_abs_diff(&lhs, &rhs).unwrap() <= 1e-10, "{variant}");
        }
    }

    /// Causal outputs at positions <= i ignore suffix changes to K and V.
    #[test]
    fn causal_prefix_untouched_by_suffix(seed in 0u64..1_000_000) {
        let mut rng = RngState::new(seed);
        let n = 3 + rng.next_index(12);
        let d = 1 + rng.next_index(8);
        let split = 1 + rng.next_index(n - 1);
        let q = random_matrix(n, d, &mut rng);
        let k = random_matrix(n, d, &mut rng);
        let v = random_matrix(n, d, &mut rng);
        let mut k2 = k.clone();
        let mut v2 = v.clone();
        for r in split..n {
            for c in 0..d {
                k2.set(r, c, k2.get(r, c) + 3.5);
                v2.set(r, c, v2.get(r, c) - 2.25);
            }
        }
        for variant in AttentionVariant::ALL {
            if variant == AttentionVariant::LinearNormalized
                && (linear::forward_normalized(&q, &k, &v, true).is_err()
                    || linear::forward_normalized(&q, &k2, &v2, true).is_err())
            {
                continue;
            }
            let base = forward(variant, &q, &k, &v, true);
            let perturbed = forward(variant, &q, &k2, &v2, true);
            for r in 0..split {
                prop_assert_eq!(base.row(r), perturbed.row(r), "{} row {}", variant, r);
            }
        }
    }

    /// Non-causal softmax attention is invariant to joint K/V permutation.
    #[test]
    fn permutation_equivariance_non_causal(seed in 0u64..1_000_000) {
        let mut rng = RngState::new(seed);
        let n = 2 + rng.next_index(12);
        let d = 1 + rng.next_index(8);
        let q = random_matrix(n, d, &mut rng);
        let k = random_matrix(n, d, &mut rng);
        let v = random_matrix(n, d, &mut rng);
        // deterministic permutation: rotate rows by one
        let rot = |m: &Matrix| {
            Matrix::from_fn(n, d, |r, c| m.get((r + 1) % n, c)).unwrap()
        };
        let base = softmax::forward(&q, &k, &v, false).unwrap();
        let permuted = softmax::forward(&q, &rot(&k), &rot(&v), false).unwrap();
        prop_assert!(max_abs_diff(&base, &permuted).unwrap() <= 1e-12);
    }

    /// Rescaling any raw query row leaves linear-variant outputs unchanged.
    #[test]
    fn query_scale_invariance(seed in 0u64..1_000_000, scale in 0.05f64..20.0) {
        let mut rng = RngState::new(seed);
        let n = 1 + rng.next_index(12);
        let d = 1 + rng.next_index(8);
        let q = random_matrix(n, d, &mut rng);
        let k = random_matrix(n, d, &mut rng);
        let v = random_matrix(n, d, &mut rng);
        let q_scaled = q.scale(scale);
        for causal in [false, true] {
            if linear::forward_normalized(&q, &k, &v, causal).is_err() {
                continue;
            }
            let a = linear::forward_normalized(&q, &k, &v, causal).unwrap();
            let b = linear::forward_normalized(&q_scaled, &k, &v, causal).unwrap();
            prop_assert!(max_abs_diff(&a, &b).unwrap() <= 1e-10);
            let a = linear::forward_denomfree(&q, &k, &v, causal).unwrap();
            let b = linear::forward_denomfree(&q_scaled, &k, &v, causal).unwrap();
            prop_assert!(max_abs_diff(&a, &b).unwrap() <= 1e-10);
        }
    }

    /// Fast paths agree with the scalar oracle on random shapes.
    #[test]
    fn fast_paths_match_oracle(seed in 0u64..1_000_000) {
        let mut rng = RngState::new(seed);
        let n = 1 + rng.next_index(32);
        let d = 1 + rng.next_index(8);
        let q = random_matrix(n, d, &mut rng);
        let k = random_matrix(n, d, &mut rng);
        let v = random_matrix(n, d, &mut rng);
        for causal in [false, true] {
            for (variant, kernel) in [
                (AttentionVariant::SoftmaxReference, KernelKind::Exponential),
                (AttentionVariant::LinearNormalized, KernelKind::AffineNormalized),
                (AttentionVariant::LinearDenomFree, KernelKind::AffineDenomFree),
            ] {
                if variant == AttentionVariant::LinearNormalized
                    && linear::forward_normalized(&q, &k, &v, causal).is_err()
                {
                    continue;
                }
                let fast = forward(variant, &q, &k, &v, causal);
                let reference = kernel_view_reference(&q, &k, &v, kernel, causal).unwrap();
                prop_assert!(max_abs_diff(&fast, &reference).unwrap() <= 1e-10, "{variant}");
            }
        }
    }

    /// Denominator-free scores stay in [0, 1] and the row maximum is
    /// (1 + max cosine) / 2 for the visible positions.
    #[test]
    fn denomfree_score_range(seed in 0u64..1_000_000, causal in any::<bool>()) {
        let mut rng = RngState::new(seed);
        let n = 1 + rng.next_index(24);
        let d = 1 + rng.next_index(8);
        let q = random_matrix(n, d, &mut rng);
        let k = random_matrix(n, d, &mut rng);
        let s = linear::scores(&q, &k, LinearKind::DenomFree, causal).unwrap();
        let qh = q.l2_normalize_rows(NORM_EPS);
        let kh = k.l2_normalize_rows(NORM_EPS);
        for i in 0..n {
            let hi = if causal { i } else { n - 1 };
            let mut max_cos = f64::NEG_INFINITY;
            for nn in 0..=hi {
                let cos: f64 = qh.row(i).iter().zip(kh.row(nn)).map(|(a, b)| a * b).sum();
                max_cos = max_cos.max(cos);
            }
            let row_max = s.row(i)[..=hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.row(i).iter().all(|&w| (-1e-12..=1.0 + 1e-12).contains(&w)));
            prop_assert!((row_max - (1.0 + max_cos) / 2.0).abs() <= 1e-12);
        }
    }
}
