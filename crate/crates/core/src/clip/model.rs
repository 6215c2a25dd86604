//! Dual-encoder parameters and the hand-derived forward/backward passes.
//!
//! Each tower is a stack of post-norm transformer blocks: multi-head
//! attention (variant-dispatched) -> residual -> layer norm -> two-layer
//! MLP with tanh -> residual -> layer norm, followed by mean pooling, a
//! linear projection to the shared embedding dimension, and L2
//! normalization. tanh is used as the activation everywhere because its
//! derivative (1 - tanh^2) keeps the backward pass exactly hand-checkable.

use alloc::vec;
use alloc::vec::Vec;

use crate::attention::{linear, softmax, AttentionVariant};
use crate::error::{Error, Result};
use crate::matrix::{dot, l2_norm, Matrix, NORM_EPS};
use crate::rng::{Dist, RngState};

use super::ToyTrainConfig;

pub(crate) const LN_EPS: f64 = 1e-5;
pub(crate) const MLP_RATIO: usize = 4;
const POS_INIT_STD: f64 = 0.02;

fn mm(a: &Matrix, b: &Matrix) -> Matrix {
    a.matmul(b).expect("encoder shapes are construction-consistent")
}

// ---------------------------------------------------------------- linear

#[derive(Debug, Clone)]
pub(crate) struct Dense {
    pub w: Matrix, // fan_in x fan_out
    pub b: Vec<f64>,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, rng: &mut RngState) -> Result<Self> {
        let std = 1.0 / libm::sqrt(fan_in as f64);
        let w = Matrix::random(fan_in, fan_out, rng, Dist::StandardNormal)?.scale(std);
        Ok(Self {
            w,
            b: vec![0.0; fan_out],
        })
    }

    /// Bias-free projection. The attention projections use this: a key
    /// bias shifts every score in a row by the same amount, which softmax
    /// cancels exactly, leaving a parameter with no gradient path.
    fn init_no_bias(fan_in: usize, fan_out: usize, rng: &mut RngState) -> Result<Self> {
        let std = 1.0 / libm::sqrt(fan_in as f64);
        let w = Matrix::random(fan_in, fan_out, rng, Dist::StandardNormal)?.scale(std);
        Ok(Self { w, b: Vec::new() })
    }

    fn zeros(fan_in: usize, fan_out: usize) -> Result<Self> {
        Ok(Self {
            w: Matrix::zeros(fan_in, fan_out)?,
            b: vec![0.0; fan_out],
        })
    }

    fn zeros_like(&self) -> Self {
        Self {
            w: Matrix::zeros(self.w.rows(), self.w.cols()).expect("existing shape"),
            b: vec![0.0; self.b.len()],
        }
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = mm(x, &self.w);
        for r in 0..y.rows() {
            for (v, &b) in y.row_mut(r).iter_mut().zip(&self.b) {
                *v += b;
            }
        }
        y
    }

    /// Accumulates dW and db, returns dX.
    fn backward(&self, x: &Matrix, d_y: &Matrix, grad: &mut Dense) -> Matrix {
        let d_w = mm(&x.transpose().expect("shape"), d_y);
        add_in_place(&mut grad.w, &d_w);
        for r in 0..d_y.rows() {
            for (g, &dy) in grad.b.iter_mut().zip(d_y.row(r)) {
                *g += dy;
            }
        }
        mm(d_y, &self.w.transpose().expect("shape"))
    }

    fn for_each(&self, f: &mut impl FnMut(f64)) {
        for v in self.w.iter() {
            f(v);
        }
        for &v in &self.b {
            f(v);
        }
    }

    fn for_each_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for v in self.w.data_mut() {
            f(v);
        }
        for v in self.b.iter_mut() {
            f(v);
        }
    }
}

// ------------------------------------------------------------ layer norm

#[derive(Debug, Clone)]
pub(crate) struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub(crate) struct LnCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    fn identity(width: usize) -> Self {
        Self {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
        }
    }

    fn zeros(width: usize) -> Self {
        Self {
            gamma: vec![0.0; width],
            beta: vec![0.0; width],
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.gamma.len())
    }

    fn forward(&self, x: &Matrix) -> (Matrix, LnCache) {
        let (rows, w) = x.shape();
        let wf = w as f64;
        let mut xhat = Matrix::zeros(rows, w).expect("shape");
        let mut inv_std = vec![0.0; rows];
        let mut y = Matrix::zeros(rows, w).expect("shape");
        for r in 0..rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / wf;
            let mut var = 0.0;
            for &v in row {
                var += (v - mean) * (v - mean);
            }
            var /= wf;
            let inv = 1.0 / libm::sqrt(var + LN_EPS);
            inv_std[r] = inv;
            for j in 0..w {
                let xh = (row[j] - mean) * inv;
                xhat.set(r, j, xh);
                y.set(r, j, self.gamma[j] * xh + self.beta[j]);
            }
        }
        (y, LnCache { xhat, inv_std })
    }

    fn backward(&self, cache: &LnCache, d_y: &Matrix, grad: &mut LayerNorm) -> Matrix {
        let (rows, w) = d_y.shape();
        let wf = w as f64;
        let mut d_x = Matrix::zeros(rows, w).expect("shape");
        for r in 0..rows {
            let dy_row = d_y.row(r);
            let xh_row = cache.xhat.row(r);
            let mut m1 = 0.0; // mean of gamma * dy
            let mut m2 = 0.0; // mean of gamma * dy * xhat
            for j in 0..w {
                let dxh = dy_row[j] * self.gamma[j];
                m1 += dxh;
                m2 += dxh * xh_row[j];
                grad.gamma[j] += dy_row[j] * xh_row[j];
                grad.beta[j] += dy_row[j];
            }
            m1 /= wf;
            m2 /= wf;
            let inv = cache.inv_std[r];
            for j in 0..w {
                let dxh = dy_row[j] * self.gamma[j];
                d_x.set(r, j, inv * (dxh - m1 - xh_row[j] * m2));
            }
        }
        d_x
    }

    fn for_each(&self, f: &mut impl FnMut(f64)) {
        for &v in &self.gamma {
            f(v);
        }
        for &v in &self.beta {
            f(v);
        }
    }

    fn for_each_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for v in self.gamma.iter_mut() {
            f(v);
        }
        for v in self.beta.iter_mut() {
            f(v);
        }
    }
}

// ----------------------------------------------------------------- block

#[derive(Debug, Clone)]
pub(crate) struct Block {
    wq: Dense,
    wk: Dense,
    wv: Dense,
    wo: Dense,
    ln1: LayerNorm,
    fc1: Dense,
    fc2: Dense,
    ln2: LayerNorm,
}

pub(crate) struct BlockCache {
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    attn_concat: Matrix,
    ln1: LnCache,
    y1: Matrix,
    act: Matrix, // tanh output
    ln2: LnCache,
}

impl Block {
    fn init(width: usize, rng: &mut RngState) -> Result<Self> {
        let hidden = width * MLP_RATIO;
        Ok(Self {
            wq: Dense::init_no_bias(width, width, rng)?,
            wk: Dense::init_no_bias(width, width, rng)?,
            wv: Dense::init_no_bias(width, width, rng)?,
            wo: Dense::init_no_bias(width, width, rng)?,
            ln1: LayerNorm::identity(width),
            fc1: Dense::init(width, hidden, rng)?,
            fc2: Dense::init(hidden, width, rng)?,
            ln2: LayerNorm::identity(width),
        })
    }

    fn zeros_like(&self) -> Self {
        Self {
            wq: self.wq.zeros_like(),
            wk: self.wk.zeros_like(),
            wv: self.wv.zeros_like(),
            wo: self.wo.zeros_like(),
            ln1: self.ln1.zeros_like(),
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
            ln2: self.ln2.zeros_like(),
        }
    }

    fn forward(
        &self,
        x: &Matrix,
        heads: usize,
        causal: bool,
        variant: AttentionVariant,
    ) -> Result<(Matrix, BlockCache)> {
        let width = x.cols();
        let head_dim = width / heads;
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);

        let mut attn_concat = Matrix::zeros(x.rows(), width)?;
        for h in 0..heads {
            let lo = h * head_dim;
            let qh = take_cols(&q, lo, head_dim);
            let kh = take_cols(&k, lo, head_dim);
            let vh = take_cols(&v, lo, head_dim);
            let oh = match variant {
                AttentionVariant::SoftmaxReference => softmax::forward(&qh, &kh, &vh, causal)?,
                AttentionVariant::LinearNormalized => {
                    linear::forward_normalized(&qh, &kh, &vh, causal)?
                }
                AttentionVariant::LinearDenomFree => {
                    linear::forward_denomfree(&qh, &kh, &vh, causal)?
                }
            };
            put_cols(&mut attn_concat, lo, &oh);
        }

        let proj = self.wo.forward(&attn_concat);
        let res1 = x.add(&proj)?;
        let (y1, ln1) = self.ln1.forward(&res1);
        let h1 = self.fc1.forward(&y1);
        let act = h1.map(libm::tanh);
        let h2 = self.fc2.forward(&act);
        let res2 = y1.add(&h2)?;
        let (y2, ln2) = self.ln2.forward(&res2);
        Ok((
            y2,
            BlockCache {
                x: x.clone(),
                q,
                k,
                v,
                attn_concat,
                ln1,
                y1,
                act,
                ln2,
            },
        ))
    }

    fn backward(
        &self,
        cache: &BlockCache,
        d_y2: &Matrix,
        heads: usize,
        causal: bool,
        variant: AttentionVariant,
        grad: &mut Block,
    ) -> Result<Matrix> {
        let width = cache.x.cols();
        let head_dim = width / heads;

        let d_res2 = self.ln2.backward(&cache.ln2, d_y2, &mut grad.ln2);
        let d_act = self.fc2.backward(&cache.act, &d_res2, &mut grad.fc2);
        let mut d_h1 = d_act;
        for (g, a) in d_h1.data_mut().iter_mut().zip(cache.act.iter()) {
            *g *= 1.0 - a * a;
        }
        let mut d_y1 = self.fc1.backward(&cache.y1, &d_h1, &mut grad.fc1);
        add_in_place(&mut d_y1, &d_res2); // residual: res2 = y1 + h2

        let d_res1 = self.ln1.backward(&cache.ln1, &d_y1, &mut grad.ln1);
        let d_attn_concat = self.wo.backward(&cache.attn_concat, &d_res1, &mut grad.wo);

        let mut d_q = Matrix::zeros(cache.x.rows(), width)?;
        let mut d_k = Matrix::zeros(cache.x.rows(), width)?;
        let mut d_v = Matrix::zeros(cache.x.rows(), width)?;
        for h in 0..heads {
            let lo = h * head_dim;
            let qh = take_cols(&cache.q, lo, head_dim);
            let kh = take_cols(&cache.k, lo, head_dim);
            let vh = take_cols(&cache.v, lo, head_dim);
            let d_oh = take_cols(&d_attn_concat, lo, head_dim);
            let (dqh, dkh, dvh) = match variant {
                AttentionVariant::SoftmaxReference => {
                    softmax::backward(&qh, &kh, &vh, causal, &d_oh)?
                }
                AttentionVariant::LinearNormalized => {
                    linear::backward(&qh, &kh, &vh, causal, linear::LinearKind::Normalized, &d_oh)?
                }
                AttentionVariant::LinearDenomFree => {
                    linear::backward(&qh, &kh, &vh, causal, linear::LinearKind::DenomFree, &d_oh)?
                }
            };
            put_cols(&mut d_q, lo, &dqh);
            put_cols(&mut d_k, lo, &dkh);
            put_cols(&mut d_v, lo, &dvh);
        }

        let mut d_x = self.wq.backward(&cache.x, &d_q, &mut grad.wq);
        add_in_place(&mut d_x, &self.wk.backward(&cache.x, &d_k, &mut grad.wk));
        add_in_place(&mut d_x, &self.wv.backward(&cache.x, &d_v, &mut grad.wv));
        add_in_place(&mut d_x, &d_res1); // residual: res1 = x + proj
        Ok(d_x)
    }

    fn for_each(&self, f: &mut impl FnMut(f64)) {
        self.wq.for_each(f);
        self.wk.for_each(f);
        self.wv.for_each(f);
        self.wo.for_each(f);
        self.ln1.for_each(f);
        self.fc1.for_each(f);
        self.fc2.for_each(f);
        self.ln2.for_each(f);
    }

    fn for_each_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        self.wq.for_each_mut(f);
        self.wk.for_each_mut(f);
        self.wv.for_each_mut(f);
        self.wo.for_each_mut(f);
        self.ln1.for_each_mut(f);
        self.fc1.for_each_mut(f);
        self.fc2.for_each_mut(f);
        self.ln2.for_each_mut(f);
    }
}

// ----------------------------------------------------------------- tower

#[derive(Debug, Clone)]
pub(crate) struct Tower {
    pub pos: Matrix, // seq_len x width, learned additive position embedding
    pub blocks: Vec<Block>,
    pub proj: Dense, // width x embed_dim
    pub causal: bool,
    pub use_pos: bool,
}

pub(crate) struct TowerCache {
    blocks: Vec<BlockCache>,
    pooled: Matrix,   // 1 x width
    z_unit: Vec<f64>, // normalized embedding
    z_norm: f64,
}

impl Tower {
    fn init(
        seq_len: usize,
        width: usize,
        layers: usize,
        embed_dim: usize,
        causal: bool,
        rng: &mut RngState,
    ) -> Result<Self> {
        let pos = Matrix::random(seq_len, width, rng, Dist::StandardNormal)?.scale(POS_INIT_STD);
        let mut blocks = Vec::with_capacity(layers);
        for _ in 0..layers {
            blocks.push(Block::init(width, rng)?);
        }
        let proj = Dense::init(width, embed_dim, rng)?;
        Ok(Self {
            pos,
            blocks,
            proj,
            causal,
            use_pos: true,
        })
    }

    fn zeros_like(&self) -> Self {
        Self {
            pos: Matrix::zeros(self.pos.rows(), self.pos.cols()).expect("shape"),
            blocks: self.blocks.iter().map(Block::zeros_like).collect(),
            proj: self.proj.zeros_like(),
            causal: self.causal,
            use_pos: self.use_pos,
        }
    }

    pub(crate) fn forward(
        &self,
        tokens: &Matrix,
        heads: usize,
        variant: AttentionVariant,
    ) -> Result<(Vec<f64>, TowerCache)> {
        if tokens.shape() != self.pos.shape() {
            return Err(Error::ShapeMismatch {
                op: "encode",
                left: tokens.shape(),
                right: self.pos.shape(),
            });
        }
        let mut x = if self.use_pos {
            tokens.add(&self.pos)?
        } else {
            tokens.clone()
        };
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, cache) = block.forward(&x, heads, self.causal, variant)?;
            x = y;
            caches.push(cache);
        }

        let seq_len = x.rows() as f64;
        let width = x.cols();
        let mut pooled = Matrix::zeros(1, width)?;
        for (p, s) in pooled.row_mut(0).iter_mut().zip(x.column_sums()) {
            *p = s / seq_len;
        }
        let z_raw = self.proj.forward(&pooled);
        let norm = l2_norm(z_raw.row(0));
        let div = if norm >= NORM_EPS { norm } else { NORM_EPS };
        let z_unit: Vec<f64> = z_raw.row(0).iter().map(|&v| v / div).collect();
        Ok((
            z_unit.clone(),
            TowerCache {
                blocks: caches,
                pooled,
                z_unit,
                z_norm: norm,
            },
        ))
    }

    pub(crate) fn backward(
        &self,
        cache: &TowerCache,
        d_z: &[f64],
        heads: usize,
        variant: AttentionVariant,
        grad: &mut Tower,
    ) -> Result<()> {
        // through z = z_raw / max(||z_raw||, eps)
        let embed_dim = d_z.len();
        let mut d_zraw = Matrix::zeros(1, embed_dim)?;
        if cache.z_norm >= NORM_EPS {
            let g_dot_z = dot(d_z, &cache.z_unit);
            for (o, (&g, &zu)) in d_zraw
                .row_mut(0)
                .iter_mut()
                .zip(d_z.iter().zip(&cache.z_unit))
            {
                *o = (g - g_dot_z * zu) / cache.z_norm;
            }
        } else {
            for (o, &g) in d_zraw.row_mut(0).iter_mut().zip(d_z) {
                *o = g / NORM_EPS;
            }
        }

        let d_pooled = self.proj.backward(&cache.pooled, &d_zraw, &mut grad.proj);
        let seq_len = self.pos.rows();
        let width = self.pos.cols();
        let inv_len = 1.0 / seq_len as f64;
        let mut d_x = Matrix::zeros(seq_len, width)?;
        for r in 0..seq_len {
            for (o, &g) in d_x.row_mut(r).iter_mut().zip(d_pooled.row(0)) {
                *o = g * inv_len;
            }
        }

        for i in (0..self.blocks.len()).rev() {
            d_x = self.blocks[i].backward(
                &cache.blocks[i],
                &d_x,
                heads,
                self.causal,
                variant,
                &mut grad.blocks[i],
            )?;
        }
        if self.use_pos {
            add_in_place(&mut grad.pos, &d_x);
        }
        Ok(())
    }
}

// ----------------------------------------------------------------- model

/// Dual-encoder parameters: a non-causal image tower and a causal text
/// tower sharing an embedding space.
#[derive(Debug, Clone)]
pub struct ClipModel {
    pub(crate) image: Tower,
    pub(crate) text: Tower,
    pub(crate) heads: usize,
}

impl ClipModel {
    /// Seeded initialization. Draw order: image tower (positions, blocks
    /// in order, projection), then text tower.
    pub fn init(cfg: &ToyTrainConfig, rng: &mut RngState) -> Result<Self> {
        cfg.validate()?;
        let image = Tower::init(
            cfg.seq_len_image,
            cfg.width,
            cfg.layers,
            cfg.embed_dim,
            false,
            rng,
        )?;
        let text = Tower::init(
            cfg.seq_len_text,
            cfg.width,
            cfg.layers,
            cfg.embed_dim,
            true,
            rng,
        )?;
        Ok(Self {
            image,
            text,
            heads: cfg.heads,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            image: self.image.zeros_like(),
            text: self.text.zeros_like(),
            heads: self.heads,
        }
    }

    /// Test hook: drop the additive position embeddings from both towers
    /// so non-causal encodings become permutation invariant.
    pub fn disable_position_embeddings(&mut self) {
        self.image.use_pos = false;
        self.text.use_pos = false;
    }

    pub fn encode_image(&self, tokens: &Matrix, variant: AttentionVariant) -> Result<Vec<f64>> {
        Ok(self.image.forward(tokens, self.heads, variant)?.0)
    }

    pub fn encode_text(&self, tokens: &Matrix, variant: AttentionVariant) -> Result<Vec<f64>> {
        Ok(self.text.forward(tokens, self.heads, variant)?.0)
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |_| n += 1);
        n
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each_param(&mut |v| out.push(v));
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DataLength {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter();
        self.for_each_param_mut(&mut |v| *v = *it.next().expect("length checked"));
        Ok(())
    }

    /// theta <- theta - lr * grad, walking both parameter sets in the
    /// same fixed order.
    pub fn apply_gradients(&mut self, grads: &ClipModel, learning_rate: f64) {
        let g = grads.flatten();
        let mut idx = 0;
        self.for_each_param_mut(&mut |v| {
            *v -= learning_rate * g[idx];
            idx += 1;
        });
    }

    pub(crate) fn for_each_param(&self, f: &mut impl FnMut(f64)) {
        for tower in [&self.image, &self.text] {
            for v in tower.pos.iter() {
                f(v);
            }
            for b in &tower.blocks {
                b.for_each(f);
            }
            tower.proj.for_each(f);
        }
    }

    pub(crate) fn for_each_param_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for tower in [&mut self.image, &mut self.text] {
            for v in tower.pos.data_mut() {
                f(v);
            }
            for b in tower.blocks.iter_mut() {
                b.for_each_mut(f);
            }
            tower.proj.for_each_mut(f);
        }
    }
}

// --------------------------------------------------------------- helpers

fn add_in_place(dst: &mut Matrix, src: &Matrix) {
    debug_assert_eq!(dst.shape(), src.shape());
    for (d, s) in dst.data_mut().iter_mut().zip(src.iter()) {
        *d += s;
    }
}

fn take_cols(m: &Matrix, lo: usize, width: usize) -> Matrix {
    Matrix::from_fn(m.rows(), width, |r, c| m.get(r, lo + c)).expect("shape")
}

fn put_cols(dst: &mut Matrix, lo: usize, src: &Matrix) {
    for r in 0..src.rows() {
        for c in 0..src.cols() {
            dst.set(r, lo + c, src.get(r, c));
        }
    }
}
