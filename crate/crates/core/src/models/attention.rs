//! Residual self-attention layer and the transformer encoder built from it.
//!
//! One layer maps a `K x d` patch matrix `X` to
//!
//! ```text
//! A   = softmax(X W_K (X W_Q)^T / sqrt(d_K)) X W_V
//! Z   = alpha1 * A + X
//! out = alpha2 * relu(Z W_FC1) W_FC2 + Z
//! ```
//!
//! With `alpha1 = alpha2 = 0` the layer is exactly the identity. Gradients
//! are hand-written reverse mode through the softmax and both residual
//! branches.

use crate::error::{Error, Result};
use crate::matrix::{matmul, matmul_at, matmul_bt, softmax_rows, spectral_norm, DenseMatrix};
use crate::models::{Batch, Representation, TrainableRepresentation};

#[derive(Debug, Clone, PartialEq)]
pub struct SaLayer {
    pub w_v: DenseMatrix,
    pub w_k: DenseMatrix,
    pub w_q: DenseMatrix,
    pub w_fc1: DenseMatrix,
    pub w_fc2: DenseMatrix,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Intermediates cached by one layer's forward pass.
#[derive(Debug, Clone)]
pub struct SaTape {
    pub input: DenseMatrix,
    pub attn: DenseMatrix,    // softmax scores, K x K
    pub value: DenseMatrix,   // X W_V, K x d
    pub mixed: DenseMatrix,   // Z = alpha1 A + X
    pub hidden: DenseMatrix,  // relu(Z W_FC1), K x m
    pub output: DenseMatrix,
}

/// Gradients for one layer, same shapes as the weights.
#[derive(Debug, Clone)]
pub struct SaGrads {
    pub w_v: DenseMatrix,
    pub w_k: DenseMatrix,
    pub w_q: DenseMatrix,
    pub w_fc1: DenseMatrix,
    pub w_fc2: DenseMatrix,
}

impl SaLayer {
    pub fn new(
        w_v: DenseMatrix,
        w_k: DenseMatrix,
        w_q: DenseMatrix,
        w_fc1: DenseMatrix,
        w_fc2: DenseMatrix,
        alpha1: f64,
        alpha2: f64,
    ) -> Result<Self> {
        let d = w_v.rows();
        if w_v.cols() != d {
            return Err(Error::validation("w_v must be square d x d"));
        }
        if w_k.rows() != d || w_q.rows() != d || w_k.cols() != w_q.cols() {
            return Err(Error::validation("w_k and w_q must be d x d_k"));
        }
        if w_fc1.rows() != d || w_fc2.cols() != d || w_fc1.cols() != w_fc2.rows() {
            return Err(Error::validation("w_fc1 must be d x m and w_fc2 m x d"));
        }
        if alpha1 < 0.0 || alpha2 < 0.0 {
            return Err(Error::validation("residual scalings must be nonnegative"));
        }
        Ok(SaLayer {
            w_v,
            w_k,
            w_q,
            w_fc1,
            w_fc2,
            alpha1,
            alpha2,
        })
    }

    pub fn dim(&self) -> usize {
        self.w_v.rows()
    }

    pub fn d_k(&self) -> usize {
        self.w_k.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_fc1.cols()
    }

    /// Largest spectral norm over the five weight matrices.
    pub fn max_weight_norm(&self, tol: f64, max_iter: usize) -> Result<f64> {
        let mut w = 0.0f64;
        for m in [&self.w_v, &self.w_k, &self.w_q, &self.w_fc1, &self.w_fc2] {
            w = w.max(spectral_norm(m, tol, max_iter)?);
        }
        Ok(w)
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<SaTape> {
        if x.cols() != self.dim() {
            return Err(Error::Dimension {
                op: "sa_forward",
                left_rows: x.rows(),
                left_cols: x.cols(),
                right_rows: self.dim(),
                right_cols: self.dim(),
            });
        }
        let keys = matmul(x, &self.w_k)?;
        let queries = matmul(x, &self.w_q)?;
        let scale = 1.0 / (self.d_k() as f64).sqrt();
        let scores = matmul_bt(&keys, &queries)?.scale(scale);
        let attn = softmax_rows(&scores)?;
        let value = matmul(x, &self.w_v)?;
        let a = matmul(&attn, &value)?;
        let mut mixed = x.clone();
        mixed.axpy(self.alpha1, &a)?;
        let hidden = matmul(&mixed, &self.w_fc1)?.relu();
        let mut output = mixed.clone();
        output.axpy(self.alpha2, &matmul(&hidden, &self.w_fc2)?)?;
        Ok(SaTape {
            input: x.clone(),
            attn,
            value,
            mixed,
            hidden,
            output,
        })
    }

    /// Reverse pass: gradients for the five weights plus the cotangent on
    /// the input patches.
    pub fn backward(&self, tape: &SaTape, d_out: &DenseMatrix) -> Result<(SaGrads, DenseMatrix)> {
        let x = &tape.input;
        let scale = 1.0 / (self.d_k() as f64).sqrt();

        // out = alpha2 * hidden W_FC2 + Z
        let mut d_z = d_out.clone();
        let d_hidden = matmul_bt(d_out, &self.w_fc2)?.scale(self.alpha2);
        let g_fc2 = matmul_at(&tape.hidden, d_out)?.scale(self.alpha2);

        // hidden = relu(Z W_FC1)
        let mut d_pre = d_hidden;
        for (g, &h) in d_pre.data_mut().iter_mut().zip(tape.hidden.data()) {
            if h <= 0.0 {
                *g = 0.0;
            }
        }
        let g_fc1 = matmul_at(&tape.mixed, &d_pre)?;
        d_z.axpy(1.0, &matmul_bt(&d_pre, &self.w_fc1)?)?;

        // Z = alpha1 * S (X W_V) + X
        let d_a = d_z.scale(self.alpha1);
        let mut d_x = d_z;
        let d_attn = matmul_bt(&d_a, &tape.value)?;
        let d_value = matmul_at(&tape.attn, &d_a)?;
        let g_v = matmul_at(x, &d_value)?;
        d_x.axpy(1.0, &matmul_bt(&d_value, &self.w_v)?)?;

        // softmax rows: dP_r = (dS_r - <dS_r, S_r> 1) .* S_r
        let k = tape.attn.rows();
        let mut d_scores = DenseMatrix::zeros(k, k);
        for r in 0..k {
            let s_row = tape.attn.row(r);
            let ds_row = d_attn.row(r);
            let inner: f64 = s_row.iter().zip(ds_row).map(|(a, b)| a * b).sum();
            let out_row = d_scores.row_mut(r);
            for ((o, &s), &ds) in out_row.iter_mut().zip(s_row).zip(ds_row) {
                *o = (ds - inner) * s;
            }
        }

        // scores = scale * (X W_K)(X W_Q)^T
        let keys = matmul(x, &self.w_k)?;
        let queries = matmul(x, &self.w_q)?;
        let d_keys = matmul(&d_scores, &queries)?.scale(scale);
        let d_queries = matmul_at(&d_scores, &keys)?.scale(scale);
        let g_k = matmul_at(x, &d_keys)?;
        let g_q = matmul_at(x, &d_queries)?;
        d_x.axpy(1.0, &matmul_bt(&d_keys, &self.w_k)?)?;
        d_x.axpy(1.0, &matmul_bt(&d_queries, &self.w_q)?)?;

        Ok((
            SaGrads {
                w_v: g_v,
                w_k: g_k,
                w_q: g_q,
                w_fc1: g_fc1,
                w_fc2: g_fc2,
            },
            d_x,
        ))
    }
}

/// Stack of self-attention layers sharing `d`, `d_K`, `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerEncoder {
    layers: Vec<SaLayer>,
    patch_count: usize,
}

#[derive(Debug, Clone)]
pub struct TransformerTape {
    pub per_layer: Vec<SaTape>,
    pub output: DenseMatrix,
}

impl TransformerEncoder {
    pub fn new(layers: Vec<SaLayer>, patch_count: usize) -> Result<Self> {
        if let Some(first) = layers.first() {
            let (d, dk, m) = (first.dim(), first.d_k(), first.hidden_dim());
            for l in &layers {
                if l.dim() != d || l.d_k() != dk || l.hidden_dim() != m {
                    return Err(Error::validation("all layers must share d, d_k, m"));
                }
            }
        }
        Ok(TransformerEncoder {
            layers,
            patch_count,
        })
    }

    pub fn layers(&self) -> &[SaLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [SaLayer] {
        &mut self.layers
    }

    pub fn patch_count(&self) -> usize {
        self.patch_count
    }

    pub fn dim(&self) -> usize {
        self.layers.first().map_or(0, SaLayer::dim)
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<TransformerTape> {
        if x.rows() != self.patch_count {
            return Err(Error::validation(format!(
                "expected {} patches, got {}",
                self.patch_count,
                x.rows()
            )));
        }
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let tape = layer.forward(&cur)?;
            cur = tape.output.clone();
            per_layer.push(tape);
        }
        Ok(TransformerTape {
            per_layer,
            output: cur,
        })
    }

    /// Per-layer outputs `X^0 .. X^L` for one sample (prefix evaluations).
    pub fn layer_outputs(&self, x: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
        let tape = self.forward(x)?;
        let mut outs = vec![x.clone()];
        outs.extend(tape.per_layer.iter().map(|t| t.output.clone()));
        Ok(outs)
    }

    pub fn backward(
        &self,
        tape: &TransformerTape,
        d_out: &DenseMatrix,
    ) -> Result<(Vec<SaGrads>, DenseMatrix)> {
        let mut grads: Vec<Option<SaGrads>> = vec![None; self.layers.len()];
        let mut g = d_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (lg, gx) = layer.backward(&tape.per_layer[l], &g)?;
            grads[l] = Some(lg);
            g = gx;
        }
        Ok((grads.into_iter().map(Option::unwrap).collect(), g))
    }
}

/// Patch-sum representation `1^T h(X)` as a row per sample.
impl Representation for TransformerEncoder {
    fn rep_dim(&self) -> usize {
        self.dim()
    }

    fn represent(&self, batch: &Batch) -> Result<DenseMatrix> {
        let Batch::Patches(samples) = batch else {
            return Err(Error::validation("transformer expects patch samples"));
        };
        let d = self.dim();
        let mut out = DenseMatrix::zeros(samples.len(), d);
        for (i, x) in samples.iter().enumerate() {
            let h = self.forward(x)?.output;
            let row = out.row_mut(i);
            for r in 0..h.rows() {
                for (acc, &v) in row.iter_mut().zip(h.row(r)) {
                    *acc += v;
                }
            }
        }
        Ok(out)
    }
}

impl TrainableRepresentation for TransformerEncoder {
    fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.w_v.data().len()
                    + l.w_k.data().len()
                    + l.w_q.data().len()
                    + l.w_fc1.data().len()
                    + l.w_fc2.data().len()
            })
            .sum()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            for m in [&l.w_v, &l.w_k, &l.w_q, &l.w_fc1, &l.w_fc2] {
                out.extend_from_slice(m.data());
            }
        }
    }

    fn read_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::validation("parameter count mismatch"));
        }
        let mut off = 0;
        for l in &mut self.layers {
            for m in [
                &mut l.w_v,
                &mut l.w_k,
                &mut l.w_q,
                &mut l.w_fc1,
                &mut l.w_fc2,
            ] {
                let n = m.data().len();
                m.data_mut().copy_from_slice(&flat[off..off + n]);
                off += n;
            }
        }
        Ok(())
    }

    fn represent_backward(&self, batch: &Batch, cotangent: &DenseMatrix) -> Result<Vec<f64>> {
        let Batch::Patches(samples) = batch else {
            return Err(Error::validation("transformer expects patch samples"));
        };
        let mut flat = vec![0.0; self.param_count()];
        for (i, x) in samples.iter().enumerate() {
            let tape = self.forward(x)?;
            // d/dH of <c, 1^T H> puts c on every patch row.
            let mut d_h = DenseMatrix::zeros(x.rows(), self.dim());
            for r in 0..x.rows() {
                d_h.row_mut(r).copy_from_slice(cotangent.row(i));
            }
            let (grads, _) = self.backward(&tape, &d_h)?;
            let mut off = 0;
            for g in &grads {
                for m in [&g.w_v, &g.w_k, &g.w_q, &g.w_fc1, &g.w_fc2] {
                    for (acc, &v) in flat[off..off + m.data().len()].iter_mut().zip(m.data()) {
                        *acc += v;
                    }
                    off += m.data().len();
                }
            }
        }
        Ok(flat)
    }
}
