//! ReLU MLP encoder: `h(x) = relu(W_L ... relu(W_1 x))`.
//!
//! Batches are stored row-wise, so a layer application is
//! `h_l = relu(h_{l-1} W_l^T)` with `W_1 : m x d` and `W_2..W_L : m x m`.
//! An empty layer list is the identity encoder (useful for linear probes
//! and the rank-one gradient-descent oracles).

use crate::error::{Error, Result};
use crate::matrix::{matmul, matmul_at, matmul_bt, norm_report, DenseMatrix, NormReport};
use crate::models::{Batch, Representation, TrainableRepresentation};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpEncoder {
    layers: Vec<DenseMatrix>,
}

/// Forward tape: `activations[0]` is the input batch, `activations[l]` the
/// output of layer `l`. The last entry is the representation.
#[derive(Debug, Clone)]
pub struct MlpActivations {
    pub activations: Vec<DenseMatrix>,
}

impl MlpActivations {
    pub fn representation(&self) -> &DenseMatrix {
        self.activations.last().expect("tape holds at least the input")
    }
}

impl MlpEncoder {
    pub fn new(layers: Vec<DenseMatrix>) -> Result<Self> {
        for w in layers.windows(2) {
            if w[1].cols() != w[0].rows() {
                return Err(Error::Dimension {
                    op: "mlp layer composition",
                    left_rows: w[0].rows(),
                    left_cols: w[0].cols(),
                    right_rows: w[1].rows(),
                    right_cols: w[1].cols(),
                });
            }
        }
        Ok(MlpEncoder { layers })
    }

    pub fn layers(&self) -> &[DenseMatrix] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Input dimension, or `None` for the identity encoder.
    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(DenseMatrix::cols)
    }

    pub fn output_dim_for(&self, input_dim: usize) -> usize {
        self.layers.last().map_or(input_dim, DenseMatrix::rows)
    }

    /// Per-layer spectral / Frobenius / (2,1) norms.
    pub fn norm_reports(&self, tol: f64, max_iter: usize) -> Result<Vec<NormReport>> {
        self.layers.iter().map(|w| norm_report(w, tol, max_iter)).collect()
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<MlpActivations> {
        if let Some(d) = self.input_dim() {
            if x.cols() != d {
                return Err(Error::Dimension {
                    op: "mlp_forward",
                    left_rows: x.rows(),
                    left_cols: x.cols(),
                    right_rows: self.layers[0].rows(),
                    right_cols: d,
                });
            }
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for w in &self.layers {
            let pre = matmul_bt(acts.last().unwrap(), w)?;
            acts.push(pre.relu());
        }
        Ok(MlpActivations { activations: acts })
    }

    /// Reverse pass. `d_out` is the cotangent on the representation
    /// (same shape as the final activation). Returns per-layer weight
    /// gradients and the cotangent on the input batch.
    ///
    /// The ReLU subgradient at 0 is taken to be 0.
    pub fn backward(
        &self,
        tape: &MlpActivations,
        d_out: &DenseMatrix,
    ) -> Result<(Vec<DenseMatrix>, DenseMatrix)> {
        let mut grads: Vec<DenseMatrix> = self
            .layers
            .iter()
            .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
            .collect();
        let mut g = d_out.clone();
        for l in (0..self.layers.len()).rev() {
            let post = &tape.activations[l + 1];
            // mask by post-activation positivity: relu'(z) = [z > 0]
            let mut g_pre = g.clone();
            for (gp, &p) in g_pre.data_mut().iter_mut().zip(post.data()) {
                if p <= 0.0 {
                    *gp = 0.0;
                }
            }
            grads[l] = matmul_at(&g_pre, &tape.activations[l])?;
            g = matmul(&g_pre, &self.layers[l])?;
        }
        Ok((grads, g))
    }
}

impl Representation for MlpEncoder {
    fn rep_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseMatrix::rows)
    }

    fn represent(&self, batch: &Batch) -> Result<DenseMatrix> {
        match batch {
            Batch::Vectors(x) => Ok(self.forward(x)?.representation().clone()),
            Batch::Patches(_) => Err(Error::validation(
                "mlp encoder expects vector samples, not patches",
            )),
        }
    }
}

impl TrainableRepresentation for MlpEncoder {
    fn param_count(&self) -> usize {
        self.layers.iter().map(|w| w.data().len()).sum()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for w in &self.layers {
            out.extend_from_slice(w.data());
        }
    }

    fn read_params(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(Error::validation(format!(
                "expected {expected} parameters, got {}",
                flat.len()
            )));
        }
        let mut off = 0;
        for w in &mut self.layers {
            let n = w.data().len();
            w.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    fn represent_backward(&self, batch: &Batch, cotangent: &DenseMatrix) -> Result<Vec<f64>> {
        let Batch::Vectors(x) = batch else {
            return Err(Error::validation("mlp encoder expects vector samples"));
        };
        let tape = self.forward(x)?;
        let (grads, _) = self.backward(&tape, cotangent)?;
        let mut flat = Vec::with_capacity(self.param_count());
        for g in &grads {
            flat.extend_from_slice(g.data());
        }
        Ok(flat)
    }
}
