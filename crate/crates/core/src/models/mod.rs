//! The two encoder architectures (ReLU MLP and residual self-attention
//! transformer), linear decoders/heads, and reverse-mode gradients for
//! the MSE and logistic composites built from them.

pub mod attention;
pub mod init;
pub mod losses;
pub mod mlp;

pub use attention::{SaLayer, SaTape, TransformerEncoder, TransformerTape};
pub use init::{gaussian_row_init, sign_split_vector};
pub use losses::{
    logistic_loss, logistic_loss_deriv, Autoencoder, CeModel, LossKind, MaeModel,
    MlpClassifier, TransformerClassifier, UHeadModel,
};
pub use mlp::{MlpActivations, MlpEncoder};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// A batch of samples: plain feature vectors (one per row) or patch
/// matrices (one `K x d` matrix per sample).
#[derive(Debug, Clone, PartialEq)]
pub enum Batch {
    Vectors(DenseMatrix),
    Patches(Vec<DenseMatrix>),
}

impl Batch {
    pub fn len(&self) -> usize {
        match self {
            Batch::Vectors(m) => m.rows(),
            Batch::Patches(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature dimension `d` (column count).
    pub fn dim(&self) -> usize {
        match self {
            Batch::Vectors(m) => m.cols(),
            Batch::Patches(v) => v.first().map_or(0, DenseMatrix::cols),
        }
    }

    /// Select a sub-batch by sample indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Batch {
        match self {
            Batch::Vectors(m) => {
                let mut out = DenseMatrix::zeros(indices.len(), m.cols());
                for (r, &i) in indices.iter().enumerate() {
                    out.row_mut(r).copy_from_slice(m.row(i));
                }
                Batch::Vectors(out)
            }
            Batch::Patches(v) => Batch::Patches(indices.iter().map(|&i| v[i].clone()).collect()),
        }
    }

    /// Sum over samples of the squared Euclidean/Frobenius norm.
    pub fn sq_sum(&self) -> f64 {
        match self {
            Batch::Vectors(m) => m.sq_sum(),
            Batch::Patches(v) => v.iter().map(DenseMatrix::sq_sum).sum(),
        }
    }
}

/// A frozen map from raw inputs to representation rows.
///
/// For the MLP this is the final activation; for the transformer it is the
/// patch sum `1^T h(X)`, which is what the downstream linear head sees.
pub trait Representation {
    fn rep_dim(&self) -> usize;

    /// Representation of each sample as a row of the output (`n x p`).
    fn represent(&self, batch: &Batch) -> Result<DenseMatrix>;
}

/// Representations with parameter gradients, as needed when the
/// representation itself is being trained against a linear functional of
/// its output.
pub trait TrainableRepresentation: Representation {
    fn param_count(&self) -> usize;

    fn write_params(&self, out: &mut Vec<f64>);

    fn read_params(&mut self, flat: &[f64]) -> Result<()>;

    /// Gradient of `sum_i <cotangent_row_i, rep_i>` with respect to the
    /// flattened parameters.
    fn represent_backward(&self, batch: &Batch, cotangent: &DenseMatrix) -> Result<Vec<f64>>;
}

/// Plain linear representation `x -> x P^T`; used for planted-task probes.
#[derive(Debug, Clone)]
pub struct LinearMap(pub DenseMatrix);

impl Representation for LinearMap {
    fn rep_dim(&self) -> usize {
        self.0.rows()
    }

    fn represent(&self, batch: &Batch) -> Result<DenseMatrix> {
        match batch {
            Batch::Vectors(x) => crate::matrix::matmul_bt(x, &self.0),
            Batch::Patches(_) => Err(Error::validation(
                "LinearMap expects vector samples, not patches",
            )),
        }
    }
}
