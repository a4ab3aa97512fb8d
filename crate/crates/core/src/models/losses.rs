//! Loss functions and the trainable composites: autoencoders (encoder plus
//! linear decoder, MSE) and classifiers (encoder plus linear head,
//! logistic). All gradients are reverse-mode through the shared encoder
//! backward passes.

use crate::error::{Error, Result};
use crate::matrix::{matmul, matmul_at, matmul_bt, DenseMatrix};
use crate::models::mlp::MlpEncoder;
use crate::models::attention::{SaGrads, TransformerEncoder};
use crate::models::{Batch, Representation, TrainableRepresentation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    Logistic,
}

/// log(1 + exp(-z)), evaluated stably for large |z|.
pub fn logistic_loss(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// d/dz log(1 + exp(-z)) = -1 / (1 + exp(z)).
pub fn logistic_loss_deriv(z: f64) -> f64 {
    -1.0 / (1.0 + z.exp())
}

pub fn validate_binary_labels(y: &[f64]) -> Result<()> {
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::validation("labels must be -1 or +1"));
    }
    Ok(())
}

/// MLP encoder with a linear decoder on top; trained with mean squared
/// reconstruction error over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CeModel {
    pub encoder: MlpEncoder,
    /// `d_out x p` so predictions are `H W^T` with row-wise batches.
    pub decoder: DenseMatrix,
}

/// Transformer encoder with a linear patch decoder `h(X) W_D`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaeModel {
    pub encoder: TransformerEncoder,
    /// `d x d` patch decoder.
    pub decoder: DenseMatrix,
}

/// Either pre-training composite behind one flat-parameter interface.
///
/// Flat layout is encoder parameters first (layer order, row-major),
/// decoder last. Keeping every trainer on this one code path is what makes
/// paired runs with degenerate regularizers bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub enum Autoencoder {
    Ce(CeModel),
    Mae(MaeModel),
}

impl CeModel {
    pub fn loss_and_grads(
        &self,
        input: &DenseMatrix,
        target: &DenseMatrix,
    ) -> Result<(f64, Vec<DenseMatrix>, DenseMatrix)> {
        let n = input.rows();
        if n == 0 {
            return Err(Error::validation("empty batch"));
        }
        let tape = self.encoder.forward(input)?;
        let pred = matmul_bt(tape.representation(), &self.decoder)?;
        let resid = pred.sub(target)?;
        let loss = resid.sq_sum() / n as f64;
        let d_pred = resid.scale(2.0 / n as f64);
        let d_dec = matmul_at(&d_pred, tape.representation())?;
        let d_rep = matmul(&d_pred, &self.decoder)?;
        let (enc_grads, _) = self.encoder.backward(&tape, &d_rep)?;
        Ok((loss, enc_grads, d_dec))
    }
}

impl MaeModel {
    /// Mean squared reconstruction error over patch samples. When
    /// `masked_rows` is given, the residual of sample `i` is restricted to
    /// the listed patch rows (the indicator-matrix variant of the loss);
    /// otherwise all patches are scored.
    pub fn loss_and_grads(
        &self,
        input: &[DenseMatrix],
        target: &[DenseMatrix],
        masked_rows: Option<&[Vec<usize>]>,
    ) -> Result<(f64, Vec<SaGrads>, DenseMatrix)> {
        let n = input.len();
        if n == 0 || n != target.len() {
            return Err(Error::validation("empty or mismatched patch batch"));
        }
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut dec_grad = DenseMatrix::zeros(self.decoder.rows(), self.decoder.cols());
        let mut enc_grads: Option<Vec<SaGrads>> = None;
        for (i, (x, y)) in input.iter().zip(target).enumerate() {
            let tape = self.encoder.forward(x)?;
            let pred = matmul(&tape.output, &self.decoder)?;
            let mut resid = pred.sub(y)?;
            if let Some(masks) = masked_rows {
                let keep = &masks[i];
                for r in 0..resid.rows() {
                    if !keep.contains(&r) {
                        resid.row_mut(r).fill(0.0);
                    }
                }
            }
            loss += resid.sq_sum() * inv_n;
            let d_pred = resid.scale(2.0 * inv_n);
            dec_grad.axpy(1.0, &matmul_at(&tape.output, &d_pred)?)?;
            let d_h = matmul_bt(&d_pred, &self.decoder)?;
            let (grads, _) = self.encoder.backward(&tape, &d_h)?;
            match &mut enc_grads {
                None => enc_grads = Some(grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        a.w_v.axpy(1.0, &g.w_v)?;
                        a.w_k.axpy(1.0, &g.w_k)?;
                        a.w_q.axpy(1.0, &g.w_q)?;
                        a.w_fc1.axpy(1.0, &g.w_fc1)?;
                        a.w_fc2.axpy(1.0, &g.w_fc2)?;
                    }
                }
            }
        }
        Ok((loss, enc_grads.expect("nonempty batch"), dec_grad))
    }
}

impl Autoencoder {
    pub fn encoder_param_count(&self) -> usize {
        match self {
            Autoencoder::Ce(m) => m.encoder.param_count(),
            Autoencoder::Mae(m) => m.encoder.param_count(),
        }
    }

    pub fn param_count(&self) -> usize {
        let dec = match self {
            Autoencoder::Ce(m) => m.decoder.data().len(),
            Autoencoder::Mae(m) => m.decoder.data().len(),
        };
        self.encoder_param_count() + dec
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        match self {
            Autoencoder::Ce(m) => {
                m.encoder.write_params(&mut out);
                out.extend_from_slice(m.decoder.data());
            }
            Autoencoder::Mae(m) => {
                m.encoder.write_params(&mut out);
                out.extend_from_slice(m.decoder.data());
            }
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::validation("parameter count mismatch"));
        }
        let enc_n = self.encoder_param_count();
        match self {
            Autoencoder::Ce(m) => {
                m.encoder.read_params(&flat[..enc_n])?;
                m.decoder.data_mut().copy_from_slice(&flat[enc_n..]);
            }
            Autoencoder::Mae(m) => {
                m.encoder.read_params(&flat[..enc_n])?;
                m.decoder.data_mut().copy_from_slice(&flat[enc_n..]);
            }
        }
        Ok(())
    }

    /// Reconstruction loss and flat gradient at the current parameters.
    pub fn loss_and_grad_flat(
        &self,
        input: &Batch,
        target: &Batch,
        masked_rows: Option<&[Vec<usize>]>,
    ) -> Result<(f64, Vec<f64>)> {
        match (self, input, target) {
            (Autoencoder::Ce(m), Batch::Vectors(x), Batch::Vectors(y)) => {
                let (loss, enc, dec) = m.loss_and_grads(x, y)?;
                let mut flat = Vec::with_capacity(self.param_count());
                for g in &enc {
                    flat.extend_from_slice(g.data());
                }
                flat.extend_from_slice(dec.data());
                Ok((loss, flat))
            }
            (Autoencoder::Mae(m), Batch::Patches(x), Batch::Patches(y)) => {
                let (loss, enc, dec) = m.loss_and_grads(x, y, masked_rows)?;
                let mut flat = Vec::with_capacity(self.param_count());
                for g in &enc {
                    for t in [&g.w_v, &g.w_k, &g.w_q, &g.w_fc1, &g.w_fc2] {
                        flat.extend_from_slice(t.data());
                    }
                }
                flat.extend_from_slice(dec.data());
                Ok((loss, flat))
            }
            _ => Err(Error::validation("batch kind does not match model kind")),
        }
    }

    pub fn representation(&self, batch: &Batch) -> Result<DenseMatrix> {
        match self {
            Autoencoder::Ce(m) => m.encoder.represent(batch),
            Autoencoder::Mae(m) => m.encoder.represent(batch),
        }
    }

    pub fn rep_dim(&self) -> usize {
        match self {
            Autoencoder::Ce(m) => m.encoder.rep_dim(),
            Autoencoder::Mae(m) => m.encoder.rep_dim(),
        }
    }

    /// Flat gradient (zero on the decoder block) of
    /// `sum_i <cotangent_row_i, rep_i(w)>` with respect to the parameters.
    pub fn representation_backward_flat(
        &self,
        batch: &Batch,
        cotangent: &DenseMatrix,
    ) -> Result<Vec<f64>> {
        let enc = match self {
            Autoencoder::Ce(m) => m.encoder.represent_backward(batch, cotangent)?,
            Autoencoder::Mae(m) => m.encoder.represent_backward(batch, cotangent)?,
        };
        let mut flat = enc;
        flat.resize(self.param_count(), 0.0);
        Ok(flat)
    }

    /// Kind tag used by serialization and manifests.
    pub fn kind(&self) -> &'static str {
        match self {
            Autoencoder::Ce(_) => "ce",
            Autoencoder::Mae(_) => "mae",
        }
    }

    /// Named weight tensors, encoder layers first, decoder last.
    pub fn named_tensors(&self) -> Vec<(String, DenseMatrix)> {
        let mut out = Vec::new();
        match self {
            Autoencoder::Ce(m) => {
                for (i, w) in m.encoder.layers().iter().enumerate() {
                    out.push((format!("enc.{i}"), w.clone()));
                }
                out.push(("dec".to_string(), m.decoder.clone()));
            }
            Autoencoder::Mae(m) => {
                for (i, l) in m.encoder.layers().iter().enumerate() {
                    out.push((format!("enc.{i}.w_v"), l.w_v.clone()));
                    out.push((format!("enc.{i}.w_k"), l.w_k.clone()));
                    out.push((format!("enc.{i}.w_q"), l.w_q.clone()));
                    out.push((format!("enc.{i}.w_fc1"), l.w_fc1.clone()));
                    out.push((format!("enc.{i}.w_fc2"), l.w_fc2.clone()));
                }
                out.push(("dec".to_string(), m.decoder.clone()));
            }
        }
        out
    }
}

impl crate::models::Representation for Autoencoder {
    fn rep_dim(&self) -> usize {
        Autoencoder::rep_dim(self)
    }

    fn represent(&self, batch: &Batch) -> Result<DenseMatrix> {
        Autoencoder::representation(self, batch)
    }
}

/// Linear head on the MLP representation: margins `y_i theta . h(x_i)`.
pub struct MlpClassifier {
    pub encoder: MlpEncoder,
    pub theta: Vec<f64>,
}

impl MlpClassifier {
    pub fn loss_and_grads(
        &self,
        x: &DenseMatrix,
        labels: &[f64],
    ) -> Result<(f64, Vec<DenseMatrix>, Vec<f64>)> {
        let n = x.rows();
        if labels.len() != n {
            return Err(Error::validation("label count mismatch"));
        }
        validate_binary_labels(labels)?;
        let tape = self.encoder.forward(x)?;
        let h = tape.representation();
        if h.cols() != self.theta.len() {
            return Err(Error::validation("head does not match representation"));
        }
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut d_theta = vec![0.0; self.theta.len()];
        let mut d_h = DenseMatrix::zeros(n, h.cols());
        for i in 0..n {
            let score: f64 = h.row(i).iter().zip(&self.theta).map(|(a, b)| a * b).sum();
            let z = labels[i] * score;
            loss += logistic_loss(z) * inv_n;
            let dz = logistic_loss_deriv(z) * inv_n * labels[i];
            for ((g, &r), (dh, &t)) in d_theta
                .iter_mut()
                .zip(h.row(i))
                .zip(d_h.row_mut(i).iter_mut().zip(&self.theta))
            {
                *g += dz * r;
                *dh = dz * t;
            }
        }
        let (enc_grads, _) = self.encoder.backward(&tape, &d_h)?;
        Ok((loss, enc_grads, d_theta))
    }
}

/// Linear head on the patch-sum representation: margins
/// `y_i theta . (1^T h(X_i))`.
pub struct TransformerClassifier {
    pub encoder: TransformerEncoder,
    pub theta: Vec<f64>,
}

impl TransformerClassifier {
    pub fn loss_and_grads(
        &self,
        samples: &[DenseMatrix],
        labels: &[f64],
    ) -> Result<(f64, Vec<SaGrads>, Vec<f64>)> {
        let n = samples.len();
        if labels.len() != n || n == 0 {
            return Err(Error::validation("label count mismatch or empty batch"));
        }
        validate_binary_labels(labels)?;
        let d = self.encoder.dim();
        if self.theta.len() != d {
            return Err(Error::validation("head does not match patch dimension"));
        }
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut d_theta = vec![0.0; d];
        let mut enc_grads: Option<Vec<SaGrads>> = None;
        for (x, &y) in samples.iter().zip(labels) {
            let tape = self.encoder.forward(x)?;
            let h = &tape.output;
            let mut rep = vec![0.0; d];
            for r in 0..h.rows() {
                for (acc, &v) in rep.iter_mut().zip(h.row(r)) {
                    *acc += v;
                }
            }
            let score: f64 = rep.iter().zip(&self.theta).map(|(a, b)| a * b).sum();
            let z = y * score;
            loss += logistic_loss(z) * inv_n;
            let dz = logistic_loss_deriv(z) * inv_n * y;
            for (g, &r) in d_theta.iter_mut().zip(&rep) {
                *g += dz * r;
            }
            let mut d_h = DenseMatrix::zeros(h.rows(), d);
            for r in 0..h.rows() {
                for (dhc, &t) in d_h.row_mut(r).iter_mut().zip(&self.theta) {
                    *dhc = dz * t;
                }
            }
            let (grads, _) = self.encoder.backward(&tape, &d_h)?;
            match &mut enc_grads {
                None => enc_grads = Some(grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        a.w_v.axpy(1.0, &g.w_v)?;
                        a.w_k.axpy(1.0, &g.w_k)?;
                        a.w_q.axpy(1.0, &g.w_q)?;
                        a.w_fc1.axpy(1.0, &g.w_fc1)?;
                        a.w_fc2.axpy(1.0, &g.w_fc2)?;
                    }
                }
            }
        }
        Ok((loss, enc_grads.expect("nonempty batch"), d_theta))
    }
}

/// Mean logistic risk of a linear head over representation rows,
/// with the gradient in the head.
pub fn head_logistic_risk(
    reps: &DenseMatrix,
    theta: &[f64],
    labels: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = reps.rows();
    if n == 0 || labels.len() != n || theta.len() != reps.cols() {
        return Err(Error::validation("head/labels/representation shapes differ"));
    }
    validate_binary_labels(labels)?;
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; theta.len()];
    for i in 0..n {
        let row = reps.row(i);
        let score: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
        let z = labels[i] * score;
        loss += logistic_loss(z) * inv_n;
        let dz = logistic_loss_deriv(z) * inv_n * labels[i];
        for (g, &r) in grad.iter_mut().zip(row) {
            *g += dz * r;
        }
    }
    Ok((loss, grad))
}

/// Accuracy of `sign(theta . rep)` against binary labels; a zero score
/// counts as class +1 (ties break toward the lower class index).
pub fn head_accuracy(reps: &DenseMatrix, theta: &[f64], labels: &[f64]) -> f64 {
    let n = reps.rows();
    if n == 0 {
        return 0.0;
    }
    let mut correct = 0usize;
    for i in 0..n {
        let score: f64 = reps.row(i).iter().zip(theta).map(|(a, b)| a * b).sum();
        let pred = if score >= 0.0 { 1.0 } else { -1.0 };
        if pred == labels[i] {
            correct += 1;
        }
    }
    correct as f64 / n as f64
}

/// Logistic risk of a frozen-head nonlinear classifier
/// `y_hat = u . relu(Theta h)` with gradients in `Theta` and the encoder.
pub struct UHeadModel {
    pub encoder: MlpEncoder,
    /// `m x p` map applied to the representation.
    pub theta: DenseMatrix,
    /// Frozen output vector of length `m`.
    pub u: Vec<f64>,
}

impl UHeadModel {
    pub fn loss_and_grads(
        &self,
        x: &DenseMatrix,
        labels: &[f64],
    ) -> Result<(f64, DenseMatrix, Vec<DenseMatrix>)> {
        let n = x.rows();
        if labels.len() != n {
            return Err(Error::validation("label count mismatch"));
        }
        validate_binary_labels(labels)?;
        if self.u.len() != self.theta.rows() {
            return Err(Error::validation("u length must match theta rows"));
        }
        let tape = self.encoder.forward(x)?;
        let h = tape.representation();
        let pre = matmul_bt(h, &self.theta)?; // n x m
        let s = pre.relu();
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut d_s = DenseMatrix::zeros(n, self.u.len());
        for i in 0..n {
            let y_hat: f64 = s.row(i).iter().zip(&self.u).map(|(a, b)| a * b).sum();
            let z = labels[i] * y_hat;
            loss += logistic_loss(z) * inv_n;
            let dy = logistic_loss_deriv(z) * inv_n * labels[i];
            for (g, &ur) in d_s.row_mut(i).iter_mut().zip(&self.u) {
                *g = dy * ur;
            }
        }
        let mut d_pre = d_s;
        for (g, &p) in d_pre.data_mut().iter_mut().zip(s.data()) {
            if p <= 0.0 {
                *g = 0.0;
            }
        }
        let d_theta = matmul_at(&d_pre, h)?;
        let d_h = matmul(&d_pre, &self.theta)?;
        let (enc_grads, _) = self.encoder.backward(&tape, &d_h)?;
        Ok((loss, d_theta, enc_grads))
    }

    pub fn predictions(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        let tape = self.encoder.forward(x)?;
        let pre = matmul_bt(tape.representation(), &self.theta)?;
        let s = pre.relu();
        Ok((0..x.rows())
            .map(|i| s.row(i).iter().zip(&self.u).map(|(a, b)| a * b).sum())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_at_zero_is_ln_two() {
        assert!((logistic_loss(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logistic_at_minus_one() {
        let want = (1.0 + std::f64::consts::E).ln();
        assert!((logistic_loss(-1.0) - want).abs() < 1e-12);
    }

    #[test]
    fn logistic_is_stable_far_out() {
        assert!(logistic_loss(800.0).is_finite());
        assert!(logistic_loss(-800.0).is_finite());
        assert!((logistic_loss(-800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_labels_rejected() {
        let reps = DenseMatrix::identity(2);
        let err = head_logistic_risk(&reps, &[1.0, 0.0], &[1.0, 0.5]);
        assert!(err.is_err());
    }
}
