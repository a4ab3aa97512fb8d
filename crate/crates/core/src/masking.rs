//! Input corruption for self-supervised reconstruction: coordinate masking
//! for vector samples, patch masking for patch samples.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use crate::models::Batch;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskGranularity {
    /// Mask individual coordinates of vector samples.
    Coordinate,
    /// Mask whole patch rows of patch samples.
    Patch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskTransform {
    pub mask_ratio: f64,
    pub fill_value: f64,
    pub seed: u64,
    pub granularity: MaskGranularity,
}

/// Corrupted inputs with the untouched originals as targets, and which
/// units were masked per sample (needed by the masked-only loss variant).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedData {
    pub input: Batch,
    pub target: Batch,
    pub masked: Vec<Vec<usize>>,
}

/// Exactly `round(mask_ratio * units)` distinct unit indices per sample,
/// deterministic in the transform's seed.
fn pick_indices(units: usize, ratio: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let count = (ratio * units as f64).round() as usize;
    let count = count.min(units);
    // Partial Fisher-Yates: the first `count` slots end up a uniform
    // without-replacement sample.
    let mut pool: Vec<usize> = (0..units).collect();
    for i in 0..count {
        let j = rng.random_range(i..units);
        pool.swap(i, j);
    }
    let mut picked = pool[..count].to_vec();
    picked.sort_unstable();
    picked
}

pub fn apply_mask(x: &Batch, t: &MaskTransform) -> Result<MaskedData> {
    if !(0.0..=1.0).contains(&t.mask_ratio) {
        return Err(Error::validation("mask_ratio must be in [0, 1]"));
    }
    let mut rng = stream_rng(t.seed, Stream::Mask);
    match (x, t.granularity) {
        (Batch::Vectors(m), MaskGranularity::Coordinate) => {
            let mut corrupted = m.clone();
            let mut masked = Vec::with_capacity(m.rows());
            for r in 0..m.rows() {
                let idx = pick_indices(m.cols(), t.mask_ratio, &mut rng);
                for &c in &idx {
                    corrupted.set(r, c, t.fill_value);
                }
                masked.push(idx);
            }
            Ok(MaskedData {
                input: Batch::Vectors(corrupted),
                target: x.clone(),
                masked,
            })
        }
        (Batch::Patches(samples), MaskGranularity::Patch) => {
            let mut inputs = Vec::with_capacity(samples.len());
            let mut masked = Vec::with_capacity(samples.len());
            for s in samples {
                let idx = pick_indices(s.rows(), t.mask_ratio, &mut rng);
                let mut corrupted = s.clone();
                for &r in &idx {
                    corrupted.row_mut(r).fill(t.fill_value);
                }
                inputs.push(corrupted);
                masked.push(idx);
            }
            Ok(MaskedData {
                input: Batch::Patches(inputs),
                target: x.clone(),
                masked,
            })
        }
        _ => Err(Error::validation(
            "mask granularity does not match the batch kind",
        )),
    }
}
