use crate::dataset_io::GrayscaleImage;
use crate::error::{Error, Result};

use super::DescriptorVector;

pub const SAD_WIDTH: usize = 64;
pub const SAD_HEIGHT: usize = 32;
pub const DEFAULT_PATCH_SIZE: usize = 8;

/// Downsamples to 64×32 and patch-normalizes (zero mean, unit variance per
/// patch). Output stays in row-major pixel order.
pub fn sad_descriptor(img: &GrayscaleImage) -> Result<DescriptorVector> {
    sad_descriptor_with_patch(img, DEFAULT_PATCH_SIZE)
}

pub fn sad_descriptor_with_patch(img: &GrayscaleImage, patch: usize) -> Result<DescriptorVector> {
    if patch == 0 || !SAD_WIDTH.is_multiple_of(patch) || !SAD_HEIGHT.is_multiple_of(patch) {
        return Err(Error::InvalidInput(format!(
            "patch size {patch} must divide {SAD_WIDTH}x{SAD_HEIGHT}"
        )));
    }
    if img.width() < SAD_WIDTH || img.height() < SAD_HEIGHT {
        return Err(Error::InvalidInput(format!(
            "image {}x{} is smaller than {SAD_WIDTH}x{SAD_HEIGHT}; refusing to upsample",
            img.width(),
            img.height()
        )));
    }
    let small = super::resample(img, SAD_WIDTH, SAD_HEIGHT);
    Ok(DescriptorVector::new(
        patch_normalize(&small, SAD_WIDTH, SAD_HEIGHT, patch)
            .into_iter()
            .map(|v| v as f32)
            .collect(),
    ))
}

/// Normalizes each `patch`×`patch` tile of a row-major `width`×`height`
/// buffer in place order. Flat tiles become zeros.
pub(crate) fn patch_normalize(buf: &[f64], width: usize, height: usize, patch: usize) -> Vec<f64> {
    let mut out = vec![0.0; buf.len()];
    let n = (patch * patch) as f64;
    for py in (0..height).step_by(patch) {
        for px in (0..width).step_by(patch) {
            let idx = |i: usize| (py + i / patch) * width + px + i % patch;
            let mean = (0..patch * patch).map(|i| buf[idx(i)]).sum::<f64>() / n;
            let var = (0..patch * patch)
                .map(|i| (buf[idx(i)] - mean).powi(2))
                .sum::<f64>()
                / n;
            // Rounding in the resampler leaves ~1e-13 relative jitter on flat tiles.
            if var <= 1e-18 * (1.0 + mean * mean) {
                continue;
            }
            let std = var.sqrt();
            for i in 0..patch * patch {
                out[idx(i)] = (buf[idx(i)] - mean) / std;
            }
        }
    }
    out
}
