use crate::dataset_io::GrayscaleImage;
use crate::error::{Error, Result};

use super::DescriptorVector;

pub const HOG_WIDTH: usize = 640;
pub const HOG_HEIGHT: usize = 320;
pub const HOG_CELL: usize = 32;
pub const HOG_BINS: usize = 9;
/// Cells per block side; blocks step by one cell.
pub const HOG_BLOCK: usize = 2;

const CELLS_X: usize = HOG_WIDTH / HOG_CELL;
const CELLS_Y: usize = HOG_HEIGHT / HOG_CELL;
const BLOCKS_X: usize = CELLS_X - HOG_BLOCK + 1;
const BLOCKS_Y: usize = CELLS_Y - HOG_BLOCK + 1;
const BLOCK_LEN: usize = HOG_BLOCK * HOG_BLOCK * HOG_BINS;

/// 19 × 9 blocks of 2 × 2 cells × 9 bins.
pub const HOG_LEN: usize = BLOCKS_X * BLOCKS_Y * BLOCK_LEN;

const NORM_EPS: f64 = 1e-6;

/// Histogram of oriented gradients on a 640×320 resample: 32-pixel cells,
/// unsigned orientation in 9 bins with linear interpolation between adjacent
/// bin centres, [-1, 0, 1] gradients with replicated borders, 2×2-cell blocks
/// with L2 normalization.
pub fn hog_descriptor(img: &GrayscaleImage) -> Result<DescriptorVector> {
    if let Some(i) = img.pixels().iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite(format!(
            "pixel ({}, {})",
            i % img.width(),
            i / img.width()
        )));
    }
    let buf = super::resample(img, HOG_WIDTH, HOG_HEIGHT);
    let cells = cell_histograms(&buf);
    let mut out = Vec::with_capacity(HOG_LEN);
    let mut block = [0.0f64; BLOCK_LEN];
    for by in 0..BLOCKS_Y {
        for bx in 0..BLOCKS_X {
            let mut i = 0;
            for cy in by..by + HOG_BLOCK {
                for cx in bx..bx + HOG_BLOCK {
                    let cell = &cells[(cy * CELLS_X + cx) * HOG_BINS..][..HOG_BINS];
                    block[i..i + HOG_BINS].copy_from_slice(cell);
                    i += HOG_BINS;
                }
            }
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + NORM_EPS * NORM_EPS).sqrt();
            out.extend(block.iter().map(|v| (v / norm) as f32));
        }
    }
    debug_assert_eq!(out.len(), HOG_LEN);
    Ok(DescriptorVector::new(out))
}

fn cell_histograms(buf: &[f64]) -> Vec<f64> {
    let (w, h) = (HOG_WIDTH, HOG_HEIGHT);
    let bin_width = 180.0 / HOG_BINS as f64;
    let mut hist = vec![0.0; CELLS_X * CELLS_Y * HOG_BINS];
    for y in 0..h {
        let (up, down) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (left, right) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = buf[y * w + right] - buf[y * w + left];
            let gy = buf[down * w + x] - buf[up * w + x];
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            if angle >= 180.0 {
                angle -= 180.0;
            }
            let pos = angle / bin_width;
            let lo = pos.floor() as usize % HOG_BINS;
            let hi = (lo + 1) % HOG_BINS;
            let frac = pos - pos.floor();
            let cell = ((y / HOG_CELL) * CELLS_X + x / HOG_CELL) * HOG_BINS;
            hist[cell + lo] += mag * (1.0 - frac);
            hist[cell + hi] += mag * frac;
        }
    }
    hist
}
