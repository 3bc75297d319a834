//! Per-frame descriptor channels and template comparison.

pub mod cnn;
mod database;
pub mod hog;
pub mod sad;

use serde::{Deserialize, Serialize};

use crate::dataset_io::GrayscaleImage;
use crate::error::{Error, Result};

pub use cnn::{
    cnn_argmax_keypoints, cnn_pyramid_descriptor, keypoint_distance, pyramid_pool, KeypointSet,
    RunningStats,
};
pub use database::{ChannelTemplates, TemplateDatabase};
pub use hog::{hog_descriptor, HOG_LEN};
pub use sad::{sad_descriptor, sad_descriptor_with_patch};

/// Fixed-length feature vector for one frame on one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorVector(Vec<f32>);

impl DescriptorVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|&v| v as f64 * v as f64).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f32>> for DescriptorVector {
    fn from(v: Vec<f32>) -> Self {
        Self(v)
    }
}

/// What a channel produces for one frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Descriptor {
    Vector(DescriptorVector),
    Keypoints(KeypointSet),
}

impl Descriptor {
    pub fn as_vector(&self) -> Option<&DescriptorVector> {
        match self {
            Self::Vector(v) => Some(v),
            Self::Keypoints(_) => None,
        }
    }
}

/// How a channel's query descriptor is compared against its templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// `1 - cos(q, t)`; a zero-norm side yields 1.0.
    Cosine,
    /// Mean absolute difference.
    Sad,
    /// Mean keypoint displacement.
    Keypoint,
}

/// `1 - q·t / (‖q‖‖t‖)`, clamped at 0. Zero-norm inputs are maximally distant.
pub fn cosine_distance(q: &[f32], t: &[f32]) -> f64 {
    let (mut dot, mut qq, mut tt) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in q.iter().zip(t) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        qq += a * a;
        tt += b * b;
    }
    cosine_from_parts(dot, qq, tt)
}

fn cosine_from_parts(dot: f64, qq: f64, tt: f64) -> f64 {
    if qq == 0.0 || tt == 0.0 {
        return 1.0;
    }
    // sqrt(x*x) == x exactly, so identical vectors give exactly 0.
    (1.0 - dot / (qq * tt).sqrt()).max(0.0)
}

pub fn mean_absolute_difference(q: &[f32], t: &[f32]) -> f64 {
    q.iter()
        .zip(t)
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum::<f64>()
        / q.len().max(1) as f64
}

/// Distance from `query` to every template of channel `channel` of `db`.
pub fn cosine_distance_column(
    query: &DescriptorVector,
    db: &TemplateDatabase,
    channel: usize,
) -> Result<Vec<f64>> {
    let templates = db
        .channel(channel)
        .ok_or_else(|| Error::InvalidInput(format!("no channel {channel}")))?;
    if templates.metric() != Metric::Cosine {
        return Err(Error::Channel {
            channel: templates.name().to_string(),
            reason: "channel does not use the cosine metric".into(),
        });
    }
    templates.distance_column(&Descriptor::Vector(query.clone()))
}

pub(crate) fn resample(img: &GrayscaleImage, width: usize, height: usize) -> Vec<f64> {
    img.resample_f64(width, height)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_hand_cases() {
        assert_eq!(cosine_distance(&[0.3, -1.7, 2.0], &[0.3, -1.7, 2.0]), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 5.0]), 1.0);
        let d = cosine_distance(&[1.0, 0.0], &[1.0, 1.0]);
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert!((d - 0.2929).abs() < 1e-4);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[0.0, 0.0]), 1.0);
    }

    #[test]
    fn resample_keeps_constants_flat() {
        let img = GrayscaleImage::from_fn(333, 177, |_, _| 12.0);
        assert!(resample(&img, 64, 32).iter().all(|&v| v == 12.0));
        assert!(resample(&img, 640, 320).iter().all(|&v| v == 12.0));
    }

    #[test]
    fn mad_metric() {
        assert_eq!(mean_absolute_difference(&[1.0, 2.0], &[2.0, 0.0]), 1.5);
    }
}
