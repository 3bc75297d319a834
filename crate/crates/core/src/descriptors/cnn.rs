//! Descriptors derived from convolutional feature maps.

use crate::dataset_io::FeatureMapSet;
use crate::error::{Error, Result};

use super::DescriptorVector;

pub const PYRAMID_CELLS: usize = 5;

/// Per-dimension running mean and standard deviation (Welford) over every
/// image seen so far on one stream.
#[derive(Debug, Clone, Default)]
pub struct RunningStats {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn update(&mut self, sample: &[f64]) -> Result<()> {
        if self.count == 0 {
            self.mean = vec![0.0; sample.len()];
            self.m2 = vec![0.0; sample.len()];
        } else if sample.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: sample.len(),
            });
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(sample) {
            let delta = x - *m;
            *m += delta / n;
            *m2 += delta * (x - *m);
        }
        Ok(())
    }

    /// Population standard deviation of dimension `i`.
    pub fn std(&self, i: usize) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.m2[i] / self.count as f64).max(0.0).sqrt()
    }

    /// `(x - mean) / std`, or 0 while the statistic is degenerate.
    pub fn standardize(&self, sample: &[f64]) -> Vec<f64> {
        sample
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let std = self.std(i);
                if self.count <= 1 || std <= 1e-12 * (1.0 + self.mean[i].abs()) {
                    0.0
                } else {
                    (x - self.mean[i]) / std
                }
            })
            .collect()
    }
}

/// Global and quadrant maxima of each map, `[global, NW, NE, SW, SE]`,
/// before standardization. Quadrants split at `floor(H/2)`, `floor(W/2)`.
pub fn pyramid_pool(maps: &FeatureMapSet) -> Result<Vec<f64>> {
    let (h, w) = (maps.height(), maps.width());
    if h < 2 || w < 2 {
        return Err(Error::InvalidInput(format!(
            "pyramid pooling needs maps of at least 2x2, got {h}x{w}"
        )));
    }
    let (h2, w2) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(maps.maps() * PYRAMID_CELLS);
    for map in maps.iter_maps() {
        let region_max = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
            rows.flat_map(|y| cols.clone().map(move |x| y * w + x))
                .map(|i| map[i] as f64)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        out.push(region_max(0..h, 0..w));
        out.push(region_max(0..h2, 0..w2));
        out.push(region_max(0..h2, w2..w));
        out.push(region_max(h2..h, 0..w2));
        out.push(region_max(h2..h, w2..w));
    }
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("pooled cell {i}")));
    }
    Ok(out)
}

/// Pyramid-pooled CNN descriptor of length `5F`, standardized against
/// `stats` after folding the current image into them.
pub fn cnn_pyramid_descriptor(
    maps: &FeatureMapSet,
    stats: &mut RunningStats,
) -> Result<DescriptorVector> {
    let pooled = pyramid_pool(maps)?;
    stats.update(&pooled)?;
    Ok(DescriptorVector::new(
        stats
            .standardize(&pooled)
            .into_iter()
            .map(|v| v as f32)
            .collect(),
    ))
}

/// One `(x, y)` location per feature map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeypointSet {
    coords: Vec<(u32, u32)>,
    map_dims: (usize, usize),
}

impl KeypointSet {
    pub fn new(coords: Vec<(u32, u32)>, map_dims: (usize, usize)) -> Result<Self> {
        let (h, w) = map_dims;
        if coords.is_empty() {
            return Err(Error::InvalidInput("keypoint set is empty".into()));
        }
        if let Some(&(x, y)) = coords
            .iter()
            .find(|&&(x, y)| x as usize >= w || y as usize >= h)
        {
            return Err(Error::InvalidInput(format!(
                "keypoint ({x}, {y}) outside {h}x{w} map"
            )));
        }
        Ok(Self { coords, map_dims })
    }

    pub fn coords(&self) -> &[(u32, u32)] {
        &self.coords
    }

    /// `(height, width)`.
    pub fn map_dims(&self) -> (usize, usize) {
        self.map_dims
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Location of the strongest activation in each map. Ties go to the smallest
/// row-major index.
pub fn cnn_argmax_keypoints(maps: &FeatureMapSet) -> Result<KeypointSet> {
    let w = maps.width();
    let coords = maps
        .iter_maps()
        .map(|map| {
            let mut best = 0;
            for (i, &v) in map.iter().enumerate().skip(1) {
                if v > map[best] {
                    best = i;
                }
            }
            ((best % w) as u32, (best / w) as u32)
        })
        .collect();
    KeypointSet::new(coords, (maps.height(), w))
}

/// Mean over feature maps of the Euclidean distance between corresponding
/// keypoints.
pub fn keypoint_distance(query: &KeypointSet, template: &KeypointSet) -> Result<f64> {
    if query.len() != template.len() {
        return Err(Error::DimensionMismatch {
            expected: template.len(),
            actual: query.len(),
        });
    }
    if query.map_dims != template.map_dims {
        return Err(Error::InvalidInput(format!(
            "keypoint map dims differ: {:?} vs {:?}",
            query.map_dims, template.map_dims
        )));
    }
    let total: f64 = query
        .coords
        .iter()
        .zip(&template.coords)
        .map(|(&(qx, qy), &(tx, ty))| {
            let dx = tx as f64 - qx as f64;
            let dy = ty as f64 - qy as f64;
            (dx * dx + dy * dy).sqrt()
        })
        .sum();
    Ok(total / query.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(h: usize, w: usize, data: Vec<f32>) -> FeatureMapSet {
        FeatureMapSet::new(1, h, w, data).unwrap()
    }

    #[test]
    fn quadrant_maxima_of_single_peak() {
        let mut data = vec![0.0; 16];
        data[4 + 1] = 7.0; // row 1, col 1
        assert_eq!(pyramid_pool(&single(4, 4, data)).unwrap(), vec![7.0, 7.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_map_pools_to_constant() {
        let pooled = pyramid_pool(&single(5, 3, vec![2.5; 15])).unwrap();
        assert_eq!(pooled, vec![2.5; 5]);
    }

    #[test]
    fn odd_dims_split_at_floor() {
        // 3x3, split at row 1 / col 1: NW is only (0,0).
        let data = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        assert_eq!(pyramid_pool(&single(3, 3, data)).unwrap(), vec![9.0, 1.0, 3.0, 7.0, 9.0]);
    }

    #[test]
    fn first_image_standardizes_to_zero() {
        let mut stats = RunningStats::new();
        let mut data = vec![0.0; 16];
        data[5] = 7.0;
        let d = cnn_pyramid_descriptor(&single(4, 4, data), &mut stats).unwrap();
        assert_eq!(d.values(), &[0.0; 5]);
        assert_eq!(stats.count(), 1);
    }

    #[test]
    fn standardization_includes_current_image() {
        let mut stats = RunningStats::new();
        cnn_pyramid_descriptor(&single(2, 2, vec![1.0; 4]), &mut stats).unwrap();
        let d = cnn_pyramid_descriptor(&single(2, 2, vec![3.0; 4]), &mut stats).unwrap();
        // Samples {1, 3}: mean 2, population std 1.
        assert_eq!(d.values(), &[1.0; 5]);
        let d = cnn_pyramid_descriptor(&single(2, 2, vec![2.0; 4]), &mut stats).unwrap();
        assert_eq!(d.values(), &[0.0; 5]);
        assert_eq!(d.len(), 5);
    }

    #[test]
    fn pyramid_length_is_five_per_map() {
        let maps = FeatureMapSet::new(3, 4, 6, (0..72).map(|v| v as f32).collect()).unwrap();
        let mut stats = RunningStats::new();
        assert_eq!(cnn_pyramid_descriptor(&maps, &mut stats).unwrap().len(), 15);
        assert!(pyramid_pool(&single(1, 4, vec![0.0; 4])).is_err());
    }

    #[test]
    fn argmax_unique_tied_and_constant() {
        let mut data = vec![0.0; 4 * 5];
        data[3 * 4 + 2] = 9.0;
        assert_eq!(cnn_argmax_keypoints(&single(5, 4, data)).unwrap().coords(), &[(2, 3)]);

        assert_eq!(cnn_argmax_keypoints(&single(3, 3, vec![1.0; 9])).unwrap().coords(), &[(0, 0)]);

        // Maxima at (x=1,y=0) [index 1] and (x=0,y=1) [index W=3].
        let mut data = vec![0.0; 9];
        data[1] = 4.0;
        data[3] = 4.0;
        assert_eq!(cnn_argmax_keypoints(&single(3, 3, data)).unwrap().coords(), &[(1, 0)]);
    }

    #[test]
    fn keypoint_distance_cases() {
        let kp = |c: Vec<(u32, u32)>| KeypointSet::new(c, (8, 8)).unwrap();
        assert_eq!(keypoint_distance(&kp(vec![(0, 0)]), &kp(vec![(3, 4)])).unwrap(), 5.0);
        let a = kp(vec![(1, 2), (5, 5)]);
        assert_eq!(keypoint_distance(&a, &a).unwrap(), 0.0);
        let q = kp(vec![(0, 0), (6, 6)]);
        let t = kp(vec![(3, 4), (6, 6)]);
        assert_eq!(keypoint_distance(&q, &t).unwrap(), 2.5);
        assert!(keypoint_distance(&kp(vec![(0, 0)]), &a).is_err());
        assert!(KeypointSet::new(vec![(8, 0)], (8, 8)).is_err());
    }

    proptest! {
        #[test]
        fn argmax_ignores_monotone_rescaling(
            data in proptest::collection::vec(0.0f32..100.0, 2 * 3 * 4),
            scale in 0.1f32..10.0,
        ) {
            let maps = FeatureMapSet::new(2, 3, 4, data.clone()).unwrap();
            // Cubing then scaling is strictly increasing on nonnegative values.
            let rescaled = FeatureMapSet::new(2, 3, 4, data.iter().map(|v| scale * v * v * v).collect()).unwrap();
            let a = cnn_argmax_keypoints(&maps).unwrap();
            let b = cnn_argmax_keypoints(&rescaled).unwrap();
            // Strict monotonicity can still merge near-equal values in f32; only
            // compare when the original maxima are unambiguous.
            for (f, (ka, kb)) in a.coords().iter().zip(b.coords()).enumerate() {
                let map = maps.map(f);
                let best = map.iter().cloned().fold(f32::MIN, f32::max);
                let ties = map.iter().filter(|&&v| (best - v) < 1e-3).count();
                if ties == 1 {
                    prop_assert_eq!(ka, kb);
                }
            }
        }
    }
}
