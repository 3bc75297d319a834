use crate::error::{Error, Result};

/// Floor for normalized observations and the transition penalty base.
pub const EPSILON: f64 = 0.001;
/// Best attainable normalized observation, `1 - EPSILON`.
pub const OBSERVATION_MAX: f64 = 1.0 - EPSILON;
pub const DEFAULT_O_THRESH: f64 = 0.5;

/// One channel's normalized similarity to every template for one query frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationColumn {
    values: Vec<f64>,
    degenerate: bool,
}

impl ObservationColumn {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// All distances were equal, so the column carries no information.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Template with the highest observation (smallest index on ties).
    pub fn best(&self) -> usize {
        argmax(&self.values)
    }
}

/// Rescales distances so the closest template scores `1 - ε` and the farthest
/// `-ε`, then floors everything under `o_thresh` (or under ε) to ε.
pub fn normalize_observation(dist: &[f64], o_thresh: f64) -> Result<ObservationColumn> {
    if dist.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "observation needs at least 2 templates, got {}",
            dist.len()
        )));
    }
    if let Some(k) = dist.iter().position(|d| !d.is_finite()) {
        return Err(Error::NonFinite(format!("distance to template {k}")));
    }
    let (lo, hi) = dist
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let range = hi - lo;
    if range <= 0.0 {
        return Ok(ObservationColumn {
            values: vec![EPSILON; dist.len()],
            degenerate: true,
        });
    }
    let values = dist
        .iter()
        .map(|&d| {
            let o = (hi - d) / range - EPSILON;
            if o < o_thresh || o < EPSILON {
                EPSILON
            } else {
                o
            }
        })
        .collect();
    Ok(ObservationColumn {
        values,
        degenerate: false,
    })
}

/// Elementwise sum of natural logs of the contributing observations.
pub fn build_emission_column(obs: &[&ObservationColumn]) -> Result<Vec<f64>> {
    let first = obs
        .first()
        .ok_or_else(|| Error::InvalidInput("emission column needs at least one observation".into()))?;
    let n = first.len();
    let mut col = vec![0.0; n];
    for o in obs {
        if o.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: o.len(),
            });
        }
        for (c, v) in col.iter_mut().zip(o.values()) {
            *c += v.ln();
        }
    }
    Ok(col)
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_templates_threshold_half() {
        let o = normalize_observation(&[0.2, 0.5, 0.8], 0.5).unwrap();
        // Middle: 0.5 - 0.001 = 0.499 < 0.5 -> floored.
        assert_eq!(o.values(), &[1.0 - EPSILON, EPSILON, EPSILON]);
        assert!((o.values()[0] - 0.999).abs() < 1e-15);
        assert!(!o.is_degenerate());
    }

    #[test]
    fn worst_template_floored_at_zero_threshold() {
        let o = normalize_observation(&[1.0, 3.0], 0.0).unwrap();
        assert_eq!(o.values(), &[OBSERVATION_MAX, EPSILON]);
    }

    #[test]
    fn constant_distances_are_degenerate() {
        let o = normalize_observation(&[0.4; 5], 0.5).unwrap();
        assert!(o.is_degenerate());
        assert_eq!(o.values(), &[EPSILON; 5]);
    }

    #[test]
    fn bad_inputs() {
        assert!(normalize_observation(&[0.3], 0.5).is_err());
        assert!(normalize_observation(&[0.3, f64::NAN], 0.5).is_err());
        assert!(build_emission_column(&[]).is_err());
    }

    #[test]
    fn emission_arithmetic() {
        let a = normalize_observation(&[0.0, 1.0], 0.5).unwrap();
        let b = normalize_observation(&[0.0, 2.0], 0.5).unwrap();
        let col = build_emission_column(&[&a, &b]).unwrap();
        assert!((col[0] - (-0.002_001_000_667_166_99)).abs() < 1e-12, "{}", col[0]);
        assert!((col[0] - 2.0 * 0.999f64.ln()).abs() < 1e-15);
        assert!(col[1] <= EPSILON.ln());
        assert!((EPSILON.ln() - (-6.907_755_278_982_137)).abs() < 1e-12);

        let single = build_emission_column(&[&a]).unwrap();
        assert_eq!(single, a.values().iter().map(|v| v.ln()).collect::<Vec<_>>());
    }
}
