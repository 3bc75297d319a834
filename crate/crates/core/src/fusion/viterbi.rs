//! Initial-probability-free Viterbi over a banded velocity transition model.

use std::path::Path;

use crate::dataset_io::{write_tensor, FeatureMapSet};
use crate::error::{Error, Result};

use super::observation::{argmax, EPSILON};

/// Forward template offsets in `[v_min, v_max]` are free; any other step
/// costs `penalty` (log domain).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionModel {
    pub v_min: i64,
    pub v_max: i64,
    pub penalty: f64,
}

impl Default for TransitionModel {
    fn default() -> Self {
        Self {
            v_min: 0,
            v_max: 5,
            penalty: EPSILON.ln(),
        }
    }
}

impl TransitionModel {
    pub fn new(v_min: i64, v_max: i64) -> Result<Self> {
        let m = Self {
            v_min,
            v_max,
            ..Self::default()
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_min > self.v_max {
            return Err(Error::InvalidInput(format!(
                "v_min {} exceeds v_max {}",
                self.v_min, self.v_max
            )));
        }
        if !(self.penalty < 0.0 && self.penalty.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "transition penalty must be finite and negative, got {}",
                self.penalty
            )));
        }
        Ok(())
    }

    pub fn in_band(&self, k_prev: usize, k_next: usize) -> bool {
        let offset = k_next as i64 - k_prev as i64;
        (self.v_min..=self.v_max).contains(&offset)
    }
}

/// Log transition score from template `k_prev` to `k_next`.
pub fn transition_term(k_prev: usize, k_next: usize, model: &TransitionModel) -> f64 {
    if model.in_band(k_prev, k_next) {
        0.0
    } else {
        model.penalty
    }
}

/// Fused log-observations for a window of query frames, one column per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    templates: usize,
    columns: Vec<Vec<f64>>,
    contributors: Vec<Vec<usize>>,
}

impl EmissionMatrix {
    pub fn new(templates: usize) -> Self {
        Self {
            templates,
            columns: Vec::new(),
            contributors: Vec::new(),
        }
    }

    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let templates = columns.first().map_or(0, Vec::len);
        let mut m = Self::new(templates);
        for c in columns {
            m.push(c, Vec::new())?;
        }
        Ok(m)
    }

    pub fn push(&mut self, column: Vec<f64>, contributors: Vec<usize>) -> Result<()> {
        if column.len() != self.templates {
            return Err(Error::DimensionMismatch {
                expected: self.templates,
                actual: column.len(),
            });
        }
        self.columns.push(column);
        self.contributors.push(contributors);
        Ok(())
    }

    /// Template count N.
    pub fn templates(&self) -> usize {
        self.templates
    }

    /// Sequence length τ.
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column(&self, t: usize) -> &[f64] {
        &self.columns[t]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Channel indices fused into column `t`.
    pub fn contributors(&self, t: usize) -> &[usize] {
        &self.contributors[t]
    }

    pub fn get(&self, k: usize, t: usize) -> f64 {
        self.columns[t][k]
    }

    fn validate(&self) -> Result<()> {
        if self.columns.is_empty() || self.templates == 0 {
            return Err(Error::InvalidInput("empty emission matrix".into()));
        }
        for (t, col) in self.columns.iter().enumerate() {
            if let Some(k) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("emission ({k}, {t})")));
            }
        }
        Ok(())
    }

    /// Column-per-map tensor: F = 1, H = N, W = τ.
    pub fn to_tensor(&self) -> Result<FeatureMapSet> {
        matrix_tensor(&self.columns, self.templates)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiResult {
    /// Decoded template per column.
    pub path: Vec<usize>,
    /// Best accumulated score in the last column.
    pub score: f64,
    /// Accumulated scores `D[t][k]`.
    pub scores: Vec<Vec<f64>>,
    /// Backpointers `H[t][k]`; row 0 is unused.
    pub backpointers: Vec<Vec<usize>>,
}

impl ViterbiResult {
    pub fn scores_tensor(&self) -> Result<FeatureMapSet> {
        matrix_tensor(&self.scores, self.scores[0].len())
    }

    pub fn backpointers_tensor(&self) -> Result<FeatureMapSet> {
        let cols: Vec<Vec<f64>> = self
            .backpointers
            .iter()
            .map(|c| c.iter().map(|&k| k as f64).collect())
            .collect();
        matrix_tensor(&cols, self.scores[0].len())
    }
}

fn matrix_tensor(columns: &[Vec<f64>], rows: usize) -> Result<FeatureMapSet> {
    let tau = columns.len();
    let mut data = vec![0.0f32; rows * tau];
    for (t, col) in columns.iter().enumerate() {
        for (k, &v) in col.iter().enumerate() {
            data[k * tau + t] = v as f32;
        }
    }
    FeatureMapSet::new(1, rows, tau, data)
}

/// Writes `emission.sqft`, `scores.sqft` and `backpointers.sqft` to `dir`.
pub fn dump_debug_matrices(dir: impl AsRef<Path>, e: &EmissionMatrix, r: &ViterbiResult) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_tensor(&e.to_tensor()?, dir.join("emission.sqft"))?;
    write_tensor(&r.scores_tensor()?, dir.join("scores.sqft"))?;
    write_tensor(&r.backpointers_tensor()?, dir.join("backpointers.sqft"))?;
    Ok(())
}

/// Decodes the best template sequence. The first column is initialised with
/// the raw emission (no prior); each later column only inspects the in-band
/// predecessors plus the best out-of-band one. Ties go to the smallest
/// template id throughout.
pub fn viterbi_decode(e: &EmissionMatrix, model: &TransitionModel) -> Result<ViterbiResult> {
    decode(e, model, banded_step)
}

/// Same recursion with an exhaustive O(N²) predecessor scan.
pub fn viterbi_decode_naive(e: &EmissionMatrix, model: &TransitionModel) -> Result<ViterbiResult> {
    decode(e, model, naive_step)
}

type Step = fn(&[f64], &[f64], &TransitionModel, &mut [f64], &mut [usize]);

fn decode(e: &EmissionMatrix, model: &TransitionModel, step: Step) -> Result<ViterbiResult> {
    e.validate()?;
    model.validate()?;
    let n = e.templates();
    let tau = e.len();
    let mut scores = Vec::with_capacity(tau);
    let mut backpointers = Vec::with_capacity(tau);
    scores.push(e.column(0).to_vec());
    backpointers.push(vec![0; n]);
    for t in 1..tau {
        let mut d = vec![0.0; n];
        let mut h = vec![0; n];
        step(&scores[t - 1], e.column(t), model, &mut d, &mut h);
        scores.push(d);
        backpointers.push(h);
    }
    let last = argmax(&scores[tau - 1]);
    let score = scores[tau - 1][last];
    let mut path = vec![0; tau];
    path[tau - 1] = last;
    for t in (1..tau).rev() {
        path[t - 1] = backpointers[t][path[t]];
    }
    Ok(ViterbiResult {
        path,
        score,
        scores,
        backpointers,
    })
}

pub(crate) fn naive_step(
    prev: &[f64],
    emission: &[f64],
    model: &TransitionModel,
    d: &mut [f64],
    h: &mut [usize],
) {
    for k in 0..prev.len() {
        let mut best = f64::NEG_INFINITY;
        let mut best_j = 0;
        for (j, &p) in prev.iter().enumerate() {
            let v = p + transition_term(j, k, model);
            if v > best {
                best = v;
                best_j = j;
            }
        }
        d[k] = best + emission[k];
        h[k] = best_j;
    }
}

pub(crate) fn banded_step(
    prev: &[f64],
    emission: &[f64],
    model: &TransitionModel,
    d: &mut [f64],
    h: &mut [usize],
) {
    let n = prev.len();
    // Penalized scores with prefix and suffix maxima (ties to the smaller index).
    let penalized: Vec<f64> = prev.iter().map(|&p| p + model.penalty).collect();
    let mut prefix = Vec::with_capacity(n);
    let mut best = 0;
    for j in 0..n {
        if penalized[j] > penalized[best] {
            best = j;
        }
        prefix.push(best);
    }
    let mut suffix = vec![0; n];
    let mut best = n - 1;
    for j in (0..n).rev() {
        if penalized[j] >= penalized[best] {
            best = j;
        }
        suffix[j] = best;
    }

    for k in 0..n {
        // In-band predecessors j satisfy v_min <= k - j <= v_max.
        let hi = k as i64 - model.v_min;
        let lo = (k as i64 - model.v_max).max(0);
        let mut best_v = f64::NEG_INFINITY;
        let mut best_j = 0;
        let mut consider = |j: usize, v: f64| {
            if v > best_v {
                best_v = v;
                best_j = j;
            }
        };
        if hi < 0 || lo > hi || lo >= n as i64 {
            let j = prefix[n - 1];
            consider(j, penalized[j]);
        } else {
            let hi = (hi as usize).min(n - 1);
            let lo = lo as usize;
            if lo > 0 {
                let j = prefix[lo - 1];
                consider(j, penalized[j]);
            }
            for (j, &p) in prev.iter().enumerate().take(hi + 1).skip(lo) {
                consider(j, p + 0.0);
            }
            if hi + 1 < n {
                let j = suffix[hi + 1];
                consider(j, penalized[j]);
            }
        }
        d[k] = best_v + emission[k];
        h[k] = best_j;
    }
}
