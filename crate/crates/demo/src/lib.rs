//! Browser demo backend. Each operation returns a serializable view; the
//! `web` module exposes them to JavaScript as JSON strings.

use serde::Serialize;

use mpf_core::evaluation::{sweep_pr, SyntheticWorld};
use mpf_core::fusion::{normalize_observation, EPSILON};
use mpf_core::sequence::{Localizer, LocalizerConfig, MatchDecision};

#[derive(Debug, Clone, Serialize)]
pub struct ObservationView {
    /// Rescaled similarity before flooring.
    pub raw: Vec<f64>,
    pub values: Vec<f64>,
    pub floored: Vec<bool>,
    pub best: usize,
    pub degenerate: bool,
    pub epsilon: f64,
}

/// Normalizes one distance column and reports which entries were floored.
pub fn explore_observation(distances: &[f64], o_thresh: f64) -> Result<ObservationView, String> {
    let out = normalize_observation(distances, o_thresh).map_err(|e| e.to_string())?;
    let (lo, hi) = distances
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &d| (l.min(d), h.max(d)));
    let raw: Vec<f64> = distances
        .iter()
        .map(|&d| if hi > lo { (hi - d) / (hi - lo) - EPSILON } else { EPSILON })
        .collect();
    let floored = raw.iter().zip(out.values()).map(|(r, v)| r != v || out.is_degenerate()).collect();
    Ok(ObservationView {
        raw,
        values: out.values().to_vec(),
        floored,
        best: out.best(),
        degenerate: out.is_degenerate(),
        epsilon: EPSILON,
    })
}

/// Parses comma or whitespace separated numbers.
pub fn parse_numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: {s:?}")))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveView {
    pub name: String,
    pub max_f1: f64,
    /// `(recall, precision)` pairs in threshold order.
    pub points: Vec<(f64, f64)>,
    /// Per-frame averaged quality.
    pub quality: Vec<f64>,
    /// Per-frame matched reference id.
    pub matched: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkView {
    /// True reference per query frame.
    pub truth: Vec<Option<u64>>,
    /// Corrupted frame ranges per channel.
    pub corruption: Vec<Vec<(usize, usize)>>,
    pub curves: Vec<CurveView>,
}

/// Runs the four-channel corruption benchmark with fusion and with each
/// channel alone.
pub fn synthetic_benchmark(seed: u64, query_noise: f64) -> Result<BenchmarkView, String> {
    let mut world = SyntheticWorld::fusion_benchmark(seed);
    world.query_noise = query_noise;
    let run = world.generate().map_err(|e| e.to_string())?;
    let names: Vec<String> = run.database.channel_names().into_iter().map(String::from).collect();
    let mut configurations = vec![("fused".to_string(), names.clone())];
    configurations.extend(names.iter().map(|n| (n.clone(), vec![n.clone()])));

    let mut curves = Vec::new();
    for (name, channels) in configurations {
        let decisions = run
            .localize(&channels, &LocalizerConfig::default())
            .map_err(|e| e.to_string())?;
        let curve = sweep_pr(&decisions, &run.ground_truth).map_err(|e| e.to_string())?;
        curves.push(CurveView {
            name,
            max_f1: curve.max_f1(),
            points: curve.points.iter().map(|p| (p.recall, p.precision)).collect(),
            quality: decisions.iter().map(|d| d.quality).collect(),
            matched: decisions.iter().map(|d| d.ref_id).collect(),
        });
    }
    let truth = world
        .query_positions()
        .iter()
        .enumerate()
        .map(|(i, p)| (!world.novel.iter().any(|r| (r.start..r.end).contains(&i))).then(|| p.round() as u64))
        .collect();
    Ok(BenchmarkView {
        truth,
        corruption: world
            .channels
            .iter()
            .map(|c| c.corruption.iter().map(|r| (r.start, r.end)).collect())
            .collect(),
        curves,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatmapView {
    pub templates: usize,
    /// Query ids of the decoded window, oldest first.
    pub frames: Vec<u64>,
    /// Log emissions, one row per frame.
    pub emission: Vec<Vec<f64>>,
    /// Accumulated path scores, one row per frame.
    pub scores: Vec<Vec<f64>>,
    pub path: Vec<usize>,
    /// True template per frame of the window.
    pub truth: Vec<usize>,
    pub decision: MatchDecision,
}

/// Streams `frames` noisy queries through a small world and returns the
/// matrices behind the final decision.
pub fn viterbi_heatmap(seed: u64, templates: usize, frames: usize, query_noise: f64) -> Result<HeatmapView, String> {
    if frames == 0 {
        return Err("at least one query frame is required".into());
    }
    let mut world = SyntheticWorld::new(seed, templates, 2, 16);
    world.query_frames = frames;
    world.query_noise = query_noise;
    let run = world.generate().map_err(|e| e.to_string())?;
    let mut localizer = Localizer::new(&run.database, LocalizerConfig::default()).map_err(|e| e.to_string())?;
    let mut last = None;
    for (id, descriptors) in &run.queries {
        last = Some(localizer.push_traced(*id, descriptors).map_err(|e| e.to_string())?);
    }
    let trace = last.expect("at least one frame");
    let window = trace.emission.len();
    let first = run.queries.len() - window;
    Ok(HeatmapView {
        templates,
        frames: run.queries[first..].iter().map(|q| q.0).collect(),
        emission: trace.emission.columns().to_vec(),
        scores: trace.viterbi.scores.clone(),
        path: trace.viterbi.path.clone(),
        truth: run.positions[first..].iter().map(|p| p.round() as usize).collect(),
        decision: trace.decision,
    })
}

#[cfg(target_arch = "wasm32")]
mod web {
    use wasm_bindgen::prelude::*;

    fn to_json<T: serde::Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
        r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
            .map_err(|e| JsValue::from_str(&e))
    }

    #[wasm_bindgen(js_name = exploreObservation)]
    pub fn explore_observation(distances: &str, o_thresh: f64) -> Result<String, JsValue> {
        to_json(super::parse_numbers(distances).and_then(|d| super::explore_observation(&d, o_thresh)))
    }

    #[wasm_bindgen(js_name = syntheticBenchmark)]
    pub fn synthetic_benchmark(seed: u32, query_noise: f64) -> Result<String, JsValue> {
        to_json(super::synthetic_benchmark(seed as u64, query_noise))
    }

    #[wasm_bindgen(js_name = viterbiHeatmap)]
    pub fn viterbi_heatmap(seed: u32, templates: u32, frames: u32, query_noise: f64) -> Result<String, JsValue> {
        to_json(super::viterbi_heatmap(seed as u64, templates as usize, frames as usize, query_noise))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_view_marks_floored_entries() {
        let v = explore_observation(&[0.0, 1.0, 0.2, 0.9], 0.5).unwrap();
        assert_eq!(v.best, 0);
        assert_eq!(v.floored, vec![false, true, false, true]);
        assert_eq!(v.values[1], EPSILON);
        let flat = explore_observation(&[2.0, 2.0, 2.0], 0.5).unwrap();
        assert!(flat.degenerate && flat.floored.iter().all(|&f| f));
        assert!(explore_observation(&[1.0], 0.5).is_err());
    }

    #[test]
    fn numbers_parse_with_mixed_separators() {
        assert_eq!(parse_numbers("1, 2.5\n3 ").unwrap(), vec![1.0, 2.5, 3.0]);
        assert!(parse_numbers("1, x").is_err());
    }

    #[test]
    fn benchmark_reports_fused_and_single_curves() {
        let v = synthetic_benchmark(1, 0.6).unwrap();
        assert_eq!(v.curves.len(), 5);
        assert_eq!(v.curves[0].name, "fused");
        assert_eq!(v.truth.len(), v.curves[0].quality.len());
        assert!(v.curves[0].max_f1 > v.curves.iter().skip(1).map(|c| c.max_f1).fold(0.0, f64::max));
        assert!(serde_json::to_string(&v).is_ok());
    }

    #[test]
    fn heatmap_path_follows_clean_queries() {
        let v = viterbi_heatmap(3, 60, 30, 0.05).unwrap();
        assert_eq!(v.emission.len(), v.path.len());
        assert_eq!(v.scores.len(), v.path.len());
        assert!(v.emission.iter().all(|c| c.len() == 60));
        assert_eq!(v.path, v.truth);
        assert!(viterbi_heatmap(3, 10, 30, 0.05).is_err());
        assert!(viterbi_heatmap(3, 60, 0, 0.05).is_err());
    }
}
