//! Run configuration, read from a flat TOML file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset_io::GroundTruthMode;
use crate::descriptors::Metric;
use crate::error::{Error, Result};
use crate::fusion::{TransitionModel, DEFAULT_O_THRESH};
use crate::pipeline::{is_layer_name, ChannelSpec, ExtractionSettings};
use crate::sequence::{
    LocalizerConfig, VoteMode, DEFAULT_ACCEPT_THRESHOLD, DEFAULT_QUALITY_WINDOW, DEFAULT_Q_T,
    DEFAULT_S_MAX, DEFAULT_S_MIN,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub channels: Vec<String>,
    pub mpf: bool,
    pub vote_mode: VoteMode,
    pub o_thresh: f64,
    /// Per-channel observation thresholds, keyed by channel name.
    pub o_thresh_overrides: BTreeMap<String, f64>,
    pub q_t: f64,
    pub quality_window: usize,
    pub s_min: usize,
    pub s_max: usize,
    pub dynamic_length: bool,
    pub v_min: i64,
    pub v_max: i64,
    pub accept_threshold: f64,
    pub patch_size: usize,
    /// `cosine` or `sad` (mean absolute difference) for the SAD channel.
    pub sad_metric: Metric,
    pub cnn_layer: String,
    pub stride: usize,
    /// Seed for synthetic generation; overrides the world file's seed.
    pub seed: Option<u64>,

    pub reference_frames: Option<PathBuf>,
    pub reference_tensors: Option<PathBuf>,
    pub query_frames: Option<PathBuf>,
    pub query_tensors: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    /// Reference coordinates for metric ground truth.
    pub ground_truth_reference: Option<PathBuf>,
    pub ground_truth_mode: GroundTruthMode,
    /// Frames or meters depending on the mode.
    pub tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let localizer = LocalizerConfig::default();
        Self {
            channels: vec!["sad".into()],
            mpf: true,
            vote_mode: VoteMode::Median,
            o_thresh: DEFAULT_O_THRESH,
            o_thresh_overrides: BTreeMap::new(),
            q_t: DEFAULT_Q_T,
            quality_window: DEFAULT_QUALITY_WINDOW,
            s_min: DEFAULT_S_MIN,
            s_max: DEFAULT_S_MAX,
            dynamic_length: true,
            v_min: localizer.transition.v_min,
            v_max: localizer.transition.v_max,
            accept_threshold: DEFAULT_ACCEPT_THRESHOLD,
            patch_size: crate::descriptors::sad::DEFAULT_PATCH_SIZE,
            sad_metric: Metric::Cosine,
            cnn_layer: "conv5".into(),
            stride: 1,
            seed: None,
            reference_frames: None,
            reference_tensors: None,
            query_frames: None,
            query_tensors: None,
            ground_truth: None,
            ground_truth_reference: None,
            ground_truth_mode: GroundTruthMode::FrameOffset,
            tolerance: 10.0,
        }
    }
}

impl RunConfig {
    /// Parses and validates configuration text; relative paths stay as written.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.reference_frames,
            &mut cfg.reference_tensors,
            &mut cfg.query_frames,
            &mut cfg.query_tensors,
            &mut cfg.ground_truth,
            &mut cfg.ground_truth_reference,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn channel_specs(&self) -> Result<Vec<ChannelSpec>> {
        self.channels.iter().map(|c| c.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let specs = self.channel_specs()?;
        if specs.is_empty() {
            return fail("at least one channel is required".into());
        }
        for (i, s) in specs.iter().enumerate() {
            if specs[..i].contains(s) {
                return fail(format!("channel {s} listed twice"));
            }
        }
        for (name, t) in &self.o_thresh_overrides {
            if !self.channels.contains(name) {
                return fail(format!("o_thresh_overrides names unknown channel {name:?}"));
            }
            if !(0.0..1.0).contains(t) {
                return fail(format!("o_thresh for {name} must lie in [0, 1), got {t}"));
            }
        }
        if self.patch_size == 0 {
            return fail("patch_size must be positive".into());
        }
        if self.sad_metric == Metric::Keypoint {
            return fail("sad_metric must be cosine or sad".into());
        }
        if !is_layer_name(&self.cnn_layer) {
            return fail(format!("invalid cnn_layer {:?}", self.cnn_layer));
        }
        if self.stride == 0 {
            return fail("stride must be positive".into());
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return fail(format!("tolerance must be nonnegative, got {}", self.tolerance));
        }
        self.localizer_config(&self.channels).validate()
    }

    pub fn extraction_settings(&self) -> ExtractionSettings {
        ExtractionSettings {
            patch_size: self.patch_size,
            sad_metric: self.sad_metric,
            cnn_layer: self.cnn_layer.clone(),
        }
    }

    /// Localizer tunables for a database whose channels are `channel_names`.
    pub fn localizer_config(&self, channel_names: &[impl AsRef<str>]) -> LocalizerConfig {
        LocalizerConfig {
            o_thresh: channel_names
                .iter()
                .map(|c| *self.o_thresh_overrides.get(c.as_ref()).unwrap_or(&self.o_thresh))
                .collect(),
            q_t: self.q_t,
            quality_window: self.quality_window,
            s_min: self.s_min,
            s_max: self.s_max,
            transition: TransitionModel {
                v_min: self.v_min,
                v_max: self.v_max,
                ..TransitionModel::default()
            },
            accept_threshold: self.accept_threshold,
            vote_mode: self.vote_mode,
            mpf: self.mpf,
            dynamic_length: self.dynamic_length,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let loc = cfg.localizer_config(&["sad"]);
        assert_eq!(loc, LocalizerConfig::default());
    }

    #[test]
    fn full_config() {
        let cfg = RunConfig::parse(
            r#"
            channels = ["sad", "hog", "cnn-pyramid", "generic-tensor:conv3"]
            vote_mode = "mean"
            o_thresh = 0.4
            o_thresh_overrides = { hog = 0.2 }
            s_min = 4
            v_max = 3
            sad_metric = "sad"
            reference_frames = "ref"
            ground_truth_mode = "metric"
            tolerance = 30.0
            "#,
        )
        .unwrap();
        let loc = cfg.localizer_config(&cfg.channels);
        assert_eq!(loc.o_thresh, vec![0.4, 0.2, 0.4, 0.4]);
        assert_eq!(loc.vote_mode, VoteMode::Mean);
        assert_eq!(loc.transition.v_max, 3);
        assert_eq!(cfg.extraction_settings().sad_metric, Metric::Sad);
        assert_eq!(cfg.channel_specs().unwrap()[3], ChannelSpec::GenericTensor("conv3".into()));
    }

    #[test]
    fn rejections() {
        for bad in [
            "channels = []",
            "channels = [\"sad\", \"sad\"]",
            "channels = [\"surf\"]",
            "s_min = 30",
            "v_min = 6",
            "o_thresh = 1.5",
            "o_thresh_overrides = { hog = 0.2 }",
            "sad_metric = \"keypoint\"",
            "stride = 0",
            "epsilon = 0.01",
            "accept_threshold = nan",
        ] {
            assert!(RunConfig::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        fs::write(&p, "reference_frames = \"ref\"\nquery_frames = \"/abs/q\"\n").unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.reference_frames.unwrap(), dir.path().join("ref"));
        assert_eq!(cfg.query_frames.unwrap(), PathBuf::from("/abs/q"));
        assert!(RunConfig::load(dir.path().join("missing.toml")).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig {
            channels: vec!["hog".into(), "cnn-argmax".into()],
            reference_frames: Some("r".into()),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }
}
