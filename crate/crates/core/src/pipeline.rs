//! Turns frame directories and feature-map dumps into per-channel descriptors.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset_io::{load_frame, read_tensor, FeatureMapSet, FrameSource, GrayscaleImage};
use crate::descriptors::{
    cnn_argmax_keypoints, cnn_pyramid_descriptor, hog_descriptor, sad_descriptor_with_patch,
    ChannelTemplates, Descriptor, Metric, RunningStats, TemplateDatabase,
};
use crate::error::{Error, Result};

pub const TENSOR_EXTENSION: &str = "sqft";

/// Name of the feature-map file for frame `id` and network layer `layer`.
pub fn tensor_file_name(id: u64, layer: &str) -> String {
    format!("{id}_{layer}.{TENSOR_EXTENSION}")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ChannelSpec {
    Sad,
    Hog,
    /// Pyramid-pooled maxima of the configured CNN layer.
    CnnPyramid,
    /// Per-map argmax locations of the configured CNN layer.
    CnnArgmax,
    /// Pyramid-pooled maxima of an arbitrary named layer.
    GenericTensor(String),
}

const GENERIC_PREFIX: &str = "generic-tensor:";

impl FromStr for ChannelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sad" => Ok(Self::Sad),
            "hog" => Ok(Self::Hog),
            "cnn-pyramid" => Ok(Self::CnnPyramid),
            "cnn-argmax" => Ok(Self::CnnArgmax),
            other => match other.strip_prefix(GENERIC_PREFIX) {
                Some(layer) if is_layer_name(layer) => Ok(Self::GenericTensor(layer.to_string())),
                _ => Err(Error::Config(format!(
                    "unknown channel {other:?}; expected sad, hog, cnn-pyramid, cnn-argmax or generic-tensor:<layer>"
                ))),
            },
        }
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Sad => f.write_str("sad"),
            Self::Hog => f.write_str("hog"),
            Self::CnnPyramid => f.write_str("cnn-pyramid"),
            Self::CnnArgmax => f.write_str("cnn-argmax"),
            Self::GenericTensor(layer) => write!(f, "{GENERIC_PREFIX}{layer}"),
        }
    }
}

pub(crate) fn is_layer_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '_')
}

impl ChannelSpec {
    pub fn needs_image(&self) -> bool {
        matches!(self, Self::Sad | Self::Hog)
    }

    /// Network layer whose feature maps this channel reads.
    pub fn layer<'a>(&'a self, cnn_layer: &'a str) -> Option<&'a str> {
        match self {
            Self::Sad | Self::Hog => None,
            Self::CnnPyramid | Self::CnnArgmax => Some(cnn_layer),
            Self::GenericTensor(layer) => Some(layer),
        }
    }
}

/// Per-channel extraction parameters shared by reference and query streams.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionSettings {
    pub patch_size: usize,
    /// Comparison used by the SAD channel (cosine or mean absolute difference).
    pub sad_metric: Metric,
    pub cnn_layer: String,
}

impl Default for ExtractionSettings {
    fn default() -> Self {
        Self {
            patch_size: crate::descriptors::sad::DEFAULT_PATCH_SIZE,
            sad_metric: Metric::Cosine,
            cnn_layer: "conv5".into(),
        }
    }
}

impl ExtractionSettings {
    pub fn metric(&self, spec: &ChannelSpec) -> Metric {
        match spec {
            ChannelSpec::Sad => self.sad_metric,
            ChannelSpec::CnnArgmax => Metric::Keypoint,
            _ => Metric::Cosine,
        }
    }
}

/// One traverse: an optional frame directory, an optional tensor directory
/// and the frame ids to process.
#[derive(Debug, Clone)]
pub struct Traverse {
    ids: Vec<u64>,
    frames: Option<FrameSource>,
    tensors: Option<PathBuf>,
}

impl Traverse {
    /// Frame ids come from the frame directory when one is given, otherwise
    /// from the tensor files of `layer`.
    pub fn open(
        frames: Option<&Path>,
        tensors: Option<&Path>,
        stride: usize,
        layer: Option<&str>,
    ) -> Result<Self> {
        let frames = frames.map(|d| FrameSource::from_dir(d, stride)).transpose()?;
        let ids = match (&frames, tensors, layer) {
            (Some(src), _, _) => src.frame_ids().to_vec(),
            (None, Some(dir), Some(layer)) => tensor_ids(dir, layer, stride)?,
            _ => return Err(Error::Config("traverse needs a frame or tensor directory".into())),
        };
        if ids.is_empty() {
            return Err(Error::NoFrames);
        }
        Ok(Self {
            ids,
            frames,
            tensors: tensors.map(Path::to_path_buf),
        })
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Checks that every channel has the inputs it needs.
    pub fn check_channels(&self, specs: &[ChannelSpec]) -> Result<()> {
        for spec in specs {
            if spec.needs_image() && self.frames.is_none() {
                return Err(Error::Channel {
                    channel: spec.to_string(),
                    reason: "needs image frames but no frame directory is configured".into(),
                });
            }
            if !spec.needs_image() && self.tensors.is_none() {
                return Err(Error::Channel {
                    channel: spec.to_string(),
                    reason: "needs feature-map tensor files but no tensor directory is configured".into(),
                });
            }
        }
        Ok(())
    }

    fn image(&self, id: u64) -> Result<GrayscaleImage> {
        let src = self.frames.as_ref().ok_or(Error::NoFrames)?;
        load_frame(src, id)
    }

    fn tensor(&self, id: u64, spec: &ChannelSpec, layer: &str) -> Result<FeatureMapSet> {
        let dir = self.tensors.as_ref().ok_or_else(|| Error::Channel {
            channel: spec.to_string(),
            reason: "no tensor directory".into(),
        })?;
        let path = dir.join(tensor_file_name(id, layer));
        read_tensor(&path).map_err(|e| Error::Channel {
            channel: spec.to_string(),
            reason: format!("{}: {e}", path.display()),
        })
    }
}

fn tensor_ids(dir: &Path, layer: &str, stride: usize) -> Result<Vec<u64>> {
    if stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    let suffix = format!("_{layer}.{TENSOR_EXTENSION}");
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(id) = name.strip_suffix(&suffix).and_then(|s| s.parse::<u64>().ok()) {
            if id % stride as u64 == 0 {
                ids.push(id);
            }
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

/// Computes every channel's descriptor frame by frame. CNN pyramid channels
/// keep running statistics, so one extractor serves exactly one stream.
#[derive(Debug, Clone)]
pub struct DescriptorExtractor {
    specs: Vec<ChannelSpec>,
    settings: ExtractionSettings,
    stats: Vec<RunningStats>,
}

impl DescriptorExtractor {
    pub fn new(specs: Vec<ChannelSpec>, settings: ExtractionSettings) -> Self {
        let stats = vec![RunningStats::new(); specs.len()];
        Self {
            specs,
            settings,
            stats,
        }
    }

    pub fn specs(&self) -> &[ChannelSpec] {
        &self.specs
    }

    pub fn extract(&mut self, traverse: &Traverse, id: u64) -> Result<Vec<Descriptor>> {
        let image = if self.specs.iter().any(ChannelSpec::needs_image) {
            Some(traverse.image(id)?)
        } else {
            None
        };
        let mut loaded: Vec<(String, FeatureMapSet)> = Vec::new();
        let mut out = Vec::with_capacity(self.specs.len());
        for (spec, stats) in self.specs.iter().zip(&mut self.stats) {
            let descriptor = match spec.layer(&self.settings.cnn_layer) {
                None => {
                    let img = image.as_ref().expect("loaded above");
                    let v = match spec {
                        ChannelSpec::Sad => sad_descriptor_with_patch(img, self.settings.patch_size)?,
                        _ => hog_descriptor(img)?,
                    };
                    Descriptor::Vector(v)
                }
                Some(layer) => {
                    let maps = match loaded.iter().position(|(l, _)| l == layer) {
                        Some(i) => &loaded[i].1,
                        None => {
                            loaded.push((layer.to_string(), traverse.tensor(id, spec, layer)?));
                            &loaded.last().expect("just pushed").1
                        }
                    };
                    match spec {
                        ChannelSpec::CnnArgmax => Descriptor::Keypoints(cnn_argmax_keypoints(maps)?),
                        _ => Descriptor::Vector(cnn_pyramid_descriptor(maps, stats)?),
                    }
                }
            };
            out.push(descriptor);
        }
        Ok(out)
    }
}

/// Builds a template database over every frame of `traverse`.
pub fn build_database(
    traverse: &Traverse,
    specs: &[ChannelSpec],
    settings: &ExtractionSettings,
) -> Result<TemplateDatabase> {
    traverse.check_channels(specs)?;
    let mut extractor = DescriptorExtractor::new(specs.to_vec(), settings.clone());
    let mut per_channel: Vec<Vec<Descriptor>> = vec![Vec::with_capacity(traverse.len()); specs.len()];
    for &id in traverse.ids() {
        for (c, d) in extractor.extract(traverse, id)?.into_iter().enumerate() {
            per_channel[c].push(d);
        }
    }
    let mut db = TemplateDatabase::new(traverse.ids().to_vec());
    for (spec, descriptors) in specs.iter().zip(per_channel) {
        let name = spec.to_string();
        let channel = match spec {
            ChannelSpec::CnnArgmax => ChannelTemplates::from_keypoints(
                name,
                descriptors
                    .into_iter()
                    .map(|d| match d {
                        Descriptor::Keypoints(k) => k,
                        Descriptor::Vector(_) => unreachable!("argmax channel yields keypoints"),
                    })
                    .collect(),
            )?,
            _ => ChannelTemplates::from_vectors(
                name,
                settings.metric(spec),
                descriptors
                    .into_iter()
                    .map(|d| match d {
                        Descriptor::Vector(v) => v,
                        Descriptor::Keypoints(_) => unreachable!("vector channel yields vectors"),
                    })
                    .collect(),
            )?,
        };
        db.add_channel(channel)?;
    }
    Ok(db)
}
