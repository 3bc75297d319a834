use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset_io::{read_tensor, write_tensor, FeatureMapSet};
use crate::error::{Error, Result};

use super::{
    cosine_from_parts, keypoint_distance, mean_absolute_difference, Descriptor, DescriptorVector,
    KeypointSet, Metric,
};

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_FORMAT: &str = "mpf-template-db";
const MANIFEST_VERSION: u32 = 1;

/// All reference descriptors of one channel, indexed by template.
#[derive(Debug, Clone)]
pub struct ChannelTemplates {
    name: String,
    metric: Metric,
    templates: Vec<Descriptor>,
    norms_sq: Vec<f64>,
}

impl ChannelTemplates {
    pub fn from_vectors(
        name: impl Into<String>,
        metric: Metric,
        vectors: Vec<DescriptorVector>,
    ) -> Result<Self> {
        let name = name.into();
        if metric == Metric::Keypoint {
            return Err(Error::Channel {
                channel: name,
                reason: "keypoint metric needs keypoint templates".into(),
            });
        }
        if let Some(first) = vectors.first() {
            let dim = first.len();
            if dim == 0 {
                return Err(Error::Channel {
                    channel: name,
                    reason: "zero-length descriptors".into(),
                });
            }
            for (k, v) in vectors.iter().enumerate() {
                if v.len() != dim {
                    return Err(Error::Channel {
                        channel: name,
                        reason: format!("template {k} has length {}, expected {dim}", v.len()),
                    });
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("{name} template {k}")));
                }
            }
        }
        let norms_sq = vectors.iter().map(DescriptorVector::norm_sq).collect();
        Ok(Self {
            name,
            metric,
            templates: vectors.into_iter().map(Descriptor::Vector).collect(),
            norms_sq,
        })
    }

    pub fn from_keypoints(name: impl Into<String>, sets: Vec<KeypointSet>) -> Result<Self> {
        let name = name.into();
        if let Some(first) = sets.first() {
            if let Some(k) = sets
                .iter()
                .position(|s| s.len() != first.len() || s.map_dims() != first.map_dims())
            {
                return Err(Error::Channel {
                    channel: name,
                    reason: format!("template {k} keypoint shape differs from template 0"),
                });
            }
        }
        Ok(Self {
            name,
            metric: Metric::Keypoint,
            norms_sq: Vec::new(),
            templates: sets.into_iter().map(Descriptor::Keypoints).collect(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn template(&self, k: usize) -> Option<&Descriptor> {
        self.templates.get(k)
    }

    /// Vector length, or keypoint count for keypoint channels.
    pub fn descriptor_len(&self) -> usize {
        match self.templates.first() {
            Some(Descriptor::Vector(v)) => v.len(),
            Some(Descriptor::Keypoints(k)) => k.len(),
            None => 0,
        }
    }

    /// Distance from `query` to every template, in template order.
    pub fn distance_column(&self, query: &Descriptor) -> Result<Vec<f64>> {
        if self.templates.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        let mismatch = |reason: &str| Error::Channel {
            channel: self.name.clone(),
            reason: reason.to_string(),
        };
        let column: Vec<f64> = match (self.metric, query) {
            (Metric::Cosine | Metric::Sad, Descriptor::Vector(q)) => {
                if q.len() != self.descriptor_len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.descriptor_len(),
                        actual: q.len(),
                    });
                }
                if !q.is_finite() {
                    return Err(Error::NonFinite(format!("{} query descriptor", self.name)));
                }
                let qq = q.norm_sq();
                self.templates
                    .iter()
                    .zip(&self.norms_sq)
                    .map(|(t, &tt)| {
                        let Descriptor::Vector(t) = t else { unreachable!() };
                        match self.metric {
                            Metric::Cosine => {
                                let dot = q
                                    .values()
                                    .iter()
                                    .zip(t.values())
                                    .map(|(&a, &b)| a as f64 * b as f64)
                                    .sum();
                                cosine_from_parts(dot, qq, tt)
                            }
                            _ => mean_absolute_difference(q.values(), t.values()),
                        }
                    })
                    .collect()
            }
            (Metric::Keypoint, Descriptor::Keypoints(q)) => self
                .templates
                .iter()
                .map(|t| {
                    let Descriptor::Keypoints(t) = t else { unreachable!() };
                    keypoint_distance(q, t)
                })
                .collect::<Result<_>>()?,
            (Metric::Keypoint, _) => return Err(mismatch("expected a keypoint query")),
            _ => return Err(mismatch("expected a vector query")),
        };
        Ok(column)
    }
}

/// Reference-traverse descriptors for every channel over the same templates.
#[derive(Debug, Clone, Default)]
pub struct TemplateDatabase {
    frame_ids: Vec<u64>,
    channels: Vec<ChannelTemplates>,
}

impl TemplateDatabase {
    pub fn new(frame_ids: Vec<u64>) -> Self {
        Self {
            frame_ids,
            channels: Vec::new(),
        }
    }

    pub fn add_channel(&mut self, channel: ChannelTemplates) -> Result<()> {
        if channel.len() != self.frame_ids.len() {
            return Err(Error::Channel {
                channel: channel.name,
                reason: format!(
                    "{} templates but the database covers {}",
                    channel.templates.len(),
                    self.frame_ids.len()
                ),
            });
        }
        if self.channel_index(&channel.name).is_some() {
            return Err(Error::Channel {
                channel: channel.name,
                reason: "duplicate channel name".into(),
            });
        }
        self.channels.push(channel);
        Ok(())
    }

    /// Template count N.
    pub fn len(&self) -> usize {
        self.frame_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_ids.is_empty()
    }

    pub fn frame_ids(&self) -> &[u64] {
        &self.frame_ids
    }

    pub fn channels(&self) -> &[ChannelTemplates] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> Option<&ChannelTemplates> {
        self.channels.get(i)
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn channel_names(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.name.as_str()).collect()
    }

    /// A database restricted to the named channels, in the given order.
    pub fn select(&self, names: &[impl AsRef<str>]) -> Result<Self> {
        let mut out = Self::new(self.frame_ids.clone());
        for name in names {
            let name = name.as_ref();
            let idx = self.channel_index(name).ok_or_else(|| Error::Channel {
                channel: name.to_string(),
                reason: "not present in template database".into(),
            })?;
            out.channels.push(self.channels[idx].clone());
        }
        Ok(out)
    }

    /// Writes one tensor file per channel plus a JSON manifest.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let n = self.len();
        let mut entries = Vec::with_capacity(self.channels.len());
        for (i, ch) in self.channels.iter().enumerate() {
            let file = format!("channel_{i:02}.sqft");
            let (layout, tensor) = match ch.metric {
                Metric::Keypoint => {
                    let (maps, (h, w)) = match ch.templates.first() {
                        Some(Descriptor::Keypoints(k)) => (k.len(), k.map_dims()),
                        _ => (1, (1, 1)),
                    };
                    let data = ch
                        .templates
                        .iter()
                        .flat_map(|t| match t {
                            Descriptor::Keypoints(k) => k.coords().to_vec(),
                            Descriptor::Vector(_) => unreachable!(),
                        })
                        .flat_map(|(x, y)| [x as f32, y as f32])
                        .collect();
                    (
                        ChannelLayout::Keypoints {
                            maps,
                            map_height: h,
                            map_width: w,
                        },
                        FeatureMapSet::new(n.max(1), maps, 2, data),
                    )
                }
                _ => {
                    let dim = ch.descriptor_len();
                    let data = ch
                        .templates
                        .iter()
                        .flat_map(|t| t.as_vector().unwrap().values().iter().copied())
                        .collect();
                    (ChannelLayout::Vector { dim }, FeatureMapSet::new(n.max(1), 1, dim, data))
                }
            };
            if n > 0 {
                write_tensor(&tensor?, dir.join(&file))?;
            }
            entries.push(ManifestChannel {
                name: ch.name.clone(),
                metric: ch.metric,
                layout,
                file,
            });
        }
        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            frame_ids: self.frame_ids.clone(),
            channels: entries,
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported database manifest {} v{}",
                manifest.format, manifest.version
            )));
        }
        let n = manifest.frame_ids.len();
        if n == 0 {
            return Err(Error::EmptyDatabase);
        }
        let mut db = Self::new(manifest.frame_ids);
        for entry in manifest.channels {
            let tensor = read_tensor(dir.join(&entry.file))?;
            let channel = match entry.layout {
                ChannelLayout::Vector { dim } => {
                    check_shape(&entry.name, &tensor, (n, 1, dim))?;
                    let vectors = tensor
                        .data()
                        .chunks_exact(dim)
                        .map(|c| DescriptorVector::new(c.to_vec()))
                        .collect();
                    ChannelTemplates::from_vectors(entry.name, entry.metric, vectors)?
                }
                ChannelLayout::Keypoints {
                    maps,
                    map_height,
                    map_width,
                } => {
                    check_shape(&entry.name, &tensor, (n, maps, 2))?;
                    let sets = tensor
                        .data()
                        .chunks_exact(maps * 2)
                        .map(|c| {
                            let coords = c.chunks_exact(2).map(|p| (p[0] as u32, p[1] as u32)).collect();
                            KeypointSet::new(coords, (map_height, map_width))
                        })
                        .collect::<Result<_>>()?;
                    ChannelTemplates::from_keypoints(entry.name, sets)?
                }
            };
            db.add_channel(channel)?;
        }
        Ok(db)
    }
}

fn check_shape(name: &str, t: &FeatureMapSet, expect: (usize, usize, usize)) -> Result<()> {
    if (t.maps(), t.height(), t.width()) != expect {
        return Err(Error::Channel {
            channel: name.to_string(),
            reason: format!(
                "tensor is {}x{}x{}, manifest expects {}x{}x{}",
                t.maps(),
                t.height(),
                t.width(),
                expect.0,
                expect.1,
                expect.2
            ),
        });
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    frame_ids: Vec<u64>,
    channels: Vec<ManifestChannel>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestChannel {
    name: String,
    metric: Metric,
    #[serde(flatten)]
    layout: ChannelLayout,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ChannelLayout {
    Vector {
        dim: usize,
    },
    Keypoints {
        maps: usize,
        map_height: usize,
        map_width: usize,
    },
}
