//! Seeded synthetic traverses for desk-scale benchmarking.
//!
//! Each channel describes places along a 1-D route: random anchor vectors
//! every `anchor_spacing` templates, linearly interpolated, plus Gaussian
//! noise. The query drives the same route under a velocity profile.
//! Corrupted or novel query frames get fresh random descriptors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset_io::GroundTruth;
use crate::descriptors::{ChannelTemplates, Descriptor, DescriptorVector, Metric, TemplateDatabase};
use crate::error::{Error, Result};
use crate::sequence::{localize_sequence, LocalizerConfig, MatchDecision};

/// Half-open range of query frame indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRange {
    pub start: usize,
    pub end: usize,
}

impl FrameRange {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: usize) -> bool {
        (self.start..self.end).contains(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticChannel {
    pub name: String,
    pub dim: usize,
    /// Query frames whose descriptor on this channel is replaced by noise.
    #[serde(default)]
    pub corruption: Vec<FrameRange>,
}

/// Templates advanced per query frame over a range of query frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySegment {
    pub start: usize,
    pub end: usize,
    pub speed: f64,
}

/// Templates `target..target+length` look exactly like `source..source+length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AliasedPair {
    pub source: usize,
    pub target: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticWorld {
    pub seed: u64,
    /// Reference templates along the route.
    pub templates: usize,
    pub query_frames: usize,
    pub channels: Vec<SyntheticChannel>,
    #[serde(default = "default_anchor_spacing")]
    pub anchor_spacing: f64,
    #[serde(default = "default_noise")]
    pub reference_noise: f64,
    #[serde(default = "default_noise")]
    pub query_noise: f64,
    /// Route position of the first query frame, in templates.
    #[serde(default)]
    pub start_position: f64,
    #[serde(default = "default_speed")]
    pub default_speed: f64,
    #[serde(default)]
    pub velocity: Vec<VelocitySegment>,
    #[serde(default)]
    pub aliased: Vec<AliasedPair>,
    /// Query frames drawn from an unrelated environment (no true match).
    #[serde(default)]
    pub novel: Vec<FrameRange>,
    /// Ground-truth tolerance in frames.
    #[serde(default = "default_tolerance")]
    pub tolerance: u64,
}

fn default_anchor_spacing() -> f64 {
    8.0
}
fn default_noise() -> f64 {
    0.05
}
fn default_speed() -> f64 {
    1.0
}
fn default_tolerance() -> u64 {
    2
}

/// Fastest query speed, in templates per frame, the generator accepts.
pub const MAX_SPEED: f64 = 5.0;

impl SyntheticWorld {
    /// A world with `channels` channels of dimension `dim` and a constant
    /// unit-speed query over the whole route.
    pub fn new(seed: u64, templates: usize, channels: usize, dim: usize) -> Self {
        Self {
            seed,
            templates,
            query_frames: templates,
            channels: (0..channels)
                .map(|c| SyntheticChannel {
                    name: format!("channel-{c}"),
                    dim,
                    corruption: vec![],
                })
                .collect(),
            anchor_spacing: default_anchor_spacing(),
            reference_noise: default_noise(),
            query_noise: default_noise(),
            start_position: 0.0,
            default_speed: default_speed(),
            velocity: vec![],
            aliased: vec![],
            novel: vec![],
            tolerance: default_tolerance(),
        }
    }

    /// Four noisy channels, each corrupted over its own quarter of the query.
    ///
    /// The descriptor noise keeps single channels imperfect outside their
    /// corrupted quarter as well; three agreeing channels average it out.
    pub fn fusion_benchmark(seed: u64) -> Self {
        let mut w = Self::new(seed, 400, 4, 32);
        w.query_noise = 0.6;
        w.reference_noise = 0.4;
        for (c, ch) in w.channels.iter_mut().enumerate() {
            ch.corruption = vec![FrameRange::new(100 * c, 100 * (c + 1))];
        }
        w.velocity = vec![
            VelocitySegment { start: 120, end: 140, speed: 0.5 },
            VelocitySegment { start: 260, end: 265, speed: 3.0 },
        ];
        w
    }

    /// Familiar frames, then 30 frames from elsewhere, then familiar again.
    pub fn relocalization(seed: u64) -> Self {
        let mut w = Self::new(seed, 400, 4, 64);
        w.query_frames = 110;
        w.novel = vec![FrameRange::new(40, 70)];
        w
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let w: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn speed_at(&self, t: usize) -> f64 {
        self.velocity
            .iter()
            .rev()
            .find(|s| (s.start..s.end).contains(&t))
            .map_or(self.default_speed, |s| s.speed)
    }

    /// Route position of every query frame.
    pub fn query_positions(&self) -> Vec<f64> {
        let mut p = self.start_position;
        (0..self.query_frames)
            .map(|t| {
                let here = p;
                p += self.speed_at(t);
                here
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.templates < 2 {
            return fail(format!("need at least 2 templates, got {}", self.templates));
        }
        if self.query_frames == 0 {
            return fail("query_frames must be positive".into());
        }
        if self.channels.is_empty() {
            return fail("no channels".into());
        }
        for ch in &self.channels {
            if ch.dim == 0 {
                return fail(format!("channel {} has zero dimension", ch.name));
            }
            if self.channels.iter().filter(|o| o.name == ch.name).count() > 1 {
                return fail(format!("duplicate channel name {}", ch.name));
            }
        }
        if !(self.anchor_spacing.is_finite() && self.anchor_spacing > 0.0) {
            return fail("anchor_spacing must be positive".into());
        }
        for (name, v) in [("reference_noise", self.reference_noise), ("query_noise", self.query_noise)] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} must be nonnegative"));
            }
        }
        let ranges = self
            .channels
            .iter()
            .flat_map(|c| c.corruption.iter())
            .chain(&self.novel)
            .map(|r| (r.start, r.end))
            .chain(self.velocity.iter().map(|s| (s.start, s.end)));
        for (start, end) in ranges {
            if start >= end || end > self.query_frames {
                return fail(format!(
                    "frame range {start}..{end} is empty or exceeds {} query frames",
                    self.query_frames
                ));
            }
        }
        for s in self.velocity.iter().map(|s| s.speed).chain([self.default_speed]) {
            if !(0.0..=MAX_SPEED).contains(&s) {
                return fail(format!("speed {s} outside [0, {MAX_SPEED}]"));
            }
        }
        for a in &self.aliased {
            if a.length == 0
                || a.source.max(a.target) + a.length > self.templates
                || a.source.abs_diff(a.target) < a.length
            {
                return fail(format!("aliased pair {a:?} is empty, overlapping or out of range"));
            }
        }
        if let Some(t) = (0..self.query_frames)
            .find(|&t| self.channels.iter().all(|c| c.corruption.iter().any(|r| r.contains(t))))
        {
            return fail(format!("every channel is corrupted at query frame {t}"));
        }
        let last = (self.templates - 1) as f64;
        if let Some((t, p)) = self
            .query_positions()
            .into_iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=last).contains(p))
        {
            return fail(format!("query frame {t} at position {p} leaves the route [0, {last}]"));
        }
        Ok(())
    }

    /// Where on the underlying manifold route position `p` is drawn from.
    fn manifold_position(&self, p: f64) -> f64 {
        for a in &self.aliased {
            let (t, len) = (a.target as f64, a.length as f64);
            if p >= t && p < t + len {
                return a.source as f64 + (p - t);
            }
        }
        p
    }

    pub fn generate(&self) -> Result<SyntheticRun> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let anchor_count = ((self.templates - 1) as f64 / self.anchor_spacing).ceil() as usize + 2;
        let anchors: Vec<Vec<Vec<f64>>> = self
            .channels
            .iter()
            .map(|ch| (0..anchor_count).map(|_| gaussian(&mut rng, ch.dim, 1.0)).collect())
            .collect();
        let point = |c: usize, p: f64| -> Vec<f64> {
            let u = self.manifold_position(p) / self.anchor_spacing;
            let j = (u.floor() as usize).min(anchor_count - 2);
            let f = u - j as f64;
            anchors[c][j]
                .iter()
                .zip(&anchors[c][j + 1])
                .map(|(a, b)| a + f * (b - a))
                .collect()
        };
        let noisy = |rng: &mut ChaCha8Rng, base: Vec<f64>, sigma: f64| -> DescriptorVector {
            let n = gaussian(rng, base.len(), sigma);
            DescriptorVector::new(base.iter().zip(n).map(|(b, e)| (b + e) as f32).collect())
        };

        let mut db = TemplateDatabase::new((0..self.templates as u64).collect());
        for (c, ch) in self.channels.iter().enumerate() {
            let vecs = (0..self.templates)
                .map(|k| noisy(&mut rng, point(c, k as f64), self.reference_noise))
                .collect();
            db.add_channel(ChannelTemplates::from_vectors(&ch.name, Metric::Cosine, vecs)?)?;
        }

        let positions = self.query_positions();
        let mut queries = Vec::with_capacity(self.query_frames);
        let mut truth = Vec::with_capacity(self.query_frames);
        for (t, &p) in positions.iter().enumerate() {
            let novel = self.novel.iter().any(|r| r.contains(t));
            let descriptors = self
                .channels
                .iter()
                .enumerate()
                .map(|(c, ch)| {
                    let v = if novel || ch.corruption.iter().any(|r| r.contains(t)) {
                        noisy(&mut rng, vec![0.0; ch.dim], 1.0)
                    } else {
                        noisy(&mut rng, point(c, p), self.query_noise)
                    };
                    Descriptor::Vector(v)
                })
                .collect();
            queries.push((t as u64, descriptors));
            truth.push((t as u64, (!novel).then(|| p.round() as u64)));
        }
        Ok(SyntheticRun {
            ground_truth: GroundTruth::frame_offset(truth, self.tolerance as f64)?,
            database: db,
            queries,
            positions,
        })
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// A generated reference database, query stream and ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub database: TemplateDatabase,
    /// `(query_id, descriptor per database channel)` in stream order.
    pub queries: Vec<(u64, Vec<Descriptor>)>,
    pub ground_truth: GroundTruth,
    /// True route position of each query frame.
    pub positions: Vec<f64>,
}

impl SyntheticRun {
    /// Localizes the whole query stream using only the named channels.
    pub fn localize(
        &self,
        channels: &[impl AsRef<str>],
        config: &LocalizerConfig,
    ) -> Result<Vec<MatchDecision>> {
        let db = self.database.select(channels)?;
        let index: Vec<usize> = channels
            .iter()
            .map(|c| self.database.channel_index(c.as_ref()).expect("selected above"))
            .collect();
        let stream = self
            .queries
            .iter()
            .map(|(id, d)| (*id, index.iter().map(|&i| d[i].clone()).collect()));
        localize_sequence(&db, config, stream)
    }
}
