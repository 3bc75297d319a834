use std::collections::VecDeque;

use serde::Serialize;

use crate::descriptors::{Descriptor, TemplateDatabase};
use crate::error::{Error, Result};
use crate::fusion::{
    build_emission_column, normalize_observation, viterbi_decode, EmissionMatrix,
    ObservationColumn, TransitionModel, ViterbiResult, DEFAULT_O_THRESH,
};

use super::quality::{
    column_quality, dynamic_sequence_start, path_quality, DEFAULT_QUALITY_WINDOW, DEFAULT_Q_T,
    DEFAULT_S_MAX, DEFAULT_S_MIN,
};
use super::voting::{vote_exclude_channel, VoteMode};

/// Tunables for sequence localization.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizerConfig {
    /// Observation floor threshold, one per database channel (or one shared).
    pub o_thresh: Vec<f64>,
    pub q_t: f64,
    /// Half-width of the band excluded around a best match when scoring quality.
    pub quality_window: usize,
    pub s_min: usize,
    pub s_max: usize,
    pub transition: TransitionModel,
    /// Averaged quality at or below which a decision is accepted.
    pub accept_threshold: f64,
    pub vote_mode: VoteMode,
    /// Per-frame exclusion of the worst channel.
    pub mpf: bool,
    /// When false every decode uses the full `s_max` window.
    pub dynamic_length: bool,
}

/// Default acceptance threshold on the averaged quality score.
pub const DEFAULT_ACCEPT_THRESHOLD: f64 = 0.1;

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            o_thresh: vec![DEFAULT_O_THRESH],
            q_t: DEFAULT_Q_T,
            quality_window: DEFAULT_QUALITY_WINDOW,
            s_min: DEFAULT_S_MIN,
            s_max: DEFAULT_S_MAX,
            transition: TransitionModel::default(),
            accept_threshold: DEFAULT_ACCEPT_THRESHOLD,
            vote_mode: VoteMode::Median,
            mpf: true,
            dynamic_length: true,
        }
    }
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s_min == 0 || self.s_min > self.s_max {
            return Err(Error::Config(format!(
                "need 1 <= s_min <= s_max, got s_min={} s_max={}",
                self.s_min, self.s_max
            )));
        }
        if self.o_thresh.is_empty() {
            return Err(Error::Config("o_thresh must not be empty".into()));
        }
        if let Some(t) = self.o_thresh.iter().find(|t| !(0.0..1.0).contains(*t)) {
            return Err(Error::Config(format!("o_thresh {t} outside [0, 1)")));
        }
        if !(self.q_t.is_finite() && self.q_t >= 0.0) {
            return Err(Error::Config(format!("q_t must be nonnegative, got {}", self.q_t)));
        }
        if !self.accept_threshold.is_finite() {
            return Err(Error::Config("accept_threshold must be finite".into()));
        }
        self.transition
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    fn o_thresh_for(&self, channel: usize) -> f64 {
        if self.o_thresh.len() == 1 {
            self.o_thresh[0]
        } else {
            self.o_thresh[channel]
        }
    }
}

/// Per-query-frame localization output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchDecision {
    pub query_id: u64,
    /// Index of the matched template in the database.
    pub template: usize,
    /// Reference frame id of the matched template.
    pub ref_id: u64,
    /// Averaged post-path quality; lower is more confident.
    pub quality: f64,
    pub accepted: bool,
    pub seq_len: usize,
    /// 1-based start within the rolling window, 0 when the full window was used.
    pub seq_start: usize,
    pub excluded_channel: Option<usize>,
    /// Single-frame best template per channel.
    pub channel_bests: Vec<usize>,
}

#[derive(Debug, Clone)]
struct FrameRecord {
    emission: Vec<f64>,
    contributors: Vec<usize>,
    quality: f64,
}

/// Rolling window of recent query frames.
#[derive(Debug, Clone, Default)]
pub struct SequenceState {
    frames: VecDeque<FrameRecord>,
}

impl SequenceState {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Pre-decode quality score per frame in the window, oldest first.
    pub fn quality_history(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.quality).collect()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }
}

/// Everything computed for the newest frame, for diagnostics.
#[derive(Debug, Clone)]
pub struct FrameTrace {
    pub decision: MatchDecision,
    pub observations: Vec<ObservationColumn>,
    pub emission: EmissionMatrix,
    pub viterbi: ViterbiResult,
}

/// Streams query frames against a template database.
#[derive(Debug, Clone)]
pub struct Localizer<'db> {
    db: &'db TemplateDatabase,
    config: LocalizerConfig,
    state: SequenceState,
}

impl<'db> Localizer<'db> {
    pub fn new(db: &'db TemplateDatabase, config: LocalizerConfig) -> Result<Self> {
        config.validate()?;
        if db.is_empty() {
            return Err(Error::EmptyDatabase);
        }
        if db.channels().is_empty() {
            return Err(Error::Config("template database has no channels".into()));
        }
        if config.o_thresh.len() != 1 && config.o_thresh.len() != db.channels().len() {
            return Err(Error::Config(format!(
                "{} o_thresh values for {} channels",
                config.o_thresh.len(),
                db.channels().len()
            )));
        }
        if db.len() <= 2 * config.quality_window + 1 {
            return Err(Error::WindowTooWide {
                templates: db.len(),
                half_width: config.quality_window,
            });
        }
        Ok(Self {
            db,
            config,
            state: SequenceState::default(),
        })
    }

    pub fn config(&self) -> &LocalizerConfig {
        &self.config
    }

    pub fn state(&self) -> &SequenceState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state.clear();
    }

    /// Localizes one query frame given its descriptor on every database channel.
    pub fn push(&mut self, query_id: u64, descriptors: &[Descriptor]) -> Result<MatchDecision> {
        Ok(self.push_traced(query_id, descriptors)?.decision)
    }

    pub fn push_traced(&mut self, query_id: u64, descriptors: &[Descriptor]) -> Result<FrameTrace> {
        if descriptors.len() != self.db.channels().len() {
            return Err(Error::DimensionMismatch {
                expected: self.db.channels().len(),
                actual: descriptors.len(),
            });
        }
        let distances = self
            .db
            .channels()
            .iter()
            .zip(descriptors)
            .map(|(ch, d)| ch.distance_column(d))
            .collect::<Result<Vec<_>>>()?;
        self.push_distances(query_id, &distances)
    }

    /// Localizes one query frame from precomputed per-channel distance columns.
    pub fn push_distances(&mut self, query_id: u64, distances: &[Vec<f64>]) -> Result<FrameTrace> {
        let channels = self.db.channels().len();
        if distances.len() != channels {
            return Err(Error::DimensionMismatch {
                expected: channels,
                actual: distances.len(),
            });
        }
        let observations = distances
            .iter()
            .enumerate()
            .map(|(c, d)| {
                if d.len() != self.db.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.db.len(),
                        actual: d.len(),
                    });
                }
                normalize_observation(d, self.config.o_thresh_for(c))
            })
            .collect::<Result<Vec<_>>>()?;
        let bests: Vec<usize> = observations.iter().map(ObservationColumn::best).collect();
        let excluded = if self.config.mpf {
            vote_exclude_channel(&bests, self.config.vote_mode).excluded
        } else {
            None
        };
        let contributors: Vec<usize> = (0..channels).filter(|&c| Some(c) != excluded).collect();
        let used: Vec<&ObservationColumn> = contributors.iter().map(|&c| &observations[c]).collect();
        let emission = build_emission_column(&used)?;
        let quality = column_quality(&emission, self.config.quality_window)?;

        self.state.frames.push_back(FrameRecord {
            emission,
            contributors,
            quality,
        });
        while self.state.frames.len() > self.config.s_max {
            self.state.frames.pop_front();
        }

        let seq_start = if self.config.dynamic_length {
            dynamic_sequence_start(
                &self.state.quality_history(),
                self.config.s_min,
                self.config.s_max,
                self.config.q_t,
            )
        } else {
            0
        };
        let skip = seq_start.saturating_sub(1);
        let mut matrix = EmissionMatrix::new(self.db.len());
        for f in self.state.frames.iter().skip(skip) {
            matrix.push(f.emission.clone(), f.contributors.clone())?;
        }
        let viterbi = viterbi_decode(&matrix, &self.config.transition)?;
        let quality = path_quality(&matrix, &viterbi.path, self.config.quality_window)?;
        let template = *viterbi.path.last().expect("nonempty path");
        let decision = MatchDecision {
            query_id,
            template,
            ref_id: self.db.frame_ids()[template],
            quality,
            accepted: quality <= self.config.accept_threshold,
            seq_len: matrix.len(),
            seq_start,
            excluded_channel: excluded,
            channel_bests: bests,
        };
        Ok(FrameTrace {
            decision,
            observations,
            emission: matrix,
            viterbi,
        })
    }
}

/// Runs a whole query stream through a fresh localizer.
pub fn localize_sequence(
    db: &TemplateDatabase,
    config: &LocalizerConfig,
    query: impl IntoIterator<Item = (u64, Vec<Descriptor>)>,
) -> Result<Vec<MatchDecision>> {
    let mut loc = Localizer::new(db, config.clone())?;
    query
        .into_iter()
        .map(|(id, d)| loc.push(id, &d))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptors::{ChannelTemplates, DescriptorVector, Metric};

    fn onehot_db(n: usize, channels: usize) -> TemplateDatabase {
        let mut db = TemplateDatabase::new((0..n as u64).collect());
        for c in 0..channels {
            let vecs = (0..n)
                .map(|k| {
                    let mut v = vec![0.0f32; n];
                    v[k] = 1.0;
                    v[(k + 1) % n] = 0.3;
                    DescriptorVector::new(v)
                })
                .collect();
            db.add_channel(ChannelTemplates::from_vectors(format!("c{c}"), Metric::Cosine, vecs).unwrap())
                .unwrap();
        }
        db
    }

    fn query_of(db: &TemplateDatabase, k: usize) -> Vec<Descriptor> {
        db.channels().iter().map(|c| c.template(k).unwrap().clone()).collect()
    }

    #[test]
    fn self_match_tracks_identity() {
        let db = onehot_db(40, 3);
        let mut loc = Localizer::new(&db, LocalizerConfig::default()).unwrap();
        for k in 0..40 {
            let d = loc.push(k as u64, &query_of(&db, k)).unwrap();
            assert_eq!(d.template, k);
            assert!(d.accepted, "frame {k}: quality {}", d.quality);
            assert!(d.seq_len >= 1.min(k + 1) && d.seq_len <= 20);
            assert_eq!(d.seq_len, (k + 1).min(20));
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let db = onehot_db(30, 2);
        let mut loc = Localizer::new(&db, LocalizerConfig::default()).unwrap();
        assert!(loc.push(0, &query_of(&db, 0)[..1]).is_err());
        let small = onehot_db(20, 1);
        assert!(matches!(
            Localizer::new(&small, LocalizerConfig::default()),
            Err(Error::WindowTooWide { .. })
        ));
        let bad = LocalizerConfig {
            s_min: 30,
            ..LocalizerConfig::default()
        };
        assert!(Localizer::new(&db, bad).is_err());
    }

    #[test]
    fn fixed_length_always_uses_full_window() {
        let db = onehot_db(40, 1);
        let cfg = LocalizerConfig {
            dynamic_length: false,
            ..LocalizerConfig::default()
        };
        let decisions =
            localize_sequence(&db, &cfg, (0..30).map(|k| (k as u64, query_of(&db, k)))).unwrap();
        for (k, d) in decisions.iter().enumerate() {
            assert_eq!(d.seq_start, 0);
            assert_eq!(d.seq_len, (k + 1).min(20));
        }
    }
}
