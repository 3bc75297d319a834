//! Rolling query window, quality scoring, channel voting and per-frame decisions.

mod localizer;
mod quality;
mod voting;

pub use localizer::{
    localize_sequence, FrameTrace, Localizer, LocalizerConfig, MatchDecision, SequenceState,
    DEFAULT_ACCEPT_THRESHOLD,
};
pub use quality::{
    column_quality, dynamic_sequence_start, path_quality, DEFAULT_QUALITY_WINDOW, DEFAULT_Q_T,
    DEFAULT_S_MAX, DEFAULT_S_MIN,
};
pub use voting::{vote_exclude_channel, VoteMode, VoteRecord};
