//! Ground-truth scoring, precision-recall sweeps and synthetic benchmarks.

mod decisions;
mod scoring;
mod synthetic;

pub use decisions::{read_decisions, write_decisions};
pub use scoring::{score_decisions, sweep_pr, PrCurve, PrPoint, PrSummary, Score};
pub use synthetic::{
    AliasedPair, FrameRange, SyntheticChannel, SyntheticRun, SyntheticWorld, VelocitySegment,
    MAX_SPEED,
};
