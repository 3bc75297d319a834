//! Observation normalization, emission fusion and sequence decoding.

mod observation;
mod viterbi;

pub use observation::{
    argmax, build_emission_column, normalize_observation, ObservationColumn, DEFAULT_O_THRESH,
    EPSILON, OBSERVATION_MAX,
};
pub use viterbi::{
    dump_debug_matrices, transition_term, viterbi_decode, viterbi_decode_naive, EmissionMatrix,
    TransitionModel, ViterbiResult,
};
