//! Frame, tensor and ground-truth ingestion.

mod frames;
mod ground_truth;
mod tensor;

pub use frames::{load_frame, FrameSource, GrayscaleImage};
pub use ground_truth::{load_ground_truth, GroundTruth, GroundTruthMode};
pub use tensor::{read_tensor, write_tensor, FeatureMapSet, TENSOR_HEADER_LEN, TENSOR_MAGIC};
