pub mod geometry;
pub mod imgproc;
pub mod synth;
pub mod features;
pub mod descriptors;
pub mod matching;
pub mod verify;
pub mod orchestrator;
pub mod bench;
