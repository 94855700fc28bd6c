pub mod frames;
pub mod output;
pub mod pgm;

pub use frames::{list_frames, read_manifest, DirSource, FrameEntry};
