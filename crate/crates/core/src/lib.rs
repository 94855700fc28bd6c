//! Frame and event camera simulator.
//!
//! Converts high-frame-rate intensity video into degraded low-rate CMOS
//! frames ([`cis`]) and DVS event streams ([`dvs`]), and scores
//! reconstructed video against ground truth ([`metrics`]). All randomness is
//! drawn from keyed streams ([`rng`]), so results are bit-identical for a
//! given seed regardless of thread count.

pub mod cis;
pub mod cli;
pub mod config;
pub mod dvs;
pub mod error;
pub mod io;
pub mod metrics;
pub mod patterns;
pub mod rng;
pub mod selftest;
pub mod source;
pub mod types;

pub use cis::{simulate_cis, CisFrame};
pub use config::{CisConfig, DvsConfig, DvsMode, RunConfig};
pub use dvs::{simulate_dvs, DvsOutput, DvsSimulator};
pub use error::{Error, Result};
pub use metrics::{psnr, sequence_report, ssim, GrayFrame, QualityReport};
pub use patterns::{generate, PatternKind, PatternSpec};
pub use rng::{rng_for, StreamId};
pub use source::FrameSource;
pub use types::{Event, EventFrame, IntensityFrame, Micros, Polarity};
