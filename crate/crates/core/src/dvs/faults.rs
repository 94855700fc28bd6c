use crate::config::DvsConfig;
use crate::rng::{rng_for, Stage, StreamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fault {
    Normal,
    /// Emits ON events continuously.
    Hot,
    /// Never emits.
    Cold,
}

pub fn fault_for_pixel(cfg: &DvsConfig, pixel: usize) -> Fault {
    let mut rng = rng_for(cfg.seed, StreamId::pixel(Stage::Faults, pixel));
    if rng.uniform() >= cfg.bad_pixel_prob {
        Fault::Normal
    } else if rng.uniform() < 0.5 {
        Fault::Hot
    } else {
        Fault::Cold
    }
}

/// Draws the faulty-pixel map for one conversion run.
pub fn assign_faults(cfg: &DvsConfig) -> Vec<Fault> {
    (0..cfg.width * cfg.height)
        .map(|i| fault_for_pixel(cfg, i))
        .collect()
}
