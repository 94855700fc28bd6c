use crate::config::DvsConfig;
use crate::types::Micros;

/// Intensity treated as full scale when the filter bandwidth follows the
/// pixel brightness (16-bit input range).
pub const FULL_SCALE_INTENSITY: f64 = 65535.0;

/// Time constant of each of the two filter stages, microseconds.
pub fn time_constant_us(cfg: &DvsConfig, linear_intensity: f64) -> f64 {
    let tau = 1e6 / (2.0 * std::f64::consts::PI * cfg.lpf_cutoff_hz);
    if cfg.intensity_scaled_bandwidth {
        tau / (linear_intensity / FULL_SCALE_INTENSITY).clamp(0.01, 1.0)
    } else {
        tau
    }
}

/// Two cascaded first-order stages. Both hold log intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPassState {
    pub stage1: f64,
    pub stage2: f64,
}

impl LowPassState {
    pub fn settled(value: f64) -> Self {
        LowPassState {
            stage1: value,
            stage2: value,
        }
    }

    /// Advances both stages by `dt` with the input held at `input`, each by
    /// the exponential update `y += (u - y)(1 - exp(-dt / tau))`. Returns the
    /// second-stage output.
    pub fn step(&mut self, input: f64, dt: Micros, tau_us: f64) -> f64 {
        let alpha = 1.0 - (-(dt as f64) / tau_us).exp();
        if alpha >= 1.0 {
            self.stage1 = input;
            self.stage2 = input;
        } else {
            self.stage1 += (input - self.stage1) * alpha;
            self.stage2 += (self.stage1 - self.stage2) * alpha;
        }
        self.stage2
    }
}
