//! Shared inputs for the criterion benchmarks.

use biphoton::{dressed_modes, g2_analytic, AmplitudeModel, DetectionConfig, SystemParams, Wavepacket};

/// The detuned working point used throughout: Δc = 28.3, Ωc = 14.8.
pub fn working_point() -> SystemParams {
    SystemParams::with_coupling(28.3, 14.8)
}

pub fn model(grid: &biphoton::TimeGridConfig) -> Wavepacket {
    g2_analytic(&working_point(), &AmplitudeModel::default(), grid).expect("valid working point")
}

/// Detection settings that produce about `pairs` detected pairs.
pub fn detection(pairs: f64) -> DetectionConfig {
    let base = DetectionConfig {
        measurement_time: 10.0,
        ..DetectionConfig::default()
    };
    DetectionConfig {
        pair_rate: pairs * base.pair_rate / base.expected_detected_pairs(),
        ..base
    }
}

pub fn narrow_center() -> f64 {
    dressed_modes(&working_point())
        .expect("valid working point")
        .narrow_pole()
        .re
}
