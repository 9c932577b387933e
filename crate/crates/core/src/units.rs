//! Conversions between the normalized unit system and SI.
//!
//! Rates and detunings are carried in units of the excited-state dephasing
//! rate γ13. Times are carried in units of 1/γ13 internally and reported in
//! nanoseconds.

use std::f64::consts::TAU;

/// γ13 of the Rb D1 line used throughout: 2π × 3 MHz, in rad/s.
pub const SI_GAMMA13: f64 = TAU * 3.0e6;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Nanoseconds to dimensionless time (units of 1/γ13).
#[inline]
pub fn ns_to_natural(ns: f64, si_gamma13: f64) -> f64 {
    ns * 1e-9 * si_gamma13
}

/// Dimensionless time (units of 1/γ13) to nanoseconds.
#[inline]
pub fn natural_to_ns(t: f64, si_gamma13: f64) -> f64 {
    t / si_gamma13 * 1e9
}

/// An angular rate in γ13 units expressed as an ordinary frequency in Hz.
#[inline]
pub fn rate_to_hz(rate: f64, si_gamma13: f64) -> f64 {
    rate * si_gamma13 / TAU
}

/// An ordinary frequency in Hz expressed as an angular rate in γ13 units.
#[inline]
pub fn hz_to_rate(hz: f64, si_gamma13: f64) -> f64 {
    hz * TAU / si_gamma13
}

/// Group delay of a fiber of `length_m` with group index `group_index`, in ns.
pub fn fiber_delay_ns(length_m: f64, group_index: f64) -> f64 {
    length_m * group_index / SPEED_OF_LIGHT * 1e9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_megahertz_is_five_gamma13() {
        assert!((hz_to_rate(15e6, SI_GAMMA13) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn time_round_trip() {
        let t = ns_to_natural(171.0, SI_GAMMA13);
        assert!((natural_to_ns(t, SI_GAMMA13) - 171.0).abs() < 1e-9);
        // one natural time unit is 1/(2π·3 MHz) ≈ 53.05 ns
        assert!((natural_to_ns(1.0, SI_GAMMA13) - 53.051_647_697).abs() < 1e-6);
    }

    #[test]
    fn fiber_delay_of_35_m() {
        let d = fiber_delay_ns(35.0, 1.468);
        assert!((d - 171.4).abs() < 0.1, "{d}");
    }
}
