//! Unit conventions.
//!
//! Energies on the spin-model level are frequencies in kHz (h = 1), laser
//! parameters in MHz, times in microseconds. Rates quoted as `gamma / 2pi`
//! follow the same convention as energies, so the probability per unit time
//! of a rate quoted as 0.1 kHz is `2pi * 0.1` per millisecond.

use std::f64::consts::TAU;

/// Angular frequency in rad/us of a frequency given in kHz.
#[inline]
pub fn khz_to_rad_per_us(khz: f64) -> f64 {
    TAU * khz * 1e-3
}

/// Event rate per microsecond for a rate quoted as `gamma / 2pi` in kHz.
#[inline]
pub fn rate_khz_to_per_us(gamma_over_2pi_khz: f64) -> f64 {
    khz_to_rad_per_us(gamma_over_2pi_khz)
}

pub const KHZ_PER_MHZ: f64 = 1e3;
