//! dB helpers. Negative infinity dBm maps to exactly zero watts and back.

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Noise power over one subcarrier, N0 * W, in watts.
pub fn noise_power_watts(n0_dbm_hz: f64, w_hz: f64) -> f64 {
    dbm_to_watts(n0_dbm_hz) * w_hz
}
