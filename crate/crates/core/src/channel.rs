//! Small-scale Rayleigh fading and base-station self-interference draws.
//!
//! One [`ChannelRealization`] is held fixed over both time slots of a trial.
//! The relay-to-BS gains of the two slots are drawn independently.

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SiConfig {
    pub enabled: bool,
    /// Linear scale applied to `|H_SI|^2`.
    pub residual_factor: f64,
}

impl Default for SiConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            residual_factor: 1.0,
        }
    }
}

impl SiConfig {
    pub const OFF: SiConfig = SiConfig {
        enabled: false,
        residual_factor: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.residual_factor) {
            return Err(Error::InvalidConfig(format!(
                "si.residual_factor must lie in [0, 1], got {}",
                self.residual_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Far user `k` to near user `m` on slot-1 subcarrier `i`, shape `(K1, K2, N)`.
    pub h: Array3<Complex64>,
    /// Near user `m` to BS in slot 1, shape `(K2, N)`.
    pub g1: Array2<Complex64>,
    /// Near user `m` to BS in slot 2, shape `(K2, N)`.
    pub g2: Array2<Complex64>,
    /// BS self-interference per subcarrier, shape `(N)`.
    pub h_si: Array1<Complex64>,
    /// Noise power per subcarrier in watts.
    pub n0w: f64,
}

impl ChannelRealization {
    pub fn n_subcarriers(&self) -> usize {
        self.h_si.len()
    }
}

/// Zero-mean circularly-symmetric complex Gaussian with `E|h|^2 = 1`.
pub fn draw_complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws every coefficient of one trial in the fixed order h, g1, g2, h_si.
/// The self-interference draw is consumed even when SI is disabled so that
/// SI-on and SI-off runs with the same seed see identical h and g.
pub fn make_realization<R: Rng + ?Sized>(
    topology: &Topology,
    n_subcarriers: usize,
    si: &SiConfig,
    n0w: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if n_subcarriers == 0 {
        return Err(Error::InvalidConfig("n_subcarriers must be >= 1".into()));
    }
    if !(n0w > 0.0 && n0w.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise power must be > 0, got {n0w}")));
    }
    let (k1, k2, n) = (topology.k1(), topology.k2(), n_subcarriers);
    let h = Array3::from_shape_simple_fn((k1, k2, n), || draw_complex_gaussian(rng));
    let g1 = Array2::from_shape_simple_fn((k2, n), || draw_complex_gaussian(rng));
    let g2 = Array2::from_shape_simple_fn((k2, n), || draw_complex_gaussian(rng));
    let raw_si = Array1::from_shape_simple_fn(n, || draw_complex_gaussian(rng));
    let h_si = if si.enabled {
        raw_si * si.residual_factor.sqrt()
    } else {
        Array1::zeros(n)
    };
    Ok(ChannelRealization {
        h,
        g1,
        g2,
        h_si,
        n0w,
    })
}
