//! Noise-normalized gains, SINR expressions, rates and the total sum-rate.
//!
//! Naming follows the roles of the quantities: `x` is the far user's
//! first-hop power, `y` the relay's second-hop power, `z` the BS downlink
//! power on the same subcarrier, `a`/`b` the normalized first- and
//! second-hop gains and `c_gamma` the normalized self-interference gain.

use std::f64::consts::LN_2;

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::assignment::Assignment;
use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::geometry::{path_loss_between, path_loss_to_bs, Topology};
use crate::power_allocation::PowerProfile;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGains {
    /// `l(x_r, x_u) |h|^2 / N0W`, shape `(K1, K2, N)`.
    pub a: Array3<f64>,
    /// `l(x_r) |g1|^2 / N0W`, shape `(K2, N)`.
    pub b1: Array2<f64>,
    /// `l(x_r) |g2|^2 / N0W`, shape `(K2, N)`.
    pub b2: Array2<f64>,
    /// `|H_SI|^2 / N0W`, shape `(N)`.
    pub c_si: Array1<f64>,
}

impl NormalizedGains {
    pub fn k1(&self) -> usize {
        self.a.dim().0
    }

    pub fn k2(&self) -> usize {
        self.b1.dim().0
    }

    pub fn n(&self) -> usize {
        self.c_si.len()
    }
}

pub fn normalized_gains(realization: &ChannelRealization, topology: &Topology) -> Result<NormalizedGains> {
    let (k1, k2, n) = realization.h.dim();
    if k1 != topology.k1() || k2 != topology.k2() {
        return Err(Error::Dimension(format!(
            "realization is {k1}x{k2} users, topology is {}x{}",
            topology.k1(),
            topology.k2()
        )));
    }
    let alpha = topology.geometry.alpha;
    let n0w = realization.n0w;
    let mut a = Array3::zeros((k1, k2, n));
    for k in 0..k1 {
        for m in 0..k2 {
            let l = path_loss_between(&topology.relays[m], &topology.users[k], alpha)?;
            for i in 0..n {
                a[[k, m, i]] = l * realization.h[[k, m, i]].norm_sqr() / n0w;
            }
        }
    }
    let mut b1 = Array2::zeros((k2, n));
    let mut b2 = Array2::zeros((k2, n));
    for m in 0..k2 {
        let l = path_loss_to_bs(&topology.relays[m], alpha)?;
        for i in 0..n {
            b1[[m, i]] = l * realization.g1[[m, i]].norm_sqr() / n0w;
            b2[[m, i]] = l * realization.g2[[m, i]].norm_sqr() / n0w;
        }
    }
    let c_si = realization.h_si.mapv(|c| c.norm_sqr() / n0w);
    Ok(NormalizedGains { a, b1, b2, c_si })
}

/// Fixed BS downlink transmit power per subcarrier. It only enters the
/// uplink as self-interference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsPowerPolicy {
    pub p_b: Vec<f64>,
}

impl BsPowerPolicy {
    /// Splits `pmax_bs_w` evenly over `n` subcarriers.
    pub fn uniform(pmax_bs_w: f64, n: usize) -> Self {
        Self {
            p_b: vec![pmax_bs_w / n as f64; n],
        }
    }

    pub fn validate(&self, pmax_bs_w: f64) -> Result<()> {
        if self.p_b.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidConfig("BS powers must be non-negative".into()));
        }
        let total: f64 = self.p_b.iter().sum();
        if total > pmax_bs_w * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "BS powers sum to {total} W, above the {pmax_bs_w} W budget"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SinrMode {
    /// Full cooperative denominator.
    #[default]
    Exact,
    /// Drops the constant `1` and the standalone `z * c_gamma` term.
    Approximate,
}

/// `G = 1 / sqrt(p_user * l|h|^2 + N0W)`.
pub fn amplification_factor(p_user: f64, a_gain_numerator: f64, n0w: f64) -> f64 {
    1.0 / (p_user * a_gain_numerator + n0w).sqrt()
}

/// Constant term and first-hop coefficient of the cooperative denominator
/// `k + v + ce * u`, with `u = x a`, `v = y b`.
pub(crate) fn coop_denominator_constants(z: f64, c_gamma: f64, mode: SinrMode) -> (f64, f64) {
    let si = z * c_gamma;
    match mode {
        SinrMode::Exact => (1.0 + si, 1.0 + si),
        SinrMode::Approximate => (0.0, 1.0 + si),
    }
}

/// `u v / (k + v + ce u)` with its gradient and Hessian in `(u, v)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CoopSinrEval {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

pub(crate) fn coop_sinr_kernel(u: f64, v: f64, k: f64, ce: f64) -> f64 {
    let d = k + v + ce * u;
    if d <= 0.0 {
        0.0
    } else {
        u * v / d
    }
}

pub(crate) fn coop_sinr_eval(u: f64, v: f64, k: f64, ce: f64) -> CoopSinrEval {
    let d = k + v + ce * u;
    if d <= 0.0 {
        return CoopSinrEval {
            value: 0.0,
            grad: [0.0; 2],
            hess: [[0.0; 2]; 2],
        };
    }
    let d2 = d * d;
    let d3 = d2 * d;
    let duu = -2.0 * ce * v * (k + v) / d3;
    let dvv = -2.0 * u * (k + ce * u) / d3;
    let duv = ((k + 2.0 * v) * d - 2.0 * v * (k + v)) / d3;
    CoopSinrEval {
        value: u * v / d,
        grad: [v * (k + v) / d2, u * (k + ce * u) / d2],
        hess: [[duu, duv], [duv, dvv]],
    }
}

pub fn sinr_cooperative(x: f64, y: f64, z: f64, a: f64, b: f64, c_gamma: f64, mode: SinrMode) -> f64 {
    let (k, ce) = coop_denominator_constants(z, c_gamma, mode);
    coop_sinr_kernel(x * a, y * b, k, ce)
}

pub fn sinr_noncooperative(p: f64, b: f64, z: f64, c_gamma: f64) -> f64 {
    p * b / (1.0 + z * c_gamma)
}

/// Half the Shannon spectral efficiency; each transmission occupies one of
/// two slots.
pub fn rate_from_sinr(gamma: f64) -> f64 {
    0.5 * gamma.ln_1p() / LN_2
}

/// Sum of the cooperative and both non-cooperative rate terms selected by the
/// assignment indicators, in bit/s/Hz.
pub fn total_sum_rate(
    assignment: &Assignment,
    powers: &PowerProfile,
    gains: &NormalizedGains,
    bs: &BsPowerPolicy,
    mode: SinrMode,
) -> Result<f64> {
    check_dims(assignment, powers, gains, bs)?;
    let (k1, k2, n) = gains.a.dim();
    let mut coop = 0.0;
    for m in 0..k2 {
        for k in 0..k1 {
            for i in 0..n {
                for j in 0..n {
                    if assignment.rho[[k, m, i, j]] == 1 {
                        coop += rate_from_sinr(sinr_cooperative(
                            powers.p_coop_user[[k, m, i]],
                            powers.p_coop_relay[[m, j]],
                            bs.p_b[j],
                            gains.a[[k, m, i]],
                            gains.b2[[m, j]],
                            gains.c_si[j],
                            mode,
                        ));
                    }
                }
            }
        }
    }
    let mut nc1 = 0.0;
    let mut nc2 = 0.0;
    for m in 0..k2 {
        for i in 0..n {
            if assignment.sigma1[[m, i]] == 1 {
                nc1 += rate_from_sinr(sinr_noncooperative(
                    powers.p_nc1[[m, i]],
                    gains.b1[[m, i]],
                    bs.p_b[i],
                    gains.c_si[i],
                ));
            }
            if assignment.sigma2[[m, i]] == 1 {
                nc2 += rate_from_sinr(sinr_noncooperative(
                    powers.p_nc2[[m, i]],
                    gains.b2[[m, i]],
                    bs.p_b[i],
                    gains.c_si[i],
                ));
            }
        }
    }
    Ok(coop + nc1 + nc2)
}

fn check_dims(
    assignment: &Assignment,
    powers: &PowerProfile,
    gains: &NormalizedGains,
    bs: &BsPowerPolicy,
) -> Result<()> {
    let (k1, k2, n) = gains.a.dim();
    let ok = assignment.rho.dim() == (k1, k2, n, n)
        && assignment.sigma1.dim() == (k2, n)
        && assignment.sigma2.dim() == (k2, n)
        && powers.p_coop_user.dim() == (k1, k2, n)
        && powers.p_coop_relay.dim() == (k2, n)
        && powers.p_nc1.dim() == (k2, n)
        && powers.p_nc2.dim() == (k2, n)
        && gains.b1.dim() == (k2, n)
        && gains.b2.dim() == (k2, n)
        && gains.c_si.len() == n
        && bs.p_b.len() == n;
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "inputs disagree with gains of shape ({k1}, {k2}, {n})"
        )))
    }
}
