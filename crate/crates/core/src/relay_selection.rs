//! Relay selection: pick one near user to forward for each far user.
//!
//! Score-based schemes (best SINR, harmonic mean) are evaluated at
//! provisional equal-split powers before any power allocation and averaged
//! over the diagonal subcarrier pairs `(i, i)`. Distance-based schemes depend
//! only on the topology. Ties always go to the lowest near-user index.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Topology;
use crate::link_budget::{BsPowerPolicy, NormalizedGains};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SelectionScheme {
    #[serde(rename = "best-sinr-si")]
    BestSinrWithSi,
    #[serde(rename = "best-sinr-nosi")]
    BestSinrNoSi,
    #[serde(rename = "harmonic-mean")]
    BestHarmonicMean,
    #[serde(rename = "shortest-user-distance")]
    ShortestUserDistance,
    #[serde(rename = "shortest-total-distance")]
    ShortestTotalDistance,
    #[serde(rename = "least-longest-hop")]
    LeastLongestHop,
    #[serde(rename = "shortest-second-hop")]
    ShortestSecondHop,
}

impl SelectionScheme {
    pub const ALL: [SelectionScheme; 7] = [
        SelectionScheme::BestSinrWithSi,
        SelectionScheme::BestSinrNoSi,
        SelectionScheme::BestHarmonicMean,
        SelectionScheme::ShortestUserDistance,
        SelectionScheme::ShortestTotalDistance,
        SelectionScheme::LeastLongestHop,
        SelectionScheme::ShortestSecondHop,
    ];

    pub const DISTANCE_BASED: [SelectionScheme; 4] = [
        SelectionScheme::ShortestUserDistance,
        SelectionScheme::ShortestTotalDistance,
        SelectionScheme::LeastLongestHop,
        SelectionScheme::ShortestSecondHop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectionScheme::BestSinrWithSi => "best-sinr-si",
            SelectionScheme::BestSinrNoSi => "best-sinr-nosi",
            SelectionScheme::BestHarmonicMean => "harmonic-mean",
            SelectionScheme::ShortestUserDistance => "shortest-user-distance",
            SelectionScheme::ShortestTotalDistance => "shortest-total-distance",
            SelectionScheme::LeastLongestHop => "least-longest-hop",
            SelectionScheme::ShortestSecondHop => "shortest-second-hop",
        }
    }

    pub fn is_distance_based(self) -> bool {
        Self::DISTANCE_BASED.contains(&self)
    }
}

impl fmt::Display for SelectionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|scheme| scheme.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown selection scheme {s:?}")))
    }
}

/// Equal-split powers used wherever a rate must be scored before power
/// allocation has run: every transmitter spends `pmax_user / N` per subcarrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProvisionalPowers {
    pub user: f64,
    pub relay: f64,
    pub nc: f64,
}

impl ProvisionalPowers {
    pub fn equal_split(pmax_user_w: f64, n: usize) -> Self {
        let p = pmax_user_w / n as f64;
        Self {
            user: p,
            relay: p,
            nc: p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Relay index for each far user.
    pub relay_of: Vec<usize>,
    pub is_relay: Vec<bool>,
}

impl SelectionResult {
    pub fn non_relays(&self) -> impl Iterator<Item = usize> + '_ {
        self.is_relay
            .iter()
            .enumerate()
            .filter(|(_, r)| !**r)
            .map(|(m, _)| m)
    }
}

/// Best-SINR score for far user `k` through near user `m` on pair `(i, j)`.
/// With `with_si` the denominator carries the BS self-interference cross term.
#[allow(clippy::too_many_arguments)]
pub fn score_sinr(
    k: usize,
    m: usize,
    gains: &NormalizedGains,
    powers: &ProvisionalPowers,
    bs: &BsPowerPolicy,
    with_si: bool,
    (i, j): (usize, usize),
) -> f64 {
    let first = powers.user * gains.a[[k, m, i]];
    let second = powers.relay * gains.b2[[m, j]];
    let mut den = first + second;
    if with_si {
        den += powers.user * bs.p_b[j] * gains.c_si[j] * gains.a[[k, m, i]];
    }
    if den <= 0.0 {
        return 0.0;
    }
    first * second / den
}

/// Harmonic mean of the two hop SNRs; zero if either hop is dead.
pub fn score_harmonic(
    k: usize,
    m: usize,
    gains: &NormalizedGains,
    powers: &ProvisionalPowers,
    (i, j): (usize, usize),
) -> f64 {
    harmonic_mean(powers.user * gains.a[[k, m, i]], powers.relay * gains.b2[[m, j]])
}

fn harmonic_mean(first: f64, second: f64) -> f64 {
    if first <= 0.0 || second <= 0.0 {
        return 0.0;
    }
    2.0 / (first.recip() + second.recip())
}

/// Scheme score for far user `k` through near user `m`. Larger is better.
fn candidate_score(
    scheme: SelectionScheme,
    k: usize,
    m: usize,
    topology: &Topology,
    gains: &NormalizedGains,
    powers: &ProvisionalPowers,
    bs: &BsPowerPolicy,
) -> f64 {
    let d_u = || topology.user_to_relay(k, m);
    let d_r = || topology.relay_to_bs(m);
    let mean_over_diagonal = |f: &dyn Fn(usize) -> f64| {
        let n = gains.n();
        (0..n).map(f).sum::<f64>() / n as f64
    };
    match scheme {
        SelectionScheme::BestSinrWithSi => {
            mean_over_diagonal(&|i| score_sinr(k, m, gains, powers, bs, true, (i, i)))
        }
        SelectionScheme::BestSinrNoSi => {
            mean_over_diagonal(&|i| score_sinr(k, m, gains, powers, bs, false, (i, i)))
        }
        SelectionScheme::BestHarmonicMean => {
            mean_over_diagonal(&|i| score_harmonic(k, m, gains, powers, (i, i)))
        }
        SelectionScheme::ShortestUserDistance => -d_u(),
        SelectionScheme::ShortestTotalDistance => -(d_u() + d_r()),
        SelectionScheme::LeastLongestHop => -d_u().max(d_r()),
        SelectionScheme::ShortestSecondHop => -d_r(),
    }
}

/// Picks the best near user in `available` for far user `k`.
#[allow(clippy::too_many_arguments)]
pub fn select_relay(
    scheme: SelectionScheme,
    k: usize,
    topology: &Topology,
    gains: &NormalizedGains,
    powers: &ProvisionalPowers,
    bs: &BsPowerPolicy,
    available: &[usize],
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &m in available {
        let s = candidate_score(scheme, k, m, topology, gains, powers, bs);
        match best {
            Some((bm, top)) if s < top || (s == top && m > bm) => {}
            _ => best = Some((m, s)),
        }
    }
    best.map(|(m, _)| m)
        .ok_or_else(|| Error::Selection(format!("no candidate relay left for far user {k}")))
}

/// Selects a relay for every far user in ascending order. With `exclusive`
/// a near user relays for at most one far user.
pub fn select_all(
    scheme: SelectionScheme,
    topology: &Topology,
    gains: &NormalizedGains,
    powers: &ProvisionalPowers,
    bs: &BsPowerPolicy,
    exclusive: bool,
) -> Result<SelectionResult> {
    let (k1, k2) = (topology.k1(), topology.k2());
    if k2 == 0 {
        return Err(Error::Selection("no near users to act as relays".into()));
    }
    if exclusive && k1 > k2 {
        return Err(Error::InvalidConfig(format!(
            "exclusive relaying needs k1 <= k2, got k1 = {k1}, k2 = {k2}"
        )));
    }
    let mut available: Vec<usize> = (0..k2).collect();
    let mut relay_of = Vec::with_capacity(k1);
    let mut is_relay = vec![false; k2];
    for k in 0..k1 {
        let m = select_relay(scheme, k, topology, gains, powers, bs, &available)?;
        if exclusive {
            available.retain(|&c| c != m);
        }
        relay_of.push(m);
        is_relay[m] = true;
    }
    Ok(SelectionResult { relay_of, is_relay })
}
