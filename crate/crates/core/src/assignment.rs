//! Subcarrier-pair assignment.
//!
//! Row `i` of the pair matrix is a slot-1 subcarrier and column `j` a slot-2
//! subcarrier. Each cell holds the best rate any single candidate achieves on
//! that pair: a far user through its selected relay (cooperative), or a
//! non-relay near user transmitting directly in both slots (non-cooperative,
//! the two half-rates summed). Munkres then matches rows to columns.

use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link_budget::{
    rate_from_sinr, sinr_cooperative, sinr_noncooperative, BsPowerPolicy, NormalizedGains, SinrMode,
};
use crate::relay_selection::{ProvisionalPowers, SelectionResult};

/// Who transmits on a subcarrier pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellWinner {
    Coop { k: usize, m: usize },
    NonCoop { m: usize },
}

/// The user whose data a cell carries, for QoS bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Owner {
    Far(usize),
    Near(usize),
}

impl CellWinner {
    pub fn owner(self) -> Owner {
        match self {
            CellWinner::Coop { k, .. } => Owner::Far(k),
            CellWinner::NonCoop { m } => Owner::Near(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairValueMatrix {
    /// Winning rate per `(i, j)` in bit/s/Hz.
    pub value: Array2<f64>,
    pub winner: Array2<CellWinner>,
    /// Every candidate in scoring order: far users ascending, then non-relay
    /// near users ascending.
    pub candidates: Vec<CellWinner>,
    /// Rate of each candidate on each cell, shape `(candidates, N, N)`.
    pub candidate_value: Array3<f64>,
}

impl PairValueMatrix {
    pub fn n(&self) -> usize {
        self.value.dim().0
    }

    /// Sum of the matrix entries picked by `pair_of`.
    pub fn total(&self, pair_of: &[usize]) -> f64 {
        pair_of
            .iter()
            .enumerate()
            .map(|(i, &j)| self.value[[i, j]])
            .sum()
    }

    /// Gives every candidate owner without a cell one, taking it from an owner
    /// that holds at least two and choosing the cell that loses the least
    /// rate. Owners are processed in candidate order; an owner that cannot be
    /// served without starving another is left out. Returns how many owners
    /// remain unserved.
    pub fn repair_for_qos(&mut self, pair_of: &[usize]) -> usize {
        let n = self.n();
        let mut unserved = 0;
        for (c, cand) in self.candidates.clone().into_iter().enumerate() {
            let owner = cand.owner();
            let count = |mat: &Self, o: Owner| {
                (0..n).filter(|&i| mat.winner[[i, pair_of[i]]].owner() == o).count()
            };
            if count(self, owner) > 0 {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (i, &j) in pair_of.iter().enumerate() {
                let holder = self.winner[[i, j]].owner();
                if count(self, holder) < 2 {
                    continue;
                }
                let loss = self.value[[i, j]] - self.candidate_value[[c, i, j]];
                if best.is_none_or(|(_, l)| loss < l) {
                    best = Some((i, loss));
                }
            }
            match best {
                Some((i, _)) => {
                    let j = pair_of[i];
                    self.value[[i, j]] = self.candidate_value[[c, i, j]];
                    self.winner[[i, j]] = cand;
                }
                None => unserved += 1,
            }
        }
        unserved
    }
}

pub fn build_pair_matrix(
    selection: &SelectionResult,
    gains: &NormalizedGains,
    powers: &ProvisionalPowers,
    bs: &BsPowerPolicy,
    mode: SinrMode,
) -> Result<PairValueMatrix> {
    let n = gains.n();
    let mut candidates: Vec<CellWinner> = selection
        .relay_of
        .iter()
        .enumerate()
        .map(|(k, &m)| CellWinner::Coop { k, m })
        .collect();
    candidates.extend(selection.non_relays().map(|m| CellWinner::NonCoop { m }));
    if candidates.is_empty() {
        return Err(Error::Assignment("no candidate transmitters for any subcarrier pair".into()));
    }

    let mut candidate_value = Array3::zeros((candidates.len(), n, n));
    for (c, cand) in candidates.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                candidate_value[[c, i, j]] = match *cand {
                    CellWinner::Coop { k, m } => rate_from_sinr(sinr_cooperative(
                        powers.user,
                        powers.relay,
                        bs.p_b[j],
                        gains.a[[k, m, i]],
                        gains.b2[[m, j]],
                        gains.c_si[j],
                        mode,
                    )),
                    CellWinner::NonCoop { m } => {
                        rate_from_sinr(sinr_noncooperative(powers.nc, gains.b1[[m, i]], bs.p_b[i], gains.c_si[i]))
                            + rate_from_sinr(sinr_noncooperative(
                                powers.nc,
                                gains.b2[[m, j]],
                                bs.p_b[j],
                                gains.c_si[j],
                            ))
                    }
                };
            }
        }
    }

    let mut value = Array2::zeros((n, n));
    let mut winner = Array2::from_elem((n, n), candidates[0]);
    for i in 0..n {
        for j in 0..n {
            let mut best = 0;
            for c in 1..candidates.len() {
                if candidate_value[[c, i, j]] > candidate_value[[best, i, j]] {
                    best = c;
                }
            }
            value[[i, j]] = candidate_value[[best, i, j]];
            winner[[i, j]] = candidates[best];
        }
    }
    Ok(PairValueMatrix {
        value,
        winner,
        candidates,
        candidate_value,
    })
}

/// Row-to-column permutation maximizing the summed value, via the O(n^3)
/// shortest-augmenting-path form of the Hungarian method on
/// `cost = max(value) - value`.
pub fn munkres(value: &Array2<f64>) -> Result<Vec<usize>> {
    let (rows, cols) = value.dim();
    if rows != cols {
        return Err(Error::Dimension(format!("assignment matrix must be square, got {rows}x{cols}")));
    }
    if value.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension("assignment matrix has non-finite entries".into()));
    }
    let n = rows;
    if n == 0 {
        return Ok(Vec::new());
    }
    let top = value.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cost = |i: usize, j: usize| top - value[[i, j]];

    // 1-based potentials; column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pair_of = vec![0; n];
    for j in 1..=n {
        pair_of[matched_row[j] - 1] = j - 1;
    }
    Ok(pair_of)
}

/// Binary subcarrier indicators for one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Slot-2 subcarrier paired with each slot-1 subcarrier.
    pub pair_of: Vec<usize>,
    /// Transmitter of each pair, indexed by slot-1 subcarrier.
    pub winners: Vec<CellWinner>,
    /// `rho[k, m, i, j]`.
    pub rho: Array4<u8>,
    /// `sigma1[m, i]`.
    pub sigma1: Array2<u8>,
    /// `sigma2[m, j]`.
    pub sigma2: Array2<u8>,
    /// Users subject to a minimum rate, served or not, in candidate order.
    pub qos_owners: Vec<Owner>,
}

impl Assignment {
    /// Builds indicators from explicit per-pair winners.
    pub fn from_winners(k1: usize, k2: usize, pair_of: Vec<usize>, winners: Vec<CellWinner>) -> Result<Self> {
        let n = pair_of.len();
        if winners.len() != n {
            return Err(Error::Dimension(format!("{} winners for {n} pairs", winners.len())));
        }
        let mut seen = vec![false; n];
        for &j in &pair_of {
            if j >= n || std::mem::replace(&mut seen[j], true) {
                return Err(Error::Assignment(format!("{pair_of:?} is not a permutation")));
            }
        }
        let mut rho = Array4::zeros((k1, k2, n, n));
        let mut sigma1 = Array2::zeros((k2, n));
        let mut sigma2 = Array2::zeros((k2, n));
        for (i, (&j, w)) in pair_of.iter().zip(&winners).enumerate() {
            match *w {
                CellWinner::Coop { k, m } if k < k1 && m < k2 => rho[[k, m, i, j]] = 1,
                CellWinner::NonCoop { m } if m < k2 => {
                    sigma1[[m, i]] = 1;
                    sigma2[[m, j]] = 1;
                }
                other => return Err(Error::Dimension(format!("winner {other:?} out of range"))),
            }
        }
        let mut qos_owners: Vec<Owner> = (0..k1).map(Owner::Far).collect();
        let mut near: Vec<usize> = winners
            .iter()
            .filter_map(|w| match *w {
                CellWinner::NonCoop { m } => Some(m),
                CellWinner::Coop { .. } => None,
            })
            .collect();
        near.sort_unstable();
        near.dedup();
        qos_owners.extend(near.into_iter().map(Owner::Near));
        Ok(Self {
            pair_of,
            winners,
            rho,
            sigma1,
            sigma2,
            qos_owners,
        })
    }

    /// Replaces the default owner list (far users plus served near users).
    pub fn with_qos_owners(mut self, owners: Vec<Owner>) -> Self {
        self.qos_owners = owners;
        self
    }

    pub fn n(&self) -> usize {
        self.pair_of.len()
    }

    pub fn coop_cells(&self) -> usize {
        self.winners.iter().filter(|w| matches!(w, CellWinner::Coop { .. })).count()
    }

    /// Checks that every slot-1 subcarrier `i` and every slot-2 subcarrier
    /// `j` is used by exactly one transmission.
    pub fn check_constraints(&self) -> Result<()> {
        let (k1, k2, n, _) = self.rho.dim();
        for i in 0..n {
            let mut used: u32 = 0;
            for k in 0..k1 {
                for m in 0..k2 {
                    for j in 0..n {
                        used += u32::from(self.rho[[k, m, i, j]]);
                    }
                }
            }
            used += (0..k2).map(|m| u32::from(self.sigma1[[m, i]])).sum::<u32>();
            if used != 1 {
                return Err(Error::Assignment(format!("slot-1 subcarrier {i} used {used} times")));
            }
        }
        for j in 0..n {
            let mut used: u32 = 0;
            for k in 0..k1 {
                for m in 0..k2 {
                    for i in 0..n {
                        used += u32::from(self.rho[[k, m, i, j]]);
                    }
                }
            }
            used += (0..k2).map(|m| u32::from(self.sigma2[[m, j]])).sum::<u32>();
            if used != 1 {
                return Err(Error::Assignment(format!("slot-2 subcarrier {j} used {used} times")));
            }
        }
        Ok(())
    }
}

/// Reads the winners along `pair_of` into indicator form.
pub fn finalize_assignment(matrix: &PairValueMatrix, pair_of: &[usize], k1: usize, k2: usize) -> Result<Assignment> {
    if pair_of.len() != matrix.n() {
        return Err(Error::Dimension(format!(
            "permutation of length {} for a {}x{} matrix",
            pair_of.len(),
            matrix.n(),
            matrix.n()
        )));
    }
    if pair_of.iter().any(|&j| j >= matrix.n()) {
        return Err(Error::Assignment(format!("{pair_of:?} is not a permutation")));
    }
    let winners = pair_of.iter().enumerate().map(|(i, &j)| matrix.winner[[i, j]]).collect();
    let assignment = Assignment::from_winners(k1, k2, pair_of.to_vec(), winners)?;
    if matrix.candidates.is_empty() {
        return Ok(assignment);
    }
    let mut owners: Vec<Owner> = (0..k1).map(Owner::Far).collect();
    owners.extend(matrix.candidates.iter().filter_map(|c| match *c {
        CellWinner::NonCoop { m } => Some(Owner::Near(m)),
        CellWinner::Coop { .. } => None,
    }));
    Ok(assignment.with_qos_owners(owners))
}
