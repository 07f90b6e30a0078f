//! Continuous power allocation for a fixed subcarrier assignment.
//!
//! With the binary indicators fixed, the sum-rate is maximized over the
//! transmit powers subject to non-negativity, a per-link budget for each
//! relayed far user (first plus second hop), a per-slot budget for each
//! direct near user, and minimum-rate constraints per user. The objective
//! uses the approximate cooperative SINR, whose rate is jointly concave in
//! the two hop powers.
//!
//! The solver is a logarithmic-barrier interior-point method. Powers are
//! rescaled by their budget so every variable lives in `(0, 1)`; the barrier
//! parameter starts at 1 and shrinks tenfold until `m * mu` (the duality gap
//! bound with `m` inequality constraints) drops below the tolerance. Each
//! barrier subproblem is solved by damped Newton ascent with an Armijo
//! backtracking line search, falling back to the plain gradient whenever the
//! Newton system is not negative definite.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::assignment::{Assignment, CellWinner, Owner};
use crate::error::{Error, Result};
use crate::link_budget::{coop_denominator_constants, coop_sinr_eval, BsPowerPolicy, NormalizedGains, SinrMode};
use crate::relay_selection::ProvisionalPowers;

/// All transmit powers of one trial, in watts. Entries not selected by the
/// assignment are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    /// Far user `k` to relay `m` on slot-1 subcarrier `i`.
    pub p_coop_user: Array3<f64>,
    /// Relay `m` to BS on slot-2 subcarrier `j`.
    pub p_coop_relay: Array2<f64>,
    /// Direct near user `m` on slot-1 subcarrier `i`.
    pub p_nc1: Array2<f64>,
    /// Direct near user `m` on slot-2 subcarrier `j`.
    pub p_nc2: Array2<f64>,
}

impl PowerProfile {
    pub fn zeros(k1: usize, k2: usize, n: usize) -> Self {
        Self {
            p_coop_user: Array3::zeros((k1, k2, n)),
            p_coop_relay: Array2::zeros((k2, n)),
            p_nc1: Array2::zeros((k2, n)),
            p_nc2: Array2::zeros((k2, n)),
        }
    }

    fn dims_of(assignment: &Assignment) -> (usize, usize, usize) {
        let (k1, k2, n, _) = assignment.rho.dim();
        (k1, k2, n)
    }

    /// Equal per-subcarrier powers on every active link.
    pub fn provisional(assignment: &Assignment, powers: &ProvisionalPowers) -> Self {
        let (k1, k2, n) = Self::dims_of(assignment);
        let mut out = Self::zeros(k1, k2, n);
        for slot in power_variables(assignment) {
            let p = match slot {
                VarSlot::CoopUser { .. } => powers.user,
                VarSlot::CoopRelay { .. } => powers.relay,
                VarSlot::Nc1 { .. } | VarSlot::Nc2 { .. } => powers.nc,
            };
            out.set(slot, p);
        }
        out
    }

    pub fn get(&self, slot: VarSlot) -> f64 {
        match slot {
            VarSlot::CoopUser { k, m, i } => self.p_coop_user[[k, m, i]],
            VarSlot::CoopRelay { m, j } => self.p_coop_relay[[m, j]],
            VarSlot::Nc1 { m, i } => self.p_nc1[[m, i]],
            VarSlot::Nc2 { m, j } => self.p_nc2[[m, j]],
        }
    }

    pub fn set(&mut self, slot: VarSlot, p: f64) {
        match slot {
            VarSlot::CoopUser { k, m, i } => self.p_coop_user[[k, m, i]] = p,
            VarSlot::CoopRelay { m, j } => self.p_coop_relay[[m, j]] = p,
            VarSlot::Nc1 { m, i } => self.p_nc1[[m, i]] = p,
            VarSlot::Nc2 { m, j } => self.p_nc2[[m, j]] = p,
        }
    }
}

/// Location of one free power variable in a [`PowerProfile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarSlot {
    CoopUser { k: usize, m: usize, i: usize },
    CoopRelay { m: usize, j: usize },
    Nc1 { m: usize, i: usize },
    Nc2 { m: usize, j: usize },
}

/// The free variables of an assignment, two per subcarrier pair in
/// ascending slot-1 order: the slot-1 transmitter then the slot-2 one.
pub fn power_variables(assignment: &Assignment) -> Vec<VarSlot> {
    assignment
        .pair_of
        .iter()
        .zip(&assignment.winners)
        .enumerate()
        .flat_map(|(i, (&j, w))| match *w {
            CellWinner::Coop { k, m } => [VarSlot::CoopUser { k, m, i }, VarSlot::CoopRelay { m, j }],
            CellWinner::NonCoop { m } => [VarSlot::Nc1 { m, i }, VarSlot::Nc2 { m, j }],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    /// Per relayed far user, first plus second hop, watts.
    pub pmax_coop: f64,
    /// Per direct near user and per slot, watts.
    pub pmax_nc: f64,
    /// Minimum rate of each far user, bit/s/Hz.
    pub rmin_coop: f64,
    /// Minimum per-slot rate of each direct near user, bit/s/Hz.
    pub rmin_nc: f64,
}

impl Budgets {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("pmax_coop", self.pmax_coop),
            ("pmax_nc", self.pmax_nc),
            ("rmin_coop", self.rmin_coop),
            ("rmin_nc", self.rmin_nc),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    /// Sum-rate at the returned powers in the solver's SINR mode, bit/s/Hz.
    pub objective: f64,
    /// Total inner (Newton) iterations over all barrier stages.
    pub iterations: usize,
    /// Largest violation of stationarity or complementarity at the returned
    /// point, in budget-normalized units.
    pub kkt_residual: f64,
    /// `m * mu` at the last barrier stage.
    pub duality_gap: f64,
    pub feasible: bool,
    /// The minimum-rate constraints could not all be met and were dropped.
    pub qos_relaxed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub mu_initial: f64,
    pub mu_factor: f64,
    pub gap_tolerance: f64,
    pub armijo_slope: f64,
    pub backtrack: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Scale of the equal-power start inside the feasible set.
    pub interior_shrink: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            mu_initial: 1.0,
            mu_factor: 10.0,
            gap_tolerance: 1e-6,
            armijo_slope: 1e-4,
            backtrack: 0.5,
            max_inner: 200,
            max_outer: 40,
            interior_shrink: 0.99,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum BlockKey {
    Coop(usize, usize),
    Nc1(usize),
    Nc2(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum GroupKey {
    Far(usize),
    NearSlot1(usize),
    NearSlot2(usize),
}

#[derive(Debug, Clone, Copy)]
enum Term {
    /// Relayed rate; SINR is `kernel(ca * u[x], cb * u[y], k, ce)`.
    Coop {
        x: usize,
        y: usize,
        ca: f64,
        cb: f64,
        k: f64,
        ce: f64,
        group: usize,
    },
    /// Direct rate; SINR is `c * u[p]`.
    Nc { p: usize, c: f64, group: usize },
}

/// The concave program in budget-normalized variables.
#[derive(Debug, Clone)]
struct Problem {
    slots: Vec<VarSlot>,
    scale: Vec<f64>,
    terms: Vec<Term>,
    blocks: Vec<Vec<usize>>,
    groups: Vec<f64>,
}

/// Rate, gradient and Hessian of one term over its (one or two) variables.
struct TermEval {
    rate: f64,
    vars: [usize; 2],
    len: usize,
    grad: [f64; 2],
    hess: [[f64; 2]; 2],
}

impl Problem {
    /// Builds the program; variables whose block budget is zero are pinned
    /// at zero and left out, along with any rate term that uses them.
    fn build(
        assignment: &Assignment,
        gains: &NormalizedGains,
        bs: &BsPowerPolicy,
        budgets: &Budgets,
        mode: SinrMode,
        unit_scale: bool,
    ) -> Self {
        let mut slots = Vec::new();
        let mut scale = Vec::new();
        let mut block_of_key: BTreeMap<BlockKey, usize> = BTreeMap::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut group_of_key: BTreeMap<GroupKey, usize> = BTreeMap::new();
        let mut groups = Vec::new();

        let (k1, _, _, _) = assignment.rho.dim();
        let mut add_group = |key: GroupKey, rmin: f64, groups: &mut Vec<f64>| -> usize {
            *group_of_key.entry(key).or_insert_with(|| {
                groups.push(rmin);
                groups.len() - 1
            })
        };
        // QoS groups exist for every owner, served or not.
        for k in 0..k1 {
            add_group(GroupKey::Far(k), budgets.rmin_coop, &mut groups);
        }
        for owner in &assignment.qos_owners {
            if let Owner::Near(m) = *owner {
                add_group(GroupKey::NearSlot1(m), budgets.rmin_nc, &mut groups);
                add_group(GroupKey::NearSlot2(m), budgets.rmin_nc, &mut groups);
            }
        }

        let mut add_var = |slot: VarSlot, key: BlockKey, budget: f64| -> Option<usize> {
            if budget <= 0.0 {
                return None;
            }
            let idx = slots.len();
            slots.push(slot);
            scale.push(if unit_scale { 1.0 } else { budget });
            let b = *block_of_key.entry(key).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[b].push(idx);
            Some(idx)
        };

        let mut pending = Vec::new();
        for (i, (&j, w)) in assignment.pair_of.iter().zip(&assignment.winners).enumerate() {
            match *w {
                CellWinner::Coop { k, m } => {
                    let x = add_var(VarSlot::CoopUser { k, m, i }, BlockKey::Coop(k, m), budgets.pmax_coop);
                    let y = add_var(VarSlot::CoopRelay { m, j }, BlockKey::Coop(k, m), budgets.pmax_coop);
                    let group = add_group(GroupKey::Far(k), budgets.rmin_coop, &mut groups);
                    if let (Some(x), Some(y)) = (x, y) {
                        let (kc, ce) = coop_denominator_constants(bs.p_b[j], gains.c_si[j], mode);
                        pending.push((Term::Coop {
                            x,
                            y,
                            ca: gains.a[[k, m, i]],
                            cb: gains.b2[[m, j]],
                            k: kc,
                            ce,
                            group,
                        },));
                    }
                }
                CellWinner::NonCoop { m } => {
                    let p1 = add_var(VarSlot::Nc1 { m, i }, BlockKey::Nc1(m), budgets.pmax_nc);
                    let p2 = add_var(VarSlot::Nc2 { m, j }, BlockKey::Nc2(m), budgets.pmax_nc);
                    let g1 = add_group(GroupKey::NearSlot1(m), budgets.rmin_nc, &mut groups);
                    let g2 = add_group(GroupKey::NearSlot2(m), budgets.rmin_nc, &mut groups);
                    if let Some(p) = p1 {
                        let c = gains.b1[[m, i]] / (1.0 + bs.p_b[i] * gains.c_si[i]);
                        pending.push((Term::Nc { p, c, group: g1 },));
                    }
                    if let Some(p) = p2 {
                        let c = gains.b2[[m, j]] / (1.0 + bs.p_b[j] * gains.c_si[j]);
                        pending.push((Term::Nc { p, c, group: g2 },));
                    }
                }
            }
        }
        let terms = pending
            .into_iter()
            .map(|(t,)| match t {
                Term::Coop { x, y, ca, cb, k, ce, group } => Term::Coop {
                    x,
                    y,
                    ca: ca * scale[x],
                    cb: cb * scale[y],
                    k,
                    ce,
                    group,
                },
                Term::Nc { p, c, group } => Term::Nc { p, c: c * scale[p], group },
            })
            .collect();
        Self {
            slots,
            scale,
            terms,
            blocks,
            groups,
        }
    }

    fn n_vars(&self) -> usize {
        self.slots.len()
    }

    fn term_group(t: &Term) -> usize {
        match *t {
            Term::Coop { group, .. } | Term::Nc { group, .. } => group,
        }
    }

    fn eval_term(t: &Term, u: &[f64]) -> TermEval {
        let inv = 1.0 / (2.0 * LN_2);
        match *t {
            Term::Coop { x, y, ca, cb, k, ce, .. } => {
                let e = coop_sinr_eval(ca * u[x], cb * u[y], k, ce);
                let f = 1.0 + e.value;
                let g = [e.grad[0] * ca, e.grad[1] * cb];
                let h = [
                    [e.hess[0][0] * ca * ca, e.hess[0][1] * ca * cb],
                    [e.hess[1][0] * ca * cb, e.hess[1][1] * cb * cb],
                ];
                let mut hess = [[0.0; 2]; 2];
                for r in 0..2 {
                    for c in 0..2 {
                        hess[r][c] = inv * (h[r][c] / f - g[r] * g[c] / (f * f));
                    }
                }
                TermEval {
                    rate: inv * e.value.ln_1p(),
                    vars: [x, y],
                    len: 2,
                    grad: [inv * g[0] / f, inv * g[1] / f],
                    hess,
                }
            }
            Term::Nc { p, c, .. } => {
                let f = 1.0 + c * u[p];
                TermEval {
                    rate: inv * (c * u[p]).ln_1p(),
                    vars: [p, p],
                    len: 1,
                    grad: [inv * c / f, 0.0],
                    hess: [[-inv * c * c / (f * f), 0.0], [0.0, 0.0]],
                }
            }
        }
    }

    fn objective(&self, u: &[f64]) -> f64 {
        self.terms.iter().map(|t| Self::eval_term(t, u).rate).sum()
    }

    fn group_rates(&self, u: &[f64]) -> Vec<f64> {
        let mut rates = vec![0.0; self.groups.len()];
        for t in &self.terms {
            rates[Self::term_group(t)] += Self::eval_term(t, u).rate;
        }
        rates
    }

    fn block_slack(&self, b: usize, u: &[f64]) -> f64 {
        1.0 - self.blocks[b].iter().map(|&v| u[v]).sum::<f64>()
    }

    fn n_constraints(&self, with_qos: bool) -> usize {
        self.n_vars() + self.blocks.len() + if with_qos { self.groups.len() } else { 0 }
    }

    /// Barrier objective; `-inf` outside the strict interior.
    fn barrier_value(&self, u: &[f64], mu: f64, with_qos: bool) -> f64 {
        let mut acc = 0.0;
        for &x in u {
            if !(x > 0.0) {
                return f64::NEG_INFINITY;
            }
            acc += x.ln();
        }
        for b in 0..self.blocks.len() {
            let s = self.block_slack(b, u);
            if !(s > 0.0) {
                return f64::NEG_INFINITY;
            }
            acc += s.ln();
        }
        let mut f = 0.0;
        let mut rates = vec![0.0; self.groups.len()];
        for t in &self.terms {
            let r = Self::eval_term(t, u).rate;
            f += r;
            rates[Self::term_group(t)] += r;
        }
        if with_qos {
            for (q, &rmin) in self.groups.iter().enumerate() {
                let s = rates[q] - rmin;
                if !(s > 0.0) {
                    return f64::NEG_INFINITY;
                }
                acc += s.ln();
            }
        }
        f + mu * acc
    }

    /// Gradient and Hessian of the barrier objective.
    fn barrier_derivatives(&self, u: &[f64], mu: f64, with_qos: bool) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n_vars();
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        let ng = self.groups.len();
        let mut group_rate = vec![0.0; ng];
        let mut group_grad = vec![DVector::<f64>::zeros(n); if with_qos { ng } else { 0 }];
        let mut group_hess = vec![DMatrix::<f64>::zeros(n, n); if with_qos { ng } else { 0 }];

        for t in &self.terms {
            let e = Self::eval_term(t, u);
            let q = Self::term_group(t);
            group_rate[q] += e.rate;
            for a in 0..e.len {
                g[e.vars[a]] += e.grad[a];
                for b in 0..e.len {
                    h[(e.vars[a], e.vars[b])] += e.hess[a][b];
                }
                if with_qos {
                    group_grad[q][e.vars[a]] += e.grad[a];
                    for b in 0..e.len {
                        group_hess[q][(e.vars[a], e.vars[b])] += e.hess[a][b];
                    }
                }
            }
        }
        for v in 0..n {
            g[v] += mu / u[v];
            h[(v, v)] -= mu / (u[v] * u[v]);
        }
        for (b, vars) in self.blocks.iter().enumerate() {
            let s = self.block_slack(b, u);
            for &v in vars {
                g[v] -= mu / s;
                for &w in vars {
                    h[(v, w)] -= mu / (s * s);
                }
            }
        }
        if with_qos {
            for q in 0..ng {
                let s = group_rate[q] - self.groups[q];
                g += &group_grad[q] * (mu / s);
                h += &group_hess[q] * (mu / s);
                h -= (&group_grad[q] * group_grad[q].transpose()) * (mu / (s * s));
            }
        }
        (g, h)
    }

    /// Largest step along `d` keeping the linear constraints strictly satisfied.
    fn max_linear_step(&self, u: &[f64], d: &DVector<f64>) -> f64 {
        let mut t = f64::INFINITY;
        for v in 0..u.len() {
            if d[v] < 0.0 {
                t = t.min(-u[v] / d[v]);
            }
        }
        for (b, vars) in self.blocks.iter().enumerate() {
            let rate: f64 = vars.iter().map(|&v| d[v]).sum();
            if rate > 0.0 {
                t = t.min(self.block_slack(b, u) / rate);
            }
        }
        t
    }

    /// Maximizes the barrier objective for fixed `mu` from a strictly
    /// feasible `u`. Returns the number of iterations.
    fn center(&self, u: &mut [f64], mu: f64, with_qos: bool, settings: &SolverSettings) -> usize {
        let n = u.len();
        let mut iters = 0;
        let mut phi = self.barrier_value(u, mu, with_qos);
        let mut last_slope = f64::INFINITY;
        while iters < settings.max_inner {
            iters += 1;
            let (g, h) = self.barrier_derivatives(u, mu, with_qos);
            if g.amax() <= 1e-13 {
                break;
            }
            let neg_h = -h;
            let (mut d, mut newton) = match neg_h.cholesky() {
                Some(chol) => (chol.solve(&g), true),
                None => (g.clone(), false),
            };
            let mut slope = g.dot(&d);
            if !(slope > 0.0) || d.iter().any(|x| !x.is_finite()) {
                d = g.clone();
                slope = g.dot(&d);
                newton = false;
            }
            // squared Newton decrement
            if slope <= 1e-20 {
                break;
            }
            let mut t = (0.99 * self.max_linear_step(u, &d)).min(1.0);
            let mut trial = vec![0.0; n];
            // Close to the center, barrier values differ by less than their
            // rounding error, so a full Newton step is taken unchecked while
            // the decrement keeps shrinking.
            let pure = newton && slope < 1e-8;
            if pure && slope >= last_slope {
                break;
            }
            last_slope = slope;
            let accepted = loop {
                for v in 0..n {
                    trial[v] = u[v] + t * d[v];
                }
                let phi_t = self.barrier_value(&trial, mu, with_qos);
                if phi_t.is_finite() && (pure || phi_t >= phi + settings.armijo_slope * t * slope) {
                    break Some(phi_t);
                }
                t *= settings.backtrack;
                if t < 1e-20 {
                    break None;
                }
            };
            match accepted {
                Some(phi_t) => {
                    u.copy_from_slice(&trial);
                    phi = phi_t;
                }
                None => break,
            }
        }
        iters
    }

    /// Barrier path from `u`. Returns (iterations, final mu).
    fn barrier_path(&self, u: &mut [f64], with_qos: bool, settings: &SolverSettings) -> (usize, f64) {
        let m = self.n_constraints(with_qos) as f64;
        let mut mu = settings.mu_initial;
        let mut iters = 0;
        for _ in 0..settings.max_outer {
            iters += self.center(u, mu, with_qos, settings);
            if m * mu < settings.gap_tolerance {
                break;
            }
            mu /= settings.mu_factor;
        }
        (iters, mu)
    }

    /// Projected KKT residual at `u_final`. Budget and QoS multipliers are
    /// the barrier estimates at the central point `u_center`; each
    /// non-negativity multiplier is fitted as `max(0, -r_v)` and then only
    /// enters through complementarity.
    fn kkt_residual(&self, u_center: &[f64], u_final: &[f64], mu: f64, with_qos: bool) -> f64 {
        let n = self.n_vars();
        let mut r = vec![0.0; n];
        let mut worst: f64 = 0.0;
        let center_rates = self.group_rates(u_center);
        let final_rates = self.group_rates(u_final);
        let lambda_q: Vec<f64> = if with_qos {
            self.groups
                .iter()
                .zip(&center_rates)
                .map(|(rmin, rate)| mu / (rate - rmin))
                .collect()
        } else {
            vec![0.0; self.groups.len()]
        };
        for t in &self.terms {
            let e = Self::eval_term(t, u_final);
            let q = Self::term_group(t);
            for a in 0..e.len {
                r[e.vars[a]] += e.grad[a] * (1.0 + lambda_q[q]);
            }
        }
        for (b, vars) in self.blocks.iter().enumerate() {
            let lambda = mu / self.block_slack(b, u_center);
            for &v in vars {
                r[v] -= lambda;
            }
            worst = worst.max(lambda * self.block_slack(b, u_final).abs());
        }
        if with_qos {
            for (q, rmin) in self.groups.iter().enumerate() {
                worst = worst.max(lambda_q[q] * (final_rates[q] - rmin).abs());
            }
        }
        for v in 0..n {
            worst = worst.max(if r[v] < 0.0 { -r[v] * u_final[v] } else { r[v] });
        }
        worst
    }

    fn interior_start(&self, shrink: f64) -> Vec<f64> {
        let mut u = vec![0.0; self.n_vars()];
        for vars in &self.blocks {
            for &v in vars {
                u[v] = shrink / vars.len() as f64;
            }
        }
        u
    }

    fn to_profile(&self, u: &[f64], dims: (usize, usize, usize)) -> PowerProfile {
        let mut out = PowerProfile::zeros(dims.0, dims.1, dims.2);
        for (v, &slot) in self.slots.iter().enumerate() {
            out.set(slot, u[v] * self.scale[v]);
        }
        out
    }
}

/// Sum-rate of the assignment at `powers` and its gradient with respect to
/// each entry of [`power_variables`], in bit/s/Hz per watt.
pub fn objective_and_gradient(
    powers: &PowerProfile,
    assignment: &Assignment,
    gains: &NormalizedGains,
    bs: &BsPowerPolicy,
    mode: SinrMode,
) -> Result<(f64, Vec<f64>)> {
    let unbounded = Budgets {
        pmax_coop: 1.0,
        pmax_nc: 1.0,
        rmin_coop: 0.0,
        rmin_nc: 0.0,
    };
    check_shapes(assignment, gains, bs)?;
    let problem = Problem::build(assignment, gains, bs, &unbounded, mode, true);
    let u: Vec<f64> = problem.slots.iter().map(|&s| powers.get(s)).collect();
    let mut grad = vec![0.0; u.len()];
    let mut value = 0.0;
    for t in &problem.terms {
        let e = Problem::eval_term(t, &u);
        value += e.rate;
        for a in 0..e.len {
            grad[e.vars[a]] += e.grad[a];
        }
    }
    Ok((value, grad))
}

fn check_shapes(assignment: &Assignment, gains: &NormalizedGains, bs: &BsPowerPolicy) -> Result<()> {
    let (k1, k2, n, _) = assignment.rho.dim();
    if gains.a.dim() != (k1, k2, n) || bs.p_b.len() != n {
        return Err(Error::Dimension(format!(
            "assignment is ({k1}, {k2}, {n}), gains are {:?}, BS policy has {} subcarriers",
            gains.a.dim(),
            bs.p_b.len()
        )));
    }
    Ok(())
}

/// Splits each budget evenly over its active variables: a relayed link's
/// budget over both hops of all its pairs, a direct user's per-slot budget
/// over its subcarriers in that slot.
pub fn equal_power_baseline(assignment: &Assignment, budgets: &Budgets) -> PowerProfile {
    let (k1, k2, n, _) = assignment.rho.dim();
    let mut counts: BTreeMap<BlockKey, usize> = BTreeMap::new();
    let slots = power_variables(assignment);
    let key_of = |slot: VarSlot, w: CellWinner| match (slot, w) {
        (VarSlot::CoopUser { .. } | VarSlot::CoopRelay { .. }, CellWinner::Coop { k, m }) => BlockKey::Coop(k, m),
        (VarSlot::Nc1 { m, .. }, _) => BlockKey::Nc1(m),
        (VarSlot::Nc2 { m, .. }, _) => BlockKey::Nc2(m),
        _ => unreachable!("slot and winner disagree"),
    };
    let keyed: Vec<(VarSlot, BlockKey)> = slots
        .iter()
        .enumerate()
        .map(|(idx, &s)| (s, key_of(s, assignment.winners[idx / 2])))
        .collect();
    for (_, key) in &keyed {
        *counts.entry(*key).or_default() += 1;
    }
    let mut out = PowerProfile::zeros(k1, k2, n);
    for (slot, key) in keyed {
        let budget = match key {
            BlockKey::Coop(..) => budgets.pmax_coop,
            _ => budgets.pmax_nc,
        };
        out.set(slot, budget / counts[&key] as f64);
    }
    out
}

/// Maximizes the sum-rate over the powers for a fixed assignment.
pub fn solve(
    assignment: &Assignment,
    gains: &NormalizedGains,
    bs: &BsPowerPolicy,
    budgets: &Budgets,
    mode: SinrMode,
) -> Result<(PowerProfile, SolverReport)> {
    solve_with(assignment, gains, bs, budgets, mode, &SolverSettings::default())
}

pub fn solve_with(
    assignment: &Assignment,
    gains: &NormalizedGains,
    bs: &BsPowerPolicy,
    budgets: &Budgets,
    mode: SinrMode,
    settings: &SolverSettings,
) -> Result<(PowerProfile, SolverReport)> {
    budgets.validate()?;
    check_shapes(assignment, gains, bs)?;
    assignment.check_constraints()?;
    let has_far = assignment.rho.dim().0 > 0;
    let has_near = assignment.qos_owners.iter().any(|o| matches!(o, Owner::Near(_)));
    if budgets.pmax_coop <= 0.0 && budgets.rmin_coop > 0.0 && has_far {
        return Err(Error::Infeasible(format!(
            "far users need {} bit/s/Hz with a zero power budget",
            budgets.rmin_coop
        )));
    }
    if budgets.pmax_nc <= 0.0 && budgets.rmin_nc > 0.0 && has_near {
        return Err(Error::Infeasible(format!(
            "near users need {} bit/s/Hz with a zero power budget",
            budgets.rmin_nc
        )));
    }

    let (k1, k2, n, _) = assignment.rho.dim();
    let problem = Problem::build(assignment, gains, bs, budgets, mode, false);
    let qos_active = problem.groups.iter().any(|&r| r > 0.0);

    if problem.n_vars() == 0 {
        let rates = problem.group_rates(&[]);
        let qos_relaxed = problem.groups.iter().zip(&rates).any(|(rmin, r)| r < rmin);
        return Ok((
            PowerProfile::zeros(k1, k2, n),
            SolverReport {
                objective: 0.0,
                iterations: 0,
                kkt_residual: 0.0,
                duality_gap: 0.0,
                feasible: true,
                qos_relaxed,
            },
        ));
    }

    // Budgets only; since rates are separable per QoS group and each group's
    // budget is its own, this also gives every group its largest rate.
    let mut u = problem.interior_start(settings.interior_shrink);
    let (mut iterations, mut mu) = problem.barrier_path(&mut u, false, settings);
    let mut with_qos = false;
    let mut qos_relaxed = false;
    if qos_active {
        let rates = problem.group_rates(&u);
        if problem.groups.iter().zip(&rates).all(|(rmin, r)| r > rmin) {
            let (it, m) = problem.barrier_path(&mut u, true, settings);
            iterations += it;
            mu = m;
            with_qos = true;
        } else {
            qos_relaxed = true;
        }
    }

    // Rates are nondecreasing in every power, so filling each budget exactly
    // can only help; it also closes the barrier's slack on the budgets.
    let center = u.clone();
    for vars in &problem.blocks {
        let used: f64 = vars.iter().map(|&v| u[v]).sum();
        if used > 0.0 {
            for &v in vars {
                u[v] /= used;
            }
        }
    }
    let kkt_residual = problem.kkt_residual(&center, &u, mu, with_qos);
    let objective = problem.objective(&u);
    let profile = problem.to_profile(&u, (k1, k2, n));
    let feasible = check_feasibility(&profile, assignment, gains, bs, budgets, mode, !qos_relaxed)?;
    Ok((
        profile,
        SolverReport {
            objective,
            iterations,
            kkt_residual,
            duality_gap: problem.n_constraints(with_qos) as f64 * mu,
            feasible,
            qos_relaxed,
        },
    ))
}

/// Per-user rates in the given mode: far users first, then near users.
pub fn per_user_rates(
    powers: &PowerProfile,
    assignment: &Assignment,
    gains: &NormalizedGains,
    bs: &BsPowerPolicy,
    mode: SinrMode,
) -> Vec<f64> {
    let (k1, k2, _, _) = assignment.rho.dim();
    let mut out = vec![0.0; k1 + k2];
    let unbounded = Budgets {
        pmax_coop: 1.0,
        pmax_nc: 1.0,
        rmin_coop: 0.0,
        rmin_nc: 0.0,
    };
    let problem = Problem::build(assignment, gains, bs, &unbounded, mode, true);
    let u: Vec<f64> = problem.slots.iter().map(|&s| powers.get(s)).collect();
    for t in &problem.terms {
        let rate = Problem::eval_term(t, &u).rate;
        let user = match *t {
            Term::Coop { x, .. } => match problem.slots[x] {
                VarSlot::CoopUser { k, .. } => k,
                _ => unreachable!(),
            },
            Term::Nc { p, .. } => match problem.slots[p] {
                VarSlot::Nc1 { m, .. } | VarSlot::Nc2 { m, .. } => k1 + m,
                _ => unreachable!(),
            },
        };
        out[user] += rate;
    }
    out
}

/// Budget and non-negativity within 1e-8 relative; minimum rates (when
/// `check_qos`) within 1e-6 absolute, in the solver's SINR mode.
pub fn check_feasibility(
    powers: &PowerProfile,
    assignment: &Assignment,
    gains: &NormalizedGains,
    bs: &BsPowerPolicy,
    budgets: &Budgets,
    mode: SinrMode,
    check_qos: bool,
) -> Result<bool> {
    check_shapes(assignment, gains, bs)?;
    let slots = power_variables(assignment);
    if slots.iter().any(|&s| !(powers.get(s) >= 0.0)) {
        return Ok(false);
    }
    let mut spent: BTreeMap<BlockKey, f64> = BTreeMap::new();
    for (idx, &s) in slots.iter().enumerate() {
        let key = match (s, assignment.winners[idx / 2]) {
            (VarSlot::Nc1 { m, .. }, _) => BlockKey::Nc1(m),
            (VarSlot::Nc2 { m, .. }, _) => BlockKey::Nc2(m),
            (_, CellWinner::Coop { k, m }) => BlockKey::Coop(k, m),
            _ => unreachable!(),
        };
        *spent.entry(key).or_default() += powers.get(s);
    }
    for (key, total) in spent {
        let budget = match key {
            BlockKey::Coop(..) => budgets.pmax_coop,
            _ => budgets.pmax_nc,
        };
        if total > budget * (1.0 + 1e-8) {
            return Ok(false);
        }
    }
    if check_qos {
        let (k1, _, _, _) = assignment.rho.dim();
        let problem = Problem::build(assignment, gains, bs, budgets, mode, true);
        let u: Vec<f64> = problem.slots.iter().map(|&s| powers.get(s)).collect();
        let rates = problem.group_rates(&u);
        let _ = k1;
        if problem.groups.iter().zip(&rates).any(|(rmin, r)| *r < rmin - 1e-6) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Hessian of `1 + xyab / (by + acx)` in `(x, y)`.
pub fn coop_hessian_closed_form(x: f64, y: f64, a: f64, b: f64, c: f64) -> Result<[[f64; 2]; 2]> {
    let d = b * y + a * c * x;
    if !(d > 0.0) {
        return Err(Error::InvalidConfig(format!("by + acx must be positive, got {d}")));
    }
    let sigma2 = d * d;
    let d3 = sigma2 * d;
    let sigma1 = a * b / d - a * b * b * y / sigma2 - a * a * b * c * x / sigma2 + 2.0 * a * a * b * b * c * x * y / d3;
    let h11 = 2.0 * a.powi(3) * b * c * c * x * y / d3 - 2.0 * a * a * b * c * y / sigma2;
    let h22 = 2.0 * a * b.powi(3) * x * y / d3 - 2.0 * a * b * b * x / sigma2;
    Ok([[h11, sigma1], [sigma1, h22]])
}

/// Eigenvalues of [`coop_hessian_closed_form`]: zero and a non-positive value.
pub fn coop_hessian_eigenvalues(x: f64, y: f64, a: f64, b: f64, c: f64) -> (f64, f64) {
    let num = 2.0 * c * a * a * b * b * x * x + 2.0 * c * a * a * b * b * y * y;
    let den = a.powi(3) * c.powi(3) * x.powi(3)
        + 3.0 * a * a * b * c * c * x * x * y
        + 3.0 * a * b * b * c * x * y * y
        + b.powi(3) * y.powi(3);
    (0.0, -num / den)
}

/// Second derivative of `log2(1 + bx / (1 + cz))` in `x`, and the eigenvalue
/// pair `{0, -b^2 / (ln 2 (bx + cz + 1)^2)}`.
pub fn nc_hessian_and_eigenvalues(x: f64, b: f64, c: f64, z: f64) -> (f64, [f64; 2]) {
    let k = c * z + 1.0;
    let hess = -(b * b) / (LN_2 * (b * x / k + 1.0).powi(2) * k * k);
    let eig = -(b * b) / (LN_2 * (b * x + c * z + 1.0).powi(2));
    (hess, [0.0, eig])
}

#[cfg(test)]
mod tests {
    use ndarray::{Array1, Array2, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::assignment::Assignment;
    use crate::link_budget::total_sum_rate;

    fn nc_only(n: usize, b1: f64, b2: f64) -> (Assignment, NormalizedGains, BsPowerPolicy) {
        let a = Assignment::from_winners(0, 1, (0..n).collect(), vec![CellWinner::NonCoop { m: 0 }; n]).unwrap();
        let g = NormalizedGains {
            a: Array3::zeros((0, 1, n)),
            b1: Array2::from_elem((1, n), b1),
            b2: Array2::from_elem((1, n), b2),
            c_si: Array1::zeros(n),
        };
        (a, g, BsPowerPolicy::uniform(0.0, n))
    }

    #[test]
    fn single_link_value_and_gradient() {
        let (a, g, bs) = nc_only(1, 1.0, 0.0);
        let mut p = PowerProfile::zeros(0, 1, 1);
        p.p_nc1[[0, 0]] = 1.0;
        let (value, grad) = objective_and_gradient(&p, &a, &g, &bs, SinrMode::Approximate).unwrap();
        assert!((value - 0.5).abs() < 1e-15);
        assert!((grad[0] - 1.0 / (2.0 * LN_2 * 2.0)).abs() < 1e-15);
        assert!((grad[0] - 0.3607).abs() < 1e-4);
    }

    #[test]
    fn zero_power_gradient() {
        // direct links have positive slope at zero power; a relayed link
        // needs both hops, so each hop alone has zero slope there
        let winners = vec![CellWinner::Coop { k: 0, m: 0 }, CellWinner::NonCoop { m: 1 }];
        let a = Assignment::from_winners(1, 2, vec![1, 0], winners).unwrap();
        let g = NormalizedGains {
            a: Array3::from_elem((1, 2, 2), 2.0),
            b1: Array2::from_elem((2, 2), 3.0),
            b2: Array2::from_elem((2, 2), 4.0),
            c_si: Array1::from_elem(2, 0.5),
        };
        let bs = BsPowerPolicy::uniform(1.0, 2);
        for mode in [SinrMode::Exact, SinrMode::Approximate] {
            let (value, grad) = objective_and_gradient(&PowerProfile::zeros(1, 2, 2), &a, &g, &bs, mode).unwrap();
            assert_eq!(value, 0.0);
            assert_eq!(&grad[..2], &[0.0, 0.0]);
            assert!(grad[2] > 0.0 && grad[3] > 0.0);
        }
    }

    #[test]
    fn closed_form_hessian_at_unit_point() {
        let h = coop_hessian_closed_form(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        assert!(det.abs() < 1e-15);
        let (z, l) = coop_hessian_eigenvalues(1.0, 1.0, 1.0, 1.0, 1.0);
        assert_eq!(z, 0.0);
        assert!((l + 0.5).abs() < 1e-15);
        assert_eq!(coop_hessian_eigenvalues(1.0, 2.0, 3.0, 4.0, 0.0).1, 0.0);
        assert!(coop_hessian_closed_form(0.0, 0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn nc_hessian_values() {
        let (h, eig) = nc_hessian_and_eigenvalues(1.0, 1.0, 0.0, 3.0);
        assert!((h + 1.0 / (4.0 * LN_2)).abs() < 1e-15);
        assert!((h + 0.3607).abs() < 1e-4);
        assert_eq!(eig[0], 0.0);
        assert_eq!(nc_hessian_and_eigenvalues(2.0, 0.0, 1.0, 1.0).0, 0.0);
    }

    #[test]
    fn approximate_rate_hessian_matches_closed_form_shape() {
        // the approximate SINR is u v / (v + ce u), i.e. the closed form with c = ce
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let (x, y, a, b) = (rng.random_range(0.1..5.0), rng.random_range(0.1..5.0), rng.random_range(0.1..5.0), rng.random_range(0.1..5.0));
            let ce = rng.random_range(1.0..3.0);
            let e = coop_sinr_eval(a * x, b * y, 0.0, ce);
            let h = coop_hessian_closed_form(x, y, a, b, ce).unwrap();
            let scaled = [[e.hess[0][0] * a * a, e.hess[0][1] * a * b], [e.hess[1][0] * a * b, e.hess[1][1] * b * b]];
            for r in 0..2 {
                for c in 0..2 {
                    assert!((scaled[r][c] - h[r][c]).abs() <= 1e-10 * h[r][c].abs().max(1e-12));
                }
            }
        }
    }

    #[test]
    fn single_direct_user_takes_full_budget() {
        let (a, g, bs) = nc_only(1, 5.0, 7.0);
        let budgets = Budgets { pmax_coop: 1.0, pmax_nc: 0.3, rmin_coop: 0.0, rmin_nc: 0.0 };
        let (p, report) = solve(&a, &g, &bs, &budgets, SinrMode::Approximate).unwrap();
        assert!((p.p_nc1[[0, 0]] - 0.3).abs() <= 1e-12);
        assert!((p.p_nc2[[0, 0]] - 0.3).abs() <= 1e-12);
        assert!(report.feasible && !report.qos_relaxed);
    }

    #[test]
    fn symmetric_subcarriers_split_evenly() {
        let (a, g, bs) = nc_only(2, 4.0, 4.0);
        let budgets = Budgets { pmax_coop: 1.0, pmax_nc: 1.0, rmin_coop: 0.0, rmin_nc: 0.1 };
        let (p, report) = solve(&a, &g, &bs, &budgets, SinrMode::Approximate).unwrap();
        // 1-D grid search over the slot-1 split
        let rate = |s: f64| 0.5 * ((1.0 + 4.0 * s).log2() + (1.0 + 4.0 * (1.0 - s)).log2());
        let best = (0..=10_000).map(|i| i as f64 / 10_000.0).max_by(|x, y| rate(*x).total_cmp(&rate(*y))).unwrap();
        assert!((best - 0.5).abs() < 1e-9);
        assert!((p.p_nc1[[0, 0]] - 0.5).abs() < 1e-6, "{:?}", p.p_nc1);
        assert!((p.p_nc1[[0, 1]] - 0.5).abs() < 1e-6);
        assert!(report.kkt_residual < 1e-5, "{report:?}");
    }

    #[test]
    fn water_filling_favors_the_stronger_subcarrier() {
        let (a, mut g, bs) = nc_only(2, 1.0, 1.0);
        g.b1[[0, 0]] = 10.0;
        let budgets = Budgets { pmax_coop: 1.0, pmax_nc: 1.0, rmin_coop: 0.0, rmin_nc: 0.0 };
        let (p, _) = solve(&a, &g, &bs, &budgets, SinrMode::Approximate).unwrap();
        // water level: p0 + 1/10 = p1 + 1 with p0 + p1 = 1 -> p0 = 0.95
        assert!((p.p_nc1[[0, 0]] - 0.95).abs() < 1e-5, "{:?}", p.p_nc1);
    }

    #[test]
    fn infeasible_qos_is_relaxed() {
        let (a, g, bs) = nc_only(1, 1.0, 1.0);
        let budgets = Budgets { pmax_coop: 1.0, pmax_nc: 1.0, rmin_coop: 0.0, rmin_nc: 5.0 };
        let (_, report) = solve(&a, &g, &bs, &budgets, SinrMode::Approximate).unwrap();
        assert!(report.qos_relaxed);
        assert!(report.feasible);
    }

    #[test]
    fn zero_budget_with_qos_is_an_error() {
        let (a, g, bs) = nc_only(1, 1.0, 1.0);
        let budgets = Budgets { pmax_coop: 0.0, pmax_nc: 0.0, rmin_coop: 0.1, rmin_nc: 0.1 };
        assert!(matches!(solve(&a, &g, &bs, &budgets, SinrMode::Approximate), Err(Error::Infeasible(_))));
        let budgets = Budgets { rmin_coop: 0.0, rmin_nc: 0.0, ..budgets };
        let (p, report) = solve(&a, &g, &bs, &budgets, SinrMode::Approximate).unwrap();
        assert_eq!(report.objective, 0.0);
        assert_eq!(p, PowerProfile::zeros(0, 1, 1));
    }

    #[test]
    fn baseline_splits_budgets() {
        let (a, _, _) = nc_only(4, 1.0, 1.0);
        let budgets = Budgets { pmax_coop: 2.0, pmax_nc: 1.0, rmin_coop: 0.0, rmin_nc: 0.0 };
        let p = equal_power_baseline(&a, &budgets);
        assert!(p.p_nc1.iter().all(|&x| x == 0.25));
        assert!(p.p_nc2.iter().all(|&x| x == 0.25));

        let coop = Assignment::from_winners(1, 1, vec![0, 1], vec![CellWinner::Coop { k: 0, m: 0 }; 2]).unwrap();
        let p = equal_power_baseline(&coop, &budgets);
        assert!(p.p_coop_user.iter().all(|&x| x == 0.5));
        assert!(p.p_coop_relay.iter().all(|&x| x == 0.5));

        let empty = Assignment::from_winners(0, 0, vec![], vec![]).unwrap();
        assert!(power_variables(&empty).is_empty());
        assert_eq!(equal_power_baseline(&empty, &budgets), PowerProfile::zeros(0, 0, 0));
    }

    #[test]
    fn objective_matches_total_sum_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let winners = vec![
            CellWinner::Coop { k: 0, m: 1 },
            CellWinner::NonCoop { m: 0 },
            CellWinner::Coop { k: 1, m: 2 },
        ];
        let a = Assignment::from_winners(2, 3, vec![2, 0, 1], winners).unwrap();
        let g = NormalizedGains {
            a: Array3::from_shape_simple_fn((2, 3, 3), || rng.random_range(0.1..50.0)),
            b1: Array2::from_shape_simple_fn((3, 3), || rng.random_range(0.1..50.0)),
            b2: Array2::from_shape_simple_fn((3, 3), || rng.random_range(0.1..50.0)),
            c_si: Array1::from_shape_simple_fn(3, || rng.random_range(0.0..2.0)),
        };
        let bs = BsPowerPolicy::uniform(1.5, 3);
        let budgets = Budgets { pmax_coop: 1.0, pmax_nc: 1.0, rmin_coop: 0.0, rmin_nc: 0.0 };
        let p = equal_power_baseline(&a, &budgets);
        for mode in [SinrMode::Exact, SinrMode::Approximate] {
            let (v, _) = objective_and_gradient(&p, &a, &g, &bs, mode).unwrap();
            let t = total_sum_rate(&a, &p, &g, &bs, mode).unwrap();
            assert!(((v - t) / t).abs() < 1e-12);
            let per_user: f64 = per_user_rates(&p, &a, &g, &bs, mode).iter().sum();
            assert!(((per_user - t) / t).abs() < 1e-12);
        }
    }
}
