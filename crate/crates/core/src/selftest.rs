//! Oracle suites runnable from a release binary: Munkres against brute force,
//! analytic gradients against central differences, closed-form Hessians
//! against numerical ones, and sampling distributions against their laws.

use std::f64::consts::TAU;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assignment::{build_pair_matrix, finalize_assignment, munkres, Assignment};
use crate::channel::{draw_complex_gaussian, make_realization, SiConfig};
use crate::error::Result;
use crate::geometry::{sample_relay_position, sample_user_position, CellGeometry, Topology};
use crate::link_budget::{normalized_gains, BsPowerPolicy, NormalizedGains, SinrMode};
use crate::oracle::{
    brute_force_max_assignment, central_gradient, central_hessian_2d, central_second_derivative, ks_critical_1pct,
    ks_statistic, symmetric_eigenvalues,
};
use crate::power_allocation::{
    coop_hessian_closed_form, coop_hessian_eigenvalues, nc_hessian_and_eigenvalues, objective_and_gradient,
    power_variables, PowerProfile,
};
use crate::relay_selection::{select_all, ProvisionalPowers, SelectionScheme};
use crate::units::{dbm_to_watts, noise_power_watts};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

/// Signature of the analytic objective gradient under test.
pub type GradientFn =
    fn(&PowerProfile, &Assignment, &NormalizedGains, &BsPowerPolicy, SinrMode) -> Result<(f64, Vec<f64>)>;

/// Every suite at full size with the production gradient.
pub fn run_all() -> Vec<SuiteResult> {
    run_all_with(objective_and_gradient)
}

pub fn run_all_with(gradient: GradientFn) -> Vec<SuiteResult> {
    vec![
        munkres_suite(1000, 6, 0x6d75),
        gradient_suite(100, 0x6772, gradient),
        hessian_suite(10_000, 0x6865),
        distribution_suite(1_000_000, 0x6473),
    ]
}

/// Munkres total equals the exhaustive maximum exactly on random `n x n`
/// matrices.
pub fn munkres_suite(trials: usize, n: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..trials {
        let v = Array2::from_shape_simple_fn((n, n), || rng.random_range(0.0..100.0));
        let rows: Vec<Vec<f64>> = v.outer_iter().map(|r| r.to_vec()).collect();
        let total = match munkres(&v) {
            Ok(p) => p.iter().enumerate().map(|(i, &j)| v[[i, j]]).sum::<f64>(),
            Err(_) => f64::NAN,
        };
        if total != brute_force_max_assignment(&rows).0 {
            mismatches += 1;
        }
    }
    SuiteResult::new(
        "munkres-brute-force",
        mismatches == 0,
        format!("{mismatches} of {trials} {n}x{n} instances differ from brute force"),
    )
}

/// A realistic instance from the pipeline: 4 + 4 users, 8 subcarriers,
/// default powers, SI on or off, with random positive powers.
pub fn random_instance(rng: &mut ChaCha8Rng, si: bool) -> Result<(Assignment, NormalizedGains, BsPowerPolicy, PowerProfile)> {
    let (k1, k2, n) = (4, 4, 8);
    let geometry = CellGeometry::default();
    let topology = Topology::sample(rng, &geometry, k1, k2);
    let si = if si { SiConfig::default() } else { SiConfig::OFF };
    let channel = make_realization(&topology, n, &si, noise_power_watts(-174.0, 20e3), rng)?;
    let gains = normalized_gains(&channel, &topology)?;
    let bs = BsPowerPolicy::uniform(dbm_to_watts(40.0), n);
    let provisional = ProvisionalPowers::equal_split(dbm_to_watts(20.0), n);
    let selection = select_all(SelectionScheme::BestSinrWithSi, &topology, &gains, &provisional, &bs, true)?;
    let matrix = build_pair_matrix(&selection, &gains, &provisional, &bs, SinrMode::Exact)?;
    let pair_of = munkres(&matrix.value)?;
    let assignment = finalize_assignment(&matrix, &pair_of, k1, k2)?;
    let mut powers = PowerProfile::zeros(k1, k2, n);
    for slot in power_variables(&assignment) {
        powers.set(slot, rng.random_range(0.001..0.1));
    }
    Ok((assignment, gains, bs, powers))
}

/// Largest normwise relative error between the analytic gradient and
/// central differences (step `1e-6` times each power), over both SINR modes.
pub fn gradient_suite(instances: usize, seed: u64, gradient: GradientFn) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut errors = 0;
    for t in 0..instances {
        let (assignment, gains, bs, powers) = match random_instance(&mut rng, t % 2 == 0) {
            Ok(x) => x,
            Err(_) => {
                errors += 1;
                continue;
            }
        };
        let slots = power_variables(&assignment);
        let x0: Vec<f64> = slots.iter().map(|&s| powers.get(s)).collect();
        for mode in [SinrMode::Approximate, SinrMode::Exact] {
            let Ok((_, g)) = gradient(&powers, &assignment, &gains, &bs, mode) else {
                errors += 1;
                continue;
            };
            let f = |x: &[f64]| {
                let mut p = powers.clone();
                for (&s, &v) in slots.iter().zip(x) {
                    p.set(s, v);
                }
                objective_and_gradient(&p, &assignment, &gains, &bs, mode).map_or(f64::NAN, |r| r.0)
            };
            let fd = central_gradient(f, &x0, 1e-6, 0.0);
            let scale = g.iter().chain(&fd).fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = g.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let rel = if scale > 0.0 { diff / scale } else { diff };
            worst = if rel.is_nan() { f64::INFINITY } else { worst.max(rel) };
        }
    }
    SuiteResult::new(
        "gradient-check",
        errors == 0 && worst <= 1e-5,
        format!("max relative error {worst:.3e} over {instances} instances, {errors} errors"),
    )
}

/// Closed-form Hessians against numerical second differences and an
/// eigensolver, plus the sign certificates, at random positive points.
pub fn hessian_suite(points: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fd_err: f64 = 0.0;
    let mut eig_err: f64 = 0.0;
    let mut max_eig = f64::NEG_INFINITY;
    let mut nc_err: f64 = 0.0;
    let mut nc_max = f64::NEG_INFINITY;
    let mut domain_errors = 0;
    for _ in 0..points {
        let mut draw = || rng.random_range(0.1..10.0);
        let (x, y, a, b, c) = (draw(), draw(), draw(), draw(), draw());
        let Ok(h) = coop_hessian_closed_form(x, y, a, b, c) else {
            domain_errors += 1;
            continue;
        };
        let f = |x: f64, y: f64| 1.0 + x * y * a * b / (b * y + a * c * x);
        let num = central_hessian_2d(f, x, y, 1e-2);
        let scale = h.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = (0..2)
            .flat_map(|r| (0..2).map(move |s| (r, s)))
            .fold(0.0f64, |m, (r, s)| m.max((h[r][s] - num[r][s]).abs()));
        fd_err = fd_err.max(diff / scale);

        let eig = symmetric_eigenvalues(&[h[0].to_vec(), h[1].to_vec()]);
        let (zero, neg) = coop_hessian_eigenvalues(x, y, a, b, c);
        let e = (eig[0] - neg).abs().max((eig[1] - zero).abs()) / neg.abs().max(1.0);
        eig_err = eig_err.max(e);
        max_eig = max_eig.max(eig[1]).max(neg);

        let z = draw();
        let (hess, pair) = nc_hessian_and_eigenvalues(x, b, c, z);
        let g = |x: f64| (b * x / (1.0 + c * z)).ln_1p() / std::f64::consts::LN_2;
        let num = central_second_derivative(g, x, 1e-2);
        nc_err = nc_err.max((hess - num).abs() / hess.abs()).max((hess - pair[1]).abs() / hess.abs());
        nc_max = nc_max.max(hess).max(pair[0]).max(pair[1]);
    }
    let passed = domain_errors == 0 && fd_err <= 1e-4 && eig_err <= 1e-6 && max_eig <= 1e-9 && nc_err <= 1e-4 && nc_max <= 1e-9;
    SuiteResult::new(
        "hessian-certificates",
        passed,
        format!(
            "cooperative: fd {fd_err:.2e}, eigen {eig_err:.2e}, max eigenvalue {max_eig:.2e}; \
             direct: rel error {nc_err:.2e}, max eigenvalue {nc_max:.2e}; {points} points"
        ),
    )
}

/// KS tests at the 1% level for positions and fading power, plus the
/// fading power mean within 1%.
pub fn distribution_suite(samples: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geometry = CellGeometry::default();
    let crit = ks_critical_1pct(samples);
    let (r1, r2) = (geometry.r1, geometry.r2);

    let mut relay_r = Vec::with_capacity(samples);
    let mut relay_t = Vec::with_capacity(samples);
    for _ in 0..samples {
        let p = sample_relay_position(&mut rng, &geometry);
        relay_r.push(p.r);
        relay_t.push(p.theta);
    }
    let mut user_r: Vec<f64> = (0..samples).map(|_| sample_user_position(&mut rng, &geometry).r).collect();
    let mut power: Vec<f64> = (0..samples).map(|_| draw_complex_gaussian(&mut rng).norm_sqr()).collect();
    let mean_power = power.iter().sum::<f64>() / samples as f64;

    let stats = [
        ("relay radius", ks_statistic(&mut relay_r, |r| (r / r1).clamp(0.0, 1.0))),
        ("relay angle", ks_statistic(&mut relay_t, |t| (t / TAU).clamp(0.0, 1.0))),
        ("user radius", ks_statistic(&mut user_r, |r| ((r - r1) / (r2 - r1)).clamp(0.0, 1.0))),
        ("fading power", ks_statistic(&mut power, |x| 1.0 - (-x.max(0.0)).exp())),
    ];
    let ks_ok = stats.iter().all(|(_, d)| *d < crit);
    let mean_ok = (mean_power - 1.0).abs() < 0.01;
    let detail = stats
        .iter()
        .map(|(name, d)| format!("{name} D={d:.2e}"))
        .chain([format!("critical {crit:.2e}"), format!("E|h|^2 = {mean_power:.4}")])
        .collect::<Vec<_>>()
        .join(", ");
    SuiteResult::new("distributions", ks_ok && mean_ok, detail)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flipped(
        p: &PowerProfile,
        a: &Assignment,
        g: &NormalizedGains,
        bs: &BsPowerPolicy,
        mode: SinrMode,
    ) -> Result<(f64, Vec<f64>)> {
        let (v, mut grad) = objective_and_gradient(p, a, g, bs, mode)?;
        grad.iter_mut().for_each(|x| *x = -*x);
        Ok((v, grad))
    }

    #[test]
    fn small_suites_pass() {
        assert!(munkres_suite(100, 5, 1).passed);
        let r = gradient_suite(10, 2, objective_and_gradient);
        assert!(r.passed, "{}", r.detail);
        let r = hessian_suite(500, 3);
        assert!(r.passed, "{}", r.detail);
        let r = distribution_suite(20_000, 4);
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn sign_error_in_gradient_is_caught() {
        let r = gradient_suite(10, 2, flipped);
        assert!(!r.passed, "{}", r.detail);
    }
}
