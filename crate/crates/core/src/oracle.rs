//! Independent reference computations used to check the fast paths:
//! exhaustive permutation search, finite differences, a general symmetric
//! eigensolver and the Kolmogorov-Smirnov statistic.
//!
//! Nothing here is used by the simulation pipeline itself.

use nalgebra::{DMatrix, SymmetricEigen};

/// Two-sided KS statistic of `samples` against the continuous `cdf`.
/// Sorts `samples` in place.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let lo = f - i as f64 / n;
            let hi = (i + 1) as f64 / n - f;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance 0.01.
pub fn ks_critical_1pct(n: usize) -> f64 {
    (-(0.005f64).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Maximum of `sum_i value[i][perm[i]]` over all permutations, by enumeration.
/// Returns the best total and one maximizing permutation.
pub fn brute_force_max_assignment(value: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = value.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::NEG_INFINITY, perm.clone());
    // Heap's algorithm
    let mut c = vec![0usize; n];
    let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| value[i][j]).sum::<f64>();
    let t = total(&perm);
    if t > best.0 {
        best = (t, perm.clone());
    }
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let t = total(&perm);
            if t > best.0 {
                best = (t, perm.clone());
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Central-difference gradient with per-coordinate step `rel_step * max(|x_i|, floor)`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], rel_step: f64, floor: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel_step * x[i].abs().max(floor);
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central second differences of a two-variable function with step
/// `rel_step * |coordinate|`, refined by one Richardson step (error O(h^4)).
pub fn central_hessian_2d(f: impl Fn(f64, f64) -> f64, x: f64, y: f64, rel_step: f64) -> [[f64; 2]; 2] {
    let raw = |hx: f64, hy: f64| {
        let f0 = f(x, y);
        let fxx = (f(x + hx, y) - 2.0 * f0 + f(x - hx, y)) / (hx * hx);
        let fyy = (f(x, y + hy) - 2.0 * f0 + f(x, y - hy)) / (hy * hy);
        let fxy = (f(x + hx, y + hy) - f(x + hx, y - hy) - f(x - hx, y + hy) + f(x - hx, y - hy))
            / (4.0 * hx * hy);
        [fxx, fxy, fyy]
    };
    let hx = rel_step * x.abs().max(1e-12);
    let hy = rel_step * y.abs().max(1e-12);
    let coarse = raw(hx, hy);
    let fine = raw(hx / 2.0, hy / 2.0);
    let r: Vec<f64> = (0..3).map(|i| (4.0 * fine[i] - coarse[i]) / 3.0).collect();
    [[r[0], r[1]], [r[1], r[2]]]
}

/// Central second difference of a one-variable function, refined by one
/// Richardson step.
pub fn central_second_derivative(f: impl Fn(f64) -> f64, x: f64, rel_step: f64) -> f64 {
    let raw = |h: f64| (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    let h = rel_step * x.abs().max(1e-12);
    (4.0 * raw(h / 2.0) - raw(h)) / 3.0
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_two_by_two() {
        let (best, perm) = brute_force_max_assignment(&[vec![1.0, 2.0], vec![3.0, 1.0]]);
        assert_eq!(best, 5.0);
        assert_eq!(perm, vec![1, 0]);
    }

    #[test]
    fn brute_force_visits_all_permutations() {
        // value[i][j] = 10^(n*i + j) style weights make every permutation total distinct;
        // the best must pick the max in lexicographic-by-row sense.
        let v: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if (i + j) % 4 == 3 { 1.0 } else { 0.0 }).collect())
            .collect();
        let (best, perm) = brute_force_max_assignment(&v);
        assert_eq!(best, 4.0);
        assert_eq!(perm, vec![3, 2, 1, 0]);
    }

    #[test]
    fn ks_of_perfect_grid_is_small() {
        let mut xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!((ks_statistic(&mut xs, |x| x) - 0.0005).abs() < 1e-12);
        assert!((ks_critical_1pct(1) - 1.6276).abs() < 1e-3);
    }

    #[test]
    fn finite_difference_helpers() {
        let g = central_gradient(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, 1.0], 1e-6, 1.0);
        assert!((g[0] - 4.0).abs() < 1e-6 && (g[1] - 3.0).abs() < 1e-6);
        let h = central_hessian_2d(|x, y| x * x * y, 1.0, 2.0, 1e-2);
        assert!((h[0][0] - 4.0).abs() < 1e-4 && (h[0][1] - 2.0).abs() < 1e-4 && h[1][1].abs() < 1e-4);
        let ev = symmetric_eigenvalues(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }
}
