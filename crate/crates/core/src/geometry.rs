//! Node placement and large-scale path loss.
//!
//! The base station sits at the origin. Near users (candidate relays) are
//! placed with radius uniform on `[0, R1)` and far users with radius uniform
//! on `[R1, R2)`; angles are uniform on `[0, 2pi)`. Placement is uniform in
//! radius, not in area.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positions closer than this to the base station or to another node are
/// redrawn when sampling a [`Topology`]; below one meter the singular model
/// `d^-alpha` turns into a gain.
pub const MIN_SEPARATION_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub r: f64,
    pub theta: f64,
}

impl PolarPoint {
    pub const ORIGIN: PolarPoint = PolarPoint { r: 0.0, theta: 0.0 };

    /// Builds a point, wrapping `theta` into `[0, 2pi)`.
    pub fn new(r: f64, theta: f64) -> Self {
        assert!(r >= 0.0, "radius must be non-negative, got {r}");
        let mut theta = theta.rem_euclid(TAU);
        if theta >= TAU {
            theta = 0.0;
        }
        Self { r, theta }
    }

    fn squared_distance(&self, other: &PolarPoint) -> f64 {
        let sq = self.r * self.r + other.r * other.r
            - 2.0 * self.r * other.r * (self.theta - other.theta).cos();
        sq.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellGeometry {
    /// Inner radius in meters; near users live inside it.
    pub r1: f64,
    /// Outer radius in meters.
    pub r2: f64,
    /// Path-loss exponent.
    pub alpha: f64,
}

impl Default for CellGeometry {
    // Not given for the reference scenario; these are simulator defaults.
    fn default() -> Self {
        Self {
            r1: 100.0,
            r2: 300.0,
            alpha: 3.0,
        }
    }
}

impl CellGeometry {
    pub fn new(r1: f64, r2: f64, alpha: f64) -> Result<Self> {
        let g = Self { r1, r2, alpha };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r1.is_finite() && self.r1 > 0.0) {
            return Err(Error::InvalidGeometry(format!("r1 must be > 0, got {}", self.r1)));
        }
        if !(self.r2.is_finite() && self.r2 > self.r1) {
            return Err(Error::InvalidGeometry(format!(
                "r2 must exceed r1 ({}), got {}",
                self.r1, self.r2
            )));
        }
        if !(2.0..=6.0).contains(&self.alpha) {
            return Err(Error::InvalidGeometry(format!(
                "alpha must lie in [2, 6], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

fn sample_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.0..TAU)
}

pub fn sample_relay_position<R: Rng + ?Sized>(rng: &mut R, geometry: &CellGeometry) -> PolarPoint {
    let r = rng.random_range(0.0..geometry.r1);
    PolarPoint::new(r, sample_angle(rng))
}

pub fn sample_user_position<R: Rng + ?Sized>(rng: &mut R, geometry: &CellGeometry) -> PolarPoint {
    let r = rng.random_range(geometry.r1..geometry.r2);
    PolarPoint::new(r, sample_angle(rng))
}

pub fn euclidean_distance(p1: &PolarPoint, p2: &PolarPoint) -> f64 {
    p1.squared_distance(p2).sqrt()
}

/// `r^-alpha` for a node at `p` talking to the base station.
pub fn path_loss_to_bs(p: &PolarPoint, alpha: f64) -> Result<f64> {
    if p.r == 0.0 {
        return Err(Error::SingularPathLoss);
    }
    Ok((p.r * p.r).powf(-alpha / 2.0))
}

/// `|p1 - p2|^-alpha`, from the law of cosines.
pub fn path_loss_between(p1: &PolarPoint, p2: &PolarPoint, alpha: f64) -> Result<f64> {
    let sq = p1.squared_distance(p2);
    if sq == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(sq.powf(-alpha / 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    /// Near users, indexed by `m`.
    pub relays: Vec<PolarPoint>,
    /// Far users, indexed by `k`.
    pub users: Vec<PolarPoint>,
    pub geometry: CellGeometry,
}

impl Topology {
    /// Draws `k2` near users then `k1` far users, redrawing any position that
    /// lands within [`MIN_SEPARATION_M`] of the base station or of a node
    /// already placed.
    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        geometry: &CellGeometry,
        k1: usize,
        k2: usize,
    ) -> Self {
        let mut placed: Vec<PolarPoint> = Vec::with_capacity(k1 + k2);
        let far_enough = |p: &PolarPoint, placed: &[PolarPoint]| {
            p.r >= MIN_SEPARATION_M
                && placed
                    .iter()
                    .all(|q| euclidean_distance(p, q) >= MIN_SEPARATION_M)
        };

        let mut relays = Vec::with_capacity(k2);
        for _ in 0..k2 {
            let p = loop {
                let p = sample_relay_position(rng, geometry);
                if far_enough(&p, &placed) {
                    break p;
                }
            };
            placed.push(p);
            relays.push(p);
        }
        let mut users = Vec::with_capacity(k1);
        for _ in 0..k1 {
            let p = loop {
                let p = sample_user_position(rng, geometry);
                if far_enough(&p, &placed) {
                    break p;
                }
            };
            placed.push(p);
            users.push(p);
        }
        Self {
            relays,
            users,
            geometry: *geometry,
        }
    }

    pub fn k1(&self) -> usize {
        self.users.len()
    }

    pub fn k2(&self) -> usize {
        self.relays.len()
    }

    /// Distance from far user `k` to near user `m` (`d_u`).
    pub fn user_to_relay(&self, k: usize, m: usize) -> f64 {
        euclidean_distance(&self.users[k], &self.relays[m])
    }

    /// Distance from near user `m` to the base station (`d_r`).
    pub fn relay_to_bs(&self, m: usize) -> f64 {
        self.relays[m].r
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::oracle::ks_statistic;

    const N: usize = 1_000_000;

    fn ks_critical_1pct(n: usize) -> f64 {
        1.6276 / (n as f64).sqrt()
    }

    #[test]
    fn relay_radius_is_uniform_on_inner_disc() {
        let geom = CellGeometry::new(100.0, 300.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rs: Vec<f64> = (0..N).map(|_| sample_relay_position(&mut rng, &geom).r).collect();
        assert!(rs.iter().all(|&r| (0.0..100.0).contains(&r)));
        let mean = rs.iter().sum::<f64>() / N as f64;
        assert!((mean - 50.0).abs() / 50.0 < 0.01, "mean {mean}");
        let d = ks_statistic(&mut rs, |r| r / 100.0);
        assert!(d < ks_critical_1pct(N), "KS {d}");
    }

    #[test]
    fn user_radius_is_uniform_on_annulus() {
        let geom = CellGeometry::new(100.0, 300.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rs: Vec<f64> = (0..N).map(|_| sample_user_position(&mut rng, &geom).r).collect();
        assert!(rs.iter().all(|&r| (100.0..300.0).contains(&r)));
        let mean = rs.iter().sum::<f64>() / N as f64;
        assert!((mean - 200.0).abs() / 200.0 < 0.01, "mean {mean}");
        let d = ks_statistic(&mut rs, |r| (r - 100.0) / 200.0);
        assert!(d < ks_critical_1pct(N), "KS {d}");
    }

    #[test]
    fn angle_is_uniform() {
        let geom = CellGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut th: Vec<f64> = (0..N)
            .map(|_| sample_relay_position(&mut rng, &geom).theta)
            .collect();
        assert!(th.iter().all(|&t| (0.0..TAU).contains(&t)));
        let d = ks_statistic(&mut th, |t| t / TAU);
        assert!(d < ks_critical_1pct(N), "KS {d}");
    }

    #[test]
    fn degenerate_annulus_pins_radius() {
        let geom = CellGeometry::new(100.0, 100.0 + 1e-9, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let r = sample_user_position(&mut rng, &geom).r;
            assert!((r - 100.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(CellGeometry::new(0.0, 10.0, 3.0).is_err());
        assert!(CellGeometry::new(10.0, 10.0, 3.0).is_err());
        assert!(CellGeometry::new(10.0, 20.0, 1.5).is_err());
        assert!(CellGeometry::new(10.0, 20.0, 6.5).is_err());
    }

    #[test]
    fn path_loss_values() {
        let pl = |r: f64, a: f64| path_loss_to_bs(&PolarPoint::new(r, 0.3), a).unwrap();
        assert!((pl(2.0, 3.0) - 0.125).abs() < 1e-15);
        assert_eq!(pl(1.0, 2.0), 1.0);
        assert_eq!(pl(1.0, 5.5), 1.0);
        assert!((pl(10.0, 4.0) - 1e-4).abs() < 1e-18);
        assert_eq!(path_loss_to_bs(&PolarPoint::ORIGIN, 3.0), Err(Error::SingularPathLoss));

        let a = PolarPoint::new(1.0, 0.0);
        let b = PolarPoint::new(2.0, 0.0);
        assert!((path_loss_between(&a, &b, 2.0).unwrap() - 1.0).abs() < 1e-12);
        let c = PolarPoint::new(1.0, PI);
        assert!((path_loss_between(&a, &c, 3.0).unwrap() - 0.125).abs() < 1e-12);
        assert_eq!(path_loss_between(&a, &a, 3.0), Err(Error::CoincidentPoints));
    }

    #[test]
    fn distances() {
        let a = PolarPoint::new(1.0, 0.0);
        assert_eq!(euclidean_distance(&a, &a), 0.0);
        let d = euclidean_distance(&PolarPoint::new(3.0, 0.0), &PolarPoint::new(4.0, PI / 2.0));
        assert!((d - 5.0).abs() < 1e-12);
    }

    #[test]
    fn path_loss_to_bs_matches_pairwise_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let geom = CellGeometry::default();
        for _ in 0..1000 {
            let p = sample_user_position(&mut rng, &geom);
            let alpha = rng.random_range(2.0..=6.0);
            let direct = path_loss_to_bs(&p, alpha).unwrap();
            let pair = path_loss_between(&p, &PolarPoint::ORIGIN, alpha).unwrap();
            assert!(((direct - pair) / direct).abs() <= 1e-12);
        }
    }

    #[test]
    fn topology_respects_regions_and_guard() {
        let geom = CellGeometry::new(5.0, 8.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let t = Topology::sample(&mut rng, &geom, 3, 4);
            assert_eq!((t.k1(), t.k2()), (3, 4));
            assert!(t.relays.iter().all(|p| p.r >= MIN_SEPARATION_M && p.r < 5.0));
            assert!(t.users.iter().all(|p| p.r >= 5.0 && p.r < 8.0));
            let all: Vec<_> = t.relays.iter().chain(&t.users).collect();
            for (i, p) in all.iter().enumerate() {
                for q in &all[i + 1..] {
                    assert!(euclidean_distance(p, q) >= MIN_SEPARATION_M);
                }
            }
        }
    }

    mod props {
        use proptest::prelude::*;

        use super::super::*;

        fn point() -> impl Strategy<Value = PolarPoint> {
            (0.0f64..500.0, 0.0f64..TAU).prop_map(|(r, t)| PolarPoint::new(r, t))
        }

        proptest! {
            #[test]
            fn path_loss_is_symmetric(a in point(), b in point(), alpha in 2.0f64..=6.0) {
                prop_assume!(euclidean_distance(&a, &b) > 1e-6);
                let ab = path_loss_between(&a, &b, alpha).unwrap();
                let ba = path_loss_between(&b, &a, alpha).unwrap();
                prop_assert!(((ab - ba) / ab).abs() < 1e-12);
            }

            #[test]
            fn triangle_inequality(a in point(), b in point(), c in point()) {
                let lhs = euclidean_distance(&a, &c);
                let rhs = euclidean_distance(&a, &b) + euclidean_distance(&b, &c);
                prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs));
            }

            #[test]
            fn path_loss_decreases_with_distance(r in 1.0f64..400.0, dr in 0.01f64..50.0, alpha in 2.0f64..=6.0) {
                let o = PolarPoint::new(0.0, 0.0);
                let near = path_loss_between(&o, &PolarPoint::new(r, 1.0), alpha).unwrap();
                let far = path_loss_between(&o, &PolarPoint::new(r + dr, 1.0), alpha).unwrap();
                prop_assert!(far < near);
            }
        }
    }
}
