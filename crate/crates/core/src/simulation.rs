//! Monte Carlo harness: one trial runs the whole pipeline on fresh random
//! positions and fading; a sweep repeats trials over a parameter axis and a
//! list of series, reusing the same per-trial random streams everywhere so
//! that any two configurations can be compared trial by trial.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{build_pair_matrix, finalize_assignment, munkres, CellWinner};
use crate::channel::{make_realization, SiConfig};
use crate::error::{Error, Result};
use crate::geometry::{CellGeometry, Topology};
use crate::link_budget::{normalized_gains, total_sum_rate, BsPowerPolicy, SinrMode};
use crate::power_allocation::{per_user_rates, solve, Budgets, SolverReport};
use crate::relay_selection::{select_all, ProvisionalPowers, SelectionResult, SelectionScheme};
use crate::units::{dbm_to_watts, noise_power_watts};

/// Power budgets and minimum rates. Budgets left unset follow the user
/// maximum power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    pub pmax_coop_dbm: Option<f64>,
    pub pmax_nc_dbm: Option<f64>,
    pub rmin_coop: f64,
    pub rmin_nc: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            pmax_coop_dbm: None,
            pmax_nc_dbm: None,
            rmin_coop: 0.1,
            rmin_nc: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Far users.
    pub k1: usize,
    /// Near users (relay candidates).
    pub k2: usize,
    /// Subcarriers per slot.
    pub n: usize,
    pub w_hz: f64,
    pub n0_dbm_hz: f64,
    pub pmax_user_dbm: f64,
    pub pmax_bs_dbm: f64,
    pub geometry: CellGeometry,
    pub si: SiConfig,
    pub scheme: SelectionScheme,
    pub budgets: BudgetConfig,
    /// A near user relays for at most one far user.
    pub exclusive_relays: bool,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            k1: 4,
            k2: 4,
            n: 8,
            w_hz: 20e3,
            n0_dbm_hz: -174.0,
            pmax_user_dbm: 20.0,
            pmax_bs_dbm: 40.0,
            geometry: CellGeometry::default(),
            si: SiConfig::default(),
            scheme: SelectionScheme::BestSinrWithSi,
            budgets: BudgetConfig::default(),
            exclusive_relays: true,
            trials: 500,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Field ranges. A user power of `-inf` dBm (zero watts) is accepted.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k1 < 1 || self.k2 < 1 || self.n < 1 || self.trials < 1 {
            return bad(format!(
                "k1, k2, n and trials must be >= 1 (got {}, {}, {}, {})",
                self.k1, self.k2, self.n, self.trials
            ));
        }
        if !(self.w_hz > 0.0 && self.w_hz.is_finite()) {
            return bad(format!("w_hz must be positive, got {}", self.w_hz));
        }
        for (name, v) in [("n0_dbm_hz", self.n0_dbm_hz), ("pmax_bs_dbm", self.pmax_bs_dbm)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite, got {v}"));
            }
        }
        let dbm_ok = |v: f64| v.is_finite() || v == f64::NEG_INFINITY;
        if !dbm_ok(self.pmax_user_dbm) {
            return bad(format!("pmax_user_dbm must be finite or -inf, got {}", self.pmax_user_dbm));
        }
        for (name, v) in [
            ("budgets.pmax_coop_dbm", self.budgets.pmax_coop_dbm),
            ("budgets.pmax_nc_dbm", self.budgets.pmax_nc_dbm),
        ] {
            if let Some(v) = v {
                if !dbm_ok(v) {
                    return bad(format!("{name} must be finite or -inf, got {v}"));
                }
            }
        }
        for (name, v) in [("budgets.rmin_coop", self.budgets.rmin_coop), ("budgets.rmin_nc", self.budgets.rmin_nc)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        self.geometry.validate()?;
        self.si.validate()
    }

    /// Scenarios that parse but can never run.
    pub fn check_runnable(&self) -> Result<()> {
        self.validate()?;
        if self.exclusive_relays && self.k1 > self.k2 {
            return Err(Error::Infeasible(format!(
                "exclusive relaying needs k1 <= k2, got k1 = {}, k2 = {}",
                self.k1, self.k2
            )));
        }
        let b = self.power_budgets();
        if (b.pmax_coop <= 0.0 && b.rmin_coop > 0.0) || (b.pmax_nc <= 0.0 && b.rmin_nc > 0.0) {
            return Err(Error::Infeasible("a zero power budget cannot meet a positive minimum rate".into()));
        }
        Ok(())
    }

    pub fn pmax_user_w(&self) -> f64 {
        dbm_to_watts(self.pmax_user_dbm)
    }

    pub fn power_budgets(&self) -> Budgets {
        let user = self.pmax_user_dbm;
        Budgets {
            pmax_coop: dbm_to_watts(self.budgets.pmax_coop_dbm.unwrap_or(user)),
            pmax_nc: dbm_to_watts(self.budgets.pmax_nc_dbm.unwrap_or(user)),
            rmin_coop: self.budgets.rmin_coop,
            rmin_nc: self.budgets.rmin_nc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentSummary {
    pub coop_pairs: usize,
    pub direct_pairs: usize,
    /// Users with a minimum rate but no subcarrier pair.
    pub unserved_users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: u64,
    /// Exact-SINR sum-rate in bit/s/Hz; zero for a failed trial.
    pub sum_rate: f64,
    /// Far users first, then near users.
    pub per_user_rates: Vec<f64>,
    pub selection: Option<SelectionResult>,
    pub summary: Option<AssignmentSummary>,
    pub report: Option<SolverReport>,
    pub failure: Option<String>,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn qos_relaxed(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.qos_relaxed)
    }
}

/// The random stream of one trial. Every configuration sharing a seed sees
/// the same stream for the same trial index.
pub fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

/// Runs the whole pipeline once. Module errors become a failed trial.
pub fn run_trial(config: &ScenarioConfig, trial_index: u64) -> TrialResult {
    let mut out = TrialResult {
        trial_index,
        sum_rate: 0.0,
        per_user_rates: vec![0.0; config.k1 + config.k2],
        selection: None,
        summary: None,
        report: None,
        failure: None,
    };
    if let Err(e) = pipeline(config, trial_index, &mut out) {
        out.sum_rate = 0.0;
        out.per_user_rates.fill(0.0);
        out.failure = Some(e.to_string());
    }
    out
}

fn pipeline(config: &ScenarioConfig, trial_index: u64, out: &mut TrialResult) -> Result<()> {
    config.validate()?;
    let mut rng = trial_rng(config.seed, trial_index);
    let topology = Topology::sample(&mut rng, &config.geometry, config.k1, config.k2);
    let n0w = noise_power_watts(config.n0_dbm_hz, config.w_hz);
    let channel = make_realization(&topology, config.n, &config.si, n0w, &mut rng)?;
    let gains = normalized_gains(&channel, &topology)?;
    let bs = BsPowerPolicy::uniform(dbm_to_watts(config.pmax_bs_dbm), config.n);
    let provisional = ProvisionalPowers::equal_split(config.pmax_user_w(), config.n);

    let selection = select_all(config.scheme, &topology, &gains, &provisional, &bs, config.exclusive_relays)?;
    out.selection = Some(selection.clone());

    let mut matrix = build_pair_matrix(&selection, &gains, &provisional, &bs, SinrMode::Exact)?;
    let pair_of = munkres(&matrix.value)?;
    let budgets = config.power_budgets();
    let unserved = if budgets.rmin_coop > 0.0 || budgets.rmin_nc > 0.0 {
        matrix.repair_for_qos(&pair_of)
    } else {
        0
    };
    let assignment = finalize_assignment(&matrix, &pair_of, config.k1, config.k2)?;
    let coop_pairs = assignment.coop_cells();
    out.summary = Some(AssignmentSummary {
        coop_pairs,
        direct_pairs: assignment.n() - coop_pairs,
        unserved_users: unserved,
    });
    debug_assert!(assignment.winners.iter().all(|w| match *w {
        CellWinner::Coop { m, .. } => selection.is_relay[m],
        CellWinner::NonCoop { m } => !selection.is_relay[m],
    }));

    let (powers, report) = solve(&assignment, &gains, &bs, &budgets, SinrMode::Approximate)?;
    out.per_user_rates = per_user_rates(&powers, &assignment, &gains, &bs, SinrMode::Exact);
    out.sum_rate = total_sum_rate(&assignment, &powers, &gains, &bs, SinrMode::Exact)?;
    out.report = Some(report);
    Ok(())
}

/// The swept parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    PmaxUserDbm(Vec<f64>),
    Scheme(Vec<SelectionScheme>),
    /// `(k1, k2)` pairs.
    Users(Vec<(usize, usize)>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::PmaxUserDbm(_) => "pmax_user_dbm",
            SweepAxis::Scheme(_) => "scheme",
            SweepAxis::Users(_) => "users",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::PmaxUserDbm(v) => v.len(),
            SweepAxis::Scheme(v) => v.len(),
            SweepAxis::Users(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label(&self, idx: usize) -> String {
        match self {
            SweepAxis::PmaxUserDbm(v) => format!("{}", v[idx]),
            SweepAxis::Scheme(v) => v[idx].name().to_string(),
            SweepAxis::Users(v) => format!("{}x{}", v[idx].0, v[idx].1),
        }
    }

    fn apply(&self, idx: usize, config: &mut ScenarioConfig) {
        match self {
            SweepAxis::PmaxUserDbm(v) => config.pmax_user_dbm = v[idx],
            SweepAxis::Scheme(v) => config.scheme = v[idx],
            SweepAxis::Users(v) => (config.k1, config.k2) = v[idx],
        }
    }
}

/// A named patch applied on top of the base scenario for one curve.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub si_enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SelectionScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<(usize, usize)>,
}

impl SeriesSpec {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    fn apply(&self, config: &mut ScenarioConfig) {
        if let Some(on) = self.si_enabled {
            config.si.enabled = on;
        }
        if let Some(s) = self.scheme {
            config.scheme = s;
        }
        if let Some((k1, k2)) = self.users {
            config.k1 = k1;
            config.k2 = k2;
        }
    }
}

/// Aggregate over the trials of one (axis point, series) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: String,
    pub series: String,
    /// Mean over successful trials, bit/s/Hz.
    pub mean: f64,
    /// Sample standard deviation over the root of the successful count.
    pub stderr: f64,
    pub trials: usize,
    pub failed_trials: usize,
    pub qos_relaxed_trials: usize,
    /// Per-trial sum-rates indexed by trial; `None` marks a failure.
    pub samples: Vec<Option<f64>>,
}

impl SweepPoint {
    fn from_trials(axis: String, series: String, trials: &[TrialResult]) -> Self {
        let samples: Vec<Option<f64>> = trials.iter().map(|t| (!t.failed()).then_some(t.sum_rate)).collect();
        let ok: Vec<f64> = samples.iter().flatten().copied().collect();
        let (mean, stderr) = mean_and_stderr(&ok);
        Self {
            axis,
            series,
            mean,
            stderr,
            trials: trials.len(),
            failed_trials: trials.len() - ok.len(),
            qos_relaxed_trials: trials.iter().filter(|t| t.qos_relaxed()).count(),
            samples,
        }
    }
}

/// Mean and standard error in input order; NaN mean for an empty slice and
/// zero error below two samples.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis_name: String,
    /// Axis-major: every series for the first axis value, then the next.
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn point(&self, axis: &str, series: &str) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.axis == axis && p.series == series)
    }
}

/// The scenario used for one axis value and one series.
pub fn resolve_point(base: &ScenarioConfig, axis: &SweepAxis, idx: usize, series: &SeriesSpec) -> ScenarioConfig {
    let mut cfg = base.clone();
    axis.apply(idx, &mut cfg);
    series.apply(&mut cfg);
    cfg
}

/// Runs `base.trials` trials for every (axis value, series) on the current
/// rayon pool. An empty series list means a single series named after the
/// base scheme.
pub fn run_sweep(base: &ScenarioConfig, axis: &SweepAxis, series: &[SeriesSpec]) -> Result<SweepResult> {
    if axis.is_empty() {
        return Err(Error::InvalidConfig("sweep axis has no values".into()));
    }
    let default_series = [SeriesSpec::named(base.scheme.name())];
    let series = if series.is_empty() { &default_series[..] } else { series };
    let mut points = Vec::with_capacity(axis.len() * series.len());
    for idx in 0..axis.len() {
        for s in series {
            let cfg = resolve_point(base, axis, idx, s);
            cfg.check_runnable()?;
            let trials: Vec<TrialResult> = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|t| run_trial(&cfg, t))
                .collect();
            points.push(SweepPoint::from_trials(axis.label(idx), s.name.clone(), &trials));
        }
    }
    Ok(SweepResult {
        axis_name: axis.name().to_string(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            k1: 2,
            k2: 3,
            n: 4,
            trials: 20,
            seed: 7,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn defaults_are_valid() {
        ScenarioConfig::default().validate().unwrap();
        ScenarioConfig::default().check_runnable().unwrap();
    }

    #[test]
    fn validation_catches_bad_fields() {
        let bad = [
            ScenarioConfig { k1: 0, ..small() },
            ScenarioConfig { n: 0, ..small() },
            ScenarioConfig { trials: 0, ..small() },
            ScenarioConfig { pmax_bs_dbm: f64::NAN, ..small() },
            ScenarioConfig { pmax_user_dbm: f64::INFINITY, ..small() },
            ScenarioConfig { w_hz: 0.0, ..small() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))), "{c:?}");
        }
        let c = ScenarioConfig { k1: 5, k2: 3, ..small() };
        assert!(matches!(c.check_runnable(), Err(Error::Infeasible(_))));
        assert!(ScenarioConfig { exclusive_relays: false, ..c }.check_runnable().is_ok());
    }

    #[test]
    fn trial_is_deterministic() {
        let c = small();
        for t in 0..5 {
            assert_eq!(run_trial(&c, t), run_trial(&c, t));
        }
        assert_ne!(run_trial(&c, 0).sum_rate, run_trial(&c, 1).sum_rate);
    }

    #[test]
    fn trial_bookkeeping() {
        let c = small();
        for t in 0..10 {
            let r = run_trial(&c, t);
            assert!(!r.failed(), "{:?}", r.failure);
            let total: f64 = r.per_user_rates.iter().sum();
            assert!((total - r.sum_rate).abs() <= 1e-9 * r.sum_rate.max(1.0));
            let s = r.summary.unwrap();
            assert_eq!(s.coop_pairs + s.direct_pairs, c.n);
            assert!(r.report.unwrap().feasible);
        }
    }

    #[test]
    fn zero_user_power_gives_zero_rate() {
        let c = ScenarioConfig { pmax_user_dbm: f64::NEG_INFINITY, ..small() };
        let r = run_trial(&c, 0);
        assert_eq!(r.sum_rate, 0.0);
        let c = ScenarioConfig {
            budgets: BudgetConfig { rmin_coop: 0.0, rmin_nc: 0.0, ..BudgetConfig::default() },
            ..c
        };
        let r = run_trial(&c, 0);
        assert!(!r.failed());
        assert_eq!(r.sum_rate, 0.0);
    }

    #[test]
    fn removing_si_never_hurts_a_trial() {
        let on = small();
        let off = ScenarioConfig { si: SiConfig::OFF, ..small() };
        for t in 0..20 {
            assert!(run_trial(&off, t).sum_rate >= run_trial(&on, t).sum_rate);
        }
    }

    #[test]
    fn sweep_shape_and_reproducibility() {
        let axis = SweepAxis::PmaxUserDbm(vec![0.0, 20.0]);
        let series = [
            SeriesSpec { si_enabled: Some(true), ..SeriesSpec::named("si_on") },
            SeriesSpec { si_enabled: Some(false), ..SeriesSpec::named("si_off") },
        ];
        let a = run_sweep(&small(), &axis, &series).unwrap();
        let b = run_sweep(&small(), &axis, &series).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 4);
        assert_eq!(a.points[1].axis, "0");
        assert_eq!(a.points[1].series, "si_off");
        assert!(a.point("20", "si_on").is_some());
        let serial: Vec<TrialResult> = (0..20).map(|t| run_trial(&resolve_point(&small(), &axis, 1, &series[1]), t)).collect();
        let p = SweepPoint::from_trials("20".into(), "si_off".into(), &serial);
        assert_eq!(&p, a.point("20", "si_off").unwrap());
        assert!(run_sweep(&small(), &SweepAxis::Scheme(vec![]), &[]).is_err());
    }

    #[test]
    fn stderr_matches_hand_computation() {
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_stderr(&[3.0]), (3.0, 0.0));
        assert!(mean_and_stderr(&[]).0.is_nan());
    }

    #[test]
    fn axis_labels() {
        assert_eq!(SweepAxis::Users(vec![(2, 2), (8, 8)]).label(1), "8x8");
        assert_eq!(SweepAxis::Scheme(vec![SelectionScheme::LeastLongestHop]).label(0), "least-longest-hop");
        assert_eq!(SweepAxis::PmaxUserDbm(vec![7.5]).label(0), "7.5");
    }
}
