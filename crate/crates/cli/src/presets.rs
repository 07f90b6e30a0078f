//! Built-in sweeps behind `fdxsim figures`. All of them sweep the user
//! maximum power over [`PMAX_GRID`] and differ in their series.

use clap::ValueEnum;
use fdxsim_core::simulation::{ScenarioConfig, SeriesSpec, SweepAxis};
use fdxsim_core::{SelectionScheme, SiConfig};

use crate::config::{RunFile, SweepSpec};

pub const PMAX_GRID: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];
pub const USER_COUNTS: [(usize, usize); 3] = [(2, 2), (4, 4), (8, 8)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// User-count scaling with self-interference, best-SINR selection.
    Fig2,
    /// User-count scaling without self-interference, best-SINR selection.
    Fig3,
    /// Self-interference on versus off at 4 + 4 users.
    Fig4,
    /// All seven selection schemes with self-interference.
    Fig5,
    /// All seven selection schemes without self-interference.
    Fig6,
    /// User-count scaling without self-interference, shortest total distance.
    Fig7,
    All,
}

impl Figure {
    pub const EACH: [Figure; 6] = [Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig5, Figure::Fig6, Figure::Fig7];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
            Figure::All => "all",
        }
    }

    pub fn expand(self) -> Vec<Figure> {
        match self {
            Figure::All => Self::EACH.to_vec(),
            one => vec![one],
        }
    }
}

fn user_series() -> Vec<SeriesSpec> {
    USER_COUNTS
        .iter()
        .map(|&(k1, k2)| SeriesSpec {
            users: Some((k1, k2)),
            ..SeriesSpec::named(format!("{k1}x{k2}"))
        })
        .collect()
}

fn scheme_series() -> Vec<SeriesSpec> {
    SelectionScheme::ALL
        .iter()
        .map(|&s| SeriesSpec {
            scheme: Some(s),
            ..SeriesSpec::named(s.name())
        })
        .collect()
}

/// The run file of one figure preset. Panics on [`Figure::All`].
pub fn preset(figure: Figure) -> RunFile {
    let si_off = ScenarioConfig {
        si: SiConfig::OFF,
        ..ScenarioConfig::default()
    };
    let (scenario, series) = match figure {
        Figure::Fig2 => (ScenarioConfig::default(), user_series()),
        Figure::Fig3 => (
            ScenarioConfig {
                scheme: SelectionScheme::BestSinrNoSi,
                ..si_off
            },
            user_series(),
        ),
        Figure::Fig4 => (
            ScenarioConfig::default(),
            vec![
                SeriesSpec {
                    si_enabled: Some(true),
                    ..SeriesSpec::named("si_on")
                },
                SeriesSpec {
                    si_enabled: Some(false),
                    ..SeriesSpec::named("si_off")
                },
            ],
        ),
        Figure::Fig5 => (ScenarioConfig::default(), scheme_series()),
        Figure::Fig6 => (si_off, scheme_series()),
        Figure::Fig7 => (
            ScenarioConfig {
                scheme: SelectionScheme::ShortestTotalDistance,
                ..si_off
            },
            user_series(),
        ),
        Figure::All => panic!("`all` is not a single preset"),
    };
    RunFile {
        scenario,
        sweep: Some(SweepSpec {
            axis: SweepAxis::PmaxUserDbm(PMAX_GRID.to_vec()),
            series,
        }),
    }
}
