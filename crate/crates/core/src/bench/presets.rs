//! Built-in desk-scale experiments for the three trend studies.

use super::spec::{BaselineSpec, ExperimentSpec, OutputSpec, ScenarioSpec, SweepAxis, SweepSpec};

pub const PRESET_NAMES: [&str; 3] = ["fig2a", "fig2b", "fig2c"];

fn base(name: &str, description: &str, scenario: ScenarioSpec, sweep: SweepSpec) -> ExperimentSpec {
    ExperimentSpec {
        name: name.into(),
        description: description.into(),
        seed: 2024,
        trials: 20,
        workers: 1,
        scenario,
        sweep,
        draoa: Default::default(),
        baseline: BaselineSpec::default(),
        output: OutputSpec {
            dir: format!("results/{name}").into(),
            ..Default::default()
        },
    }
}

/// Hardware cost sweep, RHS against phased arrays at equal cost and power.
/// Budgets are in RHS elements per panel, so a budget of 40 buys 40 RHS
/// elements or 4 phased elements at a cost ratio of 10.
pub fn fig2a() -> ExperimentSpec {
    let mut s = base(
        "fig2a",
        "SINR versus hardware cost per panel (budget in RHS elements), P = Q = 2, \
         phased baselines at cost ratios 6, 8 and 10; desk-scale grid of 10 to 40 elements",
        ScenarioSpec {
            n_tx: 2,
            n_rx: 2,
            ..Default::default()
        },
        SweepSpec {
            axis: SweepAxis::CostBudget,
            values: vec![10.0, 20.0, 30.0, 40.0],
            series: vec![],
        },
    );
    s.baseline.enabled = true;
    s
}

/// Number of transmit panels, for one and two receive panels.
pub fn fig2b() -> ExperimentSpec {
    base(
        "fig2b",
        "SINR versus number of transmit panels for Q = 1 and Q = 2, 8 elements per panel",
        ScenarioSpec {
            elements_per_panel: 8,
            ..Default::default()
        },
        SweepSpec {
            axis: SweepAxis::NTx,
            values: vec![1.0, 2.0, 3.0, 4.0],
            series: vec![1.0, 2.0],
        },
    )
}

/// Number of receive panels at a fixed total element count, P = 2.
pub fn fig2c() -> ExperimentSpec {
    base(
        "fig2c",
        "SINR versus number of receive panels with the total element count fixed at 30 and 60, \
         P = 2; elements per panel are the total over P + Q rounded down",
        ScenarioSpec {
            n_tx: 2,
            ..Default::default()
        },
        SweepSpec {
            axis: SweepAxis::NRx,
            values: vec![1.0, 2.0, 3.0, 4.0],
            series: vec![30.0, 60.0],
        },
    )
}

pub fn preset(name: &str) -> Option<ExperimentSpec> {
    match name {
        "fig2a" => Some(fig2a()),
        "fig2b" => Some(fig2b()),
        "fig2c" => Some(fig2c()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESET_NAMES {
            let s = preset(name).unwrap();
            s.validate().unwrap();
            let back = ExperimentSpec::from_toml(&s.to_toml().unwrap()).unwrap();
            assert_eq!(back, s);
        }
        assert!(preset("fig3").is_none());
    }
}
