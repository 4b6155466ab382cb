//! Fixtures shared by the benchmarks.

use tcequil::model::{validate, AgentSpec, ExposureSpec, Horizon, MarketSpec, NoiseTraderSpec, Scenario, SimulationConfig};
use tcequil::{Matrix, ValidatedScenario, Vector};

/// Two mirrored agents with `γ = (1, 2)` in a scalar market.
pub fn mirrored(exposure: ExposureSpec, horizon: Horizon) -> ValidatedScenario {
    validate(&Scenario {
        market: MarketSpec {
            sigma_cov: Matrix::identity(1, 1),
            lambda_cost: Vector::from_element(1, 1.0),
            delta: 0.1,
            horizon,
        },
        agents: vec![
            AgentSpec { gamma: 1.0, exposure },
            AgentSpec {
                gamma: 2.0,
                exposure: ExposureSpec::MirrorOf { agent: 0 },
            },
        ],
        noise: NoiseTraderSpec::None,
        simulation: SimulationConfig::default(),
    })
    .expect("valid fixture")
}

pub fn abm() -> ExposureSpec {
    ExposureSpec::Abm {
        drift: Vector::from_element(1, -0.5),
        initial: Vector::zeros(1),
    }
}
