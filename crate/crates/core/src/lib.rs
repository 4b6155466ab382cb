pub mod equilibrium;
pub mod error;
pub mod fbsde;
pub mod grid;
pub mod matfun;
pub mod model;
pub mod oracle;
pub mod sim;

pub use equilibrium::{EquilibriumPath, EquilibriumSolver, LiquidityPremium, MeanLevel, OUCoefficients};
pub use error::{Error, Result};
pub use fbsde::{FbsdeProblem, FeedbackLaw, LinearTarget, OffsetPath, SpeedSchedule, StrategyPath};
pub use grid::{CompensatedSum, TimeGrid};
pub use matfun::{Matrix, Vector};
pub use model::{
    AgentSpec, DeterministicPath, ExposureSpec, Horizon, MarketSpec, NoiseTraderSpec, SampledPath, Scenario,
    SimulationConfig, StateLayout, SystemMatrices, ValidatedScenario,
};
pub use sim::{MonteCarloSummary, OuFit, PathGenerator, ScenarioPath};
