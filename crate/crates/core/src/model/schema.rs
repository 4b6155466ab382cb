//! JSON scenario files.
//!
//! ```json
//! {
//!   "market": {
//!     "sigma_cov": [[1.0]],
//!     "lambda_cost": [1.0],
//!     "delta": 0.1,
//!     "horizon": "infinite"
//!   },
//!   "agents": [
//!     { "gamma": 1.0, "exposure": { "type": "abm", "drift": [-0.5], "initial": [0.0] } },
//!     { "gamma": 2.0, "exposure": { "type": "mirror_of", "agent": 0 } }
//!   ],
//!   "noise": { "type": "none" },
//!   "simulation": { "dt": 0.001, "t_max": 20.0, "n_paths": 100, "seed": 0 }
//! }
//! ```
//!
//! `horizon` is `"infinite"` or `{"finite": T}`. `lambda_cost` may be the
//! diagonal or a full (diagonal) matrix. Exposure types: `zero`,
//! `deterministic` (`initial`, `slope`), `sampled` (`times`, `values`),
//! `abm` (`drift`, `initial`), `ou` (`kappa`, `initial`), `mirror_of` (`agent`).
//! Noise types: `none`, `constant_rate` (`psi_dot`, `psi_0`),
//! `ou_target` (`kappa_psi`, `kappa_x`, `sigma_x`, `psi_0`, `x_0`).
//! Omitted initial values default to zero; `noise` and `simulation` are optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AgentSpec, DeterministicPath, ExposureSpec, Horizon, MarketSpec, NoiseTraderSpec, SampledPath, Scenario,
    SimulationConfig,
};
use crate::error::{Error, Result};
use crate::matfun::{Matrix, Vector};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub market: MarketFile,
    pub agents: Vec<AgentFile>,
    #[serde(default)]
    pub noise: NoiseFile,
    #[serde(default)]
    pub simulation: SimulationFile,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MarketFile {
    pub sigma_cov: Vec<Vec<f64>>,
    pub lambda_cost: CostFile,
    #[serde(default)]
    pub delta: f64,
    pub horizon: HorizonFile,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum CostFile {
    Diagonal(Vec<f64>),
    Dense(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum HorizonFile {
    Infinite,
    Finite(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub gamma: f64,
    #[serde(default)]
    pub exposure: ExposureFile,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExposureFile {
    #[default]
    Zero,
    Deterministic {
        #[serde(default)]
        initial: Option<Vec<f64>>,
        #[serde(default)]
        slope: Option<Vec<f64>>,
    },
    Sampled {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    Abm {
        drift: Vec<f64>,
        #[serde(default)]
        initial: Option<Vec<f64>>,
    },
    Ou {
        kappa: Vec<Vec<f64>>,
        #[serde(default)]
        initial: Option<Vec<f64>>,
    },
    MirrorOf {
        agent: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseFile {
    #[default]
    None,
    ConstantRate {
        psi_dot: Vec<f64>,
        #[serde(default)]
        psi_0: Option<Vec<f64>>,
    },
    OuTarget {
        kappa_psi: f64,
        kappa_x: f64,
        sigma_x: f64,
        #[serde(default)]
        psi_0: Option<Vec<f64>>,
        #[serde(default)]
        x_0: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationFile {
    pub dt: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for SimulationFile {
    fn default() -> Self {
        let c = SimulationConfig::default();
        SimulationFile {
            dt: c.dt,
            t_max: c.t_max,
            n_paths: c.n_paths,
            seed: c.seed,
        }
    }
}

fn dense(rows: &[Vec<f64>], field: &str) -> Result<Matrix> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::spec(field, "matrix is empty"));
    }
    let m = rows[0].len();
    if let Some(i) = rows.iter().position(|r| r.len() != m) {
        return Err(Error::spec(format!("{field}[{i}]"), format!("ragged row, expected {m} entries")));
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn vector(v: &Option<Vec<f64>>, d: usize) -> Vector {
    v.as_ref()
        .map(|x| Vector::from_column_slice(x))
        .unwrap_or_else(|| Vector::zeros(d))
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ScenarioFile {
    /// Converts to the in-memory model. Dimensions are checked later by [`super::validate`].
    pub fn to_scenario(&self) -> Result<Scenario> {
        let sigma_cov = dense(&self.market.sigma_cov, "market.sigma_cov")?;
        let d = sigma_cov.nrows();
        let lambda_cost = match &self.market.lambda_cost {
            CostFile::Diagonal(v) => Vector::from_column_slice(v),
            CostFile::Dense(rows) => {
                let m = dense(rows, "market.lambda_cost")?;
                if !m.is_square() {
                    return Err(Error::spec("market.lambda_cost", "must be square"));
                }
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        if i != j && m[(i, j)] != 0.0 {
                            return Err(Error::spec(
                                format!("market.lambda_cost[{i}][{j}]"),
                                "cost matrix must be diagonal",
                            ));
                        }
                    }
                }
                m.diagonal()
            }
        };
        let horizon = match self.market.horizon {
            HorizonFile::Infinite => Horizon::Infinite,
            HorizonFile::Finite(t) => Horizon::Finite(t),
        };
        let agents = self
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let exposure = match &a.exposure {
                    ExposureFile::Zero => ExposureSpec::Zero,
                    ExposureFile::Deterministic { initial, slope } => {
                        ExposureSpec::Deterministic(DeterministicPath::Affine {
                            initial: vector(initial, d),
                            slope: vector(slope, d),
                        })
                    }
                    ExposureFile::Sampled { times, values } => {
                        ExposureSpec::Deterministic(DeterministicPath::Sampled(SampledPath {
                            times: times.clone(),
                            values: values.iter().map(|v| Vector::from_column_slice(v)).collect(),
                        }))
                    }
                    ExposureFile::Abm { drift, initial } => ExposureSpec::Abm {
                        drift: Vector::from_column_slice(drift),
                        initial: vector(initial, d),
                    },
                    ExposureFile::Ou { kappa, initial } => ExposureSpec::Ou {
                        kappa: dense(kappa, &format!("agents[{i}].exposure.kappa"))?,
                        initial: vector(initial, d),
                    },
                    ExposureFile::MirrorOf { agent } => ExposureSpec::MirrorOf { agent: *agent },
                };
                Ok(AgentSpec {
                    gamma: a.gamma,
                    exposure,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let noise = match &self.noise {
            NoiseFile::None => NoiseTraderSpec::None,
            NoiseFile::ConstantRate { psi_dot, psi_0 } => NoiseTraderSpec::ConstantRate {
                psi_dot: Vector::from_column_slice(psi_dot),
                psi_0: vector(psi_0, d),
            },
            NoiseFile::OuTarget {
                kappa_psi,
                kappa_x,
                sigma_x,
                psi_0,
                x_0,
            } => NoiseTraderSpec::OuTarget {
                kappa_psi: *kappa_psi,
                kappa_x: *kappa_x,
                sigma_x: *sigma_x,
                psi_0: vector(psi_0, d),
                x_0: vector(x_0, d),
            },
        };
        let s = self.simulation;
        Ok(Scenario {
            market: MarketSpec {
                sigma_cov,
                lambda_cost,
                delta: self.market.delta,
                horizon,
            },
            agents,
            noise,
            simulation: SimulationConfig {
                dt: s.dt,
                t_max: s.t_max,
                n_paths: s.n_paths,
                seed: s.seed,
            },
        })
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let v = |x: &Vector| Some(x.iter().copied().collect::<Vec<_>>());
        let plain = |x: &Vector| x.iter().copied().collect::<Vec<_>>();
        ScenarioFile {
            market: MarketFile {
                sigma_cov: rows_of(&s.market.sigma_cov),
                lambda_cost: CostFile::Diagonal(plain(&s.market.lambda_cost)),
                delta: s.market.delta,
                horizon: match s.market.horizon {
                    Horizon::Infinite => HorizonFile::Infinite,
                    Horizon::Finite(t) => HorizonFile::Finite(t),
                },
            },
            agents: s
                .agents
                .iter()
                .map(|a| AgentFile {
                    gamma: a.gamma,
                    exposure: match &a.exposure {
                        ExposureSpec::Zero => ExposureFile::Zero,
                        ExposureSpec::Deterministic(DeterministicPath::Affine { initial, slope }) => {
                            ExposureFile::Deterministic {
                                initial: v(initial),
                                slope: v(slope),
                            }
                        }
                        ExposureSpec::Deterministic(DeterministicPath::Sampled(p)) => ExposureFile::Sampled {
                            times: p.times.clone(),
                            values: p.values.iter().map(plain).collect(),
                        },
                        ExposureSpec::Abm { drift, initial } => ExposureFile::Abm {
                            drift: plain(drift),
                            initial: v(initial),
                        },
                        ExposureSpec::Ou { kappa, initial } => ExposureFile::Ou {
                            kappa: rows_of(kappa),
                            initial: v(initial),
                        },
                        ExposureSpec::MirrorOf { agent } => ExposureFile::MirrorOf { agent: *agent },
                    },
                })
                .collect(),
            noise: match &s.noise {
                NoiseTraderSpec::None => NoiseFile::None,
                NoiseTraderSpec::ConstantRate { psi_dot, psi_0 } => NoiseFile::ConstantRate {
                    psi_dot: plain(psi_dot),
                    psi_0: v(psi_0),
                },
                NoiseTraderSpec::OuTarget {
                    kappa_psi,
                    kappa_x,
                    sigma_x,
                    psi_0,
                    x_0,
                } => NoiseFile::OuTarget {
                    kappa_psi: *kappa_psi,
                    kappa_x: *kappa_x,
                    sigma_x: *sigma_x,
                    psi_0: v(psi_0),
                    x_0: v(x_0),
                },
            },
            simulation: SimulationFile {
                dt: s.simulation.dt,
                t_max: s.simulation.t_max,
                n_paths: s.simulation.n_paths,
                seed: s.simulation.seed,
            },
        }
    }
}

/// Parses scenario JSON. Errors carry the JSON path of the offending field.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut field = e.path().to_string();
        let message = e.inner().to_string();
        // serde reports a missing key at the parent; point at the key itself
        if let Some(rest) = message.strip_prefix("missing field `") {
            if let Some(name) = rest.split('`').next() {
                field = if field == "." { name.to_string() } else { format!("{field}.{name}") };
            }
        }
        Error::spec(field, message)
    })?;
    file.to_scenario()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text)
}
