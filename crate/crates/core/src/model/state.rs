//! Linear state representation of the exogenous processes.
//!
//! Every supported exposure and noise law is driven by a state `z` whose first
//! coordinate is the constant 1 and which follows `dz = Gen z dt + (noise)`, so
//! that `E[z_s | F_t] = exp(Gen (s − t)) z_t`. Exposures, `ψ`, `ψ̇` and `μ^ψ`
//! are linear in `z`, plus an additive deterministic path for sampled exposures.

use super::{DeterministicPath, ExposureSpec, NoiseTraderSpec, SampledPath, ValidatedScenario};
use crate::matfun::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub enum BlockKind {
    /// Deterministic `ζ` with constant slope.
    Affine { slope: Vector },
    /// `dζ = a dt + dN`
    Abm { drift: Vector },
    /// `dζ = −κ ζ dt + dN`
    Ou { kappa: Matrix },
    /// `ψ_t = ψ_0 + ψ̇ t`
    ConstantRatePsi { rate: Vector },
    /// `dψ = κ_ψ (X − ψ) dt`; the `X` block follows immediately.
    TargetPsi { kappa_psi: f64 },
    /// `dX = −κ_X X dt + σ_X dW`
    TargetX { kappa_x: f64, sigma_x: f64 },
}

/// A `d`-dimensional block of the state starting at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBlock {
    pub start: usize,
    pub kind: BlockKind,
    /// Stream id of the Brownian driver, if the block is stochastic.
    pub driver: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct StateLayout {
    pub d: usize,
    pub dim: usize,
    pub generator: Matrix,
    pub initial: Vector,
    pub blocks: Vec<StateBlock>,
    zeta: Vec<Matrix>,
    zeta_offset: Vec<Option<(SampledPath, f64)>>,
    psi: Matrix,
    psi_dot: Matrix,
    mu_psi: Matrix,
}

impl StateLayout {
    pub fn new(scenario: &ValidatedScenario) -> Self {
        let d = scenario.d();
        let n = scenario.n_agents();
        let mut blocks = Vec::new();
        let mut initial = vec![1.0];
        // canonical source agent -> block start
        let mut zeta_block: Vec<Option<usize>> = vec![None; n];
        let mut zeta_offset = vec![None; n];

        for k in 0..n {
            let start = initial.len();
            let driver = Some(scenario.order[k] as u64);
            match &scenario.agents[k].exposure {
                ExposureSpec::Deterministic(DeterministicPath::Affine { initial: z0, slope }) => {
                    blocks.push(StateBlock {
                        start,
                        kind: BlockKind::Affine { slope: slope.clone() },
                        driver: None,
                    });
                    initial.extend(z0.iter());
                    zeta_block[k] = Some(start);
                }
                ExposureSpec::Abm { drift, initial: z0 } => {
                    blocks.push(StateBlock {
                        start,
                        kind: BlockKind::Abm { drift: drift.clone() },
                        driver,
                    });
                    initial.extend(z0.iter());
                    zeta_block[k] = Some(start);
                }
                ExposureSpec::Ou { kappa, initial: z0 } => {
                    blocks.push(StateBlock {
                        start,
                        kind: BlockKind::Ou { kappa: kappa.clone() },
                        driver,
                    });
                    initial.extend(z0.iter());
                    zeta_block[k] = Some(start);
                }
                ExposureSpec::Deterministic(DeterministicPath::Sampled(p)) => {
                    zeta_offset[k] = Some((p.clone(), 1.0));
                }
                ExposureSpec::Zero | ExposureSpec::MirrorOf { .. } => {}
            }
        }

        let mut psi_start = None;
        let mut x_start = None;
        match &scenario.noise {
            NoiseTraderSpec::None => {}
            NoiseTraderSpec::ConstantRate { psi_dot, psi_0 } => {
                let start = initial.len();
                blocks.push(StateBlock {
                    start,
                    kind: BlockKind::ConstantRatePsi { rate: psi_dot.clone() },
                    driver: None,
                });
                initial.extend(psi_0.iter());
                psi_start = Some(start);
            }
            NoiseTraderSpec::OuTarget {
                kappa_psi,
                kappa_x,
                sigma_x,
                psi_0,
                x_0,
            } => {
                let start = initial.len();
                blocks.push(StateBlock {
                    start,
                    kind: BlockKind::TargetPsi { kappa_psi: *kappa_psi },
                    driver: None,
                });
                initial.extend(psi_0.iter());
                blocks.push(StateBlock {
                    start: start + d,
                    kind: BlockKind::TargetX {
                        kappa_x: *kappa_x,
                        sigma_x: *sigma_x,
                    },
                    driver: Some(n as u64),
                });
                initial.extend(x_0.iter());
                psi_start = Some(start);
                x_start = Some(start + d);
            }
        }

        let dim = initial.len();
        let eye = Matrix::identity(d, d);
        let mut generator = Matrix::zeros(dim, dim);
        for b in &blocks {
            let s = b.start;
            match &b.kind {
                BlockKind::Affine { slope } => generator.view_mut((s, 0), (d, 1)).copy_from(slope),
                BlockKind::Abm { drift } => generator.view_mut((s, 0), (d, 1)).copy_from(drift),
                BlockKind::Ou { kappa } => generator.view_mut((s, s), (d, d)).copy_from(&(-kappa)),
                BlockKind::ConstantRatePsi { rate } => generator.view_mut((s, 0), (d, 1)).copy_from(rate),
                BlockKind::TargetPsi { kappa_psi } => {
                    generator.view_mut((s, s), (d, d)).copy_from(&(&eye * -kappa_psi));
                    generator.view_mut((s, s + d), (d, d)).copy_from(&(&eye * *kappa_psi));
                }
                BlockKind::TargetX { kappa_x, .. } => {
                    generator.view_mut((s, s), (d, d)).copy_from(&(&eye * -kappa_x));
                }
            }
        }

        let selector = |start: usize| {
            let mut m = Matrix::zeros(d, dim);
            m.view_mut((0, start), (d, d)).copy_from(&eye);
            m
        };
        let mut zeta = Vec::with_capacity(n);
        let mut offsets = Vec::with_capacity(n);
        for k in 0..n {
            let (src, sign) = scenario.exposure_source(k);
            zeta.push(match zeta_block[src] {
                Some(start) => selector(start) * sign,
                None => Matrix::zeros(d, dim),
            });
            offsets.push(zeta_offset[src].clone().map(|(p, _)| (p, sign)));
        }

        let (psi, psi_dot, mu_psi) = match (&scenario.noise, psi_start, x_start) {
            (NoiseTraderSpec::ConstantRate { .. }, Some(ps), _) => {
                (selector(ps), generator.rows(ps, d).into_owned(), Matrix::zeros(d, dim))
            }
            (NoiseTraderSpec::OuTarget { kappa_psi, kappa_x, .. }, Some(ps), Some(xs)) => {
                let sp = selector(ps);
                let sx = selector(xs);
                let pdot = (&sx - &sp) * *kappa_psi;
                let mu = &sp * kappa_psi.powi(2) - &sx * (kappa_psi * (kappa_psi + kappa_x));
                (sp, pdot, mu)
            }
            _ => (Matrix::zeros(d, dim), Matrix::zeros(d, dim), Matrix::zeros(d, dim)),
        };

        StateLayout {
            d,
            dim,
            generator,
            initial: Vector::from_vec(initial),
            blocks,
            zeta,
            zeta_offset: offsets,
            psi,
            psi_dot,
            mu_psi,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.zeta.len()
    }

    /// `d × dim` loading of `ζⁿ` (canonical index) on the state.
    pub fn zeta_loading(&self, n: usize) -> &Matrix {
        &self.zeta[n]
    }

    pub fn zeta_offset(&self, n: usize, t: f64) -> Option<Vector> {
        self.zeta_offset[n].as_ref().map(|(p, s)| p.eval(t) * *s)
    }

    /// Sampled deterministic path behind `ζⁿ` and its sign, if any.
    pub fn zeta_offset_path(&self, n: usize) -> Option<(&SampledPath, f64)> {
        self.zeta_offset[n].as_ref().map(|(p, s)| (p, *s))
    }

    pub fn has_offsets(&self) -> bool {
        self.zeta_offset.iter().any(Option::is_some)
    }

    pub fn zeta(&self, n: usize, t: f64, z: &Vector) -> Vector {
        let v = &self.zeta[n] * z;
        match self.zeta_offset(n, t) {
            Some(o) => v + o,
            None => v,
        }
    }

    pub fn psi_loading(&self) -> &Matrix {
        &self.psi
    }

    pub fn psi_dot_loading(&self) -> &Matrix {
        &self.psi_dot
    }

    pub fn mu_psi_loading(&self) -> &Matrix {
        &self.mu_psi
    }

    /// `true` when no block carries a Brownian driver with nonzero loading.
    pub fn is_deterministic(&self) -> bool {
        self.blocks.iter().all(|b| match b.kind {
            BlockKind::Abm { .. } | BlockKind::Ou { .. } => false,
            BlockKind::TargetX { sigma_x, .. } => sigma_x == 0.0,
            _ => true,
        })
    }

    /// Noise-free state at time `t`: `exp(Gen t) z_0`.
    pub fn mean_state(&self, t: f64) -> Vector {
        (&self.generator * t).exp() * &self.initial
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;
    use approx::assert_relative_eq;

    fn two_agents(e0: ExposureSpec, e1: ExposureSpec, noise: NoiseTraderSpec) -> ValidatedScenario {
        validate(&Scenario {
            market: MarketSpec {
                sigma_cov: Matrix::identity(1, 1),
                lambda_cost: Vector::from_element(1, 1.0),
                delta: 0.1,
                horizon: Horizon::Infinite,
            },
            agents: vec![
                AgentSpec { gamma: 1.0, exposure: e0 },
                AgentSpec { gamma: 2.0, exposure: e1 },
            ],
            noise,
            simulation: SimulationConfig::default(),
        })
        .unwrap()
    }

    fn one(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    #[test]
    fn abm_mirror_layout() {
        let v = two_agents(
            ExposureSpec::Abm {
                drift: one(-0.5),
                initial: one(0.2),
            },
            ExposureSpec::MirrorOf { agent: 0 },
            NoiseTraderSpec::None,
        );
        let s = StateLayout::new(&v);
        assert_eq!(s.dim, 2);
        assert_eq!(s.generator, Matrix::from_row_slice(2, 2, &[0.0, 0.0, -0.5, 0.0]));
        assert_eq!(s.blocks[0].driver, Some(0));
        let z = Vector::from_vec(vec![1.0, 0.3]);
        assert_eq!(s.zeta(0, 0.0, &z)[0], 0.3);
        assert_eq!(s.zeta(1, 0.0, &z)[0], -0.3);
        assert_relative_eq!(s.mean_state(2.0)[1], 0.2 - 1.0, epsilon = 1e-14);
        assert!(!s.is_deterministic());
    }

    #[test]
    fn gp_noise_loadings_match_dynamics() {
        let v = two_agents(
            ExposureSpec::Zero,
            ExposureSpec::Zero,
            NoiseTraderSpec::OuTarget {
                kappa_psi: 1.0,
                kappa_x: 2.0,
                sigma_x: 0.0,
                psi_0: one(0.3),
                x_0: one(0.1),
            },
        );
        let s = StateLayout::new(&v);
        assert_eq!(s.blocks.last().unwrap().driver, Some(2));
        let z = s.initial.clone();
        assert_relative_eq!((s.psi_loading() * &z)[0], 0.3);
        assert_relative_eq!((s.psi_dot_loading() * &z)[0], -0.2, epsilon = 1e-15);
        assert_relative_eq!((s.mu_psi_loading() * &z)[0], 0.0, epsilon = 1e-15);
        // μ^ψ is the drift of ψ̇
        let drift = s.psi_dot_loading() * &s.generator * &z;
        assert_relative_eq!(drift, s.mu_psi_loading() * &z, epsilon = 1e-15);
        assert!(s.is_deterministic());
    }

    #[test]
    fn constant_rate_and_sampled_offsets() {
        let path = SampledPath {
            times: vec![0.0, 1.0],
            values: vec![one(0.0), one(2.0)],
        };
        let v = two_agents(
            ExposureSpec::Deterministic(DeterministicPath::Sampled(path)),
            ExposureSpec::MirrorOf { agent: 0 },
            NoiseTraderSpec::ConstantRate {
                psi_dot: one(-0.2),
                psi_0: one(0.1),
            },
        );
        let s = StateLayout::new(&v);
        assert!(s.has_offsets());
        let z = s.mean_state(0.5);
        assert_relative_eq!((s.psi_loading() * &z)[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!((s.psi_dot_loading() * &z)[0], -0.2);
        assert_relative_eq!(s.zeta(0, 0.5, &z)[0], 1.0);
        assert_relative_eq!(s.zeta(1, 3.0, &z)[0], -2.0);
    }
}
