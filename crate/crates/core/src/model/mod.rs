//! Market, agent and noise-trader specifications, scenario validation, and
//! the stacked equilibrium system (`B`, `A`, `χ`).

mod schema;
pub mod state;

pub use schema::{load_scenario, parse_scenario, ScenarioFile};
pub use state::StateLayout;

use nalgebra::Cholesky;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matfun::{self, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

impl Horizon {
    pub fn is_finite(&self) -> bool {
        matches!(self, Horizon::Finite(_))
    }
}

/// Risky assets: covariance `Σ`, diagonal quadratic cost `Λ`, discount rate, horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    pub sigma_cov: Matrix,
    /// Diagonal of `Λ`.
    pub lambda_cost: Vector,
    pub delta: f64,
    pub horizon: Horizon,
}

impl MarketSpec {
    pub fn d(&self) -> usize {
        self.sigma_cov.nrows()
    }

    pub fn lambda_matrix(&self) -> Matrix {
        Matrix::from_diagonal(&self.lambda_cost)
    }

    /// `Λ⁻¹Σ/2`, the building block of every system matrix.
    pub fn half_cost_scaled_cov(&self) -> Matrix {
        let mut m = self.sigma_cov.clone();
        for (i, mut row) in m.row_iter_mut().enumerate() {
            row /= 2.0 * self.lambda_cost[i];
        }
        m
    }

    pub fn sigma_inv(&self) -> Result<Matrix> {
        matfun::inverse(&self.sigma_cov, "covariance matrix")
    }
}

/// Piecewise-linear path through `(times[i], values[i])`, held constant outside the knots.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    pub times: Vec<f64>,
    pub values: Vec<Vector>,
}

impl SampledPath {
    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    pub fn eval(&self, t: f64) -> Vector {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1].clone();
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        &self.values[i] * (1.0 - w) + &self.values[i + 1] * w
    }

    fn validate(&self, d: usize, field: &str) -> Result<()> {
        if self.times.is_empty() || self.times.len() != self.values.len() {
            return Err(Error::spec(field, "times and values must be non-empty and of equal length"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::spec(format!("{field}.times"), "must be strictly increasing"));
        }
        for (i, v) in self.values.iter().enumerate() {
            check_vec(v, d, &format!("{field}.values[{i}]"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeterministicPath {
    /// `t ↦ initial + slope·t`
    Affine { initial: Vector, slope: Vector },
    Sampled(SampledPath),
}

/// Law of an agent's endowment exposure `ζⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub enum ExposureSpec {
    Zero,
    Deterministic(DeterministicPath),
    /// `ζ_t = ζ_0 + drift·t + N_t` with a standard `d`-dimensional Brownian motion `N`.
    Abm { drift: Vector, initial: Vector },
    /// `dζ_t = −κ ζ_t dt + dN_t`.
    Ou { kappa: Matrix, initial: Vector },
    /// `ζⁿ = −ζ^agent` (index in input order).
    MirrorOf { agent: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub gamma: f64,
    pub exposure: ExposureSpec,
}

/// Exogenous noise-trader demand `ψ` with rate `ψ̇` and rate drift `μ^ψ`.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseTraderSpec {
    None,
    ConstantRate { psi_dot: Vector, psi_0: Vector },
    /// `dψ = κ_ψ(X − ψ)dt`, `dX = −κ_X X dt + σ_X dW^X`.
    OuTarget {
        kappa_psi: f64,
        kappa_x: f64,
        sigma_x: f64,
        psi_0: Vector,
        x_0: Vector,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub dt: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            dt: 1e-3,
            t_max: 20.0,
            n_paths: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub market: MarketSpec,
    pub agents: Vec<AgentSpec>,
    pub noise: NoiseTraderSpec,
    pub simulation: SimulationConfig,
}

/// A scenario after validation, with agents in canonical order (max `γ` last).
///
/// `order[k]` is the input index of canonical agent `k`. `MirrorOf` indices
/// in `agents` are rewritten to canonical indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedScenario {
    pub market: MarketSpec,
    pub agents: Vec<AgentSpec>,
    pub noise: NoiseTraderSpec,
    pub simulation: SimulationConfig,
    pub order: Vec<usize>,
}

impl ValidatedScenario {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn d(&self) -> usize {
        self.market.d()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.gamma).collect()
    }

    /// Canonical index of the agent that owns the exposure law of `n`, and the sign.
    pub fn exposure_source(&self, n: usize) -> (usize, f64) {
        let mut idx = n;
        let mut sign = 1.0;
        while let ExposureSpec::MirrorOf { agent } = self.agents[idx].exposure {
            idx = agent;
            sign = -sign;
        }
        (idx, sign)
    }

    /// Inverse of `order`: canonical index of input agent `i`.
    pub fn canonical_index(&self, input_index: usize) -> usize {
        self.order.iter().position(|&o| o == input_index).unwrap()
    }

    pub fn is_homogeneous(&self) -> bool {
        let g = self.agents[0].gamma;
        self.agents.iter().all(|a| a.gamma == g)
    }
}

fn check_vec(v: &Vector, d: usize, field: &str) -> Result<()> {
    if v.len() != d {
        return Err(Error::spec(field, format!("expected length {d}, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::spec(field, "entries must be finite"));
    }
    Ok(())
}

fn check_positive(x: f64, field: &str) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::spec(field, format!("must be positive and finite, got {x}")));
    }
    Ok(())
}

/// Validates a scenario and moves the (last) most risk-averse agent to the end.
pub fn validate(scenario: &Scenario) -> Result<ValidatedScenario> {
    let mut market = scenario.market.clone();
    let d = market.d();
    if d == 0 {
        return Err(Error::spec("market.sigma_cov", "need at least one risky asset"));
    }
    if market.sigma_cov.ncols() != d {
        return Err(Error::spec("market.sigma_cov", "must be square"));
    }
    if market.sigma_cov.iter().any(|x| !x.is_finite()) {
        return Err(Error::spec("market.sigma_cov", "entries must be finite"));
    }
    let asym = (&market.sigma_cov - market.sigma_cov.transpose()).amax();
    if asym > 1e-12 {
        return Err(Error::spec("market.sigma_cov", format!("not symmetric (max asymmetry {asym:e})")));
    }
    market.sigma_cov = (&market.sigma_cov + market.sigma_cov.transpose()) * 0.5;
    if Cholesky::new(market.sigma_cov.clone()).is_none() {
        return Err(Error::spec("market.sigma_cov", "not positive definite"));
    }
    if market.lambda_cost.len() != d {
        return Err(Error::spec(
            "market.lambda_cost",
            format!("expected {d} diagonal entries, got {}", market.lambda_cost.len()),
        ));
    }
    for (i, &l) in market.lambda_cost.iter().enumerate() {
        check_positive(l, &format!("market.lambda_cost[{i}]"))?;
    }
    if !(market.delta >= 0.0) || !market.delta.is_finite() {
        return Err(Error::spec("market.delta", "discount rate must be finite and >= 0"));
    }
    match market.horizon {
        Horizon::Finite(t) => check_positive(t, "market.horizon.finite")?,
        Horizon::Infinite => {
            if market.delta <= 0.0 {
                return Err(Error::spec(
                    "market.delta",
                    "an infinite horizon needs a strictly positive discount rate",
                ));
            }
        }
    }

    let n = scenario.agents.len();
    if n == 0 {
        return Err(Error::spec("agents", "need at least one agent"));
    }
    for (i, a) in scenario.agents.iter().enumerate() {
        let field = format!("agents[{i}]");
        check_positive(a.gamma, &format!("{field}.gamma"))?;
        validate_exposure(&a.exposure, d, n, &format!("{field}.exposure"))?;
    }
    for i in 0..n {
        let mut seen = vec![false; n];
        let mut idx = i;
        while let ExposureSpec::MirrorOf { agent } = scenario.agents[idx].exposure {
            if seen[idx] {
                return Err(Error::spec(format!("agents[{i}].exposure"), "mirror_of chain is cyclic"));
            }
            seen[idx] = true;
            idx = agent;
        }
    }

    match &scenario.noise {
        NoiseTraderSpec::None => {}
        NoiseTraderSpec::ConstantRate { psi_dot, psi_0 } => {
            check_vec(psi_dot, d, "noise.psi_dot")?;
            check_vec(psi_0, d, "noise.psi_0")?;
        }
        NoiseTraderSpec::OuTarget {
            kappa_psi,
            kappa_x,
            sigma_x,
            psi_0,
            x_0,
        } => {
            check_positive(*kappa_psi, "noise.kappa_psi")?;
            check_positive(*kappa_x, "noise.kappa_x")?;
            if !(*sigma_x >= 0.0) || !sigma_x.is_finite() {
                return Err(Error::spec("noise.sigma_x", "must be finite and >= 0"));
            }
            check_vec(psi_0, d, "noise.psi_0")?;
            check_vec(x_0, d, "noise.x_0")?;
        }
    }

    let sim = scenario.simulation;
    check_positive(sim.dt, "simulation.dt")?;
    check_positive(sim.t_max, "simulation.t_max")?;

    // stable tie-break: the last maximiser in input order becomes agent N
    let gmax = scenario.agents.iter().map(|a| a.gamma).fold(f64::MIN, f64::max);
    let last = scenario.agents.iter().rposition(|a| a.gamma == gmax).unwrap();
    let mut order: Vec<usize> = (0..n).filter(|&i| i != last).collect();
    order.push(last);
    let canonical_of = |input: usize| order.iter().position(|&o| o == input).unwrap();
    let agents = order
        .iter()
        .map(|&i| {
            let mut a = scenario.agents[i].clone();
            if let ExposureSpec::MirrorOf { agent } = a.exposure {
                a.exposure = ExposureSpec::MirrorOf {
                    agent: canonical_of(agent),
                };
            }
            a
        })
        .collect();

    Ok(ValidatedScenario {
        market,
        agents,
        noise: scenario.noise.clone(),
        simulation: sim,
        order,
    })
}

fn validate_exposure(e: &ExposureSpec, d: usize, n_agents: usize, field: &str) -> Result<()> {
    match e {
        ExposureSpec::Zero => Ok(()),
        ExposureSpec::Deterministic(DeterministicPath::Affine { initial, slope }) => {
            check_vec(initial, d, &format!("{field}.initial"))?;
            check_vec(slope, d, &format!("{field}.slope"))
        }
        ExposureSpec::Deterministic(DeterministicPath::Sampled(p)) => p.validate(d, field),
        ExposureSpec::Abm { drift, initial } => {
            check_vec(drift, d, &format!("{field}.drift"))?;
            check_vec(initial, d, &format!("{field}.initial"))
        }
        ExposureSpec::Ou { kappa, initial } => {
            check_vec(initial, d, &format!("{field}.initial"))?;
            if kappa.nrows() != d || kappa.ncols() != d {
                return Err(Error::spec(format!("{field}.kappa"), format!("must be {d}x{d}")));
            }
            let spec = matfun::spectrum(kappa)
                .map_err(|e| Error::spec(format!("{field}.kappa"), e.to_string()))?;
            if spec.eigenvalues.iter().any(|z| !(z.re > 0.0)) {
                return Err(Error::spec(
                    format!("{field}.kappa"),
                    "mean-reversion matrix needs eigenvalues with positive real part",
                ));
            }
            Ok(())
        }
        ExposureSpec::MirrorOf { agent } => {
            if *agent >= n_agents {
                return Err(Error::spec(
                    format!("{field}.agent"),
                    format!("index {agent} out of range for {n_agents} agents"),
                ));
            }
            Ok(())
        }
    }
}

/// Stacked coefficients of the equilibrium FBSDE for agents `1..N−1`.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    /// `d(N−1) × d(N−1)`
    pub bmat: Matrix,
    /// `d(N−1) × dN`
    pub amat: Matrix,
    /// `Δ = B + (δ²/4)I`
    pub delta_mat: Matrix,
    pub agent_order: Vec<usize>,
}

impl SystemMatrices {
    pub fn dim(&self) -> usize {
        self.bmat.nrows()
    }
}

/// Builds `B`, `A` and `Δ`; fails if `B` does not have a real positive spectrum.
pub fn assemble_system(scenario: &ValidatedScenario) -> Result<SystemMatrices> {
    let d = scenario.d();
    let n = scenario.n_agents();
    let l = scenario.market.half_cost_scaled_cov();
    let gammas = scenario.gammas();
    let g_last = gammas[n - 1];
    let nf = n as f64;
    let ell = d * (n - 1);
    let mut bmat = Matrix::zeros(ell, ell);
    let mut amat = Matrix::zeros(ell, d * n);
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            let mut c = (g_last - gammas[j]) / nf;
            if i == j {
                c += gammas[i];
            }
            bmat.view_mut((i * d, j * d), (d, d)).copy_from(&(&l * c));
        }
        for j in 0..n {
            let mut c = gammas[j] / nf;
            if i == j {
                c -= gammas[i];
            }
            amat.view_mut((i * d, j * d), (d, d)).copy_from(&(&l * c));
        }
    }
    let delta = scenario.market.delta;
    let delta_mat = &bmat + Matrix::identity(ell, ell) * (delta * delta / 4.0);
    let spec = matfun::spectrum(&bmat)?;
    if !spec.all_real_positive {
        return Err(Error::Spectrum(format!(
            "system matrix B lost its real positive spectrum (min real {:e}, max |imag| {:e})",
            spec.min_real(),
            spec.max_abs_imag()
        )));
    }
    Ok(SystemMatrices {
        bmat,
        amat,
        delta_mat,
        agent_order: scenario.order.clone(),
    })
}

/// `χ_t`: `N−1` stacked copies of `(1/N)((γ^N Λ⁻¹Σ/2)ψ + δψ̇ − μ^ψ)`.
pub fn chi(scenario: &ValidatedScenario, psi: &Vector, psi_dot: &Vector, mu_psi: &Vector) -> Result<Vector> {
    let d = scenario.d();
    for (v, name) in [(psi, "psi"), (psi_dot, "psi_dot"), (mu_psi, "mu_psi")] {
        if v.len() != d {
            return Err(Error::dim(format!("chi: {name}"), d, v.len()));
        }
    }
    let n = scenario.n_agents();
    let g_last = scenario.agents[n - 1].gamma;
    let l = scenario.market.half_cost_scaled_cov();
    let block = ((&l * psi) * g_last + psi_dot * scenario.market.delta - mu_psi) / n as f64;
    let mut out = Vector::zeros(d * (n - 1));
    for i in 0..n - 1 {
        out.rows_mut(i * d, d).copy_from(&block);
    }
    Ok(out)
}

/// Random valid market and risk aversions for property tests and benchmarks:
/// `γ ~ U[0.5, 5]`, `Σ = MMᵀ/d + 0.1 I` with Gaussian `M`, `λ ~ U[0.1, 2]`.
pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R, d: usize, n_agents: usize) -> ValidatedScenario {
    let m = Matrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sigma = (&m * m.transpose()) / d as f64 + Matrix::identity(d, d) * 0.1;
    let lambda = Vector::from_fn(d, |_, _| rng.random_range(0.1..2.0));
    let agents = (0..n_agents)
        .map(|_| AgentSpec {
            gamma: rng.random_range(0.5..5.0),
            exposure: ExposureSpec::Zero,
        })
        .collect();
    let scenario = Scenario {
        market: MarketSpec {
            sigma_cov: sigma,
            lambda_cost: lambda,
            delta: rng.random_range(0.0..0.5),
            horizon: Horizon::Finite(1.0),
        },
        agents,
        noise: NoiseTraderSpec::None,
        simulation: SimulationConfig::default(),
    };
    validate(&scenario).expect("random scenario is valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_market(sigma: f64, lambda: f64, delta: f64, horizon: Horizon) -> MarketSpec {
        MarketSpec {
            sigma_cov: Matrix::from_element(1, 1, sigma),
            lambda_cost: Vector::from_element(1, lambda),
            delta,
            horizon,
        }
    }

    fn agents(gammas: &[f64]) -> Vec<AgentSpec> {
        gammas
            .iter()
            .map(|&g| AgentSpec {
                gamma: g,
                exposure: ExposureSpec::Zero,
            })
            .collect()
    }

    fn scenario(market: MarketSpec, gammas: &[f64]) -> Scenario {
        Scenario {
            market,
            agents: agents(gammas),
            noise: NoiseTraderSpec::None,
            simulation: SimulationConfig::default(),
        }
    }

    #[test]
    fn validate_reorders_max_gamma_last() {
        let v = validate(&scenario(scalar_market(1.0, 1.0, 0.1, Horizon::Infinite), &[2.0, 1.0])).unwrap();
        assert_eq!(v.gammas(), vec![1.0, 2.0]);
        assert_eq!(v.order, vec![1, 0]);
    }

    #[test]
    fn validate_tie_break_takes_last_maximiser() {
        let v = validate(&scenario(scalar_market(1.0, 1.0, 0.1, Horizon::Infinite), &[3.0, 1.0, 3.0, 2.0])).unwrap();
        assert_eq!(v.order, vec![0, 1, 3, 2]);
    }

    #[test]
    fn validate_accepts_zero_discount_on_finite_horizon() {
        let market = MarketSpec {
            sigma_cov: Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
            lambda_cost: Vector::from_vec(vec![0.1, 0.2]),
            delta: 0.0,
            horizon: Horizon::Finite(1.0),
        };
        assert!(validate(&scenario(market, &[1.0, 2.0])).is_ok());
    }

    #[test]
    fn validate_rejects_bad_inputs() {
        let err = validate(&scenario(scalar_market(1.0, 1.0, 0.0, Horizon::Infinite), &[1.0])).unwrap_err();
        assert!(matches!(err, Error::Spec { ref field, .. } if field == "market.delta"));

        let err = validate(&scenario(scalar_market(-1.0, 1.0, 0.1, Horizon::Infinite), &[1.0])).unwrap_err();
        assert!(matches!(err, Error::Spec { ref field, .. } if field == "market.sigma_cov"));

        let err = validate(&scenario(scalar_market(1.0, 0.0, 0.1, Horizon::Infinite), &[1.0])).unwrap_err();
        assert!(matches!(err, Error::Spec { ref field, .. } if field == "market.lambda_cost[0]"));

        let err = validate(&scenario(scalar_market(1.0, 1.0, 0.1, Horizon::Infinite), &[])).unwrap_err();
        assert!(matches!(err, Error::Spec { ref field, .. } if field == "agents"));

        let mut s = scenario(scalar_market(1.0, 1.0, 0.1, Horizon::Infinite), &[1.0, 2.0]);
        s.agents[0].exposure = ExposureSpec::MirrorOf { agent: 1 };
        s.agents[1].exposure = ExposureSpec::MirrorOf { agent: 0 };
        assert!(validate(&s).is_err());
    }

    #[test]
    fn validate_symmetrizes_tiny_asymmetry() {
        let market = MarketSpec {
            sigma_cov: Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5 + 1e-14, 1.0]),
            lambda_cost: Vector::from_vec(vec![1.0, 1.0]),
            delta: 0.1,
            horizon: Horizon::Infinite,
        };
        let v = validate(&scenario(market.clone(), &[1.0])).unwrap();
        assert_eq!(v.market.sigma_cov, v.market.sigma_cov.transpose());
        let mut bad = market;
        bad.sigma_cov[(1, 0)] = 0.6;
        assert!(validate(&scenario(bad, &[1.0])).is_err());
    }

    #[test]
    fn mirror_indices_follow_reordering() {
        let mut s = scenario(scalar_market(1.0, 1.0, 0.1, Horizon::Infinite), &[2.0, 1.0]);
        s.agents[0].exposure = ExposureSpec::Abm {
            drift: Vector::from_element(1, -0.5),
            initial: Vector::zeros(1),
        };
        s.agents[1].exposure = ExposureSpec::MirrorOf { agent: 0 };
        let v = validate(&s).unwrap();
        assert_eq!(v.agents[0].exposure, ExposureSpec::MirrorOf { agent: 1 });
        assert_eq!(v.exposure_source(0), (1, -1.0));
        assert_eq!(v.exposure_source(1), (1, 1.0));
    }

    #[test]
    fn assemble_three_agent_scalar_system() {
        let v = validate(&scenario(scalar_market(2.0, 1.0, 0.0, Horizon::Finite(1.0)), &[1.0, 2.0, 3.0])).unwrap();
        let sys = assemble_system(&v).unwrap();
        let expected = Matrix::from_row_slice(2, 2, &[5.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 7.0 / 3.0]);
        assert_relative_eq!(sys.bmat, expected, epsilon = 1e-14);
        let eig = matfun::spectrum(&sys.bmat).unwrap();
        let r = eig.sorted_real();
        assert_relative_eq!(r[0], 1.4226, epsilon = 1e-4);
        assert_relative_eq!(r[1], 2.5774, epsilon = 1e-4);
    }

    #[test]
    fn assemble_two_agent_scalar_system() {
        let v = validate(&scenario(scalar_market(1.0, 1.0, 0.1, Horizon::Infinite), &[1.0, 2.0])).unwrap();
        let sys = assemble_system(&v).unwrap();
        assert_relative_eq!(sys.bmat[(0, 0)], 0.75, epsilon = 1e-15);
        assert_relative_eq!(sys.amat[(0, 0)], -0.25, epsilon = 1e-15);
        assert_relative_eq!(sys.amat[(0, 1)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(sys.delta_mat[(0, 0)], 0.7525, epsilon = 1e-15);
        // B ξ = A ζ with ζ = (0.3, −0.3) gives ξ = −ζ¹
        let xi = (sys.amat[(0, 0)] * 0.3 + sys.amat[(0, 1)] * -0.3) / sys.bmat[(0, 0)];
        assert_relative_eq!(xi, -0.3, epsilon = 1e-15);
    }

    #[test]
    fn chi_examples() {
        let v = validate(&scenario(scalar_market(1.0, 1.0, 0.1, Horizon::Infinite), &[1.0, 2.0])).unwrap();
        let one = |x| Vector::from_element(1, x);
        assert_eq!(chi(&v, &one(0.0), &one(0.0), &one(0.0)).unwrap(), Vector::zeros(1));
        let c = chi(&v, &one(0.1), &one(-0.2), &one(0.0)).unwrap();
        assert_relative_eq!(c[0], 0.04, epsilon = 1e-15);

        let v3 = validate(&scenario(scalar_market(1.0, 1.0, 0.1, Horizon::Infinite), &[1.0, 2.0, 3.0])).unwrap();
        let c = chi(&v3, &one(0.1), &one(-0.2), &one(0.0)).unwrap();
        assert_eq!(c.len(), 2);
        assert_relative_eq!(c[0], 0.13 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(c[1], 0.13 / 3.0, epsilon = 1e-15);
        assert!(chi(&v3, &Vector::zeros(2), &one(0.0), &one(0.0)).is_err());
    }

    #[test]
    fn homogeneous_b_is_block_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut v = random_scenario(&mut rng, 2, 4);
        for a in &mut v.agents {
            a.gamma = 1.7;
        }
        let sys = assemble_system(&v).unwrap();
        let block = v.market.half_cost_scaled_cov() * 1.7;
        for i in 0..3 {
            for j in 0..3 {
                let b = sys.bmat.view((2 * i, 2 * j), (2, 2)).into_owned();
                if i == j {
                    assert_relative_eq!(b, block, epsilon = 1e-14);
                } else {
                    assert_eq!(b, Matrix::zeros(2, 2));
                }
            }
        }
    }

    #[test]
    fn relabeling_first_agents_permutes_b_and_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = random_scenario(&mut rng, 2, 4);
        let sys = assemble_system(&v).unwrap();
        let d = 2;
        let perm = [2usize, 0, 1];
        let mut w = v.clone();
        for (k, &p) in perm.iter().enumerate() {
            w.agents[k] = v.agents[p].clone();
        }
        let sys_w = assemble_system(&w).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let lhs = sys_w.bmat.view((i * d, j * d), (d, d)).into_owned();
                let rhs = sys.bmat.view((perm[i] * d, perm[j] * d), (d, d)).into_owned();
                assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
            }
            for j in 0..3 {
                let lhs = sys_w.amat.view((i * d, j * d), (d, d)).into_owned();
                let rhs = sys.amat.view((perm[i] * d, perm[j] * d), (d, d)).into_owned();
                assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn b_has_real_positive_spectrum(seed in any::<u64>(), d in 1usize..=3, n in 2usize..=5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_scenario(&mut rng, d, n);
            let sys = assemble_system(&v).unwrap();
            let spec = matfun::spectrum(&sys.bmat).unwrap();
            prop_assert!(spec.all_real_positive);
            // Δ eigenvalues sit above δ²/4
            let dspec = matfun::spectrum(&sys.delta_mat).unwrap();
            let floor = v.market.delta.powi(2) / 4.0;
            prop_assert!(dspec.min_real() > floor - 1e-12);
        }
    }
}
