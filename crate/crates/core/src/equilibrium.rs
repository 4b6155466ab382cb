//! Frictionless and frictional equilibria, liquidity premia, and the closed-form
//! OU coefficients of the two-agent mirrored examples.

use crate::error::{Error, Result};
use crate::fbsde::{FbsdeProblem, FeedbackLaw, LinearTarget, OffsetPath};
use crate::grid::TimeGrid;
use crate::matfun::{self, Matrix, Vector};
use crate::model::{
    assemble_system, ExposureSpec, Horizon, NoiseTraderSpec, StateLayout, SystemMatrices, ValidatedScenario,
};
use crate::sim::ScenarioPath;

/// `μ = Σ(Σζⁿ − ψ) / Σ(1/γⁿ)`
pub fn frictionless_return(zetas: &[Vector], psi: &Vector, gammas: &[f64], sigma: &Matrix) -> Result<Vector> {
    let d = sigma.nrows();
    if zetas.len() != gammas.len() {
        return Err(Error::dim("frictionless return: agents", gammas.len(), zetas.len()));
    }
    if psi.len() != d {
        return Err(Error::dim("frictionless return: psi", d, psi.len()));
    }
    let mut total = -psi;
    for z in zetas {
        if z.len() != d {
            return Err(Error::dim("frictionless return: zeta", d, z.len()));
        }
        total += z;
    }
    let tol: f64 = gammas.iter().map(|g| 1.0 / g).sum();
    Ok(sigma * total / tol)
}

/// Merton portfolio `φⁿ = Σ⁻¹μ/γⁿ − ζⁿ`.
pub fn frictionless_strategy(mu: &Vector, zeta: &Vector, gamma: f64, sigma: &Matrix) -> Result<Vector> {
    let d = sigma.nrows();
    if mu.len() != d || zeta.len() != d {
        return Err(Error::dim("frictionless strategy", d, mu.len().min(zeta.len())));
    }
    let m = matfun::solve(sigma, &Matrix::from_column_slice(d, 1, mu.as_slice()), "covariance matrix")?;
    Ok(m.column(0) / gamma - zeta)
}

/// `μ^ψ = κ_ψ² ψ − κ_ψ(κ_ψ + κ_X) X`
pub fn gp_noise_mu_psi(kappa_psi: f64, kappa_x: f64, psi: &Vector, x: &Vector) -> Vector {
    psi * kappa_psi.powi(2) - x * (kappa_psi * (kappa_psi + kappa_x))
}

/// `ψ̇ = κ_ψ(X − ψ)`
pub fn gp_noise_psi_dot(kappa_psi: f64, psi: &Vector, x: &Vector) -> Vector {
    (x - psi) * kappa_psi
}

/// Equilibrium quantities along one path, one column per grid point.
/// Per-agent vectors are in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumPath {
    pub grid: TimeGrid,
    pub mu_frictionless: Matrix,
    pub mu_lambda: Matrix,
    pub liqprem: Matrix,
    /// `(Σ/N) Σ_n (γⁿ − γ̄)(φ^{Λ,n} − φ̄ⁿ)`
    pub liqprem_covariance: Matrix,
    /// `(2Λ/N)(μ^ψ − δψ̇)`
    pub liqprem_noise: Matrix,
    pub phi: Vec<Matrix>,
    pub phi_dot: Vec<Matrix>,
    pub phi_frictionless: Vec<Matrix>,
    pub zeta: Vec<Matrix>,
    pub psi: Matrix,
    pub psi_dot: Matrix,
    pub mu_psi: Matrix,
    /// `max |Σ_n φⁿ + ψ|`
    pub clearing_residual: f64,
}

/// Liquidity premium and its two components.
#[derive(Debug, Clone, PartialEq)]
pub struct LiquidityPremium {
    pub total: Matrix,
    pub covariance: Matrix,
    pub noise: Matrix,
}

/// `LiPr = μ^Λ − μ` with its covariance and noise-trading components.
pub fn liquidity_premium(
    scenario: &ValidatedScenario,
    mu_lambda: &Matrix,
    mu_frictionless: &Matrix,
    phi: &[Matrix],
    phi_frictionless: &[Matrix],
    mu_psi: &Matrix,
    psi_dot: &Matrix,
) -> Result<LiquidityPremium> {
    let (rows, cols) = mu_lambda.shape();
    if mu_frictionless.shape() != (rows, cols) {
        return Err(Error::Grid("frictional and frictionless returns live on different grids".into()));
    }
    if phi.iter().chain(phi_frictionless).any(|p| p.shape() != (rows, cols)) {
        return Err(Error::Grid("strategy paths live on a different grid".into()));
    }
    let n = phi.len() as f64;
    // phi is in input order here
    let gammas: Vec<f64> = (0..phi.len())
        .map(|i| scenario.agents[scenario.canonical_index(i)].gamma)
        .collect();
    let gbar = gammas.iter().sum::<f64>() / n;
    let mut acc = Matrix::zeros(rows, cols);
    for ((p, pf), g) in phi.iter().zip(phi_frictionless).zip(&gammas) {
        acc += (p - pf) * (g - gbar);
    }
    let covariance = &scenario.market.sigma_cov * acc / n;
    let noise = noise_term(scenario, mu_psi, psi_dot);
    Ok(LiquidityPremium {
        total: mu_lambda - mu_frictionless,
        covariance,
        noise,
    })
}

fn noise_term(scenario: &ValidatedScenario, mu_psi: &Matrix, psi_dot: &Matrix) -> Matrix {
    let n = scenario.n_agents() as f64;
    let mut out = mu_psi - psi_dot * scenario.market.delta;
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= 2.0 * scenario.market.lambda_cost[i] / n;
    }
    out
}

/// Precomputed equilibrium engine for one scenario and grid.
#[derive(Debug, Clone)]
pub struct EquilibriumSolver {
    scenario: ValidatedScenario,
    layout: StateLayout,
    grid: TimeGrid,
    system: Option<SystemMatrices>,
    problem: Option<FbsdeProblem>,
    law: Option<FeedbackLaw>,
}

impl EquilibriumSolver {
    pub fn new(scenario: &ValidatedScenario, grid: &TimeGrid) -> Result<Self> {
        if let Horizon::Finite(t) = scenario.market.horizon {
            if (grid.t_end() - t).abs() > 1e-9 * t.max(1.0) {
                return Err(Error::Grid(format!("grid must span [0, {t}] for a finite horizon")));
            }
        }
        let layout = StateLayout::new(scenario);
        let n = scenario.n_agents();
        if n < 2 {
            return Ok(EquilibriumSolver {
                scenario: scenario.clone(),
                layout,
                grid: *grid,
                system: None,
                problem: None,
                law: None,
            });
        }
        let d = scenario.d();
        let m = layout.dim;
        let system = assemble_system(scenario)?;
        let ell = system.dim();

        // stacked exposures Z (dN × m) and the χ loading (ℓ × m)
        let mut zmat = Matrix::zeros(d * n, m);
        for k in 0..n {
            zmat.view_mut((k * d, 0), (d, m)).copy_from(layout.zeta_loading(k));
        }
        let lh = scenario.market.half_cost_scaled_cov();
        let g_last = scenario.agents[n - 1].gamma;
        let chi_block = (&lh * layout.psi_loading() * g_last + layout.psi_dot_loading() * scenario.market.delta
            - layout.mu_psi_loading())
            / n as f64;
        let mut chi = Matrix::zeros(ell, m);
        for k in 0..n - 1 {
            chi.view_mut((k * d, 0), (d, m)).copy_from(&chi_block);
        }
        // ξ = B⁻¹(Aζ − χ)
        let loading = matfun::solve(&system.bmat, &(&system.amat * zmat - chi), "B")?;
        let mut offset = OffsetPath::default();
        for k in 0..n {
            if let Some((p, sign)) = layout.zeta_offset_path(k) {
                let a_k = system.amat.columns(k * d, d) * sign;
                offset.push(matfun::solve(&system.bmat, &a_k, "B")?, p.clone());
            }
        }
        let problem = FbsdeProblem {
            bmat: system.bmat.clone(),
            delta: scenario.market.delta,
            horizon: scenario.market.horizon,
            target: LinearTarget {
                loading,
                generator: layout.generator.clone(),
                offset,
            },
        };
        let law = FeedbackLaw::new(&problem, grid)?;
        Ok(EquilibriumSolver {
            scenario: scenario.clone(),
            layout,
            grid: *grid,
            system: Some(system),
            problem: Some(problem),
            law: Some(law),
        })
    }

    pub fn scenario(&self) -> &ValidatedScenario {
        &self.scenario
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `None` for a single agent.
    pub fn system(&self) -> Option<&SystemMatrices> {
        self.system.as_ref()
    }

    /// The stacked FBSDE for agents `1..N−1`, if `N ≥ 2`.
    pub fn problem(&self) -> Option<&FbsdeProblem> {
        self.problem.as_ref()
    }

    pub fn law(&self) -> Option<&FeedbackLaw> {
        self.law.as_ref()
    }

    /// Stacked target `ξ` along a path (`ℓ × len`).
    pub fn target_path(&self, path: &ScenarioPath) -> Option<Matrix> {
        self.problem.as_ref().map(|p| {
            let mut x = &p.target.loading * &path.states;
            if !p.target.offset.is_empty() {
                for k in 0..x.ncols() {
                    let mut c = x.column_mut(k);
                    c += p.target.offset.eval(self.grid.t(k), p.dim());
                }
            }
            x
        })
    }

    pub fn solve(&self, path: &ScenarioPath) -> Result<EquilibriumPath> {
        if path.grid != self.grid {
            return Err(Error::Grid("path and solver grids differ".into()));
        }
        let s = &self.scenario;
        let (d, n, len) = (s.d(), s.n_agents(), self.grid.len());
        let gammas = s.gammas();
        let g_last = gammas[n - 1];
        let nf = n as f64;
        let sigma = &s.market.sigma_cov;

        let mut phi = Vec::with_capacity(n);
        let mut phi_dot = Vec::with_capacity(n);
        if let Some(law) = &self.law {
            let strat = law.solve_path(&path.states)?;
            for k in 0..n - 1 {
                phi.push(strat.phi.rows(k * d, d).into_owned());
                phi_dot.push(strat.phi_dot.rows(k * d, d).into_owned());
            }
        }
        // agent N clears the market
        let mut last = -&path.psi;
        let mut last_dot = -&path.psi_dot;
        for k in 0..n - 1 {
            last -= &phi[k];
            last_dot -= &phi_dot[k];
        }
        phi.push(last);
        phi_dot.push(last_dot);

        let mut acc = &path.psi * (-g_last / nf);
        for k in 0..n {
            if k < n - 1 {
                acc += &phi[k] * ((gammas[k] - g_last) / nf);
            }
            acc += &path.zeta[k] * (gammas[k] / nf);
        }
        let noise = noise_term(s, &path.mu_psi, &path.psi_dot);
        let mu_lambda = sigma * acc + &noise;

        let mut total = -&path.psi;
        for z in &path.zeta {
            total += z;
        }
        let tol: f64 = gammas.iter().map(|g| 1.0 / g).sum();
        let mu_frictionless = sigma * total / tol;
        let sinv_mu = matfun::solve(sigma, &mu_frictionless, "covariance matrix")?;
        let phi_frictionless: Vec<Matrix> = (0..n).map(|k| &sinv_mu / gammas[k] - &path.zeta[k]).collect();

        let mut clearing = path.psi.clone();
        for p in &phi {
            clearing += p;
        }
        let clearing_residual = clearing.amax();

        // report in input order
        let reorder = |v: Vec<Matrix>| -> Vec<Matrix> {
            let mut out = vec![Matrix::zeros(d, len); n];
            for (k, m) in v.into_iter().enumerate() {
                out[s.order[k]] = m;
            }
            out
        };
        let phi = reorder(phi);
        let phi_dot = reorder(phi_dot);
        let phi_frictionless = reorder(phi_frictionless);
        let zeta = reorder(path.zeta.clone());
        let lp = liquidity_premium(
            s,
            &mu_lambda,
            &mu_frictionless,
            &phi,
            &phi_frictionless,
            &path.mu_psi,
            &path.psi_dot,
        )?;
        Ok(EquilibriumPath {
            grid: self.grid,
            mu_frictionless,
            mu_lambda,
            liqprem: lp.total,
            liqprem_covariance: lp.covariance,
            liqprem_noise: lp.noise,
            phi,
            phi_dot,
            phi_frictionless,
            zeta,
            psi: path.psi.clone(),
            psi_dot: path.psi_dot.clone(),
            mu_psi: path.mu_psi.clone(),
            clearing_residual,
        })
    }
}

/// One-shot solve of a single path.
pub fn solve_equilibrium(scenario: &ValidatedScenario, path: &ScenarioPath) -> Result<EquilibriumPath> {
    EquilibriumSolver::new(scenario, &path.grid)?.solve(path)
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeanLevel {
    Constant(Vector),
    /// Applied to the first agent's exposure `ζ¹_t`.
    Linear(Matrix),
}

/// `dμ^Λ = speed (mean − μ^Λ) dt + vol dN`.
#[derive(Debug, Clone, PartialEq)]
pub struct OUCoefficients {
    pub speed: Matrix,
    pub mean_level: MeanLevel,
    pub vol: Matrix,
}

fn mirrored_speed(gamma1: f64, gamma2: f64, delta: f64, lambda: &Vector, sigma: &Matrix) -> Result<(Matrix, Matrix)> {
    let d = sigma.nrows();
    if lambda.len() != d {
        return Err(Error::spec("market.lambda_cost", format!("expected {d} entries")));
    }
    if !(delta > 0.0) {
        return Err(Error::spec("market.delta", "the closed forms need a strictly positive discount rate"));
    }
    if !(gamma1 > 0.0 && gamma2 > 0.0) {
        return Err(Error::spec("agents.gamma", "risk aversions must be positive"));
    }
    // φ-space Δ = ((γ₁+γ₂)/2) Λ⁻¹Σ/2 + (δ²/4) I
    let mut lh = sigma.clone();
    for (i, mut row) in lh.row_iter_mut().enumerate() {
        row /= 2.0 * lambda[i];
    }
    let delta_mat = lh * ((gamma1 + gamma2) / 2.0) + Matrix::identity(d, d) * (delta * delta / 4.0);
    let root = matfun::principal_sqrt(&delta_mat)?;
    Ok((root, delta_mat))
}

/// Two agents with `ζ¹ = a t + N`, `ζ² = −ζ¹`, infinite horizon.
pub fn cor54_coefficients(
    gamma1: f64,
    gamma2: f64,
    delta: f64,
    lambda: &Vector,
    sigma: &Matrix,
    a: &Vector,
) -> Result<OUCoefficients> {
    let d = sigma.nrows();
    if a.len() != d {
        return Err(Error::spec("drift", format!("expected {d} entries")));
    }
    let (root, _) = mirrored_speed(gamma1, gamma2, delta, lambda, sigma)?;
    let k = root - Matrix::identity(d, d) * (delta / 2.0);
    // μ-space speed Σ K Σ⁻¹ = √(ΣΛ⁻¹(γ₁+γ₂)/4 + δ²/4) − δ/2
    let speed = sigma * matfun::solve(&sigma.transpose(), &k.transpose(), "covariance matrix")?.transpose();
    let scale = 2.0 * (gamma1 - gamma2) / (gamma1 + gamma2) * delta;
    let mean = lambda.component_mul(a) * scale;
    Ok(OUCoefficients {
        speed,
        mean_level: MeanLevel::Constant(mean),
        vol: sigma * ((gamma1 - gamma2) / 2.0),
    })
}

/// Two agents with `dζ¹ = −κζ¹ dt + dN`, `ζ² = −ζ¹`, infinite horizon.
pub fn cor55_coefficients(
    gamma1: f64,
    gamma2: f64,
    delta: f64,
    lambda: &Vector,
    sigma: &Matrix,
    kappa: &Matrix,
) -> Result<OUCoefficients> {
    let d = sigma.nrows();
    if kappa.shape() != (d, d) {
        return Err(Error::spec("kappa", format!("expected a {d}x{d} matrix")));
    }
    let (root, _) = mirrored_speed(gamma1, gamma2, delta, lambda, sigma)?;
    let eye = Matrix::identity(d, d);
    let k = &root - &eye * (delta / 2.0);
    let p_plus_kappa = &root + &eye * (delta / 2.0) + kappa;
    let speed = sigma * matfun::solve(&sigma.transpose(), &k.transpose(), "covariance matrix")?.transpose();
    // κ(P+κ)⁻¹ − K⁻¹κ
    let first = matfun::solve(&p_plus_kappa.transpose(), &kappa.transpose(), "√Δ + δ/2 + κ")?.transpose();
    let second = matfun::solve(&k, kappa, "√Δ − δ/2")?;
    let vol = sigma * ((gamma1 - gamma2) / 2.0);
    Ok(OUCoefficients {
        speed,
        mean_level: MeanLevel::Linear(&vol * (first - second)),
        vol,
    })
}

/// Matches a scenario against the two mirrored closed forms.
///
/// `ζ¹` is the exposure of the first agent in input order.
pub fn corollary_coefficients(scenario: &ValidatedScenario) -> Result<OUCoefficients> {
    if scenario.n_agents() != 2 {
        return Err(Error::Pattern(format!(
            "need exactly two agents, found {}",
            scenario.n_agents()
        )));
    }
    if scenario.market.horizon.is_finite() {
        return Err(Error::Pattern("need an infinite horizon".into()));
    }
    if scenario.noise != NoiseTraderSpec::None {
        return Err(Error::Pattern("need a scenario without noise traders".into()));
    }
    let first = scenario.canonical_index(0);
    let other = 1 - first;
    let (src, sign) = scenario.exposure_source(first);
    let (src2, sign2) = scenario.exposure_source(other);
    if src != src2 || sign != -sign2 {
        return Err(Error::Pattern("exposures must be mirror images of each other".into()));
    }
    let gamma1 = scenario.agents[first].gamma;
    let gamma2 = scenario.agents[other].gamma;
    let m = &scenario.market;
    match &scenario.agents[src].exposure {
        ExposureSpec::Abm { drift, .. } => {
            cor54_coefficients(gamma1, gamma2, m.delta, &m.lambda_cost, &m.sigma_cov, &(drift * sign))
        }
        ExposureSpec::Ou { kappa, .. } => {
            cor55_coefficients(gamma1, gamma2, m.delta, &m.lambda_cost, &m.sigma_cov, kappa)
        }
        _ => Err(Error::Pattern(
            "mirrored exposure must be an arithmetic Brownian motion or an OU process".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;
    use crate::sim::PathGenerator;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    fn scalar_market(delta: f64, horizon: Horizon) -> MarketSpec {
        MarketSpec {
            sigma_cov: Matrix::identity(1, 1),
            lambda_cost: one(1.0),
            delta,
            horizon,
        }
    }

    fn scenario(market: MarketSpec, agents: Vec<AgentSpec>, noise: NoiseTraderSpec) -> ValidatedScenario {
        validate(&Scenario {
            market,
            agents,
            noise,
            simulation: SimulationConfig::default(),
        })
        .unwrap()
    }

    fn agent(gamma: f64, exposure: ExposureSpec) -> AgentSpec {
        AgentSpec { gamma, exposure }
    }

    fn cor54(horizon: Horizon) -> ValidatedScenario {
        scenario(
            scalar_market(0.1, horizon),
            vec![
                agent(
                    1.0,
                    ExposureSpec::Abm {
                        drift: one(-0.5),
                        initial: one(0.0),
                    },
                ),
                agent(2.0, ExposureSpec::MirrorOf { agent: 0 }),
            ],
            NoiseTraderSpec::None,
        )
    }

    #[test]
    fn frictionless_examples() {
        let sigma = Matrix::identity(1, 1);
        let mu = frictionless_return(&[one(0.5), one(0.3)], &one(0.0), &[1.0, 2.0], &sigma).unwrap();
        assert_relative_eq!(mu[0], 0.8 / 1.5, epsilon = 1e-15);
        let phi = frictionless_strategy(&mu, &one(0.5), 1.0, &sigma).unwrap();
        assert_relative_eq!(phi[0], 0.8 / 1.5 - 0.5, epsilon = 1e-15);
        let phi2 = frictionless_strategy(&mu, &one(0.3), 2.0, &sigma).unwrap();
        assert_relative_eq!(phi[0] + phi2[0], 0.0, epsilon = 1e-15);
        let mu0 = frictionless_return(&[one(0.5), one(0.3)], &one(0.8), &[1.0, 2.0], &sigma).unwrap();
        assert_relative_eq!(mu0[0], 0.0, epsilon = 1e-15);
        assert!(frictionless_return(&[one(0.5)], &one(0.0), &[1.0, 2.0], &sigma).is_err());
    }

    #[test]
    fn gp_noise_examples() {
        assert_eq!(gp_noise_mu_psi(1.0, 2.0, &one(0.0), &one(0.0))[0], 0.0);
        assert_relative_eq!(gp_noise_mu_psi(1.0, 2.0, &one(0.3), &one(0.1))[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(gp_noise_mu_psi(1.0, 2.0, &one(0.2), &one(0.4))[0], -1.0, epsilon = 1e-15);
        assert_relative_eq!(gp_noise_psi_dot(1.0, &one(0.3), &one(0.1))[0], -0.2, epsilon = 1e-15);
    }

    #[test]
    fn corollary_coefficient_examples() {
        let sigma = Matrix::identity(1, 1);
        let c = cor54_coefficients(1.0, 2.0, 0.1, &one(1.0), &sigma, &one(-0.5)).unwrap();
        assert_relative_eq!(c.speed[(0, 0)], 0.8174675, epsilon = 1e-6);
        assert_eq!(c.mean_level, MeanLevel::Constant(one(2.0 * (-1.0 / 3.0) * 0.1 * -0.5)));
        assert_relative_eq!(c.vol[(0, 0)], -0.5);
        let MeanLevel::Constant(m) = c.mean_level else { unreachable!() };
        assert_relative_eq!(m[0], 0.033333, epsilon = 1e-6);
        // linear in Λ and a
        let c2 = cor54_coefficients(1.0, 2.0, 0.1, &one(2.0), &sigma, &one(-1.5)).unwrap();
        let MeanLevel::Constant(m2) = c2.mean_level else { unreachable!() };
        assert_relative_eq!(m2[0], 6.0 * m[0], epsilon = 1e-15);
        let h = cor54_coefficients(1.5, 1.5, 0.1, &one(1.0), &sigma, &one(-0.5)).unwrap();
        assert_eq!(h.vol[(0, 0)], 0.0);
        assert_eq!(h.mean_level, MeanLevel::Constant(one(0.0)));

        let c = cor55_coefficients(1.0, 2.0, 0.1, &one(1.0), &sigma, &Matrix::from_element(1, 1, 0.5)).unwrap();
        let MeanLevel::Linear(map) = c.mean_level else { unreachable!() };
        assert_relative_eq!(map[(0, 0)], 0.129452, epsilon = 1e-6);
        assert!(map[(0, 0)] > 0.0);
        assert_relative_eq!(c.speed[(0, 0)], 0.8174675, epsilon = 1e-6);
        let tiny = cor55_coefficients(1.0, 2.0, 0.1, &one(1.0), &sigma, &Matrix::from_element(1, 1, 1e-12)).unwrap();
        let MeanLevel::Linear(map) = tiny.mean_level else { unreachable!() };
        assert!(map.amax() < 1e-11);
        assert!(cor54_coefficients(1.0, 2.0, 0.0, &one(1.0), &sigma, &one(-0.5)).is_err());
    }

    #[test]
    fn pattern_detection() {
        let c = corollary_coefficients(&cor54(Horizon::Infinite)).unwrap();
        assert_relative_eq!(c.vol[(0, 0)], -0.5);
        // the same economy entered in the other order
        let swapped = scenario(
            scalar_market(0.1, Horizon::Infinite),
            vec![
                agent(2.0, ExposureSpec::MirrorOf { agent: 1 }),
                agent(
                    1.0,
                    ExposureSpec::Abm {
                        drift: one(-0.5),
                        initial: one(0.0),
                    },
                ),
            ],
            NoiseTraderSpec::None,
        );
        let c2 = corollary_coefficients(&swapped).unwrap();
        assert_relative_eq!(c2.vol[(0, 0)], 0.5);
        assert_eq!(c2.mean_level, c.mean_level.clone());
        let three = scenario(
            scalar_market(0.1, Horizon::Infinite),
            vec![
                agent(1.0, ExposureSpec::Zero),
                agent(2.0, ExposureSpec::Zero),
                agent(3.0, ExposureSpec::Zero),
            ],
            NoiseTraderSpec::None,
        );
        assert!(matches!(corollary_coefficients(&three), Err(Error::Pattern(_))));
        assert!(matches!(
            corollary_coefficients(&cor54(Horizon::Finite(1.0))),
            Err(Error::Pattern(_))
        ));
    }

    #[test]
    fn two_agent_return_matches_corollary_form() {
        // μ^Λ = (γ¹−γ²)Σ/2 (φ + ζ¹) along a skeleton path
        let s = cor54(Horizon::Infinite);
        let grid = TimeGrid::new(0.01, 3.0).unwrap();
        let solver = EquilibriumSolver::new(&s, &grid).unwrap();
        let path = PathGenerator::new(&s, &grid).unwrap().generate(1, 0);
        let eq = solver.solve(&path).unwrap();
        for k in [0, 100, 300] {
            let expected = -0.5 * (eq.phi[0][(0, k)] + eq.zeta[0][(0, k)]);
            assert_relative_eq!(eq.mu_lambda[(0, k)], expected, epsilon = 1e-14);
        }
        // stacked target is −ζ¹
        let xi = solver.target_path(&path).unwrap();
        assert_relative_eq!(xi, -&eq.zeta[0], epsilon = 1e-14);
        assert!(eq.clearing_residual <= 1e-15);
    }

    #[test]
    fn homogeneous_agents_earn_no_premium() {
        for n in [2, 3] {
            let agents = (0..n)
                .map(|i| {
                    agent(
                        1.5,
                        ExposureSpec::Abm {
                            drift: one(0.2 * i as f64 - 0.1),
                            initial: one(0.1),
                        },
                    )
                })
                .collect();
            let s = scenario(scalar_market(0.1, Horizon::Infinite), agents, NoiseTraderSpec::None);
            let grid = TimeGrid::new(0.01, 2.0).unwrap();
            let solver = EquilibriumSolver::new(&s, &grid).unwrap();
            let path = PathGenerator::new(&s, &grid).unwrap().generate(9, 3);
            let eq = solver.solve(&path).unwrap();
            assert!(eq.liqprem.amax() <= 1e-12);
        }
    }

    #[test]
    fn homogeneous_premium_is_the_noise_term() {
        let s = scenario(
            MarketSpec {
                delta: 0.1,
                ..scalar_market(0.1, Horizon::Infinite)
            },
            vec![agent(1.0, ExposureSpec::Zero), agent(1.0, ExposureSpec::Zero)],
            NoiseTraderSpec::ConstantRate {
                psi_dot: one(-0.2),
                psi_0: one(0.0),
            },
        );
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        let path = PathGenerator::new(&s, &grid).unwrap().generate(0, 0);
        let eq = solve_equilibrium(&s, &path).unwrap();
        for v in eq.liqprem.iter() {
            assert_relative_eq!(*v, 0.02, epsilon = 1e-12);
        }
    }

    #[test]
    fn covariance_term_example() {
        // (γ−γ̄) = (−0.5, 0.5), φ^Λ − φ̄ = (0.04, −0.04)
        let s = cor54(Horizon::Infinite);
        let z = Matrix::zeros(1, 1);
        let lp = liquidity_premium(
            &s,
            &z,
            &z,
            &[Matrix::from_element(1, 1, 0.04), Matrix::from_element(1, 1, -0.04)],
            &[z.clone(), z.clone()],
            &z,
            &z,
        )
        .unwrap();
        assert_relative_eq!(lp.covariance[(0, 0)], -0.02, epsilon = 1e-15);
    }

    #[test]
    fn single_agent_holds_the_noise_supply() {
        let s = scenario(
            scalar_market(0.1, Horizon::Infinite),
            vec![agent(2.0, ExposureSpec::Zero)],
            NoiseTraderSpec::ConstantRate {
                psi_dot: one(0.3),
                psi_0: one(0.1),
            },
        );
        let grid = TimeGrid::new(0.1, 1.0).unwrap();
        let path = PathGenerator::new(&s, &grid).unwrap().generate(0, 0);
        let eq = solve_equilibrium(&s, &path).unwrap();
        assert_eq!(eq.phi[0], -&eq.psi);
        assert_eq!(eq.phi_dot[0], -&eq.psi_dot);
    }

    #[test]
    fn finite_horizon_rates_vanish_at_maturity() {
        let s = scenario(
            scalar_market(0.1, Horizon::Finite(1.0)),
            vec![
                agent(
                    1.0,
                    ExposureSpec::Deterministic(DeterministicPath::Affine {
                        initial: one(0.0),
                        slope: one(-0.5),
                    }),
                ),
                agent(2.0, ExposureSpec::MirrorOf { agent: 0 }),
                agent(3.0, ExposureSpec::Zero),
            ],
            NoiseTraderSpec::None,
        );
        let grid = TimeGrid::spanning(1e-3, 1.0).unwrap();
        let path = PathGenerator::new(&s, &grid).unwrap().skeleton();
        let eq = solve_equilibrium(&s, &path).unwrap();
        for pd in &eq.phi_dot {
            assert_eq!(pd[(0, grid.n_steps)], 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn decomposition_and_clearing_hold(seed in any::<u64>(), d in 1usize..=2, n in 2usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = random_scenario(&mut rng, d, n);
            v.market.horizon = Horizon::Infinite;
            v.market.delta = rng.random_range(0.05..0.5);
            for a in v.agents.iter_mut() {
                a.exposure = ExposureSpec::Abm {
                    drift: Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
                    initial: Vector::zeros(d),
                };
            }
            v.noise = NoiseTraderSpec::ConstantRate {
                psi_dot: Vector::from_fn(d, |_, _| rng.random_range(-0.5..0.5)),
                psi_0: Vector::zeros(d),
            };
            let grid = TimeGrid::new(0.05, 2.0).unwrap();
            let path = PathGenerator::new(&v, &grid).unwrap().generate(seed, 0);
            let eq = solve_equilibrium(&v, &path).unwrap();
            let gap = (&eq.liqprem - &eq.liqprem_covariance - &eq.liqprem_noise).amax();
            prop_assert!(gap <= 1e-10, "decomposition gap {gap}");
            prop_assert!(eq.clearing_residual <= 1e-12);
        }
    }
}
