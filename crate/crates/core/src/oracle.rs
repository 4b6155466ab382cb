//! Brute-force verifiers: a discrete-time equilibrium, objective evaluation
//! with random perturbations, and residual checks of the closed forms.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::equilibrium::{EquilibriumPath, EquilibriumSolver};
use crate::error::{Error, Result};
use crate::grid::{CompensatedSum, TimeGrid};
use crate::matfun::{self, Matrix, Vector};
use crate::model::{Horizon, MarketSpec, StateLayout, ValidatedScenario};
use crate::sim::{PathGenerator, ScenarioPath};

/// One agent's inputs to the objective and first-order condition.
#[derive(Debug, Clone, Copy)]
pub struct AgentPath<'a> {
    pub gamma: f64,
    pub zeta: &'a Matrix,
    pub phi: &'a Matrix,
    pub phi_dot: &'a Matrix,
}

fn finite_horizon(scenario: &ValidatedScenario) -> Result<f64> {
    match scenario.market.horizon {
        Horizon::Finite(t) => Ok(t),
        Horizon::Infinite => Err(Error::spec("market.horizon", "this check needs a finite horizon")),
    }
}

fn require_deterministic(scenario: &ValidatedScenario) -> Result<StateLayout> {
    let layout = StateLayout::new(scenario);
    if !layout.is_deterministic() {
        return Err(Error::spec(
            "agents.exposure",
            "this check needs deterministic exposures and noise-trader demand",
        ));
    }
    Ok(layout)
}

fn check_columns(grid: &TimeGrid, mats: &[&Matrix]) -> Result<()> {
    if mats.iter().any(|m| m.ncols() != grid.len()) {
        return Err(Error::Grid(format!("expected {} time points", grid.len())));
    }
    Ok(())
}

/// Discrete-time equilibrium with piecewise-constant trading rates.
///
/// Positions `φ_j` and returns `μ_j` live on `t_j = jT/K`; the rate `v_j`
/// applies on `[t_j, t_{j+1})` and `v_K = 0`. Per-agent vectors are in input
/// order. `mu_lambda` column 0 is not pinned down by the discrete problem and
/// is copied from column 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteEquilibrium {
    pub grid: TimeGrid,
    pub phi: Vec<Matrix>,
    pub phi_dot: Vec<Matrix>,
    pub mu_lambda: Matrix,
    pub mu_frictionless: Matrix,
}

impl DiscreteEquilibrium {
    pub fn liqprem(&self) -> Matrix {
        &self.mu_lambda - &self.mu_frictionless
    }
}

struct BlockSystem {
    sub: Vec<Matrix>,
    diag: Vec<Matrix>,
    sup: Vec<Matrix>,
    rhs: Vec<Vector>,
}

impl BlockSystem {
    fn dense(&self) -> (Matrix, Vector) {
        let k = self.diag.len();
        let m = self.diag[0].nrows();
        let mut a = Matrix::zeros(k * m, k * m);
        let mut b = Vector::zeros(k * m);
        for j in 0..k {
            a.view_mut((j * m, j * m), (m, m)).copy_from(&self.diag[j]);
            if j > 0 {
                a.view_mut((j * m, (j - 1) * m), (m, m)).copy_from(&self.sub[j]);
            }
            if j + 1 < k {
                a.view_mut((j * m, (j + 1) * m), (m, m)).copy_from(&self.sup[j]);
            }
            b.rows_mut(j * m, m).copy_from(&self.rhs[j]);
        }
        (a, b)
    }

    /// Block Thomas elimination.
    fn solve(&self) -> Result<Vec<Vector>> {
        let k = self.diag.len();
        let singular = |j: usize| Error::SingularSystem(format!("pivot block {j} is singular"));
        let mut lus = Vec::with_capacity(k);
        let mut rp: Vec<Vector> = Vec::with_capacity(k);
        let mut dp = self.diag[0].clone();
        let mut r = self.rhs[0].clone();
        for j in 0..k {
            if j > 0 {
                let prev: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn> = &lus[j - 1];
                let inv = prev.try_inverse().ok_or_else(|| singular(j - 1))?;
                let l = &self.sub[j] * inv;
                dp = &self.diag[j] - &l * &self.sup[j - 1];
                r = &self.rhs[j] - l * &rp[j - 1];
            }
            let lu = dp.clone().lu();
            if !lu.is_invertible() {
                return Err(singular(j));
            }
            lus.push(lu);
            rp.push(r.clone());
        }
        let mut x = vec![Vector::zeros(0); k];
        for j in (0..k).rev() {
            let mut rhs = rp[j].clone();
            if j + 1 < k {
                rhs -= &self.sup[j] * &x[j + 1];
            }
            x[j] = lus[j].solve(&rhs).ok_or_else(|| singular(j))?;
        }
        Ok(x)
    }
}

fn discrete_system(scenario: &ValidatedScenario, path: &ScenarioPath) -> BlockSystem {
    let (d, n) = (scenario.d(), scenario.n_agents());
    let grid = path.grid;
    let k_steps = grid.n_steps;
    let h = grid.dt;
    let m = (n + 1) * d;
    let sigma = &scenario.market.sigma_cov;
    let lam = scenario.market.lambda_matrix();
    let growth = (scenario.market.delta * h).exp();
    let back = &lam * (2.0 * growth / (h * h));
    let fwd = &lam * (2.0 / (h * h));
    let gammas = scenario.gammas();

    let mut sys = BlockSystem {
        sub: Vec::with_capacity(k_steps),
        diag: Vec::with_capacity(k_steps),
        sup: Vec::with_capacity(k_steps),
        rhs: Vec::with_capacity(k_steps),
    };
    // block j-1 holds (φ¹_j, …, φᴺ_j, μ_j) for j = 1..K
    for j in 1..=k_steps {
        let mut diag = Matrix::zeros(m, m);
        let mut sub = Matrix::zeros(m, m);
        let mut sup = Matrix::zeros(m, m);
        let mut rhs = Vector::zeros(m);
        for (a, g) in gammas.iter().enumerate() {
            let rows = a * d;
            let mut own = -(sigma * *g) - &back;
            if j < k_steps {
                own -= &fwd;
                sup.view_mut((rows, rows), (d, d)).copy_from(&fwd);
            }
            diag.view_mut((rows, rows), (d, d)).copy_from(&own);
            diag.view_mut((rows, n * d), (d, d)).fill_with_identity();
            sub.view_mut((rows, rows), (d, d)).copy_from(&back);
            let mut r = sigma * path.zeta[a].column(j) * *g;
            if j == 1 {
                // initial positions: zero except agent N, which absorbs ψ_0
                if a == n - 1 {
                    r += &back * path.psi.column(0);
                }
            }
            rhs.rows_mut(rows, d).copy_from(&r);
        }
        for a in 0..n {
            diag.view_mut((n * d, a * d), (d, d)).fill_with_identity();
        }
        rhs.rows_mut(n * d, d).copy_from(&(-path.psi.column(j)));
        sys.sub.push(sub);
        sys.diag.push(diag);
        sys.sup.push(sup);
        sys.rhs.push(rhs);
    }
    sys
}

fn unpack(scenario: &ValidatedScenario, path: &ScenarioPath, x: &[Vector]) -> Result<DiscreteEquilibrium> {
    let (d, n) = (scenario.d(), scenario.n_agents());
    let grid = path.grid;
    let len = grid.len();
    let mut phi = vec![Matrix::zeros(d, len); n];
    let mut mu = Matrix::zeros(d, len);
    phi[n - 1].set_column(0, &(-path.psi.column(0)));
    for (j, xj) in x.iter().enumerate() {
        for (a, p) in phi.iter_mut().enumerate() {
            p.set_column(j + 1, &xj.rows(a * d, d));
        }
        mu.set_column(j + 1, &xj.rows(n * d, d));
    }
    let first = mu.column(1).into_owned();
    mu.set_column(0, &first);
    let phi_dot = phi
        .iter()
        .map(|p| {
            let mut v = Matrix::zeros(d, len);
            for j in 0..grid.n_steps {
                v.set_column(j, &((p.column(j + 1) - p.column(j)) / grid.dt));
            }
            v
        })
        .collect::<Vec<_>>();
    let gammas = scenario.gammas();
    let tol: f64 = gammas.iter().map(|g| 1.0 / g).sum();
    let mut total = -&path.psi;
    for z in &path.zeta {
        total += z;
    }
    let mu_frictionless = &scenario.market.sigma_cov * total / tol;
    let mut phi_in = vec![Matrix::zeros(0, 0); n];
    let mut dot_in = vec![Matrix::zeros(0, 0); n];
    for (k, (p, v)) in phi.into_iter().zip(phi_dot).enumerate() {
        phi_in[scenario.order[k]] = p;
        dot_in[scenario.order[k]] = v;
    }
    Ok(DiscreteEquilibrium {
        grid,
        phi: phi_in,
        phi_dot: dot_in,
        mu_lambda: mu,
        mu_frictionless,
    })
}

fn discrete_inputs(scenario: &ValidatedScenario, k_steps: usize) -> Result<ScenarioPath> {
    let t = finite_horizon(scenario)?;
    if scenario.n_agents() < 2 {
        return Err(Error::spec("agents", "the discrete equilibrium needs at least two agents"));
    }
    if k_steps < 2 {
        return Err(Error::Grid("need at least two steps".into()));
    }
    require_deterministic(scenario)?;
    let grid = TimeGrid::spanning(t / k_steps as f64, t)?;
    Ok(PathGenerator::new(scenario, &grid)?.skeleton())
}

/// Solves the stacked discrete first-order conditions and clearing
/// constraints on `K` steps.
pub fn discrete_equilibrium(scenario: &ValidatedScenario, k_steps: usize) -> Result<DiscreteEquilibrium> {
    let path = discrete_inputs(scenario, k_steps)?;
    let x = discrete_system(scenario, &path).solve()?;
    unpack(scenario, &path, &x)
}

/// Same system, assembled densely and solved by LU. Only for small `K`.
pub fn discrete_equilibrium_dense(scenario: &ValidatedScenario, k_steps: usize) -> Result<DiscreteEquilibrium> {
    let path = discrete_inputs(scenario, k_steps)?;
    let (a, b) = discrete_system(scenario, &path).dense();
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularSystem("dense system".into()))?;
    let m = (scenario.n_agents() + 1) * scenario.d();
    let x: Vec<Vector> = (0..path.grid.n_steps).map(|j| sol.rows(j * m, m).into_owned()).collect();
    unpack(scenario, &path, &x)
}

/// Sup-norm distance between discrete and continuous equilibria.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGap {
    pub k_steps: usize,
    pub mu_lambda: f64,
    pub phi: f64,
    pub phi_dot: f64,
}

impl OracleGap {
    pub fn max(&self) -> f64 {
        self.mu_lambda.max(self.phi).max(self.phi_dot)
    }
}

/// Compares [`discrete_equilibrium`] with the closed-form equilibrium on the
/// same grid. Returns are compared for `j ≥ 1`; discrete rates are compared
/// with the continuous rate at the interval midpoint.
pub fn discrete_gap(scenario: &ValidatedScenario, k_steps: usize) -> Result<OracleGap> {
    let disc = discrete_equilibrium(scenario, k_steps)?;
    let grid = disc.grid;
    let path = PathGenerator::new(scenario, &grid)?.skeleton();
    let cont = EquilibriumSolver::new(scenario, &grid)?.solve(&path)?;
    let mu_lambda = (1..grid.len())
        .map(|j| (disc.mu_lambda.column(j) - cont.mu_lambda.column(j)).amax())
        .fold(0.0, f64::max);
    let mut phi = 0.0f64;
    let mut phi_dot = 0.0f64;
    for (pd, pc) in disc.phi.iter().zip(&cont.phi) {
        phi = phi.max((pd - pc).amax());
    }
    for (vd, vc) in disc.phi_dot.iter().zip(&cont.phi_dot) {
        for j in 0..grid.n_steps {
            let mid = (vc.column(j) + vc.column(j + 1)) / 2.0;
            phi_dot = phi_dot.max((vd.column(j) - mid).amax());
        }
    }
    Ok(OracleGap {
        k_steps,
        mu_lambda,
        phi,
        phi_dot,
    })
}

/// Trapezoidal `∫ e^{−δt}(φᵀμ − (γ/2)(φ+ζ)ᵀΣ(φ+ζ) − φ̇ᵀΛφ̇) dt`.
pub fn objective_value(agent: &AgentPath, mu: &Matrix, market: &MarketSpec, grid: &TimeGrid) -> Result<f64> {
    check_columns(grid, &[agent.zeta, agent.phi, agent.phi_dot, mu])?;
    let sigma = &market.sigma_cov;
    let mut acc = CompensatedSum::default();
    for k in 0..grid.len() {
        let phi = agent.phi.column(k);
        let pos = phi + agent.zeta.column(k);
        let rate = agent.phi_dot.column(k);
        let cost: f64 = rate
            .iter()
            .zip(market.lambda_cost.iter())
            .map(|(v, l)| l * v * v)
            .sum();
        let f = phi.dot(&mu.column(k)) - agent.gamma / 2.0 * pos.dot(&(sigma * &pos)) - cost;
        let w = if k == 0 || k == grid.n_steps { 0.5 } else { 1.0 };
        acc.add(w * grid.dt * (-market.delta * grid.t(k)).exp() * f);
    }
    Ok(acc.value())
}

/// `∫_{t_j}^{T} f` for every grid point, by cubic interpolation on each
/// interval (fourth order).
fn tail_integrals(f: &Matrix, h: f64) -> Result<Matrix> {
    let (d, len) = f.shape();
    if len < 4 {
        return Err(Error::Grid("need at least four time points".into()));
    }
    let mut out = Matrix::zeros(d, len);
    let c = |j: usize| f.column(j);
    for j in (0..len - 1).rev() {
        let piece = if j == 0 {
            (c(0) * 9.0 + c(1) * 19.0 - c(2) * 5.0 + c(3)) * (h / 24.0)
        } else if j == len - 2 {
            (c(j - 2) - c(j - 1) * 5.0 + c(j) * 19.0 + c(j + 1) * 9.0) * (h / 24.0)
        } else {
            (c(j) * 13.0 + c(j + 1) * 13.0 - c(j - 1) - c(j + 2)) * (h / 24.0)
        };
        let next = out.column(j + 1) + piece;
        out.set_column(j, &next);
    }
    Ok(out)
}

/// `sup_t ‖φ̇_t − (γΛ⁻¹Σ/2) e^{δt} ∫_t^T e^{−δs}(Σ⁻¹μ_s/γ − ζ_s − φ_s) ds‖`
/// for deterministic inputs on `[0, T]`.
pub fn foc_residual(agent: &AgentPath, mu: &Matrix, market: &MarketSpec, grid: &TimeGrid) -> Result<f64> {
    check_columns(grid, &[agent.zeta, agent.phi, agent.phi_dot, mu])?;
    if let Horizon::Finite(t) = market.horizon {
        if (grid.t_end() - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::Grid(format!("grid must end at the horizon {t}")));
        }
    } else {
        return Err(Error::spec("market.horizon", "the residual needs a finite horizon"));
    }
    let sinv_mu = matfun::solve(&market.sigma_cov, mu, "covariance matrix")?;
    let mut f = sinv_mu / agent.gamma - agent.zeta - agent.phi;
    for (k, mut col) in f.column_iter_mut().enumerate() {
        col *= (-market.delta * grid.t(k)).exp();
    }
    let tail = tail_integrals(&f, grid.dt)?;
    let scale = market.half_cost_scaled_cov() * agent.gamma;
    let mut worst = 0.0f64;
    for k in 0..grid.len() {
        let rhs = &scale * tail.column(k) * (market.delta * grid.t(k)).exp();
        worst = worst.max((agent.phi_dot.column(k) - rhs).amax());
    }
    Ok(worst)
}

/// Centred-difference check of `dφ̇ = (B(φ − ξ) + δφ̇) dt` and `dφ = φ̇ dt`
/// at interior grid points.
pub fn fbsde_drift_residual(
    phi: &Matrix,
    phi_dot: &Matrix,
    xi: &Matrix,
    bmat: &Matrix,
    delta: f64,
    grid: &TimeGrid,
) -> Result<f64> {
    check_columns(grid, &[phi, phi_dot, xi])?;
    if bmat.nrows() != phi.nrows() {
        return Err(Error::dim("drift residual", phi.nrows(), bmat.nrows()));
    }
    if grid.len() < 3 {
        return Err(Error::Grid("need at least three time points".into()));
    }
    let h2 = 2.0 * grid.dt;
    let mut worst = 0.0f64;
    for k in 1..grid.n_steps {
        let drift = (phi_dot.column(k + 1) - phi_dot.column(k - 1)) / h2;
        let model = bmat * (phi.column(k) - xi.column(k)) + phi_dot.column(k) * delta;
        worst = worst.max((drift - model).amax());
        let slope = (phi.column(k + 1) - phi.column(k - 1)) / h2;
        worst = worst.max((slope - phi_dot.column(k)).amax());
    }
    Ok(worst)
}

/// Residual diagnostics of the closed-form equilibrium on a deterministic
/// scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// Per agent, input order.
    pub foc: Vec<f64>,
    /// `None` for a single agent.
    pub drift: Option<f64>,
    pub clearing: f64,
}

impl ResidualReport {
    pub fn worst(&self) -> f64 {
        self.foc
            .iter()
            .copied()
            .chain(self.drift)
            .fold(self.clearing, f64::max)
    }
}

/// Solves the skeleton path of a deterministic finite-horizon scenario.
pub fn deterministic_equilibrium(scenario: &ValidatedScenario, dt: f64) -> Result<(ScenarioPath, EquilibriumPath)> {
    let t = finite_horizon(scenario)?;
    require_deterministic(scenario)?;
    let grid = TimeGrid::spanning(dt, t)?;
    let path = PathGenerator::new(scenario, &grid)?.skeleton();
    let eq = EquilibriumSolver::new(scenario, &grid)?.solve(&path)?;
    Ok((path, eq))
}

pub fn residual_report(scenario: &ValidatedScenario, dt: f64) -> Result<ResidualReport> {
    finite_horizon(scenario)?;
    require_deterministic(scenario)?;
    let grid = TimeGrid::spanning(dt, finite_horizon(scenario)?)?;
    let path = PathGenerator::new(scenario, &grid)?.skeleton();
    let solver = EquilibriumSolver::new(scenario, &grid)?;
    let eq = solver.solve(&path)?;
    let mut foc = Vec::with_capacity(scenario.n_agents());
    for i in 0..scenario.n_agents() {
        let agent = AgentPath {
            gamma: scenario.agents[scenario.canonical_index(i)].gamma,
            zeta: &eq.zeta[i],
            phi: &eq.phi[i],
            phi_dot: &eq.phi_dot[i],
        };
        foc.push(foc_residual(&agent, &eq.mu_lambda, &scenario.market, &grid)?);
    }
    let drift = match (solver.system(), solver.target_path(&path)) {
        (Some(sys), Some(xi)) => {
            let (phi, phi_dot) = stacked(scenario, &eq);
            Some(fbsde_drift_residual(
                &phi,
                &phi_dot,
                &xi,
                &sys.bmat,
                scenario.market.delta,
                &grid,
            )?)
        }
        _ => None,
    };
    Ok(ResidualReport {
        foc,
        drift,
        clearing: eq.clearing_residual,
    })
}

/// Positions and rates of canonical agents `1..N−1`, stacked.
pub fn stacked(scenario: &ValidatedScenario, eq: &EquilibriumPath) -> (Matrix, Matrix) {
    let (d, n) = (scenario.d(), scenario.n_agents());
    let len = eq.grid.len();
    let mut phi = Matrix::zeros(d * (n - 1), len);
    let mut phi_dot = Matrix::zeros(d * (n - 1), len);
    for k in 0..n - 1 {
        let i = scenario.order[k];
        phi.rows_mut(k * d, d).copy_from(&eq.phi[i]);
        phi_dot.rows_mut(k * d, d).copy_from(&eq.phi_dot[i]);
    }
    (phi, phi_dot)
}

/// Outcome of the random perturbation suite.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    /// Objective at the closed-form optimum, per agent in input order.
    pub optimum: Vec<f64>,
    /// `min J(optimum) − J(perturbed)` over every agent and perturbation.
    pub worst_margin: f64,
    pub n_perturbations: usize,
}

impl PerturbationReport {
    pub fn optimum_wins(&self) -> bool {
        self.worst_margin > 0.0
    }
}

/// Sinusoidal rate perturbation `η(t) = Σ_m c_m sin(mπt/T + θ_m)` with its
/// integral from 0, so the position perturbation vanishes at `t = 0`.
#[derive(Debug, Clone)]
struct Sinusoid {
    terms: Vec<(f64, f64, f64)>,
}

impl Sinusoid {
    fn draw(rng: &mut ChaCha20Rng, horizon: f64) -> Self {
        let phase = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range");
        let terms = (1..=3)
            .map(|m| {
                let amp: f64 = StandardNormal.sample(rng);
                let omega = m as f64 * std::f64::consts::PI / horizon;
                (amp / m as f64, omega, phase.sample(rng))
            })
            .collect();
        Sinusoid { terms }
    }

    fn rate(&self, t: f64) -> f64 {
        self.terms.iter().map(|(c, w, p)| c * (w * t + p).sin()).sum()
    }

    fn position(&self, t: f64) -> f64 {
        self.terms.iter().map(|(c, w, p)| c * (p.cos() - (w * t + p).cos()) / w).sum()
    }
}

/// Compares each agent's closed-form strategy with `count` random
/// perturbations of size `eps`, holding the equilibrium return fixed.
pub fn perturbation_suite(
    scenario: &ValidatedScenario,
    dt: f64,
    count: usize,
    eps: f64,
    seed: u64,
) -> Result<PerturbationReport> {
    let horizon = finite_horizon(scenario)?;
    let (_, eq) = deterministic_equilibrium(scenario, dt)?;
    let grid = eq.grid;
    let d = scenario.d();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut optimum = Vec::with_capacity(scenario.n_agents());
    let mut worst = f64::INFINITY;
    for i in 0..scenario.n_agents() {
        let gamma = scenario.agents[scenario.canonical_index(i)].gamma;
        let best = AgentPath {
            gamma,
            zeta: &eq.zeta[i],
            phi: &eq.phi[i],
            phi_dot: &eq.phi_dot[i],
        };
        let j_opt = objective_value(&best, &eq.mu_lambda, &scenario.market, &grid)?;
        optimum.push(j_opt);
        for _ in 0..count {
            let shapes: Vec<Sinusoid> = (0..d).map(|_| Sinusoid::draw(&mut rng, horizon)).collect();
            let mut phi = eq.phi[i].clone();
            let mut phi_dot = eq.phi_dot[i].clone();
            for (a, s) in shapes.iter().enumerate() {
                for k in 0..grid.len() {
                    let t = grid.t(k);
                    phi[(a, k)] += eps * s.position(t);
                    phi_dot[(a, k)] += eps * s.rate(t);
                }
            }
            let other = AgentPath {
                gamma,
                zeta: &eq.zeta[i],
                phi: &phi,
                phi_dot: &phi_dot,
            };
            let j = objective_value(&other, &eq.mu_lambda, &scenario.market, &grid)?;
            worst = worst.min(j_opt - j);
        }
    }
    Ok(PerturbationReport {
        optimum,
        worst_margin: worst,
        n_perturbations: count,
    })
}
