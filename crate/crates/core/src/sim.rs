//! Seeded path generation for exposures and noise traders, and Monte Carlo
//! aggregation of equilibrium statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::equilibrium::{EquilibriumPath, EquilibriumSolver};
use crate::error::{Error, Result};
use crate::grid::{CompensatedSum, TimeGrid};
use crate::matfun::{self, Matrix, Vector};
use crate::model::state::BlockKind;
use crate::model::{Horizon, StateLayout, ValidatedScenario};

/// Paths solved concurrently before their results are folded in path order.
const CHUNK: usize = 16;

/// The simulation grid: `[0, T]` for a finite horizon (`t_max` is ignored),
/// `[0, t_max]` otherwise.
pub fn scenario_grid(scenario: &ValidatedScenario, dt: f64, t_max: f64) -> Result<TimeGrid> {
    match scenario.market.horizon {
        Horizon::Finite(t) => TimeGrid::spanning(dt, t),
        Horizon::Infinite => TimeGrid::new(dt, t_max),
    }
}

/// Increments actually added to one stochastic state block, `d × n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverIncrements {
    pub driver: u64,
    pub values: Matrix,
}

/// One sampled realisation of the exogenous processes.
///
/// Matrices hold one column per grid point; `zeta` is in canonical agent order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPath {
    pub grid: TimeGrid,
    pub seed: u64,
    pub path_index: u64,
    pub states: Matrix,
    pub zeta: Vec<Matrix>,
    pub psi: Matrix,
    pub psi_dot: Matrix,
    pub mu_psi: Matrix,
    pub x: Option<Matrix>,
    pub increments: Vec<DriverIncrements>,
}

impl ScenarioPath {
    pub fn increments_of(&self, driver: u64) -> Option<&Matrix> {
        self.increments.iter().find(|d| d.driver == driver).map(|d| &d.values)
    }
}

#[derive(Debug, Clone)]
struct Driver {
    id: u64,
    start: usize,
    /// Maps `d` standard normals to the block increment.
    loading: Matrix,
}

/// Precomputed one-step transition `z_{k+1} = T z_k + noise`.
///
/// Affine, ABM and constant-rate blocks are stepped exactly, OU exposures with
/// the exact Gaussian transition, the noise-trader target pair by Euler.
#[derive(Debug, Clone)]
pub struct PathGenerator {
    pub layout: StateLayout,
    pub grid: TimeGrid,
    transition: Matrix,
    drivers: Vec<Driver>,
}

impl PathGenerator {
    pub fn new(scenario: &ValidatedScenario, grid: &TimeGrid) -> Result<Self> {
        let layout = StateLayout::new(scenario);
        let (d, m, h) = (layout.d, layout.dim, grid.dt);
        let mut transition = Matrix::identity(m, m) + &layout.generator * h;
        let mut drivers = Vec::new();
        let sq = h.sqrt();
        for b in &layout.blocks {
            match &b.kind {
                BlockKind::Abm { .. } => drivers.push(Driver {
                    id: b.driver.unwrap(),
                    start: b.start,
                    loading: Matrix::identity(d, d) * sq,
                }),
                BlockKind::Ou { kappa } => {
                    let e = matfun::expm(&(kappa * -h));
                    transition.view_mut((b.start, b.start), (d, d)).copy_from(&e);
                    // covariance C of the exact step: κC + Cκᵀ = I − EEᵀ
                    let rhs = Matrix::identity(d, d) - &e * e.transpose();
                    let c = matfun::solve_sylvester(kappa, &kappa.transpose(), &rhs)?;
                    let c = (&c + c.transpose()) * 0.5;
                    let chol = c.cholesky().ok_or_else(|| {
                        Error::SingularMatrix("OU step covariance is not positive definite".into())
                    })?;
                    drivers.push(Driver {
                        id: b.driver.unwrap(),
                        start: b.start,
                        loading: chol.l(),
                    });
                }
                BlockKind::TargetX { sigma_x, .. } if *sigma_x > 0.0 => drivers.push(Driver {
                    id: b.driver.unwrap(),
                    start: b.start,
                    loading: Matrix::identity(d, d) * (sigma_x * sq),
                }),
                _ => {}
            }
        }
        Ok(PathGenerator {
            layout,
            grid: *grid,
            transition,
            drivers,
        })
    }

    pub fn driver_ids(&self) -> Vec<u64> {
        self.drivers.iter().map(|d| d.id).collect()
    }

    /// Sampled path; a deterministic function of `(seed, path_index)`.
    pub fn generate(&self, seed: u64, path_index: u64) -> ScenarioPath {
        self.run(seed, path_index, true)
    }

    /// The path with every Brownian increment set to zero.
    pub fn skeleton(&self) -> ScenarioPath {
        self.run(0, 0, false)
    }

    fn run(&self, seed: u64, path_index: u64, noisy: bool) -> ScenarioPath {
        let l = &self.layout;
        let (d, m, len) = (l.d, l.dim, self.grid.len());
        let n_steps = self.grid.n_steps;
        let mut rngs: Vec<ChaCha20Rng> = self
            .drivers
            .iter()
            .map(|dr| {
                let mut r = ChaCha20Rng::seed_from_u64(seed);
                r.set_stream((path_index << 16) | dr.id);
                r
            })
            .collect();
        let mut increments: Vec<Matrix> = self.drivers.iter().map(|_| Matrix::zeros(d, n_steps)).collect();
        let mut states = Matrix::zeros(m, len);
        states.set_column(0, &l.initial);
        let mut cur = l.initial.clone();
        let mut next = Vector::zeros(m);
        let mut normals = Vector::zeros(d);
        let mut dn = Vector::zeros(d);
        for k in 0..n_steps {
            next.gemv(1.0, &self.transition, &cur, 0.0);
            if noisy {
                for (j, dr) in self.drivers.iter().enumerate() {
                    for z in normals.iter_mut() {
                        *z = StandardNormal.sample(&mut rngs[j]);
                    }
                    dn.gemv(1.0, &dr.loading, &normals, 0.0);
                    let mut blk = next.rows_mut(dr.start, d);
                    blk += &dn;
                    increments[j].set_column(k, &dn);
                }
            }
            states.set_column(k + 1, &next);
            std::mem::swap(&mut cur, &mut next);
        }

        let zeta = (0..l.n_agents())
            .map(|n| {
                let mut z = l.zeta_loading(n) * &states;
                if let Some((p, sign)) = l.zeta_offset_path(n) {
                    for k in 0..len {
                        let mut c = z.column_mut(k);
                        c += p.eval(self.grid.t(k)) * sign;
                    }
                }
                z
            })
            .collect();
        let x = l.blocks.iter().find_map(|b| match b.kind {
            BlockKind::TargetX { .. } => Some(states.rows(b.start, d).into_owned()),
            _ => None,
        });
        ScenarioPath {
            grid: self.grid,
            seed,
            path_index,
            zeta,
            psi: l.psi_loading() * &states,
            psi_dot: l.psi_dot_loading() * &states,
            mu_psi: l.mu_psi_loading() * &states,
            x,
            increments: self
                .drivers
                .iter()
                .zip(increments)
                .map(|(dr, values)| DriverIncrements { driver: dr.id, values })
                .collect(),
            states,
        }
    }
}

/// Convenience wrapper building a generator for a single path.
pub fn generate_path(
    scenario: &ValidatedScenario,
    seed: u64,
    path_index: u64,
    dt: f64,
    t_max: f64,
) -> Result<ScenarioPath> {
    let grid = scenario_grid(scenario, dt, t_max)?;
    Ok(PathGenerator::new(scenario, &grid)?.generate(seed, path_index))
}

/// Solves `n_paths` paths, mapping each in parallel and folding the results in path order.
pub fn for_each_path<T, M, F>(
    solver: &EquilibriumSolver,
    generator: &PathGenerator,
    n_paths: usize,
    seed: u64,
    map: M,
    mut fold: F,
) -> Result<()>
where
    T: Send,
    M: Fn(&ScenarioPath, &EquilibriumPath) -> T + Sync,
    F: FnMut(T),
{
    let mut start = 0;
    while start < n_paths {
        let end = (start + CHUNK).min(n_paths);
        let out = (start..end)
            .into_par_iter()
            .map(|i| {
                let path = generator.generate(seed, i as u64);
                let eq = solver.solve(&path)?;
                Ok(map(&path, &eq))
            })
            .collect::<Result<Vec<T>>>()?;
        out.into_iter().for_each(&mut fold);
        start = end;
    }
    Ok(())
}

/// Per-time cross-path statistics of `μ^Λ` and the liquidity premium.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub seed: u64,
    pub mu_lambda_mean: Matrix,
    pub mu_lambda_std: Matrix,
    pub liqprem_mean: Matrix,
    pub liqprem_std: Matrix,
    pub lag: usize,
    /// Per asset, pooled over paths and times.
    pub increment_autocorr: Vec<f64>,
}

impl MonteCarloSummary {
    /// Standard error of the mean at grid index `k` for asset `i`.
    pub fn liqprem_stderr(&self, i: usize, k: usize) -> f64 {
        self.liqprem_std[(i, k)] / (self.n_paths as f64).sqrt()
    }
}

struct Moments {
    sum: Vec<CompensatedSum>,
    sq: Vec<CompensatedSum>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments {
            sum: vec![CompensatedSum::default(); n],
            sq: vec![CompensatedSum::default(); n],
        }
    }

    fn add(&mut self, m: &Matrix) {
        for (i, &x) in m.iter().enumerate() {
            self.sum[i].add(x);
            self.sq[i].add(x * x);
        }
    }

    fn finish(&self, rows: usize, cols: usize, n: usize) -> (Matrix, Matrix) {
        let nf = n as f64;
        let mean = Matrix::from_iterator(rows, cols, self.sum.iter().map(|s| s.value() / nf));
        let std = Matrix::from_iterator(
            rows,
            cols,
            self.sum.iter().zip(&self.sq).map(|(s, q)| {
                if n < 2 {
                    return 0.0;
                }
                let m = s.value() / nf;
                ((q.value() - nf * m * m) / (nf - 1.0)).max(0.0).sqrt()
            }),
        );
        (mean, std)
    }
}

#[derive(Default, Clone, Copy)]
struct CorrSums {
    n: usize,
    x: CompensatedSum,
    y: CompensatedSum,
    xy: CompensatedSum,
    xx: CompensatedSum,
    yy: CompensatedSum,
}

impl CorrSums {
    fn corr(&self) -> f64 {
        let n = self.n as f64;
        let (mx, my) = (self.x.value() / n, self.y.value() / n);
        let cov = self.xy.value() / n - mx * my;
        let vx = self.xx.value() / n - mx * mx;
        let vy = self.yy.value() / n - my * my;
        if vx <= 0.0 || vy <= 0.0 {
            return 0.0;
        }
        cov / (vx * vy).sqrt()
    }
}

pub fn run_monte_carlo(
    scenario: &ValidatedScenario,
    n_paths: usize,
    dt: f64,
    t_max: f64,
    seed: u64,
) -> Result<MonteCarloSummary> {
    run_monte_carlo_with_lag(scenario, n_paths, dt, t_max, seed, 1)
}

pub fn run_monte_carlo_with_lag(
    scenario: &ValidatedScenario,
    n_paths: usize,
    dt: f64,
    t_max: f64,
    seed: u64,
    lag: usize,
) -> Result<MonteCarloSummary> {
    if n_paths == 0 {
        return Err(Error::spec("simulation.n_paths", "need at least one path"));
    }
    if lag == 0 {
        return Err(Error::spec("lag", "autocorrelation lag must be positive"));
    }
    let grid = scenario_grid(scenario, dt, t_max)?;
    let solver = EquilibriumSolver::new(scenario, &grid)?;
    let generator = PathGenerator::new(scenario, &grid)?;
    let d = scenario.d();
    let len = grid.len();
    let mut mu_m = Moments::new(d * len);
    let mut lp_m = Moments::new(d * len);
    let mut corr = vec![CorrSums::default(); d];
    for_each_path(
        &solver,
        &generator,
        n_paths,
        seed,
        |_, eq| (eq.mu_lambda.clone(), eq.liqprem.clone()),
        |(mu, lp)| {
            mu_m.add(&mu);
            lp_m.add(&lp);
            for (i, c) in corr.iter_mut().enumerate() {
                let row = mu.row(i);
                for k in 0..len.saturating_sub(1 + lag) {
                    let x = row[k + 1] - row[k];
                    let y = row[k + 1 + lag] - row[k + lag];
                    c.n += 1;
                    c.x.add(x);
                    c.y.add(y);
                    c.xy.add(x * y);
                    c.xx.add(x * x);
                    c.yy.add(y * y);
                }
            }
        },
    )?;
    let (mu_lambda_mean, mu_lambda_std) = mu_m.finish(d, len, n_paths);
    let (liqprem_mean, liqprem_std) = lp_m.finish(d, len, n_paths);
    Ok(MonteCarloSummary {
        grid,
        n_paths,
        seed,
        mu_lambda_mean,
        mu_lambda_std,
        liqprem_mean,
        liqprem_std,
        lag,
        increment_autocorr: corr.iter().map(CorrSums::corr).collect(),
    })
}

/// Least-squares fit of `Δμ^Λ/dt` on `[1, μ^Λ, ζ¹, ΔN/√dt]` pooled over paths.
///
/// For OU-type dynamics `dμ = S(m − μ)dt + V dN` this recovers `S`, the mean
/// level `m` (constant, or a linear map of `ζ¹`) and `V`, with an `O(dt)` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct OuFit {
    pub speed: Matrix,
    pub intercept: Vector,
    /// `S⁻¹ · intercept`
    pub mean_level: Vector,
    /// `S⁻¹ · (coefficient of ζ¹)`
    pub mean_map: Option<Matrix>,
    /// Volatility loading per driver, in the order of the generator's drivers.
    pub vol: Vec<(u64, Matrix)>,
    pub n_obs: usize,
}

/// `zeta_agent` is the input index of the agent whose exposure enters as a regressor.
pub fn fit_ou_dynamics(
    scenario: &ValidatedScenario,
    n_paths: usize,
    dt: f64,
    t_max: f64,
    seed: u64,
    zeta_agent: Option<usize>,
) -> Result<OuFit> {
    let grid = scenario_grid(scenario, dt, t_max)?;
    let solver = EquilibriumSolver::new(scenario, &grid)?;
    let generator = PathGenerator::new(scenario, &grid)?;
    let d = scenario.d();
    let drivers = generator.driver_ids();
    let nz = if zeta_agent.is_some() { d } else { 0 };
    let p = 1 + d + nz + d * drivers.len();
    let mut xtx = vec![CompensatedSum::default(); p * p];
    let mut xty = vec![CompensatedSum::default(); p * d];
    let mut n_obs = 0usize;
    let sq = dt.sqrt();
    for_each_path(
        &solver,
        &generator,
        n_paths,
        seed,
        |path, eq| {
            // per-path sums in plain arithmetic, merged below in path order
            let mut a = vec![CompensatedSum::default(); p * p];
            let mut b = vec![CompensatedSum::default(); p * d];
            let mut x = vec![0.0; p];
            let zeta = zeta_agent.map(|i| &eq.zeta[i]);
            for k in 0..grid.n_steps {
                x[0] = 1.0;
                for i in 0..d {
                    x[1 + i] = eq.mu_lambda[(i, k)];
                }
                if let Some(z) = zeta {
                    for i in 0..d {
                        x[1 + d + i] = z[(i, k)];
                    }
                }
                for (j, inc) in path.increments.iter().enumerate() {
                    for i in 0..d {
                        x[1 + d + nz + j * d + i] = inc.values[(i, k)] / sq;
                    }
                }
                for r in 0..p {
                    for c in r..p {
                        a[r * p + c].add(x[r] * x[c]);
                    }
                }
                for i in 0..d {
                    let y = (eq.mu_lambda[(i, k + 1)] - eq.mu_lambda[(i, k)]) / dt;
                    for r in 0..p {
                        b[r * d + i].add(x[r] * y);
                    }
                }
            }
            (a, b)
        },
        |(a, b)| {
            for (acc, v) in xtx.iter_mut().zip(&a) {
                acc.merge(v);
            }
            for (acc, v) in xty.iter_mut().zip(&b) {
                acc.merge(v);
            }
            n_obs += grid.n_steps;
        },
    )?;
    let mut gram = Matrix::zeros(p, p);
    for r in 0..p {
        for c in r..p {
            gram[(r, c)] = xtx[r * p + c].value();
            gram[(c, r)] = gram[(r, c)];
        }
    }
    let rhs = Matrix::from_fn(p, d, |r, i| xty[r * d + i].value());
    let beta = matfun::solve(&gram, &rhs, "regression normal equations")?;
    // row r of beta holds the coefficients of regressor r for each asset
    let coef = |start: usize| beta.rows(start, d).transpose();
    let speed = -coef(1);
    let intercept: Vector = beta.row(0).transpose();
    let mean_level = matfun::solve(&speed, &Matrix::from_column_slice(d, 1, intercept.as_slice()), "fitted speed")?
        .column(0)
        .into_owned();
    let mean_map = match zeta_agent {
        Some(_) => Some(matfun::solve(&speed, &coef(1 + d), "fitted speed")?),
        None => None,
    };
    let vol = drivers
        .iter()
        .enumerate()
        .map(|(j, &id)| (id, coef(1 + d + nz + j * d) * sq))
        .collect();
    Ok(OuFit {
        speed,
        intercept,
        mean_level,
        mean_map,
        vol,
        n_obs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;
    use approx::assert_relative_eq;

    fn one(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    pub(crate) fn mirrored(exposure: ExposureSpec, gammas: (f64, f64)) -> ValidatedScenario {
        validate(&Scenario {
            market: MarketSpec {
                sigma_cov: Matrix::identity(1, 1),
                lambda_cost: one(1.0),
                delta: 0.1,
                horizon: Horizon::Infinite,
            },
            agents: vec![
                AgentSpec {
                    gamma: gammas.0,
                    exposure,
                },
                AgentSpec {
                    gamma: gammas.1,
                    exposure: ExposureSpec::MirrorOf { agent: 0 },
                },
            ],
            noise: NoiseTraderSpec::None,
            simulation: SimulationConfig::default(),
        })
        .unwrap()
    }

    fn abm() -> ExposureSpec {
        ExposureSpec::Abm {
            drift: one(-0.5),
            initial: one(0.0),
        }
    }

    #[test]
    fn skeleton_paths_follow_drift() {
        let s = mirrored(abm(), (1.0, 2.0));
        let grid = TimeGrid::new(1e-3, 2.0).unwrap();
        let p = PathGenerator::new(&s, &grid).unwrap().skeleton();
        assert_relative_eq!(p.zeta[0][(0, grid.n_steps)], -1.0, epsilon = 1e-12);

        let ou = mirrored(
            ExposureSpec::Ou {
                kappa: Matrix::from_element(1, 1, 0.5),
                initial: one(1.0),
            },
            (1.0, 2.0),
        );
        let grid = TimeGrid::new(0.1, 1.0).unwrap();
        let p = PathGenerator::new(&ou, &grid).unwrap().skeleton();
        assert_relative_eq!(p.zeta[0][(0, 1)], 0.951229, epsilon = 1e-6);
        assert_relative_eq!(p.zeta[0][(0, 1)], (-0.05f64).exp(), epsilon = 1e-15);

        let zero = mirrored(ExposureSpec::Zero, (1.0, 2.0));
        let p = generate_path(&zero, 3, 0, 0.01, 1.0).unwrap();
        assert!(p.zeta.iter().all(|z| z.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn paths_are_seed_deterministic_and_mirrored() {
        let s = mirrored(abm(), (1.0, 2.0));
        let a = generate_path(&s, 42, 7, 1e-2, 2.0).unwrap();
        let b = generate_path(&s, 42, 7, 1e-2, 2.0).unwrap();
        assert_eq!(a, b);
        let c = generate_path(&s, 42, 8, 1e-2, 2.0).unwrap();
        assert_ne!(a.states, c.states);
        assert_eq!(a.zeta[0], -&a.zeta[1]);
        // agent 0 owns the ABM driver; the recursion holds exactly given the stored increments
        let inc = a.increments_of(0).unwrap();
        let z = &a.zeta[0];
        for k in 0..a.grid.n_steps {
            let expected = z[(0, k)] + (-0.5 * 1e-2 + inc[(0, k)]);
            assert_relative_eq!(z[(0, k + 1)], expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn ou_exact_step_has_the_right_variance() {
        let kappa = Matrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 1.0]);
        let s = validate(&Scenario {
            market: MarketSpec {
                sigma_cov: Matrix::identity(2, 2),
                lambda_cost: Vector::from_element(2, 1.0),
                delta: 0.1,
                horizon: Horizon::Infinite,
            },
            agents: vec![AgentSpec {
                gamma: 1.0,
                exposure: ExposureSpec::Ou {
                    kappa: kappa.clone(),
                    initial: Vector::zeros(2),
                },
            }],
            noise: NoiseTraderSpec::None,
            simulation: SimulationConfig::default(),
        })
        .unwrap();
        let grid = TimeGrid::new(0.5, 0.5).unwrap();
        let g = PathGenerator::new(&s, &grid).unwrap();
        let chol = &g.drivers[0].loading;
        let c = chol * chol.transpose();
        // brute-force ∫_0^h e^{−κu} e^{−κᵀu} du
        let n = 20_000;
        let mut acc = Matrix::zeros(2, 2);
        for i in 0..n {
            let u = (i as f64 + 0.5) * 0.5 / n as f64;
            let e = matfun::expm(&(&kappa * -u));
            acc += &e * e.transpose();
        }
        assert_relative_eq!(c, acc * (0.5 / n as f64), epsilon = 1e-9);
    }

    #[test]
    fn homogeneous_monte_carlo_has_no_premium() {
        let s = mirrored(abm(), (1.5, 1.5));
        let mc = run_monte_carlo(&s, 8, 0.05, 5.0, 1).unwrap();
        assert!(mc.liqprem_mean.amax() <= 1e-12);
        assert!(mc.liqprem_std.amax() <= 1e-12);
    }

    #[test]
    fn heterogeneous_premium_mean_reverts() {
        let s = mirrored(abm(), (1.0, 2.0));
        let mc = run_monte_carlo(&s, 200, 0.1, 20.0, 5).unwrap();
        assert!(mc.increment_autocorr[0] < 0.0, "{:?}", mc.increment_autocorr);
        let k = mc.grid.n_steps;
        let target = 2.0 * (1.0 - 2.0) / 3.0 * 0.1 * -0.5;
        assert!((mc.liqprem_mean[(0, k)] - target).abs() <= 3.0 * mc.liqprem_stderr(0, k));
        let again = run_monte_carlo(&s, 200, 0.1, 20.0, 5).unwrap();
        assert_eq!(mc, again);
    }

    #[test]
    fn regression_bias_shrinks_linearly_in_dt() {
        let s = mirrored(abm(), (1.0, 2.0));
        let k = 0.7525f64.sqrt() - 0.05;
        let coarse = fit_ou_dynamics(&s, 20, 0.04, 10.0, 3, None).unwrap();
        let fine = fit_ou_dynamics(&s, 20, 0.02, 10.0, 3, None).unwrap();
        let e1 = (coarse.speed[(0, 0)] - k).abs();
        let e2 = (fine.speed[(0, 0)] - k).abs();
        let ratio = e1 / e2;
        assert!((1.5..=3.0).contains(&ratio), "ratio {ratio}");
        assert_relative_eq!(fine.vol[0].1[(0, 0)], -0.5, epsilon = 0.02);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn paths_are_reproducible_and_mirrors_exact(seed in proptest::prelude::any::<u64>(), idx in 0u64..1000) {
            let s = mirrored(
                ExposureSpec::Ou { kappa: Matrix::from_element(1, 1, 0.7), initial: one(0.3) },
                (1.0, 2.0),
            );
            let grid = TimeGrid::new(0.05, 2.0).unwrap();
            let g = PathGenerator::new(&s, &grid).unwrap();
            let a = g.generate(seed, idx);
            proptest::prop_assert_eq!(&a, &g.generate(seed, idx));
            proptest::prop_assert_eq!(&a.zeta[0], &(-&a.zeta[1]));
            proptest::prop_assert_ne!(&a.zeta[0], &g.generate(seed, idx + 1).zeta[0]);
        }
    }
}
