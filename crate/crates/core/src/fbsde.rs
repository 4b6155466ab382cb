//! Closed-form solutions of the linear FBSDE
//! `dφ = φ̇ dt`, `dφ̇ = dM + B(φ − ξ) dt + δ φ̇ dt`
//! in state-feedback form `φ̇_t = ξ̄_t − F(t) φ_t`.
//!
//! Targets are linear in the exogenous state `z` (see [`crate::model::StateLayout`]),
//! so the conditional expectations behind `ξ̄` reduce to matrix exponentials of the
//! state generator and are precomputed once per grid as gains `ξ̄_k = R_k z_k + r_k`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::matfun::{self, Matrix, Vector};
use crate::model::{Horizon, MarketSpec, SampledPath};

/// Relative tolerance on the estimated quadrature error of the finite-horizon gains.
pub const QUAD_TOL: f64 = 1e-7;

/// Sum of `M_i p_i(t)` over deterministic sampled paths `p_i`.
#[derive(Debug, Clone, Default)]
pub struct OffsetPath {
    terms: Vec<(Matrix, SampledPath)>,
}

impl OffsetPath {
    pub fn push(&mut self, loading: Matrix, path: SampledPath) {
        self.terms.push((loading, path));
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, t: f64, dim: usize) -> Vector {
        let mut v = Vector::zeros(dim);
        for (m, p) in &self.terms {
            v += m * p.eval(t);
        }
        v
    }

    /// Left-multiplies every loading by `m`.
    pub fn mapped(&self, m: &Matrix) -> OffsetPath {
        OffsetPath {
            terms: self.terms.iter().map(|(l, p)| (m * l, p.clone())).collect(),
        }
    }

    pub fn extend(&mut self, other: OffsetPath) {
        self.terms.extend(other.terms);
    }

    /// Time after which the offset is constant.
    pub fn last_knot(&self) -> f64 {
        self.terms
            .iter()
            .map(|(_, p)| *p.times.last().unwrap())
            .fold(0.0, f64::max)
    }
}

/// `ξ_t = loading · z_t + offset(t)` with `E[z_s | F_t] = exp(generator (s − t)) z_t`.
#[derive(Debug, Clone)]
pub struct LinearTarget {
    pub loading: Matrix,
    pub generator: Matrix,
    pub offset: OffsetPath,
}

impl LinearTarget {
    pub fn dim(&self) -> usize {
        self.loading.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.generator.nrows()
    }

    /// Target that is identically the constant `c`.
    pub fn constant(c: &Vector) -> Self {
        LinearTarget {
            loading: Matrix::from_column_slice(c.len(), 1, c.as_slice()),
            generator: Matrix::zeros(1, 1),
            offset: OffsetPath::default(),
        }
    }

    pub fn eval(&self, t: f64, z: &Vector) -> Vector {
        let v = &self.loading * z;
        if self.offset.is_empty() {
            v
        } else {
            v + self.offset.eval(t, self.dim())
        }
    }
}

#[derive(Debug, Clone)]
pub struct FbsdeProblem {
    pub bmat: Matrix,
    pub delta: f64,
    pub horizon: Horizon,
    pub target: LinearTarget,
}

impl FbsdeProblem {
    pub fn dim(&self) -> usize {
        self.bmat.nrows()
    }

    pub fn delta_mat(&self) -> Matrix {
        let l = self.dim();
        &self.bmat + Matrix::identity(l, l) * (self.delta * self.delta / 4.0)
    }

    fn check(&self) -> Result<()> {
        let l = self.dim();
        matfun::check_square(&self.bmat, "fbsde: B")?;
        if self.target.dim() != l {
            return Err(Error::dim("fbsde: target loading rows", l, self.target.dim()));
        }
        if self.target.loading.ncols() != self.target.state_dim() {
            return Err(Error::dim(
                "fbsde: target loading columns",
                self.target.state_dim(),
                self.target.loading.ncols(),
            ));
        }
        if matches!(self.horizon, Horizon::Infinite) && !(self.delta > 0.0) {
            return Err(Error::spec(
                "market.delta",
                "an infinite horizon needs a strictly positive discount rate",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum SpeedSchedule {
    Constant(Matrix),
    /// `F(t_k)` on the grid; the last entry is the zero matrix at `T`.
    TimeVarying(Vec<Matrix>),
}

impl SpeedSchedule {
    pub fn at(&self, k: usize) -> &Matrix {
        match self {
            SpeedSchedule::Constant(m) => m,
            SpeedSchedule::TimeVarying(v) => &v[k],
        }
    }
}

/// `√Δ − (δ/2) I`.
pub fn constant_speed(delta_mat: &Matrix, delta: f64) -> Result<Matrix> {
    let l = delta_mat.nrows();
    let spec = matfun::spectrum(delta_mat)?;
    let floor = delta * delta / 4.0;
    if !spec.all_real_positive || spec.min_real() < floor - 1e-12 * floor.max(1.0) {
        return Err(Error::Spectrum(format!(
            "Δ needs a real spectrum bounded below by δ²/4 = {floor:e} (min real {:e})",
            spec.min_real()
        )));
    }
    Ok(matfun::principal_sqrt(delta_mat)? - Matrix::identity(l, l) * (delta / 2.0))
}

/// `W(τ) = ΔG − (δ/2)Ġ` at time to maturity `τ`, together with `Ġ`.
fn w_and_gdot(delta_mat: &Matrix, delta: f64, tau: f64) -> Result<(Matrix, Matrix)> {
    let gp = matfun::g_pair(delta_mat, tau)?;
    let w = delta_mat * &gp.g - &gp.g_dot * (delta / 2.0);
    Ok((w, gp.g_dot))
}

/// `F(t) = −(ΔG − (δ/2)Ġ)⁻¹ B Ġ` on every grid point; the grid must end at `T`.
pub fn speed_schedule_finite(
    delta_mat: &Matrix,
    bmat: &Matrix,
    delta: f64,
    horizon_t: f64,
    grid: &TimeGrid,
) -> Result<SpeedSchedule> {
    check_finite_grid(grid, horizon_t)?;
    let f = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let tau = (horizon_t - grid.t(k)).max(0.0);
            if k == grid.n_steps {
                return Ok(Matrix::zeros(bmat.nrows(), bmat.ncols()));
            }
            let (w, gdot) = w_and_gdot(delta_mat, delta, tau)?;
            Ok(-matfun::solve(&w, &(bmat * gdot), "ΔG − (δ/2)Ġ")?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpeedSchedule::TimeVarying(f))
}

fn check_finite_grid(grid: &TimeGrid, horizon_t: f64) -> Result<()> {
    if (grid.t_end() - horizon_t).abs() > 1e-9 * horizon_t.max(1.0) {
        return Err(Error::Grid(format!(
            "finite-horizon grid must end at T = {horizon_t}, ends at {}",
            grid.t_end()
        )));
    }
    Ok(())
}

/// Composite Simpson weights on 4 and on 2 subintervals of a unit step.
const SIMPSON4: [f64; 5] = [1.0 / 12.0, 4.0 / 12.0, 2.0 / 12.0, 4.0 / 12.0, 1.0 / 12.0];
const SIMPSON2: [f64; 5] = [1.0 / 6.0, 0.0, 4.0 / 6.0, 0.0, 1.0 / 6.0];

#[derive(Debug, Clone)]
enum Gains {
    Constant(Matrix),
    PerStep(Vec<Matrix>),
}

#[derive(Debug, Clone)]
enum Steps {
    /// `(I + h/2 K)⁻¹` and `I − h/2 K`.
    Constant(Matrix, Matrix),
    PerStep(Vec<(Matrix, Matrix)>),
}

/// Precomputed feedback law `φ̇_k = R_k z_k + r_k − F_k φ_k` on a grid.
#[derive(Debug, Clone)]
pub struct FeedbackLaw {
    pub grid: TimeGrid,
    pub speed: SpeedSchedule,
    gains: Gains,
    offsets: Option<Vec<Vector>>,
    steps: Steps,
    /// Relative quadrature error estimate from step halving (zero when exact).
    pub quadrature_error: f64,
    dim: usize,
}

/// Positions and trading rates on a grid, one column per time point.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyPath {
    pub phi: Matrix,
    pub phi_dot: Matrix,
}

impl FeedbackLaw {
    pub fn new(problem: &FbsdeProblem, grid: &TimeGrid) -> Result<Self> {
        problem.check()?;
        let l = problem.dim();
        let delta_mat = problem.delta_mat();
        let bspec = matfun::spectrum(&problem.bmat)?;
        if !bspec.all_real_positive {
            return Err(Error::Spectrum(format!(
                "B needs a real positive spectrum (min real {:e}, max |imag| {:e})",
                bspec.min_real(),
                bspec.max_abs_imag()
            )));
        }
        let law = match problem.horizon {
            Horizon::Infinite => Self::infinite(problem, &delta_mat, grid)?,
            Horizon::Finite(t) => Self::finite(problem, &delta_mat, t, grid)?,
        };
        debug_assert_eq!(law.dim, l);
        Ok(law)
    }

    fn infinite(problem: &FbsdeProblem, delta_mat: &Matrix, grid: &TimeGrid) -> Result<Self> {
        let l = problem.dim();
        let delta = problem.delta;
        let k_mat = constant_speed(delta_mat, delta)?;
        let p_mat = &k_mat + Matrix::identity(l, l) * delta;
        let gen = &problem.target.generator;
        let pspec = matfun::spectrum(&p_mat)?;
        let gspec = matfun::spectrum(gen)?;
        let growth = gspec.eigenvalues.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        if growth >= pspec.min_real() - 1e-12 {
            return Err(Error::UnsupportedXi(format!(
                "target grows at rate {growth:e}, faster than the discounting kernel decays ({:e})",
                pspec.min_real()
            )));
        }
        // Y = ∫ e^{−Pu} L e^{Gen u} du solves P Y − Y Gen = L
        let y = matfun::solve_sylvester(&p_mat, &(-gen), &problem.target.loading)?;
        let gain = &k_mat * &p_mat * y;

        let h = grid.dt;
        let mut quadrature_error = 0.0;
        let offsets = if problem.target.offset.is_empty() {
            None
        } else {
            // q(t) = ∫_t^∞ P e^{−P(s−t)} o(s) ds, constant beyond the last knot
            let off = &problem.target.offset;
            let n_ext = grid.n_steps.max((off.last_knot() / h).ceil() as usize);
            let kernels: Vec<Matrix> = (0..5).map(|j| &p_mat * matfun::expm(&(&p_mat * (-(j as f64) * h / 4.0)))).collect();
            let decay = matfun::expm(&(&p_mat * -h));
            let mut q = off.eval(n_ext as f64 * h, l);
            let mut out = vec![Vector::zeros(l); grid.len()];
            let mut err = 0.0;
            let mut scale: f64 = q.norm();
            for k in (0..n_ext).rev() {
                let t = k as f64 * h;
                let vals: Vec<Vector> = (0..5).map(|j| &kernels[j] * off.eval(t + j as f64 * h / 4.0, l)).collect();
                let s4 = simpson(&vals, &SIMPSON4, h);
                let s2 = simpson(&vals, &SIMPSON2, h);
                err += (&s4 - &s2).norm() / 15.0;
                q = s4 + &decay * q;
                scale = scale.max(q.norm());
                if k < grid.len() {
                    out[k] = &k_mat * &q;
                }
            }
            if n_ext < grid.len() {
                // n_ext == n_steps here
                out[grid.n_steps] = &k_mat * off.eval(grid.t_end(), l);
            }
            quadrature_error = if scale > 0.0 { err / scale } else { 0.0 };
            Some(out)
        };
        if quadrature_error > QUAD_TOL {
            return Err(Error::Quadrature {
                estimate: quadrature_error,
                tolerance: QUAD_TOL,
            });
        }

        let eye = Matrix::identity(l, l);
        let lhs = matfun::inverse(&(&eye + &k_mat * (h / 2.0)), "trapezoid step")?;
        let rhs = &eye - &k_mat * (h / 2.0);
        Ok(FeedbackLaw {
            grid: *grid,
            speed: SpeedSchedule::Constant(k_mat),
            gains: Gains::Constant(gain),
            offsets,
            steps: Steps::Constant(lhs, rhs),
            quadrature_error,
            dim: l,
        })
    }

    fn finite(problem: &FbsdeProblem, delta_mat: &Matrix, horizon_t: f64, grid: &TimeGrid) -> Result<Self> {
        check_finite_grid(grid, horizon_t)?;
        let l = problem.dim();
        let m = problem.target.state_dim();
        let delta = problem.delta;
        let h = grid.dt;
        let n = grid.n_steps;
        let bmat = &problem.bmat;

        // W(s) B and Ġ(s) at the quarter-step nodes s_i = i h / 4
        let nodes: Vec<(Matrix, Matrix)> = (0..=4 * n)
            .into_par_iter()
            .map(|i| {
                let tau = (horizon_t - i as f64 * h / 4.0).max(0.0);
                let (w, gdot) = w_and_gdot(delta_mat, delta, if i == 4 * n { 0.0 } else { tau })?;
                Ok((w, gdot))
            })
            .collect::<Result<Vec<_>>>()?;
        let wb: Vec<Matrix> = nodes.par_iter().map(|(w, _)| w * bmat).collect();

        let shifted = &problem.target.generator - Matrix::identity(m, m) * (delta / 2.0);
        let e_sub: Vec<Matrix> = (0..5).map(|j| matfun::expm(&(&shifted * (j as f64 * h / 4.0)))).collect();
        let bl: Vec<Matrix> = (0..5).map(|j| &problem.target.loading * &e_sub[j]).collect();
        let disc: Vec<f64> = (0..5).map(|j| (-delta / 2.0 * j as f64 * h / 4.0).exp()).collect();

        let off = &problem.target.offset;
        let mut q = Matrix::zeros(l, m);
        let mut qo = Vector::zeros(l);
        let mut qs = vec![Matrix::zeros(l, m); n + 1];
        let mut qos = vec![Vector::zeros(l); n + 1];
        let mut err = 0.0;
        let mut scale: f64 = 0.0;
        for k in (0..n).rev() {
            let t = grid.t(k);
            let vals: Vec<Matrix> = (0..5).map(|j| &wb[4 * k + j] * &bl[j]).collect();
            let s4 = simpson(&vals, &SIMPSON4, h);
            let s2 = simpson(&vals, &SIMPSON2, h);
            err += (&s4 - &s2).norm() / 15.0;
            q = s4 + q * &e_sub[4];
            scale = scale.max(q.norm());
            qs[k] = q.clone();
            if !off.is_empty() {
                let vals: Vec<Vector> = (0..5)
                    .map(|j| &wb[4 * k + j] * off.eval(t + j as f64 * h / 4.0, l) * disc[j])
                    .collect();
                let s4 = simpson(&vals, &SIMPSON4, h);
                let s2 = simpson(&vals, &SIMPSON2, h);
                err += (&s4 - &s2).norm() / 15.0;
                qo = s4 + qo * disc[4];
                scale = scale.max(qo.norm());
                qos[k] = qo.clone();
            }
        }
        let quadrature_error = if scale > 0.0 { err / scale } else { 0.0 };
        if quadrature_error > QUAD_TOL {
            return Err(Error::Quadrature {
                estimate: quadrature_error,
                tolerance: QUAD_TOL,
            });
        }

        let per_step = (0..=n)
            .into_par_iter()
            .map(|k| {
                if k == n {
                    return Ok((Matrix::zeros(l, l), Matrix::zeros(l, m), Vector::zeros(l)));
                }
                let (w, gdot) = &nodes[4 * k];
                let lu = w.clone().lu();
                let solve = |rhs: &Matrix| {
                    lu.solve(rhs)
                        .filter(|x| x.iter().all(|v| v.is_finite()))
                        .ok_or_else(|| Error::SingularMatrix(format!("ΔG − (δ/2)Ġ at t = {}", grid.t(k))))
                };
                let f = -solve(&(bmat * gdot))?;
                let r = solve(&qs[k])?;
                let ro = if off.is_empty() {
                    Vector::zeros(l)
                } else {
                    solve(&Matrix::from_column_slice(l, 1, qos[k].as_slice()))?.column(0).into_owned()
                };
                Ok((f, r, ro))
            })
            .collect::<Result<Vec<_>>>()?;

        let eye = Matrix::identity(l, l);
        let mut speeds = Vec::with_capacity(n + 1);
        let mut gains = Vec::with_capacity(n + 1);
        let mut offsets = Vec::with_capacity(n + 1);
        for (f, r, ro) in per_step {
            speeds.push(f);
            gains.push(r);
            offsets.push(ro);
        }
        let steps = (0..n)
            .map(|k| {
                let lhs = matfun::inverse(&(&eye + &speeds[k + 1] * (h / 2.0)), "trapezoid step")?;
                Ok((lhs, &eye - &speeds[k] * (h / 2.0)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeedbackLaw {
            grid: *grid,
            speed: SpeedSchedule::TimeVarying(speeds),
            gains: Gains::PerStep(gains),
            offsets: if off.is_empty() { None } else { Some(offsets) },
            steps: Steps::PerStep(steps),
            quadrature_error,
            dim: l,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ξ̄` at grid index `k` given the state `z_k`.
    pub fn bar_xi(&self, k: usize, z: &Vector) -> Vector {
        let g = match &self.gains {
            Gains::Constant(g) => g,
            Gains::PerStep(v) => &v[k],
        };
        let v = g * z;
        match &self.offsets {
            Some(o) => v + &o[k],
            None => v,
        }
    }

    /// `ξ̄` for a state path stored column-wise (`m × len`).
    pub fn bar_xi_path(&self, states: &Matrix) -> Result<Matrix> {
        self.check_len(states.ncols())?;
        let mut out = match &self.gains {
            Gains::Constant(g) => g * states,
            Gains::PerStep(v) => {
                let mut out = Matrix::zeros(self.dim, states.ncols());
                for (k, g) in v.iter().enumerate() {
                    out.column_mut(k).gemv(1.0, g, &states.column(k), 0.0);
                }
                out
            }
        };
        if let Some(o) = &self.offsets {
            for (k, ok) in o.iter().enumerate() {
                let mut c = out.column_mut(k);
                c += ok;
            }
        }
        Ok(out)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.grid.len() {
            return Err(Error::Grid(format!(
                "path has {n} points, feedback law was built for {}",
                self.grid.len()
            )));
        }
        Ok(())
    }

    /// Trapezoidal (Crank–Nicolson) integration of `φ̇ = ξ̄ − Fφ` from `φ_0 = 0`.
    pub fn integrate(&self, bar_xi: &Matrix) -> Result<StrategyPath> {
        self.check_len(bar_xi.ncols())?;
        let l = self.dim;
        let h = self.grid.dt;
        let mut phi = Matrix::zeros(l, bar_xi.ncols());
        let mut cur = Vector::zeros(l);
        let mut tmp = Vector::zeros(l);
        for k in 0..self.grid.n_steps {
            let (lhs, rhs) = match &self.steps {
                Steps::Constant(a, b) => (a, b),
                Steps::PerStep(v) => (&v[k].0, &v[k].1),
            };
            tmp.gemv(1.0, rhs, &cur, 0.0);
            tmp.axpy(h / 2.0, &bar_xi.column(k), 1.0);
            tmp.axpy(h / 2.0, &bar_xi.column(k + 1), 1.0);
            cur.gemv(1.0, lhs, &tmp, 0.0);
            phi.set_column(k + 1, &cur);
        }
        Ok(self.with_rates(phi, bar_xi))
    }

    /// Exact variation-of-constants step for a constant speed, with `ξ̄`
    /// interpolated linearly between grid points.
    pub fn integrate_exact(&self, bar_xi: &Matrix) -> Result<StrategyPath> {
        self.check_len(bar_xi.ncols())?;
        let SpeedSchedule::Constant(k_mat) = &self.speed else {
            return Err(Error::Grid("the exponential integrator needs a constant speed".into()));
        };
        let l = self.dim;
        let h = self.grid.dt;
        let mut aug = Matrix::zeros(3 * l, 3 * l);
        aug.view_mut((0, 0), (l, l)).copy_from(&(-k_mat));
        aug.view_mut((0, l), (l, l)).fill_with_identity();
        aug.view_mut((l, 2 * l), (l, l)).fill_with_identity();
        let prop = matfun::expm(&(aug * h));
        let top = prop.rows(0, l).into_owned();
        let mut phi = Matrix::zeros(l, bar_xi.ncols());
        let mut y = Vector::zeros(3 * l);
        let mut cur = Vector::zeros(l);
        for k in 0..self.grid.n_steps {
            y.rows_mut(0, l).copy_from(&cur);
            y.rows_mut(l, l).copy_from(&bar_xi.column(k));
            y.rows_mut(2 * l, l)
                .copy_from(&((bar_xi.column(k + 1) - bar_xi.column(k)) / h));
            cur.gemv(1.0, &top, &y, 0.0);
            phi.set_column(k + 1, &cur);
        }
        Ok(self.with_rates(phi, bar_xi))
    }

    fn with_rates(&self, phi: Matrix, bar_xi: &Matrix) -> StrategyPath {
        let phi_dot = match &self.speed {
            SpeedSchedule::Constant(k) => bar_xi - k * &phi,
            SpeedSchedule::TimeVarying(f) => {
                let mut out = bar_xi.clone();
                for (k, fk) in f.iter().enumerate() {
                    out.column_mut(k).gemv(-1.0, fk, &phi.column(k), 1.0);
                }
                out
            }
        };
        StrategyPath { phi, phi_dot }
    }

    /// Solves along a sampled state path.
    pub fn solve_path(&self, states: &Matrix) -> Result<StrategyPath> {
        self.integrate(&self.bar_xi_path(states)?)
    }
}

fn simpson<T>(vals: &[T], w: &[f64; 5], h: f64) -> T
where
    T: Clone + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let mut acc = vals[0].clone() * (w[0] * h);
    for j in 1..5 {
        if w[j] != 0.0 {
            acc = acc + vals[j].clone() * (w[j] * h);
        }
    }
    acc
}

/// `ξ̄_t` for an infinite horizon at time `t` and state `z`.
pub fn bar_xi_infinite(problem: &FbsdeProblem, t: f64, z: &Vector) -> Result<Vector> {
    if problem.horizon.is_finite() {
        return Err(Error::spec("market.horizon", "expected an infinite horizon"));
    }
    let grid = TimeGrid::new(1e-3, 1e-3)?;
    let law = FeedbackLaw::new(problem, &grid)?;
    if problem.target.offset.is_empty() {
        return Ok(law.bar_xi(0, z));
    }
    let shifted = FbsdeProblem {
        target: LinearTarget {
            offset: shift_offset(&problem.target.offset, t),
            ..problem.target.clone()
        },
        ..problem.clone()
    };
    Ok(FeedbackLaw::new(&shifted, &grid)?.bar_xi(0, z))
}

fn shift_offset(off: &OffsetPath, t: f64) -> OffsetPath {
    OffsetPath {
        terms: off
            .terms
            .iter()
            .map(|(m, p)| {
                (
                    m.clone(),
                    SampledPath {
                        times: p.times.iter().map(|s| s - t).collect(),
                        values: p.values.clone(),
                    },
                )
            })
            .collect(),
    }
}

/// `ξ̄` on every point of a finite-horizon grid for a given state path.
pub fn bar_xi_finite(problem: &FbsdeProblem, grid: &TimeGrid, states: &Matrix) -> Result<Matrix> {
    if !problem.horizon.is_finite() {
        return Err(Error::spec("market.horizon", "expected a finite horizon"));
    }
    FeedbackLaw::new(problem, grid)?.bar_xi_path(states)
}

/// Single-agent problem for an exogenous return `μ`: `B = (γ/2)Λ⁻¹Σ`,
/// `ξ = Σ⁻¹μ/γ − ζ`. `mu` and `zeta` must share the state generator.
pub fn individual_problem(
    market: &MarketSpec,
    gamma: f64,
    mu: &LinearTarget,
    zeta: &LinearTarget,
) -> Result<FbsdeProblem> {
    let d = market.d();
    if mu.dim() != d || zeta.dim() != d {
        return Err(Error::dim("individual problem: target dimension", d, mu.dim().min(zeta.dim())));
    }
    if mu.generator != zeta.generator {
        return Err(Error::UnsupportedXi("return and exposure must share one state process".into()));
    }
    let sinv = market.sigma_inv()? / gamma;
    let mut offset = mu.offset.mapped(&sinv);
    offset.extend(zeta.offset.mapped(&-Matrix::identity(d, d)));
    Ok(FbsdeProblem {
        bmat: market.half_cost_scaled_cov() * gamma,
        delta: market.delta,
        horizon: market.horizon,
        target: LinearTarget {
            loading: &sinv * &mu.loading - &zeta.loading,
            generator: mu.generator.clone(),
            offset,
        },
    })
}

/// Optimal strategy of one agent facing the exogenous return `mu`.
pub fn individual_optimal(
    market: &MarketSpec,
    gamma: f64,
    mu: &LinearTarget,
    zeta: &LinearTarget,
    grid: &TimeGrid,
    states: &Matrix,
) -> Result<StrategyPath> {
    let problem = individual_problem(market, gamma, mu, zeta)?;
    FeedbackLaw::new(&problem, grid)?.solve_path(states)
}
