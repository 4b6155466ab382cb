use std::fmt::Write;

use tcequil::equilibrium::{corollary_coefficients, MeanLevel};
use tcequil::model::state::BlockKind;
use tcequil::model::{Horizon, NoiseTraderSpec, StateLayout, ValidatedScenario};
use tcequil::oracle::{self, discrete_gap, fbsde_drift_residual, perturbation_suite, residual_report, stacked};
use tcequil::sim::{fit_ou_dynamics, scenario_grid};
use tcequil::{EquilibriumSolver, Error, PathGenerator, TimeGrid};

use crate::embedded;

pub const BUILTINS: [&str; 7] = [
    "cor54",
    "cor55",
    "homogeneous",
    "gp-noise",
    "ramp-finite",
    "three-agent-finite",
    "discrete-oracle",
];

const COR54: &str = include_str!("../../../scenarios/cor54.json");
const COR55: &str = include_str!("../../../scenarios/cor55.json");
const HOMOGENEOUS: &str = include_str!("../../../scenarios/homogeneous.json");
const GP_NOISE: &str = include_str!("../../../scenarios/gp_noise.json");
const RAMP_FINITE: &str = include_str!("../../../scenarios/ramp_finite.json");
const THREE_AGENT_FINITE: &str = include_str!("../../../scenarios/three_agent_finite.json");

/// Regression settings for the corollary checks. The fit is exact up to an
/// `O(dt)` bias, so a handful of coarse paths suffices.
const FIT_PATHS: usize = 20;
const FIT_DT: f64 = 0.01;
const FIT_T_MAX: f64 = 20.0;
const ORACLE_STEPS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    AtMost(f64),
    Within(f64, f64),
    Above(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, bound: Bound) -> Self {
        let pass = match bound {
            Bound::AtMost(b) => value <= b,
            Bound::Within(lo, hi) => (lo..=hi).contains(&value),
            Bound::Above(b) => value > b,
        };
        Check {
            name: name.into(),
            value,
            bound,
            pass,
        }
    }
}

fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Check {
    Check::new(name, value, Bound::AtMost(bound))
}

pub fn render(checks: &[Check]) -> String {
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>14}  {:>22}  result", "check", "value", "threshold");
    for c in checks {
        let bound = match c.bound {
            Bound::AtMost(b) => format!("<= {b:.3e}"),
            Bound::Within(lo, hi) => format!("in [{lo}, {hi}]"),
            Bound::Above(b) => format!("> {b:.3e}"),
        };
        let verdict = if c.pass { "pass" } else { "FAIL" };
        let _ = writeln!(out, "{:<width$}  {:>14.6e}  {:>22}  {verdict}", c.name, c.value, bound);
    }
    out
}

pub fn builtin(name: &str) -> Option<Result<Vec<Check>, Error>> {
    let text = match name {
        "cor54" => COR54,
        "cor55" => COR55,
        "homogeneous" => HOMOGENEOUS,
        "gp-noise" => GP_NOISE,
        "ramp-finite" => RAMP_FINITE,
        "three-agent-finite" => THREE_AGENT_FINITE,
        "discrete-oracle" => return Some(discrete_oracle_suite()),
        _ => return None,
    };
    Some(embedded(text).and_then(|s| scenario_checks(&s)))
}

pub fn all_builtins() -> Result<Vec<Check>, Error> {
    let mut out = Vec::new();
    for name in BUILTINS {
        for mut c in builtin(name).expect("listed builtin")? {
            c.name = format!("{name}: {}", c.name);
            out.push(c);
        }
    }
    Ok(out)
}

fn discrete_oracle_suite() -> Result<Vec<Check>, Error> {
    let s = embedded(RAMP_FINITE)?;
    let a = discrete_gap(&s, ORACLE_STEPS)?;
    let b = discrete_gap(&s, 2 * ORACLE_STEPS)?;
    Ok(vec![
        at_most(format!("discrete oracle gap, K={ORACLE_STEPS}"), a.max(), 1e-2),
        Check::new(
            format!("gap ratio K={ORACLE_STEPS} / K={}", 2 * ORACLE_STEPS),
            a.max() / b.max(),
            Bound::Within(1.7, 2.3),
        ),
    ])
}

/// `true` when the noise-free path equals the conditional-mean path.
fn skeleton_is_exact(layout: &StateLayout) -> bool {
    !layout
        .blocks
        .iter()
        .any(|b| matches!(b.kind, BlockKind::TargetPsi { .. } | BlockKind::TargetX { .. }))
}

/// Every check that applies to the scenario.
pub fn scenario_checks(s: &ValidatedScenario) -> Result<Vec<Check>, Error> {
    let cfg = &s.simulation;
    let mut out = Vec::new();
    let grid = scenario_grid(s, cfg.dt, cfg.t_max)?;
    let generator = PathGenerator::new(s, &grid)?;
    let solver = EquilibriumSolver::new(s, &grid)?;
    let eq = solver.solve(&generator.generate(cfg.seed, 0))?;
    out.push(at_most("clearing residual", eq.clearing_residual, 1e-12));
    let gap = (&eq.liqprem - &eq.liqprem_covariance - &eq.liqprem_noise).amax();
    out.push(at_most("premium decomposition gap", gap, 1e-10));
    if s.is_homogeneous() {
        if s.noise == NoiseTraderSpec::None {
            out.push(at_most("homogeneous premium", eq.liqprem.amax(), 1e-12));
        } else {
            let v = (&eq.liqprem - &eq.liqprem_noise).amax();
            out.push(at_most("homogeneous premium minus noise term", v, 1e-10));
        }
    }

    let layout = StateLayout::new(s);
    if s.n_agents() >= 2 && skeleton_is_exact(&layout) && !s.market.horizon.is_finite() {
        let skeleton = generator.skeleton();
        let eq = solver.solve(&skeleton)?;
        let (phi, phi_dot) = stacked(s, &eq);
        let xi = solver.target_path(&skeleton).expect("two or more agents");
        let bmat = &solver.system().expect("two or more agents").bmat;
        let r = fbsde_drift_residual(&phi, &phi_dot, &xi, bmat, s.market.delta, &grid)?;
        out.push(at_most("drift residual on the noise-free path", r, 1e-6));
    }

    if let Ok(c) = corollary_coefficients(s) {
        out.extend(corollary_checks(s, &c)?);
    }

    if let Horizon::Finite(t) = s.market.horizon {
        if layout.is_deterministic() {
            out.extend(deterministic_checks(s, t)?);
        }
    }
    Ok(out)
}

fn corollary_checks(s: &ValidatedScenario, c: &tcequil::OUCoefficients) -> Result<Vec<Check>, Error> {
    let mut out = Vec::new();
    if s.is_homogeneous() {
        out.push(at_most("closed-form vol (homogeneous)", c.vol.amax(), 0.0));
        let mean = match &c.mean_level {
            MeanLevel::Constant(v) => v.amax(),
            MeanLevel::Linear(m) => m.amax(),
        };
        out.push(at_most("closed-form mean level (homogeneous)", mean, 0.0));
        return Ok(out);
    }
    let fit = fit_ou_dynamics(s, FIT_PATHS, FIT_DT, FIT_T_MAX, s.simulation.seed, Some(0))?;
    out.push(at_most("regression speed error", (&fit.speed - &c.speed).amax(), 0.02));
    match &c.mean_level {
        MeanLevel::Constant(v) => {
            out.push(at_most("regression mean level error", (&fit.mean_level - v).amax(), 0.005));
        }
        MeanLevel::Linear(m) => {
            let est = fit.mean_map.as_ref().expect("fit includes the exposure regressor");
            out.push(at_most("regression mean-level map error", (est - m).amax(), 0.01));
        }
    }
    let first = s.canonical_index(0);
    let (src, sign) = s.exposure_source(first);
    let driver = s.order[src] as u64;
    if let Some((_, v)) = fit.vol.iter().find(|(id, _)| *id == driver) {
        out.push(at_most("regression vol error", (v - &c.vol * sign).amax(), 0.02));
    }
    Ok(out)
}

fn deterministic_checks(s: &ValidatedScenario, horizon: f64) -> Result<Vec<Check>, Error> {
    let mut out = Vec::new();
    let dt = 1e-3;
    let r = residual_report(s, dt)?;
    for (i, v) in r.foc.iter().enumerate() {
        out.push(at_most(format!("first-order residual, agent {}", i + 1), *v, 1e-6));
    }
    if let Some(v) = r.drift {
        out.push(at_most("drift residual", v, 1e-6));
    }
    if s.noise == NoiseTraderSpec::None {
        let (_, eq) = oracle::deterministic_equilibrium(s, dt)?;
        let grid = TimeGrid::spanning(dt, horizon)?;
        let terminal = eq
            .phi_dot
            .iter()
            .map(|p| p.column(grid.n_steps).amax())
            .fold(0.0, f64::max);
        out.push(at_most("terminal trading rate", terminal, 0.0));
    }
    let p = perturbation_suite(s, dt, 20, 1e-2, s.simulation.seed)?;
    out.push(Check::new("optimum minus best of 20 perturbations", p.worst_margin, Bound::Above(0.0)));
    if s.n_agents() >= 2 {
        let a = discrete_gap(s, ORACLE_STEPS)?;
        out.push(at_most(format!("discrete oracle gap, K={ORACLE_STEPS}"), a.max(), 1e-2));
    }
    Ok(out)
}
