mod checks;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tcequil::equilibrium::{corollary_coefficients, MeanLevel};
use tcequil::model::{load_scenario, parse_scenario, validate, ExposureSpec, Scenario, ValidatedScenario};
use tcequil::sim::{run_monte_carlo, scenario_grid};
use tcequil::{EquilibriumSolver, Matrix, PathGenerator};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tcequil::Error),
    #[error("cannot write `{path}`: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("`{0}` is neither a readable scenario file nor a builtin suite ({1})")]
    UnknownTarget(String, String),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use tcequil::Error as E;
        match self {
            CliError::Core(E::Io { .. } | E::Spec { .. } | E::Pattern(_) | E::UnsupportedXi(_) | E::Dimension { .. }) => 2,
            CliError::UnknownTarget(..) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "tcequil", version, about = "Risk-sharing equilibria with quadratic transaction costs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write CSV output.
    Run(RunArgs),
    /// Run residual, oracle and convergence checks.
    Verify(VerifyArgs),
    /// Print the closed-form OU coefficients of a two-agent mirrored scenario.
    Coeffs(CoeffsArgs),
}

#[derive(Args)]
struct SimFlags {
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    sim: SimFlags,
    /// Skip the single-path file and write only `summary.csv`.
    #[arg(long = "aggregate-only")]
    aggregate_only: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Scenario file or builtin suite name.
    target: Option<String>,
    #[arg(long, conflicts_with = "target")]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    sim: SimFlags,
}

#[derive(Args)]
struct CoeffsArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

fn load(path: &Path) -> Result<(Scenario, ValidatedScenario), CliError> {
    let raw = load_scenario(path)?;
    let valid = validate(&raw)?;
    Ok((raw, valid))
}

fn apply(flags: &SimFlags, scenario: &mut Scenario) {
    let sim = &mut scenario.simulation;
    sim.dt = flags.dt.unwrap_or(sim.dt);
    sim.t_max = flags.t_max.unwrap_or(sim.t_max);
    sim.n_paths = flags.paths.unwrap_or(sim.n_paths);
    sim.seed = flags.seed.unwrap_or(sim.seed);
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let (mut raw, _) = load(&args.scenario)?;
    apply(&args.sim, &mut raw);
    let scenario = validate(&raw)?;
    let cfg = &scenario.simulation;
    std::fs::create_dir_all(&args.out_dir).map_err(|source| CliError::Write {
        path: args.out_dir.clone(),
        source,
    })?;
    let grid = scenario_grid(&scenario, cfg.dt, cfg.t_max)?;
    if !args.aggregate_only {
        let path = PathGenerator::new(&scenario, &grid)?.generate(cfg.seed, 0);
        let eq = EquilibriumSolver::new(&scenario, &grid)?.solve(&path)?;
        let file = args.out_dir.join("equilibrium.csv");
        output::write_equilibrium(&file, &eq)?;
        println!("wrote {}", file.display());
    }
    if args.aggregate_only || cfg.n_paths > 1 {
        let summary = run_monte_carlo(&scenario, cfg.n_paths, cfg.dt, cfg.t_max, cfg.seed)?;
        let file = args.out_dir.join("summary.csv");
        output::write_summary(&file, &summary)?;
        println!("wrote {}", file.display());
        let ac: Vec<String> = summary.increment_autocorr.iter().map(|v| format!("{v:.6}")).collect();
        println!(
            "paths {}  steps {}  dt {}  lag-1 increment autocorrelation [{}]",
            summary.n_paths,
            grid.n_steps,
            grid.dt,
            ac.join(", ")
        );
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let report = match (&args.target, &args.scenario) {
        (_, Some(file)) => scenario_report(file, &args.sim)?,
        (Some(t), None) if Path::new(t).is_file() => scenario_report(Path::new(t), &args.sim)?,
        (Some(t), None) => match checks::builtin(t) {
            Some(suite) => suite?,
            None => {
                return Err(CliError::UnknownTarget(t.clone(), checks::BUILTINS.join(", ")));
            }
        },
        (None, None) => checks::all_builtins()?,
    };
    print!("{}", checks::render(&report));
    let failed = report.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}

fn scenario_report(path: &Path, flags: &SimFlags) -> Result<Vec<checks::Check>, CliError> {
    let (mut raw, _) = load(path)?;
    apply(flags, &mut raw);
    Ok(checks::scenario_checks(&validate(&raw)?)?)
}

fn matrix_json(m: &Matrix) -> serde_json::Value {
    m.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect()
}

fn matrix_text(m: &Matrix) -> String {
    m.row_iter()
        .map(|r| {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:>14.8}")).collect();
            format!("  {}", cells.join(" "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn cmd_coeffs(args: &CoeffsArgs) -> Result<(), CliError> {
    let (_, scenario) = load(&args.scenario)?;
    let c = corollary_coefficients(&scenario)?;
    let (src, _) = scenario.exposure_source(scenario.canonical_index(0));
    let pattern = match scenario.agents[src].exposure {
        ExposureSpec::Ou { .. } => "mirrored_ou",
        _ => "mirrored_abm",
    };
    if args.json {
        let mean = match &c.mean_level {
            MeanLevel::Constant(v) => serde_json::json!({ "constant": v.iter().copied().collect::<Vec<f64>>() }),
            MeanLevel::Linear(m) => serde_json::json!({ "linear": matrix_json(m) }),
        };
        let out = serde_json::json!({
            "pattern": pattern,
            "speed": matrix_json(&c.speed),
            "mean_level": mean,
            "vol": matrix_json(&c.vol),
        });
        println!("{out}");
        return Ok(());
    }
    println!("pattern: {pattern}");
    println!("speed:\n{}", matrix_text(&c.speed));
    match &c.mean_level {
        MeanLevel::Constant(v) => {
            println!("mean level (constant):\n{}", matrix_text(&Matrix::from_column_slice(v.len(), 1, v.as_slice())))
        }
        MeanLevel::Linear(m) => println!("mean level (applied to the first agent's exposure):\n{}", matrix_text(m)),
    }
    println!("vol:\n{}", matrix_text(&c.vol));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Coeffs(a) => cmd_coeffs(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

// builtin suites parse embedded scenario text
pub(crate) fn embedded(text: &str) -> Result<ValidatedScenario, tcequil::Error> {
    validate(&parse_scenario(text)?)
}
