use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hho_core::assembly::Method;
use hho_core::basis::GradSpace;
use hho_core::config::{run_study, LevelResult, RunConfig};
use hho_core::verify::run_checks;
use hho_core::{HhoError, Result};

/// Thread count of the per-cell parallel phases.
const THREADS_ENV: &str = "HHO_NUM_THREADS";

#[derive(Parser)]
#[command(name = "hho", version, about = "HHO solvers for finite-deformation hyperelasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a case on each refinement level and write CSV/VTK output.
    Run(SolveArgs),
    /// Refinement study against the exact solution of a case.
    Convergence(SolveArgs),
    /// Run the operator property checks on random cells.
    Verify {
        #[arg(long, default_value_t = 20)]
        cells: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct SolveArgs {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, short = 'k')]
    order: Option<usize>,
    #[arg(long)]
    grad_space: Option<GradSpace>,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    load_steps: Option<usize>,
    /// Multiplies the imposed boundary displacement of the case.
    #[arg(long)]
    load_scale: Option<f64>,
    /// Moves interior vertices randomly by this fraction of the local edge length.
    #[arg(long)]
    jitter: Option<f64>,
}

impl SolveArgs {
    fn into_config(self, default_levels: usize) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let case = self
                    .case
                    .clone()
                    .ok_or_else(|| HhoError::Config("either --config or --case is required".into()))?;
                let mut cfg = RunConfig::new(&case, self.method.unwrap_or(Method::Shho), 1);
                cfg.run.levels = default_levels;
                cfg
            }
        };
        if let Some(v) = self.case {
            cfg.run.case = v;
        }
        if let Some(v) = self.method {
            cfg.method.method = v;
        }
        if let Some(v) = self.order {
            cfg.method.k = v;
        }
        if let Some(v) = self.grad_space {
            cfg.method.grad_space = Some(v);
        }
        if let Some(v) = self.beta0 {
            cfg.method.beta0 = Some(v);
        }
        if let Some(v) = self.levels {
            cfg.run.levels = v;
        }
        if let Some(v) = self.mesh {
            cfg.run.mesh = Some(v);
        }
        if let Some(v) = self.out {
            cfg.run.out = v;
        }
        if let Some(v) = self.lambda {
            cfg.material.lambda = Some(v);
        }
        if let Some(v) = self.mu {
            cfg.material.mu = Some(v);
        }
        if let Some(v) = self.load_steps {
            cfg.newton.load_steps = Some(v);
        }
        if let Some(v) = self.load_scale {
            cfg.run.load_scale = Some(v);
        }
        if let Some(v) = self.jitter {
            cfg.run.jitter = Some(v);
        }
        Ok(cfg)
    }
}

fn report_level(r: &LevelResult) {
    eprintln!(
        "level {}: h = {:.4e}, {} cells, {} load steps, {} Newton iterations, min J = {:.4}",
        r.level,
        r.h,
        r.solver.disc.num_cells(),
        r.log.steps.len(),
        r.log.total_iterations(),
        r.min_jacobian
    );
}

fn solve(args: SolveArgs, default_levels: usize, need_exact: bool) -> Result<()> {
    let cfg = args.into_config(default_levels)?;
    let case = cfg.case()?;
    if need_exact && case.exact.is_none() {
        return Err(HhoError::Config(format!(
            "case '{}' has no exact solution for a convergence study",
            case.name
        )));
    }
    let report = run_study(&cfg, report_level)?;
    report.print_table();
    eprintln!("output written to {}", cfg.run.out.display());
    Ok(())
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| HhoError::Config(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HhoError::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = init_threads().and_then(|()| match cli.command {
        Command::Run(args) => solve(args, 1, false),
        Command::Convergence(args) => solve(args, 3, true),
        Command::Verify { cells, seed } => {
            let checks = run_checks(cells, seed)?;
            let mut ok = true;
            for c in &checks {
                println!("{c}");
                ok &= c.passed;
            }
            if ok {
                Ok(())
            } else {
                Err(HhoError::Config("some property checks failed".into()))
            }
        }
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
