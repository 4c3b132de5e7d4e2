use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use weighted_ou::functions::named_test_function;
use weighted_ou::harness::{run_experiment, ExperimentConfig, Task};
use weighted_ou::prox::{prox_point_with, ProxOptions};
use weighted_ou::semigroup::{resolvent_derivatives, semigroup_apply, DiffusionConfig};
use weighted_ou::weight::{parse_weight, ConvexWeight};
use weighted_ou::wiener::{max_endpoint_weight, sample_path, EnergyWeight, WienerBasis};
use weighted_ou::{Error, MCValue};

#[derive(Parser)]
#[command(name = "weighted-ou", version, about = "Weighted Ornstein-Uhlenbeck operators: prox, semigroup, resolvent and estimate checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo paths; overrides the config.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Only print errors and the final status.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Proximal point and Moreau envelope of a weight.
    Prox {
        /// Weight descriptor, e.g. `huber:0.5`, `quadratic:1,2`, `l1`.
        #[arg(long)]
        weight: String,
        /// Point, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Monte Carlo `T_t f (x)`.
    Semigroup {
        #[arg(long, default_value = "zero")]
        weight: String,
        #[arg(long = "fn", default_value = "tanh")]
        test_fn: String,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
    /// Monte Carlo `R(lambda) f (x)` with gradient and Hessian.
    Resolvent {
        #[arg(long, default_value = "zero")]
        weight: String,
        #[arg(long = "fn", default_value = "tanh")]
        test_fn: String,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
        #[arg(long, default_value_t = 0.05)]
        fd_step: f64,
    },
    /// Sample Brownian paths and tabulate the two Wiener weights.
    WienerDemo {
        #[arg(long, default_value_t = 64)]
        modes: usize,
        #[arg(long, default_value_t = 2048)]
        grid_points: usize,
        #[arg(long, default_value_t = 3)]
        samples: usize,
    },
    /// Resolvent estimate rows (`tasks = ["main"]`).
    VerifyEstimates,
    /// Domain-equivalence and dissipativity rows (`tasks = ["domain"]`).
    VerifyDomain,
}

fn parse_point(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad coordinate {t:?}: {e}"))))
        .collect()
}

fn fmt_mc(v: &MCValue) -> String {
    format!("{:.8} +- {:.2e} (bias <= {:.2e})", v.mean, v.std_error, v.bias_bound)
}

fn exit_for(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) | Error::Domain(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn run_verify(g: &Global, task: Task) -> ExitCode {
    let Some(path) = g.config.as_deref() else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(2);
    };
    let mut cfg = match ExperimentConfig::from_path(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    cfg.tasks = vec![task];
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.output_dir = o.clone();
    }
    if let Some(p) = g.paths {
        cfg.mc.paths = p;
    }
    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    if let Err(e) = report.write_artifacts(&cfg.output_dir) {
        eprintln!("error writing artifacts: {e}");
        return ExitCode::from(1);
    }
    let summary = report.summary();
    if g.quiet {
        let first = summary.lines().next().unwrap_or_default();
        println!("{first}");
    } else {
        print!("{summary}");
        println!("artifacts in {}", cfg.output_dir.display());
    }
    if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn diffusion(g: &Global, dt: f64) -> DiffusionConfig {
    DiffusionConfig { dt, paths: g.paths.unwrap_or(10_000), seed: g.seed.unwrap_or(0), ..DiffusionConfig::default() }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let g = &cli.global;
    match &cli.command {
        Command::Prox { weight, x, alpha } => {
            let x = parse_point(x)?;
            let w = parse_weight(weight, x.len())?;
            let r = prox_point_with(&*w, &x, *alpha, &ProxOptions::default())?;
            println!("weight      {}", w.label());
            println!("minimizer   {:?}", r.minimizer);
            println!("envelope    {:.12}", r.envelope);
            println!("gradient    {:?}", r.gradient);
            println!("iterations  {}  residual {:.2e}", r.iterations, r.residual);
        }
        Command::Semigroup { weight, test_fn, t, x, dt } => {
            let x = parse_point(x)?;
            let w = parse_weight(weight, x.len())?;
            let f = named_test_function(test_fn, x.len())?;
            let v = semigroup_apply(&*w, &*f, *t, &x, &diffusion(g, *dt))?;
            println!("T_{t} {test_fn} ({}) = {}", weight, fmt_mc(&v));
        }
        Command::Resolvent { weight, test_fn, lambda, x, dt, fd_step } => {
            let x = parse_point(x)?;
            let w = parse_weight(weight, x.len())?;
            let f = named_test_function(test_fn, x.len())?;
            let d = resolvent_derivatives(&*w, &*f, *lambda, &x, &diffusion(g, *dt), *fd_step)?;
            println!("value     {}", fmt_mc(&d.value));
            for (i, gi) in d.gradient.iter().enumerate() {
                println!("grad[{i}]   {}", fmt_mc(gi));
            }
            let n = x.len();
            for i in 0..n {
                println!("hess[{i}][{i}] {}", fmt_mc(&d.hessian[i * n + i]));
            }
        }
        Command::WienerDemo { modes, grid_points, samples } => {
            let basis = WienerBasis::new(*modes);
            let grid = WienerBasis::uniform_grid(*grid_points);
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("out/wiener"));
            std::fs::create_dir_all(&out)?;
            let energy = Arc::new(EnergyWeight::new(*modes));
            if !g.quiet {
                println!("orthonormality error {:.2e}", basis.orthonormality_error(10_000));
                println!("{:>6} {:>12} {:>12} {:>10} {:>12} {:>12}", "path", "energy", "dU/dh_1", "argmax", "max+end", "dU/dh_1");
            }
            for k in 0..*samples {
                let p = sample_path(&basis, &grid, g.seed.unwrap_or(0), k as u64);
                p.write_csv(&out.join(format!("path_{k}.csv")))?;
                let mut ge = vec![0.0; *modes];
                let ev = energy.value_and_subgradient(&p.coeffs, &mut ge);
                let me = max_endpoint_weight(&p);
                if !g.quiet {
                    println!("{:>6} {:>12.6} {:>12.6} {:>10.5} {:>12.6} {:>12.6}", k, ev, ge[0], me.argmax, me.value, me.gradient[0]);
                }
            }
            if !g.quiet {
                println!("paths written to {}", out.display());
            }
        }
        Command::VerifyEstimates | Command::VerifyDomain => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::VerifyEstimates => return run_verify(&cli.global, Task::Main),
        Command::VerifyDomain => return run_verify(&cli.global, Task::Domain),
        _ => {}
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

