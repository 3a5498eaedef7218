use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;
mod reproduce;

#[derive(Parser)]
#[command(
    name = "zeitgeist",
    version,
    about = "Equilibrium zeitgeist solver, stability analyses and learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
pub struct Pair {
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long = "model-a")]
    pub model_a: PathBuf,
    #[arg(long = "model-b")]
    pub model_b: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Enumerate equilibrium zeitgeists at fixed shares.
    SolveEz {
        #[command(flatten)]
        pair: Pair,
        #[arg(long, value_parser = parse_shares)]
        shares: [f64; 2],
        /// Situation weights for fitness, comma separated; uniform when absent.
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<f64>>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Classify the resident model as stable, fragile or ambiguous against an entrant.
    Classify {
        #[command(flatten)]
        pair: Pair,
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<f64>>,
        #[arg(long = "eps-list", value_delimiter = ',', default_value = "0.01,0.005,0.001")]
        eps_list: Vec<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Singleton-invasion check: separating hyperplane between Nash values and correspondence values.
    Separation {
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Detect a stability reversal between two models in a one-situation environment.
    Reversal {
        #[command(flatten)]
        pair: Pair,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the agent-based learning simulation and compare it with the EZ set.
    Learn {
        #[command(flatten)]
        pair: Pair,
        /// Simulation config (TOML or JSON).
        #[arg(long)]
        sim: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_shares)]
        shares: Option<[f64; 2]>,
        /// Write every k-th period to the trajectory file.
        #[arg(long, default_value_t = 1)]
        every: usize,
        #[arg(long, default_value_t = 500)]
        window: usize,
        /// Belief total-variation tolerance for convergence.
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the three-strategy two-situation example with its two models.
    BuildExample1 {
        /// Perturbation weight of the opponent-independent model.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the investment game with the correct and offset models.
    BuildInvestment {
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value_t = 5.5)]
        c: f64,
        #[arg(long, default_value_t = 12.0)]
        m: f64,
        #[arg(long = "noise-sd", default_value_t = 1.0)]
        noise_sd: f64,
        /// Noisy monitoring accuracy; perfect monitoring when absent.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write a discretized Cournot duopoly with correct and slope-misperceiving models.
    BuildCournot {
        #[arg(long, default_value_t = 10.0)]
        beta: f64,
        #[arg(long, default_value_t = 2.0)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long = "r-hat", default_value_t = 0.5)]
        r_hat: f64,
        /// Number of quantity grid points on [0, (beta - c) / r].
        #[arg(long, default_value_t = 51)]
        grid: usize,
        #[arg(long, default_value_t = 129)]
        bins: usize,
        #[arg(long = "noise-sd", default_value_t = 1.0)]
        noise_sd: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Analogy-class analysis of the centipede game.
    Centipede {
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        g: f64,
        #[arg(long, default_value_t = 2.0)]
        l: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Analogy-class analysis of the dollar game.
    Dollar {
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Rerun every worked example and print expected against actual values.
    Reproduce {
        /// Row groups to run: cournot, example1, investment, centipede, dollar, learning.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<String>>,
        /// Replacement environment for the example1 rows.
        #[arg(long)]
        env: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn parse_shares(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected pA,pB".into());
    }
    let p = [0, 1].map(|i| parts[i].trim().parse::<f64>());
    match p {
        [Ok(a), Ok(b)] if a >= 0.0 && b >= 0.0 && ((a + b) - 1.0).abs() <= 1e-9 => Ok([a, b]),
        [Ok(_), Ok(_)] => Err("shares must be nonnegative and sum to 1".into()),
        _ => Err("shares must be numbers".into()),
    }
}

/// Outcome of a command that ran to completion.
pub enum Status {
    Ok,
    /// Legal input with an empty result.
    Empty,
    /// Some reproduced value missed its target.
    Failed,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("EZ_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("EZ_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("EZ_THREADS must be a positive integer");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    init_threads()?;
    match cli.cmd {
        Cmd::SolveEz { pair, shares, q, out } => commands::solve_ez(&pair, shares, q, &out),
        Cmd::Classify { pair, q, eps_list, out } => commands::classify(&pair, q, &eps_list, &out),
        Cmd::Separation { env, out } => commands::separation(&env, &out),
        Cmd::Reversal { pair, out } => commands::reversal(&pair, &out),
        Cmd::Learn {
            pair,
            sim,
            seed,
            shares,
            every,
            window,
            tol,
            out,
        } => commands::learn(&pair, &sim, seed, shares, every, window, tol, &out),
        Cmd::BuildExample1 { eps, out } => commands::build_example1(eps, &out),
        Cmd::BuildInvestment {
            b,
            c,
            m,
            noise_sd,
            tau,
            out,
        } => commands::build_investment(b, c, m, noise_sd, tau, &out),
        Cmd::BuildCournot {
            beta,
            c,
            r,
            r_hat,
            grid,
            bins,
            noise_sd,
            out,
        } => commands::build_cournot(beta, c, r, r_hat, grid, bins, noise_sd, &out),
        Cmd::Centipede { k, g, l, out } => commands::centipede(k, g, l, &out),
        Cmd::Dollar { k, out } => commands::dollar(k, &out),
        Cmd::Reproduce { only, env, out } => reproduce::run(only, env, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Empty) => ExitCode::from(2),
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
