use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rbhmc_cli::config::ConfigArgs;
use rbhmc_cli::{cmd_eval, cmd_fit, cmd_generate, cmd_pca, CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(
    name = "rbhmc",
    version,
    about = "Regularised Bayesian hierarchical mixture clustering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset with its ground-truth tree
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Project a CSV onto its principal components
    Pca {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        dims: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run MCMC chains or VI fits
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// worker threads for the chains
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// AID, AOD and per-level F-measure of a tree JSON
    Eval {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// write the report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Generate { out, cfg } => {
            let g = cmd_generate(&RunConfig::resolve(&cfg)?, &out)?;
            eprintln!(
                "wrote {} data, {} nodes to {}",
                g.data.len(),
                g.tree.len(),
                out.display()
            );
        }
        Command::Pca { input, dims, out } => {
            let p = cmd_pca(&input, dims, &out)?;
            eprintln!("explained variance {:.6}", p.explained());
        }
        Command::Fit {
            data,
            out,
            jobs,
            cfg,
        } => {
            let s = cmd_fit(&RunConfig::resolve(&cfg)?, &data, &out, jobs)?;
            for c in &s.chains {
                eprintln!(
                    "chain {} (seed {}): objective {} at {}",
                    c.chain, c.seed, c.objective, c.iteration
                );
            }
        }
        Command::Eval {
            tree,
            data,
            labels,
            out,
        } => {
            let r = cmd_eval(&tree, &data, labels.as_deref())?;
            let mut s = serde_json::to_string_pretty(&r).expect("report serialises");
            s.push('\n');
            match out {
                Some(p) => std::fs::write(&p, s)
                    .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
                None => print!("{s}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
