//! The four subcommands as library functions.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rbhmc::export::{newick, TreeDoc};
use rbhmc::mcmc::{self, cdl};
use rbhmc::metrics::{self, EvalReport};
use rbhmc::model::{generate_dataset, Generated};
use rbhmc::vi;
use rbhmc::Dataset;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};
use crate::io;
use crate::pca::{pca, Pca};
use crate::{CliError, CliResult};

fn write(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Synthetic data from the prior: `data.csv`, `tree.json` and `labels.csv`
/// (class = leaf id) under `out_dir`.
pub fn cmd_generate(cfg: &RunConfig, out_dir: &Path) -> CliResult<Generated> {
    let h = cfg.hyper(cfg.dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let g = generate_dataset(&h, cfg.n, &mut rng)?;
    create_dir(out_dir)?;
    let paths: Vec<&[usize]> = g.assignments.iter().map(|a| a.path.as_slice()).collect();
    write(&out_dir.join("data.csv"), &io::format_dataset(&g.data))?;
    write(
        &out_dir.join("tree.json"),
        &TreeDoc::new(&g.tree, &paths, &g.kernels)?.to_json(),
    )?;
    let labels = g.data.labels().expect("generated data carry labels");
    write(&out_dir.join("labels.csv"), &io::format_labels(labels))?;
    Ok(g)
}

/// Project `input` onto its top `dims` principal components.
pub fn cmd_pca(input: &Path, dims: usize, out: &Path) -> CliResult<Pca> {
    let data = io::read_data(input)?;
    let p = pca(&data.to_matrix(), dims)?;
    let rows: Vec<Vec<f64>> = p
        .scores
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    write(out, &io::format_rows(rows.iter().map(|r| r.as_slice())))?;
    Ok(p)
}

/// Per-chain entry of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub seed: u64,
    pub dir: String,
    /// RCDL of the selected draw (mcmc) or final RELBO (vi)
    pub objective: f64,
    /// CDL of the selected draw (mcmc only)
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cdl: Option<f64>,
    /// selected iteration (mcmc) or cycles run (vi)
    pub iteration: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub mode: Mode,
    pub data_rows: usize,
    pub dim: usize,
    pub chains: Vec<ChainSummary>,
    pub warnings: Vec<String>,
}

struct ChainFiles {
    trace: String,
    tree: String,
    newick: String,
    summary: ChainSummary,
}

fn run_mcmc_chain(cfg: &RunConfig, data: &Dataset, chain: usize) -> CliResult<ChainFiles> {
    let h = cfg.hyper(data.dim())?;
    let seed = cfg.seed.wrapping_add(chain as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = mcmc::run_chain(&cfg.chain(), data, &h, &mut rng)?;
    let best = out.best();
    let doc = TreeDoc::new(&best.state.tree, &best.state.paths(), &best.state.kernels)?;
    Ok(ChainFiles {
        trace: out.trace.to_csv(),
        tree: doc.to_json(),
        newick: newick(&best.state.tree),
        summary: ChainSummary {
            chain,
            seed,
            dir: format!("chain_{chain}"),
            objective: best.rcdl,
            cdl: Some(cdl(&best.state)),
            iteration: best.iter,
            converged: None,
            nodes: best.state.tree.len(),
        },
    })
}

fn run_vi_chain(cfg: &RunConfig, data: &Dataset, chain: usize) -> CliResult<ChainFiles> {
    let h = cfg.hyper(data.dim())?;
    let seed = cfg.seed.wrapping_add(chain as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fit = vi::fit_vi(&cfg.vi(), data, &h, &mut rng)?;
    let (tree, paths) = fit.to_tree(data, &h)?;
    let doc = TreeDoc::new(&tree, &paths, &fit.state.kernel_mean)?;
    let last = fit.trace.last().map_or(fit.initial_relbo, |r| r.relbo);
    Ok(ChainFiles {
        trace: fit.trace_csv(),
        tree: doc.to_json(),
        newick: newick(&tree),
        summary: ChainSummary {
            chain,
            seed,
            dir: format!("chain_{chain}"),
            objective: last,
            cdl: None,
            iteration: fit.trace.len(),
            converged: Some(fit.converged),
            nodes: tree.len(),
        },
    })
}

/// Fit `chains` independent runs (seeds seed, seed+1, ...) on at most `jobs`
/// threads. Writes `chain_i/{trace.csv,tree.json,tree.nwk}` and
/// `summary.json` under `out_dir`.
pub fn cmd_fit(
    cfg: &RunConfig,
    data_path: &Path,
    out_dir: &Path,
    jobs: usize,
) -> CliResult<FitSummary> {
    cfg.validate()?;
    let mut data = io::read_data(data_path)?;
    if let Some(d) = cfg.pca_dims {
        let p = pca(&data.to_matrix(), d)?;
        data = Dataset::from_matrix(&p.scores)?;
    }
    cfg.hyper(data.dim())?;
    let mut warnings = Vec::new();
    if cfg.mode == Mode::Vi {
        let w = format!(
            "mode=vi ignores burnin ({}) and draws ({})",
            cfg.burnin, cfg.draws
        );
        eprintln!("warning: {w}");
        warnings.push(w);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let results: Vec<CliResult<ChainFiles>> = pool.install(|| {
        (0..cfg.chains)
            .into_par_iter()
            .map(|c| match cfg.mode {
                Mode::Mcmc => run_mcmc_chain(cfg, &data, c),
                Mode::Vi => run_vi_chain(cfg, &data, c),
            })
            .collect()
    });
    create_dir(out_dir)?;
    let mut chains = Vec::with_capacity(results.len());
    for r in results {
        let f = r?;
        let dir: PathBuf = out_dir.join(&f.summary.dir);
        create_dir(&dir)?;
        write(&dir.join("trace.csv"), &f.trace)?;
        write(&dir.join("tree.json"), &f.tree)?;
        write(&dir.join("tree.nwk"), &(f.newick + "\n"))?;
        chains.push(f.summary);
    }
    let summary = FitSummary {
        mode: cfg.mode,
        data_rows: data.len(),
        dim: data.dim(),
        chains,
        warnings,
    };
    let mut js = serde_json::to_string_pretty(&summary).expect("summary serialises");
    js.push('\n');
    write(&out_dir.join("summary.json"), &js)?;
    Ok(summary)
}

/// Evaluate a tree JSON against its data and optional labels.
pub fn cmd_eval(
    tree_json: &Path,
    data_path: &Path,
    labels: Option<&Path>,
) -> CliResult<EvalReport> {
    let text = std::fs::read_to_string(tree_json)
        .map_err(|e| CliError::Data(format!("{}: {e}", tree_json.display())))?;
    let (tree, paths) = TreeDoc::from_json(&text)?.to_tree()?;
    let data = io::read_data(data_path)?;
    if paths.len() != data.len() {
        return Err(CliError::Data(format!(
            "tree covers {} data but {} has {} rows",
            paths.len(),
            data_path.display(),
            data.len()
        )));
    }
    if tree.dim() != data.dim() {
        return Err(CliError::Data(format!(
            "tree has dimension {}, data {}",
            tree.dim(),
            data.dim()
        )));
    }
    let labels = labels.map(|p| io::read_labels(p, data.len())).transpose()?;
    Ok(metrics::evaluate(&tree, &paths, &data, labels.as_deref())?)
}
