//! Run configuration: a flat TOML file whose keys mirror the command-line
//! flags. Flags override the file; missing keys take the Animals defaults.

use std::path::Path;

use clap::{Args, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rbhmc::mcmc::ChainConfig;
use rbhmc::vi::ViConfig;
use rbhmc::Hyperparams;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Mcmc,
    Vi,
}

/// Every setting of a run. Covariances are isotropic: `kernel_var · I` and
/// `prior_var · I`; the base mean is `prior_mean · 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub gamma0: f64,
    pub depth: usize,
    pub trunc: usize,
    pub margin_cost: f64,
    pub margin_eps: f64,
    pub eta_prior_scale: f64,
    pub kernel_var: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
    pub vi_weight: f64,
    pub chains: usize,
    pub burnin: usize,
    pub draws: usize,
    pub seed: u64,
    pub mode: Mode,
    pub pca_dims: Option<usize>,
    pub tol: f64,
    pub max_cycles: usize,
    pub branching: usize,
    pub lambda_clamp: f64,
    pub omega_min: f64,
    /// VI regulariser weight is multiplied by this each cycle
    pub vi_anneal: f64,
    pub kappa: f64,
    pub exact_margins: bool,
    /// data size for `generate`
    pub n: usize,
    /// dimension for `generate`
    pub dim: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let h = Hyperparams::animals(1);
        let c = ChainConfig::default();
        let v = ViConfig::default();
        Self {
            alpha: h.alpha,
            gamma: h.gamma,
            gamma0: h.gamma0,
            depth: h.depth,
            trunc: h.trunc,
            margin_cost: h.margin_cost,
            margin_eps: h.margin_eps,
            eta_prior_scale: h.eta_prior_scale,
            kernel_var: 1.0,
            prior_mean: 0.0,
            prior_var: 1.0,
            vi_weight: h.vi_weight,
            chains: 1,
            burnin: c.burnin,
            draws: c.draws,
            seed: 0,
            mode: Mode::Mcmc,
            pca_dims: None,
            tol: v.tol,
            max_cycles: v.max_cycles,
            branching: v.branching,
            lambda_clamp: c.lambda_clamp,
            omega_min: v.omega_min,
            vi_anneal: v.anneal,
            kappa: c.kappa,
            exact_margins: c.exact_margins,
            n: 100,
            dim: 2,
        }
    }
}

/// Flags shared by `generate` and `fit`.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// flat TOML file with any of the keys below
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub trunc: Option<usize>,
    #[arg(long)]
    pub margin_cost: Option<f64>,
    #[arg(long)]
    pub margin_eps: Option<f64>,
    #[arg(long)]
    pub eta_prior_scale: Option<f64>,
    #[arg(long)]
    pub kernel_var: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub prior_mean: Option<f64>,
    #[arg(long)]
    pub prior_var: Option<f64>,
    #[arg(long)]
    pub vi_weight: Option<f64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub pca_dims: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_cycles: Option<usize>,
    #[arg(long)]
    pub branching: Option<usize>,
    #[arg(long)]
    pub lambda_clamp: Option<f64>,
    #[arg(long)]
    pub omega_min: Option<f64>,
    #[arg(long)]
    pub vi_anneal: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub exact_margins: Option<bool>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> CliResult<Self> {
        toml::from_str(s).map_err(|e| CliError::Usage(format!("config: {e}")))
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    /// File (or defaults) with the flags applied on top.
    pub fn resolve(args: &ConfigArgs) -> CliResult<Self> {
        let mut c = match &args.config {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => {
                $(if let Some(v) = args.$f { c.$f = v; })*
            };
        }
        over!(
            alpha,
            gamma,
            gamma0,
            depth,
            trunc,
            margin_cost,
            margin_eps,
            eta_prior_scale,
            kernel_var,
            prior_mean,
            prior_var,
            vi_weight,
            chains,
            burnin,
            draws,
            seed,
            mode,
            tol,
            max_cycles,
            branching,
            lambda_clamp,
            omega_min,
            vi_anneal,
            kappa,
            exact_margins,
            n,
            dim
        );
        if args.pca_dims.is_some() {
            c.pca_dims = args.pca_dims;
        }
        Ok(c)
    }

    pub fn hyper(&self, dim: usize) -> CliResult<Hyperparams> {
        let h = Hyperparams {
            alpha: self.alpha,
            gamma: self.gamma,
            gamma0: self.gamma0,
            depth: self.depth,
            trunc: self.trunc,
            margin_cost: self.margin_cost,
            margin_eps: self.margin_eps,
            eta_prior_scale: self.eta_prior_scale,
            kernel_cov: DMatrix::identity(dim, dim) * self.kernel_var,
            prior_mean: DVector::from_element(dim, self.prior_mean),
            prior_cov: DMatrix::identity(dim, dim) * self.prior_var,
            vi_weight: self.vi_weight,
        };
        h.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(h)
    }

    pub fn chain(&self) -> ChainConfig {
        ChainConfig {
            burnin: self.burnin,
            draws: self.draws,
            kappa: self.kappa,
            lambda_clamp: self.lambda_clamp,
            exact_margins: self.exact_margins,
            ..ChainConfig::default()
        }
    }

    pub fn vi(&self) -> ViConfig {
        ViConfig {
            branching: self.branching,
            max_cycles: self.max_cycles,
            tol: self.tol,
            omega_min: self.omega_min,
            anneal: self.vi_anneal,
            ..ViConfig::default()
        }
    }

    /// Checks that do not depend on the data.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.chains == 0 {
            return bad("chains must be at least 1".into());
        }
        if self.mode == Mode::Mcmc && self.draws == 0 {
            return bad("draws must be at least 1".into());
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be positive (got {})", self.kappa));
        }
        if !(self.lambda_clamp > 0.0) {
            return bad(format!(
                "lambda_clamp must be positive (got {})",
                self.lambda_clamp
            ));
        }
        if !(self.omega_min > 0.0) {
            return bad(format!(
                "omega_min must be positive (got {})",
                self.omega_min
            ));
        }
        if !(self.vi_anneal > 0.0 && self.vi_anneal.is_finite()) {
            return bad(format!(
                "vi_anneal must be positive (got {})",
                self.vi_anneal
            ));
        }
        if !(self.tol >= 0.0) {
            return bad(format!("tol must be non-negative (got {})", self.tol));
        }
        if self.max_cycles == 0 || self.branching == 0 {
            return bad("max_cycles and branching must be at least 1".into());
        }
        if self.pca_dims == Some(0) {
            return bad("pca_dims must be at least 1".into());
        }
        if !(self.kernel_var > 0.0 && self.prior_var > 0.0) {
            return bad("kernel_var and prior_var must be positive".into());
        }
        Ok(())
    }
}
