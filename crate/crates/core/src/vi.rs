//! Regularised coordinate-ascent variational inference on a fixed tree skeleton.
//!
//! q factorises into delta path indicators, per-path responsibilities ρ,
//! Beta sticks for every non-root node, Beta sticks for the root GEM,
//! Dirichlet weights ω for non-root nodes and Gaussian kernels N(m_k, Φ_k).
//! The objective is the ELBO (with the Beta-function lower bound on the
//! Dirichlet normaliser) minus ϱ times the log-sum-of-expectations bound on
//! the sibling similarity term.
//!
//! Updates that have no exact coordinate optimum (internal-node ω, root
//! sticks, and kernels when ϱ > 0) are taken as damped steps: the closed-form
//! candidate is tried first and halved in log space until the objective does
//! not decrease.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::gauss::{cholesky, log_sum_exp, normalise_log, GaussianKernel, LN_2PI};
use crate::model::{Dataset, Hyperparams, NodeId, Tree, ROOT};

/// Complete or copied tree structure with nodes numbered breadth first.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    tree: Tree,
    paths: Vec<Vec<NodeId>>,
}

impl Skeleton {
    /// Complete tree of the given depth where every internal node has
    /// `branching` children.
    pub fn complete(depth: usize, branching: usize, trunc: usize, dim: usize) -> Result<Self> {
        if branching == 0 {
            return Err(Error::Param("branching must be at least 1".into()));
        }
        let uniform = vec![1.0 / (trunc + 1) as f64; trunc + 1];
        let mut tree = Tree::new(depth, trunc, dim, uniform.clone())?;
        let mut frontier = vec![ROOT];
        for _ in 0..depth {
            let mut next = Vec::new();
            for p in frontier {
                for _ in 0..branching {
                    next.push(tree.add_child(p, uniform.clone(), DVector::zeros(dim))?);
                }
            }
            frontier = next;
        }
        Ok(Self::from_built(tree))
    }

    /// Copy the shape of an existing tree (e.g. an MCMC output), renumbering
    /// breadth first and keeping sibling order.
    pub fn from_tree(src: &Tree) -> Result<Self> {
        let (k, d) = (src.trunc(), src.dim());
        let uniform = vec![1.0 / (k + 1) as f64; k + 1];
        let mut tree = Tree::new(src.depth(), k, d, uniform.clone())?;
        let mut queue = std::collections::VecDeque::from([(ROOT, ROOT)]);
        while let Some((old, new)) = queue.pop_front() {
            for c in src.children(old) {
                let id = tree.add_child(new, uniform.clone(), DVector::zeros(d))?;
                queue.push_back((*c, id));
            }
        }
        for leaf in tree.leaves() {
            if tree.node(leaf).level != tree.depth() {
                return Err(Error::State(format!(
                    "leaf {leaf} is not at depth {}",
                    tree.depth()
                )));
            }
        }
        Ok(Self::from_built(tree))
    }

    fn from_built(tree: Tree) -> Self {
        let paths = tree
            .leaves()
            .into_iter()
            .map(|l| tree.ancestry(l))
            .collect();
        Self { tree, paths }
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    /// Root-to-leaf paths, ordered by leaf id.
    pub fn paths(&self) -> &[Vec<NodeId>] {
        &self.paths
    }

    pub fn n_nodes(&self) -> usize {
        self.tree.len()
    }

    pub fn leaf(&self, p: usize) -> NodeId {
        *self.paths[p].last().expect("non-empty path")
    }

    /// Siblings of `z` created before it.
    pub fn earlier_siblings(&self, z: NodeId) -> &[NodeId] {
        match self.tree.parent(z) {
            Some(p) => {
                let kids = self.tree.children(p);
                let i = kids.iter().position(|c| *c == z).expect("linked child");
                &kids[..i]
            }
            None => &[],
        }
    }

    /// Siblings of `z` created after it.
    pub fn later_siblings(&self, z: NodeId) -> &[NodeId] {
        match self.tree.parent(z) {
            Some(p) => {
                let kids = self.tree.children(p);
                let i = kids.iter().position(|c| *c == z).expect("linked child");
                &kids[i + 1..]
            }
            None => &[],
        }
    }
}

/// Variational parameters. Node-indexed vectors are indexed by skeleton node
/// id; root entries of `sticks` and `node_conc` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct ViState {
    /// index of the selected path per datum
    pub path_ind: Vec<usize>,
    /// ρ[n][p][k]
    pub resp: Vec<Vec<Vec<f64>>>,
    /// (a_{z1}, a_{z2})
    pub sticks: Vec<(f64, f64)>,
    /// ω_z, K+1 entries
    pub node_conc: Vec<Vec<f64>>,
    /// (r_{k1}, r_{k2}) for the K root sticks
    pub root_sticks: Vec<(f64, f64)>,
    pub kernel_mean: Vec<DVector<f64>>,
    pub kernel_cov: Vec<DMatrix<f64>>,
    /// ν_{nz} of the last ω update, listed per node as (datum, ν)
    pub bound_aux: Vec<Vec<(usize, f64)>>,
}

impl ViState {
    /// λ_{nz}: one for the selected path, zero otherwise.
    pub fn indicator(&self, n: usize, p: usize) -> f64 {
        if self.path_ind[n] == p {
            1.0
        } else {
            0.0
        }
    }

    /// ρ of datum n on its selected path.
    pub fn selected_resp(&self, n: usize) -> &[f64] {
        &self.resp[n][self.path_ind[n]]
    }

    pub fn check(&self) -> Result<()> {
        for (n, r) in self.resp.iter().enumerate() {
            for row in r {
                if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::State(format!(
                        "responsibilities of datum {n} do not sum to one"
                    )));
                }
            }
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let ok = self.sticks.iter().skip(1).all(|(a, b)| pos(*a) && pos(*b))
            && self.root_sticks.iter().all(|(a, b)| pos(*a) && pos(*b))
            && self
                .node_conc
                .iter()
                .skip(1)
                .all(|w| w.iter().all(|v| pos(*v)));
        if !ok {
            return Err(Error::State(
                "Beta/Dirichlet parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Table of expectations under q.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectations {
    /// E log o_k, E log(1 − o_k)
    pub elog_o: Vec<f64>,
    pub elog_1mo: Vec<f64>,
    /// per node, K+1 entries
    pub elog_beta: Vec<Vec<f64>>,
    pub e_beta: Vec<Vec<f64>>,
    /// per node: E log u_z, E log(1 − u_z)
    pub elog_u: Vec<f64>,
    pub elog_1mu: Vec<f64>,
    /// per path: E log p(v = path | U)
    pub elog_path: Vec<f64>,
    /// log E f(x_n; φ_k), [n][k]
    pub log_e_f: Vec<Vec<f64>>,
    /// E log f(x_n; φ_k), [n][k]
    pub e_logf: Vec<Vec<f64>>,
}

/// Dirichlet expectations (E log β, E β).
pub fn dirichlet_expectations(w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let s: f64 = w.iter().sum();
    let ds = digamma(s);
    (
        w.iter().map(|v| digamma(*v) - ds).collect(),
        w.iter().map(|v| v / s).collect(),
    )
}

/// E_q f(x; φ) for φ ~ N(m, Φ) and f = N(·; φ, Σ), written through
/// m̃ = Σ⁻¹x + Φ⁻¹m by completing the square.
pub fn expected_kernel_density_completed(
    x: &DVector<f64>,
    m: &DVector<f64>,
    sigma: &DMatrix<f64>,
    phi: &DMatrix<f64>,
) -> Result<f64> {
    let d = x.len() as f64;
    let si = cholesky(sigma, None, "kernel covariance")?.inverse();
    let pi = cholesky(phi, None, "variational kernel covariance")?.inverse();
    let a = &si + &pi;
    let ca = cholesky(&a, None, "posterior precision")?;
    let mt = &si * x + &pi * m;
    let logdet = |c: &DMatrix<f64>| -> Result<f64> {
        let ch = cholesky(c, None, "log determinant")?;
        Ok(2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
    };
    let quad = x.dot(&(&si * x)) + m.dot(&(&pi * m)) - mt.dot(&ca.solve(&mt));
    Ok((-0.5 * d * LN_2PI
        - 0.5 * logdet(sigma)?
        - 0.5 * logdet(phi)?
        - 0.5 * logdet(&a)?
        - 0.5 * quad)
        .exp())
}

/// KL(Beta(a, b) ‖ Beta(c, d)).
pub fn kl_beta(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let lnb = |p: f64, q: f64| ln_gamma(p) + ln_gamma(q) - ln_gamma(p + q);
    lnb(c, d) - lnb(a, b)
        + (a - c) * digamma(a)
        + (b - d) * digamma(b)
        + (c - a + d - b) * digamma(a + b)
}

/// Entropy of Dir(ω).
pub fn dirichlet_entropy(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let lnb: f64 = w.iter().map(|v| ln_gamma(*v)).sum::<f64>() - ln_gamma(s);
    lnb + (s - w.len() as f64) * digamma(s) - w.iter().map(|v| (v - 1.0) * digamma(*v)).sum::<f64>()
}

/// Per-component sufficient statistics for the kernel update.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelStats {
    /// Σ_n v ρ_{nk}
    pub s_w: f64,
    /// Σ_n v ρ_{nk} x_n
    pub sx_w: DVector<f64>,
    /// Σ_n Σ_{siblings} Q_{nzk}
    pub s_q: f64,
    /// Σ_n Σ_{siblings} Q_{nzk} x_n
    pub sx_q: DVector<f64>,
    /// Σ_n max(R_{nk}, 0)
    pub s_pos: f64,
}

/// Components of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelboParts {
    pub data: f64,
    pub paths: f64,
    pub sticks: f64,
    pub root: f64,
    pub weights: f64,
    pub kernels: f64,
    /// Σ_n Σ_levels Σ_siblings log Σ_k E β E f
    pub regulariser: f64,
}

impl RelboParts {
    pub fn elbo(&self) -> f64 {
        self.data + self.paths + self.sticks + self.root + self.weights + self.kernels
    }
}

/// Fixed inputs of a fit: skeleton, data and hyperparameters.
#[derive(Debug, Clone)]
pub struct ViProblem<'a> {
    pub skel: &'a Skeleton,
    pub data: &'a Dataset,
    pub hyper: &'a Hyperparams,
    /// ϱ in effect
    pub weight: f64,
    pub omega_min: f64,
    sigma: GaussianKernel,
    prior: GaussianKernel,
}

/// Default floor on ω entries.
pub const OMEGA_MIN: f64 = 1e-3;

impl<'a> ViProblem<'a> {
    pub fn new(skel: &'a Skeleton, data: &'a Dataset, hyper: &'a Hyperparams) -> Result<Self> {
        hyper.validate()?;
        if data.dim() != hyper.dim() {
            return Err(Error::Data(format!(
                "data have {} columns, hyperparameters expect {}",
                data.dim(),
                hyper.dim()
            )));
        }
        if skel.tree().trunc() != hyper.trunc || skel.tree().dim() != hyper.dim() {
            return Err(Error::Param(
                "skeleton truncation or dimension disagrees with hyperparameters".into(),
            ));
        }
        Ok(Self {
            skel,
            data,
            hyper,
            weight: hyper.vi_weight,
            omega_min: OMEGA_MIN,
            sigma: GaussianKernel::new(&hyper.kernel_cov, "kernel_cov")?,
            prior: GaussianKernel::new(&hyper.prior_cov, "prior_cov")?,
        })
    }

    pub fn with_weight(mut self, w: f64) -> Self {
        self.weight = w;
        self
    }

    fn k(&self) -> usize {
        self.hyper.trunc
    }

    /// A state built from the priors with the given kernel means; resp is
    /// filled from the resulting expectations.
    pub fn prior_state(
        &self,
        kernel_mean: Vec<DVector<f64>>,
        path_ind: Vec<usize>,
    ) -> Result<ViState> {
        let k = self.k();
        let m = self.skel.n_nodes();
        let n = self.data.len();
        let mut st = ViState {
            path_ind,
            resp: vec![vec![vec![1.0 / k as f64; k]; self.skel.paths().len()]; n],
            sticks: vec![(1.0, self.hyper.alpha); m],
            node_conc: vec![Vec::new(); m],
            root_sticks: vec![(1.0, self.hyper.gamma0); k],
            kernel_mean,
            kernel_cov: vec![self.hyper.prior_cov.clone(); k],
            bound_aux: vec![Vec::new(); m],
        };
        let mut ex = self.weight_expectations_only(&st);
        for z in self.breadth_first() {
            let p = self.skel.tree().parent(z).expect("non-root");
            st.node_conc[z] = ex.e_beta[p]
                .iter()
                .map(|b| (self.hyper.gamma * b).max(self.omega_min))
                .collect();
            let (el, eb) = dirichlet_expectations(&st.node_conc[z]);
            ex.elog_beta[z] = el;
            ex.e_beta[z] = eb;
        }
        let ex = self.expectations(&st)?;
        self.update_resp(&mut st, &ex);
        Ok(st)
    }

    fn breadth_first(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self
            .skel
            .tree()
            .ids()
            .into_iter()
            .filter(|z| *z != ROOT)
            .collect();
        ids.sort_by_key(|z| (self.skel.tree().node(*z).level, *z));
        ids
    }

    fn weight_expectations_only(&self, st: &ViState) -> Expectations {
        let m = self.skel.n_nodes();
        let mut ex = Expectations {
            elog_o: Vec::new(),
            elog_1mo: Vec::new(),
            elog_beta: vec![Vec::new(); m],
            e_beta: vec![Vec::new(); m],
            elog_u: vec![0.0; m],
            elog_1mu: vec![0.0; m],
            elog_path: Vec::new(),
            log_e_f: Vec::new(),
            e_logf: Vec::new(),
        };
        self.fill_weights(st, &mut ex);
        ex
    }

    /// Full expectations table.
    pub fn expectations(&self, st: &ViState) -> Result<Expectations> {
        let mut ex = self.weight_expectations_only(st);
        let n = self.data.len();
        ex.log_e_f = vec![vec![0.0; self.k()]; n];
        ex.e_logf = vec![vec![0.0; self.k()]; n];
        for k in 0..self.k() {
            self.refresh_kernel(st, &mut ex, k)?;
        }
        Ok(ex)
    }

    /// Recompute everything that depends on sticks and ω.
    pub fn refresh_weights(&self, st: &ViState, ex: &mut Expectations) {
        self.fill_weights(st, ex);
    }

    fn fill_weights(&self, st: &ViState, ex: &mut Expectations) {
        let k = self.k();
        ex.elog_o.clear();
        ex.elog_1mo.clear();
        for &(a, b) in &st.root_sticks {
            let ds = digamma(a + b);
            ex.elog_o.push(digamma(a) - ds);
            ex.elog_1mo.push(digamma(b) - ds);
        }
        let mut el = Vec::with_capacity(k + 1);
        let mut eb = Vec::with_capacity(k + 1);
        let (mut acc_l, mut acc_b) = (0.0, 1.0);
        for (j, &(a, b)) in st.root_sticks.iter().enumerate() {
            el.push(acc_l + ex.elog_o[j]);
            eb.push(acc_b * a / (a + b));
            acc_l += ex.elog_1mo[j];
            acc_b *= b / (a + b);
        }
        el.push(acc_l);
        eb.push(acc_b);
        ex.elog_beta[ROOT] = el;
        ex.e_beta[ROOT] = eb;
        let tree = self.skel.tree();
        for z in tree.ids() {
            if z == ROOT || st.node_conc[z].is_empty() {
                continue;
            }
            let (l, b) = dirichlet_expectations(&st.node_conc[z]);
            ex.elog_beta[z] = l;
            ex.e_beta[z] = b;
            let (a1, a2) = st.sticks[z];
            let ds = digamma(a1 + a2);
            ex.elog_u[z] = digamma(a1) - ds;
            ex.elog_1mu[z] = digamma(a2) - ds;
        }
        ex.elog_path = self
            .skel
            .paths()
            .iter()
            .map(|p| {
                p[1..]
                    .iter()
                    .map(|z| {
                        ex.elog_u[*z]
                            + self
                                .skel
                                .earlier_siblings(*z)
                                .iter()
                                .map(|s| ex.elog_1mu[*s])
                                .sum::<f64>()
                    })
                    .sum()
            })
            .collect();
    }

    /// Recompute log E f and E log f for component k.
    pub fn refresh_kernel(&self, st: &ViState, ex: &mut Expectations, k: usize) -> Result<()> {
        let marg = GaussianKernel::new(
            &(self.sigma.cov() + &st.kernel_cov[k]),
            &format!("marginal covariance of component {k}"),
        )?;
        let tr = (self.sigma.precision() * &st.kernel_cov[k]).trace();
        let m = &st.kernel_mean[k];
        for (n, x) in self.data.points().iter().enumerate() {
            ex.log_e_f[n][k] = marg.log_density(x, m);
            ex.e_logf[n][k] = self.sigma.log_density(x, m) - 0.5 * tr;
        }
        Ok(())
    }

    fn leaf_lse(&self, ex: &Expectations, n: usize, leaf: NodeId) -> f64 {
        let t: Vec<f64> = (0..self.k())
            .map(|k| ex.elog_beta[leaf][k] + ex.e_logf[n][k])
            .collect();
        log_sum_exp(&t)
    }

    /// log Σ_k E β_{zk} E f(x_n; φ_k)
    pub fn sibling_term(&self, ex: &Expectations, n: usize, z: NodeId) -> f64 {
        let t: Vec<f64> = (0..self.k())
            .map(|k| ex.e_beta[z][k].ln() + ex.log_e_f[n][k])
            .collect();
        log_sum_exp(&t)
    }

    fn path_regulariser(&self, ex: &Expectations, n: usize, path: &[NodeId]) -> f64 {
        let tree = self.skel.tree();
        path[1..]
            .iter()
            .map(|z| {
                tree.siblings(*z)
                    .map(|s| self.sibling_term(ex, n, s))
                    .sum::<f64>()
            })
            .sum()
    }

    /// Score of every path for datum n, with ρ at its optimum for each path.
    pub fn path_scores(&self, ex: &Expectations, n: usize) -> Vec<f64> {
        self.skel
            .paths()
            .iter()
            .enumerate()
            .map(|(p, path)| {
                ex.elog_path[p] + self.leaf_lse(ex, n, *path.last().expect("path"))
                    - self.weight * self.path_regulariser(ex, n, path)
            })
            .collect()
    }

    /// Select the highest scoring path per datum; ties go to the earlier path.
    pub fn update_paths(&self, st: &mut ViState, ex: &Expectations) -> Result<()> {
        if self.skel.paths().is_empty() {
            return Err(Error::State("the skeleton has no paths".into()));
        }
        for n in 0..self.data.len() {
            let s = self.path_scores(ex, n);
            let mut best = 0;
            for (p, v) in s.iter().enumerate() {
                if v.is_nan() {
                    return Err(Error::Numerical(format!("path score of datum {n} is NaN")));
                }
                if *v > s[best] {
                    best = p;
                }
            }
            st.path_ind[n] = best;
        }
        Ok(())
    }

    /// ρ_{npk} ∝ exp{E log f(x_n; φ_k) + E log β_{leaf(p) k}} for every path.
    pub fn update_resp(&self, st: &mut ViState, ex: &Expectations) {
        for n in 0..self.data.len() {
            for p in 0..self.skel.paths().len() {
                let leaf = self.skel.leaf(p);
                let t: Vec<f64> = (0..self.k())
                    .map(|k| ex.elog_beta[leaf][k] + ex.e_logf[n][k])
                    .collect();
                st.resp[n][p] = normalise_log(&t);
            }
        }
    }

    /// Number of selected paths through each node.
    pub fn node_counts(&self, st: &ViState) -> Vec<f64> {
        let mut c = vec![0.0; self.skel.n_nodes()];
        for &p in &st.path_ind {
            for z in &self.skel.paths()[p] {
                c[*z] += 1.0;
            }
        }
        c
    }

    /// a_{z1} = 1 + #paths through z, a_{z2} = α + #paths through later siblings.
    pub fn update_sticks(&self, st: &mut ViState) {
        let c = self.node_counts(st);
        for z in self.skel.tree().ids() {
            if z == ROOT {
                continue;
            }
            let later: f64 = self.skel.later_siblings(z).iter().map(|s| c[*s]).sum();
            st.sticks[z] = (1.0 + c[z], self.hyper.alpha + later);
        }
    }

    /// E[n_{zk}] = Σ_{n through z} ρ_{nk} on the selected path.
    pub fn expected_counts(&self, st: &ViState) -> Vec<Vec<f64>> {
        let mut c = vec![vec![0.0; self.k()]; self.skel.n_nodes()];
        for n in 0..self.data.len() {
            let r = st.selected_resp(n);
            for z in &self.skel.paths()[st.path_ind[n]] {
                for k in 0..self.k() {
                    c[*z][k] += r[k];
                }
            }
        }
        c
    }

    /// Data whose selected path passes a sibling of z at z's level.
    fn sibling_data(&self, st: &ViState, z: NodeId) -> Vec<usize> {
        let tree = self.skel.tree();
        let lvl = tree.node(z).level;
        let parent = tree.parent(z);
        (0..self.data.len())
            .filter(|&n| {
                let v = self.skel.paths()[st.path_ind[n]][lvl];
                v != z && tree.parent(v) == parent
            })
            .collect()
    }

    /// Closed-form ω candidate for node z:
    /// γ E β_{parent} + E n_z − ϱ Σ_{sibling data} Q_{nzk} / E log β_{zk}, floored at ω_min.
    /// Also returns the ν_{nz} used.
    pub fn conc_candidate(
        &self,
        st: &ViState,
        ex: &Expectations,
        counts: &[Vec<f64>],
        z: NodeId,
    ) -> (Vec<f64>, Vec<(usize, f64)>) {
        let k = self.k();
        let p = self.skel.tree().parent(z).expect("non-root");
        let mut w: Vec<f64> = ex.e_beta[p].iter().map(|b| self.hyper.gamma * b).collect();
        for j in 0..k {
            w[j] += counts[z][j];
        }
        let mut aux = Vec::new();
        if self.weight > 0.0 && !ex.e_beta[z].is_empty() {
            let mut reg = vec![0.0; k];
            for n in self.sibling_data(st, z) {
                let lnu = self.sibling_term(ex, n, z);
                aux.push((n, lnu.exp()));
                for j in 0..k {
                    reg[j] += (ex.e_beta[z][j].ln() + ex.log_e_f[n][j] - lnu).exp();
                }
            }
            for j in 0..k {
                w[j] -= self.weight * reg[j] / ex.elog_beta[z][j];
            }
        }
        (w.into_iter().map(|v| v.max(self.omega_min)).collect(), aux)
    }

    /// Leaves take their candidate directly; internal nodes, deepest first,
    /// take a damped step toward it that does not lower the objective.
    pub fn update_node_conc(
        &self,
        st: &mut ViState,
        ex: &mut Expectations,
        halvings: usize,
    ) -> Result<()> {
        let tree = self.skel.tree();
        let counts = self.expected_counts(st);
        let leaves: Vec<NodeId> = tree.leaves().into_iter().filter(|z| *z != ROOT).collect();
        let cands: Vec<_> = leaves
            .iter()
            .map(|z| self.conc_candidate(st, ex, &counts, *z))
            .collect();
        for (z, (w, aux)) in leaves.iter().zip(cands) {
            st.node_conc[*z] = w;
            st.bound_aux[*z] = aux;
        }
        self.refresh_weights(st, ex);
        let mut internal: Vec<NodeId> = tree
            .ids()
            .into_iter()
            .filter(|z| *z != ROOT && !tree.is_leaf(*z))
            .collect();
        internal.sort_by_key(|z| (std::cmp::Reverse(tree.node(*z).level), *z));
        for z in internal {
            let (cand, aux) = self.conc_candidate(st, ex, &counts, z);
            st.bound_aux[z] = aux;
            let old = st.node_conc[z].clone();
            self.damped(st, ex, halvings, Refresh::Weights, |s, t| {
                s.node_conc[z] = log_interp(&old, &cand, t);
            })?;
        }
        Ok(())
    }

    /// r_{k1} = 1 + Σ_n ρ_{nk}, r_{k2} = γ0 + Σ_n Σ_{j>k} ρ_{nj}.
    pub fn root_candidate(&self, st: &ViState) -> Vec<(f64, f64)> {
        let k = self.k();
        let mut tot = vec![0.0; k];
        for n in 0..self.data.len() {
            for (j, r) in st.selected_resp(n).iter().enumerate() {
                tot[j] += r;
            }
        }
        (0..k)
            .map(|j| {
                (
                    1.0 + tot[j],
                    self.hyper.gamma0 + tot[j + 1..].iter().sum::<f64>(),
                )
            })
            .collect()
    }

    pub fn update_root_sticks(
        &self,
        st: &mut ViState,
        ex: &mut Expectations,
        halvings: usize,
    ) -> Result<()> {
        let cand = self.root_candidate(st);
        let old = st.root_sticks.clone();
        self.damped(st, ex, halvings, Refresh::Weights, |s, t| {
            s.root_sticks = old
                .iter()
                .zip(&cand)
                .map(|(o, c)| (geo(o.0, c.0, t), geo(o.1, c.1, t)))
                .collect();
        })
    }

    /// Statistics of component k at the current state (Q evaluated here).
    pub fn kernel_stats(&self, st: &ViState, ex: &Expectations, k: usize) -> KernelStats {
        let d = self.hyper.dim();
        let tree = self.skel.tree();
        let mut s = KernelStats {
            s_w: 0.0,
            sx_w: DVector::zeros(d),
            s_q: 0.0,
            sx_q: DVector::zeros(d),
            s_pos: 0.0,
        };
        for (n, x) in self.data.points().iter().enumerate() {
            let w = st.selected_resp(n)[k];
            let mut q = 0.0;
            if self.weight > 0.0 {
                for z in &self.skel.paths()[st.path_ind[n]][1..] {
                    for sib in tree.siblings(*z) {
                        q += (ex.e_beta[sib][k].ln() + ex.log_e_f[n][k]
                            - self.sibling_term(ex, n, sib))
                        .exp();
                    }
                }
            }
            s.s_w += w;
            s.sx_w += x * w;
            s.s_q += q;
            s.sx_q += x * q;
            s.s_pos += (w - self.weight * q).max(0.0);
        }
        s
    }

    /// Φ_k = (Σ⁻¹ Σ_n max(R_{nk}, 0) + Φ0⁻¹)⁻¹.
    pub fn kernel_cov_candidate(&self, stats: &KernelStats, k: usize) -> Result<DMatrix<f64>> {
        let a = self.sigma.precision() * stats.s_pos + self.prior.precision();
        Ok(cholesky(&a, None, &format!("kernel precision of component {k}"))?.inverse())
    }

    /// Root of the gradient in m_k with Q frozen at `stats` and Φ_k as stored.
    pub fn kernel_mean_candidate(
        &self,
        st: &ViState,
        stats: &KernelStats,
        k: usize,
    ) -> Result<DVector<f64>> {
        let marg_prec = cholesky(
            &(self.sigma.cov() + &st.kernel_cov[k]),
            None,
            "marginal covariance",
        )?
        .inverse();
        let a = self.sigma.precision() * stats.s_w - &marg_prec * (self.weight * stats.s_q)
            + self.prior.precision();
        let b = self.sigma.precision() * &stats.sx_w - &marg_prec * (&stats.sx_q * self.weight)
            + self.prior.precision() * &self.hyper.prior_mean;
        let what = format!(
            "kernel mean system of component {k} (Σρ = {:.4}, ϱΣQ = {:.4})",
            stats.s_w,
            self.weight * stats.s_q
        );
        Ok(cholesky(&a, None, &what)?.solve(&b))
    }

    /// Φ_k then m_k by their closed forms.
    pub fn update_kernel_mean(
        &self,
        st: &mut ViState,
        ex: &mut Expectations,
        k: usize,
    ) -> Result<()> {
        let stats = self.kernel_stats(st, ex, k);
        st.kernel_cov[k] = self.kernel_cov_candidate(&stats, k)?;
        st.kernel_mean[k] = self.kernel_mean_candidate(st, &stats, k)?;
        self.refresh_kernel(st, ex, k)
    }

    /// Damped kernel step: each of Φ_k and m_k moves toward its closed form
    /// only as far as the objective allows. A mean system that is not
    /// positive definite falls back to a preconditioned gradient direction.
    pub fn update_kernel_safeguarded(
        &self,
        st: &mut ViState,
        ex: &mut Expectations,
        k: usize,
        halvings: usize,
    ) -> Result<()> {
        let stats = self.kernel_stats(st, ex, k);
        let old_cov = st.kernel_cov[k].clone();
        let cand_cov = self.kernel_cov_candidate(&stats, k)?;
        self.damped(st, ex, halvings, Refresh::Kernel(k), |s, t| {
            s.kernel_cov[k] = &old_cov * (1.0 - t) + &cand_cov * t;
        })?;
        let old = st.kernel_mean[k].clone();
        let cand = match self.kernel_mean_candidate(st, &stats, k) {
            Ok(m) => m,
            Err(Error::NotSpd { .. }) => {
                let g = self.grad_relbo_mean_with(st, &stats, k);
                let pre = self.sigma.precision() * stats.s_w + self.prior.precision();
                &old + cholesky(&pre, None, "kernel preconditioner")?.solve(&g)
            }
            Err(e) => return Err(e),
        };
        self.damped(st, ex, halvings, Refresh::Kernel(k), |s, t| {
            s.kernel_mean[k] = &old * (1.0 - t) + &cand * t;
        })
    }

    /// ∇_{m_k} of the objective with Q taken from `stats`:
    /// Σ⁻¹(Σρx − Σρ m) − ϱ(Σ + Φ_k)⁻¹(ΣQx − ΣQ m) − Φ0⁻¹(m − m0).
    pub fn grad_relbo_mean_with(
        &self,
        st: &ViState,
        stats: &KernelStats,
        k: usize,
    ) -> DVector<f64> {
        let m = &st.kernel_mean[k];
        let marg = self.sigma.cov() + &st.kernel_cov[k];
        let reg = marg
            .cholesky()
            .map(|c| c.solve(&(&stats.sx_q - m * stats.s_q)))
            .unwrap_or_else(|| DVector::from_element(m.len(), f64::NAN));
        self.sigma.precision() * (&stats.sx_w - m * stats.s_w)
            - reg * self.weight
            - self.prior.precision() * (m - &self.hyper.prior_mean)
    }

    /// Analytic gradient of the objective in m_k at the current state.
    pub fn grad_relbo_mean(&self, st: &ViState, ex: &Expectations, k: usize) -> DVector<f64> {
        let stats = self.kernel_stats(st, ex, k);
        self.grad_relbo_mean_with(st, &stats, k)
    }

    /// Term-by-term objective.
    pub fn relbo_parts(&self, st: &ViState, ex: &Expectations) -> RelboParts {
        let tree = self.skel.tree();
        let k = self.k();
        let h = self.hyper;
        let mut out = RelboParts {
            data: 0.0,
            paths: 0.0,
            sticks: 0.0,
            root: 0.0,
            weights: 0.0,
            kernels: 0.0,
            regulariser: 0.0,
        };
        for n in 0..self.data.len() {
            let p = st.path_ind[n];
            let leaf = self.skel.leaf(p);
            for (j, r) in st.resp[n][p].iter().enumerate() {
                if *r > 0.0 {
                    out.data += r * (ex.elog_beta[leaf][j] + ex.e_logf[n][j] - r.ln());
                }
            }
            out.paths += ex.elog_path[p];
            out.regulariser += self.path_regulariser(ex, n, &self.skel.paths()[p]);
        }
        for z in tree.ids() {
            let p = match tree.parent(z) {
                Some(p) => p,
                None => continue,
            };
            let (a1, a2) = st.sticks[z];
            out.sticks -= kl_beta(a1, a2, 1.0, h.alpha);
            out.weights += k as f64 * h.gamma.ln() + ex.elog_beta[p].iter().sum::<f64>();
            out.weights += ex.e_beta[p]
                .iter()
                .zip(&ex.elog_beta[z])
                .map(|(b, l)| (h.gamma * b - 1.0) * l)
                .sum::<f64>();
            out.weights += dirichlet_entropy(&st.node_conc[z]);
        }
        for &(a, b) in &st.root_sticks {
            out.root -= kl_beta(a, b, 1.0, h.gamma0);
        }
        let d = h.dim() as f64;
        let ld0 = 2.0
            * self
                .prior
                .chol_l()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        for j in 0..k {
            let diff = &st.kernel_mean[j] - &h.prior_mean;
            let ldk = match st.kernel_cov[j].clone().cholesky() {
                Some(c) => 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
                None => f64::NAN,
            };
            let tr = (self.prior.precision() * &st.kernel_cov[j]).trace();
            out.kernels -= 0.5 * (tr + diff.dot(&(self.prior.precision() * &diff)) - d + ld0 - ldk);
        }
        out
    }

    /// ELBO − ϱ R̂.
    pub fn relbo(&self, st: &ViState, ex: &Expectations) -> f64 {
        let p = self.relbo_parts(st, ex);
        p.elbo() - self.weight * p.regulariser
    }

    /// Try t = 1, ½, ¼, … and keep the first setting that does not lower the
    /// objective; otherwise restore t = 0.
    fn damped<F: FnMut(&mut ViState, f64)>(
        &self,
        st: &mut ViState,
        ex: &mut Expectations,
        halvings: usize,
        what: Refresh,
        mut apply: F,
    ) -> Result<()> {
        let base = self.relbo(st, ex);
        let slack = 1e-12 * base.abs().max(1.0);
        let mut t = 1.0;
        for _ in 0..=halvings {
            apply(st, t);
            let ok = match what {
                Refresh::Weights => {
                    self.refresh_weights(st, ex);
                    true
                }
                Refresh::Kernel(k) => self.refresh_kernel(st, ex, k).is_ok(),
            };
            if ok {
                let v = self.relbo(st, ex);
                if v >= base - slack {
                    return Ok(());
                }
            }
            t *= 0.5;
        }
        apply(st, 0.0);
        match what {
            Refresh::Weights => self.refresh_weights(st, ex),
            Refresh::Kernel(k) => self.refresh_kernel(st, ex, k)?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Refresh {
    Weights,
    Kernel(usize),
}

fn geo(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else if t == 1.0 {
        b
    } else {
        (a.ln() * (1.0 - t) + b.ln() * t).exp()
    }
}

fn log_interp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| geo(*x, *y, t)).collect()
}

/// Fit settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ViConfig {
    /// children per internal node of the complete skeleton
    pub branching: usize,
    pub max_cycles: usize,
    pub tol: f64,
    pub omega_min: f64,
    /// ϱ is multiplied by anneal^(cycle−1)
    pub anneal: f64,
    /// maximum number of step halvings in damped updates
    pub halvings: usize,
}

impl Default for ViConfig {
    fn default() -> Self {
        Self {
            branching: 3,
            max_cycles: 200,
            tol: 1e-6,
            omega_min: OMEGA_MIN,
            anneal: 1.0,
            halvings: 10,
        }
    }
}

/// One row of the objective trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViTraceRow {
    pub cycle: usize,
    pub relbo: f64,
    /// unregularised part
    pub elbo: f64,
    pub delta: f64,
}

/// Output of [`fit_vi`].
#[derive(Debug, Clone)]
pub struct ViFit {
    pub skeleton: Skeleton,
    pub state: ViState,
    /// objective at initialisation
    pub initial_relbo: f64,
    pub initial_elbo: f64,
    pub trace: Vec<ViTraceRow>,
    pub converged: bool,
}

impl ViFit {
    /// CSV with header `cycle,relbo,delta`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("cycle,relbo,delta\n");
        for r in &self.trace {
            out.push_str(&format!("{},{},{}\n", r.cycle, r.relbo, r.delta));
        }
        out
    }

    /// Most responsible component of datum n on its selected path.
    pub fn component(&self, n: usize) -> usize {
        let r = self.state.selected_resp(n);
        (0..r.len()).fold(0, |b, k| if r[k] > r[b] { k } else { b })
    }

    /// Skeleton with posterior-mean weights, counts from the selected paths and
    /// unvisited subtrees removed, plus each datum's path.
    pub fn to_tree(&self, data: &Dataset, hyper: &Hyperparams) -> Result<(Tree, Vec<Vec<NodeId>>)> {
        let prob = ViProblem::new(&self.skeleton, data, hyper)?;
        let ex = prob.expectations(&self.state)?;
        let mut t = self.skeleton.tree().clone();
        for z in t.ids() {
            let w = &ex.e_beta[z];
            let s: f64 = w.iter().sum();
            t.node_mut(z).weights = w.iter().map(|v| v / s).collect();
        }
        let paths: Vec<Vec<NodeId>> = self
            .state
            .path_ind
            .iter()
            .map(|p| self.skeleton.paths()[*p].clone())
            .collect();
        for p in &paths {
            t.add_path(p);
        }
        t.prune_empty();
        Ok((t, paths))
    }
}

/// Coordinate ascent from a random start on a complete skeleton: paths, resp,
/// sticks, ω, root sticks, kernels, until |Δ objective| < tol or max_cycles.
pub fn fit_vi<R: Rng + ?Sized>(
    cfg: &ViConfig,
    data: &Dataset,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<ViFit> {
    let skel = Skeleton::complete(hyper.depth, cfg.branching, hyper.trunc, hyper.dim())?;
    fit_vi_on(cfg, skel, data, hyper, rng)
}

/// As [`fit_vi`] on a given skeleton.
pub fn fit_vi_on<R: Rng + ?Sized>(
    cfg: &ViConfig,
    skel: Skeleton,
    data: &Dataset,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<ViFit> {
    if cfg.max_cycles == 0 {
        return Err(Error::Param("max_cycles must be at least 1".into()));
    }
    if !(cfg.tol >= 0.0) || !(cfg.omega_min > 0.0) || !(cfg.anneal > 0.0) {
        return Err(Error::Param(
            "tol must be non-negative, omega_min and anneal positive".into(),
        ));
    }
    let mut prob = ViProblem::new(&skel, data, hyper)?;
    prob.omega_min = cfg.omega_min;
    let n = data.len();
    let n_paths = skel.paths().len();
    let means: Vec<DVector<f64>> = (0..hyper.trunc)
        .map(|_| data.point(rng.random_range(0..n)).clone())
        .collect();
    let paths: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_paths)).collect();
    let mut st = prob.prior_state(means, paths)?;
    for z in 1..skel.n_nodes() {
        let (a, b) = st.sticks[z];
        st.sticks[z] = (a + rng.random::<f64>(), b + rng.random::<f64>());
        for j in 0..hyper.trunc {
            st.node_conc[z][j] += rng.random::<f64>();
        }
    }
    let mut ex = prob.expectations(&st)?;
    prob.update_resp(&mut st, &ex);
    let init = prob.relbo_parts(&st, &ex);
    let mut fit = ViFit {
        skeleton: skel.clone(),
        state: st.clone(),
        initial_relbo: init.elbo() - prob.weight * init.regulariser,
        initial_elbo: init.elbo(),
        trace: Vec::new(),
        converged: false,
    };
    if !fit.initial_relbo.is_finite() {
        return Err(Error::Numerical(
            "objective is not finite at initialisation".into(),
        ));
    }
    let mut prev = fit.initial_relbo;
    for cycle in 1..=cfg.max_cycles {
        prob.weight = hyper.vi_weight * cfg.anneal.powi(cycle as i32 - 1);
        let step = (|| -> Result<()> {
            prob.update_paths(&mut st, &ex)?;
            prob.update_resp(&mut st, &ex);
            prob.update_sticks(&mut st);
            prob.refresh_weights(&st, &mut ex);
            prob.update_node_conc(&mut st, &mut ex, cfg.halvings)?;
            prob.update_root_sticks(&mut st, &mut ex, cfg.halvings)?;
            for k in 0..hyper.trunc {
                if prob.weight == 0.0 {
                    prob.update_kernel_mean(&mut st, &mut ex, k)?;
                } else {
                    prob.update_kernel_safeguarded(&mut st, &mut ex, k, cfg.halvings)?;
                }
            }
            Ok(())
        })();
        let parts = match step {
            Ok(()) => Some(prob.relbo_parts(&st, &ex)),
            Err(e) if e.is_numerical() => None,
            Err(e) => return Err(e),
        };
        let (relbo, elbo) = match parts {
            Some(p) => (p.elbo() - prob.weight * p.regulariser, p.elbo()),
            None => (f64::NAN, f64::NAN),
        };
        if !relbo.is_finite() {
            return Err(Error::Diverged {
                cycle,
                last_good: Box::new(fit),
            });
        }
        let delta = relbo - prev;
        prev = relbo;
        fit.state = st.clone();
        fit.trace.push(ViTraceRow {
            cycle,
            relbo,
            elbo,
            delta,
        });
        if delta.abs() < cfg.tol {
            fit.converged = true;
            break;
        }
    }
    Ok(fit)
}
