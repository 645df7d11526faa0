//! BHMC domain types and the generative process: CRP, truncated GEM, nCRP
//! paths and Dirichlet diffusion of mixture weights down the tree.
//!
//! Components are indexed from 0 in code (`0..K`); weight vectors carry `K+1`
//! entries, the last one being the mass left for unseen components.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gauss::{cholesky, GaussianKernel};
use crate::randkit;
use crate::regularizer::{self, MarginContext};

pub type NodeId = usize;

/// Fixed scalars and matrices of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// nCRP concentration α
    pub alpha: f64,
    /// diffusion concentration γ
    pub gamma: f64,
    /// root GEM concentration γ0
    pub gamma0: f64,
    /// tree depth L
    pub depth: usize,
    /// number of mixture components K
    pub trunc: usize,
    /// hinge cost C
    pub margin_cost: f64,
    /// required margin ε0
    pub margin_eps: f64,
    /// prior scale ν0 of the margin vectors
    pub eta_prior_scale: f64,
    /// kernel covariance Σ shared by all components
    pub kernel_cov: DMatrix<f64>,
    /// base measure mean m0
    pub prior_mean: DVector<f64>,
    /// base measure covariance Φ0
    pub prior_cov: DMatrix<f64>,
    /// weight ϱ of the regulariser in the variational objective
    pub vi_weight: f64,
}

impl Hyperparams {
    /// Animals configuration: α=0.4, γ=1, γ0=0.85, L=3, ν0=1, Σ=I, H=N(0, I).
    pub fn animals(dim: usize) -> Self {
        Self {
            alpha: 0.4,
            gamma: 1.0,
            gamma0: 0.85,
            depth: 3,
            trunc: 10,
            margin_cost: 1.0,
            margin_eps: 1.0,
            eta_prior_scale: 1.0,
            kernel_cov: DMatrix::identity(dim, dim),
            prior_mean: DVector::zeros(dim),
            prior_cov: DMatrix::identity(dim, dim),
            vi_weight: 0.1,
        }
    }

    /// Fashion configuration: α=0.2, γ=1.5, γ0=0.85, L=4.
    pub fn fashion(dim: usize) -> Self {
        Self {
            alpha: 0.2,
            gamma: 1.5,
            depth: 4,
            ..Self::animals(dim)
        }
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn margin_context(&self) -> MarginContext {
        MarginContext {
            eps0: self.margin_eps,
            cost: self.margin_cost,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Param(format!(
                    "{name} must be positive and finite (got {v})"
                )))
            }
        };
        pos(self.alpha, "alpha")?;
        pos(self.gamma, "gamma")?;
        pos(self.gamma0, "gamma0")?;
        pos(self.margin_cost, "margin_cost")?;
        pos(self.eta_prior_scale, "eta_prior_scale")?;
        if !(self.margin_eps >= 0.0 && self.margin_eps.is_finite()) {
            return Err(Error::Param(format!(
                "margin_eps must be non-negative (got {})",
                self.margin_eps
            )));
        }
        if !(self.vi_weight >= 0.0 && self.vi_weight.is_finite()) {
            return Err(Error::Param(format!(
                "vi_weight must be non-negative (got {})",
                self.vi_weight
            )));
        }
        if self.depth < 1 {
            return Err(Error::Param("depth must be at least 1".into()));
        }
        if self.trunc < 1 {
            return Err(Error::Param("trunc must be at least 1".into()));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::Param("dimension must be at least 1".into()));
        }
        for (m, name) in [
            (&self.kernel_cov, "kernel_cov"),
            (&self.prior_cov, "prior_cov"),
        ] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Param(format!("{name} must be {d}x{d}")));
            }
            if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                return Err(Error::Param(format!("{name} must be symmetric")));
            }
            cholesky(m, None, name)?;
        }
        Ok(())
    }
}

/// One tree node.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    /// children in creation order
    pub children: Vec<NodeId>,
    pub level: usize,
    /// β_z, K+1 entries summing to one
    pub weights: Vec<f64>,
    /// η_z
    pub margin: DVector<f64>,
    /// number of data whose path passes through the node
    pub count: usize,
}

/// Rooted tree of depth L with per-node weights and margins.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: BTreeMap<NodeId, Node>,
    next_id: NodeId,
    depth: usize,
    trunc: usize,
    dim: usize,
}

pub const ROOT: NodeId = 0;

fn check_simplex(w: &[f64], len: usize) -> Result<()> {
    if w.len() != len {
        return Err(Error::Param(format!(
            "weight vector has {} entries, expected {len}",
            w.len()
        )));
    }
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Param(
            "weights must be finite and non-negative".into(),
        ));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Param(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

impl Tree {
    /// A tree holding only the root.
    pub fn new(depth: usize, trunc: usize, dim: usize, root_weights: Vec<f64>) -> Result<Self> {
        if depth < 1 || trunc < 1 || dim < 1 {
            return Err(Error::Param("depth, trunc and dim must be positive".into()));
        }
        check_simplex(&root_weights, trunc + 1)?;
        let mut nodes = BTreeMap::new();
        nodes.insert(
            ROOT,
            Node {
                id: ROOT,
                parent: None,
                children: Vec::new(),
                level: 0,
                weights: root_weights,
                margin: DVector::zeros(dim),
                count: 0,
            },
        );
        Ok(Self {
            nodes,
            next_id: 1,
            depth,
            trunc,
            dim,
        })
    }

    /// Rebuild a tree from explicit nodes; ids must be unique and the
    /// parent/child links consistent. Used by the JSON loader.
    pub fn from_nodes(depth: usize, trunc: usize, dim: usize, nodes: Vec<Node>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for n in nodes {
            check_simplex(&n.weights, trunc + 1)?;
            if n.margin.len() != dim {
                return Err(Error::Param(format!(
                    "node {} margin has wrong dimension",
                    n.id
                )));
            }
            if map.insert(n.id, n).is_some() {
                return Err(Error::Param("duplicate node id".into()));
            }
        }
        let root = map
            .get(&ROOT)
            .ok_or_else(|| Error::Param("tree has no root (id 0)".into()))?;
        if root.parent.is_some() || root.level != 0 {
            return Err(Error::Param("root must have no parent and level 0".into()));
        }
        for n in map.values() {
            if n.level > depth {
                return Err(Error::Param(format!("node {} deeper than the tree", n.id)));
            }
            if let Some(p) = n.parent {
                let pn = map
                    .get(&p)
                    .ok_or_else(|| Error::Param(format!("node {} has unknown parent {p}", n.id)))?;
                if !pn.children.contains(&n.id) || pn.level + 1 != n.level {
                    return Err(Error::Param(format!(
                        "node {} is not linked from its parent",
                        n.id
                    )));
                }
            } else if n.id != ROOT {
                return Err(Error::Param(format!("node {} has no parent", n.id)));
            }
            for c in &n.children {
                match map.get(c) {
                    Some(cn) if cn.parent == Some(n.id) => {}
                    _ => {
                        return Err(Error::Param(format!(
                            "child {c} of {} is not linked back",
                            n.id
                        )))
                    }
                }
            }
        }
        let next_id = map.keys().next_back().map(|k| k + 1).unwrap_or(1);
        Ok(Self {
            nodes: map,
            next_id,
            depth,
            trunc,
            dim,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn trunc(&self) -> usize {
        self.trunc
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> NodeId {
        ROOT
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn next_id(&self) -> NodeId {
        self.next_id
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    /// Panics when `id` is not in the tree.
    pub fn node(&self, id: NodeId) -> &Node {
        self.nodes
            .get(&id)
            .unwrap_or_else(|| panic!("node {id} is not in the tree"))
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes
            .get_mut(&id)
            .unwrap_or_else(|| panic!("node {id} is not in the tree"))
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    /// Nodes in id (creation) order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn ids(&self) -> Vec<NodeId> {
        self.nodes.keys().copied().collect()
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.node(id).children
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.node(id).parent
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.node(id).children.is_empty()
    }

    /// Siblings of `id` in creation order, excluding `id`.
    pub fn siblings(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let list: &[NodeId] = match self.node(id).parent {
            Some(p) => &self.node(p).children,
            None => &[],
        };
        list.iter().copied().filter(move |c| *c != id)
    }

    pub fn nodes_at_level(&self, level: usize) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.level == level)
            .map(|n| n.id)
            .collect()
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.children.is_empty())
            .map(|n| n.id)
            .collect()
    }

    /// Root-to-node id list.
    pub fn ancestry(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.node(cur).parent {
            out.push(p);
            cur = p;
        }
        out.reverse();
        out
    }

    pub fn add_child(
        &mut self,
        parent: NodeId,
        weights: Vec<f64>,
        margin: DVector<f64>,
    ) -> Result<NodeId> {
        check_simplex(&weights, self.trunc + 1)?;
        if margin.len() != self.dim {
            return Err(Error::Param("margin dimension mismatch".into()));
        }
        let level = self
            .get(parent)
            .ok_or_else(|| Error::State(format!("parent {parent} is not in the tree")))?
            .level
            + 1;
        if level > self.depth {
            return Err(Error::State(format!(
                "node {parent} is already at depth {}",
                self.depth
            )));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.insert(
            id,
            Node {
                id,
                parent: Some(parent),
                children: Vec::new(),
                level,
                weights,
                margin,
                count: 0,
            },
        );
        self.node_mut(parent).children.push(id);
        Ok(id)
    }

    /// Remove `id` and everything below it.
    pub fn remove_subtree(&mut self, id: NodeId) -> Vec<NodeId> {
        assert!(id != ROOT, "the root cannot be removed");
        if let Some(p) = self.node(id).parent {
            self.node_mut(p).children.retain(|c| *c != id);
        }
        let mut removed = Vec::new();
        let mut stack = vec![id];
        while let Some(z) = stack.pop() {
            if let Some(n) = self.nodes.remove(&z) {
                stack.extend(n.children.iter().copied());
                removed.push(z);
            }
        }
        removed.sort_unstable();
        removed
    }

    pub fn add_path(&mut self, path: &[NodeId]) {
        for z in path {
            self.node_mut(*z).count += 1;
        }
    }

    /// Decrement the counts along `path` and prune the nodes that became empty.
    /// Returns the removed ids.
    pub fn remove_path(&mut self, path: &[NodeId]) -> Vec<NodeId> {
        for z in path {
            let n = self.node_mut(*z);
            assert!(n.count > 0, "count underflow at node {z}");
            n.count -= 1;
        }
        match path.iter().skip(1).find(|z| self.node(**z).count == 0) {
            Some(z) => self.remove_subtree(*z),
            None => Vec::new(),
        }
    }

    /// Remove every non-root node with zero count.
    pub fn prune_empty(&mut self) -> Vec<NodeId> {
        let mut removed = Vec::new();
        let empty: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| n.id != ROOT && n.count == 0)
            .map(|n| n.id)
            .collect();
        for z in empty {
            if self.contains(z) {
                removed.extend(self.remove_subtree(z));
            }
        }
        removed.sort_unstable();
        removed
    }

    /// Check that `path` runs root → level-L node along edges.
    pub fn validate_path(&self, path: &[NodeId]) -> Result<()> {
        if path.len() != self.depth + 1 || path[0] != ROOT {
            return Err(Error::State(format!(
                "path {path:?} is not a root-to-leaf path"
            )));
        }
        for w in path.windows(2) {
            match self.get(w[1]) {
                Some(n) if n.parent == Some(w[0]) => {}
                _ => return Err(Error::State(format!("path {path:?} breaks at {}", w[1]))),
            }
        }
        Ok(())
    }

    /// Verify stored counts against the given paths and that all leaves sit at depth L.
    pub fn check_counts<'a, I: IntoIterator<Item = &'a [NodeId]>>(&self, paths: I) -> Result<()> {
        let mut recount: BTreeMap<NodeId, usize> = BTreeMap::new();
        for p in paths {
            self.validate_path(p)?;
            for z in p {
                *recount.entry(*z).or_default() += 1;
            }
        }
        for n in self.nodes.values() {
            let c = recount.get(&n.id).copied().unwrap_or(0);
            if c != n.count {
                return Err(Error::State(format!(
                    "node {} stores count {} but {c} paths pass",
                    n.id, n.count
                )));
            }
            if n.id != ROOT && n.count == 0 {
                return Err(Error::State(format!("node {} is empty", n.id)));
            }
            if n.children.is_empty() && n.level != self.depth && n.id != ROOT {
                return Err(Error::State(format!(
                    "leaf {} is not at depth {}",
                    n.id, self.depth
                )));
            }
        }
        Ok(())
    }
}

/// Violation index s_n = (level, sibling node).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub level: usize,
    pub node: NodeId,
}

/// Per-datum latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct PathAssignment {
    /// root-to-leaf node ids, length L+1
    pub path: Vec<NodeId>,
    pub violation: Violation,
    /// augmentation λ_n > 0
    pub aug: f64,
    /// mixture component, 0-based
    pub component: usize,
}

impl PathAssignment {
    pub fn leaf(&self) -> NodeId {
        *self.path.last().expect("paths are non-empty")
    }
}

/// N×D data with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<DVector<f64>>,
    labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        let d = points[0].len();
        if d == 0 {
            return Err(Error::Data("data have zero columns".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::Data(format!(
                    "row {i} has {} columns, expected {d}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {i} has a non-finite entry")));
            }
        }
        Ok(Self {
            points,
            labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| DVector::from_column_slice(r)).collect())
    }

    pub fn from_matrix(x: &DMatrix<f64>) -> Result<Self> {
        Self::new((0..x.nrows()).map(|i| x.row(i).transpose()).collect())
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::Data(format!(
                "{} labels for {} data",
                labels.len(),
                self.points.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, n: usize) -> &DVector<f64> {
        &self.points[n]
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dim(), |i, j| self.points[i][j])
    }
}

/// CRP seating probabilities: existing tables ∝ N_k, a new table ∝ α.
pub fn crp_next(counts: &[usize], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Param(format!(
            "alpha must be positive (got {alpha})"
        )));
    }
    let n: usize = counts.iter().sum();
    let denom = n as f64 + alpha;
    let mut p: Vec<f64> = counts.iter().map(|&c| c as f64 / denom).collect();
    p.push(alpha / denom);
    Ok(p)
}

/// Stick-breaking: β_k = o_k Π_{i<k}(1-o_i), remainder Π_{i≤K}(1-o_i).
pub fn stick_break(o: &[f64], trunc: usize) -> Result<Vec<f64>> {
    if o.len() != trunc {
        return Err(Error::Param(format!(
            "expected {trunc} stick proportions, got {}",
            o.len()
        )));
    }
    let mut out = Vec::with_capacity(trunc + 1);
    let mut rest = 1.0;
    for &ok in o {
        if !(ok > 0.0 && ok <= 1.0) {
            return Err(Error::Domain(format!(
                "stick proportion {ok} outside (0, 1]"
            )));
        }
        out.push(ok * rest);
        rest *= 1.0 - ok;
    }
    out.push(rest);
    Ok(out)
}

/// Truncated GEM(γ0) sticks: o_k ~ Beta(1, γ0) for k < K and o_K = 1.
pub fn sample_root_sticks<R: Rng + ?Sized>(
    gamma0: f64,
    trunc: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut o = Vec::with_capacity(trunc);
    for _ in 1..trunc {
        let mut v = randkit::sample_beta(1.0, gamma0, rng)?;
        if v <= 0.0 {
            v = f64::MIN_POSITIVE;
        }
        o.push(v);
    }
    o.push(1.0);
    Ok(o)
}

/// Child weights β' ~ Dir(γ β_parent).
pub fn diffuse_weights<R: Rng + ?Sized>(
    parent: &[f64],
    gamma: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::Param(format!(
            "gamma must be positive (got {gamma})"
        )));
    }
    let conc: Vec<f64> = parent.iter().map(|b| gamma * b).collect();
    randkit::sample_dirichlet(&conc, rng)
}

/// Margin vector drawn from its prior N(0, ν0² I).
pub fn sample_margin<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Choose a root-to-leaf path for a new datum by the nested CRP over the
/// current visit counts, creating nodes as needed. Children with zero count
/// are invisible to the process. Counts are not modified.
pub fn ncrp_extend<R: Rng + ?Sized>(
    tree: &mut Tree,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    let mut path = vec![ROOT];
    let mut cur = ROOT;
    for _ in 0..tree.depth() {
        let live: Vec<NodeId> = tree
            .children(cur)
            .iter()
            .copied()
            .filter(|c| tree.node(*c).count > 0)
            .collect();
        let counts: Vec<usize> = live.iter().map(|c| tree.node(*c).count).collect();
        let probs = crp_next(&counts, hyper.alpha)?;
        let k = sample_categorical(&probs, rng);
        cur = if k < live.len() {
            live[k]
        } else {
            let w = diffuse_weights(&tree.node(cur).weights, hyper.gamma, rng)?;
            let eta = sample_margin(tree.dim(), hyper.eta_prior_scale, rng);
            tree.add_child(cur, w, eta)?
        };
        path.push(cur);
    }
    Ok(path)
}

/// Index drawn from probabilities that sum to (roughly) one.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Full latent state of a synthetic dataset.
#[derive(Debug, Clone)]
pub struct Generated {
    pub data: Dataset,
    pub tree: Tree,
    pub sticks: Vec<f64>,
    pub kernels: Vec<DVector<f64>>,
    pub assignments: Vec<PathAssignment>,
}

/// Run the generative process for `n` data. Labels are the leaf ids.
pub fn generate_dataset<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    n: usize,
    rng: &mut R,
) -> Result<Generated> {
    hyper.validate()?;
    if n == 0 {
        return Err(Error::Param("n must be at least 1".into()));
    }
    let k = hyper.trunc;
    let d = hyper.dim();
    let sticks = sample_root_sticks(hyper.gamma0, k, rng)?;
    let mut tree = Tree::new(hyper.depth, k, d, stick_break(&sticks, k)?)?;
    let base = GaussianKernel::new(&hyper.prior_cov, "prior_cov")?;
    let kern = GaussianKernel::new(&hyper.kernel_cov, "kernel_cov")?;
    let kernels: Vec<DVector<f64>> = (0..k)
        .map(|_| base.sample(&hyper.prior_mean, rng))
        .collect();
    let ctx = hyper.margin_context();
    let mut paths = Vec::with_capacity(n);
    let mut comps = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let path = ncrp_extend(&mut tree, hyper, rng)?;
        tree.add_path(&path);
        let leaf = *path.last().expect("non-empty");
        let c = sample_categorical(&tree.node(leaf).weights[..k], rng);
        points.push(kern.sample(&kernels[c], rng));
        paths.push(path);
        comps.push(c);
    }
    let mut assignments = Vec::with_capacity(n);
    for ((path, c), x) in paths.into_iter().zip(comps).zip(&points) {
        let (violation, zeta) = regularizer::worst_violation(x, &path, &ctx, &tree);
        let aug = randkit::sample_lambda(ctx.cost, zeta, randkit::LAMBDA_CLAMP, rng)?;
        assignments.push(PathAssignment {
            path,
            violation,
            aug,
            component: c,
        });
    }
    let labels = assignments.iter().map(|a| a.leaf().to_string()).collect();
    let data = Dataset::new(points)?.with_labels(labels)?;
    Ok(Generated {
        data,
        tree,
        sticks,
        kernels,
        assignments,
    })
}
