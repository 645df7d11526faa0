//! Max-margin machinery: violations ζ, the worst violation s_n, the hinge
//! penalty and the augmented pseudo-likelihood used by the sampler.
//!
//! Margin vectors live on the tree nodes.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gauss::{log_sum_exp, GaussianKernel};
use crate::model::{Dataset, NodeId, PathAssignment, Tree, Violation};
use crate::randkit::ln_floor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginContext {
    /// ε0
    pub eps0: f64,
    /// C
    pub cost: f64,
}

/// ε0·1(distinct) − (η_v − η_z)ᵀx
pub fn zeta_raw(
    x: &DVector<f64>,
    eta_v: &DVector<f64>,
    eta_z: &DVector<f64>,
    eps0: f64,
    distinct: bool,
) -> f64 {
    let margin = if distinct { eps0 } else { 0.0 };
    margin - (eta_v.dot(x) - eta_z.dot(x))
}

/// Violation of datum `x` on `path` at `level` against node `sib`, which must be
/// the path node itself or one of its siblings.
pub fn zeta(
    x: &DVector<f64>,
    path: &[NodeId],
    level: usize,
    sib: NodeId,
    ctx: &MarginContext,
    tree: &Tree,
) -> Result<f64> {
    if level == 0 || level >= path.len() {
        return Err(Error::State(format!("level {level} outside the path")));
    }
    let v = path[level];
    let vn = tree
        .get(v)
        .ok_or_else(|| Error::State(format!("node {v} has no margin")))?;
    let zn = tree
        .get(sib)
        .ok_or_else(|| Error::State(format!("node {sib} has no margin")))?;
    if sib != v && (zn.parent != vn.parent || zn.parent.is_none()) {
        return Err(Error::State(format!("node {sib} is not a sibling of {v}")));
    }
    Ok(zeta_raw(x, &vn.margin, &zn.margin, ctx.eps0, sib != v))
}

/// The maximising (level, sibling) over all levels of the path, ties going to
/// the lowest level and then to creation order. A path without any sibling
/// returns the sentinel (1, v_1) with ζ = 0.
pub fn worst_violation(
    x: &DVector<f64>,
    path: &[NodeId],
    ctx: &MarginContext,
    tree: &Tree,
) -> (Violation, f64) {
    let mut best: Option<(Violation, f64)> = None;
    for (level, &v) in path.iter().enumerate().skip(1) {
        let vn = tree.node(v);
        let parent = match vn.parent {
            Some(p) => p,
            None => continue,
        };
        let score_v = vn.margin.dot(x);
        for &z in &tree.node(parent).children {
            if z == v {
                continue;
            }
            let zeta = ctx.eps0 - (score_v - tree.node(z).margin.dot(x));
            if best.map_or(true, |(_, b)| zeta > b) {
                best = Some((Violation { level, node: z }, zeta));
            }
        }
    }
    best.unwrap_or((
        Violation {
            level: 1,
            node: path[1],
        },
        0.0,
    ))
}

/// 2C Σ_n max(0, ζ_{n s_n}).
pub fn hinge_penalty(paths: &[&[NodeId]], ctx: &MarginContext, tree: &Tree, data: &Dataset) -> f64 {
    paths
        .iter()
        .enumerate()
        .map(|(n, p)| worst_violation(data.point(n), p, ctx, tree).1.max(0.0))
        .sum::<f64>()
        * 2.0
        * ctx.cost
}

/// Convenience wrapper over assignments.
pub fn hinge_penalty_assignments(
    assignments: &[PathAssignment],
    ctx: &MarginContext,
    tree: &Tree,
    data: &Dataset,
) -> f64 {
    let paths: Vec<&[NodeId]> = assignments.iter().map(|a| a.path.as_slice()).collect();
    hinge_penalty(&paths, ctx, tree, data)
}

/// log Σ_k β_k N(x; θ_k, Σ) over the first K weights.
pub fn log_mixture(
    x: &DVector<f64>,
    weights: &[f64],
    kernels: &[DVector<f64>],
    sigma: &GaussianKernel,
) -> f64 {
    let terms: Vec<f64> = kernels
        .iter()
        .zip(weights)
        .map(|(th, b)| ln_floor(*b) + sigma.log_density(x, th))
        .collect();
    log_sum_exp(&terms)
}

/// −½ log λ − (Cζ + λ)²/(2λ); the (2π)^{-1/2} factor is dropped.
pub fn log_augmentation(lambda: f64, zeta: f64, cost: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!(
            "augmentation needs lambda > 0 (got {lambda})"
        )));
    }
    Ok(-0.5 * lambda.ln() - (cost * zeta + lambda).powi(2) / (2.0 * lambda))
}

/// log g(x, λ | v, s, β, Θ, η) = mixture term + augmentation term.
#[allow(clippy::too_many_arguments)]
pub fn log_pseudo_likelihood(
    x: &DVector<f64>,
    lambda: f64,
    path: &[NodeId],
    s: Violation,
    tree: &Tree,
    ctx: &MarginContext,
    kernels: &[DVector<f64>],
    sigma: &GaussianKernel,
) -> Result<f64> {
    let aug_zeta = zeta(x, path, s.level, s.node, ctx, tree)?;
    let leaf = *path.last().expect("non-empty path");
    let mix = log_mixture(x, &tree.node(leaf).weights, kernels, sigma);
    Ok(mix + log_augmentation(lambda, aug_zeta, ctx.cost)?)
}
