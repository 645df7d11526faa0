//! Hierarchy quality: average inner distance (AID), average sibling centroid
//! distance (AOD) and per-level F-measure against reference classes.
//!
//! Node membership is the set of data whose path passes through the node.
//! Nodes with fewer than two members contribute zero to AID but still count
//! in its denominator. AOD averages over ordered sibling pairs and skips
//! nodes without members.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, NodeId, Tree, ROOT};

/// Evaluation summary of one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aid: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aod: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_by_level: Option<BTreeMap<usize, f64>>,
    pub node_count: usize,
}

/// Member datum indices of every node.
pub fn members<P: AsRef<[NodeId]>>(
    tree: &Tree,
    paths: &[P],
    n_data: usize,
) -> Result<BTreeMap<NodeId, Vec<usize>>> {
    if paths.len() != n_data {
        return Err(Error::Data(format!(
            "{} paths for {n_data} data",
            paths.len()
        )));
    }
    let mut out: BTreeMap<NodeId, Vec<usize>> =
        tree.ids().into_iter().map(|z| (z, Vec::new())).collect();
    for (n, p) in paths.iter().enumerate() {
        for z in p.as_ref() {
            out.get_mut(z)
                .ok_or_else(|| Error::Data(format!("datum {n} passes unknown node {z}")))?
                .push(n);
        }
    }
    Ok(out)
}

fn centroid(data: &Dataset, idx: &[usize]) -> DVector<f64> {
    let mut c = DVector::zeros(data.dim());
    for &i in idx {
        c += data.point(i);
    }
    c / idx.len() as f64
}

/// (1/M) Σ_{z ≠ root} 2/(N_z(N_z − 1)) Σ_{pairs in z} ‖x − x'‖².
pub fn aid<P: AsRef<[NodeId]>>(tree: &Tree, paths: &[P], data: &Dataset) -> Result<f64> {
    let mem = members(tree, paths, data.len())?;
    let m = tree.len() - 1;
    if m == 0 {
        return Err(Error::Data("the tree has no nodes below the root".into()));
    }
    let mut total = 0.0;
    for (z, idx) in &mem {
        if *z == ROOT || idx.len() < 2 {
            continue;
        }
        // Σ_{i<j} ‖x_i − x_j‖² = N Σ_i ‖x_i − x̄‖²
        let c = centroid(data, idx);
        let ss: f64 = idx
            .iter()
            .map(|i| (data.point(*i) - &c).norm_squared())
            .sum();
        let nz = idx.len() as f64;
        total += 2.0 * ss / (nz - 1.0);
    }
    Ok(total / m as f64)
}

/// Mean of ‖x̄_z − x̄_{z'}‖² over ordered pairs of populated siblings; None
/// when there is no such pair.
pub fn aod<P: AsRef<[NodeId]>>(tree: &Tree, paths: &[P], data: &Dataset) -> Result<Option<f64>> {
    let mem = members(tree, paths, data.len())?;
    let cents: BTreeMap<NodeId, DVector<f64>> = mem
        .iter()
        .filter(|(z, idx)| **z != ROOT && !idx.is_empty())
        .map(|(z, idx)| (*z, centroid(data, idx)))
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (z, c) in &cents {
        for s in tree.siblings(*z) {
            if let Some(cs) = cents.get(&s) {
                total += (c - cs).norm_squared();
                pairs += 1;
            }
        }
    }
    Ok(if pairs == 0 {
        None
    } else {
        Some(total / pairs as f64)
    })
}

/// Weighted best-match F1 per level: Σ_classes |class|/N · max_cluster F1.
pub fn f_measure_by_level<P: AsRef<[NodeId]>>(
    tree: &Tree,
    paths: &[P],
    labels: &[Option<String>],
) -> Result<BTreeMap<usize, f64>> {
    if labels.len() != paths.len() {
        return Err(Error::Data(format!(
            "{} labels for {} data",
            labels.len(),
            paths.len()
        )));
    }
    let missing: Vec<String> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_none())
        .map(|(i, _)| i.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "missing labels for data {}",
            missing.join(", ")
        )));
    }
    let n = paths.len();
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        classes
            .entry(l.as_deref().expect("checked"))
            .or_default()
            .push(i);
    }
    let mut out = BTreeMap::new();
    for level in 1..=tree.depth() {
        let mut clusters: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for (i, p) in paths.iter().enumerate() {
            let p = p.as_ref();
            let z = *p.get(level).ok_or_else(|| {
                Error::Data(format!("path of datum {i} is shorter than the tree"))
            })?;
            clusters.entry(z).or_default().push(i);
        }
        let mut score = 0.0;
        for members in classes.values() {
            let mut best = 0.0f64;
            for cl in clusters.values() {
                let inter = cl
                    .iter()
                    .filter(|i| members.binary_search(i).is_ok())
                    .count() as f64;
                if inter == 0.0 {
                    continue;
                }
                let prec = inter / cl.len() as f64;
                let rec = inter / members.len() as f64;
                best = best.max(2.0 * prec * rec / (prec + rec));
            }
            score += members.len() as f64 / n as f64 * best;
        }
        out.insert(level, score);
    }
    Ok(out)
}

/// AID, AOD, optional F-measure and node count.
pub fn evaluate<P: AsRef<[NodeId]>>(
    tree: &Tree,
    paths: &[P],
    data: &Dataset,
    labels: Option<&[Option<String>]>,
) -> Result<EvalReport> {
    Ok(EvalReport {
        aid: aid(tree, paths, data)?,
        aod: aod(tree, paths, data)?,
        f_by_level: labels
            .map(|l| f_measure_by_level(tree, paths, l))
            .transpose()?,
        node_count: tree.len(),
    })
}

/// True when every node has at most one child.
pub fn is_singular_path(tree: &Tree) -> bool {
    tree.nodes().all(|n| n.children.len() <= 1)
}

/// Aggregate over a batch of reports, dropping trees without an AOD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub used: usize,
    pub excluded: usize,
    pub mean_aid: Option<f64>,
    pub mean_aod: Option<f64>,
    pub median_aid: Option<f64>,
    pub median_aod: Option<f64>,
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    })
}

pub fn summarise(reports: &[EvalReport]) -> BatchSummary {
    let kept: Vec<&EvalReport> = reports.iter().filter(|r| r.aod.is_some()).collect();
    let aid: Vec<f64> = kept.iter().map(|r| r.aid).collect();
    let aod: Vec<f64> = kept.iter().filter_map(|r| r.aod).collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    BatchSummary {
        used: kept.len(),
        excluded: reports.len() - kept.len(),
        mean_aid: mean(&aid),
        mean_aod: mean(&aod),
        median_aid: median(&aid),
        median_aod: median(&aod),
    }
}
