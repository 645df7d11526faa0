//! Tree JSON documents and Newick rendering.
//!
//! The JSON document stores the raw tree: every node with its parent link,
//! weights, margin vector and member datum indices (data whose path passes
//! through it), plus the kernel means. Floats are written in shortest
//! round-trip form, so load → save reproduces the input byte for byte.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Node, NodeId, Tree, ROOT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub level: usize,
    pub children: Vec<NodeId>,
    pub weights: Vec<f64>,
    pub margin: Vec<f64>,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDoc {
    pub depth: usize,
    pub trunc: usize,
    pub dim: usize,
    pub kernels: Vec<Vec<f64>>,
    pub nodes: Vec<NodeDoc>,
}

impl TreeDoc {
    /// Build from a tree, the per-datum paths and the kernel means.
    pub fn new<P: AsRef<[NodeId]>>(
        tree: &Tree,
        paths: &[P],
        kernels: &[DVector<f64>],
    ) -> Result<Self> {
        let mem = crate::metrics::members(tree, paths, paths.len())?;
        Ok(Self {
            depth: tree.depth(),
            trunc: tree.trunc(),
            dim: tree.dim(),
            kernels: kernels
                .iter()
                .map(|k| k.iter().copied().collect())
                .collect(),
            nodes: tree
                .nodes()
                .map(|n| NodeDoc {
                    id: n.id,
                    parent: n.parent,
                    level: n.level,
                    children: n.children.clone(),
                    weights: n.weights.clone(),
                    margin: n.margin.iter().copied().collect(),
                    members: mem[&n.id].clone(),
                })
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("tree documents always serialise");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Data(format!("tree JSON: {e}")))
    }

    /// Rebuild the tree and the path of every datum. Each datum must belong
    /// to exactly one leaf, and data indices must be 0..N without gaps.
    pub fn to_tree(&self) -> Result<(Tree, Vec<Vec<NodeId>>)> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node {
                id: n.id,
                parent: n.parent,
                children: n.children.clone(),
                level: n.level,
                weights: n.weights.clone(),
                margin: DVector::from_column_slice(&n.margin),
                count: n.members.len(),
            })
            .collect();
        let tree = Tree::from_nodes(self.depth, self.trunc, self.dim, nodes)?;
        let n_data = self
            .nodes
            .iter()
            .find(|n| n.id == ROOT)
            .map(|n| n.members.len())
            .unwrap_or(0);
        let mut leaf_of: Vec<Option<NodeId>> = vec![None; n_data];
        for n in &self.nodes {
            if !n.children.is_empty() {
                continue;
            }
            for &m in &n.members {
                let slot = leaf_of.get_mut(m).ok_or_else(|| {
                    Error::Data(format!(
                        "node {} lists datum {m}, beyond the {n_data} data at the root",
                        n.id
                    ))
                })?;
                if slot.is_some() {
                    return Err(Error::Data(format!("datum {m} belongs to two leaves")));
                }
                *slot = Some(n.id);
            }
        }
        let paths: Vec<Vec<NodeId>> = leaf_of
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                l.map(|l| tree.ancestry(l))
                    .ok_or_else(|| Error::Data(format!("datum {i} is in no leaf")))
            })
            .collect::<Result<_>>()?;
        tree.check_counts(paths.iter().map(|p| p.as_slice()))?;
        for n in &self.nodes {
            let mut expect: Vec<usize> = (0..paths.len())
                .filter(|i| paths[*i].contains(&n.id))
                .collect();
            expect.sort_unstable();
            if expect != n.members {
                return Err(Error::Data(format!(
                    "members of node {} disagree with its leaves",
                    n.id
                )));
            }
        }
        Ok((tree, paths))
    }

    pub fn kernel_vectors(&self) -> Vec<DVector<f64>> {
        self.kernels
            .iter()
            .map(|k| DVector::from_column_slice(k))
            .collect()
    }
}

/// Children lists after merging every chain of single-child nodes into its
/// lowest node. Keys are the nodes that remain visible.
pub fn merged_hierarchy(tree: &Tree) -> std::collections::BTreeMap<NodeId, Vec<NodeId>> {
    fn bottom(tree: &Tree, mut z: NodeId) -> NodeId {
        while tree.children(z).len() == 1 {
            z = tree.children(z)[0];
        }
        z
    }
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![bottom(tree, ROOT)];
    while let Some(z) = stack.pop() {
        let kids: Vec<NodeId> = tree.children(z).iter().map(|c| bottom(tree, *c)).collect();
        stack.extend(kids.iter().copied());
        out.insert(z, kids);
    }
    out
}

/// Newick string of the merged hierarchy: leaves are `z{id}_{count}`,
/// internal nodes `z{id}`.
pub fn newick(tree: &Tree) -> String {
    let h = merged_hierarchy(tree);
    fn render(
        tree: &Tree,
        h: &std::collections::BTreeMap<NodeId, Vec<NodeId>>,
        z: NodeId,
        out: &mut String,
    ) {
        let kids = &h[&z];
        if kids.is_empty() {
            out.push_str(&format!("z{}_{}", z, tree.node(z).count));
            return;
        }
        out.push('(');
        for (i, c) in kids.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            render(tree, h, *c, out);
        }
        out.push_str(&format!(")z{z}"));
    }
    let top = *h
        .keys()
        .find(|k| !h.values().any(|v| v.contains(k)))
        .expect("a top node");
    let mut s = String::new();
    render(tree, &h, top, &mut s);
    s.push(';');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_dataset, Hyperparams};
    use rand::SeedableRng;

    #[test]
    fn json_round_trip_is_byte_identical() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let h = Hyperparams {
            depth: 3,
            trunc: 4,
            ..Hyperparams::animals(2)
        };
        let g = generate_dataset(&h, 25, &mut r).unwrap();
        let paths: Vec<&[NodeId]> = g.assignments.iter().map(|a| a.path.as_slice()).collect();
        let doc = TreeDoc::new(&g.tree, &paths, &g.kernels).unwrap();
        let s = doc.to_json();
        let back = TreeDoc::from_json(&s).unwrap();
        assert_eq!(back.to_json(), s);
        let (t, p) = back.to_tree().unwrap();
        assert_eq!(t, g.tree);
        assert_eq!(
            p,
            g.assignments
                .iter()
                .map(|a| a.path.clone())
                .collect::<Vec<_>>()
        );
        assert_eq!(
            TreeDoc::new(&t, &p, &back.kernel_vectors())
                .unwrap()
                .to_json(),
            s
        );
    }

    #[test]
    fn corrupted_members_are_rejected() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let h = Hyperparams {
            depth: 2,
            trunc: 2,
            ..Hyperparams::animals(1)
        };
        let g = generate_dataset(&h, 6, &mut r).unwrap();
        let paths: Vec<&[NodeId]> = g.assignments.iter().map(|a| a.path.as_slice()).collect();
        let mut doc = TreeDoc::new(&g.tree, &paths, &g.kernels).unwrap();
        let leaf = doc
            .nodes
            .iter_mut()
            .find(|n| n.children.is_empty())
            .unwrap();
        leaf.members.push(99);
        assert!(doc.to_tree().is_err());
    }

    #[test]
    fn newick_merges_single_child_chains() {
        let w = vec![0.5, 0.5];
        let mut t = Tree::new(3, 1, 1, w.clone()).unwrap();
        let z = DVector::zeros(1);
        let a = t.add_child(ROOT, w.clone(), z.clone()).unwrap();
        let b = t.add_child(a, w.clone(), z.clone()).unwrap();
        let c1 = t.add_child(b, w.clone(), z.clone()).unwrap();
        let c2 = t.add_child(b, w.clone(), z.clone()).unwrap();
        let d = t.add_child(ROOT, w.clone(), z.clone()).unwrap();
        let e = t.add_child(d, w.clone(), z.clone()).unwrap();
        let f = t.add_child(e, w.clone(), z).unwrap();
        for p in [
            [ROOT, a, b, c1],
            [ROOT, a, b, c1],
            [ROOT, a, b, c2],
            [ROOT, d, e, f],
        ] {
            t.add_path(&p);
        }
        assert_eq!(newick(&t), format!("((z{c1}_2,z{c2}_1)z{b},z{f}_1)z0;"));
        let mut single = Tree::new(2, 1, 1, w.clone()).unwrap();
        let a = single
            .add_child(ROOT, w.clone(), DVector::zeros(1))
            .unwrap();
        let b = single.add_child(a, w, DVector::zeros(1)).unwrap();
        single.add_path(&[ROOT, a, b]);
        assert_eq!(newick(&single), format!("z{b}_1;"));
    }
}
