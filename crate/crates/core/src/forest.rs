//! Randomized isolation trees and their node-feature view.
//!
//! Trees are stored as flat node arrays in depth-first pre-order. Every node
//! carries a global index: trees are concatenated in build order, so the
//! indices of a forest form the range `0..m`.

use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linear::{SparseNodeVector, WeightVector};

/// One row of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: usize,
    pub features: Vec<f64>,
}

impl Instance {
    pub fn new(id: usize, features: Vec<f64>) -> Self {
        Self { id, features }
    }
}

/// How a detector assigns scores to tree nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WeightScheme {
    /// Isolation forest: every node scores −1, so `z · 1` is minus the path
    /// length.
    #[default]
    Isolation,
    /// Only leaves score, with −(depth + 1); internal nodes score 0.
    LeafDepth,
}

impl WeightScheme {
    pub fn node_score(self, is_leaf: bool, depth: u32) -> f64 {
        match self {
            WeightScheme::Isolation => -1.0,
            WeightScheme::LeafDepth if is_leaf => -(f64::from(depth) + 1.0),
            WeightScheme::LeafDepth => 0.0,
        }
    }

    /// Stable one-byte tag used by the binary forest format.
    pub fn tag(self) -> u8 {
        match self {
            WeightScheme::Isolation => 0,
            WeightScheme::LeafDepth => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(WeightScheme::Isolation),
            1 => Some(WeightScheme::LeafDepth),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightScheme::Isolation => "isolation",
            WeightScheme::LeafDepth => "leaf-depth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Leaf,
    /// Instances with `x[feature] <= threshold` go left. Children are global
    /// node indices.
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub global_index: usize,
    pub depth: u32,
    /// Subsample instances that reached this node while the tree was grown.
    pub train_count: usize,
    /// Detector-assigned score; becomes the feature value in `z`.
    pub score: f64,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf)
    }
}

/// A single isolation tree. `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    offset: usize,
    nodes: Vec<Node>,
}

impl Tree {
    /// Wraps a pre-order node array whose global indices start at `offset`.
    /// Structural checks happen when the tree is assembled into a [`Forest`].
    pub fn from_nodes(offset: usize, nodes: Vec<Node>) -> Self {
        Self { offset, nodes }
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    /// Looks a node up by its global index.
    pub fn node(&self, global_index: usize) -> &Node {
        &self.nodes[global_index - self.offset]
    }

    /// The leaf reached by `x`.
    pub fn leaf_for(&self, x: &[f64]) -> &Node {
        let mut node = self.root();
        while let NodeKind::Internal {
            feature,
            threshold,
            left,
            right,
        } = node.kind
        {
            node = self.node(if x[feature] <= threshold { left } else { right });
        }
        node
    }

    fn shift(&mut self, new_offset: usize) {
        let delta = new_offset as isize - self.offset as isize;
        let shift = |i: usize| (i as isize + delta) as usize;
        for node in &mut self.nodes {
            node.global_index = shift(node.global_index);
            if let NodeKind::Internal { left, right, .. } = &mut node.kind {
                *left = shift(*left);
                *right = shift(*right);
            }
        }
        self.offset = new_offset;
    }
}

/// Construction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub num_trees: usize,
    /// Requested subsample size `N`; capped at the dataset size.
    pub subsample_size: usize,
    pub scheme: WeightScheme,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            num_trees: 100,
            subsample_size: 256,
            scheme: WeightScheme::Isolation,
            seed: 0,
        }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::InvalidParameter("num_trees must be at least 1"));
        }
        if self.subsample_size == 0 {
            return Err(Error::InvalidParameter("subsample_size must be at least 1"));
        }
        Ok(())
    }
}

/// An immutable ensemble of isolation trees.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    num_nodes: usize,
    num_features: usize,
    subsample_size: usize,
    scheme: WeightScheme,
    seed: u64,
}

/// Checks that the dataset is non-empty, rectangular and finite; returns `n`.
fn validate_data(data: &[Instance]) -> Result<usize> {
    let first = data.first().ok_or(Error::EmptyDataset)?;
    let n = first.features.len();
    if n == 0 {
        return Err(Error::InvalidParameter("instances need at least one feature"));
    }
    for (row, inst) in data.iter().enumerate() {
        if inst.features.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: inst.features.len(),
            });
        }
        if let Some(feature) = inst.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                instance: row,
                feature,
            });
        }
    }
    Ok(n)
}

/// Builds a forest of `params.num_trees` trees, each grown on its own
/// subsample of `min(N, |D|)` instances.
pub fn build_forest(data: &[Instance], params: &ForestParams) -> Result<Forest> {
    let trees = (0..params.num_trees)
        .map(|i| build_tree(data, params, i))
        .collect::<Result<Vec<_>>>()?;
    Forest::assemble(trees, data[0].features.len(), params)
}

/// Builds tree number `tree_index` of the forest described by `params`.
///
/// Each tree draws from its own ChaCha stream keyed by `(seed, tree_index)`,
/// so trees can be grown in any order or in parallel and
/// [`Forest::assemble`] produces the same forest as [`build_forest`]. The
/// returned tree has local indices (offset 0).
pub fn build_tree(data: &[Instance], params: &ForestParams, tree_index: usize) -> Result<Tree> {
    params.validate()?;
    let n = validate_data(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(tree_index as u64);

    let sample_len = params.subsample_size.min(data.len());
    let mut rows = index::sample(&mut rng, data.len(), sample_len).into_vec();
    rows.sort_unstable();

    let mut builder = TreeBuilder {
        data,
        n,
        rng,
        scheme: params.scheme,
        nodes: Vec::with_capacity(2 * sample_len),
        ranges: Vec::with_capacity(n),
    };
    builder.grow(&mut rows, 0);
    Ok(Tree::from_nodes(0, builder.nodes))
}

struct TreeBuilder<'a> {
    data: &'a [Instance],
    n: usize,
    rng: ChaCha8Rng,
    scheme: WeightScheme,
    nodes: Vec<Node>,
    ranges: Vec<(usize, f64, f64)>,
}

impl TreeBuilder<'_> {
    /// Grows the subtree over `rows` and returns its local root index.
    fn grow(&mut self, rows: &mut [usize], depth: u32) -> usize {
        let here = self.nodes.len();
        self.nodes.push(Node {
            global_index: here,
            depth,
            train_count: rows.len(),
            score: self.scheme.node_score(true, depth),
            kind: NodeKind::Leaf,
        });
        if rows.len() <= 1 {
            return here;
        }

        // Features that still vary across the node's instances. Sampling
        // uniformly among them is rejection sampling run to completion.
        self.ranges.clear();
        for f in 0..self.n {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                let v = self.data[r].features[f];
                (lo.min(v), hi.max(v))
            });
            if lo < hi {
                self.ranges.push((f, lo, hi));
            }
        }
        if self.ranges.is_empty() {
            return here;
        }
        let (feature, lo, hi) = self.ranges[self.rng.gen_range(0..self.ranges.len())];
        let mut threshold = if (hi - lo).is_finite() {
            self.rng.gen_range(lo..hi)
        } else {
            // Span overflows f64; interpolate instead of scaling.
            let u: f64 = self.rng.gen();
            lo * (1.0 - u) + hi * u
        };
        if !(threshold < hi) {
            threshold = lo;
        }

        let split = partition(rows, |r| self.data[r].features[feature] <= threshold);
        let (left_rows, right_rows) = rows.split_at_mut(split);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        let node = &mut self.nodes[here];
        node.score = self.scheme.node_score(false, depth);
        node.kind = NodeKind::Internal {
            feature,
            threshold,
            left,
            right,
        };
        here
    }
}

/// Stable-enough in-place partition; returns the count of rows satisfying
/// `goes_left`, which end up first.
fn partition(rows: &mut [usize], goes_left: impl Fn(usize) -> bool) -> usize {
    let mut split = 0;
    for i in 0..rows.len() {
        if goes_left(rows[i]) {
            rows.swap(split, i);
            split += 1;
        }
    }
    split
}

impl Forest {
    /// Concatenates trees (in order) into a forest, renumbering global
    /// indices, and validates the result.
    pub fn assemble(mut trees: Vec<Tree>, num_features: usize, params: &ForestParams) -> Result<Self> {
        params.validate()?;
        let mut offset = 0;
        for tree in &mut trees {
            tree.shift(offset);
            offset += tree.len();
        }
        Self::from_trees(trees, num_features, params.subsample_size, params.scheme, params.seed)
    }

    /// Validates already-indexed trees: global indices form a bijection onto
    /// `0..m` in pre-order, children sit one level deeper, train counts add
    /// up, and node scores follow the scheme.
    pub fn from_trees(
        trees: Vec<Tree>,
        num_features: usize,
        subsample_size: usize,
        scheme: WeightScheme,
        seed: u64,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidParameter("forest needs at least one tree"));
        }
        if num_features == 0 {
            return Err(Error::InvalidParameter("instances need at least one feature"));
        }
        let mut expected = 0;
        for tree in &trees {
            if tree.is_empty() || tree.offset != expected {
                return Err(Error::InvalidParameter("tree offsets must be contiguous"));
            }
            if tree.root().depth != 0 {
                return Err(Error::InvalidParameter("root depth must be 0"));
            }
            for (local, node) in tree.nodes.iter().enumerate() {
                if node.global_index != expected + local {
                    return Err(Error::InvalidParameter("global indices must follow pre-order"));
                }
                if node.score.to_bits() != scheme.node_score(node.is_leaf(), node.depth).to_bits() {
                    return Err(Error::InvalidParameter("node score does not match scheme"));
                }
                if let NodeKind::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } = node.kind
                {
                    let end = expected + tree.len();
                    if feature >= num_features || !threshold.is_finite() {
                        return Err(Error::InvalidParameter("invalid split"));
                    }
                    if left != node.global_index + 1 || right <= left || right >= end {
                        return Err(Error::InvalidParameter("children must follow pre-order"));
                    }
                    let (l, r) = (tree.node(left), tree.node(right));
                    if l.depth != node.depth + 1 || r.depth != node.depth + 1 {
                        return Err(Error::InvalidParameter("child depth must be parent depth + 1"));
                    }
                    if l.train_count + r.train_count != node.train_count {
                        return Err(Error::InvalidParameter("train counts must add up"));
                    }
                }
            }
            if !subtree_is_exact(tree, 0) {
                return Err(Error::InvalidParameter("tree is not a single pre-order subtree"));
            }
            expected += tree.len();
        }
        Ok(Self {
            trees,
            num_nodes: expected,
            num_features,
            subsample_size,
            scheme,
            seed,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Total node count `m`.
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Dimensionality `n` of the instances the forest routes.
    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Maps `x` to its sparse node vector: one entry per traversed node with
    /// a nonzero score, in increasing global-index order.
    pub fn traverse(&self, x: &[f64]) -> Result<SparseNodeVector> {
        if x.len() != self.num_features {
            return Err(Error::DimensionMismatch {
                expected: self.num_features,
                found: x.len(),
            });
        }
        if let Some(feature) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                instance: 0,
                feature,
            });
        }
        let mut entries = Vec::with_capacity(self.trees.len() * 16);
        for tree in &self.trees {
            let mut node = tree.root();
            loop {
                if node.score != 0.0 {
                    entries.push((node.global_index, node.score));
                }
                match node.kind {
                    NodeKind::Leaf => break,
                    NodeKind::Internal {
                        feature,
                        threshold,
                        left,
                        right,
                    } => node = tree.node(if x[feature] <= threshold { left } else { right }),
                }
            }
        }
        Ok(SparseNodeVector::from_sorted_unchecked(entries, self.num_nodes))
    }

    /// Traverses every instance; the result is indexed like `data`.
    pub fn traverse_all(&self, data: &[Instance]) -> Result<Vec<SparseNodeVector>> {
        data.iter()
            .enumerate()
            .map(|(row, inst)| {
                self.traverse(&inst.features).map_err(|e| match e {
                    Error::NonFinite { feature, .. } => Error::NonFinite {
                        instance: row,
                        feature,
                    },
                    other => other,
                })
            })
            .collect()
    }
}

/// True when the pre-order subtree rooted at `local` spans exactly the
/// remaining nodes of the tree.
fn subtree_is_exact(tree: &Tree, local: usize) -> bool {
    fn end_of(tree: &Tree, local: usize, budget: &mut usize) -> Option<usize> {
        *budget = budget.checked_sub(1)?;
        match tree.nodes.get(local)?.kind {
            NodeKind::Leaf => Some(local + 1),
            NodeKind::Internal { left, right, .. } => {
                let after_left = end_of(tree, left - tree.offset, budget)?;
                if after_left != right - tree.offset {
                    return None;
                }
                end_of(tree, after_left, budget)
            }
        }
    }
    let mut budget = tree.len();
    end_of(tree, local, &mut budget) == Some(tree.len())
}

/// Instance ids in descending score order under uniform weights, ties broken
/// by ascending id. Under the isolation scheme this is the plain
/// isolation-forest ranking.
pub fn baseline_rank(forest: &Forest, data: &[Instance]) -> Result<Vec<usize>> {
    let w = WeightVector::uniform(forest.num_nodes());
    let mut scored = data
        .iter()
        .zip(forest.traverse_all(data)?)
        .map(|(inst, z)| (z.dot_dense(w.as_slice()), inst.id))
        .collect::<Vec<_>>();
    scored.sort_by(|a, b| descending_then_id(*a, *b));
    Ok(scored.into_iter().map(|(_, id)| id).collect())
}

/// Descending score, then ascending id.
pub(crate) fn descending_then_id(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn line(values: &[f64]) -> Vec<Instance> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| Instance::new(i, vec![v]))
            .collect()
    }

    fn params(num_trees: usize, seed: u64) -> ForestParams {
        ForestParams {
            num_trees,
            subsample_size: 256,
            scheme: WeightScheme::Isolation,
            seed,
        }
    }

    #[test]
    fn single_instance_gives_single_leaf() {
        let forest = build_forest(&line(&[3.5]), &params(1, 7)).unwrap();
        assert_eq!(forest.num_nodes(), 1);
        let root = forest.trees()[0].root();
        assert!(root.is_leaf());
        assert_eq!(root.depth, 0);
        let z = forest.traverse(&[3.5]).unwrap();
        assert_eq!(z.entries(), &[(0, -1.0)]);
    }

    #[test]
    fn extreme_feature_span_still_splits() {
        let data = line(&[-f64::MAX, 0.0, f64::MAX]);
        let forest = build_forest(&data, &params(4, 1)).unwrap();
        for inst in &data {
            forest.traverse(&inst.features).unwrap();
        }
        assert!(forest.trees().iter().all(|t| t.len() == 5));
    }

    #[test]
    fn four_points_are_isolated_into_a_partition() {
        let data = line(&[0.0, 1.0, 2.0, 3.0]);
        let forest = build_forest(&data, &params(1, 11)).unwrap();
        let tree = &forest.trees()[0];
        let leaves: Vec<_> = tree.nodes().iter().filter(|n| n.is_leaf()).collect();
        assert_eq!(leaves.len(), 4);
        assert_eq!(tree.len(), 7);
        // Brute-force region membership: each instance satisfies every split
        // constraint on the path to exactly one leaf.
        for inst in &data {
            let hits = leaves
                .iter()
                .filter(|leaf| path_constraints(tree, leaf.global_index).iter().all(|&(f, t, left)| {
                    (inst.features[f] <= t) == left
                }))
                .count();
            assert_eq!(hits, 1);
            assert_eq!(tree.leaf_for(&inst.features).train_count, 1);
        }
        for node in tree.nodes() {
            if let NodeKind::Internal { threshold, .. } = node.kind {
                assert!((0.0..=3.0).contains(&threshold));
            }
        }
    }

    fn path_constraints(tree: &Tree, target: usize) -> Vec<(usize, f64, bool)> {
        fn walk(tree: &Tree, at: usize, target: usize, acc: &mut Vec<(usize, f64, bool)>) -> bool {
            if at == target {
                return true;
            }
            if let NodeKind::Internal { feature, threshold, left, right } = tree.node(at).kind {
                acc.push((feature, threshold, true));
                if walk(tree, left, target, acc) {
                    return true;
                }
                acc.pop();
                acc.push((feature, threshold, false));
                if walk(tree, right, target, acc) {
                    return true;
                }
                acc.pop();
            }
            false
        }
        let mut acc = Vec::new();
        assert!(walk(tree, tree.offset(), target, &mut acc));
        acc
    }

    #[test]
    fn duplicates_stop_in_multi_instance_leaf() {
        let data = line(&[1.0, 1.0, 1.0]);
        let forest = build_forest(&data, &params(2, 3)).unwrap();
        for tree in forest.trees() {
            assert_eq!(tree.len(), 1);
            assert_eq!(tree.root().train_count, 3);
        }
    }

    #[test]
    fn subsample_is_capped_at_dataset_size() {
        let data = line(&[0.0, 5.0, 9.0]);
        let forest = build_forest(&data, &params(4, 1)).unwrap();
        assert!(forest.trees().iter().all(|t| t.root().train_count == 3));
    }

    #[test]
    fn leaf_depth_scheme_scores_only_leaves() {
        let data = line(&[0.0, 1.0, 2.0, 3.0, 10.0, 11.0]);
        let p = ForestParams {
            scheme: WeightScheme::LeafDepth,
            ..params(3, 5)
        };
        let forest = build_forest(&data, &p).unwrap();
        for inst in &data {
            let z = forest.traverse(&inst.features).unwrap();
            assert_eq!(z.nnz(), 3);
        }
        for tree in forest.trees() {
            for node in tree.nodes() {
                let want = if node.is_leaf() { -(node.depth as f64 + 1.0) } else { 0.0 };
                assert_eq!(node.score, want);
            }
        }
    }

    #[test]
    fn errors_on_bad_input() {
        assert_eq!(build_forest(&[], &params(1, 0)), Err(Error::EmptyDataset));
        let nan = vec![Instance::new(0, vec![1.0]), Instance::new(1, vec![f64::NAN])];
        assert_eq!(
            build_forest(&nan, &params(1, 0)),
            Err(Error::NonFinite { instance: 1, feature: 0 })
        );
        let ragged = vec![Instance::new(0, vec![1.0]), Instance::new(1, vec![1.0, 2.0])];
        assert!(matches!(
            build_forest(&ragged, &params(1, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
        let forest = build_forest(&line(&[0.0, 1.0]), &params(1, 0)).unwrap();
        assert!(matches!(forest.traverse(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn baseline_rank_ties_break_by_id() {
        let data = vec![Instance::new(0, vec![2.0]), Instance::new(1, vec![2.0])];
        let forest = build_forest(&data, &params(5, 0)).unwrap();
        assert_eq!(baseline_rank(&forest, &data).unwrap(), vec![0, 1]);
        let one = line(&[4.0]);
        let forest = build_forest(&one, &params(5, 0)).unwrap();
        assert_eq!(baseline_rank(&forest, &one).unwrap(), vec![0]);
    }

    #[test]
    fn tampered_forest_is_rejected() {
        let data = line(&[0.0, 1.0, 2.0, 3.0]);
        let forest = build_forest(&data, &params(2, 9)).unwrap();
        let mut trees = forest.trees().to_vec();
        trees[1].nodes[0].train_count += 1;
        assert!(Forest::from_trees(trees, 1, 256, WeightScheme::Isolation, 9).is_err());
    }
}
