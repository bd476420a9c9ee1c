use std::collections::BTreeSet;

use ifaad_core::{
    build_forest, build_tree, compute_quantile_anchor, hinge_loss, next_query, score, update_weights,
    AadConfig, FeedbackLoop, FeedbackState, Forest, ForestParams, Instance, Label, LabeledSet,
    NodeKind, SparseNodeVector, WeightScheme, WeightVector,
};
use proptest::prelude::*;

fn dataset(rows: Vec<Vec<f64>>) -> Vec<Instance> {
    rows.into_iter().enumerate().map(|(id, f)| Instance::new(id, f)).collect()
}

fn rows(max_rows: usize, dims: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    // Coarse grid values so duplicates and constant columns occur.
    let cell = prop_oneof![(-20i32..20).prop_map(|v| v as f64 * 0.5), -1e3f64..1e3];
    prop::collection::vec(prop::collection::vec(cell, dims), 1..max_rows)
}

fn params(trees: usize, subsample: usize, seed: u64, leaf: bool) -> ForestParams {
    ForestParams {
        num_trees: trees,
        subsample_size: subsample,
        scheme: if leaf { WeightScheme::LeafDepth } else { WeightScheme::Isolation },
        seed,
    }
}

fn sparse_vector(m: usize) -> impl Strategy<Value = SparseNodeVector> {
    prop::collection::btree_map(0..m, -10.0f64..0.0, 0..m).prop_map(move |entries| {
        SparseNodeVector::new(entries.into_iter().collect(), m).unwrap()
    })
}

fn weights(m: usize) -> impl Strategy<Value = WeightVector> {
    prop::collection::vec(-1.0f64..1.0, m).prop_map(|v| WeightVector::new(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hinge_is_never_negative(
        q in -50.0f64..50.0,
        (w, z) in (1usize..12).prop_flat_map(|m| (weights(m), sparse_vector(m))),
        anomaly in any::<bool>(),
    ) {
        let label = if anomaly { Label::Anomaly } else { Label::Nominal };
        let loss = hinge_loss(q, &w, &z, label).unwrap();
        prop_assert!(loss >= 0.0);
        let s = score(&z, &w).unwrap();
        let expected = match label {
            Label::Anomaly if s < q => q - s,
            Label::Nominal if s >= q => s - q,
            _ => 0.0,
        };
        prop_assert_eq!(loss, expected);
    }

    #[test]
    fn ranking_is_invariant_to_positive_scaling(
        (zs, w) in (1usize..10).prop_flat_map(|m| (prop::collection::vec(sparse_vector(m), 1..30), weights(m))),
        exponent in -8i32..8,
    ) {
        // Powers of two scale exactly, so the order is preserved bit for bit.
        let factor = 2f64.powi(exponent);
        let scaled = WeightVector::new(w.as_slice().iter().map(|v| v * factor).collect()).unwrap();
        let none = BTreeSet::new();
        prop_assert_eq!(next_query(&zs, &w, &none).unwrap(), next_query(&zs, &scaled, &none).unwrap());
        let a = compute_quantile_anchor(&zs, &w, 0.3).unwrap();
        let b = compute_quantile_anchor(&zs, &scaled, 0.3).unwrap();
        prop_assert_eq!(a.id, b.id);
    }

    #[test]
    fn anchor_sits_at_its_rank(
        (zs, w) in (1usize..10).prop_flat_map(|m| (prop::collection::vec(sparse_vector(m), 1..60), weights(m))),
        tau in 0.001f64..0.999,
    ) {
        let anchor = compute_quantile_anchor(&zs, &w, tau).unwrap();
        let n = zs.len();
        let rank = ((tau * n as f64).ceil() as usize).max(1);
        let scores: Vec<f64> = zs.iter().map(|z| score(z, &w).unwrap()).collect();
        prop_assert_eq!(anchor.score, scores[anchor.id]);
        prop_assert_eq!(&anchor.vector, &zs[anchor.id]);
        let ahead = (0..n)
            .filter(|&j| scores[j] > anchor.score || (scores[j] == anchor.score && j < anchor.id))
            .count();
        prop_assert_eq!(ahead + 1, rank);
    }

    #[test]
    fn forests_are_deterministic_and_order_free(
        data in rows(40, 3),
        seed in any::<u64>(),
        leaf in any::<bool>(),
    ) {
        let data = dataset(data);
        let p = params(4, 16, seed, leaf);
        let a = build_forest(&data, &p).unwrap();
        prop_assert_eq!(&a, &build_forest(&data, &p).unwrap());
        // Trees built one at a time, in reverse, assemble to the same forest.
        let mut trees: Vec<_> = (0..4).rev().map(|t| build_tree(&data, &p, t).unwrap()).collect();
        trees.reverse();
        prop_assert_eq!(&a, &Forest::assemble(trees, 3, &p).unwrap());
    }

    #[test]
    fn trees_partition_their_subsample(data in rows(60, 2), seed in any::<u64>(), leaf in any::<bool>()) {
        let data = dataset(data);
        let p = params(3, 24, seed, leaf);
        let forest = build_forest(&data, &p).unwrap();
        let subsample = data.len().min(24);
        for tree in forest.trees() {
            let nodes = tree.nodes();
            prop_assert_eq!(tree.root().train_count, subsample);
            let leaf_total: usize = nodes.iter().filter(|n| n.is_leaf()).map(|n| n.train_count).sum();
            prop_assert_eq!(leaf_total, subsample);
            for node in nodes {
                prop_assert!(node.train_count >= 1);
                prop_assert_eq!(node.score, p.scheme.node_score(node.is_leaf(), node.depth));
                if let NodeKind::Internal { feature, threshold, .. } = node.kind {
                    // Thresholds lie inside the observed range of the feature.
                    let lo = data.iter().map(|i| i.features[feature]).fold(f64::INFINITY, f64::min);
                    let hi = data.iter().map(|i| i.features[feature]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(lo <= threshold && threshold < hi);
                }
            }
        }
    }

    #[test]
    fn every_point_reaches_exactly_one_leaf_per_tree(
        data in rows(40, 2),
        probes in prop::collection::vec(prop::collection::vec(-2e3f64..2e3, 2), 1..20),
        seed in any::<u64>(),
    ) {
        let data = dataset(data);
        let forest = build_forest(&data, &params(3, 16, seed, true)).unwrap();
        for x in probes.iter().chain(data.iter().map(|i| &i.features)) {
            let z = forest.traverse(x).unwrap();
            // Leaf-depth vectors hold one leaf per tree.
            prop_assert_eq!(z.nnz(), forest.trees().len());
            for (tree, &(index, value)) in forest.trees().iter().zip(z.entries()) {
                let leaf = tree.leaf_for(x);
                prop_assert_eq!(leaf.global_index, index);
                prop_assert_eq!(value, -(leaf.depth as f64 + 1.0));
            }
        }
    }

    #[test]
    fn weight_updates_stay_on_the_unit_sphere(
        (zs, labels) in (2usize..12).prop_flat_map(|m| (
            prop::collection::vec(sparse_vector(m), 5..30),
            prop::collection::vec(any::<bool>(), 1..5),
        )),
    ) {
        let m = zs[0].dim();
        let mut labeled = LabeledSet::default();
        for (id, &anomaly) in labels.iter().enumerate() {
            labeled.push(id, zs[id].clone(), if anomaly { Label::Anomaly } else { Label::Nominal });
        }
        let w = WeightVector::uniform(m);
        let anchor = compute_quantile_anchor(&zs, &w, 0.1).unwrap();
        let state = FeedbackState { weights: w, labeled, iteration: labels.len(), query_history: Vec::new() };
        let update = update_weights(&state, &anchor, &AadConfig::default()).unwrap();
        prop_assert!((update.weights.norm() - 1.0).abs() < 1e-9);
        prop_assert!(update.objective_trace.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn feedback_loop_never_repeats_a_query(data in rows(50, 2), seed in any::<u64>(), budget in 1usize..10) {
        let data = dataset(data);
        let budget = budget.min(data.len());
        let forest = build_forest(&data, &params(5, 32, seed, false)).unwrap();
        let cfg = AadConfig { budget, ..AadConfig::default() };
        let mut fl = FeedbackLoop::new(forest.traverse_all(&data).unwrap().into(), cfg).unwrap();
        let mut seen = BTreeSet::new();
        while !fl.is_exhausted() {
            let report = fl.step(&mut |id| Some(if id % 3 == 0 { Label::Anomaly } else { Label::Nominal })).unwrap();
            prop_assert!(seen.insert(report.instance));
            prop_assert!((report.weight_norm - 1.0).abs() < 1e-9);
        }
        prop_assert_eq!(fl.state().iteration, budget);
    }
}
