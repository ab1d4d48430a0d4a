use alif_core::alif::{
    leaf_color, supervised_depth_linear, supervised_depth_log, Checkpoint, QueryStrategy, Session, SessionConfig,
    UpdateStrategy,
};
use alif_core::dataio::{read_csv, Dataset, LabelColumn};
use alif_core::iforest::{height_limit, Forest, ForestConfig, Node, Tree};
use alif_core::metrics::{average_precision, roc_auc, ScoredLabels};
use alif_core::Label;
use ndarray::Array2;
use proptest::prelude::*;
use std::sync::Arc;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Array2<f64>> {
    (2..=max_rows, 1..=max_cols).prop_flat_map(|(n, m)| {
        prop::collection::vec(-100.0..100.0f64, n * m)
            .prop_map(move |v| Array2::from_shape_vec((n, m), v).unwrap())
    })
}

fn fit(data: &Array2<f64>, n_trees: usize, seed: u64) -> Forest {
    Forest::fit(
        data.view(),
        &ForestConfig {
            n_trees,
            psi: None,
            seed,
        },
    )
    .unwrap()
}

/// Walks the node table directly, independent of `Tree::route`.
fn walk(tree: &Tree, x: &[f64]) -> (usize, u32, usize) {
    let mut i = 0;
    loop {
        match tree.nodes()[i] {
            Node::Internal {
                split_feature,
                split_value,
                left,
                right,
                ..
            } => i = if x[split_feature] < split_value { left } else { right },
            Node::Leaf { depth, size, leaf_id } => return (leaf_id, depth, size),
        }
    }
}

fn labels_from(bits: &[bool]) -> Vec<Label> {
    bits.iter()
        .map(|&b| if b { Label::Anomaly } else { Label::Normal })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scores_stay_in_unit_interval(data in matrix(60, 4), seed in any::<u64>(), probe in prop::collection::vec(-1e6..1e6f64, 4)) {
        let forest = fit(&data, 20, seed);
        let x = &probe[..data.ncols()];
        let s = forest.anomaly_score(x);
        prop_assert!(s > 0.0 && s <= 1.0, "score {}", s);
        for row in data.outer_iter() {
            let s = forest.anomaly_score(row.as_slice().unwrap());
            prop_assert!(s > 0.0 && s <= 1.0);
        }
    }

    #[test]
    fn routing_matches_node_walk_on_a_grid(data in matrix(40, 2), seed in any::<u64>()) {
        let forest = fit(&data, 5, seed);
        let (lo, hi) = (-120.0, 120.0);
        for tree in forest.trees() {
            let sizes: usize = tree.leaves().map(|l| l.size).sum();
            prop_assert_eq!(sizes, forest.psi());
            for gx in 0..=24 {
                for gy in 0..=24 {
                    let x = [lo + (hi - lo) * gx as f64 / 24.0, lo + (hi - lo) * gy as f64 / 24.0];
                    let x = &x[..data.ncols()];
                    let leaf = tree.route(x);
                    prop_assert_eq!((leaf.leaf_id, leaf.depth, leaf.size), walk(tree, x));
                    prop_assert_eq!(tree.route(x), leaf);
                }
            }
        }
    }

    #[test]
    fn leaves_count_the_training_points(data in matrix(8, 3), seed in any::<u64>()) {
        // With psi = n every row is in every subsample.
        let n = data.nrows();
        let forest = fit(&data, 10, seed);
        prop_assert_eq!(forest.psi(), n);
        let limit = height_limit(n);
        for tree in forest.trees() {
            let mut counts = vec![0usize; tree.n_leaves()];
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); tree.n_leaves()];
            for (i, row) in data.outer_iter().enumerate() {
                let (id, _, _) = walk(tree, row.as_slice().unwrap());
                counts[id] += 1;
                members[id].push(i);
            }
            for leaf in tree.leaves() {
                prop_assert_eq!(counts[leaf.leaf_id], leaf.size);
                prop_assert!(leaf.depth <= limit);
                if leaf.size > 1 && leaf.depth < limit {
                    let first = data.row(members[leaf.leaf_id][0]);
                    for &i in &members[leaf.leaf_id] {
                        prop_assert_eq!(data.row(i), first, "leaf above the height limit holds distinct points");
                    }
                }
            }
        }
    }

    #[test]
    fn fitting_is_reproducible(data in matrix(50, 3), seed in any::<u64>()) {
        let a = fit(&data, 8, seed);
        let b = fit(&data, 8, seed);
        prop_assert_eq!(a.to_json(), b.to_json());
        prop_assert_eq!(a.fingerprint(), b.fingerprint());
        let reloaded = Forest::from_json(&a.to_json()).unwrap();
        prop_assert_eq!(&reloaded, &a);
    }

    #[test]
    fn label_moves_own_score_in_its_direction(
        data in matrix(50, 3),
        seed in any::<u64>(),
        events in prop::collection::vec((any::<prop::sample::Index>(), any::<bool>()), 1..15),
        log in any::<bool>(),
    ) {
        let forest = Arc::new(fit(&data, 20, seed));
        let data = Arc::new(data);
        let update = if log { UpdateStrategy::Logarithmic } else { UpdateStrategy::PiecewiseLinear };
        let mut s = Session::new(forest, Arc::clone(&data), SessionConfig {
            query_strategy: QueryStrategy::MostAnomalous,
            update_strategy: update,
            budget: data.nrows(),
        }).unwrap();
        for (idx, anomalous) in events {
            let pool: Vec<usize> = s.pool().iter().copied().collect();
            if pool.is_empty() {
                break;
            }
            let i = pool[idx.index(pool.len())];
            let label = if anomalous { Label::Anomaly } else { Label::Normal };
            let out = s.apply_label(i, label).unwrap();
            match label {
                Label::Anomaly => prop_assert!(out.score >= out.previous_score),
                Label::Normal => prop_assert!(out.score <= out.previous_score),
            }
            prop_assert_eq!(out.touched.len(), s.forest().n_trees());
        }
    }

    #[test]
    fn checkpoint_restores_identical_scores(
        data in matrix(40, 2),
        seed in any::<u64>(),
        n_labels in 0usize..10,
    ) {
        let forest = Arc::new(fit(&data, 15, seed));
        let data = Arc::new(data);
        let truth: Vec<Label> = (0..data.nrows()).map(|i| if i % 4 == 0 { Label::Anomaly } else { Label::Normal }).collect();
        let mut s = Session::new(Arc::clone(&forest), Arc::clone(&data), SessionConfig {
            query_strategy: QueryStrategy::MaxUncertainty,
            update_strategy: UpdateStrategy::PiecewiseLinear,
            budget: n_labels.min(data.nrows()),
        }).unwrap();
        while s.remaining_budget() > 0 {
            let q = s.next_query().unwrap();
            s.apply_label(q.index, truth[q.index]).unwrap();
        }
        let cp = Checkpoint::from_json(&s.checkpoint().to_json()).unwrap();
        let restored = Session::restore(forest, data, &cp).unwrap();
        let a: Vec<u64> = s.training_scores().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = restored.training_scores().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(a, b);
        prop_assert_eq!(restored.history(), s.history());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn color_lies_in_unit_interval(o in 0u32..10_000, i in 0u32..10_000) {
        prop_assume!(o + i > 0);
        let k = leaf_color(o, i).unwrap();
        prop_assert!((0.0..=1.0).contains(&k));
        prop_assert_eq!(k == 0.5, o == i);
    }

    #[test]
    fn supervised_depths_are_bounded_and_non_increasing(
        h_min in 0.0..15.0f64,
        width in 0.0..20.0f64,
        c in 0.0..40.0f64,
        mut ks in prop::collection::vec(0.0..=1.0f64, 2..20),
    ) {
        let h_max = h_min + width;
        ks.sort_by(f64::total_cmp);
        for rule in [supervised_depth_linear, supervised_depth_log] {
            let depths: Vec<f64> = ks.iter().map(|&k| rule(k, c, h_min, h_max)).collect();
            for d in &depths {
                prop_assert!(*d >= h_min && *d <= h_max);
            }
            for w in depths.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", depths);
            }
        }
    }

    #[test]
    fn metrics_ignore_monotone_transforms(
        scores in prop::collection::vec(-5.0..5.0f64, 2..40),
        bits in prop::collection::vec(any::<bool>(), 40),
    ) {
        let labels = labels_from(&bits[..scores.len()]);
        let n_anom = labels.iter().filter(|l| l.is_anomaly()).count();
        prop_assume!(n_anom > 0 && n_anom < labels.len());
        let transformed: Vec<f64> = scores.iter().map(|s| 3.0 * s.exp() + 1.0).collect();
        let a = ScoredLabels::new(&scores, &labels).unwrap();
        let b = ScoredLabels::new(&transformed, &labels).unwrap();
        prop_assert_eq!(average_precision(&a).unwrap(), average_precision(&b).unwrap());
        prop_assert_eq!(roc_auc(&a).unwrap(), roc_auc(&b).unwrap());
    }

    #[test]
    fn auc_is_antisymmetric(
        scores in prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0, 1.5]), 2..30),
        bits in prop::collection::vec(any::<bool>(), 30),
    ) {
        let labels = labels_from(&bits[..scores.len()]);
        let n_anom = labels.iter().filter(|l| l.is_anomaly()).count();
        prop_assume!(n_anom > 0 && n_anom < labels.len());
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let flipped = labels_from(&bits[..scores.len()].iter().map(|b| !b).collect::<Vec<_>>());
        let auc = roc_auc(&ScoredLabels::new(&scores, &labels).unwrap()).unwrap();
        let neg = roc_auc(&ScoredLabels::new(&negated, &labels).unwrap()).unwrap();
        let flip = roc_auc(&ScoredLabels::new(&scores, &flipped).unwrap()).unwrap();
        prop_assert!((auc + neg - 1.0).abs() < 1e-12);
        prop_assert!((auc + flip - 1.0).abs() < 1e-12);
        let ap = average_precision(&ScoredLabels::new(&scores, &labels).unwrap()).unwrap();
        prop_assert!(ap > 0.0 && ap <= 1.0);
    }

    #[test]
    fn csv_round_trip_is_exact(
        data in matrix(20, 5).prop_map(|m| m.mapv(|v| v * 1e-3 + 1.0 / 3.0)),
        bits in prop::collection::vec(any::<bool>(), 20),
    ) {
        let labels = labels_from(&bits[..data.nrows()]);
        let ds = Dataset::new("rt", data, Some(labels)).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = read_csv(&buf[..], "rt", Some(&LabelColumn::Name("label".into()))).unwrap();
        prop_assert_eq!(back.features.shape(), ds.features.shape());
        for (a, b) in back.features.iter().zip(ds.features.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(back.labels, ds.labels);
    }
}
