use std::collections::BTreeSet;

use proptest::prelude::*;

use phida::hierarchy::map_components;
use phida::knn::{build_mutual_graph, NeighborGraph};
use phida::metrics::{ami, ari};
use phida::persistence::{extract_components, largest_gap_threshold, run_persistence};
use phida::stats::{hazen_iqr, hazen_quantile};
use phida::transform::TransformState;
use phida::{ModelState, Variant};

fn graph_and_supports() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<u64>)> {
    (1usize..9).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let m = pairs.len();
        (
            Just(n),
            proptest::collection::vec(any::<bool>(), m)
                .prop_map(move |keep| pairs.iter().zip(keep).filter(|(_, k)| *k).map(|(e, _)| *e).collect()),
            proptest::collection::vec(1u64..8, n),
        )
    })
}

fn refines(fine: &[usize], coarse: &[usize]) -> bool {
    (0..fine.len()).all(|a| (0..fine.len()).all(|b| fine[a] != fine[b] || coarse[a] == coarse[b]))
}

fn points(max_n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, dim), 2..max_n)
}

proptest! {
    #[test]
    fn components_refine_graph_components((n, edges, supports) in graph_and_supports()) {
        let g = NeighborGraph::from_edges(n, edges);
        let rho: Vec<f64> = supports.iter().map(|&m| (m as f64).ln()).collect();
        let tree = run_persistence(&g, &rho).unwrap();
        let cc = g.connected_components();

        prop_assert_eq!(tree.infinite_mode_count(), g.component_count());
        for m in &tree.modes {
            prop_assert!(m.persistence >= 0.0);
        }

        let eps = largest_gap_threshold(&tree.finite_levels);
        let raw = extract_components(&tree, eps);
        prop_assert!(refines(&raw.component_of, &cc));
        let covered: usize = raw.components.iter().map(Vec::len).sum();
        prop_assert_eq!(covered, n);
        let survivors = tree.modes.iter().filter(|m| m.persistence > eps).count();
        prop_assert_eq!(raw.len(), survivors);

        // Raising the threshold only coarsens; past every level it is plain connectivity.
        let mut prev = extract_components(&tree, 0.0).component_of;
        for &level in &tree.finite_levels {
            let next = extract_components(&tree, level).component_of;
            prop_assert!(refines(&prev, &next));
            prev = next;
        }
        let top = extract_components(&tree, f64::INFINITY);
        prop_assert_eq!(top.len(), g.component_count());
        prop_assert!(refines(&cc, &top.component_of) && refines(&top.component_of, &cc));
    }

    #[test]
    fn hierarchy_conserves_weight(reps in points(40, 2), raw_supports in proptest::collection::vec(1u64..30, 40)) {
        let n = reps.len();
        let supports = &raw_supports[..n];
        let t = TransformState::fit(&reps).unwrap();
        let g = build_mutual_graph(&reps, None, &t).unwrap();
        let rho: Vec<f64> = supports.iter().map(|&m| (m as f64).ln()).collect();
        let tree = run_persistence(&g, &rho).unwrap();
        let raw = extract_components(&tree, largest_gap_threshold(&tree.finite_levels));
        let z: Vec<Vec<f64>> = reps.iter().map(|y| t.apply(y).unwrap()).collect();
        let m = map_components(&raw, Some(&tree), &z, supports, &rho).unwrap();
        let h = &m.hierarchy;

        prop_assert!(h.c_min >= 1 && h.c_min <= raw.len());
        prop_assert_eq!(h.levels.len(), h.merge_heights.len() + 1);
        prop_assert!(h.selected_level < h.levels.len());
        prop_assert!(h.group_count(h.selected_level) >= h.c_min.min(h.group_count(h.levels.len() - 1)));
        let total: f64 = m.summaries.iter().map(|s| s.merge_weight).sum();
        prop_assert!(m.summaries.iter().all(|s| s.merge_weight > 0.0));
        for level in &h.levels {
            let groups: BTreeSet<usize> = level.iter().copied().collect();
            let sum: f64 = groups
                .iter()
                .map(|&g| (0..level.len()).filter(|&a| level[a] == g).map(|a| m.summaries[a].merge_weight).sum::<f64>())
                .sum();
            prop_assert!((sum - total).abs() <= 1e-9 * total);
        }
        for pair in h.levels.windows(2) {
            prop_assert!(refines(&pair[0], &pair[1]));
            prop_assert_eq!(
                pair[0].iter().collect::<BTreeSet<_>>().len(),
                pair[1].iter().collect::<BTreeSet<_>>().len() + 1
            );
        }
        prop_assert_eq!(m.node_cluster.len(), n);
        prop_assert_eq!(m.node_cluster.iter().collect::<BTreeSet<_>>().len(), m.cluster_count);
    }

    #[test]
    fn mutual_graph_ignores_translation(
        grid in proptest::collection::vec(proptest::collection::vec(-50i32..50, 3), 2..30),
        shift in proptest::collection::vec(-100i32..100, 3),
    ) {
        // Integer coordinates keep every centred value exact.
        let reps: Vec<Vec<f64>> = grid.iter().map(|y| y.iter().map(|&c| f64::from(c)).collect()).collect();
        let moved: Vec<Vec<f64>> = grid
            .iter()
            .map(|y| y.iter().zip(&shift).map(|(&a, &b)| f64::from(a + b)).collect())
            .collect();
        let g = build_mutual_graph(&reps, None, &TransformState::fit(&reps).unwrap()).unwrap();
        let h = build_mutual_graph(&moved, None, &TransformState::fit(&moved).unwrap()).unwrap();
        for p in 0..reps.len() {
            prop_assert!(!g.neighbors(p).contains(&p));
        }
        prop_assert_eq!(g.edges(), h.edges());
    }

    #[test]
    fn quantiles_are_monotone(values in proptest::collection::vec(-1e3f64..1e3, 1..60), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(hazen_quantile(&values, lo).unwrap() <= hazen_quantile(&values, hi).unwrap());
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(hazen_quantile(&values, 0.0).unwrap(), min);
        prop_assert_eq!(hazen_quantile(&values, 1.0).unwrap(), max);
    }

    #[test]
    fn iqr_is_translation_invariant_and_scale_equivariant(
        values in proptest::collection::vec(-1e3f64..1e3, 1..60),
        shift in -1e3f64..1e3,
        scale in 0.01f64..100.0,
    ) {
        let base = hazen_iqr(&values).unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
        prop_assert!((hazen_iqr(&shifted).unwrap() - base).abs() <= 1e-9 * (1.0 + base.abs() + shift.abs()));
        prop_assert!((hazen_iqr(&scaled).unwrap() - scale * base).abs() <= 1e-9 * (1.0 + scale * base.abs()));
    }

    #[test]
    fn metric_identities(u in proptest::collection::vec(0usize..4, 2..40), v_seed in proptest::collection::vec(0usize..5, 40)) {
        let v = &v_seed[..u.len()];
        prop_assert!((ari(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((ami(&u, &u).unwrap() - 1.0).abs() < 1e-9);
        prop_assert!((ari(&u, v).unwrap() - ari(v, &u).unwrap()).abs() < 1e-12);
        prop_assert!((ami(&u, v).unwrap() - ami(v, &u).unwrap()).abs() < 1e-9);
        prop_assert!(ari(&u, v).unwrap() <= 1.0 + 1e-12);
        prop_assert!(ami(&u, v).unwrap() <= 1.0 + 1e-9);
    }

    #[test]
    fn learner_state_invariants(
        xs in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 2), 3..120),
        variant_index in 0usize..5,
    ) {
        let variant = Variant::ALL[variant_index];
        let mut a = ModelState::new(2, variant.flags());
        let mut b = ModelState::new(2, variant.flags());
        for x in &xs {
            a.process_sample(x).unwrap();
            b.process_sample(x).unwrap();
            let v = a.vigilance();
            prop_assert!((0.0..=1.0).contains(&v.tau));
            prop_assert!(v.lambda >= 1);
            for node in a.nodes() {
                prop_assert!(node.support >= 1);
                prop_assert!(node.scale >= 1e-6);
                prop_assert!(node.representative.iter().all(|c| c.is_finite()));
            }
        }
        a.finalize().unwrap();
        b.finalize().unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.samples_seen(), xs.len() as u64);
        let view = a.view().unwrap();
        prop_assert!(view.assignment.cluster_count() >= 1);
        for x in &xs {
            prop_assert!(a.predict(x).unwrap() < view.assignment.cluster_count());
        }
        // A second finalize without new samples changes nothing.
        let before = a.clone();
        a.finalize().unwrap();
        prop_assert_eq!(a, before);
    }
}

#[test]
fn random_relabelling_has_near_zero_ari() {
    let truth: Vec<usize> = (0..150).map(|i| i / 50).collect();
    let mut rng = phida::rng::SeededRng::new(99);
    let mut total = 0.0;
    for _ in 0..1000 {
        let mut pred = truth.clone();
        rng.shuffle(&mut pred);
        total += ari(&truth, &pred).unwrap();
    }
    assert!((total / 1000.0).abs() < 0.05);
}
