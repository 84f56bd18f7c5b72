//! Forest sampler distribution checks against brute-force enumeration and
//! matrix-forest counts.

mod common;

use cfcm::exact::forest_count;
use cfcm::forest::{enumerate_forests, sample_forest, uniformity_test, RandomStream, SourceOrder};
use cfcm::{generators, NodeSet};

#[test]
fn isomorphism_classes_have_known_counts() {
    let counts: Vec<usize> = (2..=5).map(|n| common::connected_graphs(n).len()).collect();
    assert_eq!(counts, vec![1, 2, 6, 21]);
}

#[test]
fn enumeration_agrees_with_determinant() {
    for n in 2..=5 {
        for g in common::connected_graphs(n) {
            for roots in [NodeSet::single(0), NodeSet::new([0, n - 1], n).unwrap()] {
                let listed = enumerate_forests(&g, &roots, 1 << 20).unwrap().len() as u128;
                assert_eq!(listed, forest_count(&g, &roots).unwrap());
            }
        }
    }
}

#[test]
fn k3_single_root_is_uniform() {
    let g = generators::complete(3).unwrap();
    let t = uniformity_test(&g, &NodeSet::single(0), 100_000, 11, SourceOrder::Ascending).unwrap();
    assert_eq!(t.forests, 3);
    assert!(t.p_value > 0.001, "{t:?}");
}

#[test]
fn source_order_does_not_change_the_law() {
    let g = common::connected_graphs(5).swap_remove(10);
    let roots = NodeSet::new([1, 3], 5).unwrap();
    for order in [SourceOrder::Ascending, SourceOrder::Descending] {
        let t = uniformity_test(&g, &roots, 50_000, 3, order).unwrap();
        assert!(t.p_value > 0.001, "{order:?}: {t:?}");
    }
}

#[test]
fn n8_graph_multi_root_is_uniform() {
    let g = generators::random_connected(8, 0.35, 4).unwrap();
    let roots = NodeSet::new([2, 6], 8).unwrap();
    let t = uniformity_test(&g, &roots, 200_000, 8, SourceOrder::Ascending).unwrap();
    assert_eq!(t.forests as u128, forest_count(&g, &roots).unwrap());
    assert!(t.p_value > 0.001, "{t:?}");
}

#[test]
fn every_node_reaches_a_root_on_karate() {
    let g = common::fixture("karate");
    let roots = NodeSet::new([0, 33], g.n()).unwrap();
    for i in 0..200 {
        let f = sample_forest(&g, &roots, RandomStream::new(1, i)).unwrap();
        assert!(f.root_labels().iter().all(|&r| roots.contains(r)));
    }
}
